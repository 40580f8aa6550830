use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn foveacast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foveacast")).args(args).env_remove("FOVEACAST_THREADS").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> String {
    let out = foveacast(args);
    assert_eq!(code(&out), 0, "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn small_corpus(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("corpus");
    let mut args = vec!["gen", "--scenes", "5", "--sessions", "2", "--seconds", "20", "--seed", "3", "--split", "3,1,1", "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let stdout = ok(&["gen", "--scenes", "22", "--sessions", "3", "--seconds", "60", "--seed", "7", "--out", p(&a)]);
    assert!(stdout.contains("66 session files"), "{stdout}");
    assert_eq!(std::fs::read_dir(a.join("traces")).unwrap().count(), 66);
    let split = json(&a.join("split.json"));
    assert_eq!(split["train"].as_array().unwrap().len(), 18);

    let b = dir.path().join("b");
    ok(&["gen", "--scenes", "22", "--sessions", "3", "--seconds", "60", "--seed", "7", "--out", p(&b)]);
    let (mut fa, mut fb) = (files(&a), files(&b));
    let (ma, mb) = (fa.remove(Path::new("run.json")).unwrap(), fb.remove(Path::new("run.json")).unwrap());
    assert_eq!(fa, fb);
    let (ma, mb): (serde_json::Value, serde_json::Value) = (serde_json::from_slice(&ma).unwrap(), serde_json::from_slice(&mb).unwrap());
    assert_eq!(ma["artifacts"], mb["artifacts"]);
    assert_eq!(ma["artifacts"].as_object().unwrap().len(), fa.len());

    // the manifest alone reproduces the corpus
    let c = dir.path().join("c");
    ok(&["gen", "--config", p(&a.join("run.json")), "--out", p(&c)]);
    let mut fc = files(&c);
    fc.remove(Path::new("run.json"));
    assert_eq!(fa, fc);
}

#[test]
fn gen_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&foveacast(&["gen", "--scenes", "2", "--split", "18,2,2", "--out", p(&out)])), 2);
    assert_eq!(code(&foveacast(&["gen", "--scenes", "4", "--split", "18,2,2", "--out", p(&out)])), 2);
    assert_eq!(code(&foveacast(&["gen", "--split", "1,2", "--out", p(&out)])), 2);
    assert_eq!(code(&foveacast(&["gen", "--frobnicate"])), 2);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(code(&foveacast(&["gen", "--config", p(&cfg), "--out", p(&out)])), 2);
    assert_eq!(code(&foveacast(&["gen", "--config", p(&dir.path().join("nope.json")), "--out", p(&out)])), 3);
}

fn strip_seconds(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn train_smoke_resume_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), &[]);
    let full = dir.path().join("full");
    let started = Instant::now();
    ok(&["train", "--corpus", p(&corpus), "--out", p(&full), "--hidden", "8", "--epochs", "2", "--seed", "1"]);
    assert!(started.elapsed() < Duration::from_secs(60));
    for f in ["best.ckpt", "best.ckpt.bin", "last.ckpt", "last.ckpt.bin", "history.csv", "run.json"] {
        assert!(full.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(full.join("history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "epoch,train_loss,val_loss,val_s1,val_s2,val_s3,gate_gaze,gate_head,gate_scene,lr,seconds"
    );
    assert_eq!(history.lines().count(), 3);

    let part = dir.path().join("part");
    ok(&["train", "--corpus", p(&corpus), "--out", p(&part), "--hidden", "8", "--epochs", "1", "--seed", "1"]);
    ok(&["train", "--corpus", p(&corpus), "--out", p(&part), "--resume", p(&part.join("last.ckpt")), "--epochs", "2"]);
    assert_eq!(std::fs::read(full.join("last.ckpt.bin")).unwrap(), std::fs::read(part.join("last.ckpt.bin")).unwrap());
    assert_eq!(std::fs::read(full.join("best.ckpt.bin")).unwrap(), std::fs::read(part.join("best.ckpt.bin")).unwrap());
    assert_eq!(strip_seconds(&full.join("history.csv")), strip_seconds(&part.join("history.csv")));

    let ev = dir.path().join("eval");
    let stdout = ok(&["eval", "--checkpoint", p(&full.join("best.ckpt")), "--corpus", p(&corpus), "--out", p(&ev), "--dump"]);
    assert!(stdout.contains("step 3"));
    let report = json(&ev.join("metrics.json"));
    let count = report["count"].as_u64().unwrap() as usize;
    assert!(count > 0);
    for key in ["steps", "overall_mse", "overall_hit_rate", "direction", "gates", "hit_radius"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    let gates = &report["gates"]["mean"];
    let sum: f64 = (0..3).map(|i| gates[i].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-6);
    let csv = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "metric,step,value");
    let dump = std::fs::read_to_string(ev.join("predictions.csv")).unwrap();
    assert_eq!(dump.lines().count(), 1 + 3 * count);

    let gates_dir = dir.path().join("gates");
    ok(&["inspect-gates", "--checkpoint", p(&full.join("best.ckpt")), "--corpus", p(&corpus), "--out", p(&gates_dir)]);
    let trace = std::fs::read_to_string(gates_dir.join("gates.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + count);
    let summary = std::fs::read_to_string(gates_dir.join("gates_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert!(rows[0].starts_with("bouncing,"));
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let s: f64 = f[2..5].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-6, "{row}");
    }

    let bench = dir.path().join("bench");
    ok(&["bench", "--checkpoint", p(&full.join("best.ckpt")), "--out", p(&bench), "--iters", "1000", "--warmup", "10"]);
    let lat = json(&bench.join("latency.json"));
    let r = &lat["report"];
    for key in ["mean_ms", "p50_ms", "p95_ms", "p99_ms", "max_ms", "fps"] {
        assert!(r[key].as_f64().unwrap() > 0.0, "{key}");
    }
    assert!(r["p99_ms"].as_f64().unwrap() >= r["p50_ms"].as_f64().unwrap());
    assert_eq!(r["iterations"], 1000);
    assert_eq!(std::fs::read_to_string(bench.join("latency_times.csv")).unwrap().lines().count(), 1001);
}

#[test]
fn train_and_eval_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = dir.path().join("out");
    assert_eq!(code(&foveacast(&["train", "--corpus", p(&missing), "--out", p(&out), "--epochs", "1"])), 3);

    let corpus = small_corpus(dir.path(), &[]);
    assert_eq!(code(&foveacast(&["train", "--corpus", p(&corpus), "--out", p(&out), "--batch-size", "0"])), 2);

    let run = dir.path().join("run");
    ok(&["train", "--corpus", p(&corpus), "--out", p(&run), "--hidden", "4", "--epochs", "1"]);
    let ckpt = run.join("last.ckpt");
    let text = std::fs::read_to_string(&ckpt).unwrap();

    let ev = dir.path().join("ev");
    assert_eq!(code(&foveacast(&["eval", "--checkpoint", p(&dir.path().join("none.ckpt")), "--corpus", p(&corpus), "--out", p(&ev)])), 3);

    std::fs::write(&ckpt, &text[..text.len() / 3]).unwrap();
    assert_eq!(code(&foveacast(&["eval", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out", p(&ev)])), 5);
    assert_eq!(code(&foveacast(&["bench", "--checkpoint", p(&ckpt), "--out", p(&ev), "--iters", "5"])), 5);

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["format_version"] = 7.into();
    std::fs::write(&ckpt, v.to_string()).unwrap();
    assert_eq!(code(&foveacast(&["inspect-gates", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out", p(&ev)])), 5);
}

#[test]
fn non_finite_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), &[]);
    let feat = corpus.join("scenes").join("scene000.f32");
    let n = std::fs::metadata(&feat).unwrap().len() as usize / 4;
    std::fs::write(&feat, f32::NAN.to_le_bytes().repeat(n)).unwrap();
    let out = dir.path().join("run");
    let res = foveacast(&["train", "--corpus", p(&corpus), "--out", p(&out), "--hidden", "4", "--epochs", "1"]);
    assert_eq!(code(&res), 4, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn presets_summarized_separately() {
    let dir = tempfile::tempdir().unwrap();
    let bouncing = small_corpus(&dir.path().join("b"), &[]);
    let crossing = small_corpus(&dir.path().join("c"), &["--preset", "crossing"]);
    let run = dir.path().join("run");
    ok(&["train", "--corpus", p(&bouncing), "--out", p(&run), "--hidden", "4", "--epochs", "1"]);
    let mut labels = Vec::new();
    for (name, corpus) in [("gb", &bouncing), ("gc", &crossing)] {
        let out = dir.path().join(name);
        ok(&["inspect-gates", "--checkpoint", p(&run.join("best.ckpt")), "--corpus", p(corpus), "--out", p(&out)]);
        let summary = std::fs::read_to_string(out.join("gates_summary.csv")).unwrap();
        labels.push(summary.lines().nth(1).unwrap().split(',').next().unwrap().to_string());
    }
    assert_eq!(labels, ["bouncing", "crossing"]);
}

#[test]
fn bench_without_checkpoint_uses_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.json");
    std::fs::write(&cfg, r#"{"model": {"hidden": 16, "fused_proj": 32, "head_hidden": 16, "gate_hidden": 8}}"#).unwrap();
    let out = dir.path().join("bench");
    let stdout = ok(&["bench", "--config", p(&cfg), "--out", p(&out), "--iters", "1000", "--warmup", "5", "--threads", "2"]);
    assert!(stdout.contains("2 thread(s)"), "{stdout}");
    let lat = json(&out.join("latency.json"));
    assert_eq!(lat["model_config"]["hidden"], 16);
    assert_eq!(lat["per_thread"].as_array().unwrap().len(), 2);
    assert_eq!(lat["report"]["iterations"], 2000);
    assert_eq!(code(&foveacast(&["bench", "--out", p(&out), "--iters", "0"])), 2);

    let capped = Command::new(env!("CARGO_BIN_EXE_foveacast"))
        .args(["bench", "--config", p(&cfg), "--out", p(&out), "--iters", "1000", "--threads", "4"])
        .env("FOVEACAST_THREADS", "1")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&capped.stdout).contains("1 thread(s)"));
}
