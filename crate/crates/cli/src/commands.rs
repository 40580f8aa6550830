use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use foveacast_core::bench::{bench_forward, summarize, write_times_csv, LatencyReport, FRAME_BUDGET_MS};
use foveacast_core::datapipe::{Batch, Corpus, Dataset, PipelineConfig, SceneKind, WindowConfig, WindowSample};
use foveacast_core::metrics::{evaluate, gate_summary, predict_windows, EvalOptions};
use foveacast_core::model::{GazeModel, ModelConfig, SceneMode};
use foveacast_core::numkernel::{Mat, Real};
use foveacast_core::synthgen::{generate, write_corpus, ScenePreset, SynthConfig};
use foveacast_core::train::{
    load_checkpoint, load_resume, read_manifest, train as run_training, TrainConfig, TrainData, BEST_CHECKPOINT,
    HISTORY_FILE, LAST_CHECKPOINT,
};
use serde::{Deserialize, Serialize};

use crate::manifest::{read_config_value, RunManifest, MANIFEST_FILE};
use crate::{BenchArgs, Dtype, EvalArgs, GatesArgs, GenArgs, SplitArg, TrainArgs, Usage};

const SYNTH_CONFIG_FILE: &str = "synth_config.json";

/// Worker-thread cap from `FOVEACAST_THREADS`.
fn threads_env() -> Result<Option<usize>> {
    match std::env::var("FOVEACAST_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| Usage(format!("FOVEACAST_THREADS={v} is not a count")))?;
            Ok(Some(n.max(1)))
        }
        Err(_) => Ok(None),
    }
}

fn from_config<T: serde::de::DeserializeOwned>(value: serde_json::Value, what: &str) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Usage(format!("invalid {what} config: {e}")).into())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn gen(args: GenArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => from_config(read_config_value(p)?, "synth")?,
        None => SynthConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.scenes {
        cfg.n_scenes = v;
    }
    if let Some(v) = args.sessions {
        cfg.n_sessions_per_scene = v;
    }
    if let Some(v) = args.seconds {
        cfg.duration_s = v;
    }
    if let Some(v) = args.rate_hz {
        cfg.sample_rate_hz = v;
    }
    if let Some(v) = args.lead_ms {
        cfg.head_lead_ms = [v, v];
    }
    if let Some(v) = args.dropout {
        cfg.dropout_fraction = v;
    }
    if let Some(v) = args.preset {
        cfg.preset = v.into();
    }
    if args.split.is_some() {
        cfg.split = args.split;
    }
    if let Some(v) = args.image_side {
        cfg.image_side = v;
    }

    let manifest = RunManifest::start("gen", serde_json::to_value(&cfg)?, cfg.seed);
    let corpus = generate(&cfg)?;
    create_dir(&args.out)?;
    let files = write_corpus(&corpus, &args.out)?;
    manifest.finish(&args.out, &files)?;
    let records: usize = corpus.sessions.iter().map(|s| s.records.len()).sum();
    println!(
        "{} scenes, {} session files, {} records; split {}/{}/{} -> {}",
        corpus.scripts.len(),
        corpus.sessions.len(),
        records,
        corpus.split.train.len(),
        corpus.split.val.len(),
        corpus.split.test.len(),
        args.out.display()
    );
    Ok(())
}

/// Config document accepted by `train --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFile {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dtype: Dtype,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self { model: ModelConfig::default(), train: TrainConfig::default(), dtype: Dtype::F32 }
    }
}

fn scene_kind(cfg: &ModelConfig) -> SceneKind {
    match cfg.scene_mode {
        SceneMode::Precomputed => SceneKind::Features { dim: cfg.scene_feature_dim },
        SceneMode::Conv { side } => SceneKind::Image { side },
    }
}

fn pipeline_for(cfg: &ModelConfig) -> PipelineConfig {
    PipelineConfig { window: WindowConfig { n_in: cfg.n_in, k_out: cfg.k_steps, stride: 1 }, ..PipelineConfig::default() }
}

fn load_dataset(root: &Path, cfg: &ModelConfig) -> Result<(Corpus, Dataset)> {
    let corpus = Corpus::load(root, scene_kind(cfg)).with_context(|| format!("loading corpus {}", root.display()))?;
    let ds = Dataset::from_corpus(&corpus, &pipeline_for(cfg))?;
    Ok((corpus, ds))
}

fn corpus_synth_config(root: &Path) -> Option<SynthConfig> {
    let text = std::fs::read_to_string(root.join(SYNTH_CONFIG_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn resume_dir(path: &Path) -> PathBuf {
    if path.is_file() {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let resume = args.resume.as_deref().map(resume_dir);
    let config_source = args.config.clone().or_else(|| {
        let p = resume.as_ref()?.join(MANIFEST_FILE);
        p.exists().then_some(p)
    });
    let mut file: TrainFile = match &config_source {
        Some(p) => from_config(read_config_value(p)?, "train")?,
        None => TrainFile::default(),
    };
    if let Some(v) = args.seed {
        file.train.seed = v;
    }
    if let Some(v) = args.epochs {
        file.train.max_epochs = v;
    }
    if let Some(v) = args.lr {
        file.train.lr = v;
    }
    if let Some(v) = args.batch_size {
        file.train.batch_size = v;
    }
    if let Some(v) = args.hidden {
        file.model.hidden = v;
    }
    if let Some(v) = args.lambda_aux {
        file.train.lambda_aux = v;
        file.model.lambda_aux = v;
    }
    if let Some(v) = args.dtype {
        file.dtype = v;
    }
    if args.conv_scene {
        let side = corpus_synth_config(&args.corpus).map_or(64, |c| c.image_side);
        file.model.scene_mode = SceneMode::Conv { side };
    }
    if threads_env()? == Some(1) {
        file.train.prefetch = 0;
    }
    match file.dtype {
        Dtype::F32 => train_typed::<f32>(&args, resume.as_deref(), file),
        Dtype::F64 => train_typed::<f64>(&args, resume.as_deref(), file),
    }
}

fn train_typed<T: Real>(args: &TrainArgs, resume: Option<&Path>, mut file: TrainFile) -> Result<()> {
    let (model, resume_state) = match resume {
        Some(dir) => {
            let (m, r) = load_resume::<T>(dir).with_context(|| format!("resuming from {}", dir.display()))?;
            (m, Some(r))
        }
        None => (GazeModel::<T>::new(file.model.clone(), file.train.seed)?, None),
    };
    file.model = model.config().clone();
    let mut manifest = RunManifest::start("train", serde_json::to_value(&file)?, file.train.seed);
    manifest.inputs.push(args.corpus.clone());
    if let Some(dir) = resume {
        manifest.inputs.push(dir.to_path_buf());
    }

    let (corpus, ds) = load_dataset(&args.corpus, &file.model)?;
    eprintln!("windows: train {}, val {}, test {}", ds.train.len(), ds.val.len(), ds.test.len());
    create_dir(&args.out)?;
    let data = TrainData { train: &ds.train, val: &ds.val, store: &corpus.store };
    let outcome = run_training(model, &data, &file.train, Some(&args.out), resume_state, |s, _| {
        eprintln!(
            "epoch {:>3}  train {:.4e}  val {:.4e}  steps [{}]  gates [{:.3} {:.3} {:.3}]  lr {:.1e}  {:.1}s",
            s.epoch,
            s.train_loss,
            s.val_loss,
            s.val_steps.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" "),
            s.gates[0],
            s.gates[1],
            s.gates[2],
            s.lr,
            s.seconds
        );
        ControlFlow::Continue(())
    })?;

    let mut files = Vec::new();
    for name in [BEST_CHECKPOINT, LAST_CHECKPOINT] {
        files.push(PathBuf::from(name));
        files.push(PathBuf::from(format!("{name}.bin")));
    }
    files.push(PathBuf::from(HISTORY_FILE));
    files.retain(|f| args.out.join(f).exists());
    manifest.finish(&args.out, &files)?;
    match outcome.state.best_val_loss {
        Some(best) => println!(
            "{} epochs, best val loss {best:.4e} at epoch {} -> {}",
            outcome.state.epoch,
            outcome.state.best_epoch.unwrap_or(0),
            args.out.display()
        ),
        None => println!("0 epochs run -> {}", args.out.display()),
    }
    Ok(())
}

fn checkpoint_dtype(path: &Path) -> Result<Dtype> {
    let m = read_manifest(path)?;
    match m.dtype.as_str() {
        "f32" => Ok(Dtype::F32),
        "f64" => Ok(Dtype::F64),
        other => Err(foveacast_core::train::TrainError::CorruptManifest(format!("unknown dtype {other}")).into()),
    }
}

fn split_of(ds: &Dataset, split: SplitArg) -> &[WindowSample] {
    match split {
        SplitArg::Train => &ds.train,
        SplitArg::Val => &ds.val,
        SplitArg::Test => &ds.test,
    }
}

fn split_name(split: SplitArg) -> &'static str {
    match split {
        SplitArg::Train => "train",
        SplitArg::Val => "val",
        SplitArg::Test => "test",
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    match checkpoint_dtype(&args.checkpoint)? {
        Dtype::F32 => eval_typed::<f32>(&args),
        Dtype::F64 => eval_typed::<f64>(&args),
    }
}

fn eval_typed<T: Real>(args: &EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint::<T>(&args.checkpoint)?;
    let cfg = ckpt.model.config().clone();
    let config = serde_json::json!({
        "split": split_name(args.split),
        "radius": args.radius,
        "zero_head": args.zero_head,
        "model": cfg,
    });
    let mut manifest = RunManifest::start("eval", config, ckpt.state.seed);
    manifest.inputs = vec![args.checkpoint.clone(), args.corpus.clone()];

    let (corpus, ds) = load_dataset(&args.corpus, &cfg)?;
    let windows = split_of(&ds, args.split);
    let opts = EvalOptions { hit_radius: args.radius, zero_head: args.zero_head, ..EvalOptions::default() };
    let (report, preds) = evaluate(&ckpt.model, windows, &corpus.store, &opts)?;
    create_dir(&args.out)?;
    let mut files = vec![PathBuf::from("metrics.json"), PathBuf::from("metrics.csv")];
    report.write(&args.out.join(&files[0]), &args.out.join(&files[1]))?;
    if args.dump {
        let mut text = String::from("window,session_id,start_us,step,pred_x,pred_y,target_x,target_y\n");
        for (i, w) in windows.iter().enumerate() {
            for (s, (p, t)) in preds.preds.iter().zip(&preds.targets).enumerate() {
                let (p, t) = (p[i], t[i]);
                writeln!(text, "{i},{},{},{},{},{},{},{}", w.session_id, w.start_us, s + 1, p[0], p[1], t[0], t[1])?;
            }
        }
        let rel = PathBuf::from("predictions.csv");
        std::fs::write(args.out.join(&rel), text).with_context(|| "writing predictions.csv")?;
        files.push(rel);
    }
    manifest.finish(&args.out, &files)?;

    println!("{} windows ({} split), hit radius {}", report.count, split_name(args.split), args.radius);
    for (i, mse) in report.steps.mse.iter().enumerate() {
        println!(
            "  step {}: mse {mse:.4e}  hit {:.1}%  euclid {:.4}  angular {:.2} deg",
            i + 1,
            report.steps.hit_rate[i] * 100.0,
            report.steps.mean_euclidean[i],
            report.steps.mean_angular_deg[i]
        );
    }
    println!("  overall: mse {:.4e}  hit {:.1}%", report.overall_mse, report.overall_hit_rate * 100.0);
    println!("  gates: gaze {:.3}  head {:.3}  scene {:.3}", report.gates.mean[0], report.gates.mean[1], report.gates.mean[2]);
    Ok(())
}

/// A fixed, plausible single window: a slow gaze sweep with matching head turn.
fn sample_window<T: Real>(cfg: &ModelConfig) -> Batch<T> {
    let n = cfg.n_in;
    let gaze = (0..n).map(|t| Mat::from_fn(1, 2, |_, c| T::of(0.3 + 0.02 * t as f64 + 0.1 * c as f64))).collect();
    let head = (0..n)
        .map(|t| {
            let half = 0.01 * t as f64;
            let q = [half.cos(), 0.0, half.sin(), 0.0];
            Mat::from_fn(1, 4, |_, c| T::of(q[c]))
        })
        .collect();
    let scene = Mat::from_fn(1, cfg.scene_input_width(), |_, c| T::of(((c as f64) * 0.37).sin().abs()));
    let targets = (0..cfg.k_steps).map(|_| Mat::from_fn(1, 2, |_, _| T::of(0.5))).collect();
    Batch { gaze, head, scene, targets, partial: true, indices: vec![0] }
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    /// Model forward only; excludes data loading and rendering.
    scope: &'static str,
    dtype: Dtype,
    threads: usize,
    frame_budget_ms: f64,
    model_config: &'a ModelConfig,
    report: LatencyReport,
    per_thread: Vec<LatencyReport>,
}

pub fn bench(args: BenchArgs) -> Result<()> {
    match &args.checkpoint {
        Some(p) => match checkpoint_dtype(p)? {
            Dtype::F32 => bench_typed(&args, load_checkpoint::<f32>(p)?.model, Dtype::F32),
            Dtype::F64 => bench_typed(&args, load_checkpoint::<f64>(p)?.model, Dtype::F64),
        },
        None => {
            let cfg: ModelConfig = match &args.config {
                Some(p) => {
                    let v = read_config_value(p)?;
                    let v = v.get("model").cloned().unwrap_or(v);
                    from_config(v, "model")?
                }
                None => ModelConfig::default(),
            };
            let seed = args.seed.unwrap_or(0);
            match args.dtype.unwrap_or(Dtype::F32) {
                Dtype::F32 => bench_typed(&args, GazeModel::<f32>::new(cfg, seed)?, Dtype::F32),
                Dtype::F64 => bench_typed(&args, GazeModel::<f64>::new(cfg, seed)?, Dtype::F64),
            }
        }
    }
}

fn bench_typed<T: Real>(args: &BenchArgs, model: GazeModel<T>, dtype: Dtype) -> Result<()> {
    if args.iters == 0 {
        return Err(Usage("--iters must be positive".into()).into());
    }
    let requested = args.threads.unwrap_or(1).max(1);
    let threads = threads_env()?.map_or(requested, |cap| requested.min(cap));
    let cfg = model.config().clone();
    let window = sample_window::<T>(&cfg);
    let mut manifest = RunManifest::start(
        "bench",
        serde_json::json!({ "iters": args.iters, "warmup": args.warmup, "threads": threads, "dtype": dtype, "model": cfg }),
        args.seed.unwrap_or(0),
    );
    if let Some(p) = &args.checkpoint {
        manifest.inputs.push(p.clone());
    }

    let runs: Vec<(LatencyReport, Vec<f64>)> = if threads == 1 {
        vec![bench_forward(&model, &window, args.warmup, args.iters)?]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|_| {
                    let (m, w) = (model.clone(), window.clone());
                    s.spawn(move || bench_forward(&m, &w, args.warmup, args.iters))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("bench thread panicked")).collect::<Result<Vec<_>, _>>()
        })?
    };
    let all: Vec<f64> = runs.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    let report = summarize(&all, args.warmup);
    let out = BenchOutput {
        scope: "model forward, batch 1",
        dtype,
        threads,
        frame_budget_ms: FRAME_BUDGET_MS,
        model_config: &cfg,
        report: report.clone(),
        per_thread: runs.iter().map(|(r, _)| r.clone()).collect(),
    };
    create_dir(&args.out)?;
    let files = vec![PathBuf::from("latency.json"), PathBuf::from("latency_times.csv")];
    std::fs::write(args.out.join(&files[0]), serde_json::to_string_pretty(&out)? + "\n").context("writing latency.json")?;
    write_times_csv(&args.out.join(&files[1]), &all).context("writing latency_times.csv")?;
    manifest.finish(&args.out, &files)?;
    println!(
        "{} iterations x {threads} thread(s): mean {:.3} ms  p50 {:.3}  p95 {:.3}  p99 {:.3}  max {:.3}  ({:.0} fps, budget {:.1} ms: {})",
        args.iters,
        report.mean_ms,
        report.p50_ms,
        report.p95_ms,
        report.p99_ms,
        report.max_ms,
        report.fps,
        FRAME_BUDGET_MS,
        if report.within_budget { "met" } else { "missed" }
    );
    Ok(())
}

pub fn inspect_gates(args: GatesArgs) -> Result<()> {
    match checkpoint_dtype(&args.checkpoint)? {
        Dtype::F32 => gates_typed::<f32>(&args),
        Dtype::F64 => gates_typed::<f64>(&args),
    }
}

fn preset_name(p: ScenePreset) -> &'static str {
    match p {
        ScenePreset::Bouncing => "bouncing",
        ScenePreset::Crossing => "crossing",
    }
}

fn gates_typed<T: Real>(args: &GatesArgs) -> Result<()> {
    let ckpt = load_checkpoint::<T>(&args.checkpoint)?;
    let cfg = ckpt.model.config().clone();
    let label = args
        .label
        .clone()
        .or_else(|| corpus_synth_config(&args.corpus).map(|c| preset_name(c.preset).to_string()))
        .unwrap_or_else(|| "all".into());
    let mut manifest =
        RunManifest::start("inspect-gates", serde_json::json!({ "split": split_name(args.split), "label": label }), ckpt.state.seed);
    manifest.inputs = vec![args.checkpoint.clone(), args.corpus.clone()];

    let (corpus, ds) = load_dataset(&args.corpus, &cfg)?;
    let windows = split_of(&ds, args.split);
    let preds = predict_windows(&ckpt.model, windows, &corpus.store, &EvalOptions::default())?;

    let mut trace = String::from("window,scene_id,session_id,start_us,gate_gaze,gate_head,gate_scene\n");
    let mut groups: BTreeMap<String, Vec<[f64; 3]>> = BTreeMap::new();
    for (i, (w, g)) in windows.iter().zip(&preds.gates).enumerate() {
        writeln!(trace, "{i},{},{},{},{},{},{}", w.scene_id, w.session_id, w.start_us, g[0], g[1], g[2])?;
        groups.entry(format!("scene:{}", w.scene_id)).or_default().push(*g);
    }
    let mut summary = String::from("group,count,gate_gaze,gate_head,gate_scene,std_gaze,std_head,std_scene\n");
    let mut push = |name: &str, gates: &[[f64; 3]]| -> Result<()> {
        let s = gate_summary(gates)?;
        writeln!(summary, "{name},{},{},{},{},{},{},{}", s.count, s.mean[0], s.mean[1], s.mean[2], s.std[0], s.std[1], s.std[2])?;
        Ok(())
    };
    push(&label, &preds.gates)?;
    for (name, gates) in &groups {
        push(name, gates)?;
    }

    create_dir(&args.out)?;
    let files = vec![PathBuf::from("gates.csv"), PathBuf::from("gates_summary.csv")];
    std::fs::write(args.out.join(&files[0]), trace).context("writing gates.csv")?;
    std::fs::write(args.out.join(&files[1]), summary).context("writing gates_summary.csv")?;
    manifest.finish(&args.out, &files)?;
    let s = gate_summary(&preds.gates)?;
    println!(
        "{} windows [{label}]: gaze {:.3}  head {:.3}  scene {:.3}",
        s.count, s.mean[0], s.mean[1], s.mean[2]
    );
    Ok(())
}
