//! Evaluation metrics: per-step error, hit rate, angular and direction
//! error, and gate summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapipe::{for_each_batch, BatchPlan, DataError, SceneStore, WindowSample};
use crate::geometry::FovMap;
use crate::model::{ForwardMode, GazeModel, ModelError};
use crate::numkernel::Real;

/// True displacements at or below this norm have no direction.
pub const MIN_DISPLACEMENT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("{0} prediction steps but {1} target steps")]
    StepMismatch(usize, usize),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Per-step error statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub mse: Vec<f64>,
    pub hit_rate: Vec<f64>,
    pub mean_euclidean: Vec<f64>,
    pub mean_angular_deg: Vec<f64>,
}

/// `preds[step][sample]` against `targets[step][sample]`. A prediction hits
/// when its distance to the target is at most `radius`.
pub fn compute_step_metrics(
    preds: &[Vec<[f64; 2]>],
    targets: &[Vec<[f64; 2]>],
    radius: f64,
    fov: &FovMap,
) -> Result<StepMetrics, MetricsError> {
    if preds.len() != targets.len() {
        return Err(MetricsError::StepMismatch(preds.len(), targets.len()));
    }
    let mut out = StepMetrics { mse: vec![], hit_rate: vec![], mean_euclidean: vec![], mean_angular_deg: vec![] };
    for (p, t) in preds.iter().zip(targets) {
        if p.is_empty() || p.len() != t.len() {
            return Err(MetricsError::EmptyInput);
        }
        let n = p.len() as f64;
        let (mut se, mut hits, mut eu, mut ang) = (0.0, 0usize, 0.0, 0.0);
        for (a, b) in p.iter().zip(t) {
            let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
            let sq = dx * dx + dy * dy;
            se += sq;
            let d = sq.sqrt();
            if d <= radius {
                hits += 1;
            }
            eu += d;
            ang += (dx * fov.horizontal_deg).hypot(dy * fov.vertical_deg);
        }
        out.mse.push(se / n);
        out.hit_rate.push(hits as f64 / n);
        out.mean_euclidean.push(eu / n);
        out.mean_angular_deg.push(ang / n);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionError {
    /// Later step of the pair, 1-based (2 compares step 2 against step 1).
    pub step: usize,
    pub mean_deg: Option<f64>,
    pub count: usize,
    /// Samples without a usable direction.
    pub excluded: usize,
}

/// Angle between predicted and true displacement from step `i−1` to `i`,
/// for each `i ≥ 2`. Samples where either displacement has no direction are
/// excluded and counted.
pub fn direction_error(preds: &[Vec<[f64; 2]>], targets: &[Vec<[f64; 2]>]) -> Vec<DirectionError> {
    (1..preds.len().min(targets.len()))
        .map(|i| {
            let (mut sum, mut count, mut excluded) = (0.0, 0usize, 0usize);
            for s in 0..preds[i].len() {
                let dp = [preds[i][s][0] - preds[i - 1][s][0], preds[i][s][1] - preds[i - 1][s][1]];
                let dt = [targets[i][s][0] - targets[i - 1][s][0], targets[i][s][1] - targets[i - 1][s][1]];
                let (np, nt) = (dp[0].hypot(dp[1]), dt[0].hypot(dt[1]));
                if nt <= MIN_DISPLACEMENT || np <= MIN_DISPLACEMENT {
                    excluded += 1;
                    continue;
                }
                let cos = ((dp[0] * dt[0] + dp[1] * dt[1]) / (np * nt)).clamp(-1.0, 1.0);
                sum += cos.acos().to_degrees();
                count += 1;
            }
            DirectionError { step: i + 1, mean_deg: (count > 0).then(|| sum / count as f64), count, excluded }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    /// `(gaze, head, scene)`
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub count: usize,
}

pub fn gate_summary(gates: &[[f64; 3]]) -> Result<GateSummary, MetricsError> {
    if gates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = gates.len() as f64;
    let mut mean = [0.0; 3];
    for g in gates {
        for k in 0..3 {
            mean[k] += g[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = [0.0; 3];
    for g in gates {
        for k in 0..3 {
            std[k] += (g[k] - mean[k]).powi(2);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    Ok(GateSummary { mean, std, count: gates.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub hit_radius: f64,
    pub steps: StepMetrics,
    /// Mean squared error averaged over steps.
    pub overall_mse: f64,
    pub overall_hit_rate: f64,
    pub direction: Vec<DirectionError>,
    pub gates: GateSummary,
}

impl MetricsReport {
    pub fn build(
        preds: &[Vec<[f64; 2]>],
        targets: &[Vec<[f64; 2]>],
        gates: &[[f64; 3]],
        radius: f64,
        fov: &FovMap,
    ) -> Result<Self, MetricsError> {
        let steps = compute_step_metrics(preds, targets, radius, fov)?;
        let k = steps.mse.len() as f64;
        Ok(Self {
            count: gates.len(),
            hit_radius: radius,
            overall_mse: steps.mse.iter().sum::<f64>() / k,
            overall_hit_rate: steps.hit_rate.iter().sum::<f64>() / k,
            steps,
            direction: direction_error(preds, targets),
            gates: gate_summary(gates)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Long format: `metric,step,value`; step is empty for whole-set values.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,step,value\n");
        let mut row = |m: &str, step: Option<usize>, v: f64| {
            s.push_str(&format!("{m},{},{v}\n", step.map(|x| x.to_string()).unwrap_or_default()));
        };
        for (i, _) in self.steps.mse.iter().enumerate() {
            row("mse", Some(i + 1), self.steps.mse[i]);
            row("hit_rate", Some(i + 1), self.steps.hit_rate[i]);
            row("mean_euclidean", Some(i + 1), self.steps.mean_euclidean[i]);
            row("mean_angular_deg", Some(i + 1), self.steps.mean_angular_deg[i]);
        }
        for d in &self.direction {
            if let Some(v) = d.mean_deg {
                row("direction_error_deg", Some(d.step), v);
            }
        }
        row("overall_mse", None, self.overall_mse);
        row("overall_hit_rate", None, self.overall_hit_rate);
        for (name, v) in crate::model::GATE_NAMES.iter().zip(self.gates.mean) {
            row(&format!("gate_{name}"), None, v);
        }
        row("count", None, self.count as f64);
        s
    }

    pub fn write(&self, json: &Path, csv: &Path) -> Result<(), MetricsError> {
        for (p, text) in [(json, self.to_json()), (csv, self.to_csv())] {
            std::fs::write(p, text).map_err(|e| MetricsError::Io { path: p.display().to_string(), message: e.to_string() })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub hit_radius: f64,
    pub fov: FovMap,
    pub batch_size: usize,
    /// Replace every head-orientation input with zeros.
    pub zero_head: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { hit_radius: 0.1, fov: FovMap::default(), batch_size: 32, zero_head: false }
    }
}

/// Per-window predictions, kept in window order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    pub preds: Vec<Vec<[f64; 2]>>,
    pub targets: Vec<Vec<[f64; 2]>>,
    pub gates: Vec<[f64; 3]>,
    pub aux_head: Vec<[f64; 2]>,
    pub aux_scene: Vec<[f64; 2]>,
}

pub fn predict_windows<T: Real>(
    model: &GazeModel<T>,
    windows: &[WindowSample],
    store: &SceneStore,
    opts: &EvalOptions,
) -> Result<Predictions, MetricsError> {
    if windows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let k = model.config().k_steps;
    let mut out = Predictions { preds: vec![Vec::new(); k], targets: vec![Vec::new(); k], ..Default::default() };
    let pair = |m: &crate::numkernel::Mat<T>, r: usize| [m.get(r, 0).f64(), m.get(r, 1).f64()];
    let plan = BatchPlan::sequential(windows.len(), opts.batch_size);
    for_each_batch::<T, MetricsError>(&plan, windows, store, 0, |_, batch| {
        let batch = if opts.zero_head { batch.without_head() } else { batch };
        let o = model.forward(&batch, ForwardMode::Infer)?.output;
        for r in 0..batch.size() {
            for s in 0..k {
                out.preds[s].push(pair(&o.preds[s], r));
                out.targets[s].push(pair(&batch.targets[s], r));
            }
            let g = o.gates.row(r);
            out.gates.push([g[0].f64(), g[1].f64(), g[2].f64()]);
            out.aux_head.push(pair(&o.aux_head, r));
            out.aux_scene.push(pair(&o.aux_scene, r));
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn evaluate<T: Real>(
    model: &GazeModel<T>,
    windows: &[WindowSample],
    store: &SceneStore,
    opts: &EvalOptions,
) -> Result<(MetricsReport, Predictions), MetricsError> {
    let p = predict_windows(model, windows, store, opts)?;
    let report = MetricsReport::build(&p.preds, &p.targets, &p.gates, opts.hit_radius, &opts.fov)?;
    Ok((report, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fov() -> FovMap {
        FovMap::default()
    }

    #[test]
    fn perfect_predictions() {
        let t = vec![vec![[0.1, 0.2], [0.5, 0.5]]; 3];
        let m = compute_step_metrics(&t, &t, 0.1, &fov()).unwrap();
        assert_eq!(m.mse, vec![0.0; 3]);
        assert_eq!(m.hit_rate, vec![1.0; 3]);
    }

    #[test]
    fn boundary_counts_as_hit() {
        let t = vec![vec![[0.5, 0.5]; 4]];
        let p = vec![vec![[0.625, 0.5], [0.5, 0.375], [0.375, 0.5], [0.5, 0.625]]];
        let m = compute_step_metrics(&p, &t, 0.125, &fov()).unwrap();
        assert_eq!(m.hit_rate, vec![1.0]);
        assert!((m.mean_angular_deg[0] - 12.5).abs() < 1e-12);
        let m = compute_step_metrics(&p, &t, 0.12, &fov()).unwrap();
        assert_eq!(m.hit_rate, vec![0.0]);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(compute_step_metrics(&[vec![]], &[vec![]], 0.1, &fov()), Err(MetricsError::EmptyInput)));
        assert!(matches!(gate_summary(&[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn direction_examples() {
        let t = vec![vec![[0.0, 0.0]], vec![[1.0, 0.0]]];
        let angle = |p: [f64; 2]| direction_error(&[vec![[0.0, 0.0]], vec![p]], &t)[0].mean_deg.unwrap();
        assert!(angle([2.0, 0.0]).abs() < 1e-9);
        assert!((angle([0.0, 0.5]) - 90.0).abs() < 1e-9);
        assert!((angle([-1.0, 0.0]) - 180.0).abs() < 1e-9);
        let still = vec![vec![[0.3, 0.3]], vec![[0.3, 0.3]]];
        let d = direction_error(&t, &still);
        assert_eq!((d[0].mean_deg, d[0].count, d[0].excluded), (None, 0, 1));
    }

    #[test]
    fn gate_examples() {
        let g = gate_summary(&[[1.0, 0.0, 0.0]; 4]).unwrap();
        assert_eq!(g.mean, [1.0, 0.0, 0.0]);
        let g = gate_summary(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(g.mean, [0.5, 0.5, 0.0]);
        assert_eq!(g.std, [0.5, 0.5, 0.0]);
    }

    #[test]
    fn report_formats() {
        let t = vec![vec![[0.1, 0.2]], vec![[0.2, 0.2]], vec![[0.3, 0.2]]];
        let r = MetricsReport::build(&t, &t, &[[0.2, 0.3, 0.5]], 0.1, &fov()).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("metric,step,value\nmse,1,0\n"));
        assert!(csv.contains("direction_error_deg,3,0\n"));
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
