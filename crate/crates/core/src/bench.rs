//! Single-window inference latency measurement.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datapipe::Batch;
use crate::model::{ForwardMode, GazeModel, ModelError};
use crate::numkernel::Real;

/// Per-frame time available at 90 Hz, in milliseconds.
pub const FRAME_BUDGET_MS: f64 = 1000.0 / 90.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub iterations: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// `1000 / mean_ms`, model cost only.
    pub fps: f64,
    pub within_budget: bool,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(times_ms: &[f64], warmup: usize) -> LatencyReport {
    let mut sorted = times_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = times_ms.iter().sum::<f64>() / times_ms.len().max(1) as f64;
    LatencyReport {
        iterations: times_ms.len(),
        warmup,
        mean_ms: mean,
        p50_ms: percentile(&sorted, 50.0),
        p95_ms: percentile(&sorted, 95.0),
        p99_ms: percentile(&sorted, 99.0),
        max_ms: sorted.last().copied().unwrap_or(f64::NAN),
        fps: 1000.0 / mean,
        within_budget: mean < FRAME_BUDGET_MS,
    }
}

/// Times `iterations` inference passes over `window` (a batch of one) on
/// the calling thread, after `warmup` untimed passes.
pub fn bench_forward<T: Real>(
    model: &GazeModel<T>,
    window: &Batch<T>,
    warmup: usize,
    iterations: usize,
) -> Result<(LatencyReport, Vec<f64>), ModelError> {
    for _ in 0..warmup {
        std::hint::black_box(model.forward(window, ForwardMode::Infer)?);
    }
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t = Instant::now();
        let out = model.forward(std::hint::black_box(window), ForwardMode::Infer)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    Ok((summarize(&times, warmup), times))
}

pub fn write_times_csv(path: &Path, times_ms: &[f64]) -> std::io::Result<()> {
    let mut s = String::from("iteration,ms\n");
    for (i, t) in times_ms.iter().enumerate() {
        s.push_str(&format!("{i},{t}\n"));
    }
    std::fs::write(path, s)
}
