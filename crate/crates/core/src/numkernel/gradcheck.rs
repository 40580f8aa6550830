use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameterized;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Parameters with more coordinates than this are checked on a random
    /// subset of exactly this many.
    pub max_coords_per_param: usize,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is ~0 are judged on absolute error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-6, max_coords_per_param: 200, abs_floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// `(param name, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares analytic gradients against central finite differences.
///
/// `objective(model, backward)` must return the scalar loss and, when
/// `backward` is true, accumulate its gradient into the model's params.
/// Gradients are zeroed before the analytic pass.
pub fn grad_check<M: Parameterized<f64>>(
    model: &mut M,
    mut objective: impl FnMut(&mut M, bool) -> f64,
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    model.zero_grads();
    objective(model, true);
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data().to_vec()).collect();
    model.zero_grads();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport { max_rel_error: 0.0, coords_checked: 0, worst: None };
    for (pi, grads) in analytic.iter().enumerate() {
        let n = grads.len();
        let coords: Vec<usize> = if n <= cfg.max_coords_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, cfg.max_coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for k in coords {
            let orig = model.params()[pi].value.data()[k];
            model.params_mut()[pi].value.data_mut()[k] = orig + cfg.eps;
            let plus = objective(model, false);
            model.params_mut()[pi].value.data_mut()[k] = orig - cfg.eps;
            let minus = objective(model, false);
            model.params_mut()[pi].value.data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = grads[k];
            let denom = a.abs().max(numeric.abs()).max(cfg.abs_floor);
            let rel = (a - numeric).abs() / denom;
            report.coords_checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((model.params()[pi].name.clone(), k, a, numeric));
            }
        }
    }
    report
}
