//! Central finite-difference checks of the analytic gradients in
//! [`crate::subsample`] and [`crate::pooling`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::pooling::{pool_clip, pool_gradient, PoolingKind};
use crate::subsample::{evaluate, window_gradient, SubsampleKind};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
/// Denominator floor of [`relative_error`], so exact zeros compare by
/// absolute difference.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Random windows whose two largest entries are closer than this are
/// redrawn: max is not differentiable at ties.
const TIE_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub kind: String,
    pub trials: usize,
    pub seed: u64,
    /// Number of partial derivatives compared.
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub step: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Default)]
struct ErrorStats {
    checked: usize,
    max_rel: f64,
    max_abs: f64,
}

impl ErrorStats {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        self.max_abs = self.max_abs.max((analytic - numeric).abs());
        let rel = relative_error(analytic, numeric);
        // NaN must fail the check, so it is kept.
        if rel.is_nan() || rel > self.max_rel {
            self.max_rel = rel;
        }
    }

    fn into_report(self, kind: String, trials: usize, seed: u64) -> GradCheckReport {
        GradCheckReport {
            kind,
            trials,
            seed,
            checked: self.checked,
            max_rel_error: self.max_rel,
            max_abs_error: self.max_abs,
            step: FD_STEP,
            tolerance: REL_TOLERANCE,
            passed: self.max_rel < REL_TOLERANCE,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe)?;
        probe[i] = x[i] - step;
        let minus = f(&probe)?;
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

fn has_near_tie(x: &[f64]) -> bool {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.len() > 1 && sorted[0] - sorted[1] < TIE_MARGIN
}

fn random_window(rng: &mut ChaCha8Rng, len: usize, avoid_ties: bool) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
        if !avoid_ties || !has_near_tie(&x) {
            return x;
        }
    }
}

/// Compares [`window_gradient`] against central differences on `trials`
/// seeded random windows, for both the input and the operator parameters.
pub fn check_subsample(kind: &SubsampleKind, trials: usize, seed: u64) -> Result<GradCheckReport> {
    kind.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uses_max = matches!(
        kind,
        SubsampleKind::Max | SubsampleKind::Mm | SubsampleKind::AlphaMm { .. }
    );
    let params = kind.params();
    let mut stats = ErrorStats::default();

    for _ in 0..trials {
        let len = kind.window_len().unwrap_or_else(|| rng.random_range(2..=8));
        let x = random_window(&mut rng, len, uses_max);
        let analytic = window_gradient(&x, kind)?;

        let numeric_input = central_difference(|v| evaluate(v, kind), &x, FD_STEP)?;
        for (a, n) in analytic.input.iter().zip(&numeric_input) {
            stats.record(*a, *n);
        }
        let numeric_params = central_difference(|p| evaluate(&x, &kind.with_params(p)), &params, FD_STEP)?;
        for (a, n) in analytic.params.iter().zip(&numeric_params) {
            stats.record(*a, *n);
        }
    }
    Ok(stats.into_report(kind.to_string(), trials, seed))
}

/// Same check for the temporal pooling functions, on sequences of 1 to 32
/// frames.
pub fn check_pooling(kind: PoolingKind, trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ErrorStats::default();
    for _ in 0..trials {
        let len = rng.random_range(1..=32);
        let x = random_window(&mut rng, len, kind == PoolingKind::Max);
        let analytic = pool_gradient(&x, kind)?;
        // Probes may leave [0, 1]; the formulas are smooth there, so pool
        // without the range check.
        let numeric = central_difference(|v| Ok(pool_unchecked(v, kind)), &x, FD_STEP)?;
        for (a, n) in analytic.iter().zip(&numeric) {
            stats.record(*a, *n);
        }
    }
    Ok(stats.into_report(kind.to_string(), trials, seed))
}

fn pool_unchecked(x: &[f64], kind: PoolingKind) -> f64 {
    if x.iter().all(|v| (0.0..=1.0).contains(v)) {
        return pool_clip(x, kind).expect("valid sequence");
    }
    match kind {
        PoolingKind::LinearSoftmax => x.iter().map(|v| v * v).sum::<f64>() / x.iter().sum::<f64>(),
        PoolingKind::Mean => x.iter().sum::<f64>() / x.len() as f64,
        PoolingKind::Max => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Seeded random `size x size` kernel with weights in [-1, 1).
pub fn random_kernel(size: usize, seed: u64) -> Result<crate::subsample::ConvKernel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
    crate::subsample::ConvKernel::new(size, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|x| Ok(x[0] * x[0] + 3.0 * x[1]), &[2.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn examples_pass() {
        for kind in [
            SubsampleKind::Mm,
            SubsampleKind::lp(4.0).unwrap(),
            SubsampleKind::alpha_mm(0.5).unwrap(),
        ] {
            let report = check_subsample(&kind, 100, 7).unwrap();
            assert!(report.passed, "{report:?}");
        }
    }

    #[test]
    fn alpha_gradient_is_included() {
        let report = check_subsample(&SubsampleKind::alpha_mm(0.5).unwrap(), 10, 7).unwrap();
        // Each window contributes len input partials plus one for alpha.
        assert!(report.checked > 10 * 2);
        let mm = check_subsample(&SubsampleKind::Mm, 10, 7).unwrap();
        assert_eq!(report.checked, mm.checked + 10);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut stats = ErrorStats::default();
        stats.record(1.0, 1.01);
        let report = stats.into_report("x".into(), 1, 0);
        assert!(!report.passed);
        let mut stats = ErrorStats::default();
        stats.record(f64::NAN, 1.0);
        assert!(!stats.into_report("x".into(), 1, 0).passed);
    }

    #[test]
    fn same_seed_same_report() {
        let kind = SubsampleKind::Conv(random_kernel(3, 1).unwrap());
        assert_eq!(
            check_subsample(&kind, 20, 3).unwrap(),
            check_subsample(&kind, 20, 3).unwrap()
        );
    }
}
