//! Window subsampling operators over 2D `time x feature` maps, the mapping
//! between a total subsampling factor and its per-layer strides, and the
//! analytic gradients checked by [`crate::gradcheck`].

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_P: f64 = 4.0;

/// Factors with a layer sequence over four stride-2-or-1 layers.
pub const SUPPORTED_FACTORS: [u32; 5] = [1, 2, 4, 8, 16];

/// Square convolution kernel stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvKernel {
    size: usize,
    weights: Vec<f64>,
}

impl ConvKernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidKind("kernel side must be at least 1".into()));
        }
        if weights.len() != size * size {
            return Err(Error::InvalidKind(format!(
                "kernel of side {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidKind("kernel weights must be finite".into()));
        }
        Ok(Self { size, weights })
    }

    /// Every weight `1/K^2`.
    pub fn uniform(size: usize) -> Result<Self> {
        let n = size * size;
        Self::new(size, vec![1.0 / n as f64; n])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubsampleKind {
    Mean,
    Max,
    /// `mean(x) + max(x)`.
    Mm,
    /// `alpha * max(x) + (1 - alpha) * mean(x)`.
    AlphaMm {
        alpha: f64,
    },
    /// Power mean `(mean(x^p))^(1/p)`.
    Lp {
        p: f64,
    },
    /// Dot product of the kernel with the flattened window.
    Conv(ConvKernel),
}

impl SubsampleKind {
    pub fn alpha_mm(alpha: f64) -> Result<Self> {
        let kind = SubsampleKind::AlphaMm { alpha };
        kind.validate()?;
        Ok(kind)
    }

    pub fn lp(p: f64) -> Result<Self> {
        let kind = SubsampleKind::Lp { p };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SubsampleKind::AlphaMm { alpha } if !(0.0..=1.0).contains(alpha) => {
                Err(Error::InvalidKind(format!("alpha must lie in [0, 1], got {alpha}")))
            }
            SubsampleKind::Lp { p } if !(p.is_finite() && *p >= 1.0) => {
                Err(Error::InvalidKind(format!("p must be finite and at least 1, got {p}")))
            }
            SubsampleKind::Conv(kernel) => ConvKernel::new(kernel.size, kernel.weights.clone()).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Trainable parameters of the operator: `[alpha]`, `[p]`, the kernel
    /// weights, or nothing.
    pub fn params(&self) -> Vec<f64> {
        match self {
            SubsampleKind::AlphaMm { alpha } => vec![*alpha],
            SubsampleKind::Lp { p } => vec![*p],
            SubsampleKind::Conv(k) => k.weights.clone(),
            _ => Vec::new(),
        }
    }

    /// Same operator with its parameters replaced. `params` must have the
    /// length returned by [`SubsampleKind::params`]; no range checks.
    pub fn with_params(&self, params: &[f64]) -> Self {
        match self {
            SubsampleKind::AlphaMm { .. } => SubsampleKind::AlphaMm { alpha: params[0] },
            SubsampleKind::Lp { .. } => SubsampleKind::Lp { p: params[0] },
            SubsampleKind::Conv(k) => SubsampleKind::Conv(ConvKernel {
                size: k.size,
                weights: params.to_vec(),
            }),
            other => other.clone(),
        }
    }

    /// Required window length, if the operator fixes one.
    pub fn window_len(&self) -> Option<usize> {
        match self {
            SubsampleKind::Conv(k) => Some(k.size * k.size),
            _ => None,
        }
    }

    /// Whether the output is invariant to permuting the window.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, SubsampleKind::Conv(_))
    }
}

impl fmt::Display for SubsampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsampleKind::Mean => write!(f, "mean"),
            SubsampleKind::Max => write!(f, "max"),
            SubsampleKind::Mm => write!(f, "mm"),
            SubsampleKind::AlphaMm { alpha } => write!(f, "amm(alpha={alpha})"),
            SubsampleKind::Lp { p } => write!(f, "lp(p={p})"),
            SubsampleKind::Conv(k) => write!(f, "conv(k={})", k.size),
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate().skip(1) {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

fn integer_exponent(p: f64) -> Option<i32> {
    (p.fract() == 0.0 && p.abs() <= i32::MAX as f64).then_some(p as i32)
}

fn lp_value(x: &[f64], p: f64) -> Result<f64> {
    let m = match integer_exponent(p) {
        Some(k) => x.iter().map(|v| v.powi(k)).sum::<f64>() / x.len() as f64,
        None => {
            if x.iter().any(|v| *v < 0.0) {
                return Err(Error::NegativeLpInput);
            }
            x.iter().map(|v| v.powf(p)).sum::<f64>() / x.len() as f64
        }
    };
    // Odd integer powers of negative input can make the mean negative; take
    // the real root.
    Ok(if m < 0.0 { -(-m).powf(1.0 / p) } else { m.powf(1.0 / p) })
}

/// Forward pass without validating the operator's parameters.
pub(crate) fn evaluate(x: &[f64], kind: &SubsampleKind) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some(expected) = kind.window_len() {
        if x.len() != expected {
            return Err(Error::WindowSizeMismatch {
                expected,
                found: x.len(),
            });
        }
    }
    let value = match kind {
        SubsampleKind::Mean => mean(x),
        SubsampleKind::Max => x[argmax(x)],
        SubsampleKind::Mm => mean(x) + x[argmax(x)],
        SubsampleKind::AlphaMm { alpha } => alpha * x[argmax(x)] + (1.0 - alpha) * mean(x),
        SubsampleKind::Lp { p } => lp_value(x, *p)?,
        SubsampleKind::Conv(k) => k.weights.iter().zip(x).map(|(w, v)| w * v).sum(),
    };
    Ok(value)
}

/// Applies the operator to one flattened window.
pub fn subsample_window(x: &[f64], kind: &SubsampleKind) -> Result<f64> {
    kind.validate()?;
    evaluate(x, kind)
}

/// Analytic derivatives of [`subsample_window`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGradient {
    /// With respect to each window element.
    pub input: Vec<f64>,
    /// With respect to each entry of [`SubsampleKind::params`].
    pub params: Vec<f64>,
}

pub fn window_gradient(x: &[f64], kind: &SubsampleKind) -> Result<WindowGradient> {
    kind.validate()?;
    // Shape checks.
    evaluate(x, kind)?;
    let n = x.len() as f64;
    let one_hot = |scale: f64| {
        let mut g = vec![0.0; x.len()];
        g[argmax(x)] = scale;
        g
    };

    let grad = match kind {
        SubsampleKind::Mean => WindowGradient {
            input: vec![1.0 / n; x.len()],
            params: vec![],
        },
        SubsampleKind::Max => WindowGradient {
            input: one_hot(1.0),
            params: vec![],
        },
        SubsampleKind::Mm => {
            let mut input = one_hot(1.0);
            input.iter_mut().for_each(|g| *g += 1.0 / n);
            WindowGradient { input, params: vec![] }
        }
        SubsampleKind::AlphaMm { alpha } => {
            let mut input = one_hot(*alpha);
            input.iter_mut().for_each(|g| *g += (1.0 - alpha) / n);
            WindowGradient {
                input,
                params: vec![x[argmax(x)] - mean(x)],
            }
        }
        SubsampleKind::Lp { p } => lp_gradient(x, *p)?,
        SubsampleKind::Conv(k) => WindowGradient {
            input: k.weights.clone(),
            params: x.to_vec(),
        },
    };
    Ok(grad)
}

fn lp_gradient(x: &[f64], p: f64) -> Result<WindowGradient> {
    if x.iter().any(|v| *v < 0.0) {
        return Err(Error::GradientUndefined(
            "lp gradient requires non-negative input".into(),
        ));
    }
    let n = x.len() as f64;
    let m = x.iter().map(|v| v.powf(p)).sum::<f64>() / n;
    if m <= 0.0 {
        return Err(Error::GradientUndefined("lp of an all-zero window".into()));
    }
    let r = m.powf(1.0 / p);
    // d r / d x_i = r * x_i^(p-1) / (n * m)
    let input = x.iter().map(|v| r * v.powf(p - 1.0) / (n * m)).collect();
    // d m / d p = mean(x^p ln x), with 0 ln 0 = 0
    let dm_dp = x.iter().filter(|v| **v > 0.0).map(|v| v.powf(p) * v.ln()).sum::<f64>() / n;
    let dr_dp = r * (dm_dp / (p * m) - m.ln() / (p * p));
    Ok(WindowGradient {
        input,
        params: vec![dr_dp],
    })
}

/// Tiles `feature` into `time_stride x feat_stride` windows (stride equal to
/// window size) and reduces each one. Partial windows at the trailing edges
/// are reduced over the elements they actually contain. With both strides at
/// 1 the layer performs no subsampling and returns its input unchanged.
pub fn subsample_map(
    feature: &Array2<f64>,
    time_stride: usize,
    feat_stride: usize,
    kind: &SubsampleKind,
) -> Result<Array2<f64>> {
    kind.validate()?;
    let (rows, cols) = feature.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptySequence);
    }
    if time_stride == 0 || feat_stride == 0 {
        return Err(Error::InvalidKind("strides must be at least 1".into()));
    }
    if time_stride == 1 && feat_stride == 1 {
        return Ok(feature.clone());
    }

    let out_rows = rows.div_ceil(time_stride);
    let out_cols = cols.div_ceil(feat_stride);
    let mut out = Array2::zeros((out_rows, out_cols));
    let mut window = Vec::with_capacity(time_stride * feat_stride);
    for i in 0..out_rows {
        for j in 0..out_cols {
            window.clear();
            for r in i * time_stride..((i + 1) * time_stride).min(rows) {
                for c in j * feat_stride..((j + 1) * feat_stride).min(cols) {
                    window.push(feature[[r, c]]);
                }
            }
            out[[i, j]] = evaluate(&window, kind)?;
        }
    }
    Ok(out)
}

/// Total subsampling factor and its per-layer temporal strides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub factor: u32,
    pub layers: [u32; 4],
}

impl SubsampleConfig {
    pub fn new(factor: u32) -> Result<Self> {
        Ok(Self {
            factor,
            layers: factor_to_layers(factor)?,
        })
    }

    /// The five configurations for factors 1, 2, 4, 8 and 16.
    pub fn all() -> Vec<Self> {
        SUPPORTED_FACTORS
            .iter()
            .map(|&k| Self::new(k).expect("supported factor"))
            .collect()
    }
}

/// Unique non-increasing stride sequence over {1, 2} whose product is `k`.
pub fn factor_to_layers(k: u32) -> Result<[u32; 4]> {
    if !SUPPORTED_FACTORS.contains(&k) {
        return Err(Error::UnsupportedFactor(k));
    }
    let halvings = k.trailing_zeros() as usize;
    let mut layers = [1; 4];
    layers[..halvings].fill(2);
    Ok(layers)
}

/// Product of the layer strides, after checking each is 1 or 2 and the
/// sequence is non-increasing.
pub fn layers_to_factor(layers: [u32; 4]) -> Result<u32> {
    let valid = layers.iter().all(|s| *s == 1 || *s == 2) && layers.windows(2).all(|w| w[0] >= w[1]);
    if !valid {
        return Err(Error::InvalidLayers(layers));
    }
    Ok(layers.iter().product())
}

/// Runs the four subsampling layers of `config` in order, each halving the
/// feature dimension.
pub fn subsample_stack(feature: &Array2<f64>, config: &SubsampleConfig, kind: &SubsampleKind) -> Result<Array2<f64>> {
    let mut current = feature.clone();
    for &stride in &config.layers {
        current = subsample_map(&current, stride as usize, 2, kind)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    const WINDOW: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

    #[test]
    fn window_examples() {
        assert!((subsample_window(&WINDOW, &SubsampleKind::Mm).unwrap() - 1.3).abs() < 1e-12);
        assert_eq!(
            subsample_window(&WINDOW, &SubsampleKind::alpha_mm(1.0).unwrap()).unwrap(),
            0.8
        );
        let lp2 = subsample_window(&[3.0, 4.0], &SubsampleKind::lp(2.0).unwrap()).unwrap();
        assert!((lp2 - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            subsample_window(&[1.0, 2.0, 3.0, 4.0], &SubsampleKind::lp(1.0).unwrap()).unwrap(),
            2.5
        );
        let conv = SubsampleKind::Conv(ConvKernel::uniform(2).unwrap());
        assert!((subsample_window(&WINDOW, &conv).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn window_errors() {
        assert!(matches!(
            subsample_window(&[-0.5, 0.2], &SubsampleKind::lp(2.5).unwrap()),
            Err(Error::NegativeLpInput)
        ));
        let conv = SubsampleKind::Conv(ConvKernel::uniform(2).unwrap());
        assert!(matches!(
            subsample_window(&[1.0, 2.0], &conv),
            Err(Error::WindowSizeMismatch { expected: 4, found: 2 })
        ));
        assert!(subsample_window(&[], &SubsampleKind::Mm).is_err());
        assert!(SubsampleKind::alpha_mm(1.5).is_err());
        assert!(SubsampleKind::lp(0.5).is_err());
        assert!(ConvKernel::new(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn lp_integer_power_of_negative_input() {
        // Even p: (mean of x^2)^(1/2).
        let v = subsample_window(&[-3.0, 4.0], &SubsampleKind::lp(2.0).unwrap()).unwrap();
        assert!((v - 12.5f64.sqrt()).abs() < 1e-12);
        // Odd p with a negative mean takes the real root.
        let v = subsample_window(&[-2.0, 0.0], &SubsampleKind::lp(3.0).unwrap()).unwrap();
        assert!((v + 4.0f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn map_examples() {
        let m = array![
            [1.0, 5.0, 2.0, 0.0],
            [3.0, 4.0, 9.0, 1.0],
            [0.0, 0.0, 1.0, 1.0],
            [7.0, 0.0, 1.0, 2.0]
        ];
        let out = subsample_map(&m, 2, 2, &SubsampleKind::Max).unwrap();
        assert_eq!(out, array![[5.0, 9.0], [7.0, 2.0]]);

        let out = subsample_map(&array![[1.0, 2.0], [3.0, 4.0]], 2, 2, &SubsampleKind::Mm).unwrap();
        assert_eq!(out, array![[6.5]]);

        for kind in [SubsampleKind::Mm, SubsampleKind::lp(4.0).unwrap()] {
            assert_eq!(subsample_map(&m, 1, 1, &kind).unwrap(), m);
        }
    }

    #[test]
    fn map_ragged_edges_use_partial_windows() {
        let m = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        let out = subsample_map(&m, 2, 2, &SubsampleKind::Mean).unwrap();
        assert_eq!(out.dim(), (2, 2));
        assert_eq!(out, array![[3.0, 4.5], [7.5, 9.0]]);
    }

    #[test]
    fn stack_output_shape_follows_config() {
        let feature = Array2::from_elem((499, 64), 0.5);
        for config in SubsampleConfig::all() {
            let out = subsample_stack(&feature, &config, &SubsampleKind::Mean).unwrap();
            assert_eq!(out.nrows(), 499usize.div_ceil(config.factor as usize));
            assert_eq!(out.ncols(), 4);
        }
    }

    #[test]
    fn factor_map_examples() {
        assert_eq!(factor_to_layers(1).unwrap(), [1, 1, 1, 1]);
        assert_eq!(factor_to_layers(16).unwrap(), [2, 2, 2, 2]);
        assert_eq!(factor_to_layers(4).unwrap(), [2, 2, 1, 1]);
        assert!(matches!(factor_to_layers(3), Err(Error::UnsupportedFactor(3))));
        assert!(factor_to_layers(32).is_err());
        assert_eq!(layers_to_factor([2, 2, 2, 1]).unwrap(), 8);
        assert!(layers_to_factor([1, 2, 1, 1]).is_err());
        assert!(layers_to_factor([3, 1, 1, 1]).is_err());
    }

    #[test]
    fn factor_map_round_trips() {
        for k in SUPPORTED_FACTORS {
            assert_eq!(layers_to_factor(factor_to_layers(k).unwrap()).unwrap(), k);
        }
    }

    #[test]
    fn analytic_gradients_small_cases() {
        let g = window_gradient(&WINDOW, &SubsampleKind::Mm).unwrap();
        assert_eq!(g.input, vec![0.25, 0.25, 0.25, 1.25]);
        let g = window_gradient(&WINDOW, &SubsampleKind::alpha_mm(0.5).unwrap()).unwrap();
        assert!((g.params[0] - 0.3).abs() < 1e-12);
        let g = window_gradient(&[2.0, 2.0], &SubsampleKind::lp(3.0).unwrap()).unwrap();
        // Constant window: r = 2 for all p, so d/dp = 0 and d/dx_i = 1/2.
        assert!(g.params[0].abs() < 1e-12);
        assert!(g.input.iter().all(|v| (v - 0.5).abs() < 1e-12));
        assert!(window_gradient(&[0.0, 0.0], &SubsampleKind::lp(2.0).unwrap()).is_err());
    }

    fn window() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..12)
    }

    proptest! {
        #[test]
        fn lp_is_monotone_in_p(x in window(), p in 1.0f64..16.0, dp in 0.0f64..8.0) {
            let lo = subsample_window(&x, &SubsampleKind::lp(p).unwrap()).unwrap();
            let hi = subsample_window(&x, &SubsampleKind::lp(p + dp).unwrap()).unwrap();
            prop_assert!(lo <= hi + 1e-12, "{lo} > {hi}");
        }

        #[test]
        fn lp_is_bracketed_by_mean_and_max(x in window(), p in 1.0f64..64.0) {
            let v = subsample_window(&x, &SubsampleKind::lp(p).unwrap()).unwrap();
            let max = subsample_window(&x, &SubsampleKind::Max).unwrap();
            let mean = subsample_window(&x, &SubsampleKind::Mean).unwrap();
            prop_assert!(mean - 1e-12 <= v && v <= max + 1e-12);
            // Power mean lower bound: max * n^(-1/p).
            prop_assert!(v >= max * (x.len() as f64).powf(-1.0 / p) - 1e-12);
        }

        #[test]
        fn alpha_endpoints_are_exact(x in window()) {
            let mean = subsample_window(&x, &SubsampleKind::Mean).unwrap();
            let max = subsample_window(&x, &SubsampleKind::Max).unwrap();
            prop_assert_eq!(subsample_window(&x, &SubsampleKind::alpha_mm(0.0).unwrap()).unwrap(), mean);
            prop_assert_eq!(subsample_window(&x, &SubsampleKind::alpha_mm(1.0).unwrap()).unwrap(), max);
            prop_assert_eq!(subsample_window(&x, &SubsampleKind::lp(1.0).unwrap()).unwrap(), mean);
        }

        #[test]
        fn symmetric_kinds_ignore_window_order(mut x in window(), alpha in 0.0f64..=1.0, p in 1.0f64..8.0) {
            let kinds = [
                SubsampleKind::Mm,
                SubsampleKind::alpha_mm(alpha).unwrap(),
                SubsampleKind::lp(p).unwrap(),
            ];
            let before: Vec<f64> = kinds.iter().map(|k| subsample_window(&x, k).unwrap()).collect();
            x.reverse();
            let mid = x.len() / 2;
            x.rotate_left(mid);
            for (k, b) in kinds.iter().zip(before) {
                let after = subsample_window(&x, k).unwrap();
                prop_assert!((after - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn conv_depends_on_order() {
        let conv = SubsampleKind::Conv(ConvKernel::new(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(!conv.is_symmetric());
        assert_ne!(
            subsample_window(&[1.0, 2.0, 3.0, 4.0], &conv).unwrap(),
            subsample_window(&[4.0, 3.0, 2.0, 1.0], &conv).unwrap()
        );
    }
}
