//! Frame posteriors to binary activity masks.
//!
//! Two methods are provided. [`median_filter`] thresholds at `phi` and then
//! majority-votes over a centered window of `omega` frames. [`double_threshold`]
//! is a hysteresis decoder: frames above `phi_hi` seed a segment, which grows
//! through contiguous frames above `phi_low`; segments separated by fewer
//! than `omega` frames are then joined.
//!
//! All threshold comparisons are strict (`y > phi`).

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassMap, PosteriorClip, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianFilterParams {
    pub phi: f64,
    pub omega: usize,
}

impl MedianFilterParams {
    pub fn new(phi: f64, omega: usize) -> Result<Self> {
        let params = Self { phi, omega };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidParams(format!(
                "phi must lie in (0, 1), got {}",
                self.phi
            )));
        }
        if self.omega == 0 || self.omega.is_multiple_of(2) {
            return Err(Error::EvenWindow(self.omega));
        }
        Ok(())
    }
}

impl Default for MedianFilterParams {
    fn default() -> Self {
        Self { phi: 0.5, omega: 51 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleThresholdParams {
    pub phi_low: f64,
    pub phi_hi: f64,
    /// Segments separated by a gap of fewer than `omega` frames are joined.
    pub omega: usize,
}

impl DoubleThresholdParams {
    pub fn new(phi_low: f64, phi_hi: f64, omega: usize) -> Result<Self> {
        let params = Self { phi_low, phi_hi, omega };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_low > 0.0 && self.phi_low <= self.phi_hi && self.phi_hi < 1.0) {
            return Err(Error::InvalidParams(format!(
                "thresholds must satisfy 0 < phi_low <= phi_hi < 1, got phi_low={} phi_hi={}",
                self.phi_low, self.phi_hi
            )));
        }
        if self.omega == 0 {
            return Err(Error::InvalidParams("omega must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for DoubleThresholdParams {
    fn default() -> Self {
        Self {
            phi_low: 0.2,
            phi_hi: 0.75,
            omega: 1,
        }
    }
}

/// Post-processing method with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PostProcess {
    Median(MedianFilterParams),
    Double(DoubleThresholdParams),
}

impl PostProcess {
    pub fn validate(&self) -> Result<()> {
        match self {
            PostProcess::Median(p) => p.validate(),
            PostProcess::Double(p) => p.validate(),
        }
    }

    pub fn apply(&self, clip: &PosteriorClip) -> Result<BinaryMask> {
        match self {
            PostProcess::Median(p) => median_filter(clip, p),
            PostProcess::Double(p) => double_threshold(clip, p),
        }
    }
}

/// Frame-by-class activity of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub clip_id: String,
    pub mask: Array2<bool>,
    pub grid: TimeGrid,
    pub classes: ClassMap,
}

impl BinaryMask {
    pub fn num_frames(&self) -> usize {
        self.mask.nrows()
    }

    pub fn column(&self, class: usize) -> Vec<bool> {
        self.mask.column(class).to_vec()
    }
}

fn map_columns<F>(clip: &PosteriorClip, f: F) -> BinaryMask
where
    F: Fn(ArrayView1<'_, f64>) -> Vec<bool>,
{
    let mut mask = Array2::from_elem(clip.probs.dim(), false);
    for (c, column) in clip.probs.columns().into_iter().enumerate() {
        for (t, active) in f(column).into_iter().enumerate() {
            mask[[t, c]] = active;
        }
    }
    BinaryMask {
        clip_id: clip.clip_id.clone(),
        mask,
        grid: clip.grid,
        classes: clip.classes.clone(),
    }
}

/// Majority vote over a centered window truncated at the sequence edges.
/// A tie, possible only in truncated windows, keeps the frame's own value.
pub fn median_filter_sequence(active: &[bool], omega: usize) -> Vec<bool> {
    let half = omega / 2;
    let n = active.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &a in active {
        prefix.push(prefix.last().unwrap() + usize::from(a));
    }
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            let ones = prefix[hi] - prefix[lo];
            let len = hi - lo;
            match (2 * ones).cmp(&len) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => active[t],
            }
        })
        .collect()
}

pub fn median_filter(clip: &PosteriorClip, params: &MedianFilterParams) -> Result<BinaryMask> {
    params.validate()?;
    clip.validate()?;
    Ok(map_columns(clip, |col| {
        let active: Vec<bool> = col.iter().map(|&y| y > params.phi).collect();
        median_filter_sequence(&active, params.omega)
    }))
}

/// Hysteresis thresholding of one sequence, followed by gap bridging.
pub fn double_threshold_sequence(probs: &[f64], params: &DoubleThresholdParams) -> Vec<bool> {
    let n = probs.len();
    let mut out = vec![false; n];

    // Every maximal run above phi_low that holds a seed is kept whole.
    let mut t = 0;
    while t < n {
        if probs[t] > params.phi_low {
            let start = t;
            let mut seeded = false;
            while t < n && probs[t] > params.phi_low {
                seeded |= probs[t] > params.phi_hi;
                t += 1;
            }
            if seeded {
                out[start..t].fill(true);
            }
        } else {
            t += 1;
        }
    }

    bridge_gaps(&mut out, params.omega);
    out
}

/// Fills interior inactive runs shorter than `omega` frames.
fn bridge_gaps(active: &mut [bool], omega: usize) {
    if omega <= 1 {
        return;
    }
    let mut last_active: Option<usize> = None;
    for t in 0..active.len() {
        if active[t] {
            if let Some(prev) = last_active {
                let gap = t - prev - 1;
                if gap > 0 && gap < omega {
                    active[prev + 1..t].fill(true);
                }
            }
            last_active = Some(t);
        }
    }
}

pub fn double_threshold(clip: &PosteriorClip, params: &DoubleThresholdParams) -> Result<BinaryMask> {
    params.validate()?;
    clip.validate()?;
    Ok(map_columns(clip, |col| {
        double_threshold_sequence(&col.to_vec(), params)
    }))
}
