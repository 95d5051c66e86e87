//! Temporal pooling: frame probabilities of one class reduced to a single
//! clip-level probability.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::PosteriorClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingKind {
    /// `sum(y^2) / sum(y)`: each frame weighted by its own probability.
    LinearSoftmax,
    Mean,
    Max,
}

impl fmt::Display for PoolingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingKind::LinearSoftmax => "ls",
            PoolingKind::Mean => "mean",
            PoolingKind::Max => "max",
        })
    }
}

impl FromStr for PoolingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ls" | "linear_softmax" | "linear-softmax" => Ok(PoolingKind::LinearSoftmax),
            "mean" => Ok(PoolingKind::Mean),
            "max" => Ok(PoolingKind::Max),
            other => Err(format!("unknown pooling kind `{other}` (expected ls, mean or max)")),
        }
    }
}

fn check_sequence(sequence: &[f64]) -> Result<()> {
    if sequence.is_empty() {
        return Err(Error::EmptySequence);
    }
    if let Some((frame, &value)) = sequence.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::ProbabilityOutOfRange { frame, class: 0, value });
    }
    Ok(())
}

fn argmax(sequence: &[f64]) -> usize {
    sequence
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

/// Pools one class sequence. An all-zero sequence pools to 0 under linear
/// softmax.
pub fn pool_clip(sequence: &[f64], kind: PoolingKind) -> Result<f64> {
    check_sequence(sequence)?;
    let value = match kind {
        PoolingKind::LinearSoftmax => {
            let sum: f64 = sequence.iter().sum();
            if sum == 0.0 {
                0.0
            } else {
                sequence.iter().map(|y| y * y).sum::<f64>() / sum
            }
        }
        PoolingKind::Mean => sequence.iter().sum::<f64>() / sequence.len() as f64,
        PoolingKind::Max => sequence[argmax(sequence)],
    };
    Ok(value)
}

/// Partial derivatives of [`pool_clip`] with respect to each frame.
///
/// Max pooling routes the whole gradient to the first maximal frame.
pub fn pool_gradient(sequence: &[f64], kind: PoolingKind) -> Result<Vec<f64>> {
    check_sequence(sequence)?;
    let n = sequence.len();
    let grad = match kind {
        PoolingKind::LinearSoftmax => {
            let sum: f64 = sequence.iter().sum();
            if sum <= 0.0 {
                return Err(Error::GradientUndefined(
                    "linear softmax of an all-zero sequence".into(),
                ));
            }
            let sum_sq: f64 = sequence.iter().map(|y| y * y).sum();
            let denom = sum * sum;
            sequence.iter().map(|y| (2.0 * y * sum - sum_sq) / denom).collect()
        }
        PoolingKind::Mean => vec![1.0 / n as f64; n],
        PoolingKind::Max => {
            let mut g = vec![0.0; n];
            g[argmax(sequence)] = 1.0;
            g
        }
    };
    Ok(grad)
}

/// Pools every class column of a clip, in class-map order.
pub fn pool_columns(clip: &PosteriorClip, kind: PoolingKind) -> Result<Vec<f64>> {
    clip.probs
        .columns()
        .into_iter()
        .map(|col| pool_clip(&col.to_vec(), kind))
        .collect()
}
