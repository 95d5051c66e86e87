//! Flag groups shared by several subcommands, and their merge with the
//! pipeline config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use sedkit::eval::{dcase2018_buckets, DCASE2018_LONG_CLASSES};
use sedkit::types::DCASE2018_CLASSES;
use sedkit::{
    Bucket, BucketMode, ClassMap, Corpus, DoubleThresholdParams, EvalParams, MedianFilterParams, PostProcess,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Median,
    Double,
}

/// Post-processing flags. Unset values fall back to the config file, then
/// to the method defaults (median: phi 0.5, omega 51; double: 0.2/0.75,
/// omega 1).
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostOptions {
    #[arg(long = "post", value_enum)]
    #[serde(rename = "method")]
    pub method: Option<Method>,
    /// Median filter threshold.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Median window (odd) or double-threshold connect window.
    #[arg(long)]
    pub omega: Option<usize>,
    #[arg(long)]
    pub phi_low: Option<f64>,
    #[arg(long)]
    pub phi_hi: Option<f64>,
}

impl PostOptions {
    pub fn or(self, fallback: PostOptions) -> PostOptions {
        PostOptions {
            method: self.method.or(fallback.method),
            phi: self.phi.or(fallback.phi),
            omega: self.omega.or(fallback.omega),
            phi_low: self.phi_low.or(fallback.phi_low),
            phi_hi: self.phi_hi.or(fallback.phi_hi),
        }
    }

    /// Builds and validates the method. Flags that do not belong to the
    /// chosen method are rejected rather than silently ignored.
    pub fn resolve(&self) -> Result<PostProcess> {
        let post = match self.method.unwrap_or(Method::Double) {
            Method::Median => {
                if self.phi_low.is_some() || self.phi_hi.is_some() {
                    bail!("--phi-low/--phi-hi apply to the double threshold only");
                }
                let d = MedianFilterParams::default();
                PostProcess::Median(MedianFilterParams {
                    phi: self.phi.unwrap_or(d.phi),
                    omega: self.omega.unwrap_or(d.omega),
                })
            }
            Method::Double => {
                if self.phi.is_some() {
                    bail!("--phi applies to the median filter only; use --phi-low/--phi-hi");
                }
                let d = DoubleThresholdParams::default();
                PostProcess::Double(DoubleThresholdParams {
                    phi_low: self.phi_low.unwrap_or(d.phi_low),
                    phi_hi: self.phi_hi.unwrap_or(d.phi_hi),
                    omega: self.omega.unwrap_or(d.omega),
                })
            }
        };
        post.validate()?;
        Ok(post)
    }
}

/// Bucket assignment given inline in a config file or as a path to a JSON
/// object mapping class label to `"short"` or `"long"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BucketSource {
    File(PathBuf),
    Inline(BTreeMap<String, Bucket>),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Onset collar in seconds [default: 0.2].
    #[arg(long)]
    pub t_collar: Option<f64>,
    /// Offset collar as a fraction of the reference duration [default: 0.2].
    #[arg(long)]
    pub offset_ratio: Option<f64>,
    /// JSON object mapping each class to "short" or "long".
    #[arg(long, value_name = "FILE", value_parser = parse_bucket_file)]
    pub buckets: Option<BucketSource>,
    /// Bucket clips instead of classes: a clip is long when its longest
    /// reference event lasts at least this many seconds.
    #[arg(long, value_name = "SECONDS", conflicts_with = "buckets")]
    pub by_clip_duration: Option<f64>,
    /// Comma-separated class list. Defaults to the DCASE 2018 classes when
    /// every label belongs to them, otherwise to the labels found.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
}

fn parse_bucket_file(s: &str) -> Result<BucketSource, String> {
    Ok(BucketSource::File(PathBuf::from(s)))
}

impl EvalOptions {
    pub fn or(self, fallback: EvalOptions) -> EvalOptions {
        EvalOptions {
            t_collar: self.t_collar.or(fallback.t_collar),
            offset_ratio: self.offset_ratio.or(fallback.offset_ratio),
            buckets: self.buckets.or(fallback.buckets),
            by_clip_duration: self.by_clip_duration.or(fallback.by_clip_duration),
            classes: self.classes.or(fallback.classes),
        }
    }

    /// Makes relative bucket paths relative to `base`.
    pub fn rebase(mut self, base: &Path) -> EvalOptions {
        if let Some(BucketSource::File(p)) = &self.buckets {
            self.buckets = Some(BucketSource::File(base.join(p)));
        }
        self
    }

    /// The class universe: the explicit list, or the DCASE 2018 set when it
    /// covers every label in `corpora`, or the sorted labels found.
    pub fn class_map(&self, corpora: &[&Corpus]) -> Result<ClassMap> {
        if let Some(labels) = &self.classes {
            return Ok(ClassMap::new(labels.iter().map(|l| l.trim()))?);
        }
        let mut labels: Vec<&str> = corpora
            .iter()
            .flat_map(|c| c.values())
            .flat_map(|list| list.iter().map(|e| e.label.as_str()))
            .collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.iter().all(|l| DCASE2018_CLASSES.contains(l)) {
            return Ok(ClassMap::dcase2018());
        }
        Ok(ClassMap::new(labels)?)
    }

    pub fn params(&self, classes: &ClassMap) -> Result<EvalParams> {
        let defaults = EvalParams::default();
        let buckets = match (&self.buckets, self.by_clip_duration) {
            (Some(_), Some(_)) => bail!("bucket map and clip-duration buckets are mutually exclusive"),
            (_, Some(threshold)) => Some(BucketMode::ByClipDuration { threshold }),
            (Some(BucketSource::Inline(map)), None) => Some(BucketMode::ByClass(map.clone())),
            (Some(BucketSource::File(path)), None) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let map = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                Some(BucketMode::ByClass(map))
            }
            (None, None) if is_dcase(classes) => Some(BucketMode::ByClass(dcase2018_buckets())),
            (None, None) => None,
        };
        let params = EvalParams {
            t_collar: self.t_collar.unwrap_or(defaults.t_collar),
            offset_ratio: self.offset_ratio.unwrap_or(defaults.offset_ratio),
            buckets,
        };
        params.validate(classes)?;
        Ok(params)
    }
}

fn is_dcase(classes: &ClassMap) -> bool {
    classes.len() == DCASE2018_CLASSES.len()
        && classes.labels().iter().all(|l| DCASE2018_CLASSES.contains(&l.as_str()))
        && DCASE2018_LONG_CLASSES.iter().all(|l| classes.contains(l))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_fallback() {
        let flags = PostOptions {
            omega: Some(3),
            ..Default::default()
        };
        let file = PostOptions {
            method: Some(Method::Median),
            omega: Some(51),
            phi: Some(0.4),
            ..Default::default()
        };
        let merged = flags.or(file);
        assert_eq!(
            merged.resolve().unwrap(),
            PostProcess::Median(MedianFilterParams { phi: 0.4, omega: 3 })
        );
    }

    #[test]
    fn crossed_thresholds_are_rejected() {
        let opts = PostOptions {
            method: Some(Method::Double),
            phi_low: Some(0.8),
            phi_hi: Some(0.3),
            ..Default::default()
        };
        assert!(opts.resolve().is_err());
    }

    #[test]
    fn foreign_flags_are_rejected() {
        let opts = PostOptions {
            method: Some(Method::Median),
            phi_hi: Some(0.7),
            ..Default::default()
        };
        assert!(opts.resolve().is_err());
    }
}
