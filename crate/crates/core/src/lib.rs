//! Inference-side toolkit for weakly supervised sound event detection.
//!
//! The crate covers the path from frame-level class posteriors to scored
//! events:
//!
//! * [`pooling`]: clip-level pooling (linear softmax, mean, max) with gradients.
//! * [`subsample`]: window subsampling operators (mean-max, alpha mean-max,
//!   power mean, strided convolution) and the factor to layer-stride map.
//! * [`gradcheck`]: finite-difference verification of those gradients.
//! * [`postprocess`]: median filtering and double thresholding.
//! * [`decode`]: masks to events, and fusion of several models' posteriors.
//! * [`eval`]: event-based F1 with onset/offset collars and duration buckets.
//! * [`synth`]: seeded synthetic corpora.
//! * [`io`]: posterior and annotation file formats.

pub mod decode;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod pooling;
pub mod postprocess;
pub mod subsample;
pub mod synth;
pub mod types;

pub use decode::{fuse, mask_to_events};
pub use error::{Error, Result};
pub use eval::{match_events, score, Bucket, BucketMode, ClassScore, Counts, EvalParams, EvalReport};
pub use gradcheck::GradCheckReport;
pub use pooling::{pool_clip, pool_gradient, PoolingKind};
pub use postprocess::{
    double_threshold, median_filter, BinaryMask, DoubleThresholdParams, MedianFilterParams, PostProcess,
};
pub use subsample::{factor_to_layers, subsample_map, subsample_window, ConvKernel, SubsampleConfig, SubsampleKind};
pub use synth::{events_to_mask, generate, SynthCorpus, SynthSpec};
pub use types::{frame_to_seconds, validate_clip, ClassMap, Corpus, Event, EventList, PosteriorClip, TimeGrid};
