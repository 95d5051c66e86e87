//! Seeded synthetic corpora: ground-truth events plus flat-with-noise
//! posteriors.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`). Clip `i` uses the
//! generator seeded with `seed` through `SeedableRng::seed_from_u64` and
//! switched to stream `i`, so clips are independent of each other and of
//! the order in which they are generated.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DCASE2018_LONG_CLASSES;
use crate::postprocess::BinaryMask;
use crate::types::{ClassMap, Corpus, Event, EventList, PosteriorClip, TimeGrid, DCASE2018_CLASSES};

/// Tolerance used when deciding whether an event overlaps a frame.
const OVERLAP_EPSILON: f64 = 1e-9;

const MAX_EVENT_TRIES: usize = 100;
const MAX_CLIP_TRIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSynth {
    pub label: String,
    /// Event duration range in seconds.
    pub min_duration: f64,
    pub max_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub clip_length: f64,
    pub base_hop: f64,
    pub classes: Vec<ClassSynth>,
    /// Inclusive range of events per clip; each event picks a class
    /// uniformly.
    pub events_per_clip: [usize; 2],
    pub noise_sigma: f64,
    /// Noise is Gaussian truncated to `±noise_truncation * noise_sigma`
    /// before the posterior is clipped to [0, 1]. `None` disables the
    /// truncation.
    pub noise_truncation: Option<f64>,
    pub event_level: f64,
    pub floor_level: f64,
    /// Minimum number of inactive frames between two events of one class.
    pub min_gap_frames: usize,
    pub clip_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::dcase_like(0)
    }
}

impl SynthSpec {
    /// Ten DCASE2018 classes: short ones last 0.2-1.0 s, long ones 3-8 s.
    pub fn dcase_like(seed: u64) -> Self {
        let classes = DCASE2018_CLASSES
            .iter()
            .map(|label| {
                let (min_duration, max_duration) = if DCASE2018_LONG_CLASSES.contains(label) {
                    (3.0, 8.0)
                } else {
                    (0.2, 1.0)
                };
                ClassSynth {
                    label: label.to_string(),
                    min_duration,
                    max_duration,
                }
            })
            .collect();
        Self {
            seed,
            clip_length: 10.0,
            base_hop: crate::types::DEFAULT_BASE_HOP,
            classes,
            events_per_clip: [1, 4],
            noise_sigma: 0.15,
            noise_truncation: Some(2.0),
            event_level: 0.85,
            floor_level: 0.1,
            min_gap_frames: 2,
            clip_prefix: "synth_".into(),
        }
    }

    pub fn class_map(&self) -> Result<ClassMap> {
        ClassMap::new(self.classes.iter().map(|c| c.label.clone()))
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.base_hop, 1)
    }

    pub fn num_frames(&self) -> usize {
        (self.clip_length / self.base_hop).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSpec(msg));
        self.class_map()?;
        self.grid()?;
        if !(self.clip_length.is_finite() && self.clip_length > 0.0) || self.num_frames() == 0 {
            return invalid(format!(
                "clip length must cover at least one frame, got {}",
                self.clip_length
            ));
        }
        for c in &self.classes {
            if !(c.min_duration > 0.0 && c.min_duration <= c.max_duration && c.max_duration.is_finite()) {
                return invalid(format!(
                    "duration range of `{}` must satisfy 0 < min <= max, got [{}, {}]",
                    c.label, c.min_duration, c.max_duration
                ));
            }
        }
        let [lo, hi] = self.events_per_clip;
        if lo > hi {
            return invalid(format!("events per clip range [{lo}, {hi}] is empty"));
        }
        if !(0.0 <= self.floor_level && self.floor_level < self.event_level && self.event_level <= 1.0) {
            return invalid(format!(
                "levels must satisfy 0 <= floor < event <= 1, got floor={} event={}",
                self.floor_level, self.event_level
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return invalid(format!("noise sigma must be non-negative, got {}", self.noise_sigma));
        }
        if let Some(t) = self.noise_truncation {
            if !(t.is_finite() && t > 0.0) {
                return invalid(format!("noise truncation must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

/// Frame `t` is active for a class when `[t*hop, (t+1)*hop)` overlaps one
/// of its events by more than a rounding error.
pub fn events_to_mask(events: &EventList, grid: &TimeGrid, classes: &ClassMap, frames: usize) -> Result<BinaryMask> {
    let mut mask = Array2::from_elem((frames, classes.len()), false);
    let end = grid.frame_to_seconds(frames);
    for event in events {
        let c = classes
            .index_of(&event.label)
            .ok_or_else(|| Error::UnknownClass(event.label.clone()))?;
        if event.offset > end + OVERLAP_EPSILON {
            return Err(Error::EventOutsideGrid {
                label: event.label.clone(),
                onset: event.onset,
                offset: event.offset,
                frames,
                duration: end,
            });
        }
        let first = (event.onset / grid.hop()).floor() as usize;
        for t in first.saturating_sub(1)..frames {
            let start = grid.frame_to_seconds(t);
            if start >= event.offset - OVERLAP_EPSILON {
                break;
            }
            if grid.frame_to_seconds(t + 1) > event.onset + OVERLAP_EPSILON {
                mask[[t, c]] = true;
            }
        }
    }
    Ok(BinaryMask {
        clip_id: events.clip_id().to_string(),
        mask,
        grid: *grid,
        classes: classes.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub reference: Corpus,
    /// Sorted by clip id.
    pub posteriors: Vec<PosteriorClip>,
}

pub fn clip_rng(seed: u64, clip_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(clip_index);
    rng
}

/// Frame intervals `[start, end)` per class for one clip.
fn place_events(spec: &SynthSpec, frames: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize, usize)>> {
    let count = rng.random_range(spec.events_per_clip[0]..=spec.events_per_clip[1]);
    let mut placed: Vec<(usize, usize, usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        let class = rng.random_range(0..spec.classes.len());
        let range = &spec.classes[class];
        let seconds = if range.min_duration == range.max_duration {
            range.min_duration
        } else {
            rng.random_range(range.min_duration..=range.max_duration)
        };
        let len = ((seconds / spec.base_hop).round() as usize).max(1);
        if len > frames {
            return None;
        }
        let gap = spec.min_gap_frames;
        let slot = (0..MAX_EVENT_TRIES).find_map(|_| {
            let start = rng.random_range(0..=frames - len);
            let end = start + len;
            let clash = placed
                .iter()
                .any(|&(c, s, e)| c == class && start < e + gap && s < end + gap);
            (!clash).then_some((class, start, end))
        })?;
        placed.push(slot);
    }
    Some(placed)
}

fn generate_clip(
    spec: &SynthSpec,
    index: usize,
    classes: &ClassMap,
    grid: &TimeGrid,
) -> Result<(EventList, PosteriorClip)> {
    let frames = spec.num_frames();
    let clip_id = format!("{}{index:05}", spec.clip_prefix);
    let mut rng = clip_rng(spec.seed, index as u64);

    let placed = (0..MAX_CLIP_TRIES)
        .find_map(|_| place_events(spec, frames, &mut rng))
        .ok_or_else(|| {
            Error::InfeasibleSpec(format!(
                "could not place events for clip {clip_id} without same-class overlap after {MAX_CLIP_TRIES} attempts"
            ))
        })?;

    let events = placed
        .iter()
        .map(|&(c, s, e)| Event::new(classes.label(c), grid.frame_to_seconds(s), grid.frame_to_seconds(e)))
        .collect::<Result<Vec<_>>>()?;
    let events = EventList::new(clip_id.clone(), events);

    let mut active = Array2::from_elem((frames, classes.len()), false);
    for &(c, s, e) in &placed {
        for t in s..e {
            active[[t, c]] = true;
        }
    }

    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma checked"));
    let bound = spec.noise_truncation.map(|k| k * spec.noise_sigma);
    let mut probs = Array2::zeros((frames, classes.len()));
    for ((t, c), value) in probs.indexed_iter_mut() {
        let level = if active[[t, c]] {
            spec.event_level
        } else {
            spec.floor_level
        };
        let n = match &noise {
            None => 0.0,
            Some(dist) => loop {
                let n: f64 = dist.sample(&mut rng);
                if bound.is_none_or(|b| n.abs() <= b) {
                    break n;
                }
            },
        };
        *value = (level + n).clamp(0.0, 1.0);
    }

    let clip = PosteriorClip::new(clip_id, probs, *grid, classes.clone())?;
    Ok((events, clip))
}

pub fn generate(spec: &SynthSpec, n_clips: usize) -> Result<SynthCorpus> {
    if n_clips == 0 {
        return Err(Error::InvalidSpec("n_clips must be at least 1".into()));
    }
    spec.validate()?;
    let classes = spec.class_map()?;
    let grid = spec.grid()?;

    let mut reference = Corpus::new();
    let mut posteriors = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let (events, clip) = generate_clip(spec, i, &classes, &grid)?;
        reference.insert(events.clip_id().to_string(), events);
        posteriors.push(clip);
    }
    posteriors.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(SynthCorpus { reference, posteriors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::mask_to_events;

    fn noiseless(seed: u64) -> SynthSpec {
        SynthSpec {
            noise_sigma: 0.0,
            event_level: 1.0,
            floor_level: 0.0,
            ..SynthSpec::dcase_like(seed)
        }
    }

    #[test]
    fn mask_examples() {
        let classes = ClassMap::new(["Dog", "Cat"]).unwrap();
        let grid = TimeGrid::default();
        let empty = events_to_mask(&EventList::empty("e"), &grid, &classes, 10).unwrap();
        assert!(empty.mask.iter().all(|a| !a));

        let dog = EventList::new("d", vec![Event::new("Dog", 0.04, 0.10).unwrap()]);
        let m = events_to_mask(&dog, &grid, &classes, 10).unwrap();
        let active: Vec<usize> = (0..10).filter(|&t| m.mask[[t, 0]]).collect();
        assert_eq!(active, vec![2, 3, 4]);

        let whole = EventList::new("w", vec![Event::new("Cat", 0.0, 0.2).unwrap()]);
        let m = events_to_mask(&whole, &grid, &classes, 10).unwrap();
        assert!((0..10).all(|t| m.mask[[t, 1]] && !m.mask[[t, 0]]));
    }

    #[test]
    fn off_grid_events_cover_partial_frames() {
        let classes = ClassMap::new(["Dog"]).unwrap();
        let e = EventList::new("d", vec![Event::new("Dog", 0.03, 0.05).unwrap()]);
        let m = events_to_mask(&e, &TimeGrid::default(), &classes, 5).unwrap();
        assert_eq!(m.column(0), vec![false, true, true, false, false]);
    }

    #[test]
    fn mask_rejects_events_past_the_end() {
        let classes = ClassMap::new(["Dog"]).unwrap();
        let e = EventList::new("d", vec![Event::new("Dog", 0.1, 0.3).unwrap()]);
        assert!(matches!(
            events_to_mask(&e, &TimeGrid::default(), &classes, 10),
            Err(Error::EventOutsideGrid { .. })
        ));
        let e = EventList::new("d", vec![Event::new("Bird", 0.0, 0.1).unwrap()]);
        assert!(events_to_mask(&e, &TimeGrid::default(), &classes, 10).is_err());
    }

    #[test]
    fn noiseless_posteriors_equal_masks() {
        let spec = noiseless(3);
        let corpus = generate(&spec, 20).unwrap();
        for clip in &corpus.posteriors {
            let mask = events_to_mask(
                &corpus.reference[&clip.clip_id],
                &clip.grid,
                &clip.classes,
                clip.num_frames(),
            )
            .unwrap();
            let expected = mask.mask.mapv(|a| if a { 1.0 } else { 0.0 });
            assert_eq!(clip.probs, expected);
            assert_eq!(mask_to_events(&mask), corpus.reference[&clip.clip_id]);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SynthSpec::dcase_like(11);
        assert_eq!(generate(&spec, 8).unwrap(), generate(&spec, 8).unwrap());
        let other = SynthSpec::dcase_like(12);
        assert_ne!(generate(&spec, 8).unwrap(), generate(&other, 8).unwrap());
    }

    #[test]
    fn clips_do_not_depend_on_corpus_size() {
        let spec = SynthSpec::dcase_like(5);
        let small = generate(&spec, 3).unwrap();
        let large = generate(&spec, 10).unwrap();
        assert_eq!(small.posteriors[..], large.posteriors[..3]);
    }

    #[test]
    fn generated_values_and_events_are_valid() {
        let spec = SynthSpec::dcase_like(9);
        let corpus = generate(&spec, 30).unwrap();
        for clip in &corpus.posteriors {
            clip.validate().unwrap();
        }
        for list in corpus.reference.values() {
            let n = list.len();
            assert!((1..=4).contains(&n));
            for e in list {
                let range = spec.classes.iter().find(|c| c.label == e.label).unwrap();
                assert!(e.duration() >= range.min_duration - 0.011 && e.duration() <= range.max_duration + 0.011);
                assert!(e.offset <= spec.clip_length + 1e-9);
            }
        }
    }

    #[test]
    fn truncated_noise_stays_in_band() {
        let spec = SynthSpec::dcase_like(4);
        let corpus = generate(&spec, 5).unwrap();
        let band = 2.0 * spec.noise_sigma + 1e-12;
        for clip in &corpus.posteriors {
            let mask = events_to_mask(
                &corpus.reference[&clip.clip_id],
                &clip.grid,
                &clip.classes,
                clip.num_frames(),
            )
            .unwrap();
            for ((t, c), v) in clip.probs.indexed_iter() {
                let level = if mask.mask[[t, c]] {
                    spec.event_level
                } else {
                    spec.floor_level
                };
                assert!((v - level).abs() <= band);
            }
        }
    }

    #[test]
    fn infeasible_spec_is_reported() {
        let spec = SynthSpec {
            classes: vec![ClassSynth {
                label: "Dog".into(),
                min_duration: 6.0,
                max_duration: 6.0,
            }],
            events_per_clip: [2, 2],
            ..SynthSpec::dcase_like(1)
        };
        assert!(matches!(generate(&spec, 1), Err(Error::InfeasibleSpec(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = SynthSpec::dcase_like(1);
        spec.floor_level = 0.9;
        assert!(generate(&spec, 1).is_err());
        let mut spec = SynthSpec::dcase_like(1);
        spec.events_per_clip = [3, 1];
        assert!(generate(&spec, 1).is_err());
        assert!(generate(&SynthSpec::dcase_like(1), 0).is_err());
    }
}
