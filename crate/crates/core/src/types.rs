//! Domain types shared by every stage of the pipeline: class maps, time
//! grids, frame posteriors and event lists.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame step of the front end at subsampling factor 1, in seconds.
pub const DEFAULT_BASE_HOP: f64 = 0.020;

/// The ten DCASE2018 task 4 event classes, in the order used by the
/// challenge metadata.
pub const DCASE2018_CLASSES: [&str; 10] = [
    "Alarm_bell_ringing",
    "Blender",
    "Cat",
    "Dishes",
    "Dog",
    "Electric_shaver_toothbrush",
    "Frying",
    "Running_water",
    "Speech",
    "Vacuum_cleaner",
];

/// Ordered set of class labels; column `i` of a posterior matrix belongs to
/// `labels()[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassMap {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyClassMap);
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(Error::EmptyLabel);
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn dcase2018() -> Self {
        Self::new(DCASE2018_CLASSES).expect("static class list is valid")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

impl Serialize for ClassMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.labels.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClassMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(deserializer)?;
        ClassMap::new(labels).map_err(serde::de::Error::custom)
    }
}

/// Frame timing of a posterior sequence. The effective hop is
/// `base_hop * factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    base_hop: f64,
    factor: u32,
}

impl TimeGrid {
    pub fn new(base_hop: f64, factor: u32) -> Result<Self> {
        if !(base_hop.is_finite() && base_hop > 0.0) {
            return Err(Error::InvalidGrid(format!("base hop must be positive, got {base_hop}")));
        }
        if factor == 0 {
            return Err(Error::InvalidGrid("factor must be at least 1".into()));
        }
        Ok(Self { base_hop, factor })
    }

    /// 20 ms grid scaled by `factor`.
    pub fn with_factor(factor: u32) -> Result<Self> {
        Self::new(DEFAULT_BASE_HOP, factor)
    }

    pub fn base_hop(&self) -> f64 {
        self.base_hop
    }

    pub fn factor(&self) -> u32 {
        self.factor
    }

    /// Seconds covered by one frame.
    pub fn hop(&self) -> f64 {
        self.base_hop * f64::from(self.factor)
    }

    /// Start time of frame `index`.
    pub fn frame_to_seconds(&self, index: usize) -> f64 {
        index as f64 * self.hop()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            base_hop: DEFAULT_BASE_HOP,
            factor: 1,
        }
    }
}

pub fn frame_to_seconds(index: usize, grid: &TimeGrid) -> f64 {
    grid.frame_to_seconds(index)
}

/// Frame-level class probabilities of one clip, `probs[[t, c]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorClip {
    pub clip_id: String,
    pub probs: Array2<f64>,
    pub grid: TimeGrid,
    pub classes: ClassMap,
}

impl PosteriorClip {
    pub fn new(clip_id: impl Into<String>, probs: Array2<f64>, grid: TimeGrid, classes: ClassMap) -> Result<Self> {
        let clip = Self {
            clip_id: clip_id.into(),
            probs,
            grid,
            classes,
        };
        clip.validate()?;
        Ok(clip)
    }

    /// Checks the clip invariants and reports the first violation.
    pub fn validate(&self) -> Result<()> {
        let (frames, cols) = self.probs.dim();
        if frames == 0 || cols == 0 {
            return Err(Error::EmptyClip);
        }
        if cols != self.classes.len() {
            return Err(Error::ClassDimensionMismatch {
                expected: self.classes.len(),
                found: cols,
            });
        }
        for ((frame, class), &value) in self.probs.indexed_iter() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ProbabilityOutOfRange { frame, class, value });
            }
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    /// Clip length in seconds.
    pub fn duration(&self) -> f64 {
        self.grid.frame_to_seconds(self.num_frames())
    }
}

pub fn validate_clip(clip: &PosteriorClip) -> Result<()> {
    clip.validate()
}

/// A labelled time interval `[onset, offset)` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub label: String,
    pub onset: f64,
    pub offset: f64,
}

impl Event {
    pub fn new(label: impl Into<String>, onset: f64, offset: f64) -> Result<Self> {
        let label = label.into();
        if !(onset.is_finite() && offset.is_finite() && onset >= 0.0 && onset < offset) {
            return Err(Error::InvalidEvent { label, onset, offset });
        }
        Ok(Self { label, onset, offset })
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Events of one clip, sorted by `(onset, label)`. Same-class events that
/// touch or overlap are merged on construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventList {
    clip_id: String,
    events: Vec<Event>,
}

impl EventList {
    pub fn new(clip_id: impl Into<String>, events: Vec<Event>) -> Self {
        let mut by_class: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for event in events {
            by_class.entry(event.label.clone()).or_default().push(event);
        }

        let mut merged = Vec::new();
        for (_, mut group) in by_class {
            group.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.offset.total_cmp(&b.offset)));
            let mut iter = group.into_iter();
            let Some(mut current) = iter.next() else { continue };
            for event in iter {
                if event.onset <= current.offset {
                    current.offset = current.offset.max(event.offset);
                } else {
                    merged.push(std::mem::replace(&mut current, event));
                }
            }
            merged.push(current);
        }
        merged.sort_by(|a, b| a.onset.total_cmp(&b.onset).then_with(|| a.label.cmp(&b.label)));

        Self {
            clip_id: clip_id.into(),
            events: merged,
        }
    }

    pub fn empty(clip_id: impl Into<String>) -> Self {
        Self {
            clip_id: clip_id.into(),
            events: Vec::new(),
        }
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// Events of one class in onset order.
    pub fn of_class<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.label == label)
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

impl<'a> IntoIterator for &'a EventList {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

/// Event lists of many clips keyed by clip id.
pub type Corpus = BTreeMap<String, EventList>;
