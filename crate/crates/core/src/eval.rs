//! Event-based precision, recall and F1 with an onset collar and a
//! duration-relative offset collar, plus short/long duration buckets.
//!
//! A predicted event matches a reference event of the same class when
//!
//! * `|onset_p - onset_r| <= t_collar`, and
//! * `|offset_p - offset_r| <= max(t_collar, offset_ratio * duration_r)`.
//!
//! Matching is one-to-one and greedy: references in onset order each take
//! the first compatible unmatched prediction in onset order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{ClassMap, Corpus, Event, EventList, DCASE2018_CLASSES};

/// Slack on collar comparisons so that decimal time stamps sitting exactly on
/// a collar boundary are not rejected by binary rounding.
pub const COLLAR_EPSILON: f64 = 1e-9;

/// Long-duration DCASE2018 classes; the other five are short.
pub const DCASE2018_LONG_CLASSES: [&str; 5] = [
    "Vacuum_cleaner",
    "Running_water",
    "Frying",
    "Electric_shaver_toothbrush",
    "Blender",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Short,
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketMode {
    /// Every class is assigned to one bucket.
    ByClass(BTreeMap<String, Bucket>),
    /// A clip is long when its longest reference event lasts at least
    /// `threshold` seconds; scores are computed separately on each group of
    /// clips.
    ByClipDuration { threshold: f64 },
}

pub fn dcase2018_buckets() -> BTreeMap<String, Bucket> {
    DCASE2018_CLASSES
        .iter()
        .map(|c| {
            let bucket = if DCASE2018_LONG_CLASSES.contains(c) {
                Bucket::Long
            } else {
                Bucket::Short
            };
            (c.to_string(), bucket)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub t_collar: f64,
    pub offset_ratio: f64,
    pub buckets: Option<BucketMode>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            t_collar: 0.200,
            offset_ratio: 0.20,
            buckets: Some(BucketMode::ByClass(dcase2018_buckets())),
        }
    }
}

impl EvalParams {
    pub fn validate(&self, classes: &ClassMap) -> Result<()> {
        if !(self.t_collar.is_finite() && self.t_collar > 0.0) {
            return Err(Error::InvalidEvalParams(format!(
                "t_collar must be positive, got {}",
                self.t_collar
            )));
        }
        if !(self.offset_ratio > 0.0 && self.offset_ratio <= 1.0) {
            return Err(Error::InvalidEvalParams(format!(
                "offset_ratio must lie in (0, 1], got {}",
                self.offset_ratio
            )));
        }
        match &self.buckets {
            Some(BucketMode::ByClass(map)) => {
                if let Some(missing) = classes.labels().iter().find(|l| !map.contains_key(*l)) {
                    return Err(Error::MissingBucket(missing.clone()));
                }
            }
            Some(BucketMode::ByClipDuration { threshold }) if !(threshold.is_finite() && *threshold > 0.0) => {
                return Err(Error::InvalidEvalParams(format!(
                    "clip duration threshold must be positive, got {threshold}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn offset_tolerance(&self, reference: &Event) -> f64 {
        self.t_collar.max(self.offset_ratio * reference.duration())
    }

    pub fn is_match(&self, reference: &Event, predicted: &Event) -> bool {
        reference.label == predicted.label
            && (predicted.onset - reference.onset).abs() <= self.t_collar + COLLAR_EPSILON
            && (predicted.offset - reference.offset).abs() <= self.offset_tolerance(reference) + COLLAR_EPSILON
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one matching of one clip, per class.
pub fn match_events(reference: &EventList, predicted: &EventList, params: &EvalParams) -> BTreeMap<String, Counts> {
    let mut labels: Vec<&str> = reference.iter().chain(predicted).map(|e| e.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();

    labels
        .into_iter()
        .map(|label| {
            let refs: Vec<&Event> = reference.of_class(label).collect();
            let preds: Vec<&Event> = predicted.of_class(label).collect();
            let mut taken = vec![false; preds.len()];
            let mut tp = 0;
            for r in &refs {
                if let Some(j) = (0..preds.len()).find(|&j| !taken[j] && params.is_match(r, preds[j])) {
                    taken[j] = true;
                    tp += 1;
                }
            }
            let counts = Counts {
                tp,
                fp: preds.len() - tp,
                fn_: refs.len() - tp,
            };
            (label.to_string(), counts)
        })
        .collect()
}

fn round4<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    serializer.serialize_f64((value * 1e4).round() / 1e4)
}

fn round4_opt<S: Serializer>(value: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => round4(v, serializer),
        None => serializer.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(serialize_with = "round4")]
    pub precision: f64,
    #[serde(serialize_with = "round4")]
    pub recall: f64,
    #[serde(serialize_with = "round4")]
    pub f1: f64,
}

impl From<Counts> for ClassScore {
    fn from(c: Counts) -> Self {
        Self {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        }
    }
}

/// Scores of a corpus. Classes without any reference or predicted event
/// carry zero scores but are left out of every average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, ClassScore>,
    #[serde(serialize_with = "round4")]
    pub macro_f1: f64,
    /// Classes that entered the macro average.
    pub evaluated_classes: usize,
    #[serde(serialize_with = "round4_opt")]
    pub short_f1: Option<f64>,
    #[serde(serialize_with = "round4_opt")]
    pub long_f1: Option<f64>,
    #[serde(serialize_with = "round4_opt")]
    pub gap: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.per_class.keys().map(String::len).max().unwrap_or(5).max(5);
        let mut out = String::new();
        writeln!(
            out,
            "{:<width$}  {:>5}  {:>5}  {:>5}  {:>9}  {:>7}  {:>7}",
            "class", "tp", "fp", "fn", "precision", "recall", "f1"
        )
        .unwrap();
        for (label, s) in &self.per_class {
            writeln!(
                out,
                "{label:<width$}  {:>5}  {:>5}  {:>5}  {:>9.4}  {:>7.4}  {:>7.4}",
                s.tp, s.fp, s.fn_, s.precision, s.recall, s.f1
            )
            .unwrap();
        }
        writeln!(
            out,
            "macro F1: {:.4} ({} classes)",
            self.macro_f1, self.evaluated_classes
        )
        .unwrap();
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(
            out,
            "short F1: {}  long F1: {}  gap: {}",
            show(self.short_f1),
            show(self.long_f1),
            show(self.gap)
        )
        .unwrap();
        out
    }
}

fn check_labels(corpus: &Corpus, classes: &ClassMap) -> Result<()> {
    for list in corpus.values() {
        if let Some(e) = list.iter().find(|e| !classes.contains(&e.label)) {
            return Err(Error::UnknownClass(e.label.clone()));
        }
    }
    Ok(())
}

fn macro_average<'a>(counts: impl Iterator<Item = &'a Counts>) -> Option<f64> {
    let f1s: Vec<f64> = counts.filter(|c| !c.is_empty()).map(Counts::f1).collect();
    (!f1s.is_empty()).then(|| f1s.iter().sum::<f64>() / f1s.len() as f64)
}

/// Accumulates per-class counts over the clips selected by `keep`. Clips
/// only in `predicted` contribute false positives; clips only in
/// `reference` contribute false negatives.
fn accumulate<F>(
    reference: &Corpus,
    predicted: &Corpus,
    classes: &ClassMap,
    params: &EvalParams,
    keep: F,
) -> BTreeMap<String, Counts>
where
    F: Fn(&str) -> bool,
{
    let mut totals: BTreeMap<String, Counts> = classes
        .labels()
        .iter()
        .map(|l| (l.clone(), Counts::default()))
        .collect();
    let mut ids: Vec<&String> = reference.keys().chain(predicted.keys()).collect();
    ids.sort_unstable();
    ids.dedup();
    for id in ids.into_iter().filter(|id| keep(id)) {
        let empty = EventList::empty(id.as_str());
        let r = reference.get(id).unwrap_or(&empty);
        let p = predicted.get(id).unwrap_or(&empty);
        for (label, counts) in match_events(r, p, params) {
            totals.get_mut(&label).expect("labels checked").add(counts);
        }
    }
    totals
}

pub fn score(reference: &Corpus, predicted: &Corpus, classes: &ClassMap, params: &EvalParams) -> Result<EvalReport> {
    params.validate(classes)?;
    check_labels(reference, classes)?;
    check_labels(predicted, classes)?;

    let totals = accumulate(reference, predicted, classes, params, |_| true);
    let evaluated_classes = totals.values().filter(|c| !c.is_empty()).count();
    let macro_f1 = macro_average(totals.values()).unwrap_or(0.0);

    let (short_f1, long_f1) = match &params.buckets {
        None => (None, None),
        Some(BucketMode::ByClass(map)) => {
            let in_bucket =
                |b: Bucket| macro_average(totals.iter().filter(|(l, _)| map.get(*l) == Some(&b)).map(|(_, c)| c));
            (in_bucket(Bucket::Short), in_bucket(Bucket::Long))
        }
        Some(BucketMode::ByClipDuration { threshold }) => {
            let is_long = |id: &str| {
                reference
                    .get(id)
                    .map(|l| l.iter().any(|e| e.duration() >= *threshold))
                    .unwrap_or(false)
            };
            let short = accumulate(reference, predicted, classes, params, |id| !is_long(id));
            let long = accumulate(reference, predicted, classes, params, is_long);
            (macro_average(short.values()), macro_average(long.values()))
        }
    };
    let gap = short_f1.zip(long_f1).map(|(s, l)| (l - s).abs());

    Ok(EvalReport {
        per_class: totals.into_iter().map(|(l, c)| (l, c.into())).collect(),
        macro_f1,
        evaluated_classes,
        short_f1,
        long_f1,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(label: &str, on: f64, off: f64) -> Event {
        Event::new(label, on, off).unwrap()
    }

    fn list(events: Vec<Event>) -> EventList {
        EventList::new("clip", events)
    }

    fn counts(r: Vec<Event>, p: Vec<Event>) -> BTreeMap<String, Counts> {
        match_events(&list(r), &list(p), &EvalParams::default())
    }

    #[test]
    fn collar_examples() {
        let c = counts(vec![ev("Dog", 1.0, 2.0)], vec![ev("Dog", 1.1, 2.05)]);
        assert_eq!(c["Dog"], Counts { tp: 1, fp: 0, fn_: 0 });

        let c = counts(vec![ev("Dog", 1.0, 2.0)], vec![ev("Dog", 1.0, 2.0)]);
        assert_eq!(c["Dog"], Counts { tp: 1, fp: 0, fn_: 0 });

        let c = counts(vec![ev("Dog", 1.0, 2.0)], vec![ev("Cat", 1.0, 2.0)]);
        assert_eq!(c["Dog"], Counts { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(c["Cat"], Counts { tp: 0, fp: 1, fn_: 0 });

        let c = counts(vec![ev("Blender", 0.0, 10.0)], vec![ev("Blender", 0.1, 8.5)]);
        assert_eq!(c["Blender"].tp, 1);
    }

    #[test]
    fn collar_rejections() {
        let c = counts(vec![ev("Dog", 1.0, 2.0)], vec![ev("Dog", 1.25, 2.0)]);
        assert_eq!(c["Dog"].tp, 0);
        // Short reference: offset tolerance is the 200 ms floor.
        let c = counts(vec![ev("Dog", 1.0, 1.3)], vec![ev("Dog", 1.0, 1.55)]);
        assert_eq!(c["Dog"].tp, 0);
        let c = counts(vec![ev("Dog", 1.0, 1.3)], vec![ev("Dog", 1.0, 1.5)]);
        assert_eq!(c["Dog"].tp, 1);
    }

    #[test]
    fn collar_boundary_from_decimal_input() {
        // 2.2 - 2.0 is slightly above 0.2 in binary.
        let c = counts(vec![ev("Dog", 2.0, 3.0)], vec![ev("Dog", 2.2, 3.0)]);
        assert_eq!(c["Dog"].tp, 1);
    }

    #[test]
    fn one_prediction_matches_once() {
        let c = counts(
            vec![ev("Dog", 1.0, 1.1), ev("Dog", 1.15, 1.25)],
            vec![ev("Dog", 1.05, 1.2)],
        );
        assert_eq!(c["Dog"], Counts { tp: 1, fp: 0, fn_: 1 });
    }

    fn corpus(lists: Vec<(&str, Vec<Event>)>) -> Corpus {
        lists
            .into_iter()
            .map(|(id, e)| (id.to_string(), EventList::new(id, e)))
            .collect()
    }

    fn two_classes() -> ClassMap {
        ClassMap::new(["Dog", "Cat"]).unwrap()
    }

    fn no_buckets() -> EvalParams {
        EvalParams {
            buckets: None,
            ..EvalParams::default()
        }
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let refs = corpus(vec![("a", vec![ev("Dog", 0.0, 1.0)]), ("b", vec![ev("Cat", 3.0, 4.0)])]);
        let report = score(&refs, &refs, &two_classes(), &no_buckets()).unwrap();
        assert_eq!(report.macro_f1, 1.0);

        let report = score(&refs, &Corpus::new(), &two_classes(), &no_buckets()).unwrap();
        assert_eq!(report.macro_f1, 0.0);
        assert!(report.per_class.values().all(|s| s.recall == 0.0));
    }

    #[test]
    fn toy_corpus_half_f1() {
        // Per class: one hit, one spurious prediction, one miss.
        let refs = corpus(vec![
            ("a", vec![ev("Dog", 0.0, 1.0), ev("Cat", 2.0, 3.0)]),
            ("b", vec![ev("Dog", 5.0, 6.0), ev("Cat", 7.0, 8.0)]),
        ]);
        let preds = corpus(vec![
            ("a", vec![ev("Dog", 0.0, 1.0), ev("Cat", 2.0, 3.0)]),
            ("b", vec![ev("Dog", 1.0, 2.0), ev("Cat", 3.0, 4.0)]),
        ]);
        let report = score(&refs, &preds, &two_classes(), &no_buckets()).unwrap();
        for s in report.per_class.values() {
            assert_eq!((s.tp, s.fp, s.fn_), (1, 1, 1));
            assert_eq!(s.f1, 0.5);
        }
        assert_eq!(report.macro_f1, 0.5);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let refs = corpus(vec![("a", vec![ev("Bird", 0.0, 1.0)])]);
        assert!(matches!(
            score(&refs, &Corpus::new(), &two_classes(), &no_buckets()),
            Err(Error::UnknownClass(l)) if l == "Bird"
        ));
    }

    #[test]
    fn buckets_and_gap() {
        let classes = ClassMap::dcase2018();
        let refs = corpus(vec![(
            "a",
            vec![ev("Dog", 0.0, 0.5), ev("Blender", 1.0, 6.0), ev("Speech", 7.0, 7.5)],
        )]);
        let preds = corpus(vec![("a", vec![ev("Blender", 1.0, 6.0), ev("Speech", 7.0, 7.5)])]);
        let report = score(&refs, &preds, &classes, &EvalParams::default()).unwrap();
        assert_eq!(report.evaluated_classes, 3);
        assert_eq!(report.long_f1, Some(1.0));
        assert_eq!(report.short_f1, Some(0.5));
        assert_eq!(report.gap, Some(0.5));
        assert!((report.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn clip_duration_buckets() {
        let refs = corpus(vec![
            ("long", vec![ev("Dog", 0.0, 6.0)]),
            ("short", vec![ev("Dog", 0.0, 0.5), ev("Cat", 1.0, 1.5)]),
        ]);
        let preds = corpus(vec![("long", vec![ev("Dog", 0.0, 6.0)])]);
        let params = EvalParams {
            buckets: Some(BucketMode::ByClipDuration { threshold: 5.0 }),
            ..EvalParams::default()
        };
        let report = score(&refs, &preds, &two_classes(), &params).unwrap();
        assert_eq!(report.long_f1, Some(1.0));
        assert_eq!(report.short_f1, Some(0.0));
        assert_eq!(report.gap, Some(1.0));
    }

    #[test]
    fn missing_bucket_is_reported() {
        let refs = Corpus::new();
        let classes = ClassMap::new(["Dog", "Bird"]).unwrap();
        let err = score(&refs, &refs, &classes, &EvalParams::default()).unwrap_err();
        assert!(matches!(err, Error::MissingBucket(_)));
    }

    #[test]
    fn empty_clip_changes_nothing() {
        let refs = corpus(vec![("a", vec![ev("Dog", 0.0, 1.0)])]);
        let preds = corpus(vec![("a", vec![ev("Dog", 0.5, 1.0)])]);
        let before = score(&refs, &preds, &two_classes(), &no_buckets()).unwrap();
        let mut refs2 = refs.clone();
        let mut preds2 = preds.clone();
        refs2.insert("z".into(), EventList::empty("z"));
        preds2.insert("z".into(), EventList::empty("z"));
        assert_eq!(score(&refs2, &preds2, &two_classes(), &no_buckets()).unwrap(), before);
    }

    #[test]
    fn param_validation() {
        let classes = two_classes();
        let mut p = no_buckets();
        p.t_collar = 0.0;
        assert!(p.validate(&classes).is_err());
        let mut p = no_buckets();
        p.offset_ratio = 1.5;
        assert!(p.validate(&classes).is_err());
    }

    #[test]
    fn report_json_uses_four_decimals() {
        let refs = corpus(vec![(
            "a",
            vec![ev("Dog", 0.0, 1.0), ev("Dog", 2.0, 3.0), ev("Dog", 4.0, 5.0)],
        )]);
        let preds = corpus(vec![("a", vec![ev("Dog", 0.0, 1.0)])]);
        let report = score(&refs, &preds, &two_classes(), &no_buckets()).unwrap();
        let json = report.to_json();
        assert!(json.contains("\"recall\": 0.3333"), "{json}");
        assert!(json.contains("\"fn\": 2"));
        assert!(report.to_table().contains("macro F1: 0.5000"));
    }
}
