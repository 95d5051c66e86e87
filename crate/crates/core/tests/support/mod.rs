//! Test-only oracles, independent of the library's implementation paths.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sedkit::{Event, EventList};

/// Onset and offset collars checked directly, without `EvalParams::is_match`.
pub fn compatible(r: &Event, p: &Event, t_collar: f64, offset_ratio: f64) -> bool {
    let onset_ok = (p.onset - r.onset).abs() <= t_collar + 1e-9;
    let tol = if offset_ratio * (r.offset - r.onset) > t_collar {
        offset_ratio * (r.offset - r.onset)
    } else {
        t_collar
    };
    r.label == p.label && onset_ok && (p.offset - r.offset).abs() <= tol + 1e-9
}

/// Maximum one-to-one matching size by exhaustive search over assignments.
pub fn brute_force_matching(refs: &[&Event], preds: &[&Event], t_collar: f64, offset_ratio: f64) -> usize {
    fn go(i: usize, refs: &[&Event], preds: &[&Event], used: &mut Vec<bool>, t: f64, o: f64) -> usize {
        if i == refs.len() {
            return 0;
        }
        let mut best = go(i + 1, refs, preds, used, t, o);
        for j in 0..preds.len() {
            if !used[j] && compatible(refs[i], preds[j], t, o) {
                used[j] = true;
                best = best.max(1 + go(i + 1, refs, preds, used, t, o));
                used[j] = false;
            }
        }
        best
    }
    go(0, refs, preds, &mut vec![false; preds.len()], t_collar, offset_ratio)
}

/// Up to `max_per_class` events per class over a short span, so that many
/// reference/prediction pairs fall inside the collars.
pub fn random_events(rng: &mut ChaCha8Rng, labels: &[&str], max_per_class: usize, span: f64) -> Vec<Event> {
    let mut events = Vec::new();
    for label in labels {
        for _ in 0..rng.random_range(0..=max_per_class) {
            let onset = rng.random_range(0.0..span);
            let duration = rng.random_range(0.02..1.5);
            events.push(Event::new(*label, onset, onset + duration).unwrap());
        }
    }
    events
}

/// Reference events jittered within roughly twice the collar, plus some
/// random extras.
pub fn jittered(rng: &mut ChaCha8Rng, refs: &EventList, labels: &[&str], span: f64) -> Vec<Event> {
    let mut out = Vec::new();
    for e in refs {
        if rng.random_bool(0.8) {
            let onset = (e.onset + rng.random_range(-0.3..0.3)).max(0.0);
            let offset = (e.offset + rng.random_range(-0.4..0.4)).max(onset + 0.01);
            out.push(Event::new(e.label.clone(), onset, offset).unwrap());
        }
    }
    out.extend(random_events(rng, labels, 1, span));
    out
}

/// Fixed-width pass/fail lines for one acceptance criterion.
pub struct Criterion {
    name: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    pub fn new(name: &'static str) -> Self {
        Self {
            name,
            failures: Vec::new(),
        }
    }

    pub fn check(&mut self, what: impl AsRef<str>, ok: bool, detail: impl AsRef<str>) {
        let status = if ok { "PASS" } else { "FAIL" };
        println!("[{status}] {} :: {} ({})", self.name, what.as_ref(), detail.as_ref());
        if !ok {
            self.failures.push(what.as_ref().to_string());
        }
    }

    pub fn finish(self) {
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("[{status}] {}", self.name);
        assert!(self.failures.is_empty(), "{} failed: {:?}", self.name, self.failures);
    }
}
