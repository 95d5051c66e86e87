//! Binary masks to timed events, and posterior fusion across models.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::postprocess::BinaryMask;
use crate::types::{Event, EventList, PosteriorClip, TimeGrid};

/// Each maximal run of active frames `[i, j]` becomes an event spanning
/// `[start(i), start(j + 1))`.
pub fn mask_to_events(mask: &BinaryMask) -> EventList {
    let frames = mask.num_frames();
    let mut events = Vec::new();
    for (c, column) in mask.mask.columns().into_iter().enumerate() {
        let label = mask.classes.label(c);
        let mut start = None;
        for t in 0..=frames {
            let active = t < frames && column[t];
            match (active, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    let event = Event::new(label, mask.grid.frame_to_seconds(s), mask.grid.frame_to_seconds(t))
                        .expect("runs are non-empty");
                    events.push(event);
                    start = None;
                }
                _ => {}
            }
        }
    }
    EventList::new(mask.clip_id.clone(), events)
}

/// Averages posteriors of several models for the same clip.
///
/// Coarser inputs are brought to the finest grid by repeating each frame
/// `factor / min_factor` times; when lengths still differ the result is cut
/// to the shortest input.
pub fn fuse(clips: &[PosteriorClip]) -> Result<PosteriorClip> {
    if clips.len() < 2 {
        return Err(Error::FuseTooFew(clips.len()));
    }
    let first = &clips[0];
    for clip in &clips[1..] {
        if clip.clip_id != first.clip_id {
            return Err(Error::FuseMismatch(format!(
                "clip ids differ: `{}` vs `{}`",
                first.clip_id, clip.clip_id
            )));
        }
        if clip.classes != first.classes {
            return Err(Error::FuseMismatch("class maps differ".into()));
        }
        if clip.grid.base_hop() != first.grid.base_hop() {
            return Err(Error::FuseMismatch(format!(
                "base hops differ: {} vs {}",
                first.grid.base_hop(),
                clip.grid.base_hop()
            )));
        }
    }
    for clip in clips {
        clip.validate()?;
    }

    let min_factor = clips.iter().map(|c| c.grid.factor()).min().expect("non-empty");
    let mut ratios = Vec::with_capacity(clips.len());
    for clip in clips {
        let factor = clip.grid.factor();
        if factor % min_factor != 0 {
            return Err(Error::FuseMismatch(format!(
                "factor {factor} is not a multiple of the finest factor {min_factor}"
            )));
        }
        ratios.push((factor / min_factor) as usize);
    }
    let frames = clips
        .iter()
        .zip(&ratios)
        .map(|(c, r)| c.num_frames() * r)
        .min()
        .expect("non-empty");

    let n = clips.len() as f64;
    let probs = Array2::from_shape_fn((frames, first.num_classes()), |(t, c)| {
        let sum: f64 = clips.iter().zip(&ratios).map(|(clip, r)| clip.probs[[t / r, c]]).sum();
        (sum / n).min(1.0)
    });
    let grid = TimeGrid::new(first.grid.base_hop(), min_factor)?;
    PosteriorClip::new(first.clip_id.clone(), probs, grid, first.classes.clone())
}
