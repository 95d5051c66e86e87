//! Posterior TSV files (with `.meta.json` sidecars) and DCASE-style
//! annotation TSV files.
//!
//! Posterior file:
//!
//! ```text
//! frame<TAB>Alarm_bell_ringing<TAB>...<TAB>Vacuum_cleaner
//! 0<TAB>0.01<TAB>...<TAB>0.93
//! ```
//!
//! Sidecar `<stem>.meta.json`: `{"clip_id": ..., "base_hop_seconds": ..., "factor": ...}`.
//!
//! Annotation file:
//!
//! ```text
//! filename<TAB>onset<TAB>offset<TAB>event_label
//! Y0a1b2c.wav<TAB>0.040<TAB>0.100<TAB>Dog
//! ```
//!
//! A row holding only a filename registers a clip without events.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassMap, Corpus, Event, EventList, PosteriorClip, TimeGrid, DEFAULT_BASE_HOP};

pub const ANNOTATION_HEADER: &str = "filename\tonset\toffset\tevent_label";

const AUDIO_EXTENSIONS: [&str; 4] = ["wav", "flac", "mp3", "ogg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub clip_id: String,
    pub base_hop_seconds: f64,
    pub factor: u32,
}

/// Formats a time stamp with at least three decimals while keeping the
/// shortest representation that parses back to the same `f64`.
pub fn format_seconds(value: f64) -> String {
    for decimals in 3..=24 {
        let text = format!("{value:.decimals$}");
        if text.parse::<f64>() == Ok(value) {
            return text;
        }
    }
    format!("{value}")
}

/// Clip id for an annotation `filename` column: strips a trailing audio
/// extension, nothing else.
pub fn clip_id_from_filename(filename: &str) -> &str {
    if let Some((stem, ext)) = filename.rsplit_once('.') {
        if AUDIO_EXTENSIONS.iter().any(|a| a.eq_ignore_ascii_case(ext)) && !stem.is_empty() {
            return stem;
        }
    }
    filename
}

pub fn meta_path(posterior_path: &Path) -> PathBuf {
    let stem = posterior_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    posterior_path.with_file_name(format!("{stem}.meta.json"))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

pub fn posterior_to_tsv(clip: &PosteriorClip) -> String {
    let mut out = String::from("frame");
    for label in clip.classes.labels() {
        out.push('\t');
        out.push_str(label);
    }
    out.push('\n');
    for (t, row) in clip.probs.rows().into_iter().enumerate() {
        write!(out, "{t}").unwrap();
        for value in row {
            write!(out, "\t{value}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses posterior TSV text. `path` only labels diagnostics.
pub fn posterior_from_tsv(text: &str, meta: ClipMeta, path: &Path) -> Result<PosteriorClip> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let mut cols = header.split('\t');
    if cols.next().map(str::trim) != Some("frame") {
        return Err(parse_err(path, 1, "header must start with `frame`"));
    }
    let classes = ClassMap::new(cols.map(|c| c.trim().to_string())).map_err(|e| parse_err(path, 1, e.to_string()))?;

    let mut values = Vec::new();
    let mut frames = 0usize;
    for (i, line) in lines {
        let lineno = i + 1;
        let mut fields = line.split('\t');
        let frame: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| parse_err(path, lineno, "invalid frame index"))?;
        if frame != frames {
            return Err(parse_err(
                path,
                lineno,
                format!("expected frame {frames}, found {frame}"),
            ));
        }
        let before = values.len();
        for field in fields {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("invalid probability `{field}`")))?;
            values.push(v);
        }
        if values.len() - before != classes.len() {
            return Err(parse_err(
                path,
                lineno,
                format!(
                    "expected {} probabilities, found {}",
                    classes.len(),
                    values.len() - before
                ),
            ));
        }
        frames += 1;
    }

    let grid = TimeGrid::new(meta.base_hop_seconds, meta.factor)?;
    let probs = Array2::from_shape_vec((frames, classes.len()), values).expect("row lengths checked");
    PosteriorClip::new(meta.clip_id, probs, grid, classes)
}

/// Reads `<stem>.tsv` and its sidecar. Without a sidecar the clip id is the
/// file stem and the grid is 20 ms at factor 1.
pub fn read_posterior(path: &Path) -> Result<PosteriorClip> {
    let text = read_to_string(path)?;
    let sidecar = meta_path(path);
    let meta = if sidecar.exists() {
        let raw = read_to_string(&sidecar)?;
        serde_json::from_str(&raw).map_err(|source| Error::Json { path: sidecar, source })?
    } else {
        ClipMeta {
            clip_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            base_hop_seconds: DEFAULT_BASE_HOP,
            factor: 1,
        }
    };
    posterior_from_tsv(&text, meta, path)
}

pub fn write_posterior(path: &Path, clip: &PosteriorClip) -> Result<()> {
    write_string(path, &posterior_to_tsv(clip))?;
    let meta = ClipMeta {
        clip_id: clip.clip_id.clone(),
        base_hop_seconds: clip.grid.base_hop(),
        factor: clip.grid.factor(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_string(&meta_path(path), &(json + "\n"))
}

pub fn annotations_to_tsv(corpus: &Corpus) -> String {
    let mut out = String::from(ANNOTATION_HEADER);
    out.push('\n');
    for (clip_id, list) in corpus {
        if list.is_empty() {
            writeln!(out, "{clip_id}").unwrap();
        }
        for event in list {
            writeln!(
                out,
                "{clip_id}\t{}\t{}\t{}",
                format_seconds(event.onset),
                format_seconds(event.offset),
                event.label
            )
            .unwrap();
        }
    }
    out
}

pub fn annotations_from_tsv(text: &str, path: &Path) -> Result<Corpus> {
    let mut raw: std::collections::BTreeMap<String, Vec<Event>> = Default::default();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if i == 0 && fields.first() == Some(&"filename") {
            continue;
        }
        let clip_id = clip_id_from_filename(fields[0]).to_string();
        if clip_id.is_empty() {
            return Err(parse_err(path, lineno, "empty filename"));
        }
        let rest: Vec<&str> = fields[1..].iter().copied().filter(|f| !f.is_empty()).collect();
        let events = raw.entry(clip_id).or_default();
        match rest.as_slice() {
            [] => {}
            [onset, offset, label] => {
                let onset: f64 = onset
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("invalid onset `{onset}`")))?;
                let offset: f64 = offset
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("invalid offset `{offset}`")))?;
                let event = Event::new(*label, onset, offset).map_err(|e| parse_err(path, lineno, e.to_string()))?;
                events.push(event);
            }
            _ => {
                return Err(parse_err(
                    path,
                    lineno,
                    "expected `filename<TAB>onset<TAB>offset<TAB>event_label`",
                ))
            }
        }
    }
    Ok(raw
        .into_iter()
        .map(|(id, events)| (id.clone(), EventList::new(id, events)))
        .collect())
}

pub fn read_annotations(path: &Path) -> Result<Corpus> {
    annotations_from_tsv(&read_to_string(path)?, path)
}

pub fn write_annotations(path: &Path, corpus: &Corpus) -> Result<()> {
    write_string(path, &annotations_to_tsv(corpus))
}
