//! Gaze recordings: data model, CSV ingestion and normalization.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One gaze sample. Coordinates are normalized to `[0, 1]` once the
/// recording has passed through [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub x: f64,
    pub y: f64,
    pub t: Option<f64>,
}

impl GazePoint {
    pub fn new(x: f64, y: f64) -> Self {
        GazePoint { x, y, t: None }
    }

    pub fn timed(x: f64, y: f64, t: f64) -> Self {
        GazePoint { x, y, t: Some(t) }
    }
}

/// An ordered, non-empty scan path plus its labels.
///
/// Either every point carries a timestamp or none does, and timestamps are
/// non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeRecording {
    points: Vec<GazePoint>,
    pub stimulus: String,
    pub participant: String,
    pub id: String,
}

impl GazeRecording {
    pub fn new(points: Vec<GazePoint>, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        validate_points(&points, &id)?;
        Ok(GazeRecording { points, stimulus: String::new(), participant: String::new(), id })
    }

    pub fn with_labels(mut self, stimulus: impl Into<String>, participant: impl Into<String>) -> Self {
        self.stimulus = stimulus.into();
        self.participant = participant.into();
        self
    }

    pub fn points(&self) -> &[GazePoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<GazePoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed recording; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_time(&self) -> bool {
        self.points[0].t.is_some()
    }

    pub fn label(&self, key: ClassKey) -> &str {
        match key {
            ClassKey::Stimulus => &self.stimulus,
            ClassKey::Participant => &self.participant,
        }
    }

    pub fn set_label(&mut self, key: ClassKey, label: impl Into<String>) {
        match key {
            ClassKey::Stimulus => self.stimulus = label.into(),
            ClassKey::Participant => self.participant = label.into(),
        }
    }

    /// Replaces the points, keeping labels and id.
    pub fn with_points(&self, points: Vec<GazePoint>) -> Result<Self> {
        validate_points(&points, &self.id)?;
        Ok(GazeRecording {
            points,
            stimulus: self.stimulus.clone(),
            participant: self.participant.clone(),
            id: self.id.clone(),
        })
    }
}

fn validate_points(points: &[GazePoint], id: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Argument(format!("recording '{id}' has no points")));
    }
    let timed = points[0].t.is_some();
    if points.iter().any(|p| p.t.is_some() != timed) {
        return Err(Error::Schema(format!("recording '{id}' mixes points with and without timestamps")));
    }
    if timed {
        let sorted = points.windows(2).all(|w| w[0].t.unwrap() <= w[1].t.unwrap());
        if !sorted {
            return Err(Error::Schema(format!("recording '{id}' has timestamps out of order")));
        }
    }
    Ok(())
}

/// Which label field defines the classes of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassKey {
    Stimulus,
    #[default]
    Participant,
}

impl std::str::FromStr for ClassKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stimulus" => Ok(ClassKey::Stimulus),
            "participant" => Ok(ClassKey::Participant),
            other => Err(Error::Config(format!("unknown class key '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<GazeRecording>,
    pub class_key: ClassKey,
}

impl Dataset {
    pub fn new(recordings: Vec<GazeRecording>, class_key: ClassKey) -> Self {
        Dataset { recordings, class_key }
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.recordings.iter().map(GazeRecording::len).sum()
    }

    pub fn label_of<'a>(&self, rec: &'a GazeRecording) -> &'a str {
        rec.label(self.class_key)
    }

    /// Sorted distinct class labels. Fails if a recording lacks the label.
    pub fn classes(&self) -> Result<Vec<String>> {
        let mut classes = Vec::new();
        for rec in &self.recordings {
            let label = self.label_of(rec);
            if label.is_empty() {
                return Err(Error::Schema(format!("recording '{}' has no {:?} label", rec.id, self.class_key)));
            }
            classes.push(label.to_string());
        }
        classes.sort();
        classes.dedup();
        Ok(classes)
    }

    /// Recordings whose class label equals `class`.
    pub fn subset(&self, class: &str) -> Dataset {
        Dataset {
            recordings: self.recordings.iter().filter(|r| self.label_of(r) == class).cloned().collect(),
            class_key: self.class_key,
        }
    }

    /// True if any recording carries timestamps. Mixed datasets are
    /// rejected by the model builder, not here.
    pub fn has_time(&self) -> bool {
        self.recordings.iter().any(GazeRecording::has_time)
    }

    /// Copy with every timestamp removed.
    pub fn without_time(&self) -> Dataset {
        let recordings = self
            .recordings
            .iter()
            .map(|r| {
                let pts = r.points.iter().map(|p| GazePoint::new(p.x, p.y)).collect();
                GazeRecording { points: pts, ..r.clone() }
            })
            .collect();
        Dataset { recordings, class_key: self.class_key }
    }
}

/// Column mapping for delimiter-separated gaze files.
#[derive(Debug, Clone)]
pub struct FormatOptions {
    pub delimiter: u8,
    pub x: String,
    pub y: String,
    pub t: String,
    pub recording: String,
    pub stimulus: String,
    pub participant: String,
    pub class_key: ClassKey,
}

impl Default for FormatOptions {
    fn default() -> Self {
        FormatOptions {
            delimiter: b',',
            x: "x".into(),
            y: "y".into(),
            t: "t".into(),
            recording: "rec".into(),
            stimulus: "stimulus".into(),
            participant: "participant".into(),
            class_key: ClassKey::default(),
        }
    }
}

pub fn load_recordings(path: impl AsRef<Path>, options: &FormatOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_recordings(file, options)
}

/// Reads recordings from any reader. Rows sharing a recording id form one
/// recording in row order; recordings appear in order of first occurrence.
pub fn read_recordings<R: Read>(reader: R, options: &FormatOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e)),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let column = |name: &str| headers.iter().position(|h| h == name);
    let x_col = column(&options.x).ok_or_else(|| Error::Schema(format!("missing column '{}'", options.x)))?;
    let y_col = column(&options.y).ok_or_else(|| Error::Schema(format!("missing column '{}'", options.y)))?;
    let t_col = column(&options.t);
    let rec_col = column(&options.recording);
    let stim_col = column(&options.stimulus);
    let part_col = column(&options.participant);

    struct Pending {
        points: Vec<GazePoint>,
        stimulus: String,
        participant: String,
        first_line: u64,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Pending> = HashMap::new();

    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| record.get(col).unwrap_or("");
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = field(col);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("column '{name}' is not a number: '{raw}'") })
        };
        let x = number(x_col, &options.x)?;
        let y = number(y_col, &options.y)?;
        let t = match t_col {
            Some(c) if !field(c).is_empty() => Some(number(c, &options.t)?),
            _ => None,
        };
        let id = rec_col.map_or_else(|| "0".to_string(), |c| field(c).to_string());
        let stimulus = stim_col.map_or("", field).to_string();
        let participant = part_col.map_or("", field).to_string();

        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Pending {
                points: Vec::new(),
                stimulus: stimulus.clone(),
                participant: participant.clone(),
                first_line: line,
            }
        });
        if entry.stimulus != stimulus || entry.participant != participant {
            return Err(Error::Schema(format!(
                "line {line}: recording '{id}' changes its labels (first seen on line {})",
                entry.first_line
            )));
        }
        entry.points.push(GazePoint { x, y, t });
    }

    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut recordings = Vec::with_capacity(order.len());
    for id in order {
        let pending = groups.remove(&id).expect("grouped id");
        let rec = GazeRecording::new(pending.points, id)?.with_labels(pending.stimulus, pending.participant);
        recordings.push(rec);
    }
    Ok(Dataset::new(recordings, options.class_key))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { line, message: e.to_string() }
}

fn write_error(e: impl std::fmt::Display) -> Error {
    Error::io("<output>", std::io::Error::other(e.to_string()))
}

pub fn save_recordings(recordings: &[GazeRecording], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_recordings(recordings, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Writes recordings with header `x,y[,t],rec,stimulus,participant`.
pub fn write_recordings<W: Write>(recordings: &[GazeRecording], writer: W) -> Result<()> {
    let timed = recordings.iter().any(GazeRecording::has_time);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["x", "y"];
    if timed {
        header.push("t");
    }
    header.extend(["rec", "stimulus", "participant"]);
    w.write_record(&header).map_err(write_error)?;
    for rec in recordings {
        for p in &rec.points {
            let mut row = vec![p.x.to_string(), p.y.to_string()];
            if timed {
                row.push(p.t.map(|t| t.to_string()).unwrap_or_default());
            }
            row.push(rec.id.clone());
            row.push(rec.stimulus.clone());
            row.push(rec.participant.clone());
            w.write_record(&row).map_err(write_error)?;
        }
    }
    w.flush().map_err(write_error)?;
    Ok(())
}

/// Spatial normalization bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn of(dataset: &Dataset) -> Result<Bounds> {
        let mut it = dataset.recordings.iter().flat_map(|r| r.points.iter());
        let first = it.next().ok_or(Error::EmptyDataset)?;
        let init = Bounds { x_min: first.x, x_max: first.x, y_min: first.y, y_max: first.y };
        Ok(it.fold(init, |b, p| Bounds {
            x_min: b.x_min.min(p.x),
            x_max: b.x_max.max(p.x),
            y_min: b.y_min.min(p.y),
            y_max: b.y_max.max(p.y),
        }))
    }

    pub fn is_unit(&self) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= 1.0 && self.y_max <= 1.0
    }
}

fn unit_map(v: f64, min: f64, max: f64, degenerate: f64) -> f64 {
    if max > min {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        degenerate
    }
}

/// Maps x and y affinely onto `[0, 1]` using `bounds` (or the dataset's own
/// extent) and each recording's timestamps onto `[0, 1]` independently.
/// Degenerate axes map to 0.5 in space and 0 in time.
pub fn normalize(dataset: &Dataset, bounds: Option<&Bounds>) -> Result<Dataset> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let b = match bounds {
        Some(b) => *b,
        None => Bounds::of(dataset)?,
    };
    let recordings = dataset
        .recordings
        .iter()
        .map(|rec| {
            let (t_min, t_max) = rec
                .points
                .iter()
                .filter_map(|p| p.t)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
            let points = rec
                .points
                .iter()
                .map(|p| GazePoint {
                    x: unit_map(p.x, b.x_min, b.x_max, 0.5),
                    y: unit_map(p.y, b.y_min, b.y_max, 0.5),
                    t: p.t.map(|t| unit_map(t, t_min, t_max, 0.0)),
                })
                .collect();
            GazeRecording { points, ..rec.clone() }
        })
        .collect();
    Ok(Dataset { recordings, class_key: dataset.class_key })
}
