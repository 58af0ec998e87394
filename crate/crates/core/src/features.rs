//! Fixed-length scan path descriptors: a spatial occupancy heatmap and a
//! histogram of oriented velocities (HOV).

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::GazeRecording;

pub const DEFAULT_GRID: usize = 16;
pub const DEFAULT_BINS: usize = 36;

/// Which descriptor to compute, with its geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureSpec {
    Heatmap { width: usize, height: usize },
    Hov { bins: usize, length_weighted: bool },
}

impl FeatureSpec {
    pub fn heatmap() -> Self {
        FeatureSpec::Heatmap { width: DEFAULT_GRID, height: DEFAULT_GRID }
    }

    pub fn hov() -> Self {
        FeatureSpec::Hov { bins: DEFAULT_BINS, length_weighted: true }
    }

    pub fn len(&self) -> usize {
        match *self {
            FeatureSpec::Heatmap { width, height } => width * height,
            FeatureSpec::Hov { bins, .. } => bins,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSpec::Heatmap { .. } => "heatmap",
            FeatureSpec::Hov { .. } => "hov",
        }
    }

    pub fn extract(&self, rec: &GazeRecording) -> Result<FeatureVector> {
        match *self {
            FeatureSpec::Heatmap { width, height } => featurize_heatmap(rec, width, height),
            FeatureSpec::Hov { bins, length_weighted } => featurize_hov_with(rec, bins, length_weighted),
        }
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSpec::Heatmap { width, height } => write!(f, "heatmap {width}x{height}"),
            FeatureSpec::Hov { bins, length_weighted: true } => write!(f, "hov {bins} bins"),
            FeatureSpec::Hov { bins, length_weighted: false } => write!(f, "hov {bins} bins (unweighted)"),
        }
    }
}

/// Parses a `WxH` grid size.
pub fn parse_grid(text: &str) -> Result<(usize, usize)> {
    let (w, h) =
        text.split_once(['x', 'X']).ok_or_else(|| Error::Config(format!("grid '{text}' is not of the form WxH")))?;
    let parse = |s: &str| {
        usize::from_str(s.trim())
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| Error::Config(format!("grid '{text}' needs positive integer sides")))
    };
    Ok((parse(w)?, parse(h)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub spec: FeatureSpec,
}

fn normalized(mut values: Vec<f64>) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter_mut().for_each(|v| *v /= total);
    }
    values
}

fn cell(v: f64, n: usize) -> usize {
    ((v * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Fraction of points per grid cell; x = 1 and y = 1 fall in the last cell.
pub fn featurize_heatmap(rec: &GazeRecording, grid_w: usize, grid_h: usize) -> Result<FeatureVector> {
    if grid_w < 1 || grid_h < 1 {
        return Err(Error::Feature("heatmap grid sides must be at least 1".into()));
    }
    let mut values = vec![0.0; grid_w * grid_h];
    for p in rec.points() {
        values[cell(p.y, grid_h) * grid_w + cell(p.x, grid_w)] += 1.0;
    }
    Ok(FeatureVector { values: normalized(values), spec: FeatureSpec::Heatmap { width: grid_w, height: grid_h } })
}

/// Length-weighted histogram of segment directions.
pub fn featurize_hov(rec: &GazeRecording, bin_count: usize) -> Result<FeatureVector> {
    featurize_hov_with(rec, bin_count, true)
}

/// Histogram of the directions `atan2(dy, dx)` in `[0, 2π)` of consecutive
/// point pairs, optionally weighted by segment length. Zero-length segments
/// are skipped; a path that never moves yields the uniform histogram.
pub fn featurize_hov_with(rec: &GazeRecording, bin_count: usize, length_weighted: bool) -> Result<FeatureVector> {
    if bin_count < 2 {
        return Err(Error::Feature("HOV needs at least 2 bins".into()));
    }
    if rec.len() < 2 {
        return Err(Error::Feature(format!("recording '{}' has a single point and no velocities", rec.id)));
    }
    let width = TAU / bin_count as f64;
    let mut values = vec![0.0; bin_count];
    for w in rec.points().windows(2) {
        let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        let length = dx.hypot(dy);
        if length == 0.0 {
            continue;
        }
        let mut angle = dy.atan2(dx);
        if angle < 0.0 {
            angle += TAU;
        }
        let bin = ((angle / width).floor() as usize).min(bin_count - 1);
        values[bin] += if length_weighted { length } else { 1.0 };
    }
    if values.iter().all(|&v| v == 0.0) {
        values.iter_mut().for_each(|v| *v = 1.0);
    }
    Ok(FeatureVector { values: normalized(values), spec: FeatureSpec::Hov { bins: bin_count, length_weighted } })
}
