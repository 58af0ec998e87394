//! Training-time augmentations: cropping, jitter, same-class combination and
//! random point insertion.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{GazePoint, GazeRecording};
use crate::rng::Rng;

pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;
/// Upper bound on inserted random points, as a fraction of the recording.
pub const RANDOM_POINT_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentKind {
    /// Keep a contiguous window of 50% to 100% of the points.
    Crop,
    /// Gaussian jitter on x and y, clamped to the unit square.
    Noise { sigma: f64 },
    /// Append a random recording of the same class.
    Combine,
    /// Insert up to 5% uniformly random points.
    RandomPoints,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 4] = [
        AugmentKind::Crop,
        AugmentKind::Noise { sigma: DEFAULT_NOISE_SIGMA },
        AugmentKind::Combine,
        AugmentKind::RandomPoints,
    ];
}

pub fn augment(rec: &GazeRecording, kind: AugmentKind, rng: &mut Rng, pool: &[GazeRecording]) -> Result<GazeRecording> {
    match kind {
        AugmentKind::Crop => crop(rec, rng),
        AugmentKind::Noise { sigma } => jitter(rec, sigma, rng),
        AugmentKind::Combine => combine(rec, pool, rng),
        AugmentKind::RandomPoints => insert_random_points(rec, rng),
    }
}

fn crop(rec: &GazeRecording, rng: &mut Rng) -> Result<GazeRecording> {
    let n = rec.len();
    if n < 4 {
        return Err(Error::Argument(format!("cropping needs at least 4 points, '{}' has {n}", rec.id)));
    }
    let len = rng.gen_range(n.div_ceil(2)..=n);
    let start = rng.gen_range(0..=n - len);
    rec.with_points(rec.points()[start..start + len].to_vec())
}

fn jitter(rec: &GazeRecording, sigma: f64, rng: &mut Rng) -> Result<GazeRecording> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("noise sigma {sigma} must be non-negative")));
    }
    if sigma == 0.0 {
        return Ok(rec.clone());
    }
    let points = rec
        .points()
        .iter()
        .map(|p| {
            let dx: f64 = StandardNormal.sample(rng);
            let dy: f64 = StandardNormal.sample(rng);
            GazePoint { x: (p.x + sigma * dx).clamp(0.0, 1.0), y: (p.y + sigma * dy).clamp(0.0, 1.0), t: p.t }
        })
        .collect();
    rec.with_points(points)
}

fn combine(rec: &GazeRecording, pool: &[GazeRecording], rng: &mut Rng) -> Result<GazeRecording> {
    let other = pool
        .choose(rng)
        .ok_or_else(|| Error::Argument("combining needs a non-empty pool of same-class recordings".into()))?;
    if other.has_time() != rec.has_time() {
        return Err(Error::Argument("cannot combine timed and untimed recordings".into()));
    }
    let mut points: Vec<GazePoint> = rec.points().to_vec();
    if rec.has_time() {
        // place the second path after the first, then rescale onto [0, 1]
        let offset = points.last().and_then(|p| p.t).unwrap_or(0.0);
        let base = other.points()[0].t.unwrap_or(0.0);
        points.extend(other.points().iter().map(|p| GazePoint { t: p.t.map(|t| t - base + offset), ..*p }));
        let (lo, hi) = (points[0].t.unwrap(), points[points.len() - 1].t.unwrap());
        for p in points.iter_mut() {
            p.t = p.t.map(|t| if hi > lo { ((t - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 });
        }
    } else {
        points.extend_from_slice(other.points());
    }
    rec.with_points(points)
}

fn insert_random_points(rec: &GazeRecording, rng: &mut Rng) -> Result<GazeRecording> {
    let n = rec.len();
    let u: f64 = rng.gen();
    let k = (u * RANDOM_POINT_FRACTION * n as f64).round() as usize;
    let mut points = rec.points().to_vec();
    for _ in 0..k {
        let at = rng.gen_range(0..=points.len());
        let t = match (at.checked_sub(1).and_then(|i| points.get(i)), points.get(at)) {
            (Some(a), Some(b)) => a.t.zip(b.t).map(|(ta, tb)| 0.5 * (ta + tb)),
            (Some(a), None) => a.t,
            (None, Some(b)) => b.t,
            (None, None) => None,
        };
        points.insert(at, GazePoint { x: rng.gen(), y: rng.gen(), t });
    }
    rec.with_points(points)
}
