//! Synthesizing scan paths by a random top-down walk through a model.
//!
//! Every live branch draws how many clusters it spawns at the next level
//! (zero ends the branch), each cluster picks a node of that level and
//! places between one and `max_subclusters` children at the parent position
//! plus a shift sampled from the node's shape model. The positions left
//! after the last level are the gaze points.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{GazePoint, GazeRecording};
use crate::model::{apply_update_rule, ScanPathModel, UpdateRule};
use crate::rng;
use crate::shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub max_clusters: usize,
    pub max_subclusters: usize,
    pub dyn_cluster: bool,
    pub rule: UpdateRule,
    pub seed: u64,
    pub clamp_to_unit: bool,
    /// Pick nodes proportionally to their support instead of uniformly.
    pub support_weighted: bool,
    /// Levels to walk; defaults to every level of the model.
    pub max_level: Option<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_clusters: 3,
            max_subclusters: 3,
            dyn_cluster: false,
            rule: UpdateRule::Constant,
            seed: 0,
            clamp_to_unit: true,
            support_weighted: false,
            max_level: None,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        if self.max_clusters < 1 || self.max_subclusters < 1 {
            return Err(Error::Config("max clusters and max subclusters must be at least 1".into()));
        }
        if self.max_level == Some(0) {
            return Err(Error::Config("generation needs at least one level".into()));
        }
        Ok(())
    }

    /// (max clusters, max subclusters) in effect at `level`.
    pub fn limits_at(&self, level: usize) -> (usize, usize) {
        if self.dyn_cluster {
            (
                apply_update_rule(self.rule, self.max_clusters, level),
                apply_update_rule(self.rule, self.max_subclusters, level),
            )
        } else {
            (self.max_clusters, self.max_subclusters)
        }
    }
}

/// Bookkeeping from one generation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationStats {
    pub levels: usize,
    pub leaves: usize,
    /// Points moved back into the unit square.
    pub clamped_points: usize,
    /// Cluster-count draws that were allowed to end the branch (levels ≥ 2).
    pub branch_draws: usize,
    /// How many of those draws ended the branch.
    pub terminations: usize,
}

#[derive(Debug, Clone)]
struct PendingCluster {
    position: Vec<f64>,
    terminated: bool,
}

/// Generates one scan path on stream 0 of `config.seed`.
pub fn generate_scanpath(model: &ScanPathModel, config: &GeneratorConfig) -> Result<GazeRecording> {
    generate_scanpath_stream(model, config, 0).map(|(rec, _)| rec)
}

/// Generates one scan path on stream `stream` of `config.seed`.
pub fn generate_scanpath_stream(
    model: &ScanPathModel,
    config: &GeneratorConfig,
    stream: u64,
) -> Result<(GazeRecording, GenerationStats)> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, stream);
    let levels = config.max_level.unwrap_or(model.depth()).min(model.depth());
    let mut stats = GenerationStats { levels, ..GenerationStats::default() };

    let mut pending = vec![PendingCluster { position: vec![0.0; model.dim], terminated: false }];
    let mut leaf_bound: f64 = 1.0;

    for level in 1..=levels {
        let (max_clusters, max_subclusters) = config.limits_at(level);
        leaf_bound *= (max_clusters * max_subclusters) as f64;
        let nodes = &model.levels[level - 1];
        let chooser = if config.support_weighted && !nodes.is_empty() {
            Some(WeightedIndex::new(nodes.iter().map(|n| n.support)).map_err(|e| Error::Generation(e.to_string()))?)
        } else {
            None
        };

        let mut next = Vec::with_capacity(pending.len() * max_clusters);
        for parent in pending {
            if parent.terminated {
                next.push(parent);
                continue;
            }
            let lowest = if level == 1 { 1 } else { 0 };
            let num_clusters = rng.gen_range(lowest..=max_clusters);
            if level > 1 {
                stats.branch_draws += 1;
            }
            if num_clusters == 0 {
                stats.terminations += 1;
                next.push(PendingCluster { terminated: true, ..parent });
                continue;
            }
            if nodes.is_empty() {
                return Err(Error::Generation(format!("model has no nodes at level {level}")));
            }
            for _ in 0..num_clusters {
                let idx = match &chooser {
                    Some(w) => w.sample(&mut rng),
                    None => rng.gen_range(0..nodes.len()),
                };
                let shape = &nodes[idx].shape;
                let num_sub = rng.gen_range(1..=max_subclusters);
                for _ in 0..num_sub {
                    let weights = shape::sample_weights(shape, &mut rng);
                    let shift = shape::synthesize_shift(shape, &weights)?;
                    let position = parent.position.iter().zip(&shift).map(|(p, s)| p + s).collect();
                    next.push(PendingCluster { position, terminated: false });
                }
            }
        }
        pending = next;
    }

    stats.leaves = pending.len();
    assert!(stats.leaves as f64 <= leaf_bound, "leaf bound violated");

    let mut leaves: Vec<Vec<f64>> = pending.into_iter().map(|p| p.position).collect();
    if config.clamp_to_unit {
        for leaf in leaves.iter_mut() {
            let mut moved = false;
            for v in leaf.iter_mut().take(2) {
                let c = v.clamp(0.0, 1.0);
                moved |= c != *v;
                *v = c;
            }
            stats.clamped_points += usize::from(moved);
        }
    }

    let mut rec = if model.has_time() { normalize_time(leaves)? } else { add_time(leaves)? };
    rec.id = format!("gen{stream}");
    Ok((rec, stats))
}

/// Sorts generated 3-D points by their time coordinate and remaps time onto
/// `[0, 1]`. A single point, or points sharing one time, get t = 0.
pub fn normalize_time(points: Vec<Vec<f64>>) -> Result<GazeRecording> {
    if points.is_empty() {
        return Err(Error::Argument("no points to time-normalize".into()));
    }
    if points.iter().any(|p| p.len() != 3) {
        return Err(Error::Argument("time normalization needs (x, y, t) points".into()));
    }
    let mut points = points;
    points.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let (lo, hi) = (points[0][2], points[points.len() - 1][2]);
    let gaze = points
        .iter()
        .map(|p| {
            let t = if hi > lo { ((p[2] - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
            GazePoint::timed(p[0], p[1], t)
        })
        .collect();
    GazeRecording::new(gaze, "generated")
}

/// Stamps points in emission order with t = i / (n - 1).
pub fn add_time(points: Vec<Vec<f64>>) -> Result<GazeRecording> {
    if points.is_empty() {
        return Err(Error::Argument("no points to time-stamp".into()));
    }
    let n = points.len();
    let gaze = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            GazePoint::timed(p[0], p[1], t)
        })
        .collect();
    GazeRecording::new(gaze, "generated")
}

/// `count` scan paths; recording `i` uses stream `i`, so the batch does not
/// depend on scheduling.
pub fn generate_batch(model: &ScanPathModel, config: &GeneratorConfig, count: usize) -> Result<Vec<GazeRecording>> {
    if count < 1 {
        return Err(Error::Argument("batch count must be at least 1".into()));
    }
    (0..count as u64).into_par_iter().map(|i| generate_scanpath_stream(model, config, i).map(|(rec, _)| rec)).collect()
}
