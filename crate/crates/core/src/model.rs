//! Learning the hierarchical scan path model from recordings, and its
//! versioned JSON file format.
//!
//! Level 1 clusters every recording's raw points and matches the clusters
//! across recordings; each matched group becomes a node whose shift is the
//! absolute cluster position. Every deeper level re-clusters the points of
//! each cluster found one level up, expresses the subcluster means as shifts
//! from their parent cluster mean, matches them across the recordings that
//! share the parent node, and fits a shape model to each matched group.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{self, ClusterAssignment};
use crate::error::{Error, Result};
use crate::gaze::Dataset;
use crate::rng;
use crate::shape::{self, PrincipalComponents};

pub const FORMAT_VERSION: u32 = 1;

/// How the cluster count changes with depth when `dyn_cluster` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    #[default]
    Constant,
    Halving,
    LinearDecay,
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(UpdateRule::Constant),
            "halving" => Ok(UpdateRule::Halving),
            "linear_decay" | "linear-decay" => Ok(UpdateRule::LinearDecay),
            other => Err(Error::Config(format!(
                "unknown update rule '{other}' (expected constant, halving or linear_decay)"
            ))),
        }
    }
}

/// Cluster count at `level` (1-based) for an initial count of `num_clusters`.
pub fn apply_update_rule(rule: UpdateRule, num_clusters: usize, level: usize) -> usize {
    let step = level.saturating_sub(1);
    match rule {
        UpdateRule::Constant => num_clusters,
        UpdateRule::Halving => {
            let div = 1usize.checked_shl(step as u32).unwrap_or(usize::MAX);
            (num_clusters / div).max(1)
        }
        UpdateRule::LinearDecay => num_clusters.saturating_sub(step).max(1),
    }
    .max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub max_level: usize,
    pub num_clusters: usize,
    pub dyn_cluster: bool,
    pub rule: UpdateRule,
    /// Cross-recording matching radius; `None` derives it per level.
    pub merge_radius: Option<f64>,
    pub pca_variance: f64,
    /// Scale applied to the time axis before clustering.
    pub time_weight: f64,
    pub seed: u64,
    /// K-Means runs per cluster, best WCSS kept.
    #[serde(default = "one")]
    pub kmeans_restarts: usize,
}

fn one() -> usize {
    1
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            max_level: 3,
            num_clusters: 4,
            dyn_cluster: false,
            rule: UpdateRule::Constant,
            merge_radius: None,
            pca_variance: 0.95,
            time_weight: 1.0,
            seed: 0,
            kmeans_restarts: 1,
        }
    }
}

impl BuildConfig {
    pub fn clusters_at(&self, level: usize) -> usize {
        if self.dyn_cluster {
            apply_update_rule(self.rule, self.num_clusters, level)
        } else {
            self.num_clusters
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_level < 1 {
            return Err(Error::Config("max level must be at least 1".into()));
        }
        if self.num_clusters < 1 {
            return Err(Error::Config("cluster count must be at least 1".into()));
        }
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::Config(format!("PCA variance fraction {} outside (0, 1]", self.pca_variance)));
        }
        if !(self.time_weight.is_finite() && self.time_weight > 0.0) {
            return Err(Error::Config(format!("time weight {} must be positive", self.time_weight)));
        }
        if let Some(r) = self.merge_radius {
            if r.is_nan() || r < 0.0 {
                return Err(Error::Config(format!("merge radius {r} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelNode {
    pub level: usize,
    /// Absolute position at level 1, shift from the parent cluster below.
    pub mean_shift: Vec<f64>,
    /// Number of shift vectors the shape was fit on.
    pub support: usize,
    pub shape: PrincipalComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPathModel {
    pub dim: usize,
    pub max_level: usize,
    pub build_config: BuildConfig,
    pub levels: Vec<Vec<ModelNode>>,
}

impl ScanPathModel {
    /// Number of levels that actually carry nodes.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn has_time(&self) -> bool {
        self.dim == 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::ModelFormat(format!("dimension {} is not 2 or 3", self.dim)));
        }
        if self.levels.is_empty() {
            return Err(Error::ModelFormat("model has no levels".into()));
        }
        for (i, level) in self.levels.iter().enumerate() {
            for node in level {
                if node.level != i + 1 {
                    return Err(Error::ModelFormat(format!(
                        "node tagged level {} stored at level {}",
                        node.level,
                        i + 1
                    )));
                }
                if node.support < 1 {
                    return Err(Error::ModelFormat(format!("level {} node has zero support", i + 1)));
                }
                let s = &node.shape;
                let dims_ok = node.mean_shift.len() == self.dim
                    && s.dim == self.dim
                    && s.mean_shift.len() == self.dim
                    && s.components.iter().all(|c| c.len() == self.dim)
                    && s.components.len() == s.variances.len()
                    && s.components.len() <= self.dim;
                if !dims_ok {
                    return Err(Error::ModelFormat(format!("level {} node has inconsistent dimensions", i + 1)));
                }
                if node.mean_shift.iter().chain(s.variances.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::ModelFormat(format!("level {} node has non-finite values", i + 1)));
                }
            }
        }
        Ok(())
    }
}

/// One cluster instance of the learned hierarchy: the points of one
/// recording that ended up in one cluster at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCluster {
    pub recording: usize,
    /// Indices into the recording's points.
    pub points: Vec<usize>,
    /// Mean of the points in clustering space.
    pub mean: Vec<f64>,
    /// Index of the parent cluster one level up; `None` at level 1.
    pub parent: Option<usize>,
    /// Node of the model this cluster contributed a shift to.
    pub node: usize,
}

/// The cluster instances behind a model, level by level.
#[derive(Debug, Clone, Default)]
pub struct HierarchyTrace {
    pub levels: Vec<Vec<TraceCluster>>,
}

/// Clustering-space coordinates of every recording (time scaled by
/// `time_weight` when present).
pub fn clustering_coordinates(dataset: &Dataset, time_weight: f64) -> Result<(usize, Vec<Vec<Vec<f64>>>)> {
    if dataset.is_empty() {
        return Err(Error::Argument("cannot build a model from an empty dataset".into()));
    }
    let timed = dataset.recordings[0].has_time();
    if dataset.recordings.iter().any(|r| r.has_time() != timed) {
        return Err(Error::Schema("recordings mix 2-D and 3-D (timed) gaze data".into()));
    }
    let coords = dataset
        .recordings
        .iter()
        .map(|r| {
            r.points()
                .iter()
                .map(|p| match p.t {
                    Some(t) => vec![p.x, p.y, t * time_weight],
                    None => vec![p.x, p.y],
                })
                .collect()
        })
        .collect();
    Ok((if timed { 3 } else { 2 }, coords))
}

pub fn generate_model(dataset: &Dataset, config: &BuildConfig) -> Result<ScanPathModel> {
    generate_model_traced(dataset, config).map(|(m, _)| m)
}

struct Parent {
    recording: usize,
    points: Vec<usize>,
    /// Shifts of this cluster's children are measured from here.
    reference: Vec<f64>,
}

struct GroupOutcome {
    nodes: Vec<ModelNode>,
    /// (parent index, points, mean, node index within this group's nodes)
    children: Vec<(usize, Vec<usize>, Vec<f64>, usize)>,
}

/// Builds the model and also returns the cluster instances it was built
/// from.
pub fn generate_model_traced(dataset: &Dataset, config: &BuildConfig) -> Result<(ScanPathModel, HierarchyTrace)> {
    config.validate()?;
    let (dim, coords) = clustering_coordinates(dataset, config.time_weight)?;

    // the whole dataset acts as the virtual parent of level 1
    let mut parents: Vec<Parent> = coords
        .iter()
        .enumerate()
        .map(|(r, pts)| Parent { recording: r, points: (0..pts.len()).collect(), reference: vec![0.0; dim] })
        .collect();
    let mut parent_groups: Vec<Vec<usize>> = vec![(0..parents.len()).collect()];

    let mut levels = Vec::new();
    let mut trace = HierarchyTrace::default();

    for level in 1..=config.max_level {
        let k = config.clusters_at(level);
        let min_points = if level == 1 { 1 } else { 2 };

        let outcomes: Vec<Result<GroupOutcome>> = parent_groups
            .par_iter()
            .map(|group| {
                let members: Vec<usize> =
                    group.iter().copied().filter(|&p| parents[p].points.len() >= min_points).collect();
                if members.is_empty() {
                    return Ok(GroupOutcome { nodes: Vec::new(), children: Vec::new() });
                }
                build_group(&parents, &members, &coords, dataset, k, level, config)
            })
            .collect();

        let mut nodes = Vec::new();
        let mut clusters = Vec::new();
        for outcome in outcomes {
            let outcome = outcome?;
            let offset = nodes.len();
            nodes.extend(outcome.nodes);
            for (parent, points, mean, node) in outcome.children {
                clusters.push(TraceCluster {
                    recording: parents[parent].recording,
                    points,
                    mean,
                    parent: (level > 1).then_some(parent),
                    node: offset + node,
                });
            }
        }
        if nodes.is_empty() {
            break;
        }

        parent_groups = vec![Vec::new(); nodes.len()];
        for (i, c) in clusters.iter().enumerate() {
            parent_groups[c.node].push(i);
        }
        parents = clusters
            .iter()
            .map(|c| Parent { recording: c.recording, points: c.points.clone(), reference: c.mean.clone() })
            .collect();
        levels.push(nodes);
        trace.levels.push(clusters);
    }

    let model = ScanPathModel { dim, max_level: config.max_level, build_config: config.clone(), levels };
    model.validate()?;
    Ok((model, trace))
}

fn build_group(
    parents: &[Parent],
    members: &[usize],
    coords: &[Vec<Vec<f64>>],
    dataset: &Dataset,
    k: usize,
    level: usize,
    config: &BuildConfig,
) -> Result<GroupOutcome> {
    let mut assignments: Vec<ClusterAssignment> = Vec::with_capacity(members.len());
    for &p in members {
        let parent = &parents[p];
        let pts: Vec<Vec<f64>> = parent.points.iter().map(|&i| coords[parent.recording][i].clone()).collect();
        let seed = rng::derive_seed(config.seed, &[level as u64, p as u64]);
        let mut a = clustering::kmeans_best_of(&pts, k, seed, config.kmeans_restarts)?;
        // match in shift space: subcluster mean relative to its own parent
        for c in a.centers.iter_mut() {
            for (v, r) in c.position.iter_mut().zip(&parent.reference) {
                *v -= r;
            }
        }
        assignments.push(a.with_recording(&dataset.recordings[parent.recording].id));
    }

    let groups = clustering::combine_close_subclusters(&assignments, config.merge_radius)?;
    let mut nodes = Vec::with_capacity(groups.len());
    let mut children = Vec::new();
    for (node_index, group) in groups.iter().enumerate() {
        let shifts: Vec<Vec<f64>> = group.members.iter().map(|m| m.centroid.position.clone()).collect();
        let shape = shape::fit_pca(&shifts, config.pca_variance)?;
        nodes.push(ModelNode { level, mean_shift: shape.mean_shift.clone(), support: shifts.len(), shape });
        for m in &group.members {
            let p = members[m.source];
            let parent = &parents[p];
            let points: Vec<usize> =
                assignments[m.source].members(m.cluster).iter().map(|&i| parent.points[i]).collect();
            let mean: Vec<f64> = m.centroid.position.iter().zip(&parent.reference).map(|(s, r)| s + r).collect();
            children.push((p, points, mean, node_index));
        }
    }
    Ok(GroupOutcome { nodes, children })
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: u32,
    #[serde(flatten)]
    model: &'a ScanPathModel,
}

pub fn model_to_string(model: &ScanPathModel) -> Result<String> {
    serde_json::to_string_pretty(&ModelFileRef { version: FORMAT_VERSION, model })
        .map_err(|e| Error::ModelFormat(e.to_string()))
}

/// Parses a model document, checking the format version before anything
/// else.
pub fn model_from_str(text: &str) -> Result<ScanPathModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line() as u64, message: e.to_string() })?;
    let version = value.get("version").ok_or_else(|| Error::ModelFormat("missing version field".into()))?;
    if version.as_u64() != Some(u64::from(FORMAT_VERSION)) {
        return Err(Error::Version { found: version.to_string(), expected: FORMAT_VERSION });
    }
    let model: ScanPathModel = serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &ScanPathModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model_to_string(model)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ScanPathModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::{ClassKey, GazePoint, GazeRecording};

    fn dataset(recs: Vec<Vec<(f64, f64)>>) -> Dataset {
        let recordings = recs
            .into_iter()
            .enumerate()
            .map(|(i, pts)| {
                GazeRecording::new(pts.into_iter().map(|(x, y)| GazePoint::new(x, y)).collect(), format!("r{i}"))
                    .unwrap()
            })
            .collect();
        Dataset::new(recordings, ClassKey::Participant)
    }

    #[test]
    fn update_rules() {
        assert_eq!(apply_update_rule(UpdateRule::Constant, 4, 3), 4);
        assert_eq!(apply_update_rule(UpdateRule::Halving, 8, 3), 2);
        assert_eq!(apply_update_rule(UpdateRule::Halving, 8, 60), 1);
        assert_eq!(apply_update_rule(UpdateRule::LinearDecay, 3, 5), 1);
        assert_eq!(apply_update_rule(UpdateRule::LinearDecay, 3, 2), 2);
        assert!(matches!("bogus".parse::<UpdateRule>(), Err(Error::Config(_))));
        assert_eq!("linear_decay".parse::<UpdateRule>().unwrap(), UpdateRule::LinearDecay);
    }

    #[test]
    fn repeated_point_collapses() {
        let ds = dataset(vec![vec![(0.3, 0.7); 10]]);
        let cfg = BuildConfig { max_level: 2, num_clusters: 2, ..BuildConfig::default() };
        let model = generate_model(&ds, &cfg).unwrap();
        assert_eq!(model.levels[0].len(), 1);
        let node = &model.levels[0][0];
        assert!((node.mean_shift[0] - 0.3).abs() < 1e-12 && (node.mean_shift[1] - 0.7).abs() < 1e-12);
        assert_eq!(node.shape.rank(), 0);
    }

    #[test]
    fn single_level() {
        let ds = dataset(vec![vec![(0.1, 0.1), (0.9, 0.9), (0.5, 0.5)]]);
        let cfg = BuildConfig { max_level: 1, num_clusters: 2, ..BuildConfig::default() };
        let model = generate_model(&ds, &cfg).unwrap();
        assert_eq!(model.depth(), 1);
    }

    #[test]
    fn empty_and_mixed_inputs_rejected() {
        let empty = Dataset::new(vec![], ClassKey::Participant);
        assert!(matches!(generate_model(&empty, &BuildConfig::default()), Err(Error::Argument(_))));
        let mixed = Dataset::new(
            vec![
                GazeRecording::new(vec![GazePoint::new(0.1, 0.1)], "a").unwrap(),
                GazeRecording::new(vec![GazePoint::timed(0.1, 0.1, 0.0)], "b").unwrap(),
            ],
            ClassKey::Participant,
        );
        assert!(matches!(generate_model(&mixed, &BuildConfig::default()), Err(Error::Schema(_))));
    }

    #[test]
    fn invalid_config_rejected() {
        let ds = dataset(vec![vec![(0.1, 0.1)]]);
        for cfg in [
            BuildConfig { max_level: 0, ..BuildConfig::default() },
            BuildConfig { num_clusters: 0, ..BuildConfig::default() },
            BuildConfig { pca_variance: 0.0, ..BuildConfig::default() },
            BuildConfig { time_weight: -1.0, ..BuildConfig::default() },
        ] {
            assert!(matches!(generate_model(&ds, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn time_is_scaled_into_clustering_space() {
        let rec =
            GazeRecording::new(vec![GazePoint::timed(0.2, 0.4, 0.0), GazePoint::timed(0.2, 0.4, 1.0)], "a").unwrap();
        let ds = Dataset::new(vec![rec], ClassKey::Participant);
        let (dim, coords) = clustering_coordinates(&ds, 2.0).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(coords[0][1], vec![0.2, 0.4, 2.0]);
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let ds = dataset(vec![vec![(0.1, 0.1), (0.2, 0.2)]]);
        let model = generate_model(&ds, &BuildConfig::default()).unwrap();
        let text = model_to_string(&model).unwrap().replacen("\"version\": 1", "\"version\": 7", 1);
        let err = model_from_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Version { .. }));
        assert!(msg.contains('7') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let ds = dataset(vec![vec![(0.1, 0.1), (0.2, 0.2)]]);
        let model = generate_model(&ds, &BuildConfig::default()).unwrap();
        let text = model_to_string(&model).unwrap();
        let cut = &text[..text.len() / 2];
        assert!(matches!(model_from_str(cut), Err(Error::Parse { .. })));
    }
}
