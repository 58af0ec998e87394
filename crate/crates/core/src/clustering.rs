//! Lloyd's K-Means with k-means++ seeding, and cross-recording matching of
//! cluster centroids.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

const MAX_LLOYD_ITERATIONS: usize = 300;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn mean_of<'a>(points: impl IntoIterator<Item = &'a Vec<f64>>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for p in points {
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
        n += 1;
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub position: Vec<f64>,
    pub count: usize,
    pub recording_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster index per input point.
    pub labels: Vec<usize>,
    pub centers: Vec<Centroid>,
    pub wcss: f64,
}

impl ClusterAssignment {
    pub fn with_recording(mut self, id: &str) -> Self {
        for c in &mut self.centers {
            c.recording_id = id.to_string();
        }
        self
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Indices of the input points assigned to `cluster`.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter_map(|(i, &l)| (l == cluster).then_some(i)).collect()
    }
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        // strict comparison: lowest index wins ties
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // fewer distinct points than k; empty clusters are dropped later
            centers.push(centers[centers.len() - 1].clone());
            continue;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = points.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if target < w {
                chosen = i;
                break;
            }
            target -= w;
        }
        let c = points[chosen].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn tally(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    (counts, sums)
}

/// Lloyd iterations from `centers` until the assignment stops changing.
fn lloyd(points: &[Vec<f64>], centers: &mut [Vec<f64>], dim: usize) -> Vec<usize> {
    let k = centers.len();
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;

        let (counts, sums) = tally(points, &labels, k, dim);
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        // reseed each empty cluster at the point farthest from its own center
        let mut taken = vec![false; points.len()];
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = points
                .iter()
                .enumerate()
                .filter(|&(i, _)| !taken[i] && counts[labels[i]] > 1)
                .map(|(i, p)| (i, sq_dist(p, &centers[labels[i]])))
                .filter(|&(_, d)| d > 0.0)
                .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                taken[i] = true;
                centers[j] = points[i].clone();
            }
        }
    }
    labels
}

/// One sweep of single-point moves that lower the WCSS (Hartigan's rule).
/// A Lloyd fixed point can still be improved this way; returns whether any
/// point moved.
fn hartigan_pass(points: &[Vec<f64>], labels: &mut [usize], k: usize, dim: usize) -> bool {
    let (mut counts, mut sums) = tally(points, labels, k, dim);
    let mut moved = false;
    for (i, p) in points.iter().enumerate() {
        let a = labels[i];
        if counts[a] < 2 {
            continue;
        }
        let mean = |j: usize, counts: &[usize], sums: &[Vec<f64>]| -> Vec<f64> {
            sums[j].iter().map(|s| s / counts[j] as f64).collect()
        };
        let na = counts[a] as f64;
        let remove = na / (na - 1.0) * sq_dist(p, &mean(a, &counts, &sums));
        let mut best = (a, remove);
        for b in (0..k).filter(|&b| b != a && counts[b] > 0) {
            let nb = counts[b] as f64;
            let add = nb / (nb + 1.0) * sq_dist(p, &mean(b, &counts, &sums));
            if add < best.1 - 1e-12 * remove.max(f64::MIN_POSITIVE) {
                best = (b, add);
            }
        }
        let b = best.0;
        if b != a {
            counts[a] -= 1;
            counts[b] += 1;
            for d in 0..dim {
                sums[a][d] -= p[d];
                sums[b][d] += p[d];
            }
            labels[i] = b;
            moved = true;
        }
    }
    moved
}

/// Clusters `points` into at most `k` non-empty clusters.
///
/// With `k >= points.len()` every point is its own cluster. Otherwise
/// k-means++ seeding is followed by Lloyd iterations until the assignment
/// stops changing (or 300 iterations), alternated with single-point moves
/// until neither improves the WCSS. If the points have fewer than `k`
/// distinct positions, the result has one cluster per distinct position.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::Argument("k-means needs k >= 1".into()));
    }
    if points.is_empty() {
        return Err(Error::Argument("k-means needs at least one point".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Argument("k-means points differ in dimension".into()));
    }

    if k >= points.len() {
        let centers =
            points.iter().map(|p| Centroid { position: p.clone(), count: 1, recording_id: String::new() }).collect();
        return Ok(ClusterAssignment { labels: (0..points.len()).collect(), centers, wcss: 0.0 });
    }

    let mut rng = rng::seeded(seed);
    let mut centers = kmeans_plus_plus(points, k, &mut rng);
    let mut labels = lloyd(points, &mut centers, dim);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        if !hartigan_pass(points, &mut labels, k, dim) {
            break;
        }
        let (counts, sums) = tally(points, &labels, k, dim);
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        labels = lloyd(points, &mut centers, dim);
    }

    // compact away clusters that stayed empty
    let (counts, sums) = tally(points, &labels, k, dim);
    let mut remap = vec![usize::MAX; k];
    let mut kept = Vec::new();
    for j in 0..k {
        if counts[j] > 0 {
            remap[j] = kept.len();
            let position = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            kept.push(Centroid { position, count: counts[j], recording_id: String::new() });
        }
    }
    let labels: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
    let wcss = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &kept[l].position)).sum();
    Ok(ClusterAssignment { labels, centers: kept, wcss })
}

/// Best-of-`restarts` K-Means by WCSS, seeds derived from `seed`.
pub fn kmeans_best_of(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    let mut best = kmeans(points, k, seed)?;
    for r in 1..restarts.max(1) {
        let candidate = kmeans(points, k, rng::derive_seed(seed, &[r as u64]))?;
        if candidate.wcss < best.wcss {
            best = candidate;
        }
    }
    Ok(best)
}

/// A matched centroid: which assignment it came from and which cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMember {
    pub source: usize,
    pub cluster: usize,
    pub centroid: Centroid,
}

/// Centroids from different recordings judged to be the same cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGroup {
    pub members: Vec<GroupMember>,
    /// Count-weighted mean of the member positions.
    pub group_mean: Vec<f64>,
}

impl ClusterGroup {
    fn singleton(member: GroupMember) -> Self {
        ClusterGroup { group_mean: member.centroid.position.clone(), members: vec![member] }
    }

    fn total_count(&self) -> usize {
        self.members.iter().map(|m| m.centroid.count).sum()
    }

    fn shares_recording(&self, other: &ClusterGroup) -> bool {
        self.members.iter().any(|a| {
            other.members.iter().any(|b| {
                a.source == b.source
                    || (!a.centroid.recording_id.is_empty() && a.centroid.recording_id == b.centroid.recording_id)
            })
        })
    }

    fn absorb(&mut self, other: ClusterGroup) {
        let (na, nb) = (self.total_count() as f64, other.total_count() as f64);
        for (m, o) in self.group_mean.iter_mut().zip(&other.group_mean) {
            *m = (*m * na + o * nb) / (na + nb);
        }
        self.members.extend(other.members);
    }
}

/// Default matching radius: twice the mean distance from each centroid to
/// the nearest other centroid of the same recording. `None` when no
/// recording has two centroids.
pub fn default_merge_radius(per_recording: &[ClusterAssignment]) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for a in per_recording {
        for (i, c) in a.centers.iter().enumerate() {
            let nearest = a
                .centers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| sq_dist(&c.position, &o.position).sqrt())
                .fold(f64::INFINITY, f64::min);
            if nearest.is_finite() {
                total += nearest;
                n += 1;
            }
        }
    }
    (n > 0).then(|| 2.0 * total / n as f64)
}

/// Greedy agglomerative matching of centroids across recordings.
///
/// All centroids start as singleton groups. The closest pair of groups (by
/// group mean) that shares no recording is merged, repeatedly, while that
/// distance is within `merge_radius`. With `merge_radius = None` the
/// [`default_merge_radius`] is used, and when that is undefined (every
/// recording has a single centroid) any distance qualifies.
pub fn combine_close_subclusters(
    per_recording: &[ClusterAssignment],
    merge_radius: Option<f64>,
) -> Result<Vec<ClusterGroup>> {
    if per_recording.is_empty() {
        return Err(Error::Argument("nothing to match: no cluster assignments".into()));
    }
    let radius = merge_radius.or_else(|| default_merge_radius(per_recording)).unwrap_or(f64::INFINITY);
    let radius_sq = radius * radius;

    let mut groups: Vec<ClusterGroup> = per_recording
        .iter()
        .enumerate()
        .flat_map(|(source, a)| {
            a.centers
                .iter()
                .enumerate()
                .map(move |(cluster, c)| ClusterGroup::singleton(GroupMember { source, cluster, centroid: c.clone() }))
        })
        .collect();

    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..groups.len() {
            for j in (i + 1)..groups.len() {
                let d = sq_dist(&groups[i].group_mean, &groups[j].group_mean);
                if d > radius_sq || best.is_some_and(|(_, _, bd)| bd <= d) {
                    continue;
                }
                if groups[i].shares_recording(&groups[j]) {
                    continue;
                }
                best = Some((i, j, d));
            }
        }
        match best {
            Some((i, j, _)) => {
                let other = groups.remove(j);
                groups[i].absorb(other);
            }
            None => break,
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[(f64, f64)]) -> Vec<Vec<f64>> {
        raw.iter().map(|&(x, y)| vec![x, y]).collect()
    }

    #[test]
    fn two_pairs() {
        let points = pts(&[(0.0, 0.0), (0.0, 0.1), (1.0, 1.0), (1.0, 0.9)]);
        let a = kmeans(&points, 2, 3).unwrap();
        let mut centers: Vec<Vec<f64>> = a.centers.iter().map(|c| c.position.clone()).collect();
        centers.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!((centers[0][0] - 0.0).abs() < 1e-12 && (centers[0][1] - 0.05).abs() < 1e-12);
        assert!((centers[1][0] - 1.0).abs() < 1e-12 && (centers[1][1] - 0.95).abs() < 1e-12);
        assert!((a.wcss - 0.01).abs() < 1e-12);
    }

    #[test]
    fn k_one_is_the_mean() {
        let points = pts(&[(0.0, 0.0), (2.0, 0.0), (1.0, 3.0)]);
        let a = kmeans(&points, 1, 0).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0]);
        assert!((a.centers[0].position[0] - 1.0).abs() < 1e-12);
        assert!((a.centers[0].position[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_become_singletons() {
        let points = pts(&[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]);
        let a = kmeans(&points, 5, 0).unwrap();
        assert_eq!(a.k(), 3);
        assert_eq!(a.labels, vec![0, 1, 2]);
        assert_eq!(a.wcss, 0.0);
    }

    #[test]
    fn duplicates_collapse_to_distinct_positions() {
        let points = vec![vec![0.3, 0.3]; 10];
        let a = kmeans(&points, 2, 0).unwrap();
        assert_eq!(a.k(), 1);
        assert_eq!(a.centers[0].count, 10);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(kmeans(&[], 2, 0), Err(Error::Argument(_))));
        assert!(matches!(kmeans(&pts(&[(0.0, 0.0)]), 0, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn deterministic_for_seed() {
        let points: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0]).collect();
        assert_eq!(kmeans(&points, 4, 11).unwrap(), kmeans(&points, 4, 11).unwrap());
    }

    fn assignment(id: &str, centers: &[(f64, f64)]) -> ClusterAssignment {
        ClusterAssignment {
            labels: (0..centers.len()).collect(),
            centers: centers
                .iter()
                .map(|&(x, y)| Centroid { position: vec![x, y], count: 1, recording_id: id.into() })
                .collect(),
            wcss: 0.0,
        }
    }

    #[test]
    fn matches_nearby_centroids_across_recordings() {
        let a = assignment("a", &[(0.2, 0.2), (0.8, 0.8)]);
        let b = assignment("b", &[(0.21, 0.19), (0.79, 0.82)]);
        let groups = combine_close_subclusters(&[a, b], Some(0.3)).unwrap();
        assert_eq!(groups.len(), 2);
        for g in &groups {
            assert_eq!(g.members.len(), 2);
            assert_ne!(g.members[0].source, g.members[1].source);
        }
    }

    #[test]
    fn single_recording_never_merges() {
        let a = assignment("a", &[(0.2, 0.2), (0.21, 0.2), (0.8, 0.8)]);
        let groups = combine_close_subclusters(&[a], Some(1.0)).unwrap();
        assert_eq!(groups.len(), 3);
    }

    #[test]
    fn far_apart_centroids_stay_single() {
        let a = assignment("a", &[(0.0, 0.0)]);
        let b = assignment("b", &[(1.0, 1.0)]);
        let groups = combine_close_subclusters(&[a, b], Some(0.3)).unwrap();
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn group_mean_is_count_weighted() {
        let mut a = assignment("a", &[(0.0, 0.0)]);
        a.centers[0].count = 3;
        let b = assignment("b", &[(0.4, 0.0)]);
        let groups = combine_close_subclusters(&[a, b], Some(1.0)).unwrap();
        assert_eq!(groups.len(), 1);
        assert!((groups[0].group_mean[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(combine_close_subclusters(&[], None).is_err());
    }
}
