//! Active shape model over shift vectors: PCA of the sample covariance plus
//! sampling of new shifts along the retained modes.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Weights are drawn from a normal distribution truncated at this many
/// standard deviations.
pub const WEIGHT_TRUNCATION: f64 = 3.0;

/// Relative eigenvalue floor below which a mode counts as zero variance.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalComponents {
    pub mean_shift: Vec<f64>,
    /// Orthonormal rows, one per retained mode.
    pub components: Vec<Vec<f64>>,
    /// Per-mode variance, non-increasing.
    pub variances: Vec<f64>,
    pub dim: usize,
}

impl PrincipalComponents {
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    /// A zero-rank model at `mean`.
    pub fn point(mean: Vec<f64>) -> Self {
        let dim = mean.len();
        PrincipalComponents { mean_shift: mean, components: Vec::new(), variances: Vec::new(), dim }
    }

    /// Coordinates of `shift` along each retained component.
    pub fn project(&self, shift: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(shift.iter().zip(&self.mean_shift)).map(|(ci, (s, m))| ci * (s - m)).sum())
            .collect()
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
/// Returns (eigenvalues, eigenvectors as rows).
pub(crate) fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (upper, lower) = a.split_at_mut(q);
                for (apk, aqk) in upper[p].iter_mut().zip(lower[0].iter_mut()) {
                    let (x, y) = (*apk, *aqk);
                    *apk = c * x - s * y;
                    *aqk = s * x + c * y;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let values: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    // columns of v are the eigenvectors
    let vectors: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Fits the shift distribution: mean, and the fewest leading covariance
/// modes whose variance reaches `variance_fraction` of the total.
///
/// Uses the sample covariance (divisor n - 1). A single shift, or shifts
/// with no spread, give a zero-rank model.
pub fn fit_pca(shifts: &[Vec<f64>], variance_fraction: f64) -> Result<PrincipalComponents> {
    if shifts.is_empty() {
        return Err(Error::Argument("PCA needs at least one shift vector".into()));
    }
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::Argument(format!("variance fraction {variance_fraction} outside (0, 1]")));
    }
    let dim = shifts[0].len();
    if shifts.iter().any(|s| s.len() != dim) {
        return Err(Error::Argument("shift vectors differ in dimension".into()));
    }
    let n = shifts.len();
    let mean = crate::clustering::mean_of(shifts, dim);
    if n == 1 {
        return Ok(PrincipalComponents::point(mean));
    }

    let mut cov = vec![vec![0.0; dim]; dim];
    for s in shifts {
        let c: Vec<f64> = s.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..dim {
            for j in 0..dim {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for row in cov.iter_mut() {
        row.iter_mut().for_each(|v| *v /= (n - 1) as f64);
    }

    let (values, vectors) = symmetric_eigen(&cov);
    let mut modes: Vec<(f64, Vec<f64>)> = values.into_iter().zip(vectors).collect();
    modes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let largest = modes.first().map_or(0.0, |m| m.0).max(0.0);
    for m in modes.iter_mut() {
        if m.0 <= EIGEN_FLOOR * largest || m.0 < 0.0 {
            m.0 = 0.0;
        }
        // sign convention: largest-magnitude entry positive
        let pivot = m.1.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            m.1.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let total: f64 = modes.iter().map(|m| m.0).sum();
    let max_rank = (n - 1).min(dim);

    let mut components = Vec::new();
    let mut variances = Vec::new();
    if total > 0.0 {
        let mut cumulative = 0.0;
        for (value, vector) in modes.into_iter().take(max_rank) {
            if value <= 0.0 || cumulative >= variance_fraction * total {
                break;
            }
            cumulative += value;
            components.push(vector);
            variances.push(value);
        }
    }
    Ok(PrincipalComponents { mean_shift: mean, components, variances, dim })
}

/// `mean_shift + Σ weights[i] · components[i]`.
pub fn synthesize_shift(pc: &PrincipalComponents, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != pc.rank() {
        return Err(Error::Argument(format!("expected {} shape weights, got {}", pc.rank(), weights.len())));
    }
    let mut out = pc.mean_shift.clone();
    for (w, comp) in weights.iter().zip(&pc.components) {
        for (o, c) in out.iter_mut().zip(comp) {
            *o += w * c;
        }
    }
    Ok(out)
}

/// One weight per mode, drawn from N(0, variance) truncated at ±3σ.
pub fn sample_weights(pc: &PrincipalComponents, rng: &mut Rng) -> Vec<f64> {
    pc.variances
        .iter()
        .map(|&var| {
            let z = loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= WEIGHT_TRUNCATION {
                    break z;
                }
            };
            z * var.max(0.0).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn two_point_case() {
        let pc = fit_pca(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 0.95).unwrap();
        assert_eq!(pc.mean_shift, vec![0.0, 0.0]);
        assert_eq!(pc.rank(), 1);
        assert!((pc.components[0][0].abs() - 1.0).abs() < 1e-15);
        assert!(pc.components[0][1].abs() < 1e-15);
        assert!((pc.variances[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_shifts_have_no_modes() {
        let pc = fit_pca(&vec![vec![0.2, 0.1]; 4], 0.95).unwrap();
        assert_eq!(pc.rank(), 0);
        assert!(pc.variances.is_empty());
        assert_eq!(pc.mean_shift, vec![0.2, 0.1]);
    }

    #[test]
    fn single_sample_is_zero_rank() {
        let pc = fit_pca(&[vec![0.4, 0.5, 0.6]], 0.95).unwrap();
        assert_eq!(pc.rank(), 0);
        assert_eq!(pc.mean_shift, vec![0.4, 0.5, 0.6]);
        assert_eq!(pc.dim, 3);
    }

    #[test]
    fn collinear_3d_points_have_rank_one() {
        let dir = [1.0, 2.0, -0.5];
        let shifts: Vec<Vec<f64>> =
            [-2.0, -0.5, 0.3, 1.1, 4.0].iter().map(|&s| dir.iter().map(|d| 0.1 + s * d).collect()).collect();
        let pc = fit_pca(&shifts, 0.95).unwrap();
        assert_eq!(pc.rank(), 1);
    }

    #[test]
    fn bad_arguments() {
        assert!(fit_pca(&[], 0.9).is_err());
        assert!(fit_pca(&[vec![0.0]], 0.0).is_err());
        assert!(fit_pca(&[vec![0.0]], 1.5).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let pc = PrincipalComponents {
            mean_shift: vec![0.1, 0.2],
            components: vec![vec![1.0, 0.0]],
            variances: vec![1.0],
            dim: 2,
        };
        assert_eq!(synthesize_shift(&pc, &[0.0]).unwrap(), vec![0.1, 0.2]);
        let s = synthesize_shift(&pc, &[0.5]).unwrap();
        assert!((s[0] - 0.6).abs() < 1e-15 && (s[1] - 0.2).abs() < 1e-15);
        let plus = synthesize_shift(&pc, &[0.3]).unwrap();
        let minus = synthesize_shift(&pc, &[-0.3]).unwrap();
        assert!(((plus[0] + minus[0]) / 2.0 - 0.1).abs() < 1e-15);
        assert!(matches!(synthesize_shift(&pc, &[]), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_rank_and_zero_variance_weights() {
        let mut r = rng::seeded(1);
        assert!(sample_weights(&PrincipalComponents::point(vec![0.0, 0.0]), &mut r).is_empty());
        let pc = PrincipalComponents {
            mean_shift: vec![0.0, 0.0],
            components: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            variances: vec![1.0, 0.0],
            dim: 2,
        };
        for _ in 0..100 {
            assert_eq!(sample_weights(&pc, &mut r)[1], 0.0);
        }
    }

    #[test]
    fn truncated_weight_variance() {
        // Var of N(0,1) truncated at ±3 is 1 - 6φ(3)/(2Φ(3)-1) ≈ 0.9733
        let pc =
            PrincipalComponents { mean_shift: vec![0.0], components: vec![vec![1.0]], variances: vec![1.0], dim: 1 };
        let mut r = rng::seeded(42);
        let samples: Vec<f64> = (0..10_000).map(|_| sample_weights(&pc, &mut r)[0]).collect();
        assert!(samples.iter().all(|w| w.abs() <= 3.0));
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        assert!((0.85..=1.05).contains(&var), "variance {var}");
    }

    #[test]
    fn jacobi_diagonalizes() {
        let m = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]];
        let (vals, vecs) = symmetric_eigen(&m);
        for (lambda, v) in vals.iter().zip(&vecs) {
            for i in 0..3 {
                let mv: f64 = (0..3).map(|j| m[i][j] * v[j]).sum();
                assert!((mv - lambda * v[i]).abs() < 1e-12);
            }
        }
    }
}
