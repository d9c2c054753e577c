//! Turning a self-expression matrix into cluster labels: the usual
//! post-processing of `C`, a symmetric affinity, normalized spectral
//! clustering, and accuracy under the best label matching.

use crate::error::{Error, Result};
use crate::numlin::{svd, sym_eig, Matrix, Rng};
use crate::selfexpress::SelfExpression;

/// Degree floor for isolated vertices in the normalized Laplacian.
pub const DEGREE_FLOOR: f64 = 1e-12;
pub const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITERS: usize = 300;
/// Default per-subspace dimension guess used for the shape-interaction rank.
pub const DEFAULT_SUBSPACE_DIM: usize = 4;

/// Symmetric, nonnegative, zero-diagonal graph weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    a: Matrix,
}

impl Affinity {
    pub fn new(a: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dims("affinity", "square matrix", format!("{:?}", a.shape())));
        }
        if !a.is_finite() {
            return Err(Error::InvalidArgument("affinity has non-finite entries".into()));
        }
        if !a.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("affinity is not symmetric".into()));
        }
        let n = a.rows();
        for i in 0..n {
            if a[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("affinity diagonal entry {i} is nonzero")));
            }
            if a.row(i).iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidArgument(format!("affinity row {i} has a negative entry")));
            }
        }
        Ok(Affinity { a })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    /// Fraction of each column's ℓ1 mass kept by hard thresholding, in `(0, 1]`.
    pub keep_threshold: f64,
    /// Rank of the SVD behind the shape-interaction matrix.
    pub sim_rank: usize,
    /// Entrywise exponent, `≥ 1`.
    pub power: f64,
    pub enabled: bool,
    /// Scale each row of `U_r` to unit norm before forming `|U_r U_rᵀ|`.
    pub normalize_rows: bool,
}

impl PostprocessConfig {
    /// Defaults for `k` clusters: keep 90% of the mass, rank `4k`, square.
    pub fn for_clusters(k: usize) -> Self {
        PostprocessConfig {
            keep_threshold: 0.9,
            sim_rank: k * DEFAULT_SUBSPACE_DIM,
            power: 2.0,
            enabled: true,
            normalize_rows: true,
        }
    }

    pub fn disabled() -> Self {
        PostprocessConfig { enabled: false, ..Self::for_clusters(1) }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.keep_threshold > 0.0 && self.keep_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "keep_threshold must lie in (0, 1], got {}",
                self.keep_threshold
            )));
        }
        if !(self.power >= 1.0) || !self.power.is_finite() {
            return Err(Error::InvalidArgument(format!("power must be >= 1, got {}", self.power)));
        }
        if self.enabled && (self.sim_rank == 0 || self.sim_rank > n) {
            return Err(Error::InvalidArgument(format!(
                "sim_rank must lie in 1..={n}, got {}",
                self.sim_rank
            )));
        }
        Ok(())
    }
}

/// Zero the small entries of each column, keeping the largest magnitudes
/// until they carry `keep` of the column's ℓ1 mass.
pub fn threshold_columns(c: &Matrix, keep: f64) -> Matrix {
    let mut out = Matrix::zeros(c.rows(), c.cols());
    for j in 0..c.cols() {
        let col = c.column(j);
        let total: f64 = col.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            continue;
        }
        let mut order: Vec<usize> = (0..col.len()).collect();
        // Stable sort: equal magnitudes keep index order.
        order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()));
        let mut mass = 0.0;
        for i in order {
            if mass >= keep * total {
                break;
            }
            out[(i, j)] = col[i];
            mass += col[i].abs();
        }
    }
    out
}

/// Threshold, shape-interaction matrix, entrywise power. Disabled returns `|C|`.
pub fn postprocess_c(c: &SelfExpression, cfg: &PostprocessConfig) -> Result<Matrix> {
    let n = c.n();
    cfg.validate(n)?;
    if !cfg.enabled {
        return Ok(c.matrix().map(f64::abs));
    }
    let kept = threshold_columns(c.matrix(), cfg.keep_threshold);
    let dec = svd(&kept)?;
    let r = cfg.sim_rank.min(dec.s.len());
    let mut u = Matrix::from_fn(n, r, |i, j| dec.u[(i, j)]);
    if cfg.normalize_rows {
        for i in 0..n {
            let norm = crate::numlin::norm2(u.row(i));
            if norm > 0.0 {
                for v in u.row_mut(i) {
                    *v /= norm;
                }
            }
        }
    }
    let p = cfg.power;
    Ok(u.matmul_tr(&u).map(|v| v.abs().powf(p)))
}

/// `A = (|M| + |M|ᵀ)/2` with the diagonal zeroed.
pub fn affinity(m: &Matrix) -> Result<Affinity> {
    if !m.is_square() {
        return Err(Error::dims("affinity", "square matrix", format!("{:?}", m.shape())));
    }
    let n = m.rows();
    let a = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 * (m[(i, j)].abs() + m[(j, i)].abs()) });
    Affinity::new(a)
}

/// Normalized spectral clustering into `k` groups.
pub fn spectral_cluster(a: &Affinity, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={n}, got {k}")));
    }
    let inv_sqrt: Vec<f64> = a.matrix().row_sums().iter().map(|&d| 1.0 / d.max(DEGREE_FLOOR).sqrt()).collect();
    let am = a.matrix();
    let lap = Matrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * am[(i, j)] * inv_sqrt[j]
    });
    let eig = sym_eig(&lap)?;
    let mut points: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|j| eig.vectors[(i, j)]).collect()).collect();
    for p in &mut points {
        let norm = crate::numlin::norm2(p);
        if norm > 0.0 {
            p.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut rng = Rng::seed_from(seed);
    Ok(kmeans(&points, k, KMEANS_RESTARTS, &mut rng).labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and distance of the nearest centroid; ties go to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist_sq(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.index(n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform(0.0, total);
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.index(n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist_sq(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> KMeansResult {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed from the point farthest from its centroid.
                let far = (0..n).fold(0, |b, i| if dists[i] > dists[b] { i } else { b });
                centroids[c] = points[far].clone();
                dists[far] = 0.0;
                labels[far] = c;
                changed = true;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| dist_sq(p, &centroids[l])).sum();
    KMeansResult { labels, centroids, inertia }
}

/// k-means with k-means++ seeding, keeping the restart with the lowest
/// inertia (earliest restart on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, rng: &mut Rng) -> KMeansResult {
    assert!(!points.is_empty() && k >= 1 && k <= points.len(), "kmeans needs 1 <= k <= #points");
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, kmeans_pp_init(points, k, rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

/// Fraction of points labeled correctly under the best one-to-one matching
/// of predicted to true cluster ids.
pub fn accuracy(labels: &[usize], truth: &[usize]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::dims("accuracy", truth.len().to_string(), labels.len().to_string()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty labeling".into()));
    }
    let k = labels.iter().chain(truth).max().copied().unwrap_or(0) + 1;
    let mut counts = pathfinding::matrix::Matrix::new(k, k, 0i64);
    for (&l, &t) in labels.iter().zip(truth) {
        counts[(l, t)] += 1;
    }
    let (matched, _) = pathfinding::kuhn_munkres::kuhn_munkres(&counts);
    Ok(matched as f64 / labels.len() as f64)
}

/// Post-process, build the affinity and cluster.
pub fn cluster_c(c: &SelfExpression, cfg: &PostprocessConfig, k: usize, seed: u64) -> Result<Vec<usize>> {
    let m = postprocess_c(c, cfg)?;
    spectral_cluster(&affinity(&m)?, k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affinity_symmetrizes() {
        let a = affinity(&Matrix::from_rows(&[&[0.0, 2.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(a.matrix(), &Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
    }

    #[test]
    fn threshold_keeps_largest_mass() {
        let c = Matrix::column_vector(&[0.5, -0.3, 0.15, 0.05]);
        let t = threshold_columns(&c, 0.9);
        assert_eq!(t.column(0), vec![0.5, -0.3, 0.15, 0.0]);
        assert_eq!(threshold_columns(&c, 1.0), c);
    }

    #[test]
    fn two_blocks_are_separated() {
        let mut a = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                if i != j && (i < 3) == (j < 3) {
                    a[(i, j)] = 1.0;
                }
            }
        }
        let labels = spectral_cluster(&Affinity::new(a).unwrap(), 2, 0).unwrap();
        assert_eq!(accuracy(&labels, &[0, 0, 0, 1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_half_flipped() {
        assert_eq!(accuracy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }
}
