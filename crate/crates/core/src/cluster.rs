//! From solver states to cluster labels: `mat`/`vec`, affinities, and
//! spectral clustering with a k-means++ back end.
//!
//! The state layout is the strict lower triangle of `C`, column by column:
//! `(1,0), (2,0), …, (N−1,0), (2,1), …, (N−1,N−2)`. Checkpoints depend on
//! this order.

use crate::error::{Error, Result};
use crate::field::StateVector;
use crate::numcore::tape::{side_from_pair_count, strict_lower, sym_from_strict_lower};
use crate::numcore::{sym_eigen, Matrix, Rng};

/// Symmetric, zero-diagonal N×N coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffMatrix(Matrix);

impl CoeffMatrix {
    /// Accepts `c` only if it is exactly symmetric with a zero diagonal.
    pub fn try_from_matrix(c: Matrix) -> Result<Self> {
        if !c.is_square() {
            return Err(Error::shape("vec", format!("{:?} is not square", c.shape())));
        }
        let n = c.rows();
        for i in 0..n {
            if c[(i, i)] != 0.0 {
                return Err(Error::Contract(format!("diagonal entry ({i},{i}) is {}", c[(i, i)])));
            }
            for j in 0..i {
                if c[(i, j)] != c[(j, i)] {
                    return Err(Error::Contract(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(CoeffMatrix(c))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn points(&self) -> usize {
        self.0.rows()
    }
}

/// Scatters a state vector into its coefficient matrix.
pub fn mat(h: &StateVector) -> Result<CoeffMatrix> {
    if h.cols() != 1 {
        return Err(Error::shape("mat", format!("expected a column vector, got {:?}", h.shape())));
    }
    sym_from_strict_lower(h.as_slice()).map(CoeffMatrix)
}

/// Inverse of [`mat`].
pub fn vec(c: &CoeffMatrix) -> StateVector {
    Matrix::column_vector(strict_lower(&c.0))
}

/// Number of points N for a state of the given length.
pub fn points_for_state_len(len: usize) -> Option<usize> {
    side_from_pair_count(len)
}

/// `|C| + |C|ᵀ` with the diagonal forced to zero.
pub fn affinity(c: &Matrix) -> Result<Matrix> {
    if !c.is_square() {
        return Err(Error::shape("affinity", format!("{:?} is not square", c.shape())));
    }
    let n = c.rows();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[(i, j)] = c[(i, j)].abs() + c[(j, i)].abs();
            }
        }
    }
    Ok(a)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    assignment: Vec<usize>,
    k: usize,
}

impl Labels {
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&l| l >= k) {
            return Err(Error::Contract(format!("label {bad} is not below k = {k}")));
        }
        Ok(Labels { assignment, k })
    }

    /// Labels with `k` inferred as one more than the largest label.
    pub fn from_assignment(assignment: Vec<usize>) -> Self {
        let k = assignment.iter().max().map_or(1, |m| m + 1);
        Labels { assignment, k }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Renames labels in order of first appearance; `k` is unchanged.
    pub fn canonicalize(&self) -> Labels {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Labels {
            assignment,
            k: self.k,
        }
    }

    pub fn permuted(&self, order: &[usize]) -> Labels {
        Labels {
            assignment: order.iter().map(|&i| self.assignment[i]).collect(),
            k: self.k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    pub eigen_tol: f64,
}

impl ClusterConfig {
    pub fn new(k: usize) -> Self {
        ClusterConfig {
            k,
            restarts: 20,
            eigen_tol: 1e-12,
        }
    }
}

pub const KMEANS_MAX_ITERS: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Within-cluster sum of squares of `labels` over the rows of `points`.
pub fn wcss(points: &Matrix, labels: &[usize], k: usize) -> f64 {
    let d = points.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, &x) in sums[l].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| if c > 0 { v / c as f64 } else { 0.0 }).collect())
        .collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), &centroids[l]))
        .sum()
}

fn seed_plus_plus(points: &Matrix, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centers = vec![points.row(rng.below(n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(row: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(points: &Matrix, mut centers: Vec<Vec<f64>>) -> Vec<usize> {
    let (n, d) = points.shape();
    let k = centers.len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, dist) = nearest(points.row(i), &centers);
            dists[i] = dist;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far.filter(|&i| dists[i] > 0.0) {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] += 1;
                dists[i] = 0.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        for (i, &l) in labels.iter().enumerate() {
            for (s, &x) in sums[l].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    labels
}

/// k-means++ with `restarts` independent runs; the lowest WCSS wins (first
/// on ties). Labels are canonicalized by first occurrence.
pub fn kmeans(points: &Matrix, k: usize, rng: &mut Rng, restarts: usize) -> Result<Labels> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("k = {k} must be in 1..={n}")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut sub = rng.fork();
        let centers = seed_plus_plus(points, k, &mut sub);
        let labels = lloyd(points, centers);
        let score = wcss(points, &labels, k);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    Ok(Labels::new(labels, k)?.canonicalize())
}

/// Rows of the k leading eigenvectors of `I − D^{−1/2} A D^{−1/2}`,
/// normalized to unit length (zero rows stay zero).
pub fn spectral_embedding(a: &Matrix, k: usize, eigen_tol: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::shape("spectral_cluster", format!("{:?} is not square", a.shape())));
    }
    let n = a.rows();
    if k < 1 || k > n {
        return Err(Error::Contract(format!("k = {k} must be in 1..={n}")));
    }
    if a.as_slice().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Contract("affinity must be finite and nonnegative".into()));
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = a.row(i).iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut lap = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let norm = inv_sqrt[i] * a[(i, j)] * inv_sqrt[j];
            lap[(i, j)] = if i == j { 1.0 - norm } else { -norm };
        }
    }
    // Exact symmetry for the eigensolver's check.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (lap[(i, j)] + lap[(j, i)]);
            lap[(i, j)] = v;
            lap[(j, i)] = v;
        }
    }
    let eig = sym_eigen(&lap, eigen_tol)?;
    let mut emb = eig.vectors.leading_columns(k);
    for i in 0..n {
        let norm = emb.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..k {
                emb[(i, j)] /= norm;
            }
        }
    }
    Ok(emb)
}

pub fn spectral_cluster(a: &Matrix, cfg: &ClusterConfig, rng: &mut Rng) -> Result<Labels> {
    if cfg.k < 2 {
        return Err(Error::Contract(format!("spectral clustering needs k >= 2, got {}", cfg.k)));
    }
    if a.is_square() && cfg.k > a.rows() {
        return Err(Error::Contract(format!("k = {} exceeds N = {}", cfg.k, a.rows())));
    }
    let emb = spectral_embedding(a, cfg.k, cfg.eigen_tol)?;
    kmeans(&emb, cfg.k, rng, cfg.restarts)
}
