//! Symmetric eigendecomposition by cyclic Jacobi rotations, and
//! Gram–Schmidt orthonormalization.

use crate::error::{Error, Result};

use super::matrix::Matrix;

pub const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// Eigenpairs of a symmetric matrix.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls to `tol * ‖A‖_F`;
/// after [`MAX_SWEEPS`] sweeps a convergence error is returned carrying the
/// remaining relative off-diagonal mass.
pub fn sym_eigen(a: &Matrix, tol: f64) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::shape("sym_eigen", format!("{:?} is not square", a.shape())));
    }
    let scale = a.max_abs().max(1.0);
    let asym = a.asymmetry().unwrap_or(0.0);
    if asym > 1e-12 * scale {
        return Err(Error::Contract(format!(
            "sym_eigen input is not symmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let frob = a.frobenius_norm();
    let target = tol * frob;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&m);
        if off > target {
            return Err(Error::Convergence {
                what: "Jacobi eigensolver",
                iterations: MAX_SWEEPS,
                residual: if frob > 0.0 { off / frob } else { off },
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = v.select_columns(&order);
    Ok(SymEigen { values, vectors })
}

/// Applies the Jacobi rotation in the (p, q) plane: m ← Jᵀ m J, v ← v J.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Orthonormal basis for the column span of `a` (same column count).
///
/// Modified Gram–Schmidt with one re-orthogonalization pass. A column whose
/// norm after projection drops below `1e-10` of its original norm is treated
/// as linearly dependent.
pub fn orth(a: &Matrix) -> Result<Matrix> {
    let (rows, cols) = a.shape();
    if rows < cols {
        return Err(Error::Degenerate(format!(
            "orth needs rows >= cols, got {rows}x{cols}"
        )));
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let original = a.column(j);
        let norm0 = original.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut w = original;
        for _pass in 0..2 {
            for prev in &q {
                let proj: f64 = prev.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (wi, pi) in w.iter_mut().zip(prev) {
                    *wi -= proj * pi;
                }
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            return Err(Error::Degenerate(format!(
                "orth: column {j} is linearly dependent on the preceding columns"
            )));
        }
        w.iter_mut().for_each(|x| *x /= norm);
        q.push(w);
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, col) in q.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    Ok(out)
}
