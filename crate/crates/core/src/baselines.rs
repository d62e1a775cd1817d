//! Comparison methods: static sparse subspace clustering, AFFECT affinity
//! smoothing, and the linear CESM model.
//!
//! All ℓ1 problems go through one proximal-gradient solver for
//!
//! ```text
//! min_C ‖C‖₁ + λ‖B − A C‖_F²   subject to diag(C) = 0
//! ```
//!
//! Static SSC is `A = B = X`. The CESM innovation step is `A = αX`,
//! `B = X − (1−α) X C_prev`.

use crate::error::{Error, Result};
use crate::io::TimeSeriesDataset;
use crate::numcore::{sym_eigen, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepRule {
    /// `1 / L` with `L = 2λ‖A‖₂²`.
    Fixed,
    /// Halve from the previous step until the quadratic upper bound holds.
    Backtracking,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SscConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once a proximal step moves C by less than this, relative to
    /// `max(‖C‖_F, 1)`.
    pub tolerance: f64,
    pub step: StepRule,
    /// Monotone FISTA momentum; plain ISTA when false.
    pub accelerate: bool,
}

impl Default for SscConfig {
    fn default() -> Self {
        SscConfig {
            lambda: 10.0,
            max_iters: 20000,
            tolerance: 1e-9,
            step: StepRule::Backtracking,
            accelerate: true,
        }
    }
}

impl SscConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("ssc lambda must be positive, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("ssc max_iters must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("ssc tolerance must be nonnegative, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LassoSolution {
    pub coefficients: Matrix,
    pub objective: f64,
    pub iterations: usize,
    /// Objective before the first step and after every iteration.
    pub history: Vec<f64>,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `‖C‖₁ + λ‖B − AC‖²` and the residual `B − AC`.
fn lasso_objective(a: &Matrix, b: &Matrix, c: &Matrix, lambda: f64) -> Result<(f64, Matrix)> {
    let r = b.sub(&a.matmul(c)?)?;
    Ok((c.abs_sum() + lambda * r.frobenius_sq(), r))
}

/// Largest eigenvalue of `AᵀA`, computed on the smaller Gram side.
fn gram_norm(a: &Matrix) -> Result<f64> {
    let g = if a.rows() <= a.cols() {
        a.matmul_nt(a)?
    } else {
        a.matmul_tn(a)?
    };
    let e = sym_eigen(&symmetrized(g), 1e-14)?;
    Ok(e.values.last().copied().unwrap_or(0.0).max(0.0))
}

fn symmetrized(mut g: Matrix) -> Matrix {
    let n = g.rows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Proximal gradient for the zero-diagonal lasso in the module docs.
pub fn lasso_zero_diag(
    a: &Matrix,
    b: &Matrix,
    warm: Option<&Matrix>,
    cfg: &SscConfig,
) -> Result<LassoSolution> {
    cfg.validate()?;
    let n = a.cols();
    if a.rows() != b.rows() || b.cols() != n {
        return Err(Error::shape(
            "lasso_zero_diag",
            format!("A is {:?}, B is {:?}; need D×N and D×N", a.shape(), b.shape()),
        ));
    }
    if n < 2 {
        return Err(Error::Contract("self-expression needs at least 2 points".into()));
    }
    let lambda = cfg.lambda;
    let mut c = match warm {
        Some(w) if w.shape() == (n, n) => w.clone(),
        Some(w) => {
            return Err(Error::shape(
                "lasso_zero_diag",
                format!("warm start is {:?}, need {n}x{n}", w.shape()),
            ))
        }
        None => Matrix::zeros(n, n),
    };
    for i in 0..n {
        c[(i, i)] = 0.0;
    }

    let (mut obj, mut resid) = lasso_objective(a, b, &c, lambda)?;
    if !obj.is_finite() {
        return Err(Error::NonFinite { what: "ssc", iteration: 0 });
    }
    let mut history = vec![obj];
    let lip = 2.0 * lambda * gram_norm(a)?;
    if lip == 0.0 {
        // No smooth term: the minimizer is C = 0.
        let zero = Matrix::zeros(n, n);
        let (o, _) = lasso_objective(a, b, &zero, lambda)?;
        history.push(o);
        return Ok(LassoSolution {
            coefficients: zero,
            objective: o,
            iterations: 1,
            history,
        });
    }
    let mut step = 1.0 / lip;
    let mut iterations = 0;
    // Extrapolation point and its residual; y = C throughout for plain ISTA.
    let mut y = c.clone();
    let mut y_resid = resid.clone();
    let mut momentum: f64 = 1.0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        // ∇ of λ‖B − AC‖² is −2λ Aᵀ R.
        let grad = a.matmul_tn(&y_resid)?.scale(-2.0 * lambda);
        let smooth = lambda * y_resid.frobenius_sq();
        let (z, z_obj, z_resid) = loop {
            let mut cand = y.zip_with(&grad, "ista step", |yi, gi| yi - step * gi)?;
            for v in cand.as_mut_slice() {
                *v = soft_threshold(*v, step);
            }
            for i in 0..n {
                cand[(i, i)] = 0.0;
            }
            let (cand_obj, cand_resid) = lasso_objective(a, b, &cand, lambda)?;
            if !cand_obj.is_finite() {
                return Err(Error::NonFinite { what: "ssc", iteration: it });
            }
            if cfg.step == StepRule::Fixed {
                break (cand, cand_obj, cand_resid);
            }
            let diff = cand.sub(&y)?;
            let bound = smooth + grad.dot(&diff)? + diff.frobenius_sq() / (2.0 * step);
            let cand_smooth = cand_obj - cand.abs_sum();
            if cand_smooth <= bound + 1e-12 * bound.abs().max(1.0) || step < 1e-3 / lip {
                break (cand, cand_obj, cand_resid);
            }
            step *= 0.5;
        };
        let moved = z.sub(&y)?.frobenius_sq().sqrt();
        let scale = y.frobenius_sq().sqrt().max(1.0);
        let (c_prev, resid_prev) = (c.clone(), resid.clone());
        if z_obj <= obj {
            c = z.clone();
            obj = z_obj;
            resid = z_resid.clone();
        }
        history.push(obj);
        if moved <= cfg.tolerance * scale {
            break;
        }
        if cfg.accelerate {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let (wz, wp) = (momentum / next, (momentum - 1.0) / next);
            // y = C + wz (Z − C) + wp (C − C_prev); residuals combine the same way.
            let combine = |cur: &Matrix, zz: &Matrix, prev: &Matrix| -> Result<Matrix> {
                let mut out = cur.clone();
                out.axpy(wz, &zz.sub(cur)?)?;
                out.axpy(wp, &cur.sub(prev)?)?;
                Ok(out)
            };
            y = combine(&c, &z, &c_prev)?;
            y_resid = combine(&resid, &z_resid, &resid_prev)?;
            momentum = next;
        } else {
            y = c.clone();
            y_resid = resid.clone();
            if cfg.step == StepRule::Backtracking {
                step *= 2.0;
            }
        }
    }
    Ok(LassoSolution {
        coefficients: c,
        objective: obj,
        iterations,
        history,
    })
}

/// `‖C‖₁ + λ‖X − XC‖_F²`.
pub fn ssc_objective(x: &Matrix, c: &Matrix, lambda: f64) -> Result<f64> {
    Ok(lasso_objective(x, x, c, lambda)?.0)
}

/// Zero-diagonal self-expressive coefficients of the columns of `x`.
/// The result is not symmetrized.
pub fn ssc_solve(x: &Matrix, cfg: &SscConfig) -> Result<LassoSolution> {
    lasso_zero_diag(x, x, None, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// `−‖x_i − x_j‖²`.
    NegativeEuclidean,
    /// `exp(−‖x_i − x_j‖² / (2σ²))`; `None` uses the median pairwise distance.
    Gaussian { bandwidth: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffectConfig {
    /// Weight on the previous smoothed affinity.
    pub alpha: f64,
    pub kernel: Kernel,
}

impl Default for AffectConfig {
    fn default() -> Self {
        AffectConfig {
            alpha: 0.5,
            kernel: Kernel::Gaussian { bandwidth: None },
        }
    }
}

impl AffectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("affect alpha must be in [0, 1], got {}", self.alpha)));
        }
        if let Kernel::Gaussian { bandwidth: Some(s) } = self.kernel {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("gaussian bandwidth must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

fn pairwise_sq_dists(x: &Matrix) -> Result<Matrix> {
    let gram = symmetrized(x.matmul_tn(x)?);
    let n = gram.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Kernel similarity between the columns of `x`, zero on the diagonal.
pub fn kernel_matrix(x: &Matrix, kernel: Kernel) -> Result<Matrix> {
    let d = pairwise_sq_dists(x)?;
    let n = d.rows();
    let mut w = match kernel {
        Kernel::NegativeEuclidean => d.scale(-1.0),
        Kernel::Gaussian { bandwidth } => {
            let sigma = match bandwidth {
                Some(s) => s,
                None => {
                    let mut off: Vec<f64> = (0..n)
                        .flat_map(|i| (0..i).map(move |j| (i, j)))
                        .map(|(i, j)| d[(i, j)].sqrt())
                        .collect();
                    off.sort_by(f64::total_cmp);
                    let med = off.get(off.len() / 2).copied().unwrap_or(1.0);
                    if med > 0.0 {
                        med
                    } else {
                        1.0
                    }
                }
            };
            d.map(|v| (-v / (2.0 * sigma * sigma)).exp())
        }
    };
    for i in 0..n {
        w[(i, i)] = 0.0;
    }
    Ok(w)
}

/// One AFFECT update: the kernel matrix of `x`, blended with `prev` when present.
pub fn affect_smooth(prev: Option<&Matrix>, x: &Matrix, cfg: &AffectConfig) -> Result<Matrix> {
    cfg.validate()?;
    let w = kernel_matrix(x, cfg.kernel)?;
    match prev {
        None => Ok(w),
        Some(p) => {
            if p.shape() != w.shape() {
                return Err(Error::shape(
                    "affect_smooth",
                    format!("previous affinity is {:?}, current is {:?}", p.shape(), w.shape()),
                ));
            }
            if p.asymmetry().is_none_or(|a| a > 1e-12 * p.max_abs().max(1.0)) {
                return Err(Error::Contract("previous affinity must be symmetric".into()));
            }
            p.zip_with(&w, "affect_smooth", |pi, wi| cfg.alpha * pi + (1.0 - cfg.alpha) * wi)
        }
    }
}

/// Smoothed affinities for every snapshot, in time order.
pub fn affect_sequence(data: &TimeSeriesDataset, cfg: &AffectConfig) -> Result<Vec<Matrix>> {
    let mut out: Vec<Matrix> = Vec::with_capacity(data.len());
    for x in data.snapshots() {
        let next = affect_smooth(out.last(), x, cfg)?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CesmConfig {
    pub outer: usize,
    pub inner: SscConfig,
    pub alpha_init: f64,
    /// Keep α at `alpha_init` instead of optimizing it.
    pub fix_alpha: bool,
}

impl Default for CesmConfig {
    fn default() -> Self {
        CesmConfig {
            outer: 10,
            inner: SscConfig::default(),
            alpha_init: 0.5,
            fix_alpha: false,
        }
    }
}

impl CesmConfig {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if self.outer == 0 {
            return Err(Error::Config("cesm outer iterations must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_init) {
            return Err(Error::Config(format!("cesm alpha_init must be in [0, 1], got {}", self.alpha_init)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CesmStep {
    /// `C_t = αU + (1−α)C_{t−1}`.
    pub coefficients: Matrix,
    pub innovation: Matrix,
    pub alpha: f64,
    /// Joint objective after every half-step (U then α), starting value first.
    pub history: Vec<f64>,
}

/// `‖U‖₁ + λ‖X − X(αU + (1−α)C_prev)‖_F²`.
pub fn cesm_objective(x: &Matrix, u: &Matrix, c_prev: &Matrix, alpha: f64, lambda: f64) -> Result<f64> {
    let c = u.zip_with(c_prev, "cesm", |ui, pi| alpha * ui + (1.0 - alpha) * pi)?;
    let r = x.sub(&x.matmul(&c)?)?;
    Ok(u.abs_sum() + lambda * r.frobenius_sq())
}

/// One CESM time step given the previous coefficients.
pub fn cesm_step(x: &Matrix, c_prev: &Matrix, cfg: &CesmConfig) -> Result<CesmStep> {
    cfg.validate()?;
    let lambda = cfg.inner.lambda;
    let xc_prev = x.matmul(c_prev)?;
    let r0 = x.sub(&xc_prev)?;
    let mut alpha = cfg.alpha_init;
    let mut u = c_prev.clone();
    let mut history = vec![cesm_objective(x, &u, c_prev, alpha, lambda)?];
    for _ in 0..cfg.outer {
        let a = x.scale(alpha);
        let b = x.sub(&xc_prev.scale(1.0 - alpha))?;
        let sol = lasso_zero_diag(&a, &b, Some(&u), &cfg.inner)?;
        u = sol.coefficients;
        history.push(cesm_objective(x, &u, c_prev, alpha, lambda)?);
        if !cfg.fix_alpha {
            // Residual is R0 − αD with D = X(U − C_prev); exact 1-D minimizer.
            let d = x.matmul(&u)?.sub(&xc_prev)?;
            let dd = d.frobenius_sq();
            if dd > 0.0 {
                alpha = (r0.dot(&d)? / dd).clamp(0.0, 1.0);
            }
            history.push(cesm_objective(x, &u, c_prev, alpha, lambda)?);
        }
    }
    let coefficients = u.zip_with(c_prev, "cesm", |ui, pi| alpha * ui + (1.0 - alpha) * pi)?;
    Ok(CesmStep {
        coefficients,
        innovation: u,
        alpha,
        history,
    })
}

/// CESM over the whole series; step 0 is static SSC on the first snapshot.
pub fn cesm_fit(data: &TimeSeriesDataset, cfg: &CesmConfig) -> Result<Vec<CesmStep>> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::Contract("cesm needs at least two snapshots".into()));
    }
    let first = ssc_solve(&data.snapshots()[0], &cfg.inner)?;
    let mut out = vec![CesmStep {
        coefficients: first.coefficients.clone(),
        innovation: first.coefficients,
        alpha: 1.0,
        history: first.history,
    }];
    for x in &data.snapshots()[1..] {
        let prev = &out.last().expect("non-empty").coefficients;
        let step = cesm_step(x, prev, cfg)?;
        out.push(step);
    }
    Ok(out)
}
