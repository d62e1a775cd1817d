//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Operations are recorded in execution order on a [`Tape`]; [`Tape::backward`]
//! replays them in reverse, accumulating vector–Jacobian products into one
//! gradient buffer per node. Nodes that do not depend on any leaf are marked
//! constant and never receive gradient storage.
//!
//! A tape is single-owner and not shared across threads while recording.

use crate::error::{Error, Result};

use super::matrix::{sign, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Lipschitz elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the output `y = apply(x)`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Activation> {
        match name {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    LinComb(Vec<(Var, f64)>),
    Act(Var, Activation),
    /// Strict-lower-triangle vector scattered into a symmetric matrix.
    SymFromLower(Var),
    Sum(Var),
    FrobSq(Var),
    AbsSum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `v`; `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros shaped like `like` when unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Option<f64> {
        self.value(v).to_scalar()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), tracked))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Sub(a, b), tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.lincomb(&[(a, 1.0), (b, 1.0)])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.lincomb(&[(a, s)])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Hadamard(a, b), tracked))
    }

    /// `Σ cᵢ vᵢ` over same-shaped inputs.
    pub fn lincomb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let (first, _) = *terms
            .first()
            .ok_or_else(|| Error::shape("lincomb", "no terms"))?;
        let (r, c) = self.value(first).shape();
        let mut value = Matrix::zeros(r, c);
        for &(v, coef) in terms {
            value.axpy(coef, self.value(v))?;
        }
        let tracked = terms.iter().any(|&(v, _)| self.tracked(v));
        Ok(self.push(value, Op::LinComb(terms.to_vec()), tracked))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        let value = self.value(a).map(|x| act.apply(x));
        let tracked = self.tracked(a);
        self.push(value, Op::Act(a, act), tracked)
    }

    /// Scatters a column vector of length n(n−1)/2 into the symmetric,
    /// zero-diagonal n×n matrix (column-major strict lower triangle).
    pub fn sym_from_lower(&mut self, h: Var) -> Result<Var> {
        let hv = self.value(h);
        if hv.cols() != 1 {
            return Err(Error::shape("sym_from_lower", format!("expected a column vector, got {:?}", hv.shape())));
        }
        let value = sym_from_strict_lower(hv.as_slice())?;
        let tracked = self.tracked(h);
        Ok(self.push(value, Op::SymFromLower(h), tracked))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let tracked = self.tracked(a);
        self.push(value, Op::Sum(a), tracked)
    }

    /// Squared Frobenius norm.
    pub fn frob_sq(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).frobenius_sq());
        let tracked = self.tracked(a);
        self.push(value, Op::FrobSq(a), tracked)
    }

    /// Entrywise ℓ1 norm; subgradient uses sign(0) = 0.
    pub fn abs_sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).abs_sum());
        let tracked = self.tracked(a);
        self.push(value, Op::AbsSum(a), tracked)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if out.value.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got {:?}",
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        if !out.tracked {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::MatMul(a, b) => {
                    if self.tracked(*a) {
                        let ga = g.matmul_nt(self.value(*b))?;
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if self.tracked(*b) {
                        let gb = self.value(*a).matmul_tn(&g)?;
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Sub(a, b) => {
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, g.scale(-1.0))?;
                    }
                }
                Op::Hadamard(a, b) => {
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, g.hadamard(self.value(*b))?)?;
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, g.hadamard(self.value(*a))?)?;
                    }
                }
                Op::LinComb(terms) => {
                    for &(v, coef) in terms {
                        if self.tracked(v) {
                            accumulate(&mut grads, v, g.scale(coef))?;
                        }
                    }
                }
                Op::Act(a, act) => {
                    let local = node.value.map(|y| act.derivative_from_output(y));
                    accumulate(&mut grads, *a, g.hadamard(&local)?)?;
                }
                Op::SymFromLower(h) => {
                    let n = g.rows();
                    let mut gh = Vec::with_capacity(n * (n - 1) / 2);
                    for j in 0..n {
                        for i in j + 1..n {
                            gh.push(g[(i, j)] + g[(j, i)]);
                        }
                    }
                    accumulate(&mut grads, *h, Matrix::column_vector(gh))?;
                }
                Op::Sum(a) => {
                    let s = g.as_slice()[0];
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, s))?;
                }
                Op::FrobSq(a) => {
                    let s = g.as_slice()[0];
                    accumulate(&mut grads, *a, self.value(*a).scale(2.0 * s))?;
                }
                Op::AbsSum(a) => {
                    let s = g.as_slice()[0];
                    accumulate(&mut grads, *a, self.value(*a).map(|x| s * sign(x)))?;
                }
            }
            // Leaves keep their gradient for the caller.
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Side length `n` with `n(n−1)/2 = len`, if one exists.
pub fn side_from_pair_count(len: usize) -> Option<usize> {
    let n = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (n >= 2 && n * (n - 1) / 2 == len).then_some(n)
}

/// Symmetric zero-diagonal matrix from its column-major strict lower triangle.
pub fn sym_from_strict_lower(values: &[f64]) -> Result<Matrix> {
    let n = side_from_pair_count(values.len()).ok_or_else(|| {
        Error::shape(
            "mat",
            format!("length {} is not n(n-1)/2 for any n >= 2", values.len()),
        )
    })?;
    let mut c = Matrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j + 1..n {
            c[(i, j)] = values[k];
            c[(j, i)] = values[k];
            k += 1;
        }
    }
    Ok(c)
}

/// Column-major strict lower triangle of a square matrix.
pub fn strict_lower(c: &Matrix) -> Vec<f64> {
    let n = c.rows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in j + 1..n {
            out.push(c[(i, j)]);
        }
    }
    out
}
