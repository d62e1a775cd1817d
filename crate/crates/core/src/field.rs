//! The gated vector field `dh/dt = g(h, X(t), t)`.
//!
//! ```text
//! g = W_L · σ(W_{L-1} · … σ(W_2 · (σ(W11 h) ⊙ σ(W12 vec X))))
//! ```
//!
//! Layer 1 is the gate, layers 2..L−1 are square hidden layers with the
//! activation, and layer L is linear with `N(N−1)/2` outputs. With `L = 2`
//! the gate feeds the output layer directly. No layer carries a bias.
//!
//! `vec X` stacks the columns of the D×N snapshot (column-major).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{Activation, Matrix, Rng, Tape, Var};

pub const CHECKPOINT_MAGIC: &str = "node-escm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Lower-triangle state `h(t)`, stored as an m×1 column.
pub type StateVector = Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldShape {
    /// Data points per snapshot.
    pub points: usize,
    /// Features per point.
    pub features: usize,
    pub hidden: usize,
    /// Total weight layers, gate included; at least 2.
    pub layers: usize,
    pub activation: Activation,
    /// Append `t` to the control input of the gate.
    pub time_input: bool,
}

impl FieldShape {
    pub fn state_len(&self) -> usize {
        self.points * (self.points - 1) / 2
    }

    pub fn control_len(&self) -> usize {
        self.points * self.features + usize::from(self.time_input)
    }

    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Config(format!("field needs at least 2 points, got {}", self.points)));
        }
        if self.features == 0 || self.hidden == 0 {
            return Err(Error::Config("features and hidden size must be positive".into()));
        }
        if self.layers < 2 {
            return Err(Error::Config(format!("layer count must be >= 2, got {}", self.layers)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Zero-mean normal entries with std `gain / sqrt(fan_in)`; the output
    /// layer uses `output_gain` instead.
    ScaledNormal { gain: f64, output_gain: f64 },
    Zeros,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::ScaledNormal {
            gain: 1.0,
            output_gain: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams {
    pub shape: FieldShape,
    /// hidden × m
    pub w11: Matrix,
    /// hidden × (D·N [+1])
    pub w12: Matrix,
    /// L−2 matrices, each hidden × hidden.
    pub hidden_layers: Vec<Matrix>,
    /// m × hidden
    pub w_out: Matrix,
}

/// Tape handles for one registration of a [`FieldParams`].
#[derive(Clone, Debug)]
pub struct FieldVars {
    pub w11: Var,
    pub w12: Var,
    pub hidden_layers: Vec<Var>,
    pub w_out: Var,
}

impl FieldVars {
    /// All handles in [`FieldParams::matrices`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.w11, self.w12];
        v.extend(&self.hidden_layers);
        v.push(self.w_out);
        v
    }
}

pub fn init_params(rng: &mut Rng, shape: FieldShape, scheme: InitScheme) -> Result<FieldParams> {
    shape.validate()?;
    let m = shape.state_len();
    let h = shape.hidden;
    let (gain, output_gain) = match scheme {
        InitScheme::Zeros => (0.0, 0.0),
        InitScheme::ScaledNormal { gain, output_gain } => (gain, output_gain),
    };
    let mut draw = |rows: usize, cols: usize, gain: f64| match scheme {
        InitScheme::Zeros => Matrix::zeros(rows, cols),
        InitScheme::ScaledNormal { .. } => rng.randn(rows, cols).scale(gain / (cols as f64).sqrt()),
    };
    let w11 = draw(h, m, gain);
    let w12 = draw(h, shape.control_len(), gain);
    let hidden_layers = (0..shape.layers - 2).map(|_| draw(h, h, gain)).collect();
    let w_out = draw(m, h, output_gain);
    Ok(FieldParams {
        shape,
        w11,
        w12,
        hidden_layers,
        w_out,
    })
}

impl FieldParams {
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.w11, &self.w12];
        v.extend(self.hidden_layers.iter());
        v.push(&self.w_out);
        v
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.w11, &mut self.w12];
        v.extend(self.hidden_layers.iter_mut());
        v.push(&mut self.w_out);
        v
    }

    pub fn matrix_names(&self) -> Vec<String> {
        let mut v = vec!["w11".to_string(), "w12".to_string()];
        v.extend((0..self.hidden_layers.len()).map(|i| format!("w{}", i + 2)));
        v.push("w_out".to_string());
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    /// Registers every weight as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape) -> FieldVars {
        self.register_with(tape, true)
    }

    /// Registers the weights as constants (inference only).
    pub fn register_frozen(&self, tape: &mut Tape) -> FieldVars {
        self.register_with(tape, false)
    }

    fn register_with(&self, tape: &mut Tape, trainable: bool) -> FieldVars {
        let mut put = |m: &Matrix| {
            if trainable {
                tape.leaf(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        FieldVars {
            w11: put(&self.w11),
            w12: put(&self.w12),
            hidden_layers: self.hidden_layers.iter().map(&mut put).collect(),
            w_out: put(&self.w_out),
        }
    }

    /// Control input column `vec(x)` (plus `t` when enabled).
    pub fn control_input(&self, x: &Matrix, t: f64) -> Result<Matrix> {
        let s = &self.shape;
        if x.shape() != (s.features, s.points) {
            return Err(Error::shape(
                "field_forward",
                format!("snapshot is {:?}, field expects {}x{}", x.shape(), s.features, s.points),
            ));
        }
        let mut v = Vec::with_capacity(s.control_len());
        for j in 0..s.points {
            for i in 0..s.features {
                v.push(x[(i, j)]);
            }
        }
        if s.time_input {
            v.push(t);
        }
        Ok(Matrix::column_vector(v))
    }

    /// Records one field evaluation on `tape`; `u` is a control input from
    /// [`FieldParams::control_input`].
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &FieldVars, h: Var, u: Var) -> Result<Var> {
        let act = self.shape.activation;
        let m = self.shape.state_len();
        if tape.value(h).shape() != (m, 1) {
            return Err(Error::shape(
                "field_forward",
                format!("state is {:?}, expected {m}x1", tape.value(h).shape()),
            ));
        }
        let a = tape.matmul(vars.w11, h)?;
        let a = tape.activation(a, act);
        let b = tape.matmul(vars.w12, u)?;
        let b = tape.activation(b, act);
        let mut z = tape.hadamard(a, b)?;
        for &w in &vars.hidden_layers {
            let lin = tape.matmul(w, z)?;
            z = tape.activation(lin, act);
        }
        tape.matmul(vars.w_out, z)
    }

    /// Plain evaluation of the field.
    pub fn forward(&self, h: &StateVector, x: &Matrix, t: f64) -> Result<StateVector> {
        let mut tape = Tape::new();
        let vars = self.register_frozen(&mut tape);
        let hv = tape.constant(h.clone());
        let u = tape.constant(self.control_input(x, t)?);
        let out = self.forward_on_tape(&mut tape, &vars, hv, u)?;
        Ok(tape.value(out).clone())
    }

    /// Upper bound on the Lipschitz constant of `g` in `h` for bounded
    /// activations: the product of the layer spectral norms and activation
    /// Lipschitz constants (the X-branch gate factor is at most 1).
    pub fn lipschitz_bound(&self) -> Result<f64> {
        let lip = self.shape.activation.lipschitz();
        let mut k = spectral_norm(&self.w11)? * lip;
        for w in &self.hidden_layers {
            k *= spectral_norm(w)? * lip;
        }
        Ok(k * spectral_norm(&self.w_out)?)
    }
}

/// Largest singular value, from the eigenvalues of the smaller Gram matrix.
pub fn spectral_norm(w: &Matrix) -> Result<f64> {
    let gram = if w.rows() <= w.cols() {
        w.matmul_nt(w)?
    } else {
        w.matmul_tn(w)?
    };
    let e = crate::numcore::sym_eigen(&gram, 1e-12)?;
    Ok(e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Trained model state persisted between CLI stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: FieldParams,
    pub h0: StateVector,
    /// RK4 sub-steps per unit time used in training.
    pub steps_per_unit: usize,
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
}

/// Decimal text with 17 significant digits; parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let s = &self.params.shape;
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "format_version = {CHECKPOINT_VERSION}");
        let _ = writeln!(out, "activation = {}", s.activation.name());
        let _ = writeln!(out, "time_input = {}", s.time_input);
        let _ = writeln!(out, "points = {}", s.points);
        let _ = writeln!(out, "features = {}", s.features);
        let _ = writeln!(out, "hidden = {}", s.hidden);
        let _ = writeln!(out, "layers = {}", s.layers);
        let _ = writeln!(out, "steps_per_unit = {}", self.steps_per_unit);
        let names = self.params.matrix_names();
        for (name, m) in names.iter().zip(self.params.matrices()) {
            write_matrix(&mut out, name, m);
        }
        write_matrix(&mut out, "h0", &self.h0);
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Checkpoint> {
        let fail = |field: &str, msg: String| Error::Load {
            path: origin.to_path_buf(),
            field: field.to_string(),
            msg,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CHECKPOINT_MAGIC) {
            return Err(fail("header", format!("missing `{CHECKPOINT_MAGIC}` header")));
        }
        let mut header = std::collections::BTreeMap::new();
        let mut matrices: Vec<(String, Matrix)> = Vec::new();
        while let Some(line) = lines.next() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("matrix ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(fail("matrix", format!("bad matrix header `{line}`")));
                }
                let name = parts[0].to_string();
                let rows: usize = parts[1].parse().map_err(|_| fail(&name, "bad row count".into()))?;
                let cols: usize = parts[2].parse().map_err(|_| fail(&name, "bad column count".into()))?;
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let row = lines
                        .next()
                        .ok_or_else(|| fail(&name, format!("truncated at row {r}")))?;
                    for tok in row.split(',') {
                        data.push(
                            tok.trim()
                                .parse::<f64>()
                                .map_err(|_| fail(&name, format!("bad number `{tok}` in row {r}")))?,
                        );
                    }
                }
                let m = Matrix::new(rows, cols, data).map_err(|e| fail(&name, e.to_string()))?;
                matrices.push((name, m));
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                return Err(fail("line", format!("unrecognized line `{line}`")));
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| fail(k, "missing".into()));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| fail(k, "not a non-negative integer".into()))
        };
        let version = num("format_version")?;
        if version != CHECKPOINT_VERSION as usize {
            return Err(fail("format_version", format!("unsupported version {version}")));
        }
        let activation = Activation::from_name(get("activation")?)
            .ok_or_else(|| fail("activation", "unknown activation".into()))?;
        let time_input = match get("time_input")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(fail("time_input", format!("expected true/false, got `{other}`"))),
        };
        let shape = FieldShape {
            points: num("points")?,
            features: num("features")?,
            hidden: num("hidden")?,
            layers: num("layers")?,
            activation,
            time_input,
        };
        shape.validate().map_err(|e| fail("shape", e.to_string()))?;
        let steps_per_unit = num("steps_per_unit")?;

        let expected_names = {
            let mut v = vec!["w11".to_string(), "w12".to_string()];
            v.extend((0..shape.layers - 2).map(|i| format!("w{}", i + 2)));
            v.push("w_out".to_string());
            v.push("h0".to_string());
            v
        };
        let found: Vec<&str> = matrices.iter().map(|(n, _)| n.as_str()).collect();
        if found != expected_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(fail("matrix", format!("expected matrices {expected_names:?}, found {found:?}")));
        }
        let mut ms: Vec<Matrix> = matrices.into_iter().map(|(_, m)| m).collect();
        let h0 = ms.pop().expect("h0 present");
        let w_out = ms.pop().expect("w_out present");
        let w12 = ms.remove(1);
        let w11 = ms.remove(0);
        let m = shape.state_len();
        let checks = [
            ("w11", w11.shape(), (shape.hidden, m)),
            ("w12", w12.shape(), (shape.hidden, shape.control_len())),
            ("w_out", w_out.shape(), (m, shape.hidden)),
            ("h0", h0.shape(), (m, 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(fail(name, format!("shape {got:?}, expected {want:?}")));
            }
        }
        if let Some(w) = ms.iter().find(|w| w.shape() != (shape.hidden, shape.hidden)) {
            return Err(fail("hidden", format!("hidden layer shape {:?}", w.shape())));
        }
        Ok(Checkpoint {
            params: FieldParams {
                shape,
                w11,
                w12,
                hidden_layers: ms,
                w_out,
            },
            h0,
            steps_per_unit,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_text(&text, path)
    }
}
