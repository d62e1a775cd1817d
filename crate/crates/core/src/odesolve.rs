//! Fixed-step RK4 integration of `dh/dt = g(h, X(t), t)`.
//!
//! Integration always starts at `t = 0`. Between consecutive output times
//! `a < b` the solver takes `ceil((b − a) · steps_per_unit)` equal steps, so
//! every requested time is hit exactly and each interval gets at least one
//! step. All steps are recorded on the tape; reverse mode through them gives
//! the exact gradient of the discrete solution.

use crate::error::{Error, Result};
use crate::field::{FieldParams, FieldVars, StateVector};
use crate::numcore::{Matrix, Tape, Var};

/// Observed snapshots with their timestamps; `X(t)` is their piecewise
/// linear interpolant, held constant outside the observed range.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPath {
    timestamps: Vec<f64>,
    snapshots: Vec<Matrix>,
}

impl ControlPath {
    pub fn new(timestamps: Vec<f64>, snapshots: Vec<Matrix>) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != snapshots.len() {
            return Err(Error::Contract(format!(
                "control path needs matching non-empty timestamps and snapshots ({} vs {})",
                timestamps.len(),
                snapshots.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Contract(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Contract("timestamps must be finite".into()));
        }
        let shape = snapshots[0].shape();
        if let Some(s) = snapshots.iter().find(|s| s.shape() != shape) {
            return Err(Error::shape(
                "ControlPath::new",
                format!("snapshot shapes {:?} and {:?}", shape, s.shape()),
            ));
        }
        Ok(ControlPath {
            timestamps,
            snapshots,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn snapshots(&self) -> &[Matrix] {
        &self.snapshots
    }

    pub fn interpolate(&self, t: f64) -> Matrix {
        let ts = &self.timestamps;
        let last = ts.len() - 1;
        if t <= ts[0] {
            return self.snapshots[0].clone();
        }
        if t >= ts[last] {
            return self.snapshots[last].clone();
        }
        // First knot strictly greater than t; t lies in [ts[hi-1], ts[hi]).
        let hi = ts.partition_point(|&knot| knot <= t);
        let lo = hi - 1;
        if t == ts[lo] {
            return self.snapshots[lo].clone();
        }
        let w = (t - ts[lo]) / (ts[hi] - ts[lo]);
        self.snapshots[lo]
            .zip_with(&self.snapshots[hi], "interpolate", |a, b| (1.0 - w) * a + w * b)
            .expect("snapshots share a shape")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveConfig {
    /// RK4 steps per unit of (normalized) time.
    pub steps_per_unit: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { steps_per_unit: 20 }
    }
}

/// A right-hand side that can record its evaluation on a tape.
pub trait TapeField {
    fn eval(&self, tape: &mut Tape, h: Var, t: f64) -> Result<Var>;
}

/// The gated network driven by an interpolated control path.
pub struct NetworkField<'a> {
    pub params: &'a FieldParams,
    pub vars: &'a FieldVars,
    pub path: &'a ControlPath,
}

impl TapeField for NetworkField<'_> {
    fn eval(&self, tape: &mut Tape, h: Var, t: f64) -> Result<Var> {
        let x = self.path.interpolate(t);
        let u = tape.constant(self.params.control_input(&x, t)?);
        self.params.forward_on_tape(tape, self.vars, h, u)
    }
}

/// Step count for an interval of length `gap`.
pub fn steps_for(gap: f64, cfg: SolveConfig) -> usize {
    if gap <= 0.0 {
        return 0;
    }
    ((gap * cfg.steps_per_unit as f64 - 1e-9).ceil() as usize).max(1)
}

/// Integrates from `t = 0` and returns the state node at each output time.
pub fn rk4_on_tape<F: TapeField>(
    tape: &mut Tape,
    field: &F,
    h0: Var,
    output_times: &[f64],
    cfg: SolveConfig,
) -> Result<Vec<Var>> {
    if cfg.steps_per_unit == 0 {
        return Err(Error::Config("steps_per_unit must be positive".into()));
    }
    if let Some(&t) = output_times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::Contract(format!("output time {t} outside [0, inf)")));
    }
    if output_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("output times must be ascending".into()));
    }
    if !tape.value(h0).is_finite() {
        return Err(Error::Divergence { time: 0.0 });
    }

    let mut h = h0;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(output_times.len());
    for &target in output_times {
        let n = steps_for(target - t, cfg);
        let dt = if n > 0 { (target - t) / n as f64 } else { 0.0 };
        for i in 0..n {
            let ti = t + i as f64 * dt;
            h = rk4_step(tape, field, h, ti, dt)?;
            if !tape.value(h).is_finite() {
                return Err(Error::Divergence { time: ti + dt });
            }
        }
        t = target;
        out.push(h);
    }
    Ok(out)
}

fn rk4_step<F: TapeField>(tape: &mut Tape, field: &F, h: Var, t: f64, dt: f64) -> Result<Var> {
    let k1 = field.eval(tape, h, t)?;
    let y2 = tape.lincomb(&[(h, 1.0), (k1, 0.5 * dt)])?;
    let k2 = field.eval(tape, y2, t + 0.5 * dt)?;
    let y3 = tape.lincomb(&[(h, 1.0), (k2, 0.5 * dt)])?;
    let k3 = field.eval(tape, y3, t + 0.5 * dt)?;
    let y4 = tape.lincomb(&[(h, 1.0), (k3, dt)])?;
    let k4 = field.eval(tape, y4, t + dt)?;
    tape.lincomb(&[
        (h, 1.0),
        (k1, dt / 6.0),
        (k2, dt / 3.0),
        (k3, dt / 3.0),
        (k4, dt / 6.0),
    ])
}

/// Network solve without gradient tracking.
pub fn ode_solve(
    h0: &StateVector,
    params: &FieldParams,
    path: &ControlPath,
    output_times: &[f64],
    cfg: SolveConfig,
) -> Result<Vec<StateVector>> {
    let mut tape = Tape::new();
    let vars = params.register_frozen(&mut tape);
    let h = tape.constant(h0.clone());
    let field = NetworkField {
        params,
        vars: &vars,
        path,
    };
    let states = rk4_on_tape(&mut tape, &field, h, output_times, cfg)?;
    Ok(states.into_iter().map(|v| tape.value(v).clone()).collect())
}
