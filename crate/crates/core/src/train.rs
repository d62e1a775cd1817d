//! The neural-ODE clustering objective and its training loop.
//!
//! For observations `X_j` at times `t_j` the objective is
//!
//! ```text
//! L(θ) = Σ_j w_j · ½‖X_j − X_j C(t_j)‖_F² + λ Σ_j ‖C(t_j)‖₁,
//! C(t_j) = mat(h(t_j)),   h = RK4 solution of dh/dt = g_θ(h, X(t), t)
//! ```
//!
//! with `w_j = t_j − t_{j−1}` (`t_0 = 0`) for arbitrary grids, or
//! `w_j = 1/T` when the grid is declared regular. Under [`LossScale::PerEntry`]
//! the squared residual is divided by `D·N`, the ℓ1 norm by `N²`, and the ℓ1
//! sum carries the same `w_j`.
//!
//! Gradients come from reverse mode through the unrolled solver. The ℓ1
//! term contributes `λ·sign(C)` with `sign(0) = 0`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldParams, FieldVars, StateVector};
use crate::io::TimeSeriesDataset;
use crate::numcore::{sign, Matrix, Rng, Tape, Var};
use crate::odesolve::{rk4_on_tape, NetworkField, SolveConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossWeighting {
    /// `w_j = t_j − t_{j−1}`, `t_0 = 0`.
    Irregular,
    /// `w_j = 1/T` for T observations.
    Regular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScale {
    /// Plain Frobenius and ℓ1 sums.
    Sum,
    /// Squared residual over D·N entries, ℓ1 over N² entries, and the ℓ1
    /// term weighted by `w_j` like the residual, so both are time averages.
    PerEntry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum H0Mode {
    Zeros,
    /// Entries from N(0, 0.01).
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub scheduler_gamma: f64,
    pub scheduler_step: usize,
    pub steps_per_unit: usize,
    pub h0_mode: H0Mode,
    pub weighting: LossWeighting,
    pub scale: LossScale,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            epochs: 100,
            learning_rate: 3e-3,
            scheduler_gamma: 0.1,
            scheduler_step: 20,
            steps_per_unit: SolveConfig::default().steps_per_unit,
            h0_mode: H0Mode::Random,
            weighting: LossWeighting::Irregular,
            scale: LossScale::PerEntry,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be a finite nonnegative number, got {}", self.lambda));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be nonnegative, got {}", self.learning_rate));
        }
        if !(self.scheduler_gamma > 0.0 && self.scheduler_gamma <= 1.0) {
            return bad(format!("scheduler_gamma must be in (0, 1], got {}", self.scheduler_gamma));
        }
        if self.scheduler_step == 0 {
            return bad("scheduler_step must be positive".into());
        }
        if self.steps_per_unit == 0 {
            return bad("steps_per_unit must be positive".into());
        }
        Ok(())
    }

    pub fn solve(&self) -> SolveConfig {
        SolveConfig {
            steps_per_unit: self.steps_per_unit,
        }
    }

    /// Learning rate in effect for a 0-based epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.scheduler_gamma.powi((epoch / self.scheduler_step) as i32)
    }
}

/// Initial state for `points` data points.
pub fn initial_state(points: usize, mode: H0Mode, rng: &mut Rng) -> StateVector {
    let m = points * (points - 1) / 2;
    match mode {
        H0Mode::Zeros => Matrix::zeros(m, 1),
        H0Mode::Random => rng.randn(m, 1).scale(0.1),
    }
}

/// The initial state `train` uses for `cfg`: drawn from `cfg.seed` alone, so
/// it can be rebuilt without the training run.
pub fn initial_state_for(cfg: &TrainConfig, points: usize) -> StateVector {
    let mut rng = Rng::new(cfg.seed).fork();
    initial_state(points, cfg.h0_mode, &mut rng)
}

/// Per-observation weights of the reconstruction term.
pub fn recon_weights(timestamps: &[f64], weighting: LossWeighting) -> Vec<f64> {
    match weighting {
        LossWeighting::Regular => vec![1.0 / timestamps.len() as f64; timestamps.len()],
        LossWeighting::Irregular => {
            let mut prev = 0.0;
            timestamps
                .iter()
                .map(|&t| {
                    let w = t - prev;
                    prev = t;
                    w
                })
                .collect()
        }
    }
}

/// (residual multiplier, ℓ1 multiplier) for a D×N problem.
fn scale_factors(scale: LossScale, features: usize, points: usize) -> (f64, f64) {
    match scale {
        LossScale::Sum => (1.0, 1.0),
        LossScale::PerEntry => (
            1.0 / (features * points) as f64,
            1.0 / (points * points) as f64,
        ),
    }
}

/// Tape nodes of one loss evaluation.
pub struct LossNodes {
    pub total: Var,
    pub recon: Var,
    pub l1: Var,
    pub states: Vec<Var>,
    pub coeffs: Vec<Var>,
    /// ‖X_j − X_j C_j‖² / (D·N) for each observation.
    pub residual_mse: Vec<f64>,
}

pub fn loss_on_tape(
    tape: &mut Tape,
    params: &FieldParams,
    vars: &FieldVars,
    h0: Var,
    data: &TimeSeriesDataset,
    cfg: &TrainConfig,
) -> Result<LossNodes> {
    let path = data.control_path();
    let field = NetworkField {
        params,
        vars,
        path: &path,
    };
    let states = rk4_on_tape(tape, &field, h0, data.timestamps(), cfg.solve())?;
    let weights = recon_weights(data.timestamps(), cfg.weighting);
    let (rs, ls) = scale_factors(cfg.scale, data.features(), data.points());
    let entries = (data.features() * data.points()) as f64;

    let mut recon_terms = Vec::with_capacity(states.len());
    let mut l1_terms = Vec::with_capacity(states.len());
    let mut coeffs = Vec::with_capacity(states.len());
    let mut residual_mse = Vec::with_capacity(states.len());
    for ((&h, x), &w) in states.iter().zip(data.snapshots()).zip(&weights) {
        let c = tape.sym_from_lower(h)?;
        let xv = tape.constant(x.clone());
        let xc = tape.matmul(xv, c)?;
        let r = tape.sub(xv, xc)?;
        let r2 = tape.frob_sq(r);
        residual_mse.push(tape.scalar(r2).unwrap_or(f64::NAN) / entries);
        recon_terms.push((r2, 0.5 * w * rs));
        let a = tape.abs_sum(c);
        let lw = match cfg.scale {
            LossScale::Sum => 1.0,
            LossScale::PerEntry => w,
        };
        l1_terms.push((a, cfg.lambda * ls * lw));
        coeffs.push(c);
    }
    let recon = tape.lincomb(&recon_terms)?;
    let l1 = tape.lincomb(&l1_terms)?;
    let total = tape.add(recon, l1)?;
    Ok(LossNodes {
        total,
        recon,
        l1,
        states,
        coeffs,
        residual_mse,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub recon: f64,
    pub l1: f64,
    /// Mean over observations of the per-entry squared residual.
    pub recon_mse: f64,
}

/// Objective value without gradient bookkeeping.
pub fn loss(params: &FieldParams, h0: &StateVector, data: &TimeSeriesDataset, cfg: &TrainConfig) -> Result<LossValue> {
    let mut tape = Tape::new();
    let vars = params.register_frozen(&mut tape);
    let h = tape.constant(h0.clone());
    let nodes = loss_on_tape(&mut tape, params, &vars, h, data, cfg)?;
    Ok(value_of(&tape, &nodes))
}

fn value_of(tape: &Tape, nodes: &LossNodes) -> LossValue {
    let n = nodes.residual_mse.len().max(1) as f64;
    LossValue {
        total: tape.scalar(nodes.total).unwrap_or(f64::NAN),
        recon: tape.scalar(nodes.recon).unwrap_or(f64::NAN),
        l1: tape.scalar(nodes.l1).unwrap_or(f64::NAN),
        recon_mse: nodes.residual_mse.iter().sum::<f64>() / n,
    }
}

/// Loss and its gradient with respect to every weight matrix (in
/// [`FieldParams::matrices`] order).
pub fn loss_and_grad(
    params: &FieldParams,
    h0: &StateVector,
    data: &TimeSeriesDataset,
    cfg: &TrainConfig,
) -> Result<(LossValue, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let h = tape.constant(h0.clone());
    let nodes = loss_on_tape(&mut tape, params, &vars, h, data, cfg)?;
    let value = value_of(&tape, &nodes);
    let grads = tape.backward(nodes.total)?;
    let g = vars
        .all()
        .into_iter()
        .zip(params.matrices())
        .map(|(v, m)| grads.get_or_zeros(v, m))
        .collect();
    Ok((value, g))
}

/// `dl/dC` for `l = ½‖X − XC‖_F² + λ‖C‖₁`: `XᵀX(C − I) + λ·sign(C)`.
pub fn dl_dc(x: &Matrix, c: &Matrix, lambda: f64) -> Result<Matrix> {
    if !c.is_square() || x.cols() != c.rows() {
        return Err(Error::shape(
            "dl_dC",
            format!("X is {:?}, C is {:?}", x.shape(), c.shape()),
        ));
    }
    let gram = x.matmul_tn(x)?;
    let c_minus_i = c.sub(&Matrix::identity(c.rows()))?;
    let mut g = gram.matmul(&c_minus_i)?;
    g.axpy(lambda, &c.map(sign))?;
    Ok(g)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam state for a list of matrices.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Adam {
    pub fn new(shapes: &[&Matrix]) -> Self {
        let zeros: Vec<Matrix> = shapes.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for ((w, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let ws = w.as_mut_slice();
            let ms = m.as_mut_slice();
            let vs = v.as_mut_slice();
            for (k, &gk) in g.as_slice().iter().enumerate() {
                ms[k] = ADAM_BETA1 * ms[k] + (1.0 - ADAM_BETA1) * gk;
                vs[k] = ADAM_BETA2 * vs[k] + (1.0 - ADAM_BETA2) * gk * gk;
                let mhat = ms[k] / bc1;
                let vhat = vs[k] / bc2;
                ws[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub recon: f64,
    pub l1: f64,
    pub total: f64,
    pub recon_mse: f64,
    pub learning_rate: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// First epoch whose total loss is within 1% of the last epoch's.
    pub convergence_epoch: usize,
    /// Same, for the reconstruction term alone.
    pub recon_convergence_epoch: usize,
    pub config: TrainConfig,
}

impl TrainReport {
    pub fn final_record(&self) -> &EpochRecord {
        self.records.last().expect("at least one epoch")
    }

    pub fn to_csv(&self) -> String {
        use crate::field::format_f64 as f;
        let mut out = String::from("epoch,recon,l1,total,recon_mse,lr,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6}\n",
                r.epoch,
                f(r.recon),
                f(r.l1),
                f(r.total),
                f(r.recon_mse),
                f(r.learning_rate),
                r.seconds
            ));
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        let last = self.final_record();
        let summary = serde_json::json!({
            "final_loss": last.total,
            "final_recon": last.recon,
            "final_l1": last.l1,
            "final_recon_mse": last.recon_mse,
            "convergence_epoch": self.convergence_epoch,
            "recon_convergence_epoch": self.recon_convergence_epoch,
            "epochs": self.records.len(),
            "config": self.config,
        });
        Ok(serde_json::to_string_pretty(&summary)?)
    }
}

/// First 1-based index whose value is within 1% of the last value.
pub fn convergence_epoch(totals: &[f64]) -> usize {
    let Some(&last) = totals.last() else { return 0 };
    totals
        .iter()
        .position(|&v| (v - last).abs() <= 0.01 * last.abs())
        .map_or(totals.len(), |i| i + 1)
}

/// Runs `cfg.epochs` full-batch Adam epochs from `init`, starting the state
/// at [`initial_state_for`].
pub fn train(data: &TimeSeriesDataset, init: FieldParams, cfg: &TrainConfig) -> Result<(FieldParams, TrainReport)> {
    let h0 = initial_state_for(cfg, data.points());
    train_with_callback(data, init, &h0, cfg, |_| {})
}

pub fn train_with_callback(
    data: &TimeSeriesDataset,
    init: FieldParams,
    h0: &StateVector,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(FieldParams, TrainReport)> {
    cfg.validate()?;
    let s = &init.shape;
    if s.points != data.points() || s.features != data.features() {
        return Err(Error::shape(
            "train",
            format!(
                "field built for {}x{} snapshots, data is {}x{}",
                s.features,
                s.points,
                data.features(),
                data.points()
            ),
        ));
    }
    let mut params = init;
    let mut adam = Adam::new(&params.matrices());
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut last_finite = f64::NAN;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let (value, grads) = match loss_and_grad(&params, h0, data, cfg) {
            Ok(v) => v,
            Err(Error::Divergence { .. }) => {
                return Err(Error::TrainingDiverged {
                    epoch: epoch + 1,
                    last_loss: last_finite,
                })
            }
            Err(e) => return Err(e),
        };
        if !value.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged {
                epoch: epoch + 1,
                last_loss: last_finite,
            });
        }
        last_finite = value.total;
        let lr = cfg.learning_rate_at(epoch);
        adam.step(&mut params.matrices_mut(), &grads, lr);
        let record = EpochRecord {
            epoch: epoch + 1,
            recon: value.recon,
            l1: value.l1,
            total: value.total,
            recon_mse: value.recon_mse,
            learning_rate: lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        records.push(record);
    }
    let totals: Vec<f64> = records.iter().map(|r| r.total).collect();
    let recons: Vec<f64> = records.iter().map(|r| r.recon).collect();
    Ok((
        params,
        TrainReport {
            convergence_epoch: convergence_epoch(&totals),
            recon_convergence_epoch: convergence_epoch(&recons),
            records,
            config: cfg.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{init_params, FieldShape, InitScheme};
    use crate::numcore::Activation;

    fn tiny(seed: u64, t: usize) -> (TimeSeriesDataset, FieldParams) {
        let mut rng = Rng::new(seed);
        let times: Vec<f64> = (1..=t).map(|j| j as f64 / t as f64).collect();
        let snaps = (0..t).map(|_| rng.randn(2, 3)).collect();
        let data = TimeSeriesDataset::new(times, snaps, None).unwrap();
        let shape = FieldShape {
            points: 3,
            features: 2,
            hidden: 4,
            layers: 2,
            activation: Activation::Sigmoid,
            time_input: false,
        };
        (data, init_params(&mut rng, shape, InitScheme::default()).unwrap())
    }

    fn cfg(lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            steps_per_unit: 4,
            scale: LossScale::Sum,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_field_loss_is_half_weighted_data_norm() {
        let (data, p) = tiny(1, 3);
        let zero = init_params(&mut Rng::new(0), p.shape.clone(), InitScheme::Zeros).unwrap();
        let h0 = Matrix::zeros(3, 1);
        let v = loss(&zero, &h0, &data, &cfg(0.0)).unwrap();
        let w = recon_weights(data.timestamps(), LossWeighting::Irregular);
        let want: f64 = data.snapshots().iter().zip(&w).map(|(x, w)| 0.5 * w * x.frobenius_sq()).sum();
        assert!((v.total - want).abs() <= 1e-15 * want);
        assert_eq!(v.l1, 0.0);
    }

    #[test]
    fn zero_data_zero_loss() {
        let (_, p) = tiny(2, 2);
        let data = TimeSeriesDataset::new(vec![0.5, 1.0], vec![Matrix::zeros(2, 3); 2], None).unwrap();
        let v = loss(&p, &Matrix::zeros(3, 1), &data, &cfg(0.0)).unwrap();
        assert_eq!(v.total, 0.0);
    }

    #[test]
    fn dl_dc_examples() {
        let x = Rng::new(3).randn(4, 5);
        let g = dl_dc(&x, &Matrix::zeros(5, 5), 0.0).unwrap();
        assert!(g.max_abs_diff(&x.matmul_tn(&x).unwrap().scale(-1.0)) <= 1e-14);

        let mut c = Matrix::filled(5, 5, 0.2);
        for i in 0..5 {
            c[(i, i)] = 0.0;
        }
        let base = dl_dc(&x, &c, 0.0).unwrap();
        let with = dl_dc(&x, &c, 0.7).unwrap();
        let diff = with.sub(&base).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 0.0 } else { 0.7 };
                assert!((diff[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scheduler_steps_the_rate() {
        let c = TrainConfig {
            learning_rate: 1.0,
            scheduler_gamma: 0.5,
            scheduler_step: 3,
            ..TrainConfig::default()
        };
        let rates: Vec<f64> = (0..7).map(|e| c.learning_rate_at(e)).collect();
        assert_eq!(rates, vec![1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.25]);
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let (data, p) = tiny(4, 2);
        let c = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..cfg(0.1)
        };
        let (out, report) = train(&data, p.clone(), &c).unwrap();
        assert_eq!(out, p);
        assert_eq!(report.records.len(), 1);
    }

    #[test]
    fn record_count_and_determinism() {
        let (data, p) = tiny(5, 3);
        let c = TrainConfig { epochs: 6, ..cfg(0.1) };
        let (a, ra) = train(&data, p.clone(), &c).unwrap();
        let (b, rb) = train(&data, p, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.records.len(), 6);
        let ta: Vec<u64> = ra.records.iter().map(|r| r.total.to_bits()).collect();
        let tb: Vec<u64> = rb.records.iter().map(|r| r.total.to_bits()).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn regular_and_irregular_weights_are_proportional() {
        // Equal spacing that does not start at 0: 0.2, 0.4, 0.6, 0.8.
        let times = [0.2, 0.4, 0.6, 0.8];
        let irr = recon_weights(&times, LossWeighting::Irregular);
        let reg = recon_weights(&times, LossWeighting::Regular);
        let ratio = irr[0] / reg[0];
        for (a, b) in irr.iter().zip(&reg) {
            assert!((a / b - ratio).abs() < 1e-12);
        }
        let (_, p) = tiny(6, 4);
        let mut rng = Rng::new(60);
        let data = TimeSeriesDataset::new(times.to_vec(), (0..4).map(|_| rng.randn(2, 3)).collect(), None).unwrap();
        let h0 = Matrix::zeros(3, 1);
        let a = loss(&p, &h0, &data, &TrainConfig { weighting: LossWeighting::Irregular, ..cfg(0.0) }).unwrap();
        let b = loss(&p, &h0, &data, &TrainConfig { weighting: LossWeighting::Regular, ..cfg(0.0) }).unwrap();
        assert!((a.recon / b.recon - ratio).abs() < 1e-12);
    }

    #[test]
    fn convergence_epoch_definition() {
        assert_eq!(convergence_epoch(&[10.0, 5.0, 1.005, 1.2, 1.0]), 3);
        assert_eq!(convergence_epoch(&[3.0]), 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { scheduler_gamma: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { scheduler_gamma: 1.5, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
