#![allow(dead_code)]

use node_escm::cluster::{mat, spectral_cluster, vec, ClusterConfig, CoeffMatrix, Labels};
use node_escm::evaluation::clustering_accuracy;
use node_escm::field::{init_params, FieldParams, FieldShape, InitScheme};
use node_escm::io::TimeSeriesDataset;
use node_escm::numcore::{Activation, Matrix, Rng, Tape, Var};
use node_escm::odesolve::{rk4_on_tape, SolveConfig, TapeField};
use node_escm::train::{initial_state, loss, loss_and_grad, H0Mode, LossScale, TrainConfig};
use node_escm::Result;

pub struct Instance {
    pub params: FieldParams,
    pub h0: Matrix,
    pub data: TimeSeriesDataset,
    pub cfg: TrainConfig,
}

/// N=3, D=2, T=2 at t = 0.5, 1 with 4 RK4 sub-steps in total; smooth gate
/// and one hidden layer so every weight matrix carries gradient.
pub fn tiny_instance(seed: u64, lambda: f64) -> Instance {
    sized_instance(seed, lambda, 3, 2, 4, &[0.5, 1.0], 4)
}

pub fn sized_instance(
    seed: u64,
    lambda: f64,
    points: usize,
    features: usize,
    hidden: usize,
    times: &[f64],
    steps_per_unit: usize,
) -> Instance {
    let mut rng = Rng::new(seed);
    let shape = FieldShape {
        points,
        features,
        hidden,
        layers: 3,
        activation: Activation::Tanh,
        time_input: false,
    };
    let params = init_params(
        &mut rng,
        shape,
        InitScheme::ScaledNormal {
            gain: 1.0,
            output_gain: 1.0,
        },
    )
    .unwrap();
    let snapshots = times.iter().map(|_| rng.randn(features, points)).collect();
    let data = TimeSeriesDataset::new(times.to_vec(), snapshots, None).unwrap();
    let h0 = initial_state(points, H0Mode::Random, &mut rng);
    let cfg = TrainConfig {
        lambda,
        steps_per_unit,
        scale: LossScale::Sum,
        ..TrainConfig::default()
    };
    Instance { params, h0, data, cfg }
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between tape gradients and central differences
/// of the total loss, over every weight entry.
pub fn fd_gradient_error(inst: &Instance, step: f64, floor: f64) -> f64 {
    let (_, grads) = loss_and_grad(&inst.params, &inst.h0, &inst.data, &inst.cfg).unwrap();
    let mut worst = 0.0f64;
    for (k, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let mut plus = inst.params.clone();
            plus.matrices_mut()[k].as_mut_slice()[idx] += step;
            let mut minus = inst.params.clone();
            minus.matrices_mut()[k].as_mut_slice()[idx] -= step;
            let lp = loss(&plus, &inst.h0, &inst.data, &inst.cfg).unwrap().total;
            let lm = loss(&minus, &inst.h0, &inst.data, &inst.cfg).unwrap().total;
            let fd = (lp - lm) / (2.0 * step);
            worst = worst.max(rel_err(g.as_slice()[idx], fd, floor));
        }
    }
    worst
}

/// Smallest |C| entry (off the diagonal) over the observation times.
pub fn min_abs_coefficient(inst: &Instance) -> f64 {
    let states = node_escm::odesolve::ode_solve(
        &inst.h0,
        &inst.params,
        &inst.data.control_path(),
        inst.data.timestamps(),
        inst.cfg.solve(),
    )
    .unwrap();
    let mut smallest = f64::INFINITY;
    for h in &states {
        for v in h.as_slice() {
            smallest = smallest.min(v.abs());
        }
    }
    smallest
}

/// Max |dl_dc − tape gradient| for `l = ½‖X − XC‖² + λ‖C‖₁` at a random C
/// with no entry near zero.
pub fn dl_dc_tape_error(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (d, n) = (4, 7);
    let x = rng.randn(d, n);
    let mut c = rng.randn(n, n);
    for v in c.as_mut_slice() {
        if v.abs() < 0.05 {
            *v = 0.05f64.copysign(*v);
        }
    }
    let lambda = rng.uniform_range(0.0, 2.0);
    let mut tape = Tape::new();
    let cv = tape.leaf(c.clone());
    let xv = tape.constant(x.clone());
    let xc = tape.matmul(xv, cv).unwrap();
    let r = tape.sub(xv, xc).unwrap();
    let r2 = tape.frob_sq(r);
    let a = tape.abs_sum(cv);
    let l = tape.lincomb(&[(r2, 0.5), (a, lambda)]).unwrap();
    let grads = tape.backward(l).unwrap();
    let tape_grad = grads.get(cv).unwrap();
    let analytic = node_escm::train::dl_dc(&x, &c, lambda).unwrap();
    analytic.max_abs_diff(tape_grad)
}

/// dh/dt = −h.
struct Decay(Var);

impl TapeField for Decay {
    fn eval(&self, tape: &mut Tape, h: Var, _t: f64) -> Result<Var> {
        tape.matmul(self.0, h)
    }
}

pub fn decay_error(steps_per_unit: usize) -> f64 {
    let mut tape = Tape::new();
    let a = tape.constant(Matrix::scalar(-1.0));
    let h0 = tape.constant(Matrix::scalar(1.0));
    let out = rk4_on_tape(&mut tape, &Decay(a), h0, &[1.0], SolveConfig { steps_per_unit }).unwrap();
    (tape.scalar(out[0]).unwrap() - (-1.0f64).exp()).abs()
}

/// Error ratios for three successive halvings of the step.
pub fn rk4_ratios() -> Vec<f64> {
    [4, 8, 16].iter().map(|&s| decay_error(s) / decay_error(2 * s)).collect()
}

// Property checks shared by the property suite and the acceptance run.

pub fn check_mat_vec_round_trip(n: usize, values: &[f64]) -> bool {
    let m = n * (n - 1) / 2;
    let h = Matrix::column_vector(values[..m].to_vec());
    let c = mat(&h).unwrap();
    let back = vec(&c);
    let again = mat(&back).unwrap();
    back == h && again == c && CoeffMatrix::try_from_matrix(c.as_matrix().clone()).is_ok()
}

/// Random block-diagonal affinity with connected positive blocks, rows and
/// columns shuffled. Returns the affinity and the block of every point.
pub fn block_affinity(rng: &mut Rng, sizes: &[usize]) -> (Matrix, Labels) {
    let n: usize = sizes.iter().sum();
    let mut block = Vec::with_capacity(n);
    for (b, &s) in sizes.iter().enumerate() {
        block.extend(std::iter::repeat_n(b, s));
    }
    let perm = rng.permutation(n);
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            if block[perm[i]] == block[perm[j]] {
                let w = rng.uniform_range(0.2, 1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    let truth = Labels::from_assignment((0..n).map(|i| block[perm[i]]).collect());
    (a, truth)
}

pub fn check_block_recovery(seed: u64, sizes: &[usize]) -> bool {
    let mut rng = Rng::new(seed);
    let (a, truth) = block_affinity(&mut rng, sizes);
    let labels = spectral_cluster(&a, &ClusterConfig::new(sizes.len()), &mut rng).unwrap();
    clustering_accuracy(&labels, &truth).unwrap() == 1.0
}

pub fn check_accuracy_relabeling(pred: &[usize], truth: &[usize], k: usize, seed: u64) -> bool {
    let mut rng = Rng::new(seed);
    let (p1, p2) = (rng.permutation(k), rng.permutation(k));
    let pred_l = Labels::new(pred.to_vec(), k).unwrap();
    let truth_l = Labels::new(truth.to_vec(), k).unwrap();
    let base = clustering_accuracy(&pred_l, &truth_l).unwrap();
    let pred_r = Labels::new(pred.iter().map(|&l| p1[l]).collect(), k).unwrap();
    let truth_r = Labels::new(truth.iter().map(|&l| p2[l]).collect(), k).unwrap();
    base == clustering_accuracy(&pred_r, &truth_l).unwrap()
        && base == clustering_accuracy(&pred_l, &truth_r).unwrap()
        && base == clustering_accuracy(&pred_r, &truth_r).unwrap()
}

pub fn check_ista_monotone(seed: u64, d: usize, n: usize, lambda: f64, accelerate: bool) -> bool {
    use node_escm::baselines::{ssc_solve, SscConfig};
    let x = Rng::new(seed).randn(d, n);
    let cfg = SscConfig {
        lambda,
        max_iters: 300,
        accelerate,
        ..SscConfig::default()
    };
    let sol = ssc_solve(&x, &cfg).unwrap();
    let diag_zero = (0..n).all(|i| sol.coefficients[(i, i)] == 0.0);
    diag_zero && sol.history.windows(2).all(|w| w[1] <= w[0])
}
