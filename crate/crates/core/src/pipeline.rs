//! End-to-end stages shared by the CLI and the examples: train a field,
//! cluster at arbitrary times, run a baseline, score labels.

use crate::baselines::{affect_sequence, cesm_fit, ssc_solve, Kernel};
use crate::cluster::{affinity, mat, spectral_cluster, ClusterConfig, Labels};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy_curve, EvalReport};
use crate::field::{init_params, Checkpoint, FieldParams};
use crate::io::{LabelSeries, RunConfig, TimeSeriesDataset};
use crate::numcore::{Matrix, Rng};
use crate::odesolve::{ode_solve, SolveConfig};
use crate::train::{initial_state_for, train_with_callback, EpochRecord, TrainReport};

/// Field parameters for `data`, drawn from `cfg.seed`.
pub fn init_field(cfg: &RunConfig, data: &TimeSeriesDataset) -> Result<FieldParams> {
    let shape = cfg.field.shape(data.features(), data.points());
    init_params(&mut Rng::new(cfg.seed), shape, cfg.field.init)
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

pub fn train_run(data: &TimeSeriesDataset, cfg: &RunConfig) -> Result<TrainRun> {
    train_run_with(data, cfg, |_| {})
}

pub fn train_run_with(
    data: &TimeSeriesDataset,
    cfg: &RunConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainRun> {
    cfg.validate()?;
    let init = init_field(cfg, data)?;
    let h0 = initial_state_for(&cfg.train, data.points());
    let (params, report) = train_with_callback(data, init, &h0, &cfg.train, on_epoch)?;
    Ok(TrainRun {
        checkpoint: Checkpoint {
            params,
            h0,
            steps_per_unit: cfg.train.steps_per_unit,
        },
        report,
    })
}

/// `cfg.k`, or the cluster count of the dataset's labels when that is 0.
pub fn resolve_k(cfg: &RunConfig, data: &TimeSeriesDataset) -> Result<usize> {
    if cfg.k > 0 {
        return Ok(cfg.k);
    }
    match data.labels() {
        Some(l) if l.k() >= 2 => Ok(l.k()),
        _ => Err(Error::Config(
            "k = 0 takes the cluster count from the dataset labels, but there are none".into(),
        )),
    }
}

fn cluster_config(cfg: &RunConfig, k: usize) -> ClusterConfig {
    ClusterConfig {
        restarts: cfg.restarts,
        ..ClusterConfig::new(k)
    }
}

/// Spectral clustering of one affinity; the k-means seed depends only on
/// `cfg.seed`, so each time step is reproducible on its own.
pub fn labels_from_affinity(a: &Matrix, k: usize, cfg: &RunConfig) -> Result<Labels> {
    spectral_cluster(a, &cluster_config(cfg, k), &mut Rng::new(cfg.seed))
}

/// Labels at each of `times` (increasing, in [0, 1]) from a trained field.
/// Times need not be observation times of `data`.
pub fn cluster_at(
    checkpoint: &Checkpoint,
    data: &TimeSeriesDataset,
    times: &[f64],
    k: usize,
    cfg: &RunConfig,
) -> Result<LabelSeries> {
    if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("cluster time {t} is outside [0, 1]")));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("cluster times must be strictly increasing".into()));
    }
    let s = &checkpoint.params.shape;
    if (s.features, s.points) != (data.features(), data.points()) {
        return Err(Error::shape(
            "cluster_at",
            format!(
                "model built for {}x{} snapshots, data is {}x{}",
                s.features,
                s.points,
                data.features(),
                data.points()
            ),
        ));
    }
    let solve = SolveConfig {
        steps_per_unit: checkpoint.steps_per_unit,
    };
    let states = ode_solve(&checkpoint.h0, &checkpoint.params, &data.control_path(), times, solve)?;
    let labels = states
        .iter()
        .map(|h| labels_from_affinity(&affinity(mat(h)?.as_matrix())?, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSeries {
        times: times.to_vec(),
        labels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Ssc,
    Affect,
    Cesm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ssc, Method::Affect, Method::Cesm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ssc => "ssc",
            Method::Affect => "affect",
            Method::Cesm => "cesm",
        }
    }

    pub fn from_name(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Baseline labels at every observation time of `data`.
pub fn baseline_labels(method: Method, data: &TimeSeriesDataset, k: usize, cfg: &RunConfig) -> Result<LabelSeries> {
    cfg.validate()?;
    let affinities: Vec<Matrix> = match method {
        Method::Ssc => data
            .snapshots()
            .iter()
            .map(|x| affinity(&ssc_solve(x, &cfg.ssc)?.coefficients))
            .collect::<Result<_>>()?,
        Method::Affect => {
            if cfg.affect.kernel == Kernel::NegativeEuclidean {
                return Err(Error::Config(
                    "the negative-euclidean kernel has negative entries and cannot feed spectral clustering".into(),
                ));
            }
            affect_sequence(data, &cfg.affect)?
        }
        Method::Cesm => cesm_fit(data, &cfg.cesm_config())?
            .iter()
            .map(|s| affinity(&s.coefficients))
            .collect::<Result<_>>()?,
    };
    let labels = affinities
        .iter()
        .map(|a| labels_from_affinity(a, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSeries {
        times: data.timestamps().to_vec(),
        labels,
    })
}

/// Scores every step of `series` against the dataset's (time-invariant)
/// ground truth.
pub fn evaluate(method: &str, series: &LabelSeries, data: &TimeSeriesDataset) -> Result<EvalReport> {
    let truth = data
        .labels()
        .ok_or_else(|| Error::Config("the dataset has no ground-truth labels".into()))?;
    let truths = vec![truth.clone(); series.labels.len()];
    accuracy_curve(method, &series.times, &series.labels, &truths)
}
