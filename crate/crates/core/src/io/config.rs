//! Flat `key = value` run configuration. Every tunable has a default; a file
//! only lists what it changes. Unknown keys are errors.

use std::fs;
use std::path::Path;

use crate::baselines::{AffectConfig, CesmConfig, Kernel, SscConfig, StepRule};
use crate::error::{Error, Result};
use crate::field::{FieldShape, InitScheme};
use crate::numcore::Activation;
use crate::synth::SynthConfig;
use crate::train::{H0Mode, LossScale, LossWeighting, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
    pub time_input: bool,
    pub init: InitScheme,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            hidden: 40,
            layers: 2,
            activation: Activation::Relu,
            time_input: false,
            init: InitScheme::ScaledNormal {
                gain: 0.3,
                output_gain: 0.0,
            },
        }
    }
}

impl FieldConfig {
    pub fn shape(&self, features: usize, points: usize) -> FieldShape {
        FieldShape {
            points,
            features,
            hidden: self.hidden,
            layers: self.layers,
            activation: self.activation,
            time_input: self.time_input,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub field: FieldConfig,
    pub train: TrainConfig,
    /// Cluster count; 0 takes it from the dataset's labels.
    pub k: usize,
    pub restarts: usize,
    pub ssc: SscConfig,
    pub affect: AffectConfig,
    pub cesm: CesmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            synth: SynthConfig::default(),
            field: FieldConfig::default(),
            train: TrainConfig::default(),
            k: 0,
            restarts: 20,
            ssc: SscConfig::default(),
            affect: AffectConfig::default(),
            cesm: CesmConfig::default(),
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    /// Sets the one seed that drives data generation, initialization,
    /// training and k-means.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("`{v}` is not a valid number"))
        }
        let flag = |v: &str| parse_bool(v).ok_or_else(|| format!("`{v}` is not a boolean"));
        let (gain, output_gain) = match self.field.init {
            InitScheme::ScaledNormal { gain, output_gain } => (gain, output_gain),
            InitScheme::Zeros => (0.0, 0.0),
        };
        match key {
            "seed" => self.set_seed(num(v)?),
            "ambient_dim" => self.synth.ambient_dim = num(v)?,
            "subspace_dim" => self.synth.subspace_dim = num(v)?,
            "subspaces" => self.synth.subspaces = num(v)?,
            "points_per_subspace" => self.synth.points_per_subspace = num(v)?,
            "time_steps" => self.synth.time_steps = num(v)?,
            "noise" => self.synth.noise = num(v)?,
            "max_angle" => self.synth.max_angle = num(v)?,
            "fixed_plane" => self.synth.fixed_plane = flag(v)?,
            "shuffle" => self.synth.shuffle = flag(v)?,
            "hidden" => self.field.hidden = num(v)?,
            "layers" => self.field.layers = num(v)?,
            "activation" => {
                self.field.activation = Activation::from_name(v).ok_or_else(|| format!("unknown activation `{v}`"))?
            }
            "time_input" => self.field.time_input = flag(v)?,
            "init" => {
                self.field.init = match v {
                    "normal" => InitScheme::ScaledNormal { gain, output_gain },
                    "zeros" => InitScheme::Zeros,
                    _ => return Err(format!("unknown init `{v}` (normal | zeros)")),
                }
            }
            "init_gain" => {
                self.field.init = InitScheme::ScaledNormal {
                    gain: num(v)?,
                    output_gain,
                }
            }
            "init_output_gain" => {
                self.field.init = InitScheme::ScaledNormal {
                    gain,
                    output_gain: num(v)?,
                }
            }
            "lambda" => self.train.lambda = num(v)?,
            "epochs" => self.train.epochs = num(v)?,
            "learning_rate" => self.train.learning_rate = num(v)?,
            "scheduler_gamma" => self.train.scheduler_gamma = num(v)?,
            "scheduler_step" => self.train.scheduler_step = num(v)?,
            "steps_per_unit" => self.train.steps_per_unit = num(v)?,
            "h0" => {
                self.train.h0_mode = match v {
                    "zeros" => H0Mode::Zeros,
                    "random" => H0Mode::Random,
                    _ => return Err(format!("unknown h0 `{v}` (zeros | random)")),
                }
            }
            "weighting" => {
                self.train.weighting = match v {
                    "irregular" => LossWeighting::Irregular,
                    "regular" => LossWeighting::Regular,
                    _ => return Err(format!("unknown weighting `{v}` (irregular | regular)")),
                }
            }
            "loss_scale" => {
                self.train.scale = match v {
                    "per-entry" => LossScale::PerEntry,
                    "sum" => LossScale::Sum,
                    _ => return Err(format!("unknown loss_scale `{v}` (per-entry | sum)")),
                }
            }
            "k" => self.k = num(v)?,
            "restarts" => self.restarts = num(v)?,
            "ssc_lambda" => self.ssc.lambda = num(v)?,
            "ssc_max_iters" => self.ssc.max_iters = num(v)?,
            "ssc_tolerance" => self.ssc.tolerance = num(v)?,
            "ssc_step" => {
                self.ssc.step = match v {
                    "fixed" => StepRule::Fixed,
                    "backtracking" => StepRule::Backtracking,
                    _ => return Err(format!("unknown ssc_step `{v}` (fixed | backtracking)")),
                }
            }
            "ssc_accelerate" => self.ssc.accelerate = flag(v)?,
            "affect_alpha" => self.affect.alpha = num(v)?,
            "affect_kernel" => {
                self.affect.kernel = match v {
                    "gaussian" => Kernel::Gaussian { bandwidth: None },
                    "negative-euclidean" => Kernel::NegativeEuclidean,
                    _ => return Err(format!("unknown affect_kernel `{v}` (gaussian | negative-euclidean)")),
                }
            }
            "affect_bandwidth" => {
                let bandwidth = if v == "median" { None } else { Some(num(v)?) };
                self.affect.kernel = Kernel::Gaussian { bandwidth };
            }
            "cesm_outer" => self.cesm.outer = num(v)?,
            "cesm_alpha_init" => self.cesm.alpha_init = num(v)?,
            "cesm_fix_alpha" => self.cesm.fix_alpha = flag(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.ssc.validate()?;
        self.affect.validate()?;
        self.cesm.validate()?;
        if self.field.hidden == 0 {
            return Err(Error::Config("hidden must be positive".into()));
        }
        if self.field.layers < 2 {
            return Err(Error::Config(format!("layers must be >= 2, got {}", self.field.layers)));
        }
        if self.k == 1 {
            return Err(Error::Config("k must be 0 (from labels) or >= 2".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        Ok(())
    }

    /// The effective CESM config: its inner solver is the SSC config.
    pub fn cesm_config(&self) -> CesmConfig {
        CesmConfig {
            inner: self.ssc,
            ..self.cesm
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |field: &str, msg: String| Error::Load {
                path: origin.to_path_buf(),
                field: field.to_string(),
                msg: format!("line {}: {msg}", lineno + 1),
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail("syntax", format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            cfg.set(k, v).map_err(|msg| fail(k, msg))?;
        }
        cfg.validate().map_err(|e| Error::Load {
            path: origin.to_path_buf(),
            field: "config".into(),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path)
    }

    /// Every key with its effective value; parses back to the same config.
    pub fn to_text(&self) -> String {
        use crate::field::format_f64 as f;
        let mut lines: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("ambient_dim".into(), self.synth.ambient_dim.to_string()),
            ("subspace_dim".into(), self.synth.subspace_dim.to_string()),
            ("subspaces".into(), self.synth.subspaces.to_string()),
            ("points_per_subspace".into(), self.synth.points_per_subspace.to_string()),
            ("time_steps".into(), self.synth.time_steps.to_string()),
            ("noise".into(), f(self.synth.noise)),
            ("max_angle".into(), f(self.synth.max_angle)),
            ("fixed_plane".into(), self.synth.fixed_plane.to_string()),
            ("shuffle".into(), self.synth.shuffle.to_string()),
            ("hidden".into(), self.field.hidden.to_string()),
            ("layers".into(), self.field.layers.to_string()),
            ("activation".into(), self.field.activation.name().to_string()),
            ("time_input".into(), self.field.time_input.to_string()),
        ];
        match self.field.init {
            InitScheme::Zeros => lines.push(("init".into(), "zeros".into())),
            InitScheme::ScaledNormal { gain, output_gain } => {
                lines.push(("init".into(), "normal".into()));
                lines.push(("init_gain".into(), f(gain)));
                lines.push(("init_output_gain".into(), f(output_gain)));
            }
        }
        let t = &self.train;
        lines.extend([
            ("lambda".into(), f(t.lambda)),
            ("epochs".into(), t.epochs.to_string()),
            ("learning_rate".into(), f(t.learning_rate)),
            ("scheduler_gamma".into(), f(t.scheduler_gamma)),
            ("scheduler_step".into(), t.scheduler_step.to_string()),
            ("steps_per_unit".into(), t.steps_per_unit.to_string()),
            (
                "h0".into(),
                match t.h0_mode {
                    H0Mode::Zeros => "zeros",
                    H0Mode::Random => "random",
                }
                .into(),
            ),
            (
                "weighting".into(),
                match t.weighting {
                    LossWeighting::Irregular => "irregular",
                    LossWeighting::Regular => "regular",
                }
                .into(),
            ),
            (
                "loss_scale".into(),
                match t.scale {
                    LossScale::PerEntry => "per-entry",
                    LossScale::Sum => "sum",
                }
                .into(),
            ),
            ("k".into(), self.k.to_string()),
            ("restarts".into(), self.restarts.to_string()),
            ("ssc_lambda".into(), f(self.ssc.lambda)),
            ("ssc_max_iters".into(), self.ssc.max_iters.to_string()),
            ("ssc_tolerance".into(), f(self.ssc.tolerance)),
            (
                "ssc_step".into(),
                match self.ssc.step {
                    StepRule::Fixed => "fixed",
                    StepRule::Backtracking => "backtracking",
                }
                .into(),
            ),
            ("ssc_accelerate".into(), self.ssc.accelerate.to_string()),
            ("affect_alpha".into(), f(self.affect.alpha)),
        ]);
        match self.affect.kernel {
            Kernel::NegativeEuclidean => lines.push(("affect_kernel".into(), "negative-euclidean".into())),
            Kernel::Gaussian { bandwidth } => {
                lines.push(("affect_kernel".into(), "gaussian".into()));
                lines.push(("affect_bandwidth".into(), bandwidth.map_or("median".into(), f)));
            }
        }
        lines.extend([
            ("cesm_outer".into(), self.cesm.outer.to_string()),
            ("cesm_alpha_init".into(), f(self.cesm.alpha_init)),
            ("cesm_fix_alpha".into(), self.cesm.fix_alpha.to_string()),
        ]);
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
