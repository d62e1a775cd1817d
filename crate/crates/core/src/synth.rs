//! Evolving union-of-subspaces data.
//!
//! Each of `n` subspaces gets a random orthonormal basis `U_i` (D×d) and
//! `p` points `U_i Q_i + noise · E_i`. The first snapshot concatenates the
//! blocks (columns optionally shuffled). Every later snapshot is a Givens
//! rotation of the previous one, `X_{t+1} = G_t X_t`, with a uniform angle
//! in `[0, max_angle)`.

use std::f64::consts::PI;

use crate::cluster::Labels;
use crate::error::{Error, Result};
use crate::io::TimeSeriesDataset;
use crate::numcore::{orth, Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub subspaces: usize,
    pub points_per_subspace: usize,
    pub time_steps: usize,
    pub noise: f64,
    pub max_angle: f64,
    /// Draw the rotation plane once and reuse it for every step.
    pub fixed_plane: bool,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            ambient_dim: 30,
            subspace_dim: 4,
            subspaces: 5,
            points_per_subspace: 21,
            time_steps: 10,
            noise: 0.1,
            max_angle: PI / 10.0,
            fixed_plane: false,
            shuffle: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subspace_dim == 0 || self.subspace_dim >= self.ambient_dim {
            return Err(Error::Config(format!(
                "need 0 < subspace_dim < ambient_dim, got {} and {}",
                self.subspace_dim, self.ambient_dim
            )));
        }
        if self.ambient_dim < 2 || self.subspaces == 0 || self.points_per_subspace == 0 || self.time_steps == 0 {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        if !(self.noise >= 0.0) || !(self.max_angle >= 0.0) {
            return Err(Error::Config("noise and max_angle must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.subspaces * self.points_per_subspace
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("generator".into(), "synthetic-union-of-subspaces".into()),
            ("ambient_dim".into(), self.ambient_dim.to_string()),
            ("subspace_dim".into(), self.subspace_dim.to_string()),
            ("subspaces".into(), self.subspaces.to_string()),
            ("points_per_subspace".into(), self.points_per_subspace.to_string()),
            ("time_steps".into(), self.time_steps.to_string()),
            ("noise".into(), self.noise.to_string()),
            ("max_angle".into(), self.max_angle.to_string()),
            ("fixed_plane".into(), self.fixed_plane.to_string()),
            ("shuffle".into(), self.shuffle.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    pub a: usize,
    pub b: usize,
    pub theta: f64,
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: TimeSeriesDataset,
    /// Orthonormal basis of each subspace at the first time step.
    pub bases: Vec<Matrix>,
    /// `rotations[t]` maps snapshot t to snapshot t+1.
    pub rotations: Vec<Rotation>,
    /// Column j of the first snapshot is generated point `permutation[j]`.
    pub permutation: Vec<usize>,
}

/// Identity except for a rotation by `theta` in the (a, b) plane.
pub fn givens(dim: usize, a: usize, b: usize, theta: f64) -> Result<Matrix> {
    if a == b {
        return Err(Error::Contract(format!("givens needs distinct axes, got {a} twice")));
    }
    if a > b || b >= dim {
        return Err(Error::Contract(format!("givens needs a < b < {dim}, got ({a}, {b})")));
    }
    let mut g = Matrix::identity(dim);
    let (s, c) = theta.sin_cos();
    g[(a, a)] = c;
    g[(b, b)] = c;
    g[(a, b)] = -s;
    g[(b, a)] = s;
    Ok(g)
}

fn random_plane(rng: &mut Rng, dim: usize) -> (usize, usize) {
    let a = rng.below(dim);
    let mut b = rng.below(dim - 1);
    if b >= a {
        b += 1;
    }
    (a.min(b), a.max(b))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let (dim, d, p) = (cfg.ambient_dim, cfg.subspace_dim, cfg.points_per_subspace);

    let mut bases = Vec::with_capacity(cfg.subspaces);
    let mut blocks = Vec::with_capacity(cfg.subspaces);
    for _ in 0..cfg.subspaces {
        let q = rng.randn(d, p);
        let u = orth(&rng.randn(dim, d))?;
        let noise = rng.randn(dim, p).scale(cfg.noise);
        blocks.push(u.matmul(&q)?.add(&noise)?);
        bases.push(u);
    }
    let stacked = Matrix::hstack(&blocks)?;
    let n = cfg.points();
    let generated_labels: Vec<usize> = (0..n).map(|j| j / p).collect();
    let permutation = if cfg.shuffle {
        rng.permutation(n)
    } else {
        (0..n).collect()
    };
    let first = stacked.select_columns(&permutation);
    let labels: Vec<usize> = permutation.iter().map(|&j| generated_labels[j]).collect();

    let mut snapshots = vec![first];
    let mut rotations = Vec::with_capacity(cfg.time_steps.saturating_sub(1));
    let fixed = random_plane(&mut rng, dim);
    for _ in 1..cfg.time_steps {
        let (a, b) = if cfg.fixed_plane {
            fixed
        } else {
            random_plane(&mut rng, dim)
        };
        let theta = rng.uniform_range(0.0, cfg.max_angle);
        let g = givens(dim, a, b, theta)?;
        let next = g.matmul(snapshots.last().expect("non-empty"))?;
        snapshots.push(next);
        rotations.push(Rotation { a, b, theta });
    }

    let steps = cfg.time_steps as f64;
    let timestamps = (1..=cfg.time_steps).map(|j| j as f64 / steps).collect();
    let mut dataset = TimeSeriesDataset::new(
        timestamps,
        snapshots,
        Some(Labels::new(labels, cfg.subspaces)?),
    )?;
    dataset.provenance.extend(cfg.echo());
    Ok(SynthData {
        dataset,
        bases,
        rotations,
        permutation,
    })
}
