//! Compares reverse-mode gradients through the unrolled RK4 solve with
//! central finite differences on a tiny problem.

use node_escm::field::{init_params, FieldShape, InitScheme};
use node_escm::io::TimeSeriesDataset;
use node_escm::numcore::{Activation, Rng};
use node_escm::train::{initial_state, loss, loss_and_grad, H0Mode, TrainConfig};

fn main() -> node_escm::Result<()> {
    let mut rng = Rng::new(7);
    let shape = FieldShape {
        points: 3,
        features: 2,
        hidden: 4,
        layers: 3,
        activation: Activation::Tanh,
        time_input: false,
    };
    let params = init_params(&mut rng, shape, InitScheme::default())?;
    let data = TimeSeriesDataset::new(vec![0.5, 1.0], vec![rng.randn(2, 3), rng.randn(2, 3)], None)?;
    let h0 = initial_state(3, H0Mode::Random, &mut rng);
    let cfg = TrainConfig { lambda: 0.1, steps_per_unit: 4, ..TrainConfig::default() };

    let (value, grads) = loss_and_grad(&params, &h0, &data, &cfg)?;
    println!("loss {:.6e}", value.total);
    let eps = 1e-6;
    for ((name, g), k) in params.matrix_names().iter().zip(&grads).zip(0..) {
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let mut p = params.clone();
            p.matrices_mut()[k].as_mut_slice()[i] += eps;
            let up = loss(&p, &h0, &data, &cfg)?.total;
            p.matrices_mut()[k].as_mut_slice()[i] -= 2.0 * eps;
            let down = loss(&p, &h0, &data, &cfg)?.total;
            let fd = (up - down) / (2.0 * eps);
            let a = g.as_slice()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-4));
        }
        println!("{name:<6} {:>3} entries  max relative error {worst:.2e}", g.len());
    }
    Ok(())
}
