//! Self-expression and spectral clustering on points drawn from three lines
//! through the origin, without any time dynamics.

use node_escm::baselines::{ssc_solve, SscConfig};
use node_escm::cluster::{affinity, spectral_cluster, ClusterConfig, Labels};
use node_escm::evaluation::clustering_accuracy;
use node_escm::numcore::{Matrix, Rng};

fn main() -> node_escm::Result<()> {
    let mut rng = Rng::new(3);
    let (dim, per_line, lines) = (5, 6, 3);
    let directions = rng.randn(dim, lines);
    let mut x = Matrix::zeros(dim, per_line * lines);
    let mut truth = Vec::new();
    for l in 0..lines {
        for p in 0..per_line {
            let scale = rng.uniform_range(0.5, 2.0) * if p % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..dim {
                x[(i, l * per_line + p)] = scale * directions[(i, l)];
            }
            truth.push(l);
        }
    }

    let sol = ssc_solve(&x, &SscConfig { lambda: 50.0, ..SscConfig::default() })?;
    println!("SSC objective {:.6} after {} iterations", sol.objective, sol.iterations);
    let a = affinity(&sol.coefficients)?;
    let mut leak = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if truth[i] != truth[j] {
                leak += a[(i, j)];
            }
        }
    }
    println!("affinity mass between different lines: {leak:.2e} (total {:.3})", a.sum());

    let labels = spectral_cluster(&a, &ClusterConfig::new(lines), &mut rng)?;
    let truth = Labels::new(truth, lines)?;
    println!("labels   {:?}", labels.as_slice());
    println!("accuracy {}", clustering_accuracy(&labels, &truth)?);
    Ok(())
}
