mod common;

use common::*;
use node_escm::baselines::{cesm_step, CesmConfig, SscConfig};
use node_escm::cluster::{affinity, spectral_cluster, ClusterConfig, Labels};
use node_escm::evaluation::{best_matching_exhaustive, best_matching_hungarian, clustering_accuracy};
use node_escm::field::{init_params, FieldShape, InitScheme};
use node_escm::io::{load_dataset, parse_matrix_csv, matrix_to_csv, save_dataset, TimeSeriesDataset};
use node_escm::numcore::{Activation, Matrix, Rng};
use node_escm::odesolve::{ode_solve, SolveConfig};
use proptest::prelude::*;
use std::path::Path;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

fn labels_and_k() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, usize)> {
    (2usize..=6, 5usize..40).prop_flat_map(|(k, n)| {
        (
            prop::collection::vec(0..k, n),
            prop::collection::vec(0..k, n),
            Just(k),
        )
    })
}

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn mat_vec_round_trip(n in 2usize..14, values in prop::collection::vec(-1e6f64..1e6, 91)) {
        prop_assert!(check_mat_vec_round_trip(n, &values));
    }

    #[test]
    fn affinity_is_symmetric_nonnegative_zero_diagonal(seed in any::<u64>(), n in 1usize..12) {
        let c = Rng::new(seed).randn(n, n);
        let a = affinity(&c).unwrap();
        for i in 0..n {
            prop_assert_eq!(a[(i, i)], 0.0);
            for j in 0..n {
                prop_assert!(a[(i, j)] >= 0.0);
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
    }

    #[test]
    fn accuracy_ignores_relabeling((pred, truth, k) in labels_and_k(), seed in any::<u64>()) {
        prop_assert!(check_accuracy_relabeling(&pred, &truth, k, seed));
    }

    #[test]
    fn exhaustive_and_assignment_matchings_agree((pred, truth, k) in labels_and_k()) {
        let p = Labels::new(pred, k).unwrap();
        let t = Labels::new(truth, k).unwrap();
        prop_assert_eq!(best_matching_exhaustive(&p, &t).unwrap().0, best_matching_hungarian(&p, &t).unwrap().0);
    }

    // While fewer than half of the smallest cluster is corrupted the identity
    // stays the unique best matching, so each flip costs exactly one point.
    // Past that, a relabeling can win and accuracy may rise again.
    #[test]
    fn corrupting_more_points_never_helps(sizes in prop::collection::vec(3usize..12, 2..6), order_seed in any::<u64>()) {
        let k = sizes.len();
        let truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
        let n = truth.len();
        let t = Labels::new(truth.clone(), k).unwrap();
        let budget = (sizes.iter().min().unwrap() - 1) / 2;
        let order = Rng::new(order_seed).permutation(n);
        let mut pred = truth.clone();
        let mut last = 1.0;
        for (m, &i) in order.iter().take(budget).enumerate() {
            pred[i] = (pred[i] + 1) % k;
            let acc = clustering_accuracy(&Labels::new(pred.clone(), k).unwrap(), &t).unwrap();
            prop_assert!(acc <= last);
            prop_assert_eq!(acc, (n - m - 1) as f64 / n as f64);
            last = acc;
        }
    }

    #[test]
    fn matrix_csv_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
        let m = Matrix::new(3, 4, values).unwrap();
        let back = parse_matrix_csv(&matrix_to_csv(&m), Path::new("m.csv"), "m").unwrap();
        prop_assert_eq!(back, m);
    }
}

proptest! {
    #![proptest_config(cases(120))]

    #[test]
    fn spectral_recovers_block_diagonal(seed in any::<u64>(), sizes in prop::collection::vec(2usize..8, 2..5)) {
        prop_assert!(check_block_recovery(seed, &sizes));
    }

    #[test]
    fn spectral_is_permutation_equivariant(seed in any::<u64>(), sizes in prop::collection::vec(2usize..7, 2..4)) {
        let mut rng = Rng::new(seed);
        let (a, _) = block_affinity(&mut rng, &sizes);
        let n = a.rows();
        let perm = rng.permutation(n);
        let mut b = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = a[(perm[i], perm[j])];
            }
        }
        let cfg = ClusterConfig::new(sizes.len());
        let la = spectral_cluster(&a, &cfg, &mut Rng::new(1)).unwrap();
        let lb = spectral_cluster(&b, &cfg, &mut Rng::new(1)).unwrap();
        let la_perm = Labels::new(perm.iter().map(|&p| la.as_slice()[p]).collect(), la.k()).unwrap();
        prop_assert_eq!(clustering_accuracy(&lb, &la_perm).unwrap(), 1.0);
    }

    #[test]
    fn ista_descends_monotonically(seed in any::<u64>(), d in 2usize..7, n in 3usize..12, lambda in 0.1f64..20.0, accelerate in any::<bool>()) {
        prop_assert!(check_ista_monotone(seed, d, n, lambda, accelerate));
    }

    #[test]
    fn cesm_never_increases_its_objective(seed in any::<u64>(), alpha_init in 0.0f64..1.0) {
        let mut rng = Rng::new(seed);
        let x = rng.randn(4, 8);
        let prev = rng.randn(8, 8).scale(0.1);
        let cfg = CesmConfig {
            outer: 4,
            alpha_init,
            inner: SscConfig { lambda: 3.0, max_iters: 200, ..SscConfig::default() },
            ..CesmConfig::default()
        };
        let step = cesm_step(&x, &prev, &cfg).unwrap();
        for w in step.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        prop_assert!((0.0..=1.0).contains(&step.alpha));
    }

    #[test]
    fn field_stays_within_its_lipschitz_bound(seed in any::<u64>(), tanh in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let shape = FieldShape {
            points: 4,
            features: 3,
            hidden: 5,
            layers: 3,
            activation: if tanh { Activation::Tanh } else { Activation::Sigmoid },
            time_input: false,
        };
        let p = init_params(&mut rng, shape, InitScheme::default()).unwrap();
        let bound = p.lipschitz_bound().unwrap();
        let x = rng.randn(3, 4);
        let h1 = rng.randn(6, 1);
        let h2 = rng.randn(6, 1);
        let g1 = p.forward(&h1, &x, 0.5).unwrap();
        let g2 = p.forward(&h2, &x, 0.5).unwrap();
        let ratio = g1.sub(&g2).unwrap().frobenius_sq().sqrt() / h1.sub(&h2).unwrap().frobenius_sq().sqrt();
        prop_assert!(ratio <= bound * (1.0 + 1e-12), "{ratio} > {bound}");
        let huge = rng.randn(6, 1).scale(1e200);
        prop_assert!(p.forward(&huge, &x.scale(1e200), 0.5).unwrap().is_finite());
    }

    #[test]
    fn solver_starts_at_h0_and_composes(seed in any::<u64>()) {
        let inst = sized_instance(seed, 0.0, 4, 2, 5, &[0.5, 1.0], 10);
        let path = inst.data.control_path();
        let cfg = SolveConfig { steps_per_unit: 10 };
        let at0 = ode_solve(&inst.h0, &inst.params, &path, &[0.0], cfg).unwrap();
        prop_assert_eq!(&at0[0], &inst.h0);
        let split = ode_solve(&inst.h0, &inst.params, &path, &[0.5, 1.0], cfg).unwrap();
        let resumed = ode_solve(&split[0], &inst.params, &shifted(&inst.data, 0.5), &[0.5], cfg).unwrap();
        let direct = ode_solve(&inst.h0, &inst.params, &path, &[1.0], cfg).unwrap();
        prop_assert!(split[1].max_abs_diff(&direct[0]) <= 1e-12);
        prop_assert!(resumed[0].max_abs_diff(&direct[0]) <= 1e-12);
    }

    #[test]
    fn manifest_round_trip(seed in any::<u64>(), t in 1usize..4, labelled in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let times: Vec<f64> = (1..=t).map(|j| j as f64 / t as f64).collect();
        let snaps = times.iter().map(|_| rng.randn(3, 5)).collect();
        let labels = labelled.then(|| Labels::from_assignment(vec![0, 1, 0, 2, 1]));
        let mut data = TimeSeriesDataset::new(times, snaps, labels).unwrap();
        data.provenance.insert("seed".into(), seed.to_string());
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(dir.path(), &data).unwrap();
        prop_assert_eq!(load_dataset(&manifest).unwrap(), data);
    }
}

/// The same control signal, re-timed so that `offset` becomes time 0.
fn shifted(data: &TimeSeriesDataset, offset: f64) -> node_escm::odesolve::ControlPath {
    let mut times = vec![0.0];
    let mut snaps = vec![data.control_path().interpolate(offset)];
    for (t, x) in data.timestamps().iter().zip(data.snapshots()) {
        if *t > offset {
            times.push(t - offset);
            snaps.push(x.clone());
        }
    }
    node_escm::odesolve::ControlPath::new(times, snaps).unwrap()
}
