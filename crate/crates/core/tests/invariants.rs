use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rhino::io::{read_dataset, write_dataset};
use rhino::prior::{log_prior, PriorConfig};
use rhino::sem::Simulator;
use rhino::synthgen::{generate, sample_ground_truth, GenConfig};
use rhino::trainer::{train, TrainConfig};
use rhino::treatment::{estimate_effect, CateQuery};
use rhino::TemporalGraph;

fn prior_only(lambda_s: f64, lambda_p: f64, alpha: f64, rho: f64, gp: Option<Array3<f64>>) -> PriorConfig {
    PriorConfig {
        lambda_s,
        lambda_p,
        alpha,
        rho,
        prior_graph: gp,
        sparsity_on_inst_only: false,
    }
}

proptest! {
    #[test]
    fn prior_decreases_with_cycle_strength(a in 0.1f64..1.0, b in 0.0f64..0.9, step in 0.01f64..0.1) {
        let c = prior_only(0.0, 0.0, 1.5, 2.0, None);
        let mut g = Array3::zeros((2, 2, 2));
        g[[0, 0, 1]] = a;
        g[[0, 1, 0]] = b;
        let before = log_prior(&g, &c).unwrap();
        g[[0, 1, 0]] = b + step;
        prop_assert!(log_prior(&g, &c).unwrap() < before);
    }

    #[test]
    fn prior_decreases_with_distance_to_domain_graph(x in 0.0f64..0.9, step in 0.01f64..0.1) {
        let mut gp = Array3::zeros((2, 2, 2));
        gp[[1, 0, 1]] = 1.0;
        let c = prior_only(0.0, 3.0, 0.0, 1.0, Some(gp.clone()));
        let mut g = gp.clone();
        g[[1, 1, 0]] = x;
        let before = log_prior(&g, &c).unwrap();
        g[[1, 1, 0]] = x + step;
        prop_assert!(log_prior(&g, &c).unwrap() < before);
    }
}

#[test]
fn generated_dataset_survives_csv() {
    let cfg = GenConfig {
        num_nodes: 4,
        length: Some(40),
        num_series: Some(3),
        seed: 8,
        ..GenConfig::default()
    };
    let (gt, ds) = generate(&cfg).unwrap();
    assert!(rhino::graph::is_dag(&gt.graph.instantaneous()));
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).unwrap();
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), ds);
}

fn residual_variance(gt: &rhino::synthgen::GroundTruth, window: &Array2<f64>, node: usize, seed: u64) -> f64 {
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = rhino::sem::gaussian_noise(n, 1, 1, &mut rng);
    let windows = Array2::from_shape_fn((n, window.ncols()), |(_, c)| window[[0, c]]);
    let e: Vec<f64> = eps.iter().copied().collect();
    let v = gt.node_values(&gt.graph, &windows, node, &e).unwrap();
    let m = v.iter().sum::<f64>() / n as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

#[test]
fn homoscedastic_generator_noise_ignores_history() {
    let cfg = GenConfig {
        num_nodes: 4,
        history_dependent: false,
        seed: 3,
        ..GenConfig::default()
    };
    let gt = sample_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let width = (cfg.max_lag + 1) * cfg.num_nodes;
    let low = Array2::from_elem((1, width), -1.5);
    let high = Array2::from_elem((1, width), 2.0);
    for node in 0..cfg.num_nodes {
        let ratio = residual_variance(&gt, &low, node, 1) / residual_variance(&gt, &high, node, 2);
        assert!((ratio - 1.0).abs() < 0.05, "node {node}: ratio {ratio}");
    }
}

#[test]
fn effect_standard_error_shrinks_with_samples() {
    let cfg = GenConfig {
        num_nodes: 3,
        max_lag: 1,
        seed: 4,
        ..GenConfig::default()
    };
    let gt = sample_ground_truth(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let target = (0..3).find(|&t| gt.graph.has_edge(1, 0, t)).unwrap_or(0);
    let mut q = CateQuery::new(Array2::zeros((1, 3)), 0, 1.0, -1.0, target, 1);
    q.graphs = 1;
    q.rollouts = 500;
    let small = estimate_effect(&gt, &q, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    q.rollouts = 2000;
    let large = estimate_effect(&gt, &q, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(small.std_error > 0.0);
    let ratio = small.std_error / large.std_error;
    assert!((ratio - 2.0).abs() <= 0.6, "ratio {ratio}");
}

#[test]
fn mechanism_is_not_invertible_in_an_instantaneous_parent() {
    let cfg = GenConfig {
        num_nodes: 3,
        max_lag: 1,
        length: Some(60),
        num_series: Some(10),
        seed: 1,
        ..GenConfig::default()
    };
    let (_, ds) = generate(&cfg).unwrap();
    let tc = TrainConfig {
        max_lag: 1,
        hidden: Some(16),
        inner_steps: 200,
        stages: 2,
        seed: 1,
        ..TrainConfig::default()
    };
    let m = train(&ds, &tc).unwrap();
    let mut graph = TemporalGraph::empty(3, 1);
    graph.set_edge(0, 0, 1, true).unwrap();
    let f = |x: f64| {
        let mut w = Array2::zeros((2, 3));
        w[[0, 0]] = x;
        w[[1, 1]] = 0.3;
        m.model.mechanism.predict_mean(&m.store, &w, &graph).unwrap()[1]
    };
    let grid: Vec<f64> = (0..=2400).map(|k| -12.0 + 0.01 * k as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let k = (1..grid.len() - 1)
        .find(|&k| (vals[k] - vals[k - 1]) * (vals[k + 1] - vals[k]) < 0.0)
        .expect("no turning point on the grid");
    let up = vals[k] > vals[k - 1];
    let level = if up {
        vals[k] - 0.5 * (vals[k] - vals[k - 1]).min(vals[k] - vals[k + 1])
    } else {
        vals[k] + 0.5 * (vals[k - 1] - vals[k]).min(vals[k + 1] - vals[k])
    };
    let solve = |mut lo: f64, mut hi: f64| {
        let side = |x: f64| (f(x) - level).signum();
        let s_lo = side(lo);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if side(mid) == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let a = solve(grid[k - 1], grid[k]);
    let b = solve(grid[k], grid[k + 1]);
    assert!(b - a > 1e-6);
    assert!((f(a) - f(b)).abs() < 1e-9, "{} vs {}", f(a), f(b));
}
