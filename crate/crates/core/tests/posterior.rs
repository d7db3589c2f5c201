use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhino::variational::{GraphPosterior, PosteriorInit};
use rhino::{ParamStore, Tape};

fn random_posterior(seed: u64) -> (ParamStore, GraphPosterior) {
    let mut store = ParamStore::new();
    let q = GraphPosterior::new(&mut store, 2, 1, PosteriorInit::Neutral, true, true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..2 {
        for d in 0..2 {
            q.set_lagged_logits(&mut store, 1, s, d, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        }
    }
    let l = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    q.set_instantaneous_logits(&mut store, 1, 0, l).unwrap();
    (store, q)
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

#[test]
fn entropy_matches_monte_carlo() {
    let (store, q) = random_posterior(1);
    let lagged = store.get(q.lagged_param()).clone();
    let inst = softmax(&store.get(q.instantaneous_param().unwrap()).row(0).to_vec());
    let probs = q.edge_probabilities(&store);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let mut vals = Vec::with_capacity(n);
    for _ in 0..n {
        let g = q.sample_graph(&store, &mut rng);
        let mut lq = 0.0;
        for s in 0..2 {
            for d in 0..2 {
                let p = probs[[1, s, d]];
                lq += if g.has_edge(1, s, d) { p.ln() } else { (1.0 - p).ln() };
            }
        }
        let state = match (g.has_edge(0, 1, 0), g.has_edge(0, 0, 1)) {
            (true, false) => 0,
            (false, true) => 1,
            (false, false) => 2,
            _ => panic!("mutual instantaneous edges"),
        };
        lq += inst[state].ln();
        vals.push(-lq);
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let exact = q.entropy_value(&store);
    assert!(exact >= 0.0);
    assert!((mean - exact).abs() <= 3.0 * se, "mc {mean} exact {exact} se {se}");
    assert!(lagged.iter().all(|v| v.is_finite()));
}

/// Analytic gradient of `E_q[sum_k c_k G_k]` with respect to all logits,
/// in store order (lagged block, then instantaneous block).
fn analytic_gradient(store: &ParamStore, q: &GraphPosterior, c: &[f64]) -> Vec<f64> {
    let lagged = store.get(q.lagged_param());
    let mut out = Vec::new();
    for (r, row) in lagged.rows().into_iter().enumerate() {
        let p = softmax(&row.to_vec())[0];
        out.push(c[r] * p * (1.0 - p));
        out.push(-c[r] * p * (1.0 - p));
    }
    let pi = softmax(&store.get(q.instantaneous_param().unwrap()).row(0).to_vec());
    let ci = [c[4], c[5], 0.0];
    for m in 0..3 {
        out.push((0..3).map(|k| ci[k] * pi[k] * (f64::from(k == m) - pi[m])).sum());
    }
    out
}

fn straight_through_mean(store: &ParamStore, q: &GraphPosterior, c: &[f64], temp: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let weights = Array2::from_shape_vec((c.len(), 1), c.to_vec()).unwrap();
    let mut acc = vec![0.0; 11];
    for _ in 0..n {
        let tape = Tape::new();
        let p = store.bind(&tape);
        let e = q.sample_entries(&p, temp, true, &mut rng).unwrap();
        let loss = e.mul(&tape.constant(weights.clone())).unwrap().sum();
        let g = tape.gradient(loss).unwrap();
        let flat: Vec<f64> = g
            .wrt(p.var(q.lagged_param()))
            .iter()
            .chain(g.wrt(p.var(q.instantaneous_param().unwrap())).iter())
            .copied()
            .collect();
        for (a, v) in acc.iter_mut().zip(flat) {
            *a += v / n as f64;
        }
    }
    acc
}

#[test]
fn straight_through_bias_shrinks_with_temperature() {
    let (store, q) = random_posterior(3);
    let c = [1.0, -0.5, 0.8, 0.3, -1.0, 0.6];
    let exact = analytic_gradient(&store, &q, &c);
    let errors: Vec<f64> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&t| {
            let est = straight_through_mean(&store, &q, &c, t, 40_000);
            est.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "errors {errors:?}");
}
