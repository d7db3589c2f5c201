//! Synthetic temporal SEM benchmark generator.
//!
//! Random lagged and instantaneous graphs, random ReLU MLP mechanisms and
//! optionally history-dependent noise whose scale is a random spline of
//! the averaged lagged parents.

use ndarray::{s, Array1, Array2, Array3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, RhinoError};
use crate::graph::TemporalGraph;
use crate::noise_flow::{SplineKind, SplineParams};
use crate::sem::{gaussian_noise, rollout, Clamp, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GraphType {
    #[default]
    #[serde(rename = "ER", alias = "er")]
    Er,
    #[serde(rename = "SF", alias = "sf")]
    Sf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub num_nodes: usize,
    pub graph_type: GraphType,
    pub instantaneous: bool,
    pub history_dependent: bool,
    pub max_lag: usize,
    /// Series length after burn-in; defaults by node count.
    pub length: Option<usize>,
    pub burn_in: Option<usize>,
    pub num_series: Option<usize>,
    /// Total lagged edges; defaults to `2 D`.
    pub lagged_edges: Option<usize>,
    /// Instantaneous edges; defaults to `4 D`, capped at `D (D - 1) / 2`.
    pub instantaneous_edges: Option<usize>,
    pub allow_lagged_self: bool,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_nodes: 5,
            graph_type: GraphType::Er,
            instantaneous: true,
            history_dependent: true,
            max_lag: 2,
            length: None,
            burn_in: None,
            num_series: None,
            lagged_edges: None,
            instantaneous_edges: None,
            allow_lagged_self: true,
            hidden: 64,
            seed: 0,
        }
    }
}

/// Edge counts and sizes with every default filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolved {
    pub length: usize,
    pub burn_in: usize,
    pub num_series: usize,
    pub lagged_edges: usize,
    pub instantaneous_edges: usize,
}

impl GenConfig {
    pub fn resolve(&self) -> Result<Resolved> {
        let d = self.num_nodes;
        if d == 0 {
            return Err(RhinoError::invalid("num_nodes must be positive"));
        }
        if self.max_lag == 0 {
            return Err(RhinoError::invalid("max_lag must be at least 1"));
        }
        let large = d > 20;
        let length = self.length.unwrap_or(if large { 400 } else { 200 });
        let burn_in = self.burn_in.unwrap_or(if large { 100 } else { 50 });
        let num_series = self.num_series.unwrap_or(if large { 100 } else { 50 });
        let pairs = d * (d - 1) / 2;
        let inst = if self.instantaneous {
            match self.instantaneous_edges {
                Some(m) if m > pairs => {
                    return Err(RhinoError::invalid(format!(
                        "{m} instantaneous edges requested but an acyclic graph on {d} nodes holds at most {pairs}"
                    )))
                }
                Some(m) => m,
                None => (4 * d).min(pairs),
            }
        } else {
            0
        };
        let slots = self.max_lag * d * if self.allow_lagged_self { d } else { d - 1 };
        let lagged = self.lagged_edges.unwrap_or(2 * d);
        if lagged > slots {
            return Err(RhinoError::invalid(format!(
                "{lagged} lagged edges requested but only {slots} slots exist"
            )));
        }
        if length == 0 || num_series == 0 {
            return Err(RhinoError::invalid("length and num_series must be positive"));
        }
        if burn_in + length < self.max_lag {
            return Err(RhinoError::invalid("series too short for the lag"));
        }
        Ok(Resolved {
            length,
            burn_in,
            num_series,
            lagged_edges: lagged,
            instantaneous_edges: inst,
        })
    }
}

/// Random two-hidden-layer ReLU network of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
}

impl NodeMlp {
    fn random<R: Rng + ?Sized>(inputs: usize, fan_in: usize, hidden: usize, gain: f64, rng: &mut R) -> Self {
        let n = |sd: f64| Normal::new(0.0, sd).expect("positive sd");
        let w1d = n(gain / (fan_in.max(1) as f64).sqrt());
        let w2d = n((2.0 / hidden as f64).sqrt());
        let w3d = n(gain / (hidden as f64).sqrt());
        let bd = n(0.1);
        NodeMlp {
            w1: Array2::from_shape_fn((inputs, hidden), |_| w1d.sample(rng)),
            b1: Array1::from_shape_fn(hidden, |_| bd.sample(rng)),
            w2: Array2::from_shape_fn((hidden, hidden), |_| w2d.sample(rng)),
            b2: Array1::from_shape_fn(hidden, |_| bd.sample(rng)),
            w3: Array1::from_shape_fn(hidden, |_| w3d.sample(rng)),
            b3: bd.sample(rng),
        }
    }

    /// Network of identically zero output.
    pub fn zero(inputs: usize, hidden: usize) -> Self {
        NodeMlp {
            w1: Array2::zeros((inputs, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            w3: Array1::zeros(hidden),
            b3: 0.0,
        }
    }

    pub fn eval(&self, x: &Array1<f64>) -> f64 {
        let h1 = (x.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0));
        let h2 = (h1.dot(&self.w2) + &self.b2).mapv(|v| v.max(0.0));
        h2.dot(&self.w3) + self.b3
    }
}

/// Ground-truth SEM drawn by [`sample_ground_truth`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub graph: TemporalGraph,
    pub mechanisms: Vec<NodeMlp>,
    /// Per-node scale splines on `[-3, 3]`, present for history-dependent noise.
    pub noise_splines: Option<Vec<SplineParams<f64>>>,
}

/// Input range of the noise-scale splines.
pub const NOISE_SPLINE_BOUND: f64 = 3.0;
/// Smallest noise scale.
pub const NOISE_SCALE_FLOOR: f64 = 0.05;

fn random_scale_spline<R: Rng + ?Sized>(rng: &mut R) -> SplineParams<f64> {
    let bins = 8;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.5..1.5)).collect() };
    let normalize = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| 2.0 * NOISE_SPLINE_BOUND * x / s).collect()
    };
    let widths = normalize(draw(bins));
    let heights = normalize(draw(bins));
    let derivatives = draw(bins + 1);
    SplineParams {
        kind: SplineKind::RationalQuadratic,
        bound: NOISE_SPLINE_BOUND,
        widths,
        heights,
        derivatives,
        lambdas: Vec::new(),
    }
}

fn er_instantaneous<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Vec<(usize, usize)> {
    // positions in a random order: edges always point forward
    let perm = sample(rng, d, d).into_vec();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).collect();
    sample(rng, pairs.len(), m)
        .into_iter()
        .map(|k| (perm[pairs[k].0], perm[pairs[k].1]))
        .collect()
}

fn sf_instantaneous<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let perm = sample(rng, d, d).into_vec();
    // spread the edge budget over arrivals; arrival k can link to k earlier nodes
    let mut quota = vec![0usize; d];
    let mut left = m;
    while left > 0 {
        for k in 1..d {
            if left > 0 && quota[k] < k {
                quota[k] += 1;
                left -= 1;
            }
        }
    }
    let mut degree = vec![0usize; d];
    let mut edges = Vec::with_capacity(m);
    for k in 1..d {
        let mut chosen = Vec::with_capacity(quota[k]);
        while chosen.len() < quota[k] {
            let candidates: Vec<usize> = (0..k).filter(|c| !chosen.contains(c)).collect();
            let total: usize = candidates.iter().map(|&c| degree[c] + 1).sum();
            let mut r = rng.random_range(0..total);
            let mut pick = candidates[0];
            for &c in &candidates {
                if r < degree[c] + 1 {
                    pick = c;
                    break;
                }
                r -= degree[c] + 1;
            }
            chosen.push(pick);
        }
        for c in chosen {
            degree[c] += 1;
            degree[k] += 1;
            edges.push((perm[c], perm[k]));
        }
    }
    edges
}

fn lagged_slots(d: usize, k: usize, allow_self: bool) -> Vec<(usize, usize, usize)> {
    let mut v = Vec::new();
    for tau in 1..=k {
        for src in 0..d {
            for dst in 0..d {
                if allow_self || src != dst {
                    v.push((tau, src, dst));
                }
            }
        }
    }
    v
}

fn sf_lagged<R: Rng + ?Sized>(slots: &[(usize, usize, usize)], d: usize, m: usize, rng: &mut R) -> Vec<(usize, usize, usize)> {
    let mut out_degree = vec![0usize; d];
    let mut taken = vec![false; slots.len()];
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let free: Vec<usize> = (0..slots.len()).filter(|&s| !taken[s]).collect();
        let total: usize = free.iter().map(|&s| out_degree[slots[s].1] + 1).sum();
        let mut r = rng.random_range(0..total);
        let mut pick = free[0];
        for &s in &free {
            let w = out_degree[slots[s].1] + 1;
            if r < w {
                pick = s;
                break;
            }
            r -= w;
        }
        taken[pick] = true;
        out_degree[slots[pick].1] += 1;
        edges.push(slots[pick]);
    }
    edges
}

fn sample_mechanisms<R: Rng + ?Sized>(graph: &TemporalGraph, hidden: usize, gain: f64, rng: &mut R) -> Vec<NodeMlp> {
    let (d, k) = (graph.num_nodes(), graph.max_lag());
    (0..d)
        .map(|i| {
            let fan_in = (0..=k)
                .map(|tau| (0..d).filter(|&j| graph.has_edge(tau, j, i)).count())
                .sum();
            NodeMlp::random((k + 1) * d, fan_in, hidden, gain, rng)
        })
        .collect()
}

/// Draws a graph, mechanisms and noise splines.
pub fn sample_ground_truth<R: Rng + ?Sized>(config: &GenConfig, rng: &mut R) -> Result<GroundTruth> {
    let r = config.resolve()?;
    let (d, k) = (config.num_nodes, config.max_lag);
    let mut graph = TemporalGraph::empty(d, k);
    let inst = match config.graph_type {
        GraphType::Er => er_instantaneous(d, r.instantaneous_edges, rng),
        GraphType::Sf => sf_instantaneous(d, r.instantaneous_edges, rng),
    };
    for (a, b) in inst {
        graph.set_edge(0, a, b, true)?;
    }
    let slots = lagged_slots(d, k, config.allow_lagged_self);
    let lagged: Vec<(usize, usize, usize)> = match config.graph_type {
        GraphType::Er => sample(rng, slots.len(), r.lagged_edges)
            .into_iter()
            .map(|s| slots[s])
            .collect(),
        GraphType::Sf => sf_lagged(&slots, d, r.lagged_edges, rng),
    };
    for (tau, a, b) in lagged {
        graph.set_edge(tau, a, b, true)?;
    }
    let graph = graph.finalize()?;
    let mechanisms = sample_mechanisms(&graph, config.hidden, 1.0, rng);
    let noise_splines = config
        .history_dependent
        .then(|| (0..d).map(|_| random_scale_spline(rng)).collect());
    Ok(GroundTruth {
        graph,
        mechanisms,
        noise_splines,
    })
}

impl GroundTruth {
    /// Noise scale of `node` for one window row.
    pub fn noise_scale(&self, graph: &TemporalGraph, window: ndarray::ArrayView1<f64>, node: usize) -> f64 {
        let Some(splines) = &self.noise_splines else {
            return 1.0;
        };
        let (d, k) = (graph.num_nodes(), graph.max_lag());
        let mut sum = 0.0;
        let mut count = 0usize;
        for tau in 1..=k {
            for j in 0..d {
                if graph.has_edge(tau, j, node) {
                    sum += window[tau * d + j];
                    count += 1;
                }
            }
        }
        let avg = if count > 0 { sum / count as f64 } else { 0.0 };
        let x = avg.clamp(-NOISE_SPLINE_BOUND, NOISE_SPLINE_BOUND);
        splines[node].transform(x).0.abs().max(NOISE_SCALE_FLOOR)
    }

    /// Mechanism output of `node` with non-parents masked to zero.
    pub fn mean(&self, graph: &TemporalGraph, window: ndarray::ArrayView1<f64>, node: usize) -> f64 {
        let (d, k) = (graph.num_nodes(), graph.max_lag());
        let x = Array1::from_shape_fn((k + 1) * d, |c| {
            if graph.has_edge(c / d, c % d, node) {
                window[c]
            } else {
                0.0
            }
        });
        self.mechanisms[node].eval(&x)
    }
}

impl Simulator for GroundTruth {
    fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    fn max_lag(&self) -> usize {
        self.graph.max_lag()
    }

    fn draw_graph(&self, _rng: &mut dyn rand::RngCore) -> TemporalGraph {
        self.graph.clone()
    }

    fn node_values(&self, graph: &TemporalGraph, windows: &Array2<f64>, node: usize, eps: &[f64]) -> Result<Vec<f64>> {
        Ok(windows
            .rows()
            .into_iter()
            .zip(eps)
            .map(|(w, &e)| self.mean(graph, w, node) + self.noise_scale(graph, w, node) * e)
            .collect())
    }
}

/// Simulates one `length x D` series after discarding `burn_in` steps; the
/// first `K` steps are standard normal.
pub fn simulate<R: Rng + ?Sized>(gt: &GroundTruth, length: usize, burn_in: usize, rng: &mut R) -> Result<Array2<f64>> {
    let (d, k) = (gt.num_nodes(), gt.max_lag());
    let total = length + burn_in;
    if total < k {
        return Err(RhinoError::invalid("series shorter than the lag"));
    }
    let init: Array2<f64> = Array2::from_shape_fn((k, d), |_| rng.sample(rand_distr::StandardNormal));
    let eps = gaussian_noise(1, total - k, d, rng);
    let rolled = rollout(gt, &gt.graph, &init, None, &eps)?;
    let mut full = Array2::zeros((total, d));
    full.slice_mut(s![0..k, ..]).assign(&init);
    full.slice_mut(s![k.., ..]).assign(&rolled.slice(s![0, .., ..]));
    Ok(full.slice(s![burn_in.., ..]).to_owned())
}

/// Most restarts with shrunken mechanisms before giving up.
pub const MAX_RETRIES: usize = 10;

/// Ground truth plus a dataset of `num_series` series, reproducible from
/// `config.seed`.
pub fn generate(config: &GenConfig) -> Result<(GroundTruth, Dataset<f64>)> {
    let r = config.resolve()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gt = sample_ground_truth(config, &mut master)?;
    let mut gain = 1.0;
    for attempt in 0..=MAX_RETRIES {
        let mut series = Vec::with_capacity(r.num_series);
        let mut failed = None;
        for n in 0..r.num_series {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + n as u64 + ((attempt as u64) << 32));
            match simulate(&gt, r.length, r.burn_in, &mut rng) {
                Ok(s) => series.push(s),
                Err(e @ RhinoError::Diverged { .. }) => {
                    failed = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match failed {
            None => {
                let ds = Dataset::new(Dataset::<f64>::default_names(config.num_nodes), series)?;
                return Ok((gt, ds));
            }
            Some(e) if attempt == MAX_RETRIES => return Err(e),
            Some(_) => {
                gain *= 0.5;
                gt.mechanisms = sample_mechanisms(&gt.graph, config.hidden, gain, &mut master);
            }
        }
    }
    unreachable!("loop returns on the last attempt")
}

/// Interventional rollouts of both arms from a shared history.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionSamples {
    /// `n x (horizon+1) x D` under `do(X^I_t = a)`.
    pub treatment: Array3<f64>,
    /// Same under `do(X^I_t = b)`.
    pub reference: Array3<f64>,
}

impl InterventionSamples {
    /// Difference of arm means of `target` at `horizon`.
    pub fn effect(&self, target: usize, horizon: usize) -> f64 {
        let n = self.treatment.shape()[0] as f64;
        let a: f64 = self.treatment.slice(s![.., horizon, target]).sum();
        let b: f64 = self.reference.slice(s![.., horizon, target]).sum();
        (a - b) / n
    }
}

/// Default number of ground-truth interventional samples.
pub const DEFAULT_INTERVENTION_SAMPLES: usize = 5000;
/// Treatment and reference values used for benchmark interventions.
pub const TREATMENT_VALUE: f64 = 10.0;
pub const REFERENCE_VALUE: f64 = -10.0;

#[allow(clippy::too_many_arguments)]
pub fn generate_interventions<R: Rng + ?Sized>(
    gt: &GroundTruth,
    history: &Array2<f64>,
    a: f64,
    b: f64,
    node: usize,
    horizon: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<InterventionSamples> {
    let d = gt.num_nodes();
    if node >= d {
        return Err(RhinoError::invalid(format!("intervention node {node} out of range")));
    }
    let eps = gaussian_noise(n_samples, horizon + 1, d, rng);
    let treatment = rollout(gt, &gt.graph, history, Some(Clamp { node, value: a }), &eps)?;
    let reference = rollout(gt, &gt.graph, history, Some(Clamp { node, value: b }), &eps)?;
    Ok(InterventionSamples { treatment, reference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::is_dag;

    #[test]
    fn default_counts_for_five_nodes() {
        let r = GenConfig::default().resolve().unwrap();
        assert_eq!(r.lagged_edges, 10);
        assert_eq!(r.instantaneous_edges, 10);
        let c = GenConfig {
            num_nodes: 12,
            ..GenConfig::default()
        };
        assert_eq!(c.resolve().unwrap().instantaneous_edges, 48);
        let c = GenConfig {
            num_nodes: 40,
            ..GenConfig::default()
        };
        let r = c.resolve().unwrap();
        assert_eq!((r.length, r.burn_in, r.num_series), (400, 100, 100));
        let bad = GenConfig {
            instantaneous_edges: Some(11),
            ..GenConfig::default()
        };
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn ground_truth_counts_and_acyclicity() {
        for (seed, gt_type) in (0..20).flat_map(|s| [(s, GraphType::Er), (s, GraphType::Sf)]) {
            let c = GenConfig {
                num_nodes: 7,
                graph_type: gt_type,
                seed,
                ..GenConfig::default()
            };
            let r = c.resolve().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt = sample_ground_truth(&c, &mut rng).unwrap();
            let inst = gt.graph.instantaneous();
            assert!(is_dag(&inst));
            assert_eq!(inst.iter().filter(|&&v| v == 1).count(), r.instantaneous_edges);
            assert_eq!(gt.graph.edge_count() - r.instantaneous_edges, r.lagged_edges);
        }
    }

    #[test]
    fn no_instantaneous_flag() {
        let c = GenConfig {
            instantaneous: false,
            ..GenConfig::default()
        };
        let gt = sample_ground_truth(&c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(gt.graph.instantaneous().iter().all(|&v| v == 0));
    }

    #[test]
    fn zero_mechanisms_give_white_noise() {
        let c = GenConfig {
            num_nodes: 3,
            history_dependent: false,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut gt = sample_ground_truth(&c, &mut rng).unwrap();
        gt.mechanisms = (0..3).map(|_| NodeMlp::zero(9, 64)).collect();
        let x = simulate(&gt, 10_000, 10, &mut rng).unwrap();
        for i in 0..3 {
            let col = x.column(i);
            let m = col.mean().unwrap();
            let v = col.mapv(|y| (y - m) * (y - m)).mean().unwrap();
            assert!(m.abs() < 0.05, "mean {m}");
            assert!((0.9..1.1).contains(&v), "var {v}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_shaped() {
        let c = GenConfig {
            num_nodes: 4,
            num_series: Some(3),
            length: Some(40),
            burn_in: Some(10),
            seed: 9,
            ..GenConfig::default()
        };
        let (g1, d1) = generate(&c).unwrap();
        let (g2, d2) = generate(&c).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(d1, d2);
        assert_eq!(d1.series.len(), 3);
        assert_eq!(d1.series[0].dim(), (40, 4));
        assert_ne!(d1.series[0], d1.series[1]);
    }

    #[test]
    fn history_dependent_noise_scale_varies() {
        let c = GenConfig {
            num_nodes: 3,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut gt = sample_ground_truth(&c, &mut rng).unwrap();
        let mut g = TemporalGraph::empty(3, 2);
        g.set_edge(1, 0, 1, true).unwrap();
        gt.graph = g.clone();
        gt.mechanisms = (0..3).map(|_| NodeMlp::zero(9, 64)).collect();
        // node 1 noise variance given small vs large lagged parent
        let x = simulate(&gt, 20_000, 10, &mut rng).unwrap();
        let (mut small, mut large) = (Vec::new(), Vec::new());
        for t in 1..x.nrows() {
            let p = x[[t - 1, 0]].abs();
            if p < 0.3 {
                small.push(x[[t, 1]]);
            } else if p > 1.5 {
                large.push(x[[t, 1]]);
            }
        }
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / v.len() as f64
        };
        let ratio = var(&large) / var(&small);
        assert!(!(0.7..1.4).contains(&ratio), "variance ratio {ratio}");

        // and without history dependence the ratio is near one
        gt.noise_splines = None;
        let x = simulate(&gt, 20_000, 10, &mut rng).unwrap();
        let (mut small, mut large) = (Vec::new(), Vec::new());
        for t in 1..x.nrows() {
            let p = x[[t - 1, 0]].abs();
            if p < 0.3 {
                small.push(x[[t, 1]]);
            } else if p > 1.5 {
                large.push(x[[t, 1]]);
            }
        }
        let ratio = var(&large) / var(&small);
        assert!((0.85..1.15).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn equal_arms_and_no_path() {
        let c = GenConfig {
            num_nodes: 4,
            seed: 2,
            ..GenConfig::default()
        };
        let (gt, ds) = generate(&GenConfig {
            num_series: Some(1),
            length: Some(20),
            ..c
        })
        .unwrap();
        let history = ds.series[0].slice(s![15.., ..]).to_owned();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let same = generate_interventions(&gt, &history, 3.0, 3.0, 0, 2, 100, &mut rng).unwrap();
        assert_eq!(same.treatment, same.reference);
        assert_eq!(same.effect(1, 2), 0.0);
    }
}
