//! Interventional effect estimation by simulating a fitted model forward.

use ndarray::{Array2, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Standardization;
use crate::error::{Result, RhinoError};
use crate::graph::{remove_cycles_greedy, TemporalGraph};
use crate::scalar::Scalar;
use crate::sem::{gaussian_noise, rollout, Clamp, Simulator};
use crate::trainer::TrainedModel;

pub const DEFAULT_GRAPH_SAMPLES: usize = 20;
pub const DEFAULT_ROLLOUTS: usize = 250;

/// Which graphs the rollouts are run under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    /// Fresh posterior draw per graph sample.
    #[default]
    Posterior,
    /// The thresholded most probable graph for every sample.
    MostLikely,
}

impl std::str::FromStr for GraphMode {
    type Err = RhinoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior" => Ok(GraphMode::Posterior),
            "most_likely" | "most-likely" => Ok(GraphMode::MostLikely),
            other => Err(RhinoError::Config(format!("unknown graph mode `{other}`"))),
        }
    }
}

/// `E[Y_{t+horizon} | do(X^I_t = a), history] - E[... | do(X^I_t = b), history]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateQuery {
    /// Observed past in data units, `L x D` with `L >= K`; the last row is `t-1`.
    pub history: Array2<f64>,
    pub intervention: usize,
    pub treatment: f64,
    pub reference: f64,
    pub target: usize,
    pub horizon: usize,
    pub graphs: usize,
    pub rollouts: usize,
    #[serde(default)]
    pub mode: GraphMode,
}

impl CateQuery {
    pub fn new(history: Array2<f64>, intervention: usize, treatment: f64, reference: f64, target: usize, horizon: usize) -> Self {
        CateQuery {
            history,
            intervention,
            treatment,
            reference,
            target,
            horizon,
            graphs: DEFAULT_GRAPH_SAMPLES,
            rollouts: DEFAULT_ROLLOUTS,
            mode: GraphMode::Posterior,
        }
    }

    fn validate(&self, d: usize, k: usize) -> Result<()> {
        if self.history.ncols() != d {
            return Err(RhinoError::invalid(format!(
                "history has {} variables, model has {d}",
                self.history.ncols()
            )));
        }
        if self.history.nrows() < k {
            return Err(RhinoError::invalid(format!(
                "history has {} steps, at least {k} are needed",
                self.history.nrows()
            )));
        }
        if self.intervention >= d || self.target >= d {
            return Err(RhinoError::invalid("intervention or target node out of range"));
        }
        if self.graphs == 0 || self.rollouts == 0 {
            return Err(RhinoError::invalid("sample counts must be positive"));
        }
        if !self.treatment.is_finite() || !self.reference.is_finite() || self.history.iter().any(|v| !v.is_finite()) {
            return Err(RhinoError::invalid("query values must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CateEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte-Carlo effect estimate for any simulator.
///
/// Each graph sample gets its own noise stream, shared by both arms, so
/// equal treatment and reference values give exactly zero.
pub fn estimate_effect<S: Simulator + ?Sized, R: Rng + ?Sized>(sim: &S, q: &CateQuery, rng: &mut R) -> Result<CateEstimate> {
    let (d, k) = (sim.num_nodes(), sim.max_lag());
    q.validate(d, k)?;
    let identity = Standardization::identity(d);
    let st = sim.standardization().unwrap_or(&identity);
    let history = st.apply(&q.history);
    let arm = |value: f64| Clamp {
        node: q.intervention,
        value: st.forward(q.intervention, value),
    };
    let seeds: Vec<u64> = (0..q.graphs).map(|_| rng.next_u64()).collect();
    let mut diffs = Vec::with_capacity(q.graphs * q.rollouts);
    for seed in seeds {
        let mut stream = ChaCha8Rng::seed_from_u64(seed);
        let graph = sim.draw_graph(&mut stream);
        let eps = gaussian_noise(q.rollouts, q.horizon + 1, d, &mut stream);
        let ya = rollout(sim, &graph, &history, Some(arm(q.treatment)), &eps)?;
        let yb = rollout(sim, &graph, &history, Some(arm(q.reference)), &eps)?;
        for r in 0..q.rollouts {
            let a = st.inverse(q.target, ya[[r, q.horizon, q.target]]);
            let b = st.inverse(q.target, yb[[r, q.horizon, q.target]]);
            diffs.push(a - b);
        }
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = if diffs.len() > 1 {
        diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(CateEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
    })
}

/// Fitted model viewed as a generative SEM in standardized units.
pub struct ModelSimulator<'a, T> {
    model: &'a TrainedModel<T>,
    mode: GraphMode,
    most_likely: TemporalGraph,
}

impl<'a, T: Scalar> ModelSimulator<'a, T> {
    pub fn new(model: &'a TrainedModel<T>, mode: GraphMode) -> Self {
        ModelSimulator {
            model,
            mode,
            most_likely: model.most_probable_graph(),
        }
    }
}

impl<T: Scalar> Simulator for ModelSimulator<'_, T> {
    fn num_nodes(&self) -> usize {
        self.model.num_nodes()
    }

    fn max_lag(&self) -> usize {
        self.model.max_lag()
    }

    fn draw_graph(&self, rng: &mut dyn RngCore) -> TemporalGraph {
        match self.mode {
            GraphMode::MostLikely => self.most_likely.clone(),
            GraphMode::Posterior => {
                let posterior = &self.model.model.posterior;
                let g = posterior.sample_graph(&self.model.store, rng);
                let mut adj = g.adjacency().clone();
                let mut inst = adj.index_axis(Axis(0), 0).to_owned();
                let scores = self.model.edge_probabilities().index_axis(Axis(0), 0).to_owned();
                remove_cycles_greedy(&mut inst, &scores);
                adj.index_axis_mut(Axis(0), 0).assign(&inst);
                TemporalGraph::from_adjacency(adj).expect("binary adjacency")
            }
        }
    }

    fn node_values(&self, graph: &TemporalGraph, windows: &Array2<f64>, node: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let m = &self.model.model;
        let store = &self.model.store;
        let w = windows.mapv(T::lit);
        let adj = graph.to_real::<T>();
        let mean = m.mechanism.batched_mean(store, &w, &adj)?;
        let mut e = Array2::zeros((windows.nrows(), self.num_nodes()));
        for (b, &v) in eps.iter().enumerate() {
            e[[b, node]] = T::lit(v);
        }
        let z = m.noise.sample_residuals(store, &w, &adj, &e)?;
        Ok((0..windows.nrows())
            .map(|b| (mean[[b, node]] + z[[b, node]]).to_f64().unwrap_or(f64::NAN))
            .collect())
    }

    fn standardization(&self) -> Option<&Standardization> {
        Some(&self.model.standardization)
    }
}

/// Effect estimate under the fitted model.
pub fn cate<T: Scalar, R: Rng + ?Sized>(model: &TrainedModel<T>, q: &CateQuery, rng: &mut R) -> Result<CateEstimate> {
    estimate_effect(&ModelSimulator::new(model, q.mode), q, rng)
}
