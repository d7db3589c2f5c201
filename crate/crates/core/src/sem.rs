//! Forward simulation of structural equation models over time.

use ndarray::{s, Array2, Array3};
use rand::Rng;

use crate::data::Standardization;
use crate::error::{Result, RhinoError};
use crate::graph::{topological_order, TemporalGraph};

/// Largest magnitude a simulated value may reach before the run is
/// considered divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// A temporal SEM that can be stepped forward one node at a time.
pub trait Simulator {
    fn num_nodes(&self) -> usize;

    fn max_lag(&self) -> usize;

    /// Graph used for one batch of rollouts.
    fn draw_graph(&self, rng: &mut dyn rand::RngCore) -> TemporalGraph;

    /// Values of `node` for every window row, given base noise `eps` per row.
    ///
    /// `windows` is `B x (K+1)*D` with column `tau*D + j` holding
    /// `x^j_{t-tau}`; lag-0 columns of nodes earlier in topological order
    /// are already filled.
    fn node_values(&self, graph: &TemporalGraph, windows: &Array2<f64>, node: usize, eps: &[f64]) -> Result<Vec<f64>>;

    /// Scaling between data units and the units the model works in.
    fn standardization(&self) -> Option<&Standardization> {
        None
    }
}

/// Clamp `node` to `value` at the first rollout step, cutting its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamp {
    pub node: usize,
    pub value: f64,
}

/// Rolls `eps.dim().1` steps forward from the last `K` rows of `history`.
///
/// `eps` is `B x S x D` base noise. Returns the simulated values
/// `B x S x D`. When `clamp` is set, the first step uses the graph with all
/// edges into the clamped node removed.
pub fn rollout<S: Simulator + ?Sized>(
    sim: &S,
    graph: &TemporalGraph,
    history: &Array2<f64>,
    clamp: Option<Clamp>,
    eps: &Array3<f64>,
) -> Result<Array3<f64>> {
    let (k, d) = (sim.max_lag(), sim.num_nodes());
    let (batch, steps, dn) = eps.dim();
    if dn != d || history.ncols() != d || history.nrows() < k {
        return Err(RhinoError::invalid(format!(
            "rollout needs at least {k} history rows of {d} variables and noise of width {d}"
        )));
    }
    if graph.num_nodes() != d || graph.max_lag() != k {
        return Err(RhinoError::invalid("graph does not match the simulator"));
    }
    if let Some(c) = clamp {
        if c.node >= d {
            return Err(RhinoError::invalid(format!("intervention node {} out of range", c.node)));
        }
    }
    let mutilated = clamp.map(|c| graph.mutilated(c.node));
    let order = topological_order(&graph.instantaneous())?;
    let mut state = Array3::zeros((batch, k + steps, d));
    for b in 0..batch {
        state
            .slice_mut(s![b, 0..k, ..])
            .assign(&history.slice(s![history.nrows() - k.., ..]));
    }
    let mut windows = Array2::zeros((batch, (k + 1) * d));
    for step in 0..steps {
        let t = k + step;
        let g = match (&mutilated, step) {
            (Some(m), 0) => m,
            _ => graph,
        };
        windows.fill(0.0);
        for b in 0..batch {
            for tau in 1..=k {
                windows
                    .slice_mut(s![b, tau * d..(tau + 1) * d])
                    .assign(&state.slice(s![b, t - tau, ..]));
            }
        }
        for &node in &order {
            let values = match clamp {
                Some(c) if step == 0 && c.node == node => vec![c.value; batch],
                _ => {
                    let e: Vec<f64> = (0..batch).map(|b| eps[[b, step, node]]).collect();
                    sim.node_values(g, &windows, node, &e)?
                }
            };
            for (b, v) in values.into_iter().enumerate() {
                if !(v.abs() <= DIVERGENCE_LIMIT) {
                    return Err(RhinoError::Diverged { step });
                }
                windows[[b, node]] = v;
                state[[b, t, node]] = v;
            }
        }
    }
    Ok(state.slice(s![.., k.., ..]).to_owned())
}

/// Standard normal noise block `B x S x D`.
pub fn gaussian_noise<R: Rng + ?Sized>(batch: usize, steps: usize, d: usize, rng: &mut R) -> Array3<f64> {
    Array3::from_shape_fn((batch, steps, d), |_| rng.sample(rand_distr::StandardNormal))
}

/// Linear-Gaussian SEM `x^i_t = sum_{tau, j} W[tau, j, i] x^j_{t-tau} + sigma_i eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSem {
    /// Coefficients `(K+1, D, D)`; entry `[tau, src, dst]`.
    pub weights: Array3<f64>,
    pub noise_std: Vec<f64>,
}

impl LinearSem {
    pub fn new(weights: Array3<f64>, noise_std: Vec<f64>) -> Result<Self> {
        let (_, d, d2) = weights.dim();
        if d != d2 || noise_std.len() != d {
            return Err(RhinoError::invalid("linear SEM shapes do not agree"));
        }
        let sem = LinearSem { weights, noise_std };
        topological_order(&sem.graph().instantaneous())?;
        Ok(sem)
    }

    pub fn graph(&self) -> TemporalGraph {
        TemporalGraph::from_adjacency(self.weights.mapv(|w| u8::from(w != 0.0))).expect("binary support")
    }
}

impl Simulator for LinearSem {
    fn num_nodes(&self) -> usize {
        self.weights.shape()[1]
    }

    fn max_lag(&self) -> usize {
        self.weights.shape()[0] - 1
    }

    fn draw_graph(&self, _rng: &mut dyn rand::RngCore) -> TemporalGraph {
        self.graph()
    }

    fn node_values(&self, graph: &TemporalGraph, windows: &Array2<f64>, node: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let (k1, d) = (self.max_lag() + 1, self.num_nodes());
        Ok((0..windows.nrows())
            .map(|b| {
                let mut v = self.noise_std[node] * eps[b];
                for tau in 0..k1 {
                    for j in 0..d {
                        if graph.has_edge(tau, j, node) {
                            v += self.weights[[tau, j, node]] * windows[[b, tau * d + j]];
                        }
                    }
                }
                v
            })
            .collect())
    }
}
