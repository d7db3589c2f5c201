//! Factorized variational distribution over temporal graphs.
//!
//! Lagged edges are independent Bernoulli variables with two logits each.
//! Each unordered pair `i > j` at lag 0 is a three-way categorical over
//! `{i -> j, j -> i, none}`, so a sample never holds both directions.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, RhinoError};
use crate::graph::{remove_cycles_greedy, TemporalGraph};
use crate::nn::{Bound, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Starting point of the edge logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorInit {
    /// Edge probability 0.3 everywhere.
    #[default]
    Sparse,
    /// Lagged edges 0.7, each instantaneous direction 0.45.
    Dense,
    /// All logits zero.
    Neutral,
}

impl std::str::FromStr for PosteriorInit {
    type Err = RhinoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(PosteriorInit::Sparse),
            "dense" => Ok(PosteriorInit::Dense),
            "neutral" => Ok(PosteriorInit::Neutral),
            other => Err(RhinoError::Config(format!("unknown posterior init '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPosterior {
    pub num_nodes: usize,
    pub max_lag: usize,
    pub instantaneous: bool,
    pub allow_lagged_self: bool,
    /// `K*D*D x 2` logits `(u, v)`, row `((tau-1)*D + src)*D + dst`.
    lagged: ParamId,
    /// `P x 3` logits `(i -> j, j -> i, none)` for pairs `i > j`.
    inst: Option<ParamId>,
}

/// Pairs `(i, j)` with `i > j` in enumeration order.
pub fn instantaneous_pairs(d: usize) -> Vec<(usize, usize)> {
    (1..d).flat_map(|i| (0..i).map(move |j| (i, j))).collect()
}

fn gumbel_block<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let g = Gumbel::new(0.0, 1.0).expect("unit gumbel");
    Array2::from_shape_fn((rows, cols), |_| T::lit(g.sample(rng)))
}

fn row_argmax<T: Scalar>(a: &Array2<T>) -> Array2<T> {
    let mut out = Array2::zeros(a.dim());
    for (r, row) in a.rows().into_iter().enumerate() {
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        out[[r, best]] = T::one();
    }
    out
}

impl GraphPosterior {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        num_nodes: usize,
        max_lag: usize,
        init: PosteriorInit,
        instantaneous: bool,
        allow_lagged_self: bool,
    ) -> Self {
        let (p_lag, p_inst) = match init {
            PosteriorInit::Sparse => (0.3, [0.3, 0.3, 0.4]),
            PosteriorInit::Dense => (0.7, [0.45, 0.45, 0.1]),
            PosteriorInit::Neutral => (0.5, [1.0 / 3.0; 3]),
        };
        let d = num_nodes;
        let lag_row = [T::lit(f64::ln(p_lag)), T::lit(f64::ln(1.0 - p_lag))];
        let lagged = store.add(
            "posterior.lagged",
            Array2::from_shape_fn((max_lag * d * d, 2), |(_, c)| lag_row[c]),
        );
        let pairs = d * (d.saturating_sub(1)) / 2;
        let inst = (instantaneous && pairs > 0).then(|| {
            store.add(
                "posterior.instantaneous",
                Array2::from_shape_fn((pairs, 3), |(_, c)| T::lit(f64::ln(p_inst[c]))),
            )
        });
        GraphPosterior {
            num_nodes,
            max_lag,
            instantaneous,
            allow_lagged_self,
            lagged,
            inst,
        }
    }

    pub fn lagged_param(&self) -> ParamId {
        self.lagged
    }

    pub fn instantaneous_param(&self) -> Option<ParamId> {
        self.inst
    }

    fn lagged_row(&self, tau: usize, src: usize, dst: usize) -> usize {
        ((tau - 1) * self.num_nodes + src) * self.num_nodes + dst
    }

    fn lagged_allowed(&self, src: usize, dst: usize) -> bool {
        self.allow_lagged_self || src != dst
    }

    fn num_lagged(&self) -> usize {
        self.max_lag * self.num_nodes * self.num_nodes
    }

    /// Sets the logits of one lagged edge.
    pub fn set_lagged_logits<T: Scalar>(&self, store: &mut ParamStore<T>, tau: usize, src: usize, dst: usize, u: T, v: T) {
        let r = self.lagged_row(tau, src, dst);
        let m = store.get_mut(self.lagged);
        m[[r, 0]] = u;
        m[[r, 1]] = v;
    }

    /// Sets the logits of pair `i > j` as `(i -> j, j -> i, none)`.
    pub fn set_instantaneous_logits<T: Scalar>(&self, store: &mut ParamStore<T>, i: usize, j: usize, logits: [T; 3]) -> Result<()> {
        let id = self.inst.ok_or_else(|| RhinoError::invalid("posterior has no instantaneous edges"))?;
        if i <= j || i >= self.num_nodes {
            return Err(RhinoError::invalid("instantaneous pair must satisfy j < i < D"));
        }
        let p = i * (i - 1) / 2 + j;
        let m = store.get_mut(id);
        for (c, l) in logits.into_iter().enumerate() {
            m[[p, c]] = l;
        }
        Ok(())
    }

    /// For each entry of the row-major `(K+1, D, D)` tensor, its position in
    /// the sampled entry vector (or `None` for structural zeros).
    pub fn adjacency_index(&self) -> Vec<Option<usize>> {
        let d = self.num_nodes;
        let mut idx = vec![None; (self.max_lag + 1) * d * d];
        if self.inst.is_some() {
            let base = self.num_lagged();
            for (p, (i, j)) in instantaneous_pairs(d).into_iter().enumerate() {
                idx[i * d + j] = Some(base + 2 * p);
                idx[j * d + i] = Some(base + 2 * p + 1);
            }
        }
        for tau in 1..=self.max_lag {
            for src in 0..d {
                for dst in 0..d {
                    if self.lagged_allowed(src, dst) {
                        idx[(tau * d + src) * d + dst] = Some(self.lagged_row(tau, src, dst));
                    }
                }
            }
        }
        idx
    }

    /// Marginal edge probabilities, `(K+1, D, D)`.
    pub fn edge_probabilities<T: Scalar>(&self, store: &ParamStore<T>) -> Array3<T> {
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let lag = p.var(self.lagged).softmax().slice_cols(0, 1).expect("lagged column");
        let entries = match self.inst {
            Some(id) => {
                let inst = p.var(id).softmax().slice_cols(0, 2).expect("instantaneous columns");
                let n = inst.shape().0 * 2;
                tape.concat_rows(&[lag, inst.reshape(n, 1).expect("flatten")])
                    .expect("entries")
            }
            None => lag,
        };
        self.to_tensor(&entries.value())
    }

    fn to_tensor<T: Scalar>(&self, entries: &Array2<T>) -> Array3<T> {
        let d = self.num_nodes;
        let flat: Vec<T> = self
            .adjacency_index()
            .into_iter()
            .map(|s| s.map_or(T::zero(), |k| entries[[k, 0]]))
            .collect();
        Array3::from_shape_vec((self.max_lag + 1, d, d), flat).expect("tensor shape")
    }

    /// Gumbel-softmax sample of the entry vector on the tape, `n x 1`.
    ///
    /// With `hard`, the forward value is the one-hot argmax and gradients
    /// flow through the relaxed sample.
    pub fn sample_entries<'t, T: Scalar, R: Rng + ?Sized>(
        &self,
        p: &Bound<'t, T>,
        temperature: T,
        hard: bool,
        rng: &mut R,
    ) -> Result<Var<'t, T>> {
        if !(temperature > T::zero()) {
            return Err(RhinoError::invalid("temperature must be positive"));
        }
        let mut relax = |logits: Var<'t, T>| -> Result<Var<'t, T>> {
            let (rows, cols) = logits.shape();
            let tape = logits.tape();
            let noise = tape.constant(gumbel_block(rows, cols, rng));
            let perturbed = logits.add(&noise)?;
            let soft = perturbed.scale(T::one() / temperature).softmax();
            if hard {
                let onehot = row_argmax(&perturbed.value());
                soft.straight_through(onehot)
            } else {
                Ok(soft)
            }
        };
        let lag = relax(p.var(self.lagged))?.slice_cols(0, 1)?;
        match self.inst {
            Some(id) => {
                let inst = relax(p.var(id))?.slice_cols(0, 2)?;
                let n = inst.shape().0 * 2;
                lag.tape().concat_rows(&[lag, inst.reshape(n, 1)?])
            }
            None => Ok(lag),
        }
    }

    /// Entry vector as a `(K+1)*D x D` matrix (row `tau*D + src`, column `dst`).
    pub fn adjacency_matrix<'t, T: Scalar>(&self, entries: Var<'t, T>) -> Result<Var<'t, T>> {
        let d = self.num_nodes;
        entries.gather(self.adjacency_index(), (self.max_lag + 1) * d, d)
    }

    /// Sampled adjacency tensor without gradients.
    pub fn sample_adjacency<T: Scalar, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<T>,
        temperature: T,
        hard: bool,
        rng: &mut R,
    ) -> Result<Array3<T>> {
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let entries = self.sample_entries(&p, temperature, hard, rng)?;
        Ok(self.to_tensor(&entries.value()))
    }

    /// Exact categorical draw of a graph. The lag-0 slice may be cyclic.
    pub fn sample_graph<T: Scalar, R: Rng + ?Sized>(&self, store: &ParamStore<T>, rng: &mut R) -> TemporalGraph {
        let adj = self
            .sample_adjacency(store, T::one(), true, rng)
            .expect("unit temperature is valid");
        TemporalGraph::from_adjacency(adj.mapv(|v| u8::from(v > T::lit(0.5)))).expect("sampled graph is binary")
    }

    /// Sum of Bernoulli and three-way categorical entropies on the tape.
    pub fn entropy<'t, T: Scalar>(&self, p: &Bound<'t, T>) -> Result<Var<'t, T>> {
        let ent = |logits: Var<'t, T>| -> Result<Var<'t, T>> {
            Ok(logits.softmax().mul(&logits.log_softmax())?.sum_cols().neg())
        };
        let d = self.num_nodes;
        let mut mask = Array2::ones((self.num_lagged(), 1));
        for tau in 1..=self.max_lag {
            for j in 0..d {
                if !self.lagged_allowed(j, j) {
                    mask[[self.lagged_row(tau, j, j), 0]] = T::zero();
                }
            }
        }
        let mut total = ent(p.var(self.lagged))?.mask(mask)?.sum();
        if let Some(id) = self.inst {
            total = total.add(&ent(p.var(id))?.sum())?;
        }
        Ok(total)
    }

    pub fn entropy_value<T: Scalar>(&self, store: &ParamStore<T>) -> T {
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        self.entropy(&p).expect("entropy shapes").scalar_value()
    }

    /// Thresholded posterior with instantaneous cycles removed greedily.
    pub fn most_probable_graph<T: Scalar>(&self, store: &ParamStore<T>) -> TemporalGraph {
        threshold_graph(&self.edge_probabilities(store))
    }
}

/// Keeps entries above one half and repairs lag-0 cycles by dropping the
/// lowest-probability edge on each.
pub fn threshold_graph<T: Scalar>(probs: &Array3<T>) -> TemporalGraph {
    let half = T::lit(0.5);
    let mut adj = probs.mapv(|p| u8::from(p > half));
    let d = adj.shape()[1];
    for i in 0..d {
        adj[[0, i, i]] = 0;
    }
    let mut inst = adj.index_axis(ndarray::Axis(0), 0).to_owned();
    let scores = probs.index_axis(ndarray::Axis(0), 0).to_owned();
    remove_cycles_greedy(&mut inst, &scores);
    adj.index_axis_mut(ndarray::Axis(0), 0).assign(&inst);
    TemporalGraph::from_adjacency(adj)
        .and_then(TemporalGraph::finalize)
        .expect("repaired graph is acyclic")
}
