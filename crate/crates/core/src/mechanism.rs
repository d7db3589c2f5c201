//! Embedding-conditioned masked aggregation network.
//!
//! For target node `i` the network computes
//! `readout(sum_{tau, j} A[tau, j, i] * feature(x^j_{t-tau}, u_{tau, j}), u_{0, i})`
//! with `feature` and `readout` shared by every node and lag. The same shape
//! of network serves as the structural mean (lags `0..=K`, scalar output)
//! and as the hyper-network of the noise flow (lags `1..=K`, spline
//! parameters as output).

use ndarray::{s, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, RhinoError};
use crate::graph::TemporalGraph;
use crate::nn::{Bound, Mlp, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddedNet {
    pub num_nodes: usize,
    pub max_lag: usize,
    /// Smallest lag whose values feed the aggregate (0 or 1).
    pub first_lag: usize,
    pub embed_dim: usize,
    pub feature_dim: usize,
    pub out_dim: usize,
    embeddings: ParamId,
    feature: Mlp,
    readout: Mlp,
}

impl EmbeddedNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        num_nodes: usize,
        max_lag: usize,
        first_lag: usize,
        embed_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let rows = (max_lag + 1) * num_nodes;
        let emb = Array2::from_shape_fn((rows, embed_dim), |_| T::lit(rng.random_range(-0.1..0.1)));
        let embeddings = store.add(format!("{prefix}.embeddings"), emb);
        let feature = Mlp::new(store, &format!("{prefix}.feature"), 1 + embed_dim, hidden, hidden, rng);
        let readout = Mlp::new(store, &format!("{prefix}.readout"), hidden + embed_dim, hidden, out_dim, rng);
        EmbeddedNet {
            num_nodes,
            max_lag,
            first_lag,
            embed_dim,
            feature_dim: hidden,
            out_dim,
            embeddings,
            feature,
            readout,
        }
    }

    pub fn embeddings(&self) -> ParamId {
        self.embeddings
    }

    pub fn readout(&self) -> &Mlp {
        &self.readout
    }

    /// Number of `(lag, node)` sources feeding each aggregate.
    pub fn num_sources(&self) -> usize {
        (self.max_lag + 1 - self.first_lag) * self.num_nodes
    }

    /// Window width expected by [`forward`](Self::forward): `(K+1) * D`.
    pub fn window_width(&self) -> usize {
        (self.max_lag + 1) * self.num_nodes
    }

    /// Gating matrix `D x sources` with entry `[i, (tau - first_lag) * D + j] = adj[tau, j, i]`.
    pub fn gating_matrix<T: Scalar>(&self, adj: &Array3<T>) -> Array2<T> {
        let d = self.num_nodes;
        let mut a = Array2::zeros((d, self.num_sources()));
        for tau in self.first_lag..=self.max_lag {
            for j in 0..d {
                for i in 0..d {
                    a[[i, (tau - self.first_lag) * d + j]] = adj[[tau, j, i]];
                }
            }
        }
        a
    }

    /// Flat index (row-major into a `(K+1, D, D)` tensor) for each entry of
    /// the gating matrix.
    pub fn gating_index(&self) -> Vec<usize> {
        let d = self.num_nodes;
        let src = self.num_sources();
        let mut idx = Vec::with_capacity(d * src);
        for i in 0..d {
            for c in 0..src {
                let tau = c / d + self.first_lag;
                let j = c % d;
                idx.push((tau * d + j) * d + i);
            }
        }
        idx
    }

    fn check_window<T: Scalar>(&self, windows: &Array2<T>) -> Result<()> {
        if windows.ncols() != self.window_width() {
            return Err(RhinoError::invalid(format!(
                "window width {} does not match (K+1)*D = {}",
                windows.ncols(),
                self.window_width()
            )));
        }
        Ok(())
    }

    /// Gated sum of source features, `B*D x F`, rows ordered `(b, i)`.
    ///
    /// `windows` is `B x (K+1)*D` with column `tau * D + j` holding
    /// `x^j_{t - tau}`; `gating` is the `D x sources` matrix.
    pub fn aggregate<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        windows: &Array2<T>,
        gating: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        self.check_window(windows)?;
        let (d, src) = (self.num_nodes, self.num_sources());
        if gating.shape() != (d, src) {
            return Err(RhinoError::invalid(format!(
                "gating matrix has shape {:?}, expected {:?}",
                gating.shape(),
                (d, src)
            )));
        }
        let tape = gating.tape();
        let batch = windows.nrows();
        let start = self.first_lag * d;
        let values = windows.slice(s![.., start..]).to_owned();
        let x = tape.constant(values.into_shape_with_order((batch * src, 1)).expect("window reshape"));
        let emb_idx: Vec<usize> = (0..batch).flat_map(|_| start..start + src).collect();
        let emb = p.var(self.embeddings).gather_rows(emb_idx)?;
        let features = self.feature.forward(p, tape.concat_cols(&[x, emb])?)?;
        gating.batched_left_matmul(&features, batch)
    }

    /// Full network output, `B*D x out_dim`, rows ordered `(b, i)`.
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        windows: &Array2<T>,
        gating: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let agg = self.aggregate(p, windows, gating)?;
        let batch = windows.nrows();
        let own_idx: Vec<usize> = (0..batch).flat_map(|_| 0..self.num_nodes).collect();
        let own = p.var(self.embeddings).gather_rows(own_idx)?;
        let tape = gating.tape();
        self.readout.forward(p, tape.concat_cols(&[agg, own])?)
    }
}

/// Structural mean `f_i` of every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanism {
    pub net: EmbeddedNet,
}

impl Mechanism {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        num_nodes: usize,
        max_lag: usize,
        embed_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Mechanism {
            net: EmbeddedNet::new(store, "mechanism", num_nodes, max_lag, 0, embed_dim, hidden, 1, rng),
        }
    }

    /// Means on the tape, `B x D`.
    pub fn means<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        windows: &Array2<T>,
        gating: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let out = self.net.forward(p, windows, gating)?;
        out.reshape(windows.nrows(), self.net.num_nodes)
    }

    /// Means for a batch of windows under a (possibly soft) adjacency, `B x D`.
    pub fn batched_mean<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        windows: &Array2<T>,
        adjacency: &Array3<T>,
    ) -> Result<Array2<T>> {
        self.check_adjacency(adjacency)?;
        if adjacency.iter().any(|&a| !(a >= T::zero() && a <= T::one())) {
            return Err(RhinoError::invalid("soft adjacency entries must lie in [0, 1]"));
        }
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let gating = tape.constant(self.net.gating_matrix(adjacency));
        Ok(self.means(&p, windows, gating)?.value())
    }

    /// Means for a single `(K+1) x D` window whose row 0 is time `t`.
    pub fn predict_mean<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        window: &Array2<T>,
        graph: &TemporalGraph,
    ) -> Result<Vec<T>> {
        let (k1, d) = (self.net.max_lag + 1, self.net.num_nodes);
        if window.dim() != (k1, d) {
            return Err(RhinoError::invalid(format!(
                "window has shape {:?}, expected {:?}",
                window.dim(),
                (k1, d)
            )));
        }
        let flat = window.to_owned().into_shape_with_order((1, k1 * d)).expect("flatten window");
        let out = self.batched_mean(store, &flat, &graph.to_real())?;
        Ok(out.row(0).to_vec())
    }

    fn check_adjacency<T: Scalar>(&self, adjacency: &Array3<T>) -> Result<()> {
        let expected = (self.net.max_lag + 1, self.net.num_nodes, self.net.num_nodes);
        if adjacency.dim() != expected {
            return Err(RhinoError::invalid(format!(
                "adjacency has shape {:?}, expected {:?}",
                adjacency.dim(),
                expected
            )));
        }
        Ok(())
    }
}
