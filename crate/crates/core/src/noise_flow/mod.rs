//! Noise term of the structural equations: a spline flow over a standard
//! Gaussian base, optionally conditioned on lagged parents.

mod spline;

pub use spline::{unit_derivative_raw, SplineKind, SplineParams, LAMBDA_RANGE, MIN_BIN_FRACTION, MIN_DERIVATIVE};

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, RhinoError};
use crate::graph::TemporalGraph;
use crate::math::HALF_LN_TWO_PI;
use crate::mechanism::EmbeddedNet;
use crate::nn::{Bound, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Which noise model the structural equations use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseVariant {
    /// Spline whose parameters are predicted from lagged parents.
    #[default]
    ConditionalSpline,
    /// One learnable spline per node, independent of history.
    IndependentSpline,
    /// Gaussian with a learnable per-node scale.
    Gaussian,
}

impl std::str::FromStr for NoiseVariant {
    type Err = RhinoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional_spline" | "conditional" | "rhino" => Ok(NoiseVariant::ConditionalSpline),
            "independent_spline" | "independent" | "spline" => Ok(NoiseVariant::IndependentSpline),
            "gaussian" => Ok(NoiseVariant::Gaussian),
            other => Err(RhinoError::Config(format!("unknown noise variant '{other}'"))),
        }
    }
}

/// Raw vector that yields the identity spline.
pub fn identity_raw<T: Scalar>(kind: SplineKind, bins: usize) -> Vec<T> {
    let mut raw = vec![T::zero(); kind.raw_dim(bins)];
    for r in raw.iter_mut().skip(2 * bins).take(bins - 1) {
        *r = unit_derivative_raw();
    }
    raw
}

/// Pushes base noise through the flow: `eps -> z`.
pub fn flow_forward<T: Scalar>(eps: T, p: &SplineParams<T>) -> Result<T> {
    if !eps.is_finite() {
        return Err(RhinoError::invalid("flow_forward: non-finite input"));
    }
    Ok(p.invert(eps))
}

/// Maps an observed residual back to base noise: `z -> eps`.
pub fn flow_inverse<T: Scalar>(z: T, p: &SplineParams<T>) -> Result<T> {
    if !z.is_finite() {
        return Err(RhinoError::invalid("flow_inverse: non-finite input"));
    }
    Ok(p.transform(z).0)
}

/// Log-density of `z` under the flow with parameters `p`.
pub fn spline_log_density_value<T: Scalar>(z: T, p: &SplineParams<T>) -> T {
    let (e, ld) = p.transform(z);
    -T::lit(HALF_LN_TWO_PI) - T::lit(0.5) * e * e + ld
}

fn cumulative_upper<T: Scalar>(k: usize) -> Array2<T> {
    Array2::from_shape_fn((k, k), |(a, b)| if a < b { T::one() } else { T::zero() })
}

/// Row-wise flow log-density on the tape.
///
/// `z` is `R x 1`, `raw` is `R x raw_dim`; returns `R x 1`.
pub fn spline_log_density<'t, T: Scalar>(
    z: Var<'t, T>,
    raw: Var<'t, T>,
    kind: SplineKind,
    bins: usize,
    bound: T,
) -> Result<Var<'t, T>> {
    let tape = z.tape();
    let (rows, pdim) = raw.shape();
    if bins < 2 || pdim != kind.raw_dim(bins) || z.shape() != (rows, 1) {
        return Err(RhinoError::invalid(format!(
            "spline density: z {:?} and raw {:?} do not fit {bins} bins",
            z.shape(),
            raw.shape()
        )));
    }
    let k = bins;
    let one = T::one();
    let kf = T::from_usize(k).unwrap();
    let floor = T::lit(MIN_BIN_FRACTION);
    let two_b = bound + bound;
    let bin_sizes = |v: Var<'t, T>| v.softmax().scale(two_b * (one - floor * kf)).offset(two_b * floor);
    let widths = bin_sizes(raw.slice_cols(0, k)?);
    let heights = bin_sizes(raw.slice_cols(k, 2 * k)?);
    let ones = tape.constant(Array2::ones((rows, 1)));
    let inner = raw.slice_cols(2 * k, 3 * k - 1)?.softplus().offset(T::lit(MIN_DERIVATIVE));
    let derivs = tape.concat_cols(&[ones, inner, ones])?;
    let up = tape.constant(cumulative_upper(k));
    let xl = widths.matmul(&up)?.offset(-bound);
    let yl = heights.matmul(&up)?.offset(-bound);

    let zv = z.value();
    let wv = widths.value();
    let mut inside = Array2::zeros((rows, 1));
    let mut onehot = Array2::zeros((rows, k));
    for r in 0..rows {
        let x = zv[[r, 0]];
        let mut bin = 0;
        if x >= -bound && x <= bound {
            inside[[r, 0]] = one;
            bin = k - 1;
            let mut acc = -bound;
            for b in 0..k - 1 {
                acc = acc + wv[[r, b]];
                if x < acc {
                    bin = b;
                    break;
                }
            }
        }
        onehot[[r, bin]] = one;
    }
    let outside = inside.mapv(|m: T| one - m);
    let z_in = z.mask(inside.clone())?.add(&tape.constant(outside.mapv(|m| -m * bound)))?;
    let pick = |v: &Var<'t, T>| -> Result<Var<'t, T>> { Ok(v.mask(onehot.clone())?.sum_cols()) };
    let xk = pick(&xl)?;
    let wk = pick(&widths)?;
    let yk = pick(&yl)?;
    let hk = pick(&heights)?;
    let dk = pick(&derivs.slice_cols(0, k)?)?;
    let dk1 = pick(&derivs.slice_cols(1, k + 1)?)?;
    let s = hk.div(&wk)?;
    let phi = z_in.sub(&xk)?.div(&wk)?;

    let (y, logdet) = match kind {
        SplineKind::RationalQuadratic => {
            let phi2 = phi.square();
            let t = phi.sub(&phi2)?;
            let den = s.add(&dk1.add(&dk)?.sub(&s.scale(T::lit(2.0)))?.mul(&t)?)?;
            let y = yk.add(&hk.mul(&s.mul(&phi2)?.add(&dk.mul(&t)?)?)?.div(&den)?)?;
            let omp = phi.neg().offset(one);
            let num = dk1
                .mul(&phi2)?
                .add(&s.mul(&t)?.scale(T::lit(2.0)))?
                .add(&dk.mul(&omp.square())?)?;
            let ld = s.ln().scale(T::lit(2.0)).add(&num.ln())?.sub(&den.ln().scale(T::lit(2.0)))?;
            (y, ld)
        }
        SplineKind::LinearRational => {
            let (lo, hi) = (T::lit(LAMBDA_RANGE.0), T::lit(LAMBDA_RANGE.1));
            let lam = raw.slice_cols(3 * k - 1, 4 * k - 1)?.sigmoid().scale(hi - lo).offset(lo);
            let lk = pick(&lam)?;
            let yk1 = yk.add(&hk)?;
            let oml = lk.neg().offset(one);
            let wb = dk.div(&dk1)?.sqrt();
            let wc = lk.mul(&dk)?.add(&oml.mul(&wb)?.mul(&dk1)?)?.div(&s)?;
            let yc = oml
                .mul(&yk)?
                .add(&lk.mul(&wb)?.mul(&yk1)?)?
                .div(&oml.add(&lk.mul(&wb)?)?)?;
            let (pv, lv) = (phi.value(), lk.value());
            let first = Array2::from_shape_fn((rows, 1), |(r, _)| {
                if pv[[r, 0]] <= lv[[r, 0]] {
                    one
                } else {
                    T::zero()
                }
            });
            let second = first.mapv(|m| one - m);
            let p1 = phi.mask(first.clone())?;
            let den1 = lk.sub(&p1)?.add(&wc.mul(&p1)?)?;
            let y1 = yk
                .mul(&lk.sub(&p1)?)?
                .add(&wc.mul(&yc)?.mul(&p1)?)?
                .div(&den1)?;
            let dy1 = lk.mul(&wc)?.mul(&yc.sub(&yk)?)?.div(&den1.square())?;
            let p2 = phi.mask(second.clone())?.add(&tape.constant(first.clone()))?;
            let omp2 = p2.neg().offset(one);
            let den2 = wc.mul(&omp2)?.add(&wb.mul(&p2.sub(&lk)?)?)?;
            let y2 = wc
                .mul(&yc)?
                .mul(&omp2)?
                .add(&wb.mul(&yk1)?.mul(&p2.sub(&lk)?)?)?
                .div(&den2)?;
            let dy2 = oml
                .mul(&wb)?
                .mul(&wc)?
                .mul(&yk1.sub(&yc)?)?
                .div(&den2.square())?;
            let y = y1.mask(first.clone())?.add(&y2.mask(second.clone())?)?;
            let dy = dy1.mask(first)?.add(&dy2.mask(second)?)?;
            (y, dy.ln().sub(&wk.ln())?)
        }
    };
    let eps = y.mask(inside.clone())?.add(&z.mask(outside)?)?;
    let logdet = logdet.mask(inside)?;
    eps.square().scale(T::lit(-0.5)).offset(-T::lit(HALF_LN_TWO_PI)).add(&logdet)
}

/// Learned noise distribution of every node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub variant: NoiseVariant,
    pub kind: SplineKind,
    pub bins: usize,
    pub bound: f64,
    pub num_nodes: usize,
    pub max_lag: usize,
    hyper: Option<EmbeddedNet>,
    independent: Option<ParamId>,
    log_scale: Option<ParamId>,
}

impl NoiseModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        variant: NoiseVariant,
        kind: SplineKind,
        bins: usize,
        bound: f64,
        num_nodes: usize,
        max_lag: usize,
        embed_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if bins < 2 {
            return Err(RhinoError::Config("spline needs at least two bins".into()));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(RhinoError::Config("spline bound must be positive".into()));
        }
        let pdim = kind.raw_dim(bins);
        let ident: Vec<T> = identity_raw(kind, bins);
        let mut model = NoiseModel {
            variant,
            kind,
            bins,
            bound,
            num_nodes,
            max_lag,
            hyper: None,
            independent: None,
            log_scale: None,
        };
        match variant {
            NoiseVariant::ConditionalSpline => {
                if max_lag == 0 {
                    return Err(RhinoError::Config(
                        "conditional noise needs at least one lag".into(),
                    ));
                }
                let net = EmbeddedNet::new(store, "flow", num_nodes, max_lag, 1, embed_dim, hidden, pdim, rng);
                // start close to the identity flow
                let w = store.get_mut(net.readout().output_weight());
                w.mapv_inplace(|x| x * T::lit(0.01));
                let b = store.get_mut(net.readout().output_bias());
                b.row_mut(0).assign(&ndarray::Array1::from(ident));
                model.hyper = Some(net);
            }
            NoiseVariant::IndependentSpline => {
                let raw = Array2::from_shape_fn((num_nodes, pdim), |(_, c)| ident[c]);
                model.independent = Some(store.add("flow.independent", raw));
            }
            NoiseVariant::Gaussian => {
                model.log_scale = Some(store.add("noise.log_scale", Array2::zeros((1, num_nodes))));
            }
        }
        Ok(model)
    }

    pub fn raw_dim(&self) -> usize {
        self.kind.raw_dim(self.bins)
    }

    pub fn hyper_net(&self) -> Option<&EmbeddedNet> {
        self.hyper.as_ref()
    }

    /// Raw spline parameters for every `(b, i)` row, `B*D x raw_dim`.
    ///
    /// `gating` is the hyper-network's gating matrix; it is ignored by the
    /// independent variant.
    pub fn raw_params<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        windows: &Array2<T>,
        gating: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        let batch = windows.nrows();
        match (self.variant, &self.hyper, self.independent) {
            (NoiseVariant::ConditionalSpline, Some(net), _) => {
                let g = gating.ok_or_else(|| RhinoError::invalid("conditional noise needs a gating matrix"))?;
                net.forward(p, windows, g)
            }
            (NoiseVariant::IndependentSpline, _, Some(id)) => {
                let idx: Vec<usize> = (0..batch).flat_map(|_| 0..self.num_nodes).collect();
                p.var(id).gather_rows(idx)
            }
            _ => Err(RhinoError::invalid("noise variant has no spline parameters")),
        }
    }

    /// Log-density of residuals `z` (`B x D`) on the tape, `B x D`.
    pub fn log_density<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        z: Var<'t, T>,
        windows: &Array2<T>,
        gating: Option<Var<'t, T>>,
    ) -> Result<Var<'t, T>> {
        let (batch, d) = z.shape();
        if d != self.num_nodes || batch != windows.nrows() {
            return Err(RhinoError::invalid(format!(
                "residuals have shape {:?}, expected ({}, {})",
                z.shape(),
                windows.nrows(),
                self.num_nodes
            )));
        }
        match self.variant {
            NoiseVariant::Gaussian => {
                let ls = p.var(self.log_scale.expect("gaussian log-scale"));
                let scaled = z.mul(&ls.neg().exp())?;
                let lp = scaled.square().scale(T::lit(-0.5)).offset(-T::lit(HALF_LN_TWO_PI));
                lp.sub(&ls)
            }
            _ => {
                let raw = self.raw_params(p, windows, gating)?;
                let col = z.reshape(batch * d, 1)?;
                let lp = spline_log_density(col, raw, self.kind, self.bins, T::lit(self.bound))?;
                lp.reshape(batch, d)
            }
        }
    }

    fn gating_for<'t, T: Scalar>(&self, tape: &'t Tape<T>, adjacency: &Array3<T>) -> Option<Var<'t, T>> {
        self.hyper.as_ref().map(|net| tape.constant(net.gating_matrix(adjacency)))
    }

    /// Per-row, per-node spline parameters (`B x D` nested as rows then nodes).
    pub fn spline_params<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        windows: &Array2<T>,
        adjacency: &Array3<T>,
    ) -> Result<Vec<Vec<SplineParams<T>>>> {
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let raw = self.raw_params(&p, windows, self.gating_for(&tape, adjacency))?.value();
        let d = self.num_nodes;
        (0..windows.nrows())
            .map(|b| {
                (0..d)
                    .map(|i| {
                        let row: Vec<T> = raw.row(b * d + i).to_vec();
                        SplineParams::from_raw(&row, self.kind, self.bins, T::lit(self.bound))
                    })
                    .collect()
            })
            .collect()
    }

    /// Bin parameters of each node from a `K x D` block of lagged values
    /// (row 0 is lag 1).
    pub fn hyper_predict<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        lagged: &Array2<T>,
        graph: &TemporalGraph,
    ) -> Result<Vec<SplineParams<T>>> {
        let windows = self.lagged_window(lagged, graph)?;
        Ok(self.spline_params(store, &windows, &graph.to_real())?.remove(0))
    }

    fn lagged_window<T: Scalar>(&self, lagged: &Array2<T>, graph: &TemporalGraph) -> Result<Array2<T>> {
        let (k, d) = (self.max_lag, self.num_nodes);
        if lagged.dim() != (k, d) {
            return Err(RhinoError::invalid(format!(
                "lagged window has shape {:?}, expected {:?}",
                lagged.dim(),
                (k, d)
            )));
        }
        if graph.num_nodes() != d || graph.max_lag() != k {
            return Err(RhinoError::invalid("graph does not match the noise model"));
        }
        let mut w = Array2::zeros((1, (k + 1) * d));
        for tau in 0..k {
            for j in 0..d {
                w[[0, (tau + 1) * d + j]] = lagged[[tau, j]];
            }
        }
        Ok(w)
    }

    /// Turns base noise `eps` (`B x D`) into residuals for the given windows.
    pub fn sample_residuals<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        windows: &Array2<T>,
        adjacency: &Array3<T>,
        eps: &Array2<T>,
    ) -> Result<Array2<T>> {
        if eps.dim() != (windows.nrows(), self.num_nodes) {
            return Err(RhinoError::invalid("noise block does not match the windows"));
        }
        match self.variant {
            NoiseVariant::Gaussian => {
                let ls = store.get(self.log_scale.expect("gaussian log-scale"));
                Ok(Array2::from_shape_fn(eps.dim(), |(b, i)| eps[[b, i]] * ls[[0, i]].exp()))
            }
            _ => {
                let params = self.spline_params(store, windows, adjacency)?;
                let mut out = Array2::zeros(eps.dim());
                for (b, row) in params.iter().enumerate() {
                    for (i, sp) in row.iter().enumerate() {
                        out[[b, i]] = flow_forward(eps[[b, i]], sp)?;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Per-node log-density of residuals `z` given `K x D` lagged values.
    pub fn conditional_log_density<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        z: &[T],
        lagged: &Array2<T>,
        graph: &TemporalGraph,
    ) -> Result<Vec<T>> {
        if z.len() != self.num_nodes {
            return Err(RhinoError::invalid("residual vector length does not match node count"));
        }
        let windows = self.lagged_window(lagged, graph)?;
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let zv = tape.constant(Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row"));
        let lp = self.log_density(&p, zv, &windows, self.gating_for(&tape, &graph.to_real()))?;
        let out = lp.value().row(0).to_vec();
        if let Some(node) = out.iter().position(|v| !v.is_finite()) {
            return Err(RhinoError::Numeric(format!("log-density of node {node} is not finite")));
        }
        Ok(out)
    }
}
