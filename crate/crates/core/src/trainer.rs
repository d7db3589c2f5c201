//! ELBO assembly and augmented-Lagrangian training.

use std::io::Write;

use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{series_windows, Dataset, Standardization};
use crate::error::{Result, RhinoError};
use crate::graph::{dag_penalty, TemporalGraph};
use crate::mechanism::Mechanism;
use crate::nn::{Adam, Bound, ParamStore};
use crate::noise_flow::{NoiseModel, NoiseVariant, SplineKind};
use crate::prior::{log_prior_var, PriorConfig};
use crate::scalar::Scalar;
use crate::variational::{threshold_graph, GraphPosterior, PosteriorInit};

/// Hidden width used when the config leaves it unset.
pub fn default_hidden(num_nodes: usize) -> usize {
    match num_nodes {
        0..=10 => 64,
        11..=20 => 80,
        _ => 160,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_lag: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Optimizer steps per Lagrangian stage.
    pub inner_steps: usize,
    pub stages: usize,
    /// Further stages allowed while the thresholded lag-0 graph is still cyclic.
    pub extra_stages: usize,
    pub temperature: f64,
    pub prior: PriorConfig,
    pub noise: NoiseVariant,
    pub spline_kind: SplineKind,
    pub spline_bins: usize,
    pub spline_bound: f64,
    pub instantaneous: bool,
    pub allow_lagged_self: bool,
    pub init: PosteriorInit,
    /// Node embedding width; defaults to the node count.
    pub embed_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub flow_embed_dim: Option<usize>,
    pub flow_hidden: Option<usize>,
    pub standardize: bool,
    pub rho_factor: f64,
    pub rho_max: f64,
    /// `rho` grows unless `h` falls below this fraction of its last value.
    pub progress_ratio: f64,
    /// Emit a progress record every this many steps (0: stage ends only).
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_lag: 2,
            batch_size: 64,
            learning_rate: 0.01,
            inner_steps: 2000,
            stages: 10,
            extra_stages: 10,
            temperature: 0.25,
            prior: PriorConfig::default(),
            noise: NoiseVariant::ConditionalSpline,
            spline_kind: SplineKind::RationalQuadratic,
            spline_bins: 8,
            spline_bound: 5.0,
            instantaneous: true,
            allow_lagged_self: true,
            init: PosteriorInit::Sparse,
            embed_dim: None,
            hidden: None,
            flow_embed_dim: None,
            flow_hidden: None,
            standardize: true,
            rho_factor: 10.0,
            rho_max: 1e13,
            progress_ratio: 0.65,
            log_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Synthetic-data profile for a noise variant (sparsity 5 for Gaussian
    /// noise, 9 otherwise).
    pub fn for_variant(noise: NoiseVariant) -> Self {
        let mut c = TrainConfig {
            noise,
            ..TrainConfig::default()
        };
        c.prior.lambda_s = if noise == NoiseVariant::Gaussian { 5.0 } else { 9.0 };
        c
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let fail = |m: &str| Err(RhinoError::Config(m.to_string()));
        if self.max_lag < 1 {
            return fail("max_lag must be at least 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1");
        }
        if self.stages < 1 {
            return fail("stages must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be positive");
        }
        if !(self.rho_factor > 1.0 && self.rho_max >= self.prior.rho) {
            return fail("rho schedule must grow and start below its cap");
        }
        if !(self.prior.rho > 0.0) {
            return fail("rho must be positive");
        }
        self.prior.validate(num_nodes, self.max_lag)
    }

    fn embed(&self, d: usize) -> usize {
        self.embed_dim.unwrap_or(d).max(1)
    }

    fn width(&self, d: usize) -> usize {
        self.hidden.unwrap_or_else(|| default_hidden(d))
    }
}

/// Structural model plus graph posterior; parameters live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rhino {
    pub num_nodes: usize,
    pub max_lag: usize,
    pub mechanism: Mechanism,
    pub noise: NoiseModel,
    pub posterior: GraphPosterior,
}

/// The pieces of one ELBO estimate, all `1 x 1`.
pub struct ElboTerms<'t, T: Scalar> {
    pub elbo: Var<'t, T>,
    pub log_likelihood: Var<'t, T>,
    pub log_prior: Var<'t, T>,
    pub entropy: Var<'t, T>,
    /// Per-window, per-node log densities, `B x D`.
    pub node_log_density: Var<'t, T>,
}

impl Rhino {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        config: &TrainConfig,
        num_nodes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate(num_nodes)?;
        let d = num_nodes;
        let k = config.max_lag;
        let posterior = GraphPosterior::new(store, d, k, config.init, config.instantaneous, config.allow_lagged_self);
        let mechanism = Mechanism::new(store, d, k, config.embed(d), config.width(d), rng);
        let noise = NoiseModel::new(
            store,
            config.noise,
            config.spline_kind,
            config.spline_bins,
            config.spline_bound,
            d,
            k,
            config.flow_embed_dim.unwrap_or(d).max(1),
            config.flow_hidden.unwrap_or_else(|| config.width(d)),
            rng,
        )?;
        Ok(Rhino {
            num_nodes: d,
            max_lag: k,
            mechanism,
            noise,
            posterior,
        })
    }

    fn gating<'t, T: Scalar>(&self, adj: Var<'t, T>, net: &crate::mechanism::EmbeddedNet) -> Result<Var<'t, T>> {
        let idx = net.gating_index().into_iter().map(Some).collect();
        adj.gather(idx, self.num_nodes, net.num_sources())
    }

    /// Per-window, per-node log-likelihood `B x D` under the adjacency matrix
    /// `adj` (`(K+1)*D x D`, row `tau*D + src`).
    pub fn node_log_likelihood<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        windows: &Array2<T>,
        adj: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let d = self.num_nodes;
        let means = self.mechanism.means(p, windows, self.gating(adj, &self.mechanism.net)?)?;
        let current = adj.tape().constant(windows.slice(s![.., 0..d]).to_owned());
        let z = current.sub(&means)?;
        let flow_gate = match self.noise.hyper_net() {
            Some(net) => Some(self.gating(adj, net)?),
            None => None,
        };
        self.noise.log_density(p, z, windows, flow_gate)
    }

    fn adjacency_constant<'t, T: Scalar>(&self, tape: &'t Tape<T>, adjacency: &Array3<T>) -> Result<Var<'t, T>> {
        let (k1, d) = (self.max_lag + 1, self.num_nodes);
        if adjacency.dim() != (k1, d, d) {
            return Err(RhinoError::invalid(format!(
                "adjacency has shape {:?}, expected {:?}",
                adjacency.dim(),
                (k1, d, d)
            )));
        }
        let m = adjacency.to_owned().into_shape_with_order((k1 * d, d)).expect("reshape");
        Ok(tape.constant(m))
    }

    /// Log-likelihood of each window under a fixed (hard or soft) adjacency.
    pub fn log_likelihood<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        windows: &Array2<T>,
        adjacency: &Array3<T>,
    ) -> Result<Vec<T>> {
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let adj = self.adjacency_constant(&tape, adjacency)?;
        let lp = self.node_log_likelihood(&p, windows, adj)?.value();
        check_finite(&lp, None)?;
        Ok(lp.rows().into_iter().map(|r| r.sum()).collect())
    }

    /// Log-likelihood of a whole `T x D` series conditioned on its first `K` steps.
    pub fn series_log_likelihood<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        series: &Array2<T>,
        adjacency: &Array3<T>,
    ) -> Result<T> {
        let w = series_windows(series, self.max_lag)?;
        Ok(self.log_likelihood(store, &w, adjacency)?.into_iter().sum())
    }

    /// One-sample ELBO on the tape: `scale * log-lik + log prior + entropy`.
    #[allow(clippy::too_many_arguments)]
    pub fn elbo_terms<'t, T: Scalar, R: Rng + ?Sized>(
        &self,
        p: &Bound<'t, T>,
        windows: &Array2<T>,
        scale: T,
        prior: &PriorConfig,
        temperature: T,
        hard: bool,
        rng: &mut R,
    ) -> Result<ElboTerms<'t, T>> {
        let entries = self.posterior.sample_entries(p, temperature, hard, rng)?;
        let adj = self.posterior.adjacency_matrix(entries)?;
        self.elbo_given(p, windows, scale, prior, adj)
    }

    /// ELBO terms for an explicit adjacency matrix on the tape.
    pub fn elbo_given<'t, T: Scalar>(
        &self,
        p: &Bound<'t, T>,
        windows: &Array2<T>,
        scale: T,
        prior: &PriorConfig,
        adj: Var<'t, T>,
    ) -> Result<ElboTerms<'t, T>> {
        let node_log_density = self.node_log_likelihood(p, windows, adj)?;
        let log_likelihood = node_log_density.sum();
        let log_prior = log_prior_var(adj, self.num_nodes, prior)?;
        let entropy = self.posterior.entropy(p)?;
        let elbo = log_likelihood.scale(scale).add(&log_prior)?.add(&entropy)?;
        Ok(ElboTerms {
            elbo,
            log_likelihood,
            log_prior,
            entropy,
            node_log_density,
        })
    }

    /// Scalar ELBO estimate with `scale = n_total / batch`.
    #[allow(clippy::too_many_arguments)]
    pub fn elbo<T: Scalar, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<T>,
        windows: &Array2<T>,
        n_total: usize,
        prior: &PriorConfig,
        temperature: T,
        hard: bool,
        rng: &mut R,
    ) -> Result<T> {
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let scale = T::from_usize(n_total).unwrap() / T::from_usize(windows.nrows()).unwrap();
        let terms = self.elbo_terms(&p, windows, scale, prior, temperature, hard, rng)?;
        Ok(terms.elbo.scalar_value())
    }
}

fn check_finite<T: Scalar>(lp: &Array2<T>, origin: Option<&[(usize, usize)]>) -> Result<()> {
    if let Some(((r, node), _)) = lp.indexed_iter().find(|(_, v)| !v.is_finite()) {
        let (series, t) = origin.map_or((0, r), |o| o[r]);
        return Err(RhinoError::NonFiniteDensity { series, t, node });
    }
    Ok(())
}

/// Augmented-Lagrangian coefficients and their update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lagrangian {
    pub alpha: f64,
    pub rho: f64,
    pub h_last: Option<f64>,
    pub factor: f64,
    pub rho_max: f64,
    pub progress_ratio: f64,
}

impl Lagrangian {
    pub fn from_config(c: &TrainConfig) -> Self {
        Lagrangian {
            alpha: c.prior.alpha,
            rho: c.prior.rho,
            h_last: None,
            factor: c.rho_factor,
            rho_max: c.rho_max,
            progress_ratio: c.progress_ratio,
        }
    }

    /// Stage-end update with the newly measured constraint value.
    pub fn update(&mut self, h_new: f64) {
        match self.h_last {
            Some(h_old) if h_new > self.progress_ratio * h_old => {
                self.rho = (self.rho * self.factor).min(self.rho_max);
            }
            _ => {
                self.alpha += self.rho * h_new;
                self.h_last = Some(h_new);
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    pub stage: usize,
    pub step: usize,
    /// Mean one-sample ELBO over the steps since the previous record.
    pub elbo: f64,
    /// Constraint value of the thresholded lag-0 graph.
    pub h: f64,
    pub rho: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub config: TrainConfig,
    pub model: Rhino,
    pub store: ParamStore<T>,
    pub standardization: Standardization,
    pub names: Vec<String>,
    pub alpha: f64,
    pub rho: f64,
    pub log: Vec<ProgressRecord>,
    /// Constraint value of the thresholded lag-0 graph before cycle repair.
    pub final_h: f64,
    /// False when `final_h` stayed above `1e-8`.
    pub converged: bool,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn num_nodes(&self) -> usize {
        self.model.num_nodes
    }

    pub fn max_lag(&self) -> usize {
        self.model.max_lag
    }

    pub fn edge_probabilities(&self) -> Array3<T> {
        self.model.posterior.edge_probabilities(&self.store)
    }

    /// Thresholded posterior with any lag-0 cycle removed.
    pub fn most_probable_graph(&self) -> TemporalGraph {
        self.model.posterior.most_probable_graph(&self.store)
    }
}

/// Constraint value of the lag-0 slice thresholded at one half.
pub fn thresholded_h<T: Scalar>(probs: &Array3<T>) -> Result<f64> {
    let d = probs.shape()[1];
    let inst = Array2::from_shape_fn((d, d), |(i, j)| {
        if i != j && probs[[0, i, j]] > T::lit(0.5) {
            1.0
        } else {
            0.0
        }
    });
    dag_penalty(&inst)
}

/// Constraint level treated as acyclic.
pub const CONVERGED_H: f64 = 1e-8;

/// Fits the model; progress records are also written to `log` as JSON lines.
pub fn train_with_log<T: Scalar>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainedModel<T>> {
    dataset.validate()?;
    let d = dataset.num_nodes();
    config.validate(d)?;
    let standardization = if config.standardize {
        dataset.standardization()
    } else {
        Standardization::identity(d)
    };
    let data = dataset.standardized(&standardization);
    let (windows, origin) = data.windows(config.max_lag)?;
    let n_total = windows.nrows();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::new();
    let model = Rhino::new(&mut store, config, d, &mut rng)?;
    let mut adam = Adam::new(T::lit(config.learning_rate));
    let mut lagrangian = Lagrangian::from_config(config);
    let mut records = Vec::new();
    let batch = config.batch_size.min(n_total);
    let scale = T::from_usize(n_total).unwrap() / T::from_usize(batch).unwrap();
    let inv_n = T::one() / T::from_usize(n_total).unwrap();
    let temperature = T::lit(config.temperature);
    let width = windows.ncols();

    let mut step = 0;
    let mut stage = 0;
    let mut h_end = f64::INFINITY;
    while stage < config.stages || (h_end > CONVERGED_H && stage < config.stages + config.extra_stages) {
        let prior = PriorConfig {
            alpha: lagrangian.alpha,
            rho: lagrangian.rho,
            ..config.prior.clone()
        };
        let mut elbo_acc = 0.0;
        let mut elbo_count = 0usize;
        for inner in 0..config.inner_steps {
            let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n_total)).collect();
            let mut bw = Array2::zeros((batch, width));
            for (r, &k) in idx.iter().enumerate() {
                bw.row_mut(r).assign(&windows.row(k));
            }
            let tape = Tape::new();
            let p = store.bind(&tape);
            let terms = model.elbo_terms(&p, &bw, scale, &prior, temperature, true, &mut rng)?;
            let elbo = terms.elbo.scalar_value();
            if !elbo.is_finite() {
                let picked: Vec<(usize, usize)> = idx.iter().map(|&k| origin[k]).collect();
                check_finite(&terms.node_log_density.value(), Some(&picked))?;
                return Err(RhinoError::Diverged { step });
            }
            let loss = terms.elbo.scale(-inv_n);
            let grads = tape.gradient(loss)?;
            let g = p.collect(&grads);
            if g.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
                return Err(RhinoError::Diverged { step });
            }
            drop(terms);
            adam.step(&mut store, &g);
            step += 1;
            elbo_acc += elbo.as_f64();
            elbo_count += 1;
            let last = inner + 1 == config.inner_steps;
            if last || (config.log_every > 0 && step % config.log_every == 0) {
                let h = thresholded_h(&model.posterior.edge_probabilities(&store))?;
                if last {
                    lagrangian.update(h);
                    h_end = h;
                }
                let rec = ProgressRecord {
                    stage,
                    step,
                    elbo: elbo_acc / elbo_count as f64,
                    h,
                    rho: lagrangian.rho,
                    alpha: lagrangian.alpha,
                };
                if let Some(w) = log.as_mut() {
                    writeln!(w, "{}", serde_json::to_string(&rec)?)?;
                }
                records.push(rec);
                elbo_acc = 0.0;
                elbo_count = 0;
            }
        }
        stage += 1;
    }
    let final_h = thresholded_h(&model.posterior.edge_probabilities(&store))?;
    Ok(TrainedModel {
        config: config.clone(),
        model,
        store,
        standardization,
        names: dataset.names.clone(),
        alpha: lagrangian.alpha,
        rho: lagrangian.rho,
        log: records,
        final_h,
        converged: final_h <= CONVERGED_H,
    })
}

pub fn train<T: Scalar>(dataset: &Dataset<T>, config: &TrainConfig) -> Result<TrainedModel<T>> {
    train_with_log(dataset, config, None)
}

/// Convenience for tests and examples: the thresholded graph of a model.
pub fn discovered_graph<T: Scalar>(model: &TrainedModel<T>) -> TemporalGraph {
    threshold_graph(&model.edge_probabilities())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::HALF_LN_TWO_PI;

    fn tiny(noise: NoiseVariant) -> (ParamStore<f64>, Rhino, TrainConfig) {
        let config = TrainConfig {
            max_lag: 1,
            noise,
            hidden: Some(8),
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let m = Rhino::new(&mut store, &config, 2, &mut rng).unwrap();
        (store, m, config)
    }

    fn zero_mechanism(store: &mut ParamStore<f64>, m: &Rhino) {
        let out_w = m.mechanism.net.readout().output_weight();
        let out_b = m.mechanism.net.readout().output_bias();
        store.get_mut(out_w).fill(0.0);
        store.get_mut(out_b).fill(0.0);
    }

    #[test]
    fn gaussian_zero_mechanism_at_origin() {
        let (mut store, m, _) = tiny(NoiseVariant::Gaussian);
        zero_mechanism(&mut store, &m);
        let w = Array2::zeros((1, 4));
        let ll = m.log_likelihood(&store, &w, &Array3::zeros((2, 2, 2))).unwrap();
        assert!((ll[0] + 2.0 * HALF_LN_TWO_PI).abs() < 1e-12);

        let mut far = Array2::zeros((1, 4));
        far[[0, 0]] = 6.0;
        let ll_far = m.log_likelihood(&store, &far, &Array3::zeros((2, 2, 2))).unwrap();
        assert!(ll_far[0] < ll[0]);
    }

    #[test]
    fn series_likelihood_is_sum_of_windows() {
        let (store, m, _) = tiny(NoiseVariant::ConditionalSpline);
        let series = Array2::from_shape_fn((9, 2), |(t, i)| ((t * 2 + i) as f64 * 0.7).cos());
        let mut adj = Array3::zeros((2, 2, 2));
        adj[[1, 0, 1]] = 1.0;
        adj[[0, 1, 0]] = 1.0;
        let total = m.series_log_likelihood(&store, &series, &adj).unwrap();
        let mut acc = 0.0;
        for t in 1..9 {
            let w = series.slice(s![t - 1..=t, ..]).to_owned();
            acc += m.series_log_likelihood(&store, &w, &adj).unwrap();
        }
        assert!((total - acc).abs() < 1e-10);
    }

    #[test]
    fn deterministic_posterior_has_no_entropy() {
        let (mut store, m, config) = tiny(NoiseVariant::Gaussian);
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let l = if a == 0 && b == 1 { 40.0 } else { -40.0 };
            m.posterior.set_lagged_logits(&mut store, 1, a, b, l, 0.0);
        }
        m.posterior.set_instantaneous_logits(&mut store, 1, 0, [-40.0, -40.0, 40.0]).unwrap();
        let windows = Array2::from_shape_fn((5, 4), |(r, c)| (r as f64 - c as f64) * 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let elbo = m.elbo(&store, &windows, 20, &config.prior, 0.25, true, &mut rng).unwrap();
        let mut g = Array3::zeros((2, 2, 2));
        g[[1, 0, 1]] = 1.0;
        let ll: f64 = m.log_likelihood(&store, &windows, &g).unwrap().iter().sum();
        let lp = crate::prior::log_prior(&g, &config.prior).unwrap();
        assert!((elbo - (4.0 * ll + lp)).abs() < 1e-8, "{elbo} vs {}", 4.0 * ll + lp);
    }

    #[test]
    fn lagrangian_schedule() {
        let mut l = Lagrangian::from_config(&TrainConfig::default());
        l.update(2.0);
        assert_eq!((l.alpha, l.rho), (2.0, 1.0));
        l.update(1.9);
        assert_eq!((l.alpha, l.rho), (2.0, 10.0));
        l.update(0.5);
        assert_eq!((l.alpha, l.rho), (7.0, 10.0));
        for _ in 0..20 {
            l.update(0.5);
        }
        assert_eq!(l.rho, 1e13);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            max_lag: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate(3).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate(3).is_err());
        assert_eq!(TrainConfig::for_variant(NoiseVariant::Gaussian).prior.lambda_s, 5.0);
        let json = serde_json::to_string(&TrainConfig::default()).unwrap();
        let back: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, TrainConfig::default());
        let partial: TrainConfig = serde_json::from_str(r#"{"max_lag": 3}"#).unwrap();
        assert_eq!(partial.max_lag, 3);
        assert_eq!(partial.batch_size, 64);
    }

    #[test]
    fn short_training_is_deterministic() {
        let series: Vec<Array2<f64>> = (0..3)
            .map(|n| Array2::from_shape_fn((30, 2), |(t, i)| ((t * (i + 1) + n) as f64 * 0.37).sin()))
            .collect();
        let ds = Dataset::new(Dataset::<f64>::default_names(2), series).unwrap();
        let config = TrainConfig {
            max_lag: 1,
            inner_steps: 15,
            stages: 2,
            batch_size: 16,
            hidden: Some(8),
            seed: 5,
            ..TrainConfig::default()
        };
        let mut buf = Vec::new();
        let a = train_with_log(&ds, &config, Some(&mut buf)).unwrap();
        let b = train(&ds, &config).unwrap();
        assert_eq!(a.store.flatten(), b.store.flatten());
        assert_eq!(a.log.len(), 2);
        let lines: Vec<&str> = std::str::from_utf8(&buf).unwrap().lines().collect();
        assert_eq!(lines.len(), 2);
        let rec: ProgressRecord = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(rec.step, 30);
        assert!(is_dag_of(&a));
    }

    fn is_dag_of(m: &TrainedModel<f64>) -> bool {
        crate::graph::is_dag(&m.most_probable_graph().instantaneous())
    }

    #[test]
    fn granger_mode_has_no_instantaneous_mass() {
        let config = TrainConfig {
            max_lag: 1,
            instantaneous: false,
            hidden: Some(8),
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let m = Rhino::new(&mut store, &config, 3, &mut rng).unwrap();
        let p = m.posterior.edge_probabilities(&store);
        assert!(p.index_axis(ndarray::Axis(0), 0).iter().all(|&v| v == 0.0));
        let adj = m.posterior.sample_adjacency(&store, 0.25, true, &mut rng).unwrap();
        assert!(adj.index_axis(ndarray::Axis(0), 0).iter().all(|&v| v == 0.0));
    }
}
