//! Unnormalized log prior over temporal adjacency tensors.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, RhinoError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Sparsity weight.
    pub lambda_s: f64,
    /// Weight of the distance to `prior_graph`.
    pub lambda_p: f64,
    pub alpha: f64,
    pub rho: f64,
    pub prior_graph: Option<Array3<f64>>,
    /// Penalize only the lag-0 slice instead of the whole tensor.
    #[serde(default)]
    pub sparsity_on_inst_only: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lambda_s: 9.0,
            lambda_p: 0.0,
            alpha: 0.0,
            rho: 1.0,
            prior_graph: None,
            sparsity_on_inst_only: false,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self, num_nodes: usize, max_lag: usize) -> Result<()> {
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_p", self.lambda_p),
            ("alpha", self.alpha),
            ("rho", self.rho),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RhinoError::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        match &self.prior_graph {
            None if self.lambda_p > 0.0 => Err(RhinoError::Config(
                "lambda_p > 0 requires a prior graph".into(),
            )),
            Some(gp) if gp.dim() != (max_lag + 1, num_nodes, num_nodes) => Err(RhinoError::Config(format!(
                "prior graph has shape {:?}, expected {:?}",
                gp.dim(),
                (max_lag + 1, num_nodes, num_nodes)
            ))),
            Some(gp) if gp.iter().any(|v| !v.is_finite()) => {
                Err(RhinoError::Config("prior graph has non-finite entries".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `tr(exp(W ⊙ W)) - D` on the tape.
pub fn dag_penalty_var<'t, T: Scalar>(inst: Var<'t, T>) -> Result<Var<'t, T>> {
    let d = inst.shape().0;
    Ok(inst.square().trace_expm()?.offset(-T::from_usize(d).unwrap()))
}

/// Log prior of an adjacency matrix `(K+1)*D x D` (row `tau*D + src`).
pub fn log_prior_var<'t, T: Scalar>(adj: Var<'t, T>, num_nodes: usize, c: &PriorConfig) -> Result<Var<'t, T>> {
    let (rows, cols) = adj.shape();
    if cols != num_nodes || rows % num_nodes != 0 || rows == 0 {
        return Err(RhinoError::invalid(format!(
            "adjacency matrix {:?} does not fit {num_nodes} nodes",
            adj.shape()
        )));
    }
    c.validate(num_nodes, rows / num_nodes - 1)?;
    let lag0 = adj.gather_rows((0..num_nodes).collect())?;
    let h = dag_penalty_var(lag0)?;
    let sparse_part = if c.sparsity_on_inst_only { lag0 } else { adj };
    let mut total = sparse_part
        .square()
        .sum()
        .scale(T::lit(-c.lambda_s))
        .sub(&h.square().scale(T::lit(c.rho)))?
        .sub(&h.scale(T::lit(c.alpha)))?;
    if c.lambda_p > 0.0 {
        let gp = c.prior_graph.as_ref().expect("validated");
        let gp = gp
            .mapv(T::lit)
            .into_shape_with_order((rows, cols))
            .expect("prior graph reshape");
        let diff = adj.sub(&adj.tape().constant(gp))?;
        total = total.sub(&diff.square().sum().scale(T::lit(c.lambda_p)))?;
    }
    Ok(total)
}

/// Log prior of a (binary or soft) adjacency tensor.
pub fn log_prior<T: Scalar>(adj: &Array3<T>, c: &PriorConfig) -> Result<T> {
    if adj.iter().any(|v| !v.is_finite()) {
        return Err(RhinoError::invalid("adjacency has non-finite entries"));
    }
    let (k1, d, d2) = adj.dim();
    if d != d2 {
        return Err(RhinoError::invalid("adjacency slices must be square"));
    }
    let tape = Tape::new();
    let m: Array2<T> = adj.to_owned().into_shape_with_order((k1 * d, d)).expect("reshape");
    Ok(log_prior_var(tape.constant(m), d, c)?.scalar_value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::graph::dag_penalty;

    fn cfg(lambda_s: f64) -> PriorConfig {
        PriorConfig {
            lambda_s,
            ..PriorConfig::default()
        }
    }

    #[test]
    fn empty_graph_is_zero() {
        assert_eq!(log_prior(&Array3::<f64>::zeros((3, 4, 4)), &cfg(9.0)).unwrap(), 0.0);
    }

    #[test]
    fn lagged_edges_only() {
        let mut g = Array3::<f64>::zeros((2, 3, 3));
        g[[1, 0, 1]] = 1.0;
        g[[1, 2, 2]] = 1.0;
        g[[1, 1, 0]] = 1.0;
        assert_eq!(log_prior(&g, &cfg(9.0)).unwrap(), -27.0);
        let inst_only = PriorConfig {
            sparsity_on_inst_only: true,
            ..cfg(9.0)
        };
        assert_eq!(log_prior(&g, &inst_only).unwrap(), 0.0);
    }

    #[test]
    fn two_cycle() {
        let mut g = Array3::<f64>::zeros((1, 2, 2));
        g[[0, 0, 1]] = 1.0;
        g[[0, 1, 0]] = 1.0;
        // h = 2 cosh(1) - 2
        let h = 2.0 * 1f64.cosh() - 2.0;
        let expected = -2.0 - h * h;
        assert!((log_prior(&g, &cfg(1.0)).unwrap() - expected).abs() < 1e-12);
        assert!((expected + 3.17975).abs() < 1e-5);
        let with_alpha = PriorConfig {
            alpha: 2.0,
            ..cfg(1.0)
        };
        assert!((log_prior(&g, &with_alpha).unwrap() - (expected - 2.0 * h)).abs() < 1e-12);
    }

    #[test]
    fn acyclic_lag0_has_no_lagrangian_terms() {
        let mut g = Array3::<f64>::zeros((2, 3, 3));
        g[[0, 0, 1]] = 1.0;
        g[[0, 1, 2]] = 1.0;
        g[[1, 2, 0]] = 1.0;
        let c = PriorConfig {
            alpha: 5.0,
            rho: 100.0,
            ..cfg(1.0)
        };
        assert!((log_prior(&g, &c).unwrap() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn domain_prior_distance() {
        let mut g = Array3::<f64>::zeros((2, 2, 2));
        g[[1, 0, 1]] = 1.0;
        let mut gp = Array3::<f64>::zeros((2, 2, 2));
        gp[[1, 1, 0]] = 0.5;
        let c = PriorConfig {
            lambda_s: 0.0,
            lambda_p: 2.0,
            prior_graph: Some(gp),
            ..PriorConfig::default()
        };
        assert!((log_prior(&g, &c).unwrap() + 2.0 * 1.25).abs() < 1e-12);
        let missing = PriorConfig {
            lambda_p: 1.0,
            ..PriorConfig::default()
        };
        assert!(matches!(log_prior(&g, &missing), Err(RhinoError::Config(_))));
    }

    #[test]
    fn soft_gradient_matches_finite_differences() {
        let d = 3;
        let x: Vec<f64> = (0..2 * d * d).map(|k| ((k as f64) * 0.73).sin().abs() * 0.9).collect();
        let mut gp = Array3::<f64>::zeros((2, d, d));
        gp[[1, 0, 2]] = 1.0;
        let c = PriorConfig {
            lambda_s: 1.5,
            lambda_p: 0.7,
            alpha: 0.3,
            rho: 2.0,
            prior_graph: Some(gp),
            sparsity_on_inst_only: false,
        };
        let eval = |flat: &[f64]| {
            let tape = Tape::new();
            let a = tape.leaf(Array2::from_shape_vec((2 * d, d), flat.to_vec()).unwrap());
            let lp = log_prior_var(a, d, &c).unwrap();
            let v = lp.scalar_value();
            (v, tape.gradient(lp).unwrap().wrt(a).iter().copied().collect::<Vec<_>>())
        };
        let (_, g) = eval(&x);
        let report = finite_difference_check(|p| eval(p).0, &x, &g, 1e-6, 1e-6);
        assert!(report.passed, "{:?}", report.worst());
    }

    #[test]
    fn penalty_agrees_with_graph_module() {
        let w = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 0.1 * (i + 2 * j) as f64 });
        let tape = Tape::new();
        let h = dag_penalty_var(tape.constant(w.clone())).unwrap().scalar_value();
        assert!((h - dag_penalty(&w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_edges() {
        let mut g = Array3::<f64>::zeros((2, 3, 3));
        let mut last = log_prior(&g, &cfg(2.0)).unwrap();
        for (tau, i, j) in [(1, 0, 1), (0, 1, 2), (1, 2, 2), (0, 2, 0)] {
            g[[tau, i, j]] = 1.0;
            let now = log_prior(&g, &cfg(2.0)).unwrap();
            assert!(now < last);
            last = now;
        }
    }
}
