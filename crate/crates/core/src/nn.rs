//! Parameter storage, the residual MLP block and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Result, RhinoError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Array2<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Replaces the tensor stored under `name`, keeping its shape.
    pub fn set_by_name(&mut self, name: &str, value: Array2<T>) -> Result<()> {
        let id = self
            .id_of(name)
            .ok_or_else(|| RhinoError::invalid(format!("unknown parameter {name}")))?;
        if self.values[id.0].dim() != value.dim() {
            return Err(RhinoError::invalid(format!(
                "parameter {name}: expected shape {:?}, got {:?}",
                self.values[id.0].dim(),
                value.dim()
            )));
        }
        self.values[id.0] = value;
        Ok(())
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }

    /// Records every parameter as a constant (evaluation only).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Bound<'t, T> {
        Bound {
            vars: self.values.iter().map(|v| tape.constant(v.clone())).collect(),
        }
    }

    /// Flattened parameter vector, in storage order.
    pub fn flatten(&self) -> Vec<T> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[T]) {
        let mut k = 0;
        for v in &mut self.values {
            for x in v.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
    }
}

/// Parameters of a [`ParamStore`] as tape variables.
pub struct Bound<'t, T: Scalar> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    pub fn var(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }

    /// Gradients of all parameters, in storage order.
    pub fn collect(&self, grads: &Gradients<T>) -> Vec<Array2<T>> {
        self.vars.iter().map(|&v| grads.wrt(v)).collect()
    }

    pub fn flat_gradient(&self, grads: &Gradients<T>) -> Vec<T> {
        self.vars
            .iter()
            .flat_map(|&v| grads.wrt(v).into_iter())
            .collect()
    }
}

fn uniform<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| T::lit(rng.random_range(-bound..bound)))
}

/// Fully connected block: one input layer and one residual hidden layer,
/// each followed by layer normalization and ReLU, then a linear read-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    w_in: ParamId,
    b_in: ParamId,
    gain_in: ParamId,
    shift_in: ParamId,
    w_hid: ParamId,
    b_hid: ParamId,
    gain_hid: ParamId,
    shift_hid: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

const LN_EPS: f64 = 1e-5;

impl Mlp {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let b0 = 1.0 / (in_dim as f64).sqrt();
        let b1 = 1.0 / (hidden as f64).sqrt();
        let mut add = |name: &str, v: Array2<T>| store.add(format!("{prefix}.{name}"), v);
        Mlp {
            in_dim,
            hidden,
            out_dim,
            w_in: add("w_in", uniform(in_dim, hidden, b0, rng)),
            b_in: add("b_in", uniform(1, hidden, b0, rng)),
            gain_in: add("gain_in", Array2::ones((1, hidden))),
            shift_in: add("shift_in", Array2::zeros((1, hidden))),
            w_hid: add("w_hid", uniform(hidden, hidden, b1, rng)),
            b_hid: add("b_hid", uniform(1, hidden, b1, rng)),
            gain_hid: add("gain_hid", Array2::ones((1, hidden))),
            shift_hid: add("shift_hid", Array2::zeros((1, hidden))),
            w_out: add("w_out", uniform(hidden, out_dim, b1, rng)),
            b_out: add("b_out", uniform(1, out_dim, b1, rng)),
        }
    }

    /// Maps `rows x in_dim` to `rows x out_dim`.
    pub fn forward<'t, T: Scalar>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let eps = T::lit(LN_EPS);
        let h = x.matmul(&p.var(self.w_in))?.add(&p.var(self.b_in))?;
        let h = h
            .layer_norm(eps)
            .mul(&p.var(self.gain_in))?
            .add(&p.var(self.shift_in))?
            .relu();
        let r = h.matmul(&p.var(self.w_hid))?.add(&p.var(self.b_hid))?;
        let r = r
            .layer_norm(eps)
            .mul(&p.var(self.gain_hid))?
            .add(&p.var(self.shift_hid))?
            .relu();
        let h = h.add(&r)?;
        h.matmul(&p.var(self.w_out))?.add(&p.var(self.b_out))
    }

    pub fn output_weight(&self) -> ParamId {
        self.w_out
    }

    pub fn output_bias(&self) -> ParamId {
        self.b_out
    }
}

/// Adaptive moment estimation, ascending or descending as the caller's
/// gradient sign dictates (this minimizes).
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Adam {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Array2<T>]) {
        if self.m.is_empty() {
            self.m = store.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = T::one() - self.beta1.powi(self.step);
        let c2 = T::one() - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (k, g) in grads.iter().enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            let p = &mut store.values[k];
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *p = *p - lr * mh / (vh.sqrt() + eps);
                });
        }
    }
}
