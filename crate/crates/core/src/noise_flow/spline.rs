//! Monotone piecewise-rational splines on `[-B, B]` with identity tails.
//!
//! The closed-form direction maps observation-side residuals to the base
//! Gaussian, which is the direction needed for density evaluation. The
//! opposite direction is solved per bin in closed form.

use serde::{Deserialize, Serialize};

use crate::math::{sigmoid, softplus};
use crate::error::{Result, RhinoError};
use crate::scalar::Scalar;

/// Rational form used inside each bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplineKind {
    /// Rational-quadratic bins.
    #[default]
    RationalQuadratic,
    /// Linear-rational bins with one interior knot per bin.
    LinearRational,
}

/// Smallest share of the interval any bin may take.
pub const MIN_BIN_FRACTION: f64 = 1e-3;
/// Floor added to every interior knot derivative.
pub const MIN_DERIVATIVE: f64 = 1e-3;
/// Interior knot position of a linear-rational bin lies in this range.
pub const LAMBDA_RANGE: (f64, f64) = (0.025, 0.975);

impl SplineKind {
    /// Length of the unconstrained parameter vector for `bins` bins.
    pub fn raw_dim(self, bins: usize) -> usize {
        match self {
            SplineKind::RationalQuadratic => 3 * bins - 1,
            SplineKind::LinearRational => 4 * bins - 1,
        }
    }
}

/// Constrained spline parameters for one scalar transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineParams<T> {
    pub kind: SplineKind,
    pub bound: T,
    pub widths: Vec<T>,
    pub heights: Vec<T>,
    /// Knot derivatives, `bins + 1` values; the two ends are fixed at one.
    pub derivatives: Vec<T>,
    /// Interior knot positions for linear-rational bins, empty otherwise.
    pub lambdas: Vec<T>,
}

fn softmax_scaled<T: Scalar>(raw: &[T], total: T) -> Vec<T> {
    let m = raw.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let e: Vec<T> = raw.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    let n = T::from_usize(raw.len()).unwrap();
    let floor = T::lit(MIN_BIN_FRACTION);
    e.iter()
        .map(|&x| total * (floor + (T::one() - floor * n) * x / s))
        .collect()
}

/// Raw value that maps to a knot derivative of exactly one.
pub fn unit_derivative_raw<T: Scalar>() -> T {
    let target = 1.0 - MIN_DERIVATIVE;
    T::lit(target.exp_m1().ln())
}

impl<T: Scalar> SplineParams<T> {
    pub fn bins(&self) -> usize {
        self.widths.len()
    }

    /// Applies the positivity and normalization maps to a raw vector laid
    /// out as `[widths | heights | interior derivatives | lambdas]`.
    pub fn from_raw(raw: &[T], kind: SplineKind, bins: usize, bound: T) -> Result<Self> {
        if raw.len() != kind.raw_dim(bins) {
            return Err(RhinoError::invalid(format!(
                "spline expects {} raw parameters, got {}",
                kind.raw_dim(bins),
                raw.len()
            )));
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(RhinoError::Numeric("non-finite spline parameter".into()));
        }
        let two_b = bound + bound;
        let widths = softmax_scaled(&raw[..bins], two_b);
        let heights = softmax_scaled(&raw[bins..2 * bins], two_b);
        let mut derivatives = Vec::with_capacity(bins + 1);
        derivatives.push(T::one());
        for &r in &raw[2 * bins..3 * bins - 1] {
            derivatives.push(T::lit(MIN_DERIVATIVE) + softplus(r));
        }
        derivatives.push(T::one());
        let lambdas = match kind {
            SplineKind::RationalQuadratic => Vec::new(),
            SplineKind::LinearRational => {
                let (lo, hi) = (T::lit(LAMBDA_RANGE.0), T::lit(LAMBDA_RANGE.1));
                raw[3 * bins - 1..]
                    .iter()
                    .map(|&r| lo + (hi - lo) * sigmoid(r))
                    .collect()
            }
        };
        Ok(SplineParams {
            kind,
            bound,
            widths,
            heights,
            derivatives,
            lambdas,
        })
    }

    /// Uniform bins, unit derivatives: the identity map.
    pub fn identity(kind: SplineKind, bins: usize, bound: T) -> Self {
        let w = (bound + bound) / T::from_usize(bins).unwrap();
        SplineParams {
            kind,
            bound,
            widths: vec![w; bins],
            heights: vec![w; bins],
            derivatives: vec![T::one(); bins + 1],
            lambdas: match kind {
                SplineKind::RationalQuadratic => Vec::new(),
                SplineKind::LinearRational => vec![T::lit(0.5); bins],
            },
        }
    }

    fn knots(values: &[T], bound: T) -> Vec<T> {
        let mut k = Vec::with_capacity(values.len() + 1);
        let mut acc = -bound;
        k.push(acc);
        for &v in values {
            acc = acc + v;
            k.push(acc);
        }
        *k.last_mut().unwrap() = bound;
        k
    }

    fn locate(knots: &[T], x: T) -> usize {
        let bins = knots.len() - 1;
        (0..bins).find(|&k| x < knots[k + 1]).unwrap_or(bins - 1)
    }

    /// Closed-form direction: returns `(S(x), ln S'(x))`.
    pub fn transform(&self, x: T) -> (T, T) {
        if !(x >= -self.bound && x <= self.bound) {
            return (x, T::zero());
        }
        let xs = Self::knots(&self.widths, self.bound);
        let ys = Self::knots(&self.heights, self.bound);
        let k = Self::locate(&xs, x);
        let (xk, wk) = (xs[k], self.widths[k]);
        let (yk, hk) = (ys[k], self.heights[k]);
        let (dk, dk1) = (self.derivatives[k], self.derivatives[k + 1]);
        let s = hk / wk;
        let phi = (x - xk) / wk;
        let one = T::one();
        let two = T::lit(2.0);
        match self.kind {
            SplineKind::RationalQuadratic => {
                let t = phi * (one - phi);
                let den = s + (dk1 + dk - two * s) * t;
                let y = yk + hk * (s * phi * phi + dk * t) / den;
                let num = dk1 * phi * phi + two * s * t + dk * (one - phi) * (one - phi);
                let ld = two * s.ln() + num.ln() - two * den.ln();
                (y, ld)
            }
            SplineKind::LinearRational => {
                let lm = self.lambdas[k];
                let yk1 = ys[k + 1];
                let (wa, wb, wc, yc) = lr_weights(yk, yk1, dk, dk1, s, lm);
                if phi <= lm {
                    let den = wa * (lm - phi) + wc * phi;
                    let y = (wa * yk * (lm - phi) + wc * yc * phi) / den;
                    let dy = lm * wa * wc * (yc - yk) / (den * den);
                    (y, (dy / wk).ln())
                } else {
                    let den = wc * (one - phi) + wb * (phi - lm);
                    let y = (wc * yc * (one - phi) + wb * yk1 * (phi - lm)) / den;
                    let dy = (one - lm) * wb * wc * (yk1 - yc) / (den * den);
                    (y, (dy / wk).ln())
                }
            }
        }
    }

    /// Inverse of [`transform`](Self::transform), solved within the bin.
    pub fn invert(&self, y: T) -> T {
        if !(y >= -self.bound && y <= self.bound) {
            return y;
        }
        let xs = Self::knots(&self.widths, self.bound);
        let ys = Self::knots(&self.heights, self.bound);
        let k = Self::locate(&ys, y);
        let (xk, wk) = (xs[k], self.widths[k]);
        let (yk, hk) = (ys[k], self.heights[k]);
        let (dk, dk1) = (self.derivatives[k], self.derivatives[k + 1]);
        let s = hk / wk;
        let one = T::one();
        let two = T::lit(2.0);
        let phi = match self.kind {
            SplineKind::RationalQuadratic => {
                let dy = y - yk;
                let c2 = dk1 + dk - two * s;
                let a = hk * (s - dk) + dy * c2;
                let b = hk * dk - dy * c2;
                let c = -s * dy;
                let disc = (b * b - T::lit(4.0) * a * c).max(T::zero());
                two * c / (-b - disc.sqrt())
            }
            SplineKind::LinearRational => {
                let lm = self.lambdas[k];
                let yk1 = ys[k + 1];
                let (wa, wb, wc, yc) = lr_weights(yk, yk1, dk, dk1, s, lm);
                if y <= yc {
                    lm * wa * (y - yk) / (wc * (yc - y) + wa * (y - yk))
                } else {
                    let p = wb * yk1 - wc * yc;
                    let q = wc * yc - wb * yk1 * lm;
                    let r = wb - wc;
                    let sd = wc - wb * lm;
                    (q - y * sd) / (y * r - p)
                }
            }
        };
        let phi = phi.max(T::zero()).min(one);
        xk + phi * wk
    }
}

/// Weights `(w_a, w_b, w_c)` and interior value `y_c` of a linear-rational bin.
fn lr_weights<T: Scalar>(yk: T, yk1: T, dk: T, dk1: T, s: T, lm: T) -> (T, T, T, T) {
    let one = T::one();
    let wa = one;
    let wb = (dk / dk1).sqrt() * wa;
    let wc = (lm * wa * dk + (one - lm) * wb * dk1) / s;
    let yc = ((one - lm) * wa * yk + lm * wb * yk1) / ((one - lm) * wa + lm * wb);
    (wa, wb, wc, yc)
}
