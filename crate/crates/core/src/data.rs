//! Multivariate time-series container and window extraction.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RhinoError};
use crate::scalar::Scalar;

/// `N` series of shape `T_n x D` sharing variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub names: Vec<String>,
    pub series: Vec<Array2<T>>,
}

/// Per-variable affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Standardization {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn forward<T: Scalar>(&self, node: usize, x: T) -> T {
        (x - T::lit(self.mean[node])) / T::lit(self.std[node])
    }

    pub fn inverse<T: Scalar>(&self, node: usize, x: T) -> T {
        x * T::lit(self.std[node]) + T::lit(self.mean[node])
    }

    pub fn apply<T: Scalar>(&self, x: &Array2<T>) -> Array2<T> {
        Array2::from_shape_fn(x.dim(), |(t, i)| self.forward(i, x[[t, i]]))
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn new(names: Vec<String>, series: Vec<Array2<T>>) -> Result<Self> {
        let ds = Dataset { names, series };
        ds.validate()?;
        Ok(ds)
    }

    /// Names `x0, x1, ...`.
    pub fn default_names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.names.len();
        if d == 0 {
            return Err(RhinoError::invalid("dataset has no variables"));
        }
        if self.series.is_empty() {
            return Err(RhinoError::invalid("dataset has no series"));
        }
        for (n, s) in self.series.iter().enumerate() {
            if s.ncols() != d {
                return Err(RhinoError::invalid(format!(
                    "series {n} has {} variables, expected {d}",
                    s.ncols()
                )));
            }
            if let Some(((t, i), _)) = s.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(RhinoError::invalid(format!("series {n} has a non-finite value at t={t}, variable {i}")));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_series(&self) -> usize {
        self.series.len()
    }

    /// Mean and (population) standard deviation of every variable over all
    /// series and steps; constant variables get unit scale.
    pub fn standardization(&self) -> Standardization {
        let d = self.num_nodes();
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut count = 0.0;
        for s in &self.series {
            for row in s.rows() {
                for (i, v) in row.iter().enumerate() {
                    let v = v.as_f64();
                    sum[i] += v;
                    sq[i] += v * v;
                }
                count += 1.0;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / count - m * m).max(0.0);
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, std }
    }

    pub fn standardized(&self, st: &Standardization) -> Self {
        Dataset {
            names: self.names.clone(),
            series: self.series.iter().map(|s| st.apply(s)).collect(),
        }
    }

    /// All length-`K+1` windows as rows of a `W x (K+1)*D` matrix, column
    /// `tau*D + j` holding `x^j_{t - tau}`, along with the `(series, t)` of
    /// each row.
    pub fn windows(&self, max_lag: usize) -> Result<(Array2<T>, Vec<(usize, usize)>)> {
        let d = self.num_nodes();
        let mut origin = Vec::new();
        for (n, s) in self.series.iter().enumerate() {
            if s.nrows() <= max_lag {
                return Err(RhinoError::invalid(format!(
                    "series {n} has {} steps; at least {} are needed for lag {max_lag}",
                    s.nrows(),
                    max_lag + 1
                )));
            }
            origin.extend((max_lag..s.nrows()).map(|t| (n, t)));
        }
        let mut out = Array2::zeros((origin.len(), (max_lag + 1) * d));
        for (r, &(n, t)) in origin.iter().enumerate() {
            for tau in 0..=max_lag {
                out.slice_mut(s![r, tau * d..(tau + 1) * d])
                    .assign(&self.series[n].row(t - tau));
            }
        }
        Ok((out, origin))
    }
}

/// Window rows for one series (used when scoring a single trajectory).
pub fn series_windows<T: Scalar>(series: &Array2<T>, max_lag: usize) -> Result<Array2<T>> {
    let d = series.ncols();
    let ds = Dataset {
        names: Dataset::<T>::default_names(d),
        series: vec![series.clone()],
    };
    Ok(ds.windows(max_lag)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_layout() {
        let s = Array2::from_shape_fn((4, 2), |(t, i)| (10 * t + i) as f64);
        let ds = Dataset::new(Dataset::<f64>::default_names(2), vec![s]).unwrap();
        let (w, origin) = ds.windows(2).unwrap();
        assert_eq!(origin, vec![(0, 2), (0, 3)]);
        assert_eq!(w.row(0).to_vec(), vec![20.0, 21.0, 10.0, 11.0, 0.0, 1.0]);
        assert!(ds.windows(4).is_err());
    }

    #[test]
    fn standardization_roundtrip() {
        let s = Array2::from_shape_fn((50, 3), |(t, i)| (t as f64 * 0.3 + i as f64).sin() * (i + 1) as f64 + 2.0);
        let ds = Dataset::new(Dataset::<f64>::default_names(3), vec![s.clone()]).unwrap();
        let st = ds.standardization();
        let z = ds.standardized(&st);
        let col = z.series[0].column(1).to_owned();
        assert!(col.mean().unwrap().abs() < 1e-12);
        assert!((col.mapv(|v| v * v).mean().unwrap() - 1.0).abs() < 1e-12);
        assert!((st.inverse(1, z.series[0][[7, 1]]) - s[[7, 1]]).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let ok = Array2::<f64>::zeros((5, 2));
        let bad = Array2::<f64>::zeros((5, 3));
        assert!(Dataset::new(Dataset::<f64>::default_names(2), vec![ok, bad]).is_err());
        let mut nan = Array2::<f64>::zeros((5, 2));
        nan[[3, 1]] = f64::NAN;
        assert!(Dataset::new(Dataset::<f64>::default_names(2), vec![nan]).is_err());
    }
}
