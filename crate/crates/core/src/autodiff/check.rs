use crate::scalar::Scalar;

/// Outcome of comparing one coordinate of an analytic gradient with
/// central differences.
#[derive(Debug, Clone)]
pub struct FdCoordinate<T> {
    pub index: usize,
    pub analytic: T,
    pub numeric: T,
    pub rel_error: T,
    /// One-sided differences disagree, so the point sits on a kink.
    pub excluded: bool,
}

#[derive(Debug, Clone)]
pub struct FdReport<T> {
    pub coordinates: Vec<FdCoordinate<T>>,
    pub max_rel_error: T,
    pub tol: T,
    pub passed: bool,
}

impl<T: Scalar> FdReport<T> {
    pub fn excluded(&self) -> impl Iterator<Item = usize> + '_ {
        self.coordinates.iter().filter(|c| c.excluded).map(|c| c.index)
    }

    pub fn worst(&self) -> Option<&FdCoordinate<T>> {
        self.coordinates
            .iter()
            .filter(|c| !c.excluded)
            .max_by(|a, b| a.rel_error.partial_cmp(&b.rel_error).unwrap())
    }
}

/// Gradients smaller than this are compared on an absolute scale.
const ABS_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central differences of `f` at `params`.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-6)`. A
/// coordinate whose forward and backward one-sided differences disagree by
/// more than `1e-3 * max(1, |n|)` is reported as excluded and does not count
/// towards the verdict.
pub fn finite_difference_check<T, F>(mut f: F, params: &[T], analytic: &[T], step: T, tol: T) -> FdReport<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let mut x = params.to_vec();
    let f0 = f(&x);
    let two = T::lit(2.0);
    let mut coordinates = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x);
        x[i] = orig - step;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (two * step);
        let forward = (fp - f0) / step;
        let backward = (f0 - fm) / step;
        let excluded = (forward - backward).abs() > T::lit(1e-3) * numeric.abs().max(T::one());
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(T::lit(ABS_FLOOR));
        let rel_error = (a - numeric).abs() / denom;
        coordinates.push(FdCoordinate {
            index: i,
            analytic: a,
            numeric,
            rel_error,
            excluded,
        });
    }
    let max_rel_error = coordinates
        .iter()
        .filter(|c| !c.excluded)
        .map(|c| c.rel_error)
        .fold(T::zero(), |m, e| if e > m || e.is_nan() { e } else { m });
    FdReport {
        passed: max_rel_error < tol,
        coordinates,
        max_rel_error,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_passes_tightly() {
        // f(x) = x^T A x with symmetric A, gradient 2 A x
        let a = [[2.0, 0.5], [0.5, 1.0]];
        let f = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += x[i] * a[i][j] * x[j];
                }
            }
            s
        };
        let x = [0.7, -1.3];
        let g = [
            2.0 * (a[0][0] * x[0] + a[0][1] * x[1]),
            2.0 * (a[1][0] * x[0] + a[1][1] * x[1]),
        ];
        let report = finite_difference_check(f, &x, &g, 1e-5, 1e-6);
        assert!(report.passed, "{report:?}");
        assert_eq!(report.excluded().count(), 0);
    }

    #[test]
    fn relu_kink_is_excluded() {
        let f = |x: &[f64]| x[0].max(0.0) + x[1] * x[1];
        let x = [0.0, 1.5];
        let report = finite_difference_check(f, &x, &[0.0, 3.0], 1e-5, 1e-6);
        assert_eq!(report.excluded().collect::<Vec<_>>(), vec![0]);
        assert!(report.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let f = |x: &[f64]| x[0].sin();
        let report = finite_difference_check(f, &[0.3], &[0.3f64.cos() * 1.01], 1e-5, 1e-4);
        assert!(!report.passed);
    }
}
