//! Central finite differences used whenever an analytic derivative is not supplied.

use nalgebra::{DMatrix, DVector};

/// Step for coordinate `v`: `1e-6 * max(1, |v|)`.
#[inline]
pub fn step_for(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

pub fn gradient<F>(f: F, x: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let h = step_for(x[i]);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        (fp - fm) / (2.0 * h)
    })
}

/// Jacobian of a vector map: rows index outputs, columns index inputs.
pub fn jacobian<F>(f: F, x: &DVector<f64>, outputs: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut probe = x.clone();
    let mut jac = DMatrix::zeros(outputs, x.len());
    for i in 0..x.len() {
        let h = step_for(x[i]);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    jac
}

pub fn derivative<F>(f: F, t: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let h = step_for(t);
    (f(t + h) - f(t - h)) / (2.0 * h)
}

pub fn vector_derivative<F>(f: F, t: f64) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    let h = step_for(t);
    (f(t + h) - f(t - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_quadratic() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let g = gradient(|v| v.dot(v), &x);
        for i in 0..3 {
            assert!((g[i] - 2.0 * x[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn jacobian_of_linear_map() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let x = DVector::from_vec(vec![0.3, 0.1, -0.7]);
        let jac = jacobian(|v| &a * v, &x, 2);
        assert!((jac - a).abs().max() < 1e-8);
    }

    #[test]
    fn scalar_derivative_of_sine() {
        let d = derivative(f64::sin, 0.4);
        assert!((d - 0.4f64.cos()).abs() < 1e-9);
    }
}
