//! Central-difference gradient checking.
//!
//! Everything here runs in `f64`: a perturbation of 1e-3 on an `f32` loss
//! would leave only three or four significant digits in the difference
//! quotient.

use crate::tensor::Tensor;

/// Denominator floor for relative errors, so entries where both gradients
/// are at round-off level do not dominate the report.
pub const DEFAULT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Central difference `(f(x + eps·e_i) - f(x - eps·e_i)) / 2eps`.
pub fn numeric_partial<F>(f: &F, x: &mut Tensor<f64>, i: usize, eps: f64) -> f64
where
    F: Fn(&Tensor<f64>) -> f64,
{
    let orig = x.data()[i];
    x.data_mut()[i] = orig + eps;
    let plus = f(x);
    x.data_mut()[i] = orig - eps;
    let minus = f(x);
    x.data_mut()[i] = orig;
    (plus - minus) / (2.0 * eps)
}

/// Compares `analytic` against central differences of `f` at `x` on the
/// given flat indices and returns the worst relative error.
pub fn grad_check_at<F>(
    f: F,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    eps: f64,
    indices: &[usize],
    floor: f64,
) -> GradCheckReport
where
    F: Fn(&Tensor<f64>) -> f64,
{
    assert_eq!(x.shape(), analytic.shape(), "analytic gradient shape");
    let mut probe = x.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: indices.first().copied().unwrap_or(0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for &i in indices {
        let n = numeric_partial(&f, &mut probe, i, eps);
        let a = analytic.data()[i];
        let err = relative_error(a, n, floor);
        if err > report.max_relative_error || report.checked == 0 {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = n;
        }
        report.checked += 1;
    }
    report
}

/// Checks every entry of `x`; returns the worst relative error.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, analytic: &Tensor<f64>, eps: f64) -> f64
where
    F: Fn(&Tensor<f64>) -> f64,
{
    let all: Vec<usize> = (0..x.len()).collect();
    grad_check_at(f, x, analytic, eps, &all, DEFAULT_FLOOR).max_relative_error
}
