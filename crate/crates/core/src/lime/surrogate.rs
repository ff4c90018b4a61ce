//! Proximity kernel and weighted ridge surrogate.

use crate::error::{Error, Result};

/// Cosine distance from a binary mask to the all-ones vector of the same
/// length. `None` for the zero mask, where cosine is undefined.
pub fn cosine_distance_to_ones(mask: &[bool]) -> Option<f64> {
    let on = mask.iter().filter(|&&b| b).count();
    if on == 0 {
        return None;
    }
    // m·1 = on, |m| = sqrt(on), |1| = sqrt(S), so cos = sqrt(on / S); this
    // form is exactly 0 for the all-ones mask.
    Some(1.0 - (on as f64 / mask.len() as f64).sqrt())
}

/// `exp(-d² / width²)`; `None` for the zero mask.
pub fn kernel_weight(mask: &[bool], kernel_width: f64) -> Option<f64> {
    cosine_distance_to_ones(mask).map(|d| (-d * d / (kernel_width * kernel_width)).exp())
}

/// Kernel weights for a mask set. Zero masks get the smallest positive
/// weight among the others; their indices are returned alongside.
pub fn kernel_weights(masks: &[Vec<bool>], kernel_width: f64) -> (Vec<f64>, Vec<usize>) {
    let raw: Vec<Option<f64>> = masks.iter().map(|m| kernel_weight(m, kernel_width)).collect();
    let floor = raw
        .iter()
        .flatten()
        .copied()
        .filter(|&w| w > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { f64::MIN_POSITIVE };
    let zero: Vec<usize> = raw.iter().enumerate().filter(|(_, w)| w.is_none()).map(|(i, _)| i).collect();
    (raw.into_iter().map(|w| w.unwrap_or(floor)).collect(), zero)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Weighted R²; `None` when the targets have zero weighted variance.
    pub fidelity: Option<f64>,
}

impl Surrogate {
    pub fn predict(&self, mask: &[bool]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(mask)
                .filter(|(_, &on)| on)
                .map(|(b, _)| b)
                .sum::<f64>()
    }
}

/// In-place Cholesky factorisation of a dense SPD matrix (lower triangle).
fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > scale * 1e-12) {
            return Err(Error::Numeric(
                "surrogate normal equations are singular; use ridge_lambda > 0".into(),
            ));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Minimises `Σ wᵢ (yᵢ − β₀ − βᵀmᵢ)² + λ‖β‖²` with the intercept left
/// unpenalised. Centering by the weighted means removes β₀ from the system,
/// which is then solved by Cholesky.
pub fn fit_surrogate(masks: &[Vec<bool>], targets: &[f64], weights: &[f64], lambda: f64) -> Result<Surrogate> {
    let n = masks.len();
    if n == 0 || targets.len() != n || weights.len() != n {
        return Err(Error::Parameter(format!(
            "surrogate needs equal non-zero sample counts: {n} masks, {} targets, {} weights",
            targets.len(),
            weights.len()
        )));
    }
    let s = masks[0].len();
    if masks.iter().any(|m| m.len() != s) {
        return Err(Error::Parameter("masks differ in length".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter("sample weights and lambda must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Parameter("sample weights sum to zero".into()));
    }
    if targets.iter().all(|&y| y == targets[0]) {
        return Ok(Surrogate {
            coefficients: vec![0.0; s],
            intercept: targets[0],
            fidelity: None,
        });
    }

    let x = |i: usize, j: usize| if masks[i][j] { 1.0 } else { 0.0 };
    let x_mean: Vec<f64> = (0..s).map(|j| (0..n).map(|i| weights[i] * x(i, j)).sum::<f64>() / total).collect();
    let y_mean = (0..n).map(|i| weights[i] * targets[i]).sum::<f64>() / total;

    let mut a = vec![0.0; s * s];
    let mut rhs = vec![0.0; s];
    let mut xc = vec![0.0; s];
    for i in 0..n {
        for j in 0..s {
            xc[j] = x(i, j) - x_mean[j];
        }
        let yc = targets[i] - y_mean;
        for j in 0..s {
            let wx = weights[i] * xc[j];
            rhs[j] += wx * yc;
            for k in 0..=j {
                a[j * s + k] += wx * xc[k];
            }
        }
    }
    for j in 0..s {
        a[j * s + j] += lambda;
        for k in 0..j {
            a[k * s + j] = a[j * s + k];
        }
    }
    cholesky(&mut a, s)?;
    cholesky_solve(&a, s, &mut rhs);
    let intercept = y_mean - x_mean.iter().zip(&rhs).map(|(m, b)| m * b).sum::<f64>();

    let surrogate = Surrogate {
        coefficients: rhs,
        intercept,
        fidelity: None,
    };
    let ss_tot: f64 = (0..n).map(|i| weights[i] * (targets[i] - y_mean).powi(2)).sum();
    let ss_res: f64 = (0..n)
        .map(|i| weights[i] * (targets[i] - surrogate.predict(&masks[i])).powi(2))
        .sum();
    Ok(Surrogate {
        fidelity: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        ..surrogate
    })
}
