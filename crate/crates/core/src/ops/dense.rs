use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn check<T: Element>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let (n, m) = match weights.shape() {
        &[n, m] => (n, m),
        s => return Err(Error::dim("dense", "weight rank", 2, s.len())),
    };
    if input.len() != n {
        return Err(Error::dim("dense", "input length", n, input.len()));
    }
    Ok((n, m))
}

/// Affine map `x·W + b` of a length-n vector through an n×m weight matrix.
pub fn dense<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, m) = check(input, weights)?;
    if bias.len() != m {
        return Err(Error::dim("dense", "bias length", m, bias.len()));
    }
    let mut out = bias.data().to_vec();
    T::gemm(1, n, m, input.data(), false, weights.data(), false, &mut out, true);
    Tensor::new(&[m], out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_grad<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, m) = check(input, weights)?;
    if upstream.len() != m {
        return Err(Error::dim("dense_grad", "upstream length", m, upstream.len()));
    }
    let mut gx = vec![T::zero(); n];
    T::gemm(n, m, 1, weights.data(), false, upstream.data(), false, &mut gx, false);
    let mut gw = vec![T::zero(); n * m];
    T::gemm(n, 1, m, input.data(), false, upstream.data(), false, &mut gw, false);
    Ok((
        Tensor::new(&[n], gx)?,
        Tensor::new(&[n, m], gw)?,
        Tensor::new(&[m], upstream.data().to_vec())?,
    ))
}

pub fn dense_param_count(n: usize, m: usize) -> usize {
    n * m + m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_param_counts() {
        assert_eq!(dense_param_count(512, 512), 262_656);
        assert_eq!(dense_param_count(512, 4), 2052);
    }

    #[test]
    fn identity_weights() {
        let x = Tensor::<f32>::from_fn(&[4], |i| i as f32 - 1.5);
        let w = Tensor::from_fn(&[4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 });
        let y = dense(&x, &w, &Tensor::zeros(&[4])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn length_mismatch() {
        let err = dense(
            &Tensor::<f32>::zeros(&[3]),
            &Tensor::zeros(&[4, 2]),
            &Tensor::zeros(&[2]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension { axis: "input length", expected: 4, actual: 3, .. }));
    }
}
