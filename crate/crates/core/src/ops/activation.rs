use crate::tensor::{Element, Tensor};

pub fn relu<T: Element>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// `1[x > 0]`; the kink at zero takes the left derivative.
pub fn relu_grad<T: Element>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_grad<T: Element>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() - s)
}

pub fn relu_tensor<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(relu)
}

pub fn sigmoid_tensor<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// Upstream gradient gated by `1[out > 0]`, where `out` is the ReLU output.
pub fn relu_backward<T: Element>(out: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
    let mut g = upstream.clone();
    for (gv, &o) in g.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}
