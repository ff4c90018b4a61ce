use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

/// SplitMix64 finalizer; used as a counter-based generator so element `i`
/// of a mask depends only on `(seed, i)`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(seed: u64, i: u64) -> f64 {
    let bits = splitmix64(seed ^ splitmix64(i));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Per-element multiplier: 0 for dropped elements, `1/(1-rate)` for survivors.
pub fn dropout_scale<T: Element>(len: usize, rate: f64, seed: u64) -> Result<Vec<T>> {
    check_rate(rate)?;
    let keep = T::from_f64(1.0 / (1.0 - rate));
    Ok((0..len as u64)
        .map(|i| if unit(seed, i) < rate { T::zero() } else { keep })
        .collect())
}

/// Inverted dropout. Eval mode returns the input unchanged.
pub fn dropout<T: Element>(input: &Tensor<T>, rate: f64, mode: Mode, seed: u64) -> Result<Tensor<T>> {
    check_rate(rate)?;
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(input.clone());
    }
    let scale = dropout_scale::<T>(input.len(), rate, seed)?;
    let mut out = input.clone();
    for (o, s) in out.data_mut().iter_mut().zip(scale) {
        *o = *o * s;
    }
    Ok(out)
}
