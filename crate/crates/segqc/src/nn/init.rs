//! Weight initialization.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Scalar;

/// Kaiming (He) normal initialization: std = sqrt(2 / fan_in).
pub fn kaiming_normal<F: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ArrayD<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid std");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || F::from_f64(dist.sample(rng)))
}

/// Normal initialization with the given standard deviation.
pub fn normal<F: Scalar>(shape: &[usize], std: f64, rng: &mut impl Rng) -> ArrayD<F> {
    let dist = Normal::new(0.0, std).expect("valid std");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || F::from_f64(dist.sample(rng)))
}

pub fn constant<F: Scalar>(shape: &[usize], v: f64) -> ArrayD<F> {
    ArrayD::from_elem(IxDyn(shape), F::from_f64(v))
}
