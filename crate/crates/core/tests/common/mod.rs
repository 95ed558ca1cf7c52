#![allow(dead_code)]

pub mod pipeline;

use hmiway::nn::Parameterized;
use rand::seq::index::sample;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Relative error used by all gradient checks.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central-difference check of `analytic` against `loss` on `coords`
/// parameter indices (all of them when `max_coords` covers the vector).
/// Returns the worst relative error.
pub fn check_param_gradient<M: Parameterized, R: Rng>(
    module: &mut M,
    analytic: &[f64],
    mut loss: impl FnMut(&M) -> f64,
    max_coords: usize,
    rng: &mut R,
) -> f64 {
    let base = module.params().to_vec();
    assert_eq!(base.len(), analytic.len());
    let coords: Vec<usize> = if max_coords >= base.len() {
        (0..base.len()).collect()
    } else {
        sample(rng, base.len(), max_coords).into_vec()
    };
    let mut worst: f64 = 0.0;
    for i in coords {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        module.set_params(&p).unwrap();
        let up = loss(module);
        p[i] = base[i] - FD_STEP;
        module.set_params(&p).unwrap();
        let down = loss(module);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    module.set_params(&base).unwrap();
    worst
}
