//! Built-in scenarios: a common signal `s ~ N(1, 0.4)` observed through
//! independent `N(0, 0.6)` noise, which makes sensor observations dependent
//! under H1.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{Costs, Density, Gaussian, Mixture, Priors, Scenario};

pub const SIGNAL_MEAN: f64 = 1.0;
pub const SIGNAL_VAR: f64 = 0.4;
pub const NOISE_VAR: f64 = 0.6;

/// Ten sensors all observing the same signal.
pub fn example1() -> Result<Scenario> {
    common_signal(10)
}

/// `sensors` scalar sensors observing one shared signal.
pub fn common_signal(sensors: usize) -> Result<Scenario> {
    let h0 = Gaussian::isotropic(vec![0.0; sensors], NOISE_VAR)?;
    let cov = equicorrelated(sensors, SIGNAL_VAR + NOISE_VAR, SIGNAL_VAR);
    let h1 = Gaussian::new(vec![SIGNAL_MEAN; sensors], cov)?;
    Scenario::scalar(
        format!("common-signal-{sensors}"),
        Priors { p0: 0.5, p1: 0.5 },
        Costs::with_ratio(1.0),
        h0.into(),
        h1.into(),
    )
}

/// 100 sensors on 50 two-sensor paths; under H1 the signal crosses exactly
/// one path, chosen uniformly.
pub fn example2() -> Result<Scenario> {
    paths(50)
}

pub fn paths(pairs: usize) -> Result<Scenario> {
    let dim = 2 * pairs;
    let h0 = Gaussian::isotropic(vec![0.0; dim], NOISE_VAR)?;
    let components = (0..pairs)
        .map(|p| {
            let mut mean = vec![0.0; dim];
            mean[2 * p] = SIGNAL_MEAN;
            mean[2 * p + 1] = SIGNAL_MEAN;
            let mut cov = DMatrix::from_diagonal_element(dim, dim, NOISE_VAR);
            cov[(2 * p, 2 * p)] = SIGNAL_VAR + NOISE_VAR;
            cov[(2 * p + 1, 2 * p + 1)] = SIGNAL_VAR + NOISE_VAR;
            cov[(2 * p, 2 * p + 1)] = SIGNAL_VAR;
            cov[(2 * p + 1, 2 * p)] = SIGNAL_VAR;
            Gaussian::new(mean, cov)
        })
        .collect::<Result<Vec<_>>>()?;
    let h1 = Mixture::new(vec![1.0 / pairs as f64; pairs], components)?;
    Scenario::scalar(
        format!("paths-{pairs}"),
        Priors { p0: 0.5, p1: 0.5 },
        Costs::with_ratio(1.0),
        h0.into(),
        Density::Mixture(h1),
    )
}

/// `var` on the diagonal, `cov` everywhere else.
pub fn equicorrelated(dim: usize, var: f64, cov: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| if i == j { var } else { cov })
}
