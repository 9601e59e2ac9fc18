//! Detection scenarios: priors, Bayesian cost coefficients and the two
//! hypothesis-conditional observation densities.
//!
//! All density arithmetic happens in log space. A 100-sensor Gaussian
//! evaluates to roughly `exp(-120)`, and the likelihood combination
//! `a·p(y|H1) − b·p(y|H0)` is formed only after factoring out the larger
//! exponent.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative tolerance used when checking covariance symmetry.
const SYMMETRY_TOL: f64 = 1e-12;

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Lower Cholesky factor stored by row envelope.
///
/// Row `i` holds entries `start[i]..=i`; everything left of `start[i]` is
/// structurally zero. Cholesky factorization preserves the envelope of the
/// input matrix, so block-diagonal covariances stay cheap to apply.
#[derive(Debug, Clone)]
struct EnvelopeFactor {
    start: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeFactor {
    fn from_lower(lower: &DMatrix<f64>, cov: &DMatrix<f64>) -> Self {
        let dim = lower.nrows();
        let mut start = Vec::with_capacity(dim);
        let mut offset = Vec::with_capacity(dim + 1);
        let mut values = Vec::new();
        for i in 0..dim {
            let first = (0..=i).find(|&k| cov[(i, k)] != 0.0).unwrap_or(i);
            start.push(first);
            offset.push(values.len());
            for k in first..=i {
                values.push(lower[(i, k)]);
            }
        }
        offset.push(values.len());
        Self {
            start,
            offset,
            values,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[self.offset[i]..self.offset[i + 1]]
    }

    /// Solves `L z = x` in place.
    fn forward_substitute(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            let row = self.row(i);
            let first = self.start[i];
            let (off_diag, diag) = row.split_at(row.len() - 1);
            let mut acc = x[i];
            for (l, z) in off_diag.iter().zip(&x[first..i]) {
                acc -= l * z;
            }
            x[i] = acc / diag[0];
        }
    }

    /// Computes `L z` into `out`.
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let first = self.start[i];
            *slot = self
                .row(i)
                .iter()
                .zip(&z[first..=i])
                .map(|(l, v)| l * v)
                .sum();
        }
    }

    fn log_diag_sum(&self) -> f64 {
        (0..self.start.len())
            .map(|i| self.row(i).last().copied().unwrap_or(1.0).ln())
            .sum()
    }
}

/// Multivariate normal density, factorized once at construction.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    factor: EnvelopeFactor,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::InvalidScenario("gaussian dimension must be positive".into()));
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cov.nrows().max(cov.ncols()),
            });
        }
        if let Some(bad) = mean.iter().position(|m| !m.is_finite()) {
            return Err(Error::InvalidScenario(format!("mean entry {bad} is not finite")));
        }
        for row in 0..dim {
            for col in row..dim {
                let upper = cov[(row, col)];
                let lower = cov[(col, row)];
                if !upper.is_finite() {
                    return Err(Error::InvalidScenario(format!(
                        "covariance entry ({row}, {col}) is not finite"
                    )));
                }
                let scale = upper.abs().max(lower.abs()).max(1.0);
                if (upper - lower).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric {
                        row,
                        col,
                        upper,
                        lower,
                    });
                }
            }
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let factor = EnvelopeFactor::from_lower(&chol.l(), &cov);
        let log_norm = -0.5 * dim as f64 * LN_2PI - factor.log_diag_sum();
        Ok(Self {
            mean,
            cov,
            factor,
            log_norm,
        })
    }

    /// Independent coordinates with a common variance.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let dim = mean.len();
        Self::new(mean, DMatrix::from_diagonal_element(dim, dim, variance))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_pdf(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        let mut buf: Vec<f64> = y.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        Ok(self.log_pdf_centered(&mut buf))
    }

    fn log_pdf_centered(&self, centered: &mut [f64]) -> f64 {
        self.factor.forward_substitute(centered);
        let quad: f64 = centered.iter().map(|z| z * z).sum();
        self.log_norm - 0.5 * quad
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.factor.apply(&z, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o += m;
        }
    }
}

/// Finite Gaussian mixture.
#[derive(Debug, Clone)]
pub struct Mixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidMixture(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMixture(format!(
                "weight {i} is negative or not finite"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let dim = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn log_pdf_unchecked(&self, y: &[f64]) -> f64 {
        let mut buf = vec![0.0; y.len()];
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.log_weights)
            .filter(|(_, lw)| lw.is_finite())
            .map(|(c, lw)| {
                for ((b, v), m) in buf.iter_mut().zip(y).zip(c.mean()) {
                    *b = v - m;
                }
                lw + c.log_pdf_centered(&mut buf)
            })
            .collect();
        log_sum_exp(&terms)
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            cumulative += w;
            if u < cumulative {
                return i;
            }
        }
        // u landed in the rounding gap above the cumulative total
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

/// Observation density under one hypothesis.
#[derive(Debug, Clone)]
pub enum Density {
    Gaussian(Gaussian),
    Mixture(Mixture),
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::Gaussian(g) => g.dim(),
            Density::Mixture(m) => m.dim(),
        }
    }

    /// Natural log of the density at `y`.
    pub fn log_pdf(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        Ok(match self {
            Density::Gaussian(g) => {
                let mut buf: Vec<f64> = y.iter().zip(g.mean()).map(|(v, m)| v - m).collect();
                g.log_pdf_centered(&mut buf)
            }
            Density::Mixture(m) => m.log_pdf_unchecked(y),
        })
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Density::Gaussian(g) => g.mean().to_vec(),
            Density::Mixture(m) => {
                let mut mean = vec![0.0; m.dim()];
                for (w, c) in m.weights.iter().zip(&m.components) {
                    for (acc, v) in mean.iter_mut().zip(c.mean()) {
                        *acc += w * v;
                    }
                }
                mean
            }
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Density::Gaussian(g) => g.covariance().clone(),
            Density::Mixture(m) => {
                let dim = m.dim();
                let mut second = DMatrix::zeros(dim, dim);
                for (w, c) in m.weights.iter().zip(&m.components) {
                    let mu = nalgebra::DVector::from_column_slice(c.mean());
                    second += (c.covariance() + &mu * mu.transpose()) * *w;
                }
                let mu = nalgebra::DVector::from_vec(self.mean());
                second - &mu * mu.transpose()
            }
        }
    }

    /// Draws one observation into `out`.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Density::Gaussian(g) => g.draw(rng, out),
            Density::Mixture(m) => {
                let k = m.pick(rng);
                m.components[k].draw(rng, out);
            }
        }
    }

    /// `count` i.i.d. draws, row-major (`count × dim`), deterministic in `seed`.
    pub fn sample_flat(&self, count: usize, seed: u64) -> Vec<f64> {
        let dim = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![0.0; count * dim];
        for row in out.chunks_exact_mut(dim) {
            self.draw_into(&mut rng, row);
        }
        out
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample_flat(count, seed)
            .chunks_exact(self.dim())
            .map(<[f64]>::to_vec)
            .collect()
    }
}

impl From<Gaussian> for Density {
    fn from(g: Gaussian) -> Self {
        Density::Gaussian(g)
    }
}

impl From<Mixture> for Density {
    fn from(m: Mixture) -> Self {
        Density::Mixture(m)
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Priors {
    pub p0: f64,
    pub p1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Costs {
    pub c00: f64,
    pub c01: f64,
    pub c10: f64,
    pub c11: f64,
}

impl Costs {
    /// Zero cost for correct decisions, unit miss cost and false-alarm cost `ratio`.
    pub fn with_ratio(ratio: f64) -> Self {
        Self {
            c00: 0.0,
            c01: 1.0,
            c10: ratio,
            c11: 0.0,
        }
    }
}

/// Constants of the simplified cost `c + ∫ I_Ω0 (a·p1 − b·p0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BayesConstants {
    pub fn new(priors: Priors, costs: Costs) -> Result<Self> {
        if !(costs.c01 > costs.c11) {
            return Err(Error::InvalidScenario(format!(
                "C01 ({}) must exceed C11 ({})",
                costs.c01, costs.c11
            )));
        }
        if !(costs.c10 > costs.c00) {
            return Err(Error::InvalidScenario(format!(
                "C10 ({}) must exceed C00 ({})",
                costs.c10, costs.c00
            )));
        }
        Ok(Self {
            a: priors.p1 * (costs.c01 - costs.c11),
            b: priors.p0 * (costs.c10 - costs.c00),
            c: costs.c10 * priors.p0 + costs.c11 * priors.p1,
        })
    }

    /// `a·exp(log_p1) − b·exp(log_p0)` without intermediate underflow.
    pub fn combine(&self, log_p1: f64, log_p0: f64) -> f64 {
        let t1 = self.a.ln() + log_p1;
        let t0 = self.b.ln() + log_p0;
        let m = t1.max(t0);
        if m == f64::NEG_INFINITY {
            return 0.0;
        }
        m.exp() * ((t1 - m).exp() - (t0 - m).exp())
    }
}

/// A complete binary detection problem over `L` sensors.
#[derive(Debug, Clone)]
pub struct Scenario {
    name: String,
    sensor_dims: Vec<usize>,
    offsets: Vec<usize>,
    priors: Priors,
    costs: Costs,
    h0: Density,
    h1: Density,
    constants: BayesConstants,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        sensor_dims: Vec<usize>,
        priors: Priors,
        costs: Costs,
        h0: Density,
        h1: Density,
    ) -> Result<Self> {
        if sensor_dims.is_empty() {
            return Err(Error::InvalidScenario("at least one sensor is required".into()));
        }
        if let Some(j) = sensor_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidScenario(format!(
                "sensor {j} has zero observation dimension"
            )));
        }
        for (label, p) in [("p0", priors.p0), ("p1", priors.p1)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidScenario(format!("prior {label} = {p} is outside [0, 1]")));
            }
        }
        if (priors.p0 + priors.p1 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidScenario(format!(
                "priors must sum to 1 (p0 + p1 = {})",
                priors.p0 + priors.p1
            )));
        }
        for (label, c) in [
            ("C00", costs.c00),
            ("C01", costs.c01),
            ("C10", costs.c10),
            ("C11", costs.c11),
        ] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "cost {label} = {c} must be a nonnegative number"
                )));
            }
        }
        let constants = BayesConstants::new(priors, costs)?;
        let total: usize = sensor_dims.iter().sum();
        for (label, d) in [("h0", &h0), ("h1", &h1)] {
            if d.dim() != total {
                return Err(Error::InvalidScenario(format!(
                    "{label} density has dimension {} but sensors observe {total} coordinates",
                    d.dim()
                )));
            }
        }
        let mut offsets = Vec::with_capacity(sensor_dims.len() + 1);
        offsets.push(0);
        for d in &sensor_dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Self {
            name: name.into(),
            sensor_dims,
            offsets,
            priors,
            costs,
            h0,
            h1,
            constants,
        })
    }

    /// Scenario with scalar observations at every sensor.
    pub fn scalar(
        name: impl Into<String>,
        priors: Priors,
        costs: Costs,
        h0: Density,
        h1: Density,
    ) -> Result<Self> {
        let dims = vec![1; h0.dim()];
        Self::new(name, dims, priors, costs, h0, h1)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_sensors(&self) -> usize {
        self.sensor_dims.len()
    }

    pub fn sensor_dims(&self) -> &[usize] {
        &self.sensor_dims
    }

    /// Coordinate range of sensor `j` inside a full observation.
    pub fn sensor_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn priors(&self) -> Priors {
        self.priors
    }

    pub fn costs(&self) -> Costs {
        self.costs
    }

    pub fn h0(&self) -> &Density {
        &self.h0
    }

    pub fn h1(&self) -> &Density {
        &self.h1
    }

    pub fn constants(&self) -> BayesConstants {
        self.constants
    }

    /// Same densities, equal priors, costs `C00 = C11 = 0`, `C01 = 1`, `C10 = ratio`.
    /// The resulting `b / a` equals `ratio`.
    pub fn with_cost_ratio(&self, ratio: f64) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.sensor_dims.clone(),
            Priors { p0: 0.5, p1: 0.5 },
            Costs::with_ratio(ratio),
            self.h0.clone(),
            self.h1.clone(),
        )
    }

    pub fn with_costs(&self, priors: Priors, costs: Costs) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.sensor_dims.clone(),
            priors,
            costs,
            self.h0.clone(),
            self.h1.clone(),
        )
    }

    /// `a·p(y|H1) − b·p(y|H0)`.
    pub fn lhat(&self, y: &[f64]) -> Result<f64> {
        let l1 = self.h1.log_pdf(y)?;
        let l0 = self.h0.log_pdf(y)?;
        Ok(self.constants.combine(l1, l0))
    }

    /// `ln p(y|H1) − ln p(y|H0)`.
    pub fn log_likelihood_ratio(&self, y: &[f64]) -> Result<f64> {
        Ok(self.h1.log_pdf(y)? - self.h0.log_pdf(y)?)
    }

    /// Bayes risk for a system with the given decision probabilities.
    pub fn bayes_cost(&self, pf: f64, pd: f64) -> f64 {
        let Priors { p0, p1 } = self.priors;
        let Costs { c00, c01, c10, c11 } = self.costs;
        c00 * p0 * (1.0 - pf) + c01 * p1 * (1.0 - pd) + c10 * p0 * pf + c11 * p1 * pd
    }
}

/// `a = P1(C01 − C11)`, `b = P0(C10 − C00)`, `c = C10·P0 + C11·P1`.
pub fn bayes_constants(scenario: &Scenario) -> BayesConstants {
    scenario.constants()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use approx::assert_relative_eq;

    fn scalar(mean: f64, var: f64) -> Density {
        Gaussian::isotropic(vec![mean], var).unwrap().into()
    }

    fn simple_scenario(priors: Priors, costs: Costs) -> Result<Scenario> {
        Scenario::scalar("t", priors, costs, scalar(0.0, 0.6), scalar(1.0, 1.0))
    }

    #[test]
    fn bayes_constants_equal_priors() {
        let k = BayesConstants::new(
            Priors { p0: 0.5, p1: 0.5 },
            Costs { c00: 0.0, c01: 1.0, c10: 1.0, c11: 0.0 },
        )
        .unwrap();
        assert_eq!((k.a, k.b, k.c), (0.5, 0.5, 0.5));
    }

    #[test]
    fn bayes_constants_skewed() {
        let s = simple_scenario(
            Priors { p0: 0.8, p1: 0.2 },
            Costs { c00: 0.0, c01: 1.0, c10: 2.0, c11: 0.0 },
        )
        .unwrap();
        let k = bayes_constants(&s);
        assert_relative_eq!(k.a, 0.2);
        assert_relative_eq!(k.b, 1.6);
        assert_relative_eq!(k.c, 1.6);
    }

    #[test]
    fn bayes_constants_reject_bad_ordering() {
        let err = simple_scenario(
            Priors { p0: 0.5, p1: 0.5 },
            Costs { c00: 0.0, c01: 1.0, c10: 1.0, c11: 1.0 },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidScenario(_)));
    }

    #[test]
    fn priors_must_sum_to_one() {
        let err = simple_scenario(Priors { p0: 0.6, p1: 0.6 }, Costs::with_ratio(1.0)).unwrap_err();
        assert!(err.to_string().contains("priors must sum to 1"));
    }

    #[test]
    fn standard_normal_at_zero() {
        let d = scalar(0.0, 1.0);
        assert_relative_eq!(d.log_pdf(&[0.0]).unwrap(), -0.918_938_533_204_672_8, epsilon = 1e-15);
    }

    #[test]
    fn example1_h0_at_origin() {
        let s = scenarios::example1().unwrap();
        let got = s.h0().log_pdf(&[0.0; 10]).unwrap();
        let want = -5.0 * (2.0 * std::f64::consts::PI * 0.6).ln();
        assert_relative_eq!(got, want, max_relative = 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = scalar(0.0, 1.0);
        assert!(matches!(
            d.log_pdf(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn asymmetric_covariance_names_entry() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 1.0]);
        match Gaussian::new(vec![0.0, 0.0], cov) {
            Err(Error::NotSymmetric { row: 0, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Gaussian::new(vec![0.0, 0.0], cov),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn mixture_weights_validated() {
        let c = || Gaussian::isotropic(vec![0.0], 1.0).unwrap();
        assert!(Mixture::new(vec![0.5, 0.4], vec![c(), c()]).is_err());
        assert!(Mixture::new(vec![1.2, -0.2], vec![c(), c()]).is_err());
        assert!(Mixture::new(vec![0.5, 0.5], vec![c(), c()]).is_ok());
    }

    #[test]
    fn example2_mixture_matches_naive_sum() {
        let s = scenarios::example2().unwrap();
        let Density::Mixture(m) = s.h1() else {
            panic!("example 2 H1 is a mixture")
        };
        let y: Vec<f64> = (0..100).map(|i| ((i * 37 % 17) as f64 - 8.0) / 10.0).collect();
        // naive oracle: explicit inverse and determinant per component, plain sum of pdfs
        let naive: f64 = m
            .weights()
            .iter()
            .zip(m.components())
            .map(|(w, c)| {
                let cov = c.covariance();
                let inv = cov.clone().try_inverse().unwrap();
                let diff = nalgebra::DVector::from_iterator(
                    100,
                    y.iter().zip(c.mean()).map(|(a, b)| a - b),
                );
                let quad = (diff.transpose() * inv * &diff)[(0, 0)];
                let det = cov.determinant();
                w * (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(100) * det).sqrt()
            })
            .sum();
        let got = s.h1().log_pdf(&y).unwrap();
        assert_relative_eq!(got, naive.ln(), max_relative = 1e-10);
    }

    #[test]
    fn gaussian_matches_quadratic_form() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let mean = vec![0.5, -1.0, 2.0];
        let g = Gaussian::new(mean.clone(), cov.clone()).unwrap();
        let inv = cov.clone().try_inverse().unwrap();
        let log_det = cov.determinant().ln();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
            let d = nalgebra::DVector::from_iterator(3, y.iter().zip(&mean).map(|(a, b)| a - b));
            let quad = (d.transpose() * &inv * &d)[(0, 0)];
            let want = -0.5 * (3.0 * LN_2PI + log_det + quad);
            assert_relative_eq!(g.log_pdf(&y).unwrap(), want, max_relative = 1e-12);
        }
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
        h * (0.5 * f(lo) + inner + 0.5 * f(hi))
    }

    #[test]
    fn densities_integrate_to_one_1d() {
        let mix: Density = Mixture::new(
            vec![0.3, 0.7],
            vec![
                Gaussian::isotropic(vec![-1.0], 0.5).unwrap(),
                Gaussian::isotropic(vec![2.0], 1.5).unwrap(),
            ],
        )
        .unwrap()
        .into();
        for d in [scalar(0.0, 0.6), scalar(1.0, 1.05), mix] {
            let total = trapezoid(|x| d.log_pdf(&[x]).unwrap().exp(), -20.0, 20.0, 20_000);
            assert!((total - 1.0).abs() < 1e-6, "integral {total}");
        }
    }

    #[test]
    fn densities_integrate_to_one_2d() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let g: Density = Gaussian::new(vec![1.0, 1.0], cov).unwrap().into();
        let n = 800;
        let (lo, hi) = (-9.0, 11.0);
        let h = (hi - lo) / n as f64;
        let w = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
        let mut total = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let p = [lo + i as f64 * h, lo + j as f64 * h];
                total += w(i) * w(j) * g.log_pdf(&p).unwrap().exp();
            }
        }
        total *= h * h;
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn lhat_symmetric_point_is_zero() {
        let s = Scenario::scalar(
            "sym",
            Priors { p0: 0.5, p1: 0.5 },
            Costs::with_ratio(1.0),
            scalar(-1.0, 1.0),
            scalar(1.0, 1.0),
        )
        .unwrap();
        assert_eq!(s.lhat(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn lhat_positive_at_h1_mean_example1() {
        let s = scenarios::example1().unwrap();
        let y = [1.0; 10];
        let oracle = 0.5 * s.h1().log_pdf(&y).unwrap().exp() - 0.5 * s.h0().log_pdf(&y).unwrap().exp();
        let got = s.lhat(&y).unwrap();
        assert!(got > 0.0);
        assert_relative_eq!(got, oracle, max_relative = 1e-12);
    }

    #[test]
    fn lhat_scales_with_costs() {
        let base = scenarios::example1().unwrap();
        let scaled = base
            .with_costs(
                Priors { p0: 0.5, p1: 0.5 },
                Costs { c00: 0.0, c01: 10.0, c10: 10.0, c11: 0.0 },
            )
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let y: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..2.0)).collect();
            assert_relative_eq!(
                scaled.lhat(&y).unwrap(),
                10.0 * base.lhat(&y).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn lhat_survives_underflow() {
        let s = scenarios::example2().unwrap();
        let y = vec![3.0; 100];
        let v = s.lhat(&y).unwrap();
        assert!(v.is_finite());
        assert!(s.h0().log_pdf(&y).unwrap() < -400.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = scalar(1.0, 0.4);
        assert_eq!(d.sample(3, 42), d.sample(3, 42));
        assert_ne!(d.sample(3, 42), d.sample(3, 43));
    }

    #[test]
    fn sample_moments() {
        let d = scalar(1.0, 0.4);
        let xs = d.sample_flat(100_000, 5);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 0.4).abs() < 0.02, "var {var}");
    }

    #[test]
    fn degenerate_mixture_draws_first_component() {
        let d: Density = Mixture::new(
            vec![1.0, 0.0],
            vec![
                Gaussian::isotropic(vec![-100.0], 1.0).unwrap(),
                Gaussian::isotropic(vec![100.0], 1.0).unwrap(),
            ],
        )
        .unwrap()
        .into();
        assert!(d.sample_flat(1000, 9).iter().all(|x| *x < 0.0));
    }

    #[test]
    fn correlated_sampling_recovers_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let d: Density = Gaussian::new(vec![0.0, 0.0], cov).unwrap().into();
        let xs = d.sample_flat(100_000, 17);
        let cross: f64 = xs.chunks_exact(2).map(|r| r[0] * r[1]).sum::<f64>() / 100_000.0;
        assert!((cross - 0.4).abs() < 0.02, "cross moment {cross}");
    }

    #[test]
    fn mixture_moments() {
        let d: Density = Mixture::new(
            vec![0.5, 0.5],
            vec![
                Gaussian::isotropic(vec![0.0], 0.6).unwrap(),
                Gaussian::isotropic(vec![1.0], 1.0).unwrap(),
            ],
        )
        .unwrap()
        .into();
        assert_relative_eq!(d.mean()[0], 0.5);
        assert_relative_eq!(d.covariance()[(0, 0)], 1.05, max_relative = 1e-14);
    }
}
