//! Trial (importance) distributions and the frozen sample bank.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BayesConstants, Density, Gaussian, Mixture, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialKind {
    /// Single Gaussian moment-matched to `0.5·p(·|H0) + 0.5·p(·|H1)`.
    GaussianFit,
    /// `0.5·p(·|H0) + 0.5·p(·|H1)` itself.
    HypothesisMixture,
    Custom,
}

impl TrialKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialKind::GaussianFit => "gaussian",
            TrialKind::HypothesisMixture => "mixture",
            TrialKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" => Ok(TrialKind::GaussianFit),
            "mixture" => Ok(TrialKind::HypothesisMixture),
            other => Err(Error::Config(format!(
                "unknown trial kind '{other}' (expected 'gaussian' or 'mixture')"
            ))),
        }
    }
}

impl std::fmt::Display for TrialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct TrialDistribution {
    kind: TrialKind,
    density: Density,
}

impl TrialDistribution {
    /// Any density with full support works as a trial; the bank guards `g > 0`.
    pub fn custom(density: Density) -> Self {
        Self {
            kind: TrialKind::Custom,
            density,
        }
    }

    pub fn kind(&self) -> TrialKind {
        self.kind
    }

    pub fn density(&self) -> &Density {
        &self.density
    }
}

fn components(d: &Density, scale: f64) -> (Vec<f64>, Vec<Gaussian>) {
    match d {
        Density::Gaussian(g) => (vec![scale], vec![g.clone()]),
        Density::Mixture(m) => (
            m.weights().iter().map(|w| w * scale).collect(),
            m.components().to_vec(),
        ),
    }
}

pub fn build_trial(scenario: &Scenario, kind: TrialKind) -> Result<TrialDistribution> {
    let (mut weights, mut comps) = components(scenario.h0(), 0.5);
    let (w1, c1) = components(scenario.h1(), 0.5);
    weights.extend(w1);
    comps.extend(c1);
    let even = Density::Mixture(Mixture::new(weights, comps)?);
    let density = match kind {
        TrialKind::HypothesisMixture => even,
        TrialKind::GaussianFit => Density::Gaussian(Gaussian::new(even.mean(), even.covariance())?),
        TrialKind::Custom => {
            return Err(Error::Config(
                "custom trials are built with TrialDistribution::custom".into(),
            ))
        }
    };
    Ok(TrialDistribution { kind, density })
}

/// `N` importance samples with everything the optimizer needs per sample.
///
/// The log densities are kept so the bank can be re-weighted for other cost
/// coefficients without touching the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBank {
    sensor_dims: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
    samples: Vec<f64>,
    log_g: Vec<f64>,
    log_p0: Vec<f64>,
    log_p1: Vec<f64>,
    g_values: Vec<f64>,
    lhat_values: Vec<f64>,
    weights: Vec<f64>,
    constants: BayesConstants,
    seed: u64,
    trial: TrialKind,
}

pub fn draw_bank(
    trial: &TrialDistribution,
    scenario: &Scenario,
    n: usize,
    seed: u64,
) -> Result<SampleBank> {
    if n == 0 {
        return Err(Error::InvalidBank("sample count must be at least 1".into()));
    }
    if trial.density.dim() != scenario.dim() {
        return Err(Error::DimensionMismatch {
            expected: scenario.dim(),
            got: trial.density.dim(),
        });
    }
    let samples = trial.density.sample_flat(n, seed);
    let dim = scenario.dim();
    let logs: Vec<(f64, f64, f64)> = samples
        .par_chunks_exact(dim)
        .map(|y| -> Result<(f64, f64, f64)> {
            Ok((
                trial.density.log_pdf(y)?,
                scenario.h0().log_pdf(y)?,
                scenario.h1().log_pdf(y)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (log_g, rest): (Vec<f64>, Vec<(f64, f64)>) =
        logs.into_iter().map(|(g, p0, p1)| (g, (p0, p1))).unzip();
    let (log_p0, log_p1) = rest.into_iter().unzip();
    SampleBank::from_parts(
        scenario.sensor_dims().to_vec(),
        samples,
        log_g,
        log_p0,
        log_p1,
        scenario.constants(),
        seed,
        trial.kind,
    )
}

impl SampleBank {
    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        sensor_dims: Vec<usize>,
        samples: Vec<f64>,
        log_g: Vec<f64>,
        log_p0: Vec<f64>,
        log_p1: Vec<f64>,
        constants: BayesConstants,
        seed: u64,
        trial: TrialKind,
    ) -> Result<Self> {
        let dim: usize = sensor_dims.iter().sum();
        let n = log_g.len();
        if dim == 0 || samples.len() != n * dim || log_p0.len() != n || log_p1.len() != n || n == 0 {
            return Err(Error::InvalidBank("inconsistent bank dimensions".into()));
        }
        let g_values: Vec<f64> = log_g.iter().map(|l| l.exp()).collect();
        if let Some(i) = g_values.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidBank(format!(
                "trial density at sample {i} is {} (log {}); it must be positive and finite",
                g_values[i], log_g[i]
            )));
        }
        let mut offsets = vec![0];
        for d in &sensor_dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut bank = Self {
            sensor_dims,
            offsets,
            dim,
            samples,
            log_g,
            log_p0,
            log_p1,
            g_values,
            lhat_values: Vec::new(),
            weights: Vec::new(),
            constants,
            seed,
            trial,
        };
        bank.apply_constants(constants)?;
        Ok(bank)
    }

    fn apply_constants(&mut self, constants: BayesConstants) -> Result<()> {
        self.lhat_values = self
            .log_p1
            .iter()
            .zip(&self.log_p0)
            .map(|(l1, l0)| constants.combine(*l1, *l0))
            .collect();
        self.weights = self
            .lhat_values
            .iter()
            .zip(&self.g_values)
            .map(|(l, g)| l / g)
            .collect();
        if let Some(i) = self.weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidBank(format!(
                "importance weight at sample {i} is not finite"
            )));
        }
        self.constants = constants;
        Ok(())
    }

    /// Same samples, `lhat` and weights recomputed for other cost constants.
    pub fn reweighted(&self, constants: BayesConstants) -> Result<Self> {
        let mut bank = self.clone();
        bank.apply_constants(constants)?;
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.g_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_values.is_empty()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensor_dims.len()
    }

    pub fn sensor_dims(&self) -> &[usize] {
        &self.sensor_dims
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial_kind(&self) -> TrialKind {
        self.trial
    }

    pub fn constants(&self) -> BayesConstants {
        self.constants
    }

    /// Full observation `Y_i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    /// Sensor `j`'s component `Y_{ji}`.
    pub fn component(&self, j: usize, i: usize) -> &[f64] {
        &self.sample(i)[self.offsets[j]..self.offsets[j + 1]]
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g_values
    }

    pub fn lhat_values(&self) -> &[f64] {
        &self.lhat_values
    }

    /// `lhat_i / g_i`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_g(&self) -> &[f64] {
        &self.log_g
    }

    pub fn log_p0(&self) -> &[f64] {
        &self.log_p0
    }

    pub fn log_p1(&self) -> &[f64] {
        &self.log_p1
    }

    /// CSV with one row per sample: `y0..y{d-1}, g, lhat, log_g, log_p0, log_p1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("y{k}")).collect();
        header.extend(["g", "lhat", "log_g", "log_p0", "log_p1"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.sample(i).iter().map(f64::to_string).collect();
            for v in [
                self.g_values[i],
                self.lhat_values[i],
                self.log_g[i],
                self.log_p0[i],
                self.log_p1[i],
            ] {
                row.push(v.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a bank written by [`SampleBank::write_csv`]; `lhat` and weights
    /// are recomputed from the stored log densities with the scenario's constants.
    pub fn read_csv<R: Read>(input: R, scenario: &Scenario, seed: u64, trial: TrialKind) -> Result<Self> {
        let dim = scenario.dim();
        let mut reader = csv::Reader::from_reader(input);
        let width = reader.headers()?.len();
        if width != dim + 5 {
            return Err(Error::InvalidBank(format!(
                "expected {} columns for a {dim}-dimensional bank, found {width}",
                dim + 5
            )));
        }
        let (mut samples, mut log_g, mut log_p0, mut log_p1) = (vec![], vec![], vec![], vec![]);
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidBank(format!("row {}: {e}", line + 1)))?;
            samples.extend_from_slice(&values[..dim]);
            log_g.push(values[dim + 2]);
            log_p0.push(values[dim + 3]);
            log_p1.push(values[dim + 4]);
        }
        Self::from_parts(
            scenario.sensor_dims().to_vec(),
            samples,
            log_g,
            log_p0,
            log_p1,
            scenario.constants(),
            seed,
            trial,
        )
    }

    const MAGIC: &'static [u8; 8] = b"MCFBANK1";

    /// Little-endian binary dump: magic, `n`, `dim`, seed, then per sample
    /// `dim` coordinates followed by `log_g, log_p0, log_p1`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(Self::MAGIC)?;
        for v in [self.len() as u64, self.dim as u64, self.seed] {
            out.write_all(&v.to_le_bytes())?;
        }
        for i in 0..self.len() {
            for v in self
                .sample(i)
                .iter()
                .chain([&self.log_g[i], &self.log_p0[i], &self.log_p1[i]])
            {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R, scenario: &Scenario, trial: TrialKind) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::InvalidBank("not a sample bank file".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n = next(&mut input)? as usize;
        let dim = next(&mut input)? as usize;
        let seed = next(&mut input)?;
        if dim != scenario.dim() {
            return Err(Error::DimensionMismatch {
                expected: scenario.dim(),
                got: dim,
            });
        }
        let mut samples = Vec::with_capacity(n * dim);
        let (mut log_g, mut log_p0, mut log_p1) = (vec![], vec![], vec![]);
        let mut buf = [0u8; 8];
        let mut read = |input: &mut R| -> Result<f64> {
            input.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        };
        for _ in 0..n {
            for _ in 0..dim {
                samples.push(read(&mut input)?);
            }
            log_g.push(read(&mut input)?);
            log_p0.push(read(&mut input)?);
            log_p1.push(read(&mut input)?);
        }
        Self::from_parts(
            scenario.sensor_dims().to_vec(),
            samples,
            log_g,
            log_p0,
            log_p1,
            scenario.constants(),
            seed,
            trial,
        )
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}
