//! TOML scenario files.
//!
//! ```toml
//! name = "common-signal-10"
//! sensors = 10
//!
//! [priors]
//! p0 = 0.5
//! p1 = 0.5
//!
//! [costs]
//! c00 = 0.0
//! c01 = 1.0
//! c10 = 1.0
//! c11 = 0.0
//!
//! [h0]
//! kind = "gaussian"
//! mean = 0.0
//! cov = "diagonal: 0.6"
//!
//! [h1]
//! kind = "gaussian"
//! mean = 1.0
//! cov = "equicorrelated: 1.0, 0.4"
//!
//! [fusion]
//! rules = ["and", "or", "k-of-l:4"]
//! ```
//!
//! `mean` is a vector or a scalar broadcast to every coordinate, optionally
//! patched by `mean_set = [[index, value], ...]`. `cov` is an explicit matrix,
//! `"diagonal: v"` or `"equicorrelated: var, cov"`, optionally patched by
//! `cov_blocks = [{ start, size, cov }]`. Indices are 0-based. Mixtures use
//! `kind = "mixture"` and `[[h1.components]]` entries with a `weight` and
//! their own `mean`/`cov`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detector::log_grid;
use crate::error::{Error, Result};
use crate::fusion::FusionRule;
use crate::model::{Costs, Density, Gaussian, Mixture, Priors, Scenario};
use crate::optimizer::{Init, OptimizeOptions, TieBreak};
use crate::sampling::TrialKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub sensors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_dims: Option<Vec<usize>>,
    pub priors: Priors,
    pub costs: Costs,
    pub h0: DensitySpec,
    pub h1: DensitySpec,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovSpec {
    Shorthand(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovBlock {
    pub start: usize,
    pub size: usize,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: MeanSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mean_set: Vec<(usize, f64)>,
    pub cov: CovSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cov_blocks: Vec<CovBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<MeanSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mean_set: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<CovSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cov_blocks: Vec<CovBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    pub rules: Vec<String>,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            rules: vec!["and".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_trials")]
    pub trials: Vec<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_tie")]
    pub tie: String,
}

fn default_trials() -> Vec<String> {
    vec!["mixture".into()]
}
fn default_n() -> usize {
    1000
}
fn default_init() -> String {
    "analytic".into()
}
fn default_max_sweeps() -> usize {
    100
}
fn default_tie() -> String {
    "follow-lhat".into()
}
fn default_m() -> usize {
    10_000
}
fn default_eval_seed() -> u64 {
    1
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            n: default_n(),
            seed: 0,
            init: default_init(),
            max_sweeps: default_max_sweeps(),
            tie: default_tie(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_eval_seed")]
    pub seed: u64,
    #[serde(default)]
    pub on_training: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            m: default_m(),
            seed: default_eval_seed(),
            on_training: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_min")]
    pub min: f64,
    #[serde(default = "default_max")]
    pub max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Explicit ratios; replaces `min`/`max`/`points` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
}

fn default_min() -> f64 {
    1e-2
}
fn default_max() -> f64 {
    1e2
}
fn default_points() -> usize {
    21
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            min: default_min(),
            max: default_max(),
            points: default_points(),
            ratios: None,
        }
    }
}

/// Everything a run needs, resolved and checked.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub rule_names: Vec<String>,
    pub rules: Vec<FusionRule>,
    pub trials: Vec<TrialKind>,
    pub n: usize,
    pub seed: u64,
    pub init: Init,
    pub options: OptimizeOptions,
    pub m: usize,
    pub eval_seed: u64,
    pub on_training: bool,
    pub grid: Vec<f64>,
}

fn at(path: &str, e: Error) -> Error {
    Error::Config(format!("{path}: {e}"))
}

fn expand_mean(spec: &MeanSpec, set: &[(usize, f64)], dim: usize, path: &str) -> Result<Vec<f64>> {
    let mut mean = match spec {
        MeanSpec::Scalar(v) => vec![*v; dim],
        MeanSpec::Vector(v) => {
            if v.len() != dim {
                return Err(at(&format!("{path}.mean"), Error::DimensionMismatch { expected: dim, got: v.len() }));
            }
            v.clone()
        }
    };
    for &(k, v) in set {
        *mean
            .get_mut(k)
            .ok_or_else(|| Error::Config(format!("{path}.mean_set: index {k} out of range for dimension {dim}")))? = v;
    }
    Ok(mean)
}

fn matrix(rows: &[Vec<f64>], size: usize, path: &str) -> Result<DMatrix<f64>> {
    if rows.len() != size || rows.iter().any(|r| r.len() != size) {
        return Err(Error::Config(format!("{path}: expected a {size}x{size} matrix")));
    }
    Ok(DMatrix::from_fn(size, size, |i, j| rows[i][j]))
}

fn shorthand_args(body: &str, count: usize, path: &str) -> Result<Vec<f64>> {
    let args = body
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| Error::Config(format!("{path}: cannot parse numbers in '{body}'")))?;
    if args.len() != count {
        return Err(Error::Config(format!("{path}: expected {count} numbers in '{body}'")));
    }
    Ok(args)
}

fn expand_cov(spec: &CovSpec, blocks: &[CovBlock], dim: usize, path: &str) -> Result<DMatrix<f64>> {
    let cpath = format!("{path}.cov");
    let mut cov = match spec {
        CovSpec::Matrix(rows) => matrix(rows, dim, &cpath)?,
        CovSpec::Shorthand(s) => {
            let (kind, body) = s
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("{cpath}: expected 'diagonal: v' or 'equicorrelated: var, cov'")))?;
            match kind.trim() {
                "diagonal" => {
                    let v = shorthand_args(body, 1, &cpath)?;
                    DMatrix::from_diagonal_element(dim, dim, v[0])
                }
                "equicorrelated" => {
                    let v = shorthand_args(body, 2, &cpath)?;
                    crate::scenarios::equicorrelated(dim, v[0], v[1])
                }
                other => return Err(Error::Config(format!("{cpath}: unknown shorthand '{other}'"))),
            }
        }
    };
    for (k, block) in blocks.iter().enumerate() {
        let bpath = format!("{path}.cov_blocks[{k}]");
        if block.start + block.size > dim {
            return Err(Error::Config(format!("{bpath}: block exceeds dimension {dim}")));
        }
        let m = matrix(&block.cov, block.size, &format!("{bpath}.cov"))?;
        cov.view_mut((block.start, block.start), (block.size, block.size)).copy_from(&m);
    }
    Ok(cov)
}

fn build_gaussian(
    mean: &MeanSpec,
    mean_set: &[(usize, f64)],
    cov: &CovSpec,
    cov_blocks: &[CovBlock],
    dim: usize,
    path: &str,
) -> Result<Gaussian> {
    let mean = expand_mean(mean, mean_set, dim, path)?;
    let cov = expand_cov(cov, cov_blocks, dim, path)?;
    Gaussian::new(mean, cov).map_err(|e| at(&format!("{path}.cov"), e))
}

impl DensitySpec {
    pub fn build(&self, dim: usize, path: &str) -> Result<Density> {
        match self.kind.as_str() {
            "gaussian" => {
                if !self.components.is_empty() {
                    return Err(Error::Config(format!("{path}: a gaussian density takes no components")));
                }
                let (Some(mean), Some(cov)) = (&self.mean, &self.cov) else {
                    return Err(Error::Config(format!("{path}: a gaussian density needs mean and cov")));
                };
                Ok(build_gaussian(mean, &self.mean_set, cov, &self.cov_blocks, dim, path)?.into())
            }
            "mixture" => {
                if self.mean.is_some() || self.cov.is_some() || !self.mean_set.is_empty() || !self.cov_blocks.is_empty() {
                    return Err(Error::Config(format!(
                        "{path}: a mixture density sets mean and cov per component"
                    )));
                }
                if self.components.is_empty() {
                    return Err(Error::Config(format!("{path}: a mixture needs at least one component")));
                }
                let weights = self.components.iter().map(|c| c.weight).collect();
                let comps = self
                    .components
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let cpath = format!("{path}.components[{k}]");
                        build_gaussian(&c.mean, &c.mean_set, &c.cov, &c.cov_blocks, dim, &cpath)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Mixture::new(weights, comps).map_err(|e| at(path, e))?.into())
            }
            other => Err(Error::Config(format!(
                "{path}.kind: unknown density kind '{other}' (expected 'gaussian' or 'mixture')"
            ))),
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        if self.sensors == 0 {
            return Err(Error::Config("sensors: must be at least 1".into()));
        }
        let dims = self.sensor_dims.clone().unwrap_or_else(|| vec![1; self.sensors]);
        if dims.len() != self.sensors {
            return Err(Error::Config(format!(
                "sensor_dims: {} entries for {} sensors",
                dims.len(),
                self.sensors
            )));
        }
        let dim = dims.iter().sum();
        let h0 = self.h0.build(dim, "h0")?;
        let h1 = self.h1.build(dim, "h1")?;
        Scenario::new(self.name.clone(), dims, self.priors, self.costs, h0, h1)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let scenario = self.scenario()?;
        let l = scenario.num_sensors();
        if self.fusion.rules.is_empty() {
            return Err(Error::Config("fusion.rules: at least one rule is required".into()));
        }
        let rules = self
            .fusion
            .rules
            .iter()
            .map(|r| FusionRule::parse(r, l).map_err(|e| at("fusion.rules", e)))
            .collect::<Result<Vec<_>>>()?;
        if self.sampling.trials.is_empty() {
            return Err(Error::Config("sampling.trials: at least one trial kind is required".into()));
        }
        let trials = self
            .sampling
            .trials
            .iter()
            .map(|t| TrialKind::parse(t).map_err(|e| at("sampling.trials", e)))
            .collect::<Result<Vec<_>>>()?;
        if self.sampling.n == 0 {
            return Err(Error::Config("sampling.n: must be at least 1".into()));
        }
        if self.sampling.max_sweeps == 0 {
            return Err(Error::Config("sampling.max_sweeps: must be at least 1".into()));
        }
        if self.evaluation.m == 0 {
            return Err(Error::Config("evaluation.m: must be at least 1".into()));
        }
        let init = Init::parse(&self.sampling.init).map_err(|e| at("sampling.init", e))?;
        let tie = TieBreak::parse(&self.sampling.tie).map_err(|e| at("sampling.tie", e))?;
        let grid = match &self.sweep.ratios {
            Some(r) if r.is_empty() || r.iter().any(|x| !(*x > 0.0 && x.is_finite())) => {
                return Err(Error::Config("sweep.ratios: must be nonempty, positive and finite".into()))
            }
            Some(r) => r.clone(),
            None => log_grid(self.sweep.min, self.sweep.max, self.sweep.points).map_err(|e| at("sweep", e))?,
        };
        Ok(RunConfig {
            scenario,
            rule_names: self.fusion.rules.clone(),
            rules,
            trials,
            n: self.sampling.n,
            seed: self.sampling.seed,
            init,
            options: OptimizeOptions {
                max_sweeps: self.sampling.max_sweeps,
                tie,
                parallel: true,
            },
            m: self.evaluation.m,
            eval_seed: self.evaluation.seed,
            on_training: self.evaluation.on_training,
            grid,
        })
    }
}

pub const EXAMPLE1_TOML: &str = include_str!("../configs/example1.toml");
pub const EXAMPLE2_TOML: &str = include_str!("../configs/example2.toml");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn same_densities(a: &Density, b: &Density) {
        assert_eq!(a.dim(), b.dim());
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.covariance(), b.covariance());
    }

    #[test]
    fn shipped_configs_match_builtin_scenarios() {
        for (text, built) in [
            (EXAMPLE1_TOML, scenarios::example1().unwrap()),
            (EXAMPLE2_TOML, scenarios::example2().unwrap()),
        ] {
            let s = ScenarioFile::parse(text).unwrap().resolve().unwrap().scenario;
            assert_eq!(s.name(), built.name());
            assert_eq!(s.sensor_dims(), built.sensor_dims());
            same_densities(s.h0(), built.h0());
            same_densities(s.h1(), built.h1());
            assert_eq!(s.constants(), built.constants());
        }
    }

    #[test]
    fn example1_run_parameters() {
        let run = ScenarioFile::parse(EXAMPLE1_TOML).unwrap().resolve().unwrap();
        assert_eq!(run.rule_names, ["and", "or", "k-of-l:4"]);
        assert_eq!(run.trials, [TrialKind::GaussianFit, TrialKind::HypothesisMixture]);
        assert_eq!((run.n, run.m, run.grid.len()), (1000, 10_000, 21));
        assert_eq!(run.init, Init::Linear { slope: 3.0, offset: -4.0 });
    }

    fn with(edit: impl Fn(&mut ScenarioFile)) -> Result<RunConfig> {
        let mut file = ScenarioFile::parse(EXAMPLE1_TOML).unwrap();
        edit(&mut file);
        ScenarioFile::parse(&file.to_toml().unwrap())?.resolve()
    }

    #[test]
    fn bad_priors_rejected() {
        let err = with(|f| f.priors = Priors { p0: 0.6, p1: 0.6 }).unwrap_err();
        assert!(err.to_string().contains("priors must sum to 1"), "{err}");
    }

    #[test]
    fn asymmetric_covariance_names_entry() {
        let err = with(|f| {
            let mut rows = vec![vec![0.0; 10]; 10];
            for (i, row) in rows.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            rows[2][5] = 0.3;
            f.h0.cov = Some(CovSpec::Matrix(rows));
        })
        .unwrap_err()
        .to_string();
        assert!(err.contains("h0.cov") && err.contains("(2, 5)"), "{err}");
    }

    #[test]
    fn unknown_key_reports_location() {
        let text = EXAMPLE1_TOML.replace("[priors]", "[priors]\nbogus = 1");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line"), "{err}");
    }

    #[test]
    fn shorthand_and_blocks() {
        let cov = expand_cov(
            &CovSpec::Shorthand("diagonal: 0.6".into()),
            &[CovBlock { start: 1, size: 2, cov: vec![vec![1.0, 0.4], vec![0.4, 1.0]] }],
            4,
            "h1",
        )
        .unwrap();
        assert_eq!(cov[(0, 0)], 0.6);
        assert_eq!(cov[(1, 2)], 0.4);
        assert_eq!(cov[(2, 2)], 1.0);
        assert_eq!(cov[(3, 3)], 0.6);
        assert!(expand_cov(&CovSpec::Shorthand("banded: 1".into()), &[], 2, "h1").is_err());
        assert!(expand_mean(&MeanSpec::Scalar(0.0), &[(4, 1.0)], 4, "h1").is_err());
    }
}
