//! Deploying trained labels to new observations, Monte Carlo evaluation of
//! the fused system, the centralized likelihood-ratio baseline, and ROC sweeps.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionRule, LocalVote};
use crate::model::Scenario;
use crate::optimizer::{optimize, Init, OptimizeOptions, OptimizeTrace, RuleLabels};
use crate::sampling::SampleBank;

/// One sensor's reference points and bits.
#[derive(Debug, Clone, PartialEq)]
enum SensorIndex {
    /// Distinct reference values in ascending order, each carrying the bit
    /// and index of its lowest-index occurrence.
    Sorted {
        values: Vec<f64>,
        bits: Vec<bool>,
        index: Vec<usize>,
    },
    Points {
        dim: usize,
        points: Vec<f64>,
        bits: Vec<bool>,
    },
}

impl SensorIndex {
    fn build(dim: usize, points: Vec<f64>, bits: Vec<bool>) -> Self {
        if dim != 1 {
            return SensorIndex::Points { dim, points, bits };
        }
        let mut order: Vec<usize> = (0..bits.len()).collect();
        order.sort_by(|&x, &y| points[x].total_cmp(&points[y]).then(x.cmp(&y)));
        let mut values = Vec::with_capacity(order.len());
        let mut sorted_bits = Vec::with_capacity(order.len());
        let mut index = Vec::with_capacity(order.len());
        for i in order {
            if values.last() == Some(&points[i]) {
                continue;
            }
            values.push(points[i]);
            sorted_bits.push(bits[i]);
            index.push(i);
        }
        SensorIndex::Sorted {
            values,
            bits: sorted_bits,
            index,
        }
    }

    fn query(&self, y: &[f64]) -> bool {
        match self {
            SensorIndex::Sorted {
                values,
                bits,
                index,
            } => {
                let y = y[0];
                let pos = values.partition_point(|v| *v < y);
                if pos == 0 {
                    return bits[0];
                }
                if pos == values.len() {
                    return bits[pos - 1];
                }
                let left = (y - values[pos - 1]).abs();
                let right = (values[pos] - y).abs();
                let pick = if left < right || (left == right && index[pos - 1] < index[pos]) {
                    pos - 1
                } else {
                    pos
                };
                bits[pick]
            }
            SensorIndex::Points { dim, points, bits } => {
                let mut best = (f64::INFINITY, 0usize);
                for (i, p) in points.chunks_exact(*dim).enumerate() {
                    let d: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                bits[best.1]
            }
        }
    }
}

/// Trained labels extended to the whole observation space: each sensor
/// reports the bit of its Euclidean-nearest training point, ties going to
/// the lowest sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployedRule {
    sensor_dims: Vec<usize>,
    sensors: Vec<SensorIndex>,
}

impl DeployedRule {
    pub fn deploy(bank: &SampleBank, labels: &RuleLabels) -> Result<Self> {
        if labels.sensors() != bank.num_sensors() || labels.samples() != bank.len() {
            return Err(Error::InvalidLabels(
                "labels do not match the bank they are deployed from".into(),
            ));
        }
        let sensors = (0..bank.num_sensors())
            .map(|j| {
                let dim = bank.sensor_dims()[j];
                let points = (0..bank.len())
                    .flat_map(|i| bank.component(j, i).iter().copied())
                    .collect();
                let bits = (0..bank.len()).map(|i| labels.get(j, i)).collect();
                SensorIndex::build(dim, points, bits)
            })
            .collect();
        Ok(Self {
            sensor_dims: bank.sensor_dims().to_vec(),
            sensors,
        })
    }

    /// Builds from explicit per-sensor reference points (flattened, `n_j`
    /// coordinates each) and bits.
    pub fn from_references(sensor_dims: Vec<usize>, references: Vec<(Vec<f64>, Vec<bool>)>) -> Result<Self> {
        if references.len() != sensor_dims.len() {
            return Err(Error::InvalidLabels(format!(
                "{} sensors declared but {} reference sets given",
                sensor_dims.len(),
                references.len()
            )));
        }
        let mut sensors = Vec::with_capacity(references.len());
        for (j, ((points, bits), dim)) in references.into_iter().zip(&sensor_dims).enumerate() {
            if bits.is_empty() || points.len() != bits.len() * dim {
                return Err(Error::InvalidLabels(format!(
                    "sensor {j}: {} coordinates for {} reference bits of dimension {dim}",
                    points.len(),
                    bits.len()
                )));
            }
            sensors.push(SensorIndex::build(*dim, points, bits));
        }
        Ok(Self {
            sensor_dims,
            sensors,
        })
    }

    /// Reads a rule file (`sensor,sample,bit,y0[,y1…]`).
    pub fn read_rule_file<R: Read>(input: R, sensor_dims: &[usize]) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut refs: Vec<Vec<(usize, Vec<f64>, bool)>> = vec![Vec::new(); sensor_dims.len()];
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |what: &str| Error::InvalidLabels(format!("rule file row {}: {what}", line + 2));
            let field = |k: usize| record.get(k).map(str::trim).ok_or_else(|| bad("too few columns"));
            let j: usize = field(0)?.parse().map_err(|_| bad("bad sensor index"))?;
            let i: usize = field(1)?.parse().map_err(|_| bad("bad sample index"))?;
            let bit = match field(2)? {
                "0" => false,
                "1" => true,
                _ => return Err(bad("bit must be 0 or 1")),
            };
            let dim = *sensor_dims.get(j).ok_or_else(|| bad("sensor index out of range"))?;
            let y = (0..dim)
                .map(|k| field(3 + k)?.parse::<f64>().map_err(|_| bad("bad coordinate")))
                .collect::<Result<Vec<f64>>>()?;
            refs[j].push((i, y, bit));
        }
        let references = refs
            .into_iter()
            .map(|mut r| {
                r.sort_by_key(|(i, _, _)| *i);
                let bits = r.iter().map(|(_, _, b)| *b).collect();
                let points = r.into_iter().flat_map(|(_, y, _)| y).collect();
                (points, bits)
            })
            .collect();
        Self::from_references(sensor_dims.to_vec(), references)
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Sensor `j`'s bit for its own observation `y_j`.
    pub fn query(&self, j: usize, y: &[f64]) -> bool {
        self.sensors[j].query(y)
    }

    /// All sensor bits for a full observation vector.
    pub fn votes(&self, y: &[f64]) -> LocalVote {
        let mut u = LocalVote::zeros(self.sensors.len());
        let mut offset = 0;
        for (j, (s, d)) in self.sensors.iter().zip(&self.sensor_dims).enumerate() {
            u.set(j, s.query(&y[offset..offset + d]));
            offset += d;
        }
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub sweep_parameter: f64,
    pub pf: f64,
    pub pd: f64,
    pub bayes_cost: f64,
    pub stderr_pf: f64,
    pub stderr_pd: f64,
}

impl OperatingPoint {
    /// Point estimated from `m` independent draws per hypothesis.
    pub fn from_counts(scenario: &Scenario, sweep_parameter: f64, alarms: usize, detections: usize, m: usize) -> Self {
        let pf = alarms as f64 / m as f64;
        let pd = detections as f64 / m as f64;
        Self {
            sweep_parameter,
            pf,
            pd,
            bayes_cost: scenario.bayes_cost(pf, pd),
            stderr_pf: binomial_stderr(pf, m),
            stderr_pd: binomial_stderr(pd, m),
        }
    }
}

/// `sqrt(p(1 − p)/m)`.
pub fn binomial_stderr(p: f64, m: usize) -> f64 {
    (p * (1.0 - p) / m as f64).sqrt()
}

/// Fresh observations under each hypothesis, shared by every detector
/// evaluated on them.
#[derive(Debug, Clone)]
pub struct EvaluationSet {
    dim: usize,
    m: usize,
    seed: u64,
    h0: Vec<f64>,
    h1: Vec<f64>,
    llr0: Vec<f64>,
    llr1: Vec<f64>,
}

/// Independent stream seed derived from a base seed (SplitMix64 finalizer).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl EvaluationSet {
    pub fn draw(scenario: &Scenario, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("evaluation size M must be at least 1".into()));
        }
        let h0 = scenario.h0().sample_flat(m, stream_seed(seed, 0));
        let h1 = scenario.h1().sample_flat(m, stream_seed(seed, 1));
        let dim = scenario.dim();
        let llr = |draws: &[f64]| -> Result<Vec<f64>> {
            draws
                .par_chunks_exact(dim)
                .map(|y| scenario.log_likelihood_ratio(y))
                .collect()
        };
        Ok(Self {
            dim,
            m,
            seed,
            llr0: llr(&h0)?,
            llr1: llr(&h1)?,
            h0,
            h1,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn h0(&self) -> &[f64] {
        &self.h0
    }

    pub fn h1(&self) -> &[f64] {
        &self.h1
    }

    /// Log likelihood ratios of the H0 and H1 draws.
    pub fn llr(&self) -> (&[f64], &[f64]) {
        (&self.llr0, &self.llr1)
    }

    fn count(&self, draws: &[f64], decide: impl Fn(&[f64]) -> bool + Sync) -> usize {
        draws
            .par_chunks_exact(self.dim)
            .with_min_len(256)
            .filter(|y| decide(y))
            .count()
    }

    /// Operating point of the deployed distributed system.
    pub fn evaluate_system(
        &self,
        scenario: &Scenario,
        rule: &DeployedRule,
        f: &FusionRule,
        sweep_parameter: f64,
    ) -> Result<OperatingPoint> {
        f.validate(rule.num_sensors())?;
        let decide = |y: &[f64]| f.eval_raw(rule.votes(y).as_ref());
        let alarms = self.count(&self.h0, decide);
        let detections = self.count(&self.h1, decide);
        Ok(OperatingPoint::from_counts(scenario, sweep_parameter, alarms, detections, self.m))
    }

    /// Operating point of the centralized test `LR ≥ t`.
    pub fn evaluate_centralized(&self, scenario: &Scenario, t: f64) -> OperatingPoint {
        let alarms = self.llr0.iter().filter(|l| lr_at_least(**l, t)).count();
        let detections = self.llr1.iter().filter(|l| lr_at_least(**l, t)).count();
        OperatingPoint::from_counts(scenario, t, alarms, detections, self.m)
    }

    /// Every operating point of the centralized test on these draws, one per
    /// distinct likelihood-ratio value plus `(0, 0)`.
    pub fn centralized_roc(&self, scenario: &Scenario) -> RocCurve {
        let mut all: Vec<(f64, bool)> = self
            .llr0
            .iter()
            .map(|l| (*l, false))
            .chain(self.llr1.iter().map(|l| (*l, true)))
            .collect();
        all.sort_by(|x, y| y.0.total_cmp(&x.0));
        let mut points = vec![OperatingPoint::from_counts(scenario, f64::INFINITY, 0, 0, self.m)];
        let (mut alarms, mut detections) = (0, 0);
        let mut k = 0;
        while k < all.len() {
            let level = all[k].0;
            while k < all.len() && all[k].0 == level {
                if all[k].1 {
                    detections += 1;
                } else {
                    alarms += 1;
                }
                k += 1;
            }
            points.push(OperatingPoint::from_counts(scenario, level.exp(), alarms, detections, self.m));
        }
        RocCurve::new("centralized-full", points)
    }
}

fn lr_at_least(llr: f64, t: f64) -> bool {
    t == 0.0 || llr >= t.ln()
}

/// `1` iff `p(y|H1) / p(y|H0) ≥ t`, compared in log space.
pub fn centralized_decide(scenario: &Scenario, y: &[f64], t: f64) -> Result<bool> {
    if !(t >= 0.0) {
        return Err(Error::Config(format!("threshold must be nonnegative, got {t}")));
    }
    Ok(lr_at_least(scenario.log_likelihood_ratio(y)?, t))
}

/// Operating point of trained labels estimated on the training bank itself
/// by importance weighting: `pf = mean F·p0/g`, `pd = mean F·p1/g`.
pub fn evaluate_on_training(
    scenario: &Scenario,
    bank: &SampleBank,
    labels: &RuleLabels,
    f: &FusionRule,
    sweep_parameter: f64,
) -> Result<OperatingPoint> {
    if labels.sensors() != bank.num_sensors() || labels.samples() != bank.len() {
        return Err(Error::InvalidLabels("labels do not match the bank".into()));
    }
    f.validate(labels.sensors())?;
    let n = bank.len() as f64;
    let estimate = |log_p: &[f64]| {
        let terms: Vec<f64> = (0..bank.len())
            .map(|i| {
                if f.eval_raw(labels.row(i)) {
                    (log_p[i] - bank.log_g()[i]).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let mean = terms.iter().sum::<f64>() / n;
        let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        (mean.clamp(0.0, 1.0), (var / n).sqrt())
    };
    let (pf, stderr_pf) = estimate(bank.log_p0());
    let (pd, stderr_pd) = estimate(bank.log_p1());
    Ok(OperatingPoint {
        sweep_parameter,
        pf,
        pd,
        bayes_cost: scenario.bayes_cost(pf, pd),
        stderr_pf,
        stderr_pd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub curve_id: String,
    /// Sorted by `pf`, then `pd`.
    pub points: Vec<OperatingPoint>,
}

impl RocCurve {
    pub fn new(curve_id: impl Into<String>, mut points: Vec<OperatingPoint>) -> Self {
        points.sort_by(|x, y| {
            x.pf.total_cmp(&y.pf)
                .then(x.pd.total_cmp(&y.pd))
                .then(x.sweep_parameter.total_cmp(&y.sweep_parameter))
        });
        Self {
            curve_id: curve_id.into(),
            points,
        }
    }

    /// `pd` at false-alarm rate `pf` by linear interpolation through the
    /// curve's points and the trivial detectors `(0, 0)` and `(1, 1)`.
    /// Several points at one `pf` count as their best `pd`.
    pub fn pd_at(&self, pf: f64) -> f64 {
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(self.points.len() + 2);
        for (x, y) in std::iter::once((0.0, 0.0))
            .chain(self.points.iter().map(|p| (p.pf, p.pd)))
            .chain(std::iter::once((1.0, 1.0)))
        {
            match knots.last_mut() {
                Some(last) if last.0 == x => last.1 = last.1.max(y),
                _ => knots.push((x, y)),
            }
        }
        let pf = pf.clamp(0.0, 1.0);
        let k = knots.partition_point(|p| p.0 < pf);
        if k < knots.len() && knots[k].0 == pf {
            return knots[k].1;
        }
        let (x0, y0) = knots[k - 1];
        let (x1, y1) = knots[k];
        y0 + (y1 - y0) * (pf - x0) / (x1 - x0)
    }

    /// Appends rows `sweep_parameter,pf,pd,bayes_cost,stderr_pf,stderr_pd,curve_id`.
    pub fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for p in &self.points {
            w.write_record([
                p.sweep_parameter.to_string(),
                p.pf.to_string(),
                p.pd.to_string(),
                p.bayes_cost.to_string(),
                p.stderr_pf.to_string(),
                p.stderr_pd.to_string(),
                self.curve_id.clone(),
            ])?;
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 7] = [
        "sweep_parameter",
        "pf",
        "pd",
        "bayes_cost",
        "stderr_pf",
        "stderr_pd",
        "curve_id",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_curves_csv(std::slice::from_ref(self), out)
    }
}

/// Several curves in one CSV.
pub fn write_curves_csv<W: Write>(curves: &[RocCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RocCurve::CSV_HEADER)?;
    for c in curves {
        c.write_rows(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

/// Log-spaced grid of `points` values from `min` to `max`.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && points >= 1) || (points == 1 && min != max) {
        return Err(Error::Config(format!(
            "invalid sweep grid: min {min}, max {max}, points {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|k| {
            if k == points - 1 {
                max
            } else {
                (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    /// Cost ratios `b/a`.
    pub grid: Vec<f64>,
    pub init: Init,
    pub options: OptimizeOptions,
    /// Estimate distributed points on the training bank instead of fresh draws.
    pub on_training: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub distributed: RocCurve,
    pub centralized: RocCurve,
    /// One trace per grid value, in grid order.
    pub traces: Vec<OptimizeTrace>,
}

/// For every cost ratio `r` in the grid: re-weight the bank for costs
/// `C00 = C11 = 0, C01 = 1, C10 = r` with equal priors, re-optimize, deploy
/// and evaluate. The centralized point at `r` thresholds the likelihood ratio
/// at `b/a` on the same evaluation draws.
pub fn roc_sweep(
    scenario: &Scenario,
    f: &FusionRule,
    bank: &SampleBank,
    draws: &EvaluationSet,
    settings: &SweepSettings,
    curve_id: &str,
) -> Result<SweepResult> {
    if settings.grid.is_empty() || settings.grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Config("sweep grid must be nonempty with positive finite entries".into()));
    }
    let runs = settings
        .grid
        .par_iter()
        .map(|&r| -> Result<_> {
            let s = scenario.with_cost_ratio(r)?;
            let k = s.constants();
            let b = bank.reweighted(k)?;
            let init = settings.init.build(&b);
            let (labels, trace) = optimize(&b, f, k, init, &settings.options)?;
            let point = if settings.on_training {
                evaluate_on_training(&s, &b, &labels, f, r)?
            } else {
                let rule = DeployedRule::deploy(&b, &labels)?;
                draws.evaluate_system(&s, &rule, f, r)?
            };
            let mut central = draws.evaluate_centralized(&s, k.b / k.a);
            central.sweep_parameter = r;
            Ok((point, central, trace))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut distributed = Vec::with_capacity(runs.len());
    let mut centralized = Vec::with_capacity(runs.len());
    let mut traces = Vec::with_capacity(runs.len());
    for (p, c, t) in runs {
        distributed.push(p);
        centralized.push(c);
        traces.push(t);
    }
    Ok(SweepResult {
        distributed: RocCurve::new(curve_id, distributed),
        centralized: RocCurve::new("centralized", centralized),
        traces,
    })
}
