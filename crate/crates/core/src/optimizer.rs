//! Monte Carlo cost and the Gauss-Seidel (person-by-person) search over
//! discrete sensor decision rules.
//!
//! Labels are stored sample-major: row `i` packs `I_1(Y_1i), …, I_L(Y_Li)`
//! into `u64` words, so a row is directly a fusion-rule vote. Updating
//! sensor `j` at sample `i` only reads row `i`, which is why a sensor block
//! can run over the samples in parallel.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_sum::exact_sum;
use crate::fusion::{set_bit, words_for, FusionRule, VoteRef};
use crate::model::BayesConstants;
use crate::sampling::SampleBank;

/// `I[x]`: 1 if `x ≥ 0`, else 0.
#[inline]
pub fn indicator(x: f64) -> bool {
    x >= 0.0
}

/// How an update resolves `P_j1 = 0`, where both label values give the same cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Take `I[lhat]`, the centralized decision for the sample.
    #[default]
    FollowLhat,
    /// Take `I[0] = 1`.
    PreferOne,
}

impl TieBreak {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "follow-lhat" => Ok(TieBreak::FollowLhat),
            "prefer-one" => Ok(TieBreak::PreferOne),
            other => Err(Error::Config(format!(
                "unknown tie rule '{other}' (expected 'follow-lhat' or 'prefer-one')"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TieBreak::FollowLhat => "follow-lhat",
            TieBreak::PreferOne => "prefer-one",
        }
    }
}

/// The label sensor `j` takes at a sample given `P_j1` and `lhat` there.
#[inline]
pub fn update_label(pj1: i8, lhat: f64, tie: TieBreak) -> bool {
    match (pj1, tie) {
        (0, TieBreak::FollowLhat) => indicator(lhat),
        _ => indicator(f64::from(pj1) * lhat),
    }
}

/// Discrete sensor rules on the bank: `get(j, i) = I_j(Y_ji)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleLabels {
    sensors: usize,
    samples: usize,
    words: usize,
    bits: Vec<u64>,
}

impl RuleLabels {
    pub fn zeros(sensors: usize, samples: usize) -> Self {
        let words = words_for(sensors);
        Self {
            sensors,
            samples,
            words,
            bits: vec![0; words * samples],
        }
    }

    pub fn from_fn(sensors: usize, samples: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut labels = Self::zeros(sensors, samples);
        for i in 0..samples {
            for j in 0..sensors {
                labels.set(j, i, f(j, i));
            }
        }
        labels
    }

    /// Independent fair coin flips.
    pub fn random(sensors: usize, samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(sensors, samples, |_, _| rng.random_bool(0.5))
    }

    /// `I_j(Y_ji) = I[lhat_i]` for every sensor.
    pub fn from_lhat(bank: &SampleBank) -> Self {
        let lhat = bank.lhat_values();
        Self::from_fn(bank.num_sensors(), bank.len(), |_, i| indicator(lhat[i]))
    }

    /// `I_j(Y_ji) = rule(j, Y_ji)`, e.g. a per-sensor threshold `I[3y − 4]`.
    pub fn from_components(bank: &SampleBank, mut rule: impl FnMut(usize, &[f64]) -> bool) -> Self {
        Self::from_fn(bank.num_sensors(), bank.len(), |j, i| rule(j, bank.component(j, i)))
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, j: usize, i: usize) -> bool {
        self.row(i).get(j)
    }

    pub fn set(&mut self, j: usize, i: usize, value: bool) {
        assert!(j < self.sensors && i < self.samples);
        let w = self.words;
        set_bit(&mut self.bits[i * w..(i + 1) * w], j, value);
    }

    /// Sample `i`'s vote vector.
    pub fn row(&self, i: usize) -> VoteRef<'_> {
        VoteRef::new(&self.bits[i * self.words..(i + 1) * self.words], self.sensors)
    }

    /// Number of (sensor, sample) entries where the two labelings differ.
    pub fn hamming(&self, other: &RuleLabels) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    fn check(&self, bank: &SampleBank) -> Result<()> {
        if self.sensors != bank.num_sensors() || self.samples != bank.len() {
            return Err(Error::InvalidLabels(format!(
                "labels are {}x{} but the bank has {} sensors and {} samples",
                self.sensors,
                self.samples,
                bank.num_sensors(),
                bank.len()
            )));
        }
        Ok(())
    }
}

/// Starting labels for [`optimize`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Init {
    /// `I[lhat_i]` for every sensor.
    #[default]
    Analytic,
    /// `I[slope·y + offset]` on the first coordinate of each sensor.
    Linear { slope: f64, offset: f64 },
    Random(u64),
    Zeros,
    Ones,
}

impl Init {
    /// `analytic`, `linear:<slope>,<offset>`, `random:<seed>`, `zeros` or `ones`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("invalid init '{s}'"));
        match s {
            "analytic" => return Ok(Init::Analytic),
            "zeros" => return Ok(Init::Zeros),
            "ones" => return Ok(Init::Ones),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("linear:") {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            let slope = a.trim().parse().map_err(|_| bad())?;
            let offset = b.trim().parse().map_err(|_| bad())?;
            return Ok(Init::Linear { slope, offset });
        }
        if let Some(rest) = s.strip_prefix("random:") {
            return Ok(Init::Random(rest.trim().parse().map_err(|_| bad())?));
        }
        Err(bad())
    }

    pub fn build(&self, bank: &SampleBank) -> RuleLabels {
        let (l, n) = (bank.num_sensors(), bank.len());
        match *self {
            Init::Analytic => RuleLabels::from_lhat(bank),
            Init::Linear { slope, offset } => {
                RuleLabels::from_components(bank, |_, y| indicator(slope * y[0] + offset))
            }
            Init::Random(seed) => RuleLabels::random(l, n, seed),
            Init::Zeros => RuleLabels::zeros(l, n),
            Init::Ones => RuleLabels::from_fn(l, n, |_, _| true),
        }
    }
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Init::Analytic => write!(f, "analytic"),
            Init::Linear { slope, offset } => write!(f, "linear:{slope},{offset}"),
            Init::Random(seed) => write!(f, "random:{seed}"),
            Init::Zeros => write!(f, "zeros"),
            Init::Ones => write!(f, "ones"),
        }
    }
}

/// `c + (1/N) Σ_i I_Ω0(Y_i) · lhat_i / g_i`.
pub fn cost_mc(
    bank: &SampleBank,
    labels: &RuleLabels,
    f: &FusionRule,
    constants: BayesConstants,
) -> Result<f64> {
    labels.check(bank)?;
    f.validate(labels.sensors)?;
    let terms = (0..bank.len())
        .filter(|&i| !f.eval_raw(labels.row(i)))
        .map(|i| bank.weights()[i]);
    Ok(constants.c + exact_sum(terms) / bank.len() as f64)
}

fn cost_from_omega(omega: &[bool], weights: &[f64], c: f64) -> f64 {
    let terms = omega
        .iter()
        .zip(weights)
        .filter(|(o, _)| **o)
        .map(|(_, w)| *w);
    c + exact_sum(terms) / weights.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub max_sweeps: usize,
    pub tie: TieBreak,
    /// Update the samples of a sensor block on the rayon pool.
    pub parallel: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tie: TieBreak::FollowLhat,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// Cost after each sensor block, `L` entries.
    pub block_costs: Vec<f64>,
    pub flips: usize,
    pub fusion_evaluations: u64,
}

#[inline]
fn update_row(
    f: &FusionRule,
    row: &mut [u64],
    sensors: usize,
    j: usize,
    lhat: f64,
    tie: TieBreak,
    omega: &mut bool,
) -> bool {
    let old = (row[j / 64] >> (j % 64)) & 1 == 1;
    let (with, without) = f.eval_with_and_without(row, sensors, j);
    let p = i8::from(with) - i8::from(without);
    let new = update_label(p, lhat, tie);
    set_bit(row, j, new);
    *omega = !(if new { with } else { without });
    old != new
}

/// One Gauss-Seidel pass over sensors `1..L`, in place.
///
/// Sensor `j` updates every sample from the labels left by sensors
/// `1..j−1` in this pass and `j+1..L` from the previous one.
pub fn sweep(
    bank: &SampleBank,
    labels: &mut RuleLabels,
    f: &FusionRule,
    constants: BayesConstants,
    options: &OptimizeOptions,
) -> Result<SweepOutcome> {
    labels.check(bank)?;
    f.validate(labels.sensors)?;
    let sensors = labels.sensors;
    let words = labels.words;
    let lhat = bank.lhat_values();
    let tie = options.tie;
    let mut omega = vec![false; bank.len()];
    let mut block_costs = Vec::with_capacity(sensors);
    let mut flips = 0usize;
    let mut evaluations = 0u64;
    for j in 0..sensors {
        let (block_flips, block_evals) = if options.parallel {
            labels
                .bits
                .par_chunks_mut(words)
                .with_min_len(512)
                .zip(omega.par_iter_mut())
                .zip(lhat.par_iter())
                .map(|((row, om), &l)| (usize::from(update_row(f, row, sensors, j, l, tie, om)), 2u64))
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
        } else {
            labels
                .bits
                .chunks_mut(words)
                .zip(omega.iter_mut())
                .zip(lhat)
                .map(|((row, om), &l)| (usize::from(update_row(f, row, sensors, j, l, tie, om)), 2u64))
                .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
        };
        flips += block_flips;
        evaluations += block_evals;
        block_costs.push(cost_from_omega(&omega, bank.weights(), constants.c));
    }
    Ok(SweepOutcome {
        block_costs,
        flips,
        fusion_evaluations: evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTrace {
    pub initial_cost: f64,
    /// Cost after every sensor block of every sweep.
    pub cost_after_each_sensor_update: Vec<f64>,
    pub sensors: usize,
    pub sweeps_used: usize,
    pub converged: bool,
    pub flips_per_sweep: Vec<usize>,
    pub fusion_evaluations_per_sweep: Vec<u64>,
    /// First sweep whose closing cost equals the one before it.
    pub cost_stagnated_at_sweep: Option<usize>,
}

impl OptimizeTrace {
    pub fn final_cost(&self) -> f64 {
        self.cost_after_each_sensor_update
            .last()
            .copied()
            .unwrap_or(self.initial_cost)
    }

    /// Initial cost followed by every block cost.
    pub fn all_costs(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.initial_cost).chain(self.cost_after_each_sensor_update.iter().copied())
    }

    /// True when no block ever raised the cost, compared exactly.
    pub fn is_monotone(&self) -> bool {
        let costs: Vec<f64> = self.all_costs().collect();
        costs.windows(2).all(|w| w[1] <= w[0])
    }

    /// `sweep,sensor,cost,flips_in_sweep`; sweep 0 is the initial labeling.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sweep", "sensor", "cost", "flips_in_sweep"])?;
        w.write_record(["0", "", &self.initial_cost.to_string(), ""])?;
        for (k, cost) in self.cost_after_each_sensor_update.iter().enumerate() {
            let sweep = k / self.sensors;
            w.write_record([
                (sweep + 1).to_string(),
                (k % self.sensors + 1).to_string(),
                cost.to_string(),
                self.flips_per_sweep[sweep].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Repeats [`sweep`] until a full pass changes no label or `max_sweeps` is hit.
/// Hitting the limit is reported through `converged = false`.
pub fn optimize(
    bank: &SampleBank,
    f: &FusionRule,
    constants: BayesConstants,
    init: RuleLabels,
    options: &OptimizeOptions,
) -> Result<(RuleLabels, OptimizeTrace)> {
    if options.max_sweeps == 0 {
        return Err(Error::Config("max_sweeps must be at least 1".into()));
    }
    let mut labels = init;
    let initial_cost = cost_mc(bank, &labels, f, constants)?;
    let mut trace = OptimizeTrace {
        initial_cost,
        cost_after_each_sensor_update: Vec::new(),
        sensors: labels.sensors,
        sweeps_used: 0,
        converged: false,
        flips_per_sweep: Vec::new(),
        fusion_evaluations_per_sweep: Vec::new(),
        cost_stagnated_at_sweep: None,
    };
    let mut previous = initial_cost;
    for sweep_index in 1..=options.max_sweeps {
        let outcome = sweep(bank, &mut labels, f, constants, options)?;
        let closing = *outcome.block_costs.last().unwrap();
        if closing == previous && trace.cost_stagnated_at_sweep.is_none() {
            trace.cost_stagnated_at_sweep = Some(sweep_index);
        }
        previous = closing;
        trace.cost_after_each_sensor_update.extend(outcome.block_costs);
        trace.flips_per_sweep.push(outcome.flips);
        trace.fusion_evaluations_per_sweep.push(outcome.fusion_evaluations);
        trace.sweeps_used = sweep_index;
        if outcome.flips == 0 {
            trace.converged = true;
            break;
        }
    }
    Ok((labels, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AndOr {
    And,
    Or,
}

/// Canonical global optimum for AND and OR fusion: every sensor reports
/// `I[lhat_i]`, so the fused decision at each sample is `I[lhat_i]`.
pub fn analytic_and_or(bank: &SampleBank, _which: AndOr) -> RuleLabels {
    RuleLabels::from_lhat(bank)
}

/// Whether the fused decision at every sample equals `I[lhat_i]`, which
/// characterizes all minimizers under AND and OR.
pub fn satisfies_product_conditions(bank: &SampleBank, labels: &RuleLabels, which: AndOr) -> bool {
    (0..bank.len()).all(|i| {
        let row = labels.row(i);
        let fused = match which {
            AndOr::And => row.count_ones() == row.len(),
            AndOr::Or => row.count_ones() > 0,
        };
        fused == indicator(bank.lhat_values()[i])
    })
}

/// Largest `L·N` accepted by [`exhaustive_optimum`].
pub const MAX_EXHAUSTIVE_BITS: usize = 24;

/// Global minimizer of [`cost_mc`] by enumerating all `2^(L·N)` labelings.
/// Label `(j, i)` is bit `i·L + j` of the pattern; ties keep the smallest pattern.
pub fn exhaustive_optimum(
    bank: &SampleBank,
    f: &FusionRule,
    constants: BayesConstants,
) -> Result<(RuleLabels, f64)> {
    let sensors = bank.num_sensors();
    let samples = bank.len();
    let bits = sensors * samples;
    if bits > MAX_EXHAUSTIVE_BITS {
        return Err(Error::TooLarge(format!(
            "exhaustive search over L*N = {bits} bits exceeds {MAX_EXHAUSTIVE_BITS}"
        )));
    }
    f.validate(sensors)?;
    let row_mask = (1u64 << sensors) - 1;
    let fused: Vec<bool> = (0..1u64 << sensors)
        .map(|r| f.eval_raw(VoteRef::new(&[r], sensors)))
        .collect();
    let weights = bank.weights();
    let cost_of = |pattern: u64| {
        let terms = (0..samples)
            .filter(|&i| !fused[((pattern >> (i * sensors)) & row_mask) as usize])
            .map(|i| weights[i]);
        constants.c + exact_sum(terms) / samples as f64
    };
    let mut best = (0u64, cost_of(0));
    for pattern in 1..(1u64 << bits) {
        let cost = cost_of(pattern);
        if cost < best.1 {
            best = (pattern, cost);
        }
    }
    let labels = RuleLabels::from_fn(sensors, samples, |j, i| (best.0 >> (i * sensors + j)) & 1 == 1);
    Ok((labels, best.1))
}

/// Rule file: one CSV row per (sensor, sample) with the sensor's observation
/// component and its label. Columns `sensor,sample,bit,y0[,y1…]`.
pub fn write_rule_file<W: Write>(bank: &SampleBank, labels: &RuleLabels, out: W) -> Result<()> {
    labels.check(bank)?;
    let width = bank.sensor_dims().iter().copied().max().unwrap_or(1);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sensor".to_string(), "sample".to_string(), "bit".to_string()];
    header.extend((0..width).map(|k| format!("y{k}")));
    w.write_record(&header)?;
    for j in 0..bank.num_sensors() {
        for i in 0..bank.len() {
            let mut record = vec![j.to_string(), i.to_string(), u8::from(labels.get(j, i)).to_string()];
            let comp = bank.component(j, i);
            record.extend(comp.iter().map(f64::to_string));
            record.extend(std::iter::repeat_n(String::new(), width - comp.len()));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Costs, Density, Gaussian, Priors, Scenario};
    use crate::sampling::{build_trial, draw_bank, TrialKind};
    use crate::scenarios;
    use approx::assert_relative_eq;

    fn bank_for(scenario: &Scenario, n: usize, seed: u64) -> SampleBank {
        let t = build_trial(scenario, TrialKind::HypothesisMixture).unwrap();
        draw_bank(&t, scenario, n, seed).unwrap()
    }

    fn one_d() -> Scenario {
        let h0: Density = Gaussian::isotropic(vec![0.0], 0.6).unwrap().into();
        let h1: Density = Gaussian::isotropic(vec![1.0], 1.0).unwrap().into();
        Scenario::scalar("1d", Priors { p0: 0.5, p1: 0.5 }, Costs::with_ratio(1.0), h0, h1).unwrap()
    }

    #[test]
    fn indicator_convention() {
        assert!(indicator(0.0));
        assert!(!indicator(-1e-300));
        assert!(indicator(f64::INFINITY));
        assert!(!indicator(f64::NEG_INFINITY));
    }

    #[test]
    fn constant_rules_cost() {
        let s = scenarios::example1().unwrap();
        let bank = bank_for(&s, 200, 1);
        let k = s.constants();
        let labels = RuleLabels::random(10, 200, 5);
        assert_eq!(cost_mc(&bank, &labels, &FusionRule::constant(true), k).unwrap(), k.c);
        let mean_w = exact_sum(bank.weights().iter().copied()) / 200.0;
        assert_eq!(cost_mc(&bank, &labels, &FusionRule::constant(false), k).unwrap(), k.c + mean_w);
    }

    #[test]
    fn single_sensor_hand_oracle() {
        let s = one_d();
        let bank = bank_for(&s, 5, 8);
        let k = s.constants();
        let labels = RuleLabels::from_lhat(&bank);
        let f = FusionRule::parse("truth-table:2", 1).unwrap();
        let hand: f64 = (0..5)
            .map(|i| bank.lhat_values()[i].min(0.0) / bank.g_values()[i])
            .sum::<f64>()
            / 5.0;
        assert_relative_eq!(cost_mc(&bank, &labels, &f, k).unwrap(), k.c + hand, max_relative = 1e-14);
    }

    #[test]
    fn constant_zero_rule_drives_labels_to_one_under_prefer_one() {
        let s = scenarios::example1().unwrap();
        let bank = bank_for(&s, 100, 2);
        let mut labels = RuleLabels::random(10, 100, 3);
        let opts = OptimizeOptions { tie: TieBreak::PreferOne, ..Default::default() };
        let zero = FusionRule::constant(false);
        sweep(&bank, &mut labels, &zero, s.constants(), &opts).unwrap();
        assert_eq!(labels, RuleLabels::from_fn(10, 100, |_, _| true));
        let again = sweep(&bank, &mut labels, &zero, s.constants(), &opts).unwrap();
        assert_eq!(again.flips, 0);
    }

    #[test]
    fn constant_zero_rule_follows_lhat_by_default() {
        let s = scenarios::example1().unwrap();
        let bank = bank_for(&s, 100, 2);
        let mut labels = RuleLabels::random(10, 100, 3);
        sweep(&bank, &mut labels, &FusionRule::constant(false), s.constants(), &OptimizeOptions::default()).unwrap();
        assert_eq!(labels, RuleLabels::from_lhat(&bank));
    }

    /// Hand-executed OR sweep on two sensors and four samples.
    #[test]
    fn or_sweep_hand_table() {
        let s = Scenario::scalar(
            "2d",
            Priors { p0: 0.5, p1: 0.5 },
            Costs::with_ratio(1.0),
            Gaussian::isotropic(vec![0.0, 0.0], 0.6).unwrap().into(),
            Gaussian::isotropic(vec![1.0, 1.0], 1.0).unwrap().into(),
        )
        .unwrap();
        // two samples near the H1 mean (lhat > 0), two near the H0 mean (lhat < 0)
        let trial = build_trial(&s, TrialKind::GaussianFit).unwrap();
        let mut bank = None;
        for seed in 0..200 {
            let b = draw_bank(&trial, &s, 4, seed).unwrap();
            let signs: Vec<bool> = b.lhat_values().iter().map(|l| *l >= 0.0).collect();
            if signs == [true, true, false, false] {
                bank = Some(b);
                break;
            }
        }
        let bank = bank.expect("a seed with sign pattern (+, +, -, -)");
        // initial labels (sensor 1, sensor 2) per sample:
        //   s0 (0,0)  s1 (0,1)  s2 (1,0)  s3 (1,1)
        let init = [(false, false), (false, true), (true, false), (true, true)];
        let labels = RuleLabels::from_fn(2, 4, |j, i| if j == 0 { init[i].0 } else { init[i].1 });
        for (tie, expect) in [
            // PreferOne: sensor 1 sees P_11 = 1 - u2.
            //   s0: P=1, lhat>0 -> 1; s1: P=0 -> 1; s2: P=1, lhat<0 -> 0; s3: P=0 -> 1
            // then sensor 2 sees P_21 = 1 - u1 (new):
            //   s0: P=0 -> 1; s1: P=0 -> 1; s2: P=1, lhat<0 -> 0; s3: P=0 -> 1
            (TieBreak::PreferOne, [(true, true), (true, true), (false, false), (true, true)]),
            // FollowLhat: ties take sign(lhat)
            //   sensor 1: s0 1; s1 1; s2 0; s3 0.  sensor 2: s0 P=0 -> 1; s1 P=0 -> 1; s2 P=1 -> 0; s3 P=1 -> 0
            (TieBreak::FollowLhat, [(true, true), (true, true), (false, false), (false, false)]),
        ] {
            let mut l = labels.clone();
            let opts = OptimizeOptions { tie, parallel: false, ..Default::default() };
            sweep(&bank, &mut l, &FusionRule::Or, s.constants(), &opts).unwrap();
            for (i, (a, b)) in expect.iter().enumerate() {
                assert_eq!((l.get(0, i), l.get(1, i)), (*a, *b), "{tie:?} sample {i}");
            }
        }
    }

    #[test]
    fn prefer_one_leaves_or_stuck_above_the_optimum() {
        // a sample with lhat < 0 and both OR sensors at 1: every P_j1 is 0
        let s = one_d();
        let two = Scenario::scalar(
            "2d",
            s.priors(),
            s.costs(),
            Gaussian::isotropic(vec![0.0, 0.0], 0.6).unwrap().into(),
            Gaussian::isotropic(vec![1.0, 1.0], 1.0).unwrap().into(),
        )
        .unwrap();
        let bank = bank_for(&two, 300, 4);
        let k = two.constants();
        let ones = RuleLabels::from_fn(2, 300, |_, _| true);
        let strict = OptimizeOptions { tie: TieBreak::PreferOne, ..Default::default() };
        let (stuck, trace) = optimize(&bank, &FusionRule::Or, k, ones.clone(), &strict).unwrap();
        assert!(trace.converged);
        assert_eq!(stuck, ones);
        let analytic = cost_mc(&bank, &analytic_and_or(&bank, AndOr::Or), &FusionRule::Or, k).unwrap();
        assert!(trace.final_cost() > analytic);
        let (_, fixed) = optimize(&bank, &FusionRule::Or, k, ones, &OptimizeOptions::default()).unwrap();
        assert_eq!(fixed.final_cost(), analytic);
    }

    #[test]
    fn and_rule_reaches_product_conditions_from_paper_init() {
        let s = scenarios::example1().unwrap();
        let bank = bank_for(&s, 1000, 7);
        let init = RuleLabels::from_components(&bank, |_, y| indicator(3.0 * y[0] - 4.0));
        let (labels, trace) = optimize(&bank, &FusionRule::And, s.constants(), init, &OptimizeOptions::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.sweeps_used <= 10);
        assert!(trace.is_monotone());
        assert!(satisfies_product_conditions(&bank, &labels, AndOr::And));
    }

    #[test]
    fn fixed_point_is_idempotent() {
        let s = scenarios::example1().unwrap();
        let bank = bank_for(&s, 300, 9);
        let f = FusionRule::KOfL(4);
        let (labels, _) = optimize(&bank, &f, s.constants(), RuleLabels::random(10, 300, 1), &OptimizeOptions::default()).unwrap();
        let before = cost_mc(&bank, &labels, &f, s.constants()).unwrap();
        let (again, trace) = optimize(&bank, &f, s.constants(), labels.clone(), &OptimizeOptions::default()).unwrap();
        assert_eq!(trace.sweeps_used, 1);
        assert_eq!(trace.flips_per_sweep, vec![0]);
        assert_eq!(again, labels);
        assert_eq!(trace.final_cost(), before);
    }

    #[test]
    fn fixed_point_satisfies_necessary_conditions() {
        let s = scenarios::common_signal(5).unwrap();
        let bank = bank_for(&s, 200, 10);
        for f in [FusionRule::KOfL(2), FusionRule::KOfL(3), FusionRule::parse("truth-table:6b3c91e0", 5).unwrap()] {
            let opts = OptimizeOptions::default();
            let (labels, trace) = optimize(&bank, &f, s.constants(), RuleLabels::random(5, 200, 2), &opts).unwrap();
            assert!(trace.converged);
            for i in 0..200 {
                for j in 0..5 {
                    let mut u = crate::fusion::LocalVote::zeros(5);
                    for m in 0..5 {
                        u.set(m, labels.get(m, i));
                    }
                    let p = crate::fusion::pj1(&f, &u, j).unwrap();
                    assert_eq!(labels.get(j, i), update_label(p, bank.lhat_values()[i], opts.tie));
                }
            }
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let s = scenarios::example2().unwrap();
        let bank = bank_for(&s, 3000, 12);
        let f = FusionRule::paths(50);
        let init = RuleLabels::random(100, 3000, 6);
        let par = optimize(&bank, &f, s.constants(), init.clone(), &OptimizeOptions::default()).unwrap();
        let seq = optimize(&bank, &f, s.constants(), init, &OptimizeOptions { parallel: false, ..Default::default() }).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn sweep_counts_two_evaluations_per_update() {
        let s = scenarios::common_signal(7).unwrap();
        let bank = bank_for(&s, 123, 1);
        let mut labels = RuleLabels::random(7, 123, 1);
        let out = sweep(&bank, &mut labels, &FusionRule::KOfL(3), s.constants(), &OptimizeOptions::default()).unwrap();
        assert_eq!(out.fusion_evaluations, 2 * 7 * 123);
        assert_eq!(out.block_costs.len(), 7);
    }

    #[test]
    fn analytic_extremes() {
        let s = one_d();
        let bank = bank_for(&s, 50, 3);
        let neg = bank.reweighted(s.with_cost_ratio(1e6).unwrap().constants()).unwrap();
        assert!(neg.lhat_values().iter().all(|l| *l < 0.0));
        let labels = analytic_and_or(&neg, AndOr::And);
        assert!((0..50).all(|i| !labels.get(0, i)));
        let pos = bank.reweighted(s.with_cost_ratio(1e-6).unwrap().constants()).unwrap();
        assert!(pos.lhat_values().iter().all(|l| *l >= 0.0));
        let labels = analytic_and_or(&pos, AndOr::Or);
        assert!((0..50).all(|i| labels.get(0, i)));
    }

    #[test]
    fn analytic_beats_random_labelings() {
        let s = scenarios::common_signal(4).unwrap();
        let bank = bank_for(&s, 60, 14);
        let k = s.constants();
        for (which, f) in [(AndOr::And, FusionRule::And), (AndOr::Or, FusionRule::Or)] {
            let best = cost_mc(&bank, &analytic_and_or(&bank, which), &f, k).unwrap();
            for seed in 0..1000 {
                let c = cost_mc(&bank, &RuleLabels::random(4, 60, seed), &f, k).unwrap();
                assert!(best <= c);
            }
        }
    }

    #[test]
    fn exhaustive_constant_one_prefers_zero_pattern() {
        let s = scenarios::common_signal(2).unwrap();
        let bank = bank_for(&s, 4, 1);
        let (labels, cost) = exhaustive_optimum(&bank, &FusionRule::constant(true), s.constants()).unwrap();
        assert_eq!(labels, RuleLabels::zeros(2, 4));
        assert_eq!(cost, s.constants().c);
    }

    #[test]
    fn exhaustive_single_sensor_is_lhat_sign() {
        let s = one_d();
        let bank = bank_for(&s, 12, 5);
        let identity = FusionRule::parse("truth-table:2", 1).unwrap();
        let (labels, _) = exhaustive_optimum(&bank, &identity, s.constants()).unwrap();
        // zero-weight ties would break toward 0, but continuous draws give nonzero lhat
        assert_eq!(labels, RuleLabels::from_lhat(&bank));
    }

    #[test]
    fn exhaustive_and_matches_analytic() {
        let s = scenarios::common_signal(2).unwrap();
        let bank = bank_for(&s, 6, 2);
        let k = s.constants();
        let (labels, cost) = exhaustive_optimum(&bank, &FusionRule::And, k).unwrap();
        assert!(satisfies_product_conditions(&bank, &labels, AndOr::And));
        assert_eq!(cost, cost_mc(&bank, &analytic_and_or(&bank, AndOr::And), &FusionRule::And, k).unwrap());
        assert!(exhaustive_optimum(&bank_for(&s, 13, 1), &FusionRule::And, k).is_err());
    }

    #[test]
    fn trace_csv_has_one_row_per_block() {
        let s = scenarios::common_signal(3).unwrap();
        let bank = bank_for(&s, 40, 5);
        let (_, trace) = optimize(&bank, &FusionRule::KOfL(2), s.constants(), RuleLabels::random(3, 40, 1), &OptimizeOptions::default()).unwrap();
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2 + 3 * trace.sweeps_used);
    }

    #[test]
    fn init_strings() {
        for text in ["analytic", "zeros", "ones", "random:7", "linear:3,-4"] {
            assert_eq!(Init::parse(text).unwrap().to_string(), text);
        }
        assert!(Init::parse("linear:3").is_err());
        assert!(Init::parse("gaussian").is_err());
    }

    #[test]
    fn zero_max_sweeps_rejected() {
        let s = one_d();
        let bank = bank_for(&s, 5, 1);
        let opts = OptimizeOptions { max_sweeps: 0, ..Default::default() };
        assert!(optimize(&bank, &FusionRule::And, s.constants(), RuleLabels::zeros(1, 5), &opts).is_err());
    }
}
