//! Fusion rules `F: {0,1}^L → {0,1}` and the decomposition of the H0-region
//! indicator into the per-sensor polynomials `P_j1`, `P_j2`.
//!
//! Votes are packed into `u64` words, sensor `j` at bit `j % 64` of word
//! `j / 64`. Bits past `L` in the last word are always zero, so counting
//! rules reduce to popcounts.
//!
//! `P_j1` is obtained from two fusion evaluations,
//! `P_j1(u) = F(u | u_j = 1) − F(u | u_j = 0)`: in the full sum over all
//! `2^L` patterns only the two patterns that agree with `u` off sensor `j`
//! have a nonzero product term. [`pj1_reference`] evaluates the full sum and
//! is kept as an oracle.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest sensor count accepted by the exhaustive references and truth tables.
pub const MAX_TABLE_SENSORS: usize = 20;

pub fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

#[inline]
fn get_bit(words: &[u64], i: usize) -> bool {
    (words[i / 64] >> (i % 64)) & 1 == 1
}

#[inline]
pub(crate) fn set_bit(words: &mut [u64], i: usize, value: bool) {
    let mask = 1u64 << (i % 64);
    if value {
        words[i / 64] |= mask;
    } else {
        words[i / 64] &= !mask;
    }
}

/// Borrowed view of `L` sensor votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteRef<'a> {
    words: &'a [u64],
    len: usize,
}

impl<'a> VoteRef<'a> {
    pub fn new(words: &'a [u64], len: usize) -> Self {
        debug_assert_eq!(words.len(), words_for(len));
        Self { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "sensor {i} out of range for {} votes", self.len);
        get_bit(self.words, i)
    }

    pub fn words(&self) -> &'a [u64] {
        self.words
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| get_bit(self.words, i))
    }
}

/// Owned vote vector `(u_1, …, u_L)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalVote {
    words: Vec<u64>,
    len: usize,
}

impl LocalVote {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Votes `s_k`: bit `i` of `k` is the vote of sensor `i`.
    pub fn from_index(k: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Self {
            words: vec![k & mask],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.as_ref().get(i)
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "sensor {i} out of range for {} votes", self.len);
        set_bit(&mut self.words, i, value);
    }

    pub fn as_ref(&self) -> VoteRef<'_> {
        VoteRef::new(&self.words, self.len)
    }
}

/// Black-box rule over the raw vote bits.
#[derive(Clone)]
pub struct Predicate {
    name: String,
    sensors: Option<usize>,
    eval: Arc<dyn Fn(VoteRef<'_>) -> bool + Send + Sync>,
}

impl Predicate {
    pub fn new(
        name: impl Into<String>,
        sensors: Option<usize>,
        eval: impl Fn(VoteRef<'_>) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            sensors,
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Predicate")
            .field("name", &self.name)
            .field("sensors", &self.sensors)
            .finish_non_exhaustive()
    }
}

/// Explicit table of `F(s_k)` for all `2^L` votes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    sensors: usize,
    bits: Vec<u64>,
}

impl TruthTable {
    pub fn new(sensors: usize, outputs: &[bool]) -> Result<Self> {
        if sensors == 0 || sensors > MAX_TABLE_SENSORS {
            return Err(Error::InvalidRule(format!(
                "truth tables support 1..={MAX_TABLE_SENSORS} sensors, got {sensors}"
            )));
        }
        let size = 1usize << sensors;
        if outputs.len() != size {
            return Err(Error::InvalidRule(format!(
                "truth table for {sensors} sensors needs {size} entries, got {}",
                outputs.len()
            )));
        }
        let mut bits = vec![0u64; size.div_ceil(64)];
        for (k, &b) in outputs.iter().enumerate() {
            set_bit(&mut bits, k, b);
        }
        Ok(Self { sensors, bits })
    }

    /// Table whose entry `k` is bit `k` of `code` (`L ≤ 6`).
    pub fn from_code(sensors: usize, code: u64) -> Result<Self> {
        if sensors > 6 {
            return Err(Error::InvalidRule("integer codes cover at most 6 sensors".into()));
        }
        let outputs: Vec<bool> = (0..1usize << sensors).map(|k| (code >> k) & 1 == 1).collect();
        Self::new(sensors, &outputs)
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    #[inline]
    pub fn lookup(&self, k: usize) -> bool {
        get_bit(&self.bits, k)
    }

    /// Hex digits of the integer `Σ F(s_k)·2^k`, most significant digit first.
    pub fn to_hex(&self) -> String {
        let size = 1usize << self.sensors;
        let digits = size.div_ceil(4);
        (0..digits)
            .rev()
            .map(|d| {
                let nibble = (0..4)
                    .filter(|b| {
                        let k = 4 * d + b;
                        k < size && self.lookup(k)
                    })
                    .fold(0u32, |acc, b| acc | (1 << b));
                char::from_digit(nibble, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(sensors: usize, hex: &str) -> Result<Self> {
        if sensors == 0 || sensors > MAX_TABLE_SENSORS {
            return Err(Error::InvalidRule(format!(
                "truth tables support 1..={MAX_TABLE_SENSORS} sensors, got {sensors}"
            )));
        }
        let size = 1usize << sensors;
        let digits = size.div_ceil(4);
        let hex = hex.trim();
        if hex.len() != digits {
            return Err(Error::InvalidRule(format!(
                "truth table for {sensors} sensors needs {digits} hex digits, got {}",
                hex.len()
            )));
        }
        let mut outputs = vec![false; size];
        for (d, ch) in hex.chars().rev().enumerate() {
            let nibble = ch
                .to_digit(16)
                .ok_or_else(|| Error::InvalidRule(format!("'{ch}' is not a hex digit")))?;
            for b in 0..4 {
                if (nibble >> b) & 1 == 1 {
                    let k = 4 * d + b;
                    if k >= size {
                        return Err(Error::InvalidRule(format!(
                            "truth table sets entry {k} beyond 2^{sensors}"
                        )));
                    }
                    outputs[k] = true;
                }
            }
        }
        Self::new(sensors, &outputs)
    }
}

/// Binary fusion rule applied at the fusion center.
#[derive(Debug, Clone)]
pub enum FusionRule {
    And,
    Or,
    /// At least `k` of the `L` sensors vote 1.
    KOfL(usize),
    TruthTable(TruthTable),
    Predicate(Predicate),
}

const PAIR_MASK: u64 = 0x5555_5555_5555_5555;

impl FusionRule {
    /// Parses `and`, `or`, `k-of-l:<k>`, `truth-table:<hex>`, `paths:<pairs>`
    /// or `const:<0|1>` and checks it against the sensor count.
    pub fn parse(spec: &str, sensors: usize) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (spec, None),
        };
        let need_arg = || {
            arg.ok_or_else(|| Error::InvalidRule(format!("rule '{head}' needs an argument")))
        };
        let rule = match (head.to_ascii_lowercase().as_str(), arg) {
            ("and", None) => FusionRule::And,
            ("or", None) => FusionRule::Or,
            ("k-of-l", _) => {
                let k = need_arg()?
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidRule(format!("bad k in '{spec}': {e}")))?;
                FusionRule::KOfL(k)
            }
            ("truth-table", _) => FusionRule::TruthTable(TruthTable::from_hex(sensors, need_arg()?)?),
            ("paths", _) => {
                let pairs = need_arg()?
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidRule(format!("bad pair count in '{spec}': {e}")))?;
                FusionRule::paths(pairs)
            }
            ("const", Some("0")) => FusionRule::constant(false),
            ("const", Some("1")) => FusionRule::constant(true),
            _ => return Err(Error::InvalidRule(format!("unknown fusion rule '{spec}'"))),
        };
        rule.validate(sensors)?;
        Ok(rule)
    }

    /// Decide 1 iff exactly one two-sensor path (sensors `2p`, `2p+1`)
    /// reports `(1, 1)`.
    pub fn paths(pairs: usize) -> Self {
        FusionRule::Predicate(Predicate::new(
            format!("paths:{pairs}"),
            Some(2 * pairs),
            |u: VoteRef<'_>| {
                let mut hits = 0u32;
                for w in u.words() {
                    hits += (w & (w >> 1) & PAIR_MASK).count_ones();
                    if hits > 1 {
                        return false;
                    }
                }
                hits == 1
            },
        ))
    }

    pub fn constant(value: bool) -> Self {
        FusionRule::Predicate(Predicate::new(
            format!("const:{}", u8::from(value)),
            None,
            move |_| value,
        ))
    }

    pub fn validate(&self, sensors: usize) -> Result<()> {
        if sensors == 0 {
            return Err(Error::InvalidRule("fusion needs at least one sensor".into()));
        }
        match self {
            FusionRule::KOfL(k) if *k == 0 || *k > sensors => Err(Error::InvalidRule(format!(
                "k-of-l needs 1 <= k <= {sensors}, got k = {k}"
            ))),
            FusionRule::TruthTable(t) if t.sensors() != sensors => Err(Error::InvalidRule(format!(
                "truth table covers {} sensors, scenario has {sensors}",
                t.sensors()
            ))),
            FusionRule::Predicate(p) => match p.sensors {
                Some(n) if n != sensors => Err(Error::InvalidRule(format!(
                    "rule {} expects {n} sensors, scenario has {sensors}",
                    p.name
                ))),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// `F(u)`.
    pub fn evaluate(&self, u: VoteRef<'_>) -> Result<bool> {
        self.validate(u.len())?;
        Ok(self.eval_raw(u))
    }

    /// `F(u)` without checking `u` against the rule's sensor count.
    #[inline]
    pub fn eval_raw(&self, u: VoteRef<'_>) -> bool {
        match self {
            FusionRule::And => u.count_ones() == u.len(),
            FusionRule::Or => u.words().iter().any(|w| *w != 0),
            FusionRule::KOfL(k) => u.count_ones() >= *k,
            FusionRule::TruthTable(t) => t.lookup(u.words()[0] as usize),
            FusionRule::Predicate(p) => (p.eval)(u),
        }
    }

    /// `(F(u | u_j = 1), F(u | u_j = 0))`, evaluated on `row` in place.
    /// Bit `j` of `row` is restored before returning.
    #[inline]
    pub(crate) fn eval_with_and_without(&self, row: &mut [u64], len: usize, j: usize) -> (bool, bool) {
        let original = get_bit(row, j);
        set_bit(row, j, true);
        let with = self.eval_raw(VoteRef::new(row, len));
        set_bit(row, j, false);
        let without = self.eval_raw(VoteRef::new(row, len));
        set_bit(row, j, original);
        (with, without)
    }

    /// Number of votes `k` for counting rules.
    fn threshold(&self, sensors: usize) -> Option<usize> {
        match self {
            FusionRule::And => Some(sensors),
            FusionRule::Or => Some(1),
            FusionRule::KOfL(k) => Some(*k),
            _ => None,
        }
    }

    /// True for rules that are pure vote counts.
    pub fn is_counting(&self) -> bool {
        self.threshold(1).is_some()
    }
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionRule::And => f.write_str("and"),
            FusionRule::Or => f.write_str("or"),
            FusionRule::KOfL(k) => write!(f, "k-of-l:{k}"),
            FusionRule::TruthTable(t) => write!(f, "truth-table:{}", t.to_hex()),
            FusionRule::Predicate(p) => f.write_str(&p.name),
        }
    }
}

/// `F(u)`.
pub fn evaluate(f: &FusionRule, u: &LocalVote) -> Result<bool> {
    f.evaluate(u.as_ref())
}

/// `P_j1` at the other sensors' votes in `u`, via two fusion evaluations.
pub fn pj1(f: &FusionRule, u: &LocalVote, j: usize) -> Result<i8> {
    f.validate(u.len())?;
    check_sensor(j, u.len())?;
    let mut row = u.words.clone();
    let (with, without) = f.eval_with_and_without(&mut row, u.len(), j);
    Ok(i8::from(with) - i8::from(without))
}

/// `I_Ω0 = 1 − F(u)`.
pub fn indicator_omega0(f: &FusionRule, u: &LocalVote) -> Result<bool> {
    Ok(!evaluate(f, u)?)
}

fn check_sensor(j: usize, len: usize) -> Result<()> {
    if j < len {
        Ok(())
    } else {
        Err(Error::InvalidRule(format!("sensor {j} out of range for {len} sensors")))
    }
}

/// Sums `weight(s_k) · Π_{m≠j} [s_k(m) u_m + (1 − s_k(m))(1 − u_m)]` over all
/// `2^L` votes `s_k`.
fn reference_sum(
    f: &FusionRule,
    u: &LocalVote,
    j: usize,
    weight: impl Fn(bool, bool) -> i64,
) -> Result<i64> {
    let len = u.len();
    if len > MAX_TABLE_SENSORS {
        return Err(Error::TooLarge(format!(
            "reference polynomials enumerate 2^L terms; L = {len} exceeds {MAX_TABLE_SENSORS}"
        )));
    }
    f.validate(len)?;
    check_sensor(j, len)?;
    let mut total = 0i64;
    for k in 0..(1u64 << len) {
        let s = LocalVote::from_index(k, len);
        let fused = f.eval_raw(s.as_ref());
        let mut product = 1i64;
        for m in (0..len).filter(|&m| m != j) {
            let (sm, um) = (i64::from(s.get(m)), i64::from(u.get(m)));
            product *= sm * um + (1 - sm) * (1 - um);
        }
        total += weight(fused, s.get(j)) * product;
    }
    Ok(total)
}

/// `P_j1 = Σ_k [1 − F(s_k)] [1 − 2 s_k(j)] Π_{m≠j} (…)`, by full enumeration.
pub fn pj1_reference(f: &FusionRule, u: &LocalVote, j: usize) -> Result<i64> {
    reference_sum(f, u, j, |fused, sj| {
        (1 - i64::from(fused)) * (1 - 2 * i64::from(sj))
    })
}

/// `P_j2 = Σ_k [1 − F(s_k)] s_k(j) Π_{m≠j} (…)`, by full enumeration.
pub fn pj2_reference(f: &FusionRule, u: &LocalVote, j: usize) -> Result<i64> {
    reference_sum(f, u, j, |fused, sj| (1 - i64::from(fused)) * i64::from(sj))
}
