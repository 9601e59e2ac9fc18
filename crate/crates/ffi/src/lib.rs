//! C ABI over the `mcfusion` library.
//!
//! Objects are opaque heap handles created by `mcf_*` constructors and
//! released with the matching `*_free`. Every fallible call returns a
//! [`McfStatus`]; on failure [`mcf_last_error_message`] describes the error
//! for the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mcfusion::config::{ScenarioFile, EXAMPLE1_TOML, EXAMPLE2_TOML};
use mcfusion::detector::{DeployedRule, EvaluationSet};
use mcfusion::fusion::FusionRule;
use mcfusion::model::Scenario;
use mcfusion::optimizer::{cost_mc, optimize, Init, OptimizeOptions, RuleLabels};
use mcfusion::sampling::{build_trial, draw_bank, SampleBank, TrialKind};
use mcfusion::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    /// Results were written but the optimizer hit its sweep limit.
    NotConverged = 3,
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McfTrial {
    Gaussian = 0,
    Mixture = 1,
}

pub struct McfScenario(Scenario);
pub struct McfBank(SampleBank);
pub struct McfRule(FusionRule);
pub struct McfLabels(RuleLabels);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<McfStatus, Failure>) -> McfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            if status == McfStatus::Ok {
                set_error("");
            }
            status
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            McfStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            McfStatus::InvalidInput
        }
        Err(_) => {
            set_error("internal error (panic)");
            McfStatus::Internal
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Config(format!("{what} is not valid UTF-8"))))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `mcf_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mcf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML scenario file.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out_scenario` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_from_toml(toml: *const c_char, out_scenario: *mut *mut McfScenario) -> McfStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let s = ScenarioFile::parse(text(toml, "toml")?)?.scenario()?;
        *slot = boxed(McfScenario(s));
        Ok(McfStatus::Ok)
    })
}

/// Built-in scenario: 1 is ten sensors with a common signal, 2 is one hundred
/// sensors on fifty paths.
///
/// # Safety
/// `out_scenario` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_example(id: u32, out_scenario: *mut *mut McfScenario) -> McfStatus {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let toml = match id {
            1 => EXAMPLE1_TOML,
            2 => EXAMPLE2_TOML,
            other => return Err(Error::Config(format!("unknown example {other}")).into()),
        };
        *slot = boxed(McfScenario(ScenarioFile::parse(toml)?.scenario()?));
        Ok(McfStatus::Ok)
    })
}

/// # Safety
/// `scenario` must come from an `mcf_scenario_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_free(scenario: *mut McfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_num_sensors(scenario: *const McfScenario, out_sensors: *mut usize) -> McfStatus {
    guard(|| {
        *out(out_sensors, "out_sensors")? = get(scenario, "scenario")?.0.num_sensors();
        Ok(McfStatus::Ok)
    })
}

/// The constants `a`, `b`, `c` of the simplified Bayes cost.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_scenario_constants(
    scenario: *const McfScenario,
    out_a: *mut f64,
    out_b: *mut f64,
    out_c: *mut f64,
) -> McfStatus {
    guard(|| {
        let k = get(scenario, "scenario")?.0.constants();
        *out(out_a, "out_a")? = k.a;
        *out(out_b, "out_b")? = k.b;
        *out(out_c, "out_c")? = k.c;
        Ok(McfStatus::Ok)
    })
}

/// Draws `n` importance samples.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_bank_draw(
    scenario: *const McfScenario,
    trial: McfTrial,
    n: usize,
    seed: u64,
    out_bank: *mut *mut McfBank,
) -> McfStatus {
    guard(|| {
        let slot = out(out_bank, "out_bank")?;
        let s = &get(scenario, "scenario")?.0;
        let kind = match trial {
            McfTrial::Gaussian => TrialKind::GaussianFit,
            McfTrial::Mixture => TrialKind::HypothesisMixture,
        };
        let bank = draw_bank(&build_trial(s, kind)?, s, n, seed)?;
        *slot = boxed(McfBank(bank));
        Ok(McfStatus::Ok)
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_bank_len(bank: *const McfBank, out_len: *mut usize) -> McfStatus {
    guard(|| {
        *out(out_len, "out_len")? = get(bank, "bank")?.0.len();
        Ok(McfStatus::Ok)
    })
}

/// # Safety
/// `bank` must come from `mcf_bank_draw` or be null.
#[no_mangle]
pub unsafe extern "C" fn mcf_bank_free(bank: *mut McfBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Parses a fusion rule such as `"and"`, `"k-of-l:4"`, `"paths:50"` or
/// `"truth-table:e8"` for `sensors` sensors.
///
/// # Safety
/// `spec` must be NUL-terminated and `out_rule` valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_rule_parse(spec: *const c_char, sensors: usize, out_rule: *mut *mut McfRule) -> McfStatus {
    guard(|| {
        let slot = out(out_rule, "out_rule")?;
        *slot = boxed(McfRule(FusionRule::parse(text(spec, "spec")?, sensors)?));
        Ok(McfStatus::Ok)
    })
}

/// # Safety
/// `rule` must come from `mcf_rule_parse` or be null.
#[no_mangle]
pub unsafe extern "C" fn mcf_rule_free(rule: *mut McfRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Gauss-Seidel optimization from the labels `I[lhat]`. Returns
/// `NotConverged` when `max_sweeps` ran out; the outputs are written either way.
///
/// # Safety
/// Pointers must be valid; `out_sweeps` and `out_cost` may be null.
#[no_mangle]
pub unsafe extern "C" fn mcf_optimize(
    bank: *const McfBank,
    rule: *const McfRule,
    max_sweeps: usize,
    out_labels: *mut *mut McfLabels,
    out_sweeps: *mut usize,
    out_cost: *mut f64,
) -> McfStatus {
    guard(|| {
        let slot = out(out_labels, "out_labels")?;
        let b = &get(bank, "bank")?.0;
        let f = &get(rule, "rule")?.0;
        let options = OptimizeOptions {
            max_sweeps,
            ..Default::default()
        };
        let (labels, trace) = optimize(b, f, b.constants(), Init::Analytic.build(b), &options)?;
        if let Some(s) = out_sweeps.as_mut() {
            *s = trace.sweeps_used;
        }
        if let Some(c) = out_cost.as_mut() {
            *c = trace.final_cost();
        }
        *slot = boxed(McfLabels(labels));
        if trace.converged {
            Ok(McfStatus::Ok)
        } else {
            set_error(format!("not converged after {max_sweeps} sweeps"));
            Ok(McfStatus::NotConverged)
        }
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_labels_get(labels: *const McfLabels, sensor: usize, sample: usize, out_bit: *mut u8) -> McfStatus {
    guard(|| {
        let slot = out(out_bit, "out_bit")?;
        let l = &get(labels, "labels")?.0;
        if sensor >= l.sensors() || sample >= l.samples() {
            return Err(Error::InvalidLabels(format!(
                "({sensor}, {sample}) outside {}x{} labels",
                l.sensors(),
                l.samples()
            ))
            .into());
        }
        *slot = u8::from(l.get(sensor, sample));
        Ok(McfStatus::Ok)
    })
}

/// # Safety
/// `labels` must come from `mcf_optimize` or be null.
#[no_mangle]
pub unsafe extern "C" fn mcf_labels_free(labels: *mut McfLabels) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

/// Monte Carlo cost of `labels` on `bank` under `rule`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_cost_mc(
    bank: *const McfBank,
    labels: *const McfLabels,
    rule: *const McfRule,
    out_cost: *mut f64,
) -> McfStatus {
    guard(|| {
        let slot = out(out_cost, "out_cost")?;
        let b = &get(bank, "bank")?.0;
        *slot = cost_mc(b, &get(labels, "labels")?.0, &get(rule, "rule")?.0, b.constants())?;
        Ok(McfStatus::Ok)
    })
}

/// Deploys `labels` by nearest training sample and estimates `pf`, `pd` on
/// `m` fresh draws per hypothesis.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcf_evaluate(
    scenario: *const McfScenario,
    bank: *const McfBank,
    labels: *const McfLabels,
    rule: *const McfRule,
    m: usize,
    seed: u64,
    out_pf: *mut f64,
    out_pd: *mut f64,
) -> McfStatus {
    guard(|| {
        let pf = out(out_pf, "out_pf")?;
        let pd = out(out_pd, "out_pd")?;
        let s = &get(scenario, "scenario")?.0;
        let b = &get(bank, "bank")?.0;
        if b.sensor_dims() != s.sensor_dims() {
            return Err(Error::InvalidBank("bank was drawn for a different sensor layout".into()).into());
        }
        let deployed = DeployedRule::deploy(b, &get(labels, "labels")?.0)?;
        let draws = EvaluationSet::draw(s, m, seed)?;
        let point = draws.evaluate_system(s, &deployed, &get(rule, "rule")?.0, 1.0)?;
        *pf = point.pf;
        *pd = point.pd;
        Ok(McfStatus::Ok)
    })
}
