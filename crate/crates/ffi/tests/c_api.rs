use std::ffi::{CStr, CString};
use std::ptr;

use mcfusion_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mcf_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn optimize_through_handles() {
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(mcf_scenario_example(1, &mut scenario), McfStatus::Ok);
        let mut sensors = 0;
        assert_eq!(mcf_scenario_num_sensors(scenario, &mut sensors), McfStatus::Ok);
        assert_eq!(sensors, 10);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        assert_eq!(mcf_scenario_constants(scenario, &mut a, &mut b, &mut c), McfStatus::Ok);
        assert_eq!((a, b, c), (0.5, 0.5, 0.5));

        let mut bank = ptr::null_mut();
        assert_eq!(mcf_bank_draw(scenario, McfTrial::Gaussian, 500, 3, &mut bank), McfStatus::Ok);
        let mut len = 0;
        assert_eq!(mcf_bank_len(bank, &mut len), McfStatus::Ok);
        assert_eq!(len, 500);

        let spec = CString::new("and").unwrap();
        let mut rule = ptr::null_mut();
        assert_eq!(mcf_rule_parse(spec.as_ptr(), sensors, &mut rule), McfStatus::Ok);

        let mut labels = ptr::null_mut();
        let (mut sweeps, mut cost) = (0, 0.0);
        assert_eq!(mcf_optimize(bank, rule, 100, &mut labels, &mut sweeps, &mut cost), McfStatus::Ok);
        assert!(sweeps >= 1);
        let mut again = 0.0;
        assert_eq!(mcf_cost_mc(bank, labels, rule, &mut again), McfStatus::Ok);
        assert_eq!(again, cost);

        let mut bit = 7u8;
        assert_eq!(mcf_labels_get(labels, 9, 499, &mut bit), McfStatus::Ok);
        assert!(bit <= 1);
        assert_eq!(mcf_labels_get(labels, 10, 0, &mut bit), McfStatus::InvalidInput);
        assert!(last_error().contains("outside"));

        let (mut pf, mut pd) = (-1.0, -1.0);
        assert_eq!(mcf_evaluate(scenario, bank, labels, rule, 2000, 5, &mut pf, &mut pd), McfStatus::Ok);
        assert!((0.0..=1.0).contains(&pf) && (0.0..=1.0).contains(&pd));
        assert!(last_error().is_empty());

        mcf_labels_free(labels);
        mcf_rule_free(rule);
        mcf_bank_free(bank);
        mcf_scenario_free(scenario);
    }
}

#[test]
fn errors_are_reported_not_thrown() {
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(mcf_scenario_example(3, &mut scenario), McfStatus::InvalidInput);
        assert!(scenario.is_null());
        assert_eq!(mcf_scenario_example(1, ptr::null_mut()), McfStatus::NullPointer);
        assert!(last_error().contains("out_scenario"));

        let bad = CString::new("name = \"x\"\nsensors = 1\n[priors]\np0 = 0.6\np1 = 0.6\n").unwrap();
        assert_eq!(mcf_scenario_from_toml(bad.as_ptr(), &mut scenario), McfStatus::InvalidInput);
        assert!(!last_error().is_empty());

        let spec = CString::new("k-of-l:11").unwrap();
        let mut rule = ptr::null_mut();
        assert_eq!(mcf_rule_parse(spec.as_ptr(), 10, &mut rule), McfStatus::InvalidInput);
        assert_eq!(mcf_rule_parse(ptr::null(), 10, &mut rule), McfStatus::NullPointer);

        let mut len = 0;
        assert_eq!(mcf_bank_len(ptr::null(), &mut len), McfStatus::NullPointer);
        mcf_scenario_free(ptr::null_mut());
        mcf_bank_free(ptr::null_mut());
    }
}

#[test]
fn sweep_limit_is_reported_with_results() {
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(mcf_scenario_example(1, &mut scenario), McfStatus::Ok);
        let mut bank = ptr::null_mut();
        assert_eq!(mcf_bank_draw(scenario, McfTrial::Mixture, 300, 1, &mut bank), McfStatus::Ok);
        // one sweep may or may not suffice; labels come back either way
        let spec = CString::new("k-of-l:4").unwrap();
        let mut rule = ptr::null_mut();
        assert_eq!(mcf_rule_parse(spec.as_ptr(), 10, &mut rule), McfStatus::Ok);
        let mut labels = ptr::null_mut();
        let mut sweeps = 0;
        let status = mcf_optimize(bank, rule, 1, &mut labels, &mut sweeps, ptr::null_mut());
        assert!(matches!(status, McfStatus::Ok | McfStatus::NotConverged));
        assert!(!labels.is_null());
        assert_eq!(sweeps, 1);
        mcf_labels_free(labels);
        mcf_rule_free(rule);
        mcf_bank_free(bank);
        mcf_scenario_free(scenario);
    }
}

#[test]
fn generated_header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mcfusion.h")).unwrap();
    for name in [
        "mcf_last_error_message",
        "mcf_version",
        "mcf_scenario_from_toml",
        "mcf_scenario_example",
        "mcf_scenario_free",
        "mcf_bank_draw",
        "mcf_rule_parse",
        "mcf_optimize",
        "mcf_labels_get",
        "mcf_cost_mc",
        "mcf_evaluate",
        "typedef struct McfScenario McfScenario",
        "MCF_STATUS_NOT_CONVERGED = 3",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(mcf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
