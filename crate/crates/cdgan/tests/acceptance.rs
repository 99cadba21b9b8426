//! Acceptance suite: one test per exit criterion. Each prints its
//! pass/fail lines (visible with `cargo test -- --nocapture`) and fails
//! if any check in its group fails.

use cdgan::verify;

fn run_group(group: &str) {
    let results = verify::run(Some(group)).expect("group runs");
    assert!(!results.is_empty(), "group {group} produced no checks");
    let mut all_ok = true;
    for r in &results {
        println!("{}", r.line());
        all_ok &= r.passed;
    }
    assert!(all_ok, "group {group} has failing checks");
}

#[test]
fn criterion_01_loss_oracle_equivalence() {
    run_group("losses");
}

#[test]
fn criterion_02_gradient_verification() {
    run_group("gradients");
}

#[test]
fn criterion_03_architecture_checks() {
    run_group("architecture");
}

#[test]
fn criterion_04_schedule_exactness() {
    run_group("schedule");
}

#[test]
fn criterion_05_reported_score_consistency() {
    run_group("metric-consistency");
}

#[test]
fn criterion_06_metric_axioms() {
    run_group("metric-axioms");
}

#[test]
fn criterion_07_preset_fidelity() {
    run_group("presets");
}

#[test]
fn criterion_08_toy_convergence() {
    run_group("convergence");
}

#[test]
fn criterion_09_determinism_and_resume() {
    run_group("determinism");
}

#[test]
fn criterion_10_ablation_harness() {
    run_group("ablation");
}
