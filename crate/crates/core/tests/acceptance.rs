//! Acceptance suite: one test per criterion, each printing one `[PASS]`/`[FAIL]` line.
//!
//! Lines go straight to the stdout handle so they appear without `--nocapture`. The pair runs
//! behind criteria 8 to 10 are computed once and shared.

use std::io::Write;

use dnls_core::lab::criteria::evaluate;

fn criterion(id: usize) {
    let outcome = evaluate(id);
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", outcome.line());
    let _ = out.flush();
    assert!(outcome.pass(), "criterion {id} failed:\n{}", outcome.details().join("\n"));
}

#[test]
fn criterion_01_closed_form_audit() {
    criterion(1);
}

#[test]
fn criterion_02_stationary_residuals() {
    criterion(2);
}

#[test]
fn criterion_03_spectral_structure() {
    criterion(3);
}

#[test]
fn criterion_04_non_degeneracy() {
    criterion(4);
}

#[test]
fn criterion_05_modulation_jacobian() {
    criterion(5);
}

#[test]
fn criterion_06_integrator_fidelity() {
    criterion(6);
}

#[test]
fn criterion_07_single_wave_stability() {
    criterion(7);
}

#[test]
fn criterion_08_two_wave_stability() {
    criterion(8);
}

#[test]
fn criterion_09_monotonicity() {
    criterion(9);
}

#[test]
fn criterion_10_inequality_suites() {
    criterion(10);
}

#[test]
fn criterion_11_coercivity_of_forms() {
    criterion(11);
}

#[test]
fn criterion_12_gauge_suite() {
    criterion(12);
}
