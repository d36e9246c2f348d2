//! The fourteen acceptance criteria, one test each. Every test prints a
//! `CRITERION` line with the literal verdict and one `CHECK` line per check,
//! then asserts the hard checks. Run with `--nocapture` to see the report.

use rhf_pt::validation::{run_criterion, SuiteConfig};

fn criterion(id: usize) {
    let outcome = run_criterion(id, &SuiteConfig::default()).unwrap_or_else(|e| panic!("criterion {id}: {e}"));
    let mut report = outcome.summary_line();
    for c in &outcome.checks {
        report.push_str("\n    ");
        report.push_str(&c.to_string());
    }
    println!("{report}");
    assert!(outcome.seconds <= 60.0, "criterion {id} took {:.1} s", outcome.seconds);
    assert!(outcome.hard_pass(), "{report}");
}

#[test]
fn c01_first_order_energy() {
    criterion(1);
}

#[test]
fn c02_nondeg_series_consistency() {
    criterion(2);
}

#[test]
fn c03_wigner_nondeg() {
    criterion(3);
}

#[test]
fn c04_wigner_deg() {
    criterion(4);
}

#[test]
fn c05_no_splitting() {
    criterion(5);
}

#[test]
fn c06_trace_structure() {
    criterion(6);
}

#[test]
fn c07_response_structure() {
    criterion(7);
}

#[test]
fn c08_evaluator_cross_check() {
    criterion(8);
}

#[test]
fn c09_mo_dm_equivalence() {
    criterion(9);
}

#[test]
fn c10_theta_structure() {
    criterion(10);
}

#[test]
fn c11_first_order_deg_blocks() {
    criterion(11);
}

#[test]
fn c12_uniqueness_condition() {
    criterion(12);
}

#[test]
fn c13_pi_projector() {
    criterion(13);
}

#[test]
fn c14_chart_gradient() {
    criterion(14);
}
