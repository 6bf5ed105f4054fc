use std::time::Instant;

use rumor_net::train::{gradcheck, relative_error, GradcheckConfig};

#[test]
fn tiny_preset_gradients_match_finite_differences() {
    for seed in [7, 11] {
        let start = Instant::now();
        let report = gradcheck(&GradcheckConfig::tiny(seed)).unwrap();
        println!("seed {seed} in {:?}\n{report}", start.elapsed());
        assert_eq!(report.groups.len(), 7);
        for g in &report.groups {
            assert!(g.checked > 0, "{}", g.group);
            assert!(g.max_rel_error < 1e-4, "{}: {}", g.group, g.max_rel_error);
        }
    }
}

#[test]
fn corrupted_conv_backward_is_caught() {
    let mut cfg = GradcheckConfig::tiny(7);
    cfg.corrupt_conv = true;
    let report = gradcheck(&cfg).unwrap();
    assert!(report.group("filters").unwrap().max_rel_error > 1e-2, "{report}");
    assert!(report.group("dense").unwrap().max_rel_error < 1e-4, "{report}");
}

#[test]
fn zero_parameter_model_reports_finite_errors() {
    let mut cfg = GradcheckConfig::tiny(3);
    cfg.zero_params = true;
    let report = gradcheck(&cfg).unwrap();
    assert!((report.loss - 2f64.ln()).abs() < 1e-12);
    for g in &report.groups {
        assert!(g.max_rel_error.is_finite());
    }
}

#[test]
fn relative_error_guards_zero() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert_eq!(relative_error(2.0, 1.0), 0.5);
}
