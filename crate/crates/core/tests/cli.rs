use std::path::Path;
use std::process::{Command, Output};

use finsler_core::cli::Report;

fn finsler(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_finsler"));
    cmd.args(args).env_remove("FINSLER_OUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("FINSLER_OUT_DIR", d);
    }
    cmd.output().expect("binary runs")
}

fn report(out: &Output) -> Report {
    Report::from_json(&String::from_utf8_lossy(&out.stdout)).expect("stdout holds a JSON report")
}

#[test]
fn sphere_analysis_reports_unit_curvature_and_rank_three() {
    let out = finsler(&["analyze", "--kernel", "sphere", "--depth", "3"], None);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let fit = r.results().curvature_fit.as_ref().unwrap();
    assert!((fit.c_estimate - 1.0).abs() < 1e-6);
    assert_eq!(r.results().algebra.as_ref().unwrap().rank, 3);
}

#[test]
fn heisenberg_analysis_rank_table_grows() {
    let out = finsler(&["analyze", "--kernel", "heisenberg-bm", "--depth", "4", "--format", "csv"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let ranks: Vec<usize> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ranks.len(), 4);
    assert_eq!(ranks[0], 3);
    assert!(ranks.windows(2).all(|w| w[1] > w[0]), "{ranks:?}");
}

#[test]
fn deterministic_sections_are_byte_identical() {
    let args = ["analyze", "--kernel", "funk", "--point", "0.3,0.1,-0.2", "--seed", "4"];
    let a = report(&finsler(&args, None));
    let b = report(&finsler(&args, None));
    assert_eq!(a.deterministic_json(), b.deterministic_json());
    let c = report(&finsler(&["analyze", "--kernel", "funk", "--point", "0.3,0.1,-0.2", "--seed", "5"], None));
    assert_ne!(a.deterministic_json(), c.deterministic_json());
}

#[test]
fn configuration_errors_exit_with_two() {
    assert_eq!(finsler(&["analyze", "--kernel", "bogus"], None).status.code(), Some(2));
    assert_eq!(finsler(&["analyze", "--point", "0,0"], None).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "kernel = 'sphere'\nsamples = 10\n").unwrap();
    assert_eq!(
        finsler(&["analyze", "--config", cfg.to_str().unwrap()], None).status.code(),
        Some(2)
    );
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "kernel = 'sphere'\nsample_count = 20\ndepth = 2\n[tolerances]\ntol_rank = 1e-8\n").unwrap();
    let out = finsler(&["analyze", "--config", cfg.to_str().unwrap(), "--seed", "3"], None);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let c = &r.deterministic.config;
    assert_eq!((c.kernel.as_str(), c.sample_count, c.depth, c.seed), ("sphere", 20, 2, 3));
    assert_eq!(c.tolerances.tol_rank, 1e-8);
}

#[test]
fn domain_errors_exit_with_three() {
    let out = finsler(&["transport", "--kernel", "funk", "--curve", "polyline(0,0,0; 2,0,0)", "--y", "1,0,0"], None);
    assert_eq!(out.status.code(), Some(3));
    let r = report(&out);
    assert!(r.deterministic.error.as_ref().unwrap().message.contains("left the cone"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = finsler(&["analyze", "--kernel", "euclidean", "--depth", "2"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let written = std::fs::read_to_string(dir.path().join("analyze.json")).unwrap();
    let r = Report::from_json(&written).unwrap();
    assert_eq!(r.results().algebra.as_ref().unwrap().rank, 0);
    // The summary goes to standard output.
    assert!(String::from_utf8_lossy(&out.stdout).contains("rank"));
}

#[test]
fn euclidean_loops_are_trivial() {
    let out = finsler(&["transport", "--kernel", "euclidean", "--curve", "square(plane=12, side=0.5)", "--samples", "8"], None);
    assert_eq!(out.status.code(), Some(0));
    let t = report(&out).results().transport.clone().unwrap();
    assert_eq!(t.max_f_drift, 0.0);
    assert_eq!(t.oracle_error, Some(0.0));
    assert_eq!(t.distance_from_identity, Some(0.0));
}

#[test]
fn sphere_octant_matches_quarter_turn() {
    let out = finsler(&["transport", "--kernel", "sphere", "--curve", "octant(plane=12)", "--samples", "6", "--steps", "500"], None);
    assert_eq!(out.status.code(), Some(0));
    let t = report(&out).results().transport.clone().unwrap();
    assert!(t.oracle_error.unwrap() < 1e-4);
}

#[test]
fn heisenberg_square_keeps_f() {
    let out = finsler(
        &["transport", "--kernel", "heisenberg-bm", "--curve", "square(plane=13, side=0.05)", "--samples", "8", "--steps", "500"],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(report(&out).results().transport.as_ref().unwrap().max_f_drift < 1e-8);
}

#[test]
fn verify_appendix_exit_codes() {
    let ok = finsler(&["verify-appendix"], None);
    assert_eq!(ok.status.code(), Some(0));
    assert!(report(&ok).results().appendix.as_ref().unwrap().all_passed);

    let flipped = finsler(&["verify-appendix", "--sign-flip", "1,2"], None);
    assert_eq!(flipped.status.code(), Some(1));
    let r = report(&flipped);
    assert_eq!(
        r.results().appendix.as_ref().unwrap().first_failure.as_deref(),
        Some("closed-form-unit-values")
    );
    assert!(r.deterministic.error.as_ref().unwrap().message.contains("closed-form-unit-values"));

    // The differenced path is accurate to about 1e-12, not better.
    let tight = finsler(&["verify-appendix", "--fd-tol", "1e-12"], None);
    assert_eq!(tight.status.code(), Some(1));
    assert_eq!(
        report(&tight).results().appendix.as_ref().unwrap().first_failure.as_deref(),
        Some("finite-difference-unit-values")
    );
}

#[test]
fn text_report_is_aligned() {
    let out = finsler(&["analyze", "--kernel", "sphere", "--depth", "2", "--format", "text"], None);
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("constant curvature c")).unwrap();
    assert!(line.ends_with("1.000000000"));
}
