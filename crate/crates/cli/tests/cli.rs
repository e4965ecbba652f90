use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn tdft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdft"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Numeric value of a top-level field in the pretty-printed report.
fn json_number(report: &str, key: &str) -> f64 {
    let pattern = format!("\"{key}\": ");
    let start = report
        .find(&pattern)
        .unwrap_or_else(|| panic!("missing {key}"))
        + pattern.len();
    let rest = &report[start..];
    rest[..rest.find([',', '\n']).unwrap()].parse().unwrap()
}

fn json_bool(report: &str, key: &str) -> bool {
    json_number_text(report, key) == "true"
}

fn json_number_text<'a>(report: &'a str, key: &str) -> &'a str {
    let pattern = format!("\"{key}\": ");
    let start = report.find(&pattern).unwrap() + pattern.len();
    let rest = &report[start..];
    &rest[..rest.find([',', '\n']).unwrap()]
}

#[test]
fn evolve_emits_trace_with_worked_angle() {
    let out = tdft(&["evolve"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t_us,g1,g2,f,theta,p_ge,p_eg,entropy");
    assert_eq!(lines.len(), 402);
    let last: Vec<f64> = lines[401].split(',').map(|f| f.parse().unwrap()).collect();
    assert!((last[4] - 3.7600).abs() <= 1e-3, "theta {}", last[4]);
    assert!((last[7] - 0.9214).abs() <= 1e-3);
}

#[test]
fn evolve_in_exact_mode_from_config_file() {
    let config = scratch("slow.cfg");
    fs::write(&config, "# small detuning, slow transit\ng0_mhz = 0.05\ndelta_mhz = 1\nd_um = 1\nv_mps = 0.01\nz1_0_um = -5\nz2_0_um = -5\nmode = exact\n").unwrap();
    let out_file = scratch("exact.csv");
    let out = tdft(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
        "evolve",
        "--samples",
        "11",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&out_file).unwrap();
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    let theta = last[4];
    // exact populations track the rotation to the order of (g0/Δ)^2
    assert!(
        (last[6] - theta.sin().powi(2)).abs() < 0.05 * 0.05 * 5.0,
        "{} vs {}",
        last[6],
        theta.sin().powi(2)
    );
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let args = [
        "sweep",
        "--nv",
        "13",
        "--nz",
        "9",
        "--z0_min",
        "-3",
        "--mode",
        "quadrature",
    ];
    let one = tdft(&[&["--threads", "1"], &args[..]].concat());
    let four = tdft(&[&["--threads", "4"], &args[..]].concat());
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
    let text = stdout(&one);
    assert!(text.starts_with("v_reduced,z0_reduced,theta_inf,entropy\n"));
    assert_eq!(text.lines().count(), 1 + 13 * 9);
}

#[test]
fn contours_table() {
    let out = tdft(&["contours", "--nz", "5", "--z0_min", "0", "--z0_max", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,z0_reduced,v_reduced");
    assert_eq!(lines.len(), 1 + 7 * 5);
    let v: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((v - 1.5958).abs() <= 1e-4);
    let v: f64 = lines[5].split(',').nth(2).unwrap().parse().unwrap();
    assert!((v - 0.2160).abs() <= 1e-4);

    let out = tdft(&["contours", "--n_max", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n_max"));
    assert!(tdft(&["contours", "--n_max", "9", "--allow_large_n"])
        .status
        .success());
}

#[test]
fn config_errors_exit_with_two_and_name_the_key() {
    for (args, key) in [
        (vec!["--v_mps", "fast", "evolve"], "v_mps"),
        (vec!["--v_mps", "-3", "evolve"], "v_mps"),
        (
            vec!["--mode", "exact", "sweep", "--nv", "2", "--nz", "2"],
            "mode",
        ),
        (vec!["--g0_mhz", "3000", "evolve"], "g0_mhz"),
        (vec!["sweep", "--nv", "1"], "nv"),
    ] {
        let out = tdft(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).contains(key), "{args:?}: {}", stderr(&out));
    }
    let config = scratch("bad.cfg");
    fs::write(&config, "g0_mhz = 100\ncolour = blue\n").unwrap();
    let out = tdft(&["--config", config.to_str().unwrap(), "evolve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"));

    let out = tdft(&["--step_factor", "0.05", "evolve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_without_coupling_passes_trivially() {
    let out = tdft(&["--g0_mhz", "0", "verify"]);
    let report = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{report}{}", stderr(&out));
    for key in [
        "generator_residual",
        "appendix_equivalence_max_error",
        "tdft_vs_exact_entropy_error",
        "tdft_vs_exact_max_population_error",
        "tdft_vs_exact_norm_defect",
        "tdft_vs_exact_excitation_deviation",
        "quadrature_vs_closed_form_theta_error",
    ] {
        assert!(json_number(&report, key) <= 1e-12, "{key}");
    }
    assert!(json_bool(&report, "passed"));
}

#[test]
fn verify_flags_strong_coupling() {
    let out = tdft(&["--g0_mhz", "3000", "--unsafe", "verify"]);
    let report = stdout(&out);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(!json_bool(&report, "passed"));
    assert!(!json_bool(
        &report,
        "tdft_vs_exact_max_population_error_passed"
    ));
    assert!(json_number(&report, "tdft_vs_exact_max_population_error") > 0.1);
}

/// The exit status of the default run agrees with the report it prints.
#[test]
fn verify_exit_status_follows_report() {
    let out_file = scratch("verify.json");
    let out = tdft(&["--out", out_file.to_str().unwrap(), "verify"]);
    let report = fs::read_to_string(&out_file).unwrap();
    assert!(report.ends_with("}\n"));
    assert!(!report.contains("NaN"));
    let passed = json_bool(&report, "passed");
    assert_eq!(out.status.code(), Some(if passed { 0 } else { 1 }));
    let limit = json_number(&report, "tdft_vs_exact_max_population_error_threshold");
    assert!((limit - 5e-4).abs() < 1e-9);
    assert!(json_number(&report, "tdft_vs_exact_entropy_error") <= 0.02);
    assert!(json_bool(&report, "generator_residual_passed"));
    assert!(json_bool(&report, "appendix_equivalence_passed"));
}
