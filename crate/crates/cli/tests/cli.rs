use std::fs;
use std::path::Path;
use std::process::Command;

use rhodium_cli::{run, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("rhodium").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn value_of(csv: &str, quantity: &str) -> f64 {
    csv.lines()
        .find_map(|l| {
            let mut f = l.split(',');
            (f.next() == Some(quantity)).then(|| f.next().unwrap().parse().unwrap())
        })
        .unwrap_or_else(|| panic!("{quantity} missing from\n{csv}"))
}

#[test]
fn estimate_prints_scalar_estimates() {
    let (code, out, _) = call(&["estimate"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("quantity,value,unit\n"));
    let linewidth = value_of(&out, "linewidth");
    assert!((linewidth / 1.355e-19 - 1.0).abs() < 1e-3, "{linewidth}");
    let speed = value_of(&out, "doppler_speed");
    assert!((0.8e-15..1.2e-15).contains(&speed), "{speed}");
    let strain = value_of(&out, "strain_rate");
    assert!((strain / 9.25e-13 - 1.0).abs() < 1e-2, "{strain}");
    assert!((value_of(&out, "tau_d_over_tau0") - 0.88).abs() < 1e-12);
}

#[test]
fn estimate_json_and_overrides() {
    let (code, out, _) = call(&["estimate", "--format", "json", "--set", "estimate.f_lm=1"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["tau_d_over_tau0"].as_f64().unwrap() - 0.44).abs() < 1e-12);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(call(&["bogus"]).0, EXIT_USAGE);
    assert_eq!(call(&[]).0, EXIT_USAGE);
    assert_eq!(call(&["estimate", "--format", "xml"]).0, EXIT_USAGE);
    assert_eq!(call(&["estimate", "--set", "nonsense"]).0, EXIT_USAGE);
    assert_eq!(call(&["estimate", "--set", "beat.colour=1"]).0, EXIT_USAGE);
    assert_eq!(call(&["--config", "/nonexistent/config.json", "estimate"]).0, EXIT_USAGE);
    assert_eq!(call(&["--help"]).0, EXIT_OK);
}

#[test]
fn malformed_config_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"seed\": 3,\n  \"beat\": {\"n0\": }\n}\n").unwrap();
    let (code, _, err) = call(&["--config", path.to_str().unwrap(), "estimate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("line 3") && err.contains("column"), "{err}");
}

#[test]
fn domain_errors_exit_one() {
    let (code, _, err) = call(&["flm", "--set", "geometry.theta=2.0"]);
    assert_eq!(code, EXIT_DOMAIN, "{err}");
    let (code, _, _) = call(&["estimate", "--set", "estimate.xi=0"]);
    assert_eq!(code, EXIT_DOMAIN);
}

#[test]
fn bragg_lists_rhodium_solutions() {
    let (code, out, _) = call(&["bragg"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("theta_deg,h,k,l,residual"));
    let theta: f64 = lines.next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((7.6..7.7).contains(&theta), "{theta}");
}

#[test]
fn fieldmap_emits_full_grid() {
    let (code, out, _) = call(&["fieldmap", "--set", "fieldmap.nu=5", "--set", "fieldmap.nv=4"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 21);
    assert_eq!(lines[0], "x_m,y_m,z_m,ex_re,ex_im,ey_re,ey_im,ez_re,ez_im,e_abs");
    // the origin is a lattice site, where the field cancels
    let e_abs: f64 = lines[1].split(',').last().unwrap().parse().unwrap();
    assert!(e_abs < 1e-12, "{e_abs}");
}

#[test]
fn flm_prints_one_row() {
    let (code, out, _) = call(&["flm", "--set", "flm.ensemble.n_samples=20000", "--seed", "5"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "value,stderr,interpretation,closed_form,z_score");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[2], "coherent");
    let z: f64 = fields[4].parse().unwrap();
    assert!(z.abs() < 4.0, "{z}");
}

#[test]
fn beat_curve_on_grid() {
    let (code, out, _) = call(&["beat", "--set", "grid.count=11"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 12);
    assert!(out.starts_with("t_s,intensity\n0.0,"));
}

const SIM: &[&str] = &[
    "--set", "beat.tau_d=485.7",
    "--set", "beat.n0=40",
    "--set", "beat.phi0=0.7",
    "--set", "beat.t_pump=3600",
    "--set", "simulate.binning.width=60",
    "--set", "simulate.binning.horizon=36000",
];

fn simulate_into(dir: &Path, seed: &str) {
    let mut args = SIM.to_vec();
    args.extend(["--seed", seed, "--out", dir.to_str().unwrap(), "simulate"]);
    let (code, _, err) = call(&args);
    assert_eq!(code, EXIT_OK, "{err}");
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    simulate_into(&a, "11");
    simulate_into(&b, "11");
    simulate_into(&c, "12");
    for name in ["gamma.csv", "kalpha.csv"] {
        let (x, y, z) = (
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            fs::read(c.join(name)).unwrap(),
        );
        assert_eq!(x, y, "{name}");
        assert_ne!(x, z, "{name}");
    }
    let text = fs::read_to_string(a.join("gamma.csv")).unwrap();
    assert!(text.starts_with("t_start_s,width_s,counts,channel\n"));
    assert_eq!(text.lines().count(), 601);
}

#[test]
fn simulate_then_fit_recovers_tau_d() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "21");
    let gamma = dir.path().join("gamma.csv");
    let fit_path = dir.path().join("fit.json");
    let mut args = SIM.to_vec();
    args.extend(["--set", "beat.tau_d=4857", "--set", "beat.phi0=0"]);
    args.extend(["--out", fit_path.to_str().unwrap(), "fit", gamma.to_str().unwrap()]);
    let (code, _, err) = call(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    let first = fs::read(&fit_path).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let tau_d = v["params"]["tau_d"].as_f64().unwrap();
    assert!((tau_d / 485.7 - 1.0).abs() < 0.05, "{tau_d}");
    assert!(v["converged"].as_bool().unwrap());
    for key in ["chi2", "dof", "covariance"] {
        assert!(!v[key].is_null(), "{key}");
    }

    let (code, _, _) = call(&args);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read(&fit_path).unwrap(), first);
}

#[test]
fn normalize_writes_ratio_series() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "4");
    let g = dir.path().join("gamma.csv");
    let k = dir.path().join("kalpha.csv");
    let (code, out, err) = call(&["normalize", g.to_str().unwrap(), k.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("t_start_s,width_s,ratio,sigma\n"));
    assert_eq!(out.lines().count(), 601);

    let mismatched = dir.path().join("short.csv");
    let short: String = fs::read_to_string(&k).unwrap().lines().take(10).map(|l| format!("{l}\n")).collect();
    fs::write(&mismatched, short).unwrap();
    let (code, _, _) = call(&["normalize", g.to_str().unwrap(), mismatched.to_str().unwrap()]);
    assert_eq!(code, EXIT_DOMAIN);
}

#[test]
fn fit_rejects_bad_series_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "t_start_s,width_s,counts,channel\n0,60,5,gamma\n30,60,5,gamma\n").unwrap();
    let (code, _, err) = call(&["fit", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_DOMAIN);
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_rhodium");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["estimate"]), Some(EXIT_OK));
    assert_eq!(status(&["nope"]), Some(EXIT_USAGE));
    assert_eq!(status(&["estimate", "--set", "rhodium.tau0=-1"]), Some(EXIT_DOMAIN));
}
