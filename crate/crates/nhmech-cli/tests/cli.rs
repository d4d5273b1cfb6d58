use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn nhmech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhmech")).args(args).output().expect("run nhmech")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_free_particle_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let o = nhmech(&[
        "simulate",
        "--system",
        "free_particle",
        "--q0",
        "0,0,0",
        "--v0",
        "1,0,0",
        "--dt",
        "1e-3",
        "--steps",
        "1000",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,q1,q2,q3,v1,v2,v3,lam1,energy,psi_max");
    let energies: Vec<f64> = lines.map(|l| l.split(',').nth(8).unwrap().parse().unwrap()).collect();
    assert_eq!(energies.len(), 1001);
    assert!(energies.iter().all(|e| (e - energies[0]).abs() < 1e-8));
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.starts_with("steps=1000 energy_drift="), "{summary}");
    assert!(summary.contains("max_psi="));
}

#[test]
fn simulate_zero_steps_writes_one_row() {
    let o = nhmech(&["simulate", "--system", "free_particle", "--v0", "1,0,0", "--steps", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
}

#[test]
fn simulate_off_constraint_reports_residual() {
    let o = nhmech(&["simulate", "--system", "free_particle", "--q0", "0,1,0", "--v0", "1,0,0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("residual 1e0"), "{}", stderr(&o));
}

#[test]
fn simulate_overflow_is_a_numerical_failure() {
    let y = format!("{:?}", 2f64.powi(510));
    let z = format!("{:?}", 2f64.powi(1020));
    let q0 = format!("0,{y},0");
    let v0 = format!("{y},0,{z}");
    let o = nhmech(&["simulate", "--system", "free_particle", "--q0", &q0, "--v0", &v0, "--dt", "256", "--steps", "5"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("step 1"), "{}", stderr(&o));
}

#[test]
fn simulate_rejects_wrong_length_and_unknown_system() {
    assert_eq!(code(&nhmech(&["simulate", "--system", "free_particle", "--v0", "1,0"])), 2);
    assert_eq!(code(&nhmech(&["simulate", "--system", "pendulum"])), 2);
    assert_eq!(code(&nhmech(&["simulate", "--system", "rolling_disk"])), 2);
    assert_eq!(code(&nhmech(&["simulate", "--system", "free_particle", "--param", "mass=2"])), 2);
}

#[test]
fn check_hj_strong_on_particle_family() {
    let o = nhmech(&[
        "check",
        "--system",
        "free_particle",
        "--candidate",
        "paper_family",
        "--c1",
        "1",
        "--c2",
        "2",
        "--check",
        "hj_strong",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["name"], "hj_strong");
    assert_eq!(r["pass"], true);
    assert_eq!(r["points_tested"], 100);
    assert!(r["max_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn check_chow_on_carriage_is_incomplete() {
    let o = nhmech(&["check", "--system", "carriage", "--check", "chow", "--depth", "4"]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    assert_eq!(r["info"]["growth"], serde_json::json!([2, 3, 4, 4]));
    assert_eq!(r["info"]["complete"], false);
}

#[test]
fn check_classify_particle_is_general() {
    let o = nhmech(&["check", "--system", "free_particle", "--check", "classify"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["info"]["case"], "general");
    assert_eq!((r["info"]["dim_vn_cap_h"].as_u64(), r["info"]["dim_vn"].as_u64()), (Some(1), Some(2)));
}

#[test]
fn check_unknown_name_is_a_config_error() {
    assert_eq!(code(&nhmech(&["check", "--system", "free_particle", "--check", "hj_medium"])), 2);
    assert_eq!(
        code(&nhmech(&["check", "--system", "free_particle", "--check", "hj_strong", "--candidate", "nope"])),
        2
    );
    assert_eq!(
        code(&nhmech(&["check", "--system", "free_particle", "--check", "horizontal_mu", "--candidate", "zero"])),
        2
    );
}

#[test]
fn check_failing_candidate_exits_one() {
    let o = nhmech(&[
        "check",
        "--system",
        "free_particle",
        "--candidate",
        "y_along_x",
        "--check",
        "in_N",
        "--grid-count",
        "10",
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["pass"], false);
}

#[test]
fn check_reduced_carriage_records_sign() {
    for (cand, sign) in [("xbar1", "minus"), ("xbar2", "plus")] {
        let o =
            nhmech(&["check", "--system", "carriage", "--candidate", cand, "--check", "reduced", "--grid-count", "30"]);
        assert_eq!(code(&o), 0, "{cand}");
        assert_eq!(json(&o)["info"]["sign"], sign);
    }
}

#[test]
fn check_other_names_run() {
    let cases: [&[&str]; 6] = [
        &["--system", "free_particle", "--candidate", "paper_family", "--check", "hamiltonian", "--strong"],
        &["--system", "free_particle", "--candidate", "paper_family", "--check", "closedness"],
        &["--system", "free_particle", "--check", "noether"],
        &["--system", "carriage", "--check", "bates"],
        &["--system", "horizontal_particle", "--candidate", "constant", "--check", "horizontal_mu", "--mu", "1,0.5"],
        &["--system", "carriage", "--candidate", "xbar1", "--check", "forced", "--sign", "minus"],
    ];
    for args in cases {
        let mut full = vec!["check", "--grid-count", "20"];
        full.extend_from_slice(args);
        let o = nhmech(&full);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn reduce_carriage_xbar1_passes_chain() {
    let o = nhmech(&["reduce", "--system", "carriage", "--candidate", "xbar1"]);
    let r = json(&o);
    assert_eq!(r["route"], "chaplygin");
    assert_eq!(code(&o), 0, "{}", r);
}

#[test]
fn reduce_carriage_xbar2_passes_chain() {
    let o = nhmech(&["reduce", "--system", "carriage", "--candidate", "xbar2"]);
    let r = json(&o);
    assert_eq!(code(&o), 0, "{}", r);
}

#[test]
fn reduce_particle_passes_on_section_route() {
    let o = nhmech(&["reduce", "--system", "free_particle"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["route"], "section");
    assert_eq!(r["candidate"], "reduced_family");
    assert_eq!(r["steps"].as_array().unwrap().len(), 4);
}

#[test]
fn reduce_rolling_disk_has_no_quotient() {
    assert_eq!(code(&nhmech(&["reduce", "--system", "rolling_disk"])), 2);
}

#[test]
fn config_file_supplies_keys_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# chow on the carriage\nsystem = carriage\ncheck = chow\ndepth = 4\ngrid_count = 5\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = nhmech(&["check", "--config", c]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["points_tested"], 5);
    let o = nhmech(&["check", "--config", c, "--system", "free_particle"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["info"]["growth"], serde_json::json!([2, 3]));

    fs::write(&cfg, "system = carriage\ncolour = blue\n").unwrap();
    assert_eq!(code(&nhmech(&["check", "--config", c, "--check", "chow"])), 2);
    fs::write(&cfg, "system = free_particle\nparam.m = 2\nsteps = 3\nv0 = 1,0,0\n").unwrap();
    let o = nhmech(&["simulate", "--config", c]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(text.lines().count(), 5);
    // kinetic energy m|v|²/2 with m = 2 from the file
    let e: f64 = text.lines().nth(1).unwrap().split(',').nth(8).unwrap().parse().unwrap();
    assert_eq!(e, 1.0);
}

#[test]
fn identical_runs_are_byte_identical() {
    let runs: [&[&str]; 3] = [
        &["check", "--system", "carriage", "--check", "bates", "--seed", "7", "--grid-count", "10"],
        &["reduce", "--system", "free_particle", "--seed", "3", "--grid-count", "10"],
        &["simulate", "--system", "carriage", "--steps", "50"],
    ];
    for args in runs {
        let a = nhmech(args);
        let b = nhmech(args);
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let a = nhmech(&["check", "--system", "carriage", "--check", "noether", "--seed", "1", "--grid-count", "10"]);
    let b = nhmech(&["check", "--system", "carriage", "--check", "noether", "--seed", "2", "--grid-count", "10"]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn json_numbers_carry_seventeen_digits() {
    let o = nhmech(&[
        "check",
        "--system",
        "free_particle",
        "--candidate",
        "paper_family",
        "--check",
        "in_N",
        "--grid-count",
        "3",
    ]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("\"tolerance\":1.0000000000000000e-8"), "{text}");
}
