mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bruce_path, fixture};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linkforge")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bruce = bruce_path();
    assert_eq!(code(&run(&["--model", path(&bruce), "validate"], dir.path())), 0);
    let bad = fixture("bad_l2_zero.json");
    let o = run(&["--model", path(&bad), "validate"], dir.path());
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["--model", path(&missing), "validate"], dir.path())), 1);
}

#[test]
fn solve_reports_success_and_unreachable_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let model = common::bruce();
    let (_, j) = common::five_bar(&model, "knee_l");
    let inputs = format!("{},{}", model.q_nom[j[0]], model.q_nom[j[3]]);
    let bruce = bruce_path();
    let o = run(&["--model", path(&bruce), "solve", "--mechanism", "knee_l", "--inputs", &inputs], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // cranks pointing apart: 0.26 between crank tips, passive pair reaches 0.2
    let planar = fixture("planar_five_bar.json");
    let o = run(&["--model", path(&planar), "solve", "--mechanism", "leg", "--inputs", "3.14159,0.0"], dir.path());
    assert_eq!(code(&o), 2);
    let o = run(&["--model", path(&planar), "solve", "--mechanism", "leg", "--inputs", "2.0,1.1415926"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn parallelogram_fit_has_unit_slope() {
    let dir = tempfile::tempdir().unwrap();
    let para = fixture("parallelogram.json");
    let out = dir.path().join("fit");
    let o = run(&["--model", path(&para), "--out", path(&out), "fit-fourbar", "--degree", "1"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fits: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    assert_eq!(fits.len(), 1, "{fits:?}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fits[0]).unwrap()).unwrap();
    let coeffs = v["coeffs"].as_array().expect("coeffs");
    assert_eq!(coeffs.len(), 2);
    assert!((coeffs[1].as_f64().unwrap() - 1.0).abs() < 1e-10, "{v}");
}

#[test]
fn fit_through_a_pole_exits_as_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bruce = bruce_path();
    let o = run(&["--model", path(&bruce), "fit-fourbar", "--domain", "0,3.1"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn rollout_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let bruce = bruce_path();
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(
            &["--model", path(&bruce), "--seed", "21", "--out", path(&out), "rollout", "--envs", "3", "--steps", "40", "--policy", "sine"],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        traces.push(std::fs::read(dir.path().join(format!("{name}.lftr"))).unwrap());
    }
    assert!(!traces[0].is_empty());
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn standing_stage_summary_is_led_by_stand_still() {
    let dir = tempfile::tempdir().unwrap();
    let bruce = bruce_path();
    let out = dir.path().join("s");
    let o = run(&["--model", path(&bruce), "--seed", "4", "--out", path(&out), "rollout", "--stage", "1", "--envs", "2", "--steps", "50"], dir.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    let first = text.lines().nth(1).expect("summary rows");
    assert!(first.starts_with("stand_still"), "{text}");
}

#[test]
fn bench_csv_has_the_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let bruce = bruce_path();
    let out = dir.path().join("b.csv");
    let o = run(
        &["--model", path(&bruce), "--out", path(&out), "bench", "--envs", "4", "--steps", "5", "--repeats", "1", "--warmup", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("variant,time_per_step_us,steps_per_sec,setup_s,overhead_pct"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let names: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(names, ["Simplified", "4-Bar", "5-Bar", "Differential", "All"]);
    assert_eq!(rows[0][4], "0");
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn bench_with_no_runnable_variant_fails() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture("differential_only.json");
    let o = run(&["--model", path(&m), "bench", "--variants", "4-bar,5-bar", "--envs", "2", "--steps", "2", "--repeats", "1"], dir.path());
    assert_ne!(code(&o), 0);
}
