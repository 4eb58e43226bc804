use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tailopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailopt")).args(args).env_remove("TAILOPT_JOBS").output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_targets_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = tailopt(&["gen-targets", "--seed", "7", "--count", "100", "--out", path(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    // header plus three axis rows per target
    assert_eq!(text.iter().filter(|c| **c == b'\n').count(), 301);
}

#[test]
fn zero_count_is_rejected_with_usage() {
    let out = tailopt(&["gen-targets", "--count", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--count"));
}

#[test]
fn optimize_then_resume_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let args = ["optimize", "--seed", "3", "--count", "2", "--links", "1", "--dt", "0.05", "--starts", "straight-line", "--out", path(&out_dir)];
    let first = tailopt(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(String::from_utf8_lossy(&first.stdout).contains("2 computed"));
    let again = tailopt(&args);
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 computed, 2 resumed"));

    let results = out_dir.join("results.csv");
    assert_eq!(fs::read_to_string(&results).unwrap().lines().count(), 3);
    let sol = out_dir.join("solutions").join("uniform-n1-t000.csv");
    let sim = tailopt(&["simulate", "--solution", path(&sol), "--out", path(&dir.path().join("sim.csv"))]);
    assert!(sim.status.success());
    assert!(String::from_utf8_lossy(&sim.stderr).contains("validated"));

    let rep_dir = dir.path().join("report");
    let r1 = tailopt(&["report", "--results", path(&results), "--out", path(&rep_dir)]);
    assert!(r1.status.success());
    let r2 = tailopt(&["report", "--results", path(&results)]);
    assert_eq!(r1.stdout, r2.stdout);
    assert!(rep_dir.join("summary.csv").exists() && rep_dir.join("plot_data.csv").exists());
}

#[test]
fn variable_mode_limits_links() {
    let dir = tempfile::tempdir().unwrap();
    let out = tailopt(&["optimize-lengths", "--count", "1", "--links", "5", "--out", path(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn report_rejects_empty_results() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    fs::write(&p, "trial_id,target_seed,n_links,mode,lengths,objective_rad2s,tracking_error,max_tip_speed_mps,effort_j1,effort_j2,effort_j3,effort_j4,effort_j5,effort_j6,effort_saturation,validation_rms_rad,solver_status,wall_time_s\n").unwrap();
    assert!(!tailopt(&["report", "--results", path(&p)]).status.success());
}

#[test]
fn morpho_compares_groups() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    let mut text = String::from("species,group,vertebra_index,centrum_length_mm\n");
    for (s, g, l) in [
        ("a", "inertial_maneuvering", [10.0, 20.0, 15.0]),
        ("b", "inertial_maneuvering", [10.0, 18.0, 17.0]),
        ("c", "nonspecialist", [10.0, 12.0, 13.0]),
        ("d", "nonspecialist", [10.0, 13.0, 12.0]),
    ] {
        for (i, v) in l.iter().enumerate() {
            text.push_str(&format!("{s},{g},{},{v}\n", i + 1));
        }
    }
    text.push_str("e,nonspecialist,1,9\n");
    fs::write(&p, &text).unwrap();
    let out = tailopt(&["morpho", "--csv", path(&p)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = String::from_utf8_lossy(&out.stdout);
    // maxima 1.0, 0.8 against 0.2, 0.3
    assert!(s.contains("mean inertial_maneuvering: 0.9000"));
    assert!(s.contains("mean nonspecialist: 0.2500"));
    assert!(!s.contains("\ne,"));

    let single = dir.path().join("s.csv");
    fs::write(&single, "species,group,vertebra_index,centrum_length_mm\na,nonspecialist,1,1\na,nonspecialist,2,2\n").unwrap();
    let out = tailopt(&["morpho", "--csv", path(&single)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("two groups"));
}
