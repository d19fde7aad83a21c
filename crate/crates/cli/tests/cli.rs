use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stabmor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabmor")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stabmor(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Data rows of a versioned CSV.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# stabmor-v1"));
    lines.next().expect("column header");
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn generate_msd_has_two_states_per_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("msd");
    ok(&["generate", "msd", "--masses", "4", "-o", p(&out)]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n"], 8);
    for f in ["E.mtx", "A.mtx", "B.mtx", "C.mtx", "report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn generate_convdiff_reports_nondissipative_part() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cd");
    ok(&["generate", "convdiff", "--n", "400", "--grade", "8", "-o", p(&out)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["stability"]["k"].as_u64().unwrap() >= 1);
}

#[test]
fn invalid_spec_exits_2_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let res = stabmor(&["generate", "msd", "--masses", "0", "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn order_above_dimension_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("c");
    ok(&["generate", "crafted", "-o", p(&sys)]);
    let res = stabmor(&["reduce", "--system", p(&sys), "--r", "3", "--out", p(&dir.path().join("run"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn crafted_conventional_sweep_is_unstable_and_stabilized_is_not() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("c");
    let run = dir.path().join("run");
    ok(&["generate", "crafted", "-o", p(&sys)]);
    ok(&["reduce", "--system", p(&sys), "--method", "external", "--basis", p(&sys), "--r", "1", "--stabilize", "--out", p(&run)]);
    let rows = rows(&run.join("error_sweep.csv"));
    assert_eq!(rows.len(), 1);
    let conv: f64 = rows[0][1].parse().unwrap();
    let stab: f64 = rows[0][2].parse().unwrap();
    assert!(conv > 0.0, "conventional abscissa {conv}");
    assert!(stab < 0.0, "stabilized abscissa {stab}");
    assert!(run.join("roms/r001/conventional/A.mtx").exists());
    assert!(run.join("roms/r001/stabilized/A.mtx").exists());
}

#[test]
fn unstable_conventional_rom_gets_na_error() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("c");
    let run = dir.path().join("run");
    ok(&["generate", "crafted", "-o", p(&sys)]);
    ok(&["reduce", "--system", p(&sys), "--method", "external", "--basis", p(&sys), "--r", "1", "--out", p(&run)]);
    let rows = rows(&run.join("error_sweep.csv"));
    assert_eq!(rows[0][2], "NA");
    assert_eq!(rows[0][3], "NA");
}

#[test]
fn stabilized_sweep_is_stable_column_wise() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("nn");
    let run = dir.path().join("run");
    ok(&["generate", "nonnormal", "--n", "60", "--seed", "4", "-o", p(&sys)]);
    ok(&["reduce", "--system", p(&sys), "--r", "1..12", "--stabilize", "--t-end", "5", "--steps", "200", "--out", p(&run)]);
    let rows = rows(&run.join("error_sweep.csv"));
    assert_eq!(rows.len(), 12);
    for row in rows {
        let a: f64 = row[2].parse().unwrap();
        assert!(a < 0.0, "r = {}: {a}", row[0]);
        assert_ne!(row[3], "NA");
    }
}

#[test]
fn sine_trajectory_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("msd");
    let sim = dir.path().join("sim");
    ok(&["generate", "msd", "-o", p(&sys)]);
    ok(&["simulate", "--system", p(&sys), "--period", "1e-5", "--t-end", "1e-3", "--steps", "1000", "--out", p(&sim)]);
    assert_eq!(rows(&sim.join("trajectory.csv")).len(), 1001);
}

#[test]
fn zero_input_gives_zero_output() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("msd");
    let sim = dir.path().join("sim");
    ok(&["generate", "msd", "-o", p(&sys)]);
    ok(&["simulate", "--system", p(&sys), "--input", "zero", "--out", p(&sim)]);
    for row in rows(&sim.join("trajectory.csv")) {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn adaptive_and_trapezoid_agree() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("msd");
    ok(&["generate", "msd", "-o", p(&sys)]);
    let mut outs = Vec::new();
    for integrator in ["trapezoid", "adaptive"] {
        let sim = dir.path().join(integrator);
        ok(&["simulate", "--system", p(&sys), "--integrator", integrator, "--steps", "4000", "--rtol", "1e-9", "--atol", "1e-12", "--out", p(&sim)]);
        outs.push(rows(&sim.join("trajectory.csv")));
    }
    let diff = outs[0]
        .iter()
        .zip(&outs[1])
        .map(|(a, b)| (a[1].parse::<f64>().unwrap() - b[1].parse::<f64>().unwrap()).abs())
        .fold(0.0, f64::max);
    // Trapezoid error at h = 2.5e-3 dominates.
    assert!(diff < 1e-5, "max discrepancy {diff:e}");
}

#[test]
fn analyze_writes_bode_and_h2() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("msd");
    let run = dir.path().join("run");
    let an = dir.path().join("an");
    ok(&["generate", "msd", "-o", p(&sys)]);
    ok(&["reduce", "--system", p(&sys), "--r", "2", "--stabilize", "--out", p(&run)]);
    ok(&["analyze", "--system", p(&sys), "--rom", p(&run.join("roms/r002/stabilized")), "--points", "50", "-o", p(&an)]);
    assert_eq!(rows(&an.join("bode.csv")).len(), 50);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(an.join("analysis.json")).unwrap()).unwrap();
    assert!(report["h2_error"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn pod_sweep_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("msd");
    let run = dir.path().join("run");
    ok(&["generate", "msd", "--masses", "10", "-o", p(&sys)]);
    ok(&["reduce", "--system", p(&sys), "--method", "pod", "--r", "2,4", "--stabilize", "--lyapunov", "dense", "--out", p(&run)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert!(report["snapshots"].as_u64().unwrap() > 4);
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert!(run.join("stabilizer/Z.mtx").exists());
}

#[test]
fn cubic_sweep_is_stabilized() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("msd");
    let run = dir.path().join("run");
    ok(&["generate", "msd", "--masses", "10", "-o", p(&sys)]);
    ok(&["reduce", "--system", p(&sys), "--r", "1..6", "--stabilize", "--cubic-gamma", "0.5", "--out", p(&run)]);
    for row in rows(&run.join("nonlinear_sweep.csv")) {
        assert!(row[2].parse::<f64>().unwrap() < 0.0);
    }
}
