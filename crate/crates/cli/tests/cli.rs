use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use grauert::fourier::FourierCoefficients;
use grauert::group::{enumerate_dual, GroupSpec};
use grauert::sample::{random_band_limited, Rng};
use grauert::symbol::SymbolRecord;
use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grauert")).args(args).output().expect("binary runs")
}

fn run_with(config: &Value, dir: &Path, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string(config).unwrap()).unwrap();
    let mut all = vec!["--config", path.to_str().unwrap()];
    all.extend_from_slice(args);
    run(&all)
}

fn record(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout holds a JSON record")
}

fn error_record(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr holds a JSON error record")
}

#[test]
fn dual_lists_the_lattice_within_the_cutoff() {
    let out = run(&["--cutoff", "3", "dual"]);
    assert_eq!(out.status.code(), Some(0));
    let r = record(&out);
    assert_eq!(r["schema"], "grauert.record/1");
    assert_eq!(r["op"], "dual");
    // ⟨k⟩ ≤ 3 keeps |k| ≤ 2
    assert_eq!(r["value"]["count"], 5);
    assert_eq!(r["certificate"]["passed"], true);
    assert_eq!(r["inputs_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&["--out", dir.path().to_str().unwrap(), "--quiet", "--cutoff", "12", "compose"]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    for name in ["compose.json", "compose.symbol.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
    let r: Value = serde_json::from_slice(&fs::read(a.path().join("compose.json")).unwrap()).unwrap();
    assert!(r["defect"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn digest_tracks_inputs_but_not_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let plain = record(&run(&["--cutoff", "8", "dual"]));
    let moved = record(&run(&["--cutoff", "8", "--out", dir.path().to_str().unwrap(), "dual"]));
    let reseeded = record(&run(&["--cutoff", "8", "--seed", "9", "dual"]));
    assert_eq!(plain["inputs_digest"], moved["inputs_digest"]);
    assert_ne!(plain["inputs_digest"], reseeded["inputs_digest"]);
}

#[test]
fn poisson_multiplier_diagram_has_no_defect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"cutoff": 16.0, "operator": {"kind": "poisson", "t": 0.3}});
    let out = run_with(&cfg, dir.path(), &["diagram"]);
    assert_eq!(out.status.code(), Some(0));
    let r = record(&out);
    assert!(r["defect"].as_f64().unwrap() <= 1e-14, "{r}");
    assert_eq!(r["value"]["defects"].as_array().unwrap().len(), 3);
}

#[test]
fn parametrix_table_shows_the_residual_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--out", dir.path().to_str().unwrap(), "--quiet", "parametrix"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("parametrix.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    // N = 1, 2, 3, two sides, two (α, β) pairs
    assert_eq!(rows.len(), 12);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let n: f64 = cols[0].parse().unwrap();
        assert_eq!(cols[4].parse::<f64>().unwrap(), -n);
        assert!(cols[9].parse::<f64>().unwrap() <= 2.0, "{row}");
    }
    let r: Value = serde_json::from_slice(&fs::read(dir.path().join("parametrix.json")).unwrap()).unwrap();
    assert!(r["value"]["left_right"].as_f64().unwrap() < 1e-10);
}

#[test]
fn non_elliptic_symbols_fail_their_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"cutoff": 8.0, "symbols": [{"expr": {"node": "const", "re": 0.0}, "order": 0.0}]});
    let out = run_with(&cfg, dir.path(), &["elliptic"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(record(&out)["certificate"]["passed"], false);
    let out = run_with(&cfg, dir.path(), &["parametrix"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn half_wave_diverges_on_the_tube_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let inside = json!({"point": {"x": [0.0], "y": [0.49]}});
    assert_eq!(run_with(&inside, dir.path(), &["halfwave"]).status.code(), Some(0));
    let boundary = json!({"point": {"x": [0.0], "y": [0.5]}});
    let out = run_with(&boundary, dir.path(), &["halfwave"]);
    assert_eq!(out.status.code(), Some(4));
    let r = record(&out);
    assert_eq!(r["value"]["divergent"], true);
    assert_eq!(r["certificate"]["name"], "convergence");
}

#[test]
fn invalid_configurations_exit_with_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(&json!({"cutof": 3.0}), dir.path(), &["dual"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_record(&out);
    assert_eq!(e["schema"], "grauert.error/1");
    assert_eq!(e["kind"], "invalid-config");
    assert_eq!(e["exit_code"], 2);
    assert!(out.stdout.is_empty());

    assert_eq!(run(&["--eps=-1", "poisson"]).status.code(), Some(2));
    assert_eq!(run(&["--config", dir.path().join("missing.json").to_str().unwrap(), "dual"]).status.code(), Some(2));
    // Re z θ₀ ≥ π/2 leaves the sector
    let out = run_with(&json!({"exponent": [2.5, 0.0]}), dir.path(), &["semigroup"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("contour"));

    let out_dir = dir.path().join("records");
    let out = run(&["--out", out_dir.to_str().unwrap(), "--cutoff=-2", "dual"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out_dir.join("dual.error.json").exists());
}

#[test]
fn coarse_contours_fail_the_oracle_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(&json!({"cutoff": 10.0, "nodes": 11}), dir.path(), &["power"]);
    assert_eq!(out.status.code(), Some(3));
    let r = record(&out);
    assert!(r["defect"].as_f64().unwrap() > 1e-6);
    let out = run_with(&json!({"cutoff": 10.0}), dir.path(), &["power"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn saved_symbols_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(run(&["--out", d, "--quiet", "--cutoff", "10", "adjoint"]).status.code(), Some(0));
    let path = dir.path().join("adjoint.symbol.json");
    let text = fs::read_to_string(&path).unwrap();
    let rec: SymbolRecord = serde_json::from_str(&text).unwrap();
    let again = SymbolRecord::from_symbol(&rec.to_symbol().unwrap());
    assert_eq!(again, rec);

    let cfg = json!({"cutoff": 10.0, "symbols": [{"record": path, "order": 2.0}]});
    let out = run_with(&cfg, dir.path(), &["apply"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // a record saved on another frame is refused
    let cfg = json!({"cutoff": 12.0, "symbols": [{"record": path, "order": 2.0}]});
    assert_eq!(run_with(&cfg, dir.path(), &["apply"]).status.code(), Some(2));
}

#[test]
fn input_coefficients_feed_the_poisson_transform() {
    let dir = tempfile::tempdir().unwrap();
    let dual = enumerate_dual(&GroupSpec::torus(1), 6.0).unwrap();
    let f: FourierCoefficients = random_band_limited(&dual, 1, &mut Rng::seeded(3));
    let input = dir.path().join("f.json");
    fs::write(&input, serde_json::to_string(&f).unwrap()).unwrap();
    let cfg = json!({"cutoff": 10.0, "input": input, "point": {"x": [0.4], "y": [0.2]}});
    let out = run_with(&cfg, dir.path(), &["--out", dir.path().to_str().unwrap(), "poisson"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = record(&out);
    let rows = r["value"]["functions"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0]["value_at_point"].is_array());
    let transforms: Value = serde_json::from_slice(&fs::read(dir.path().join("poisson.transforms.json")).unwrap()).unwrap();
    assert_eq!(transforms.as_array().unwrap().len(), 1);

    // changing the input file changes the digest
    let g = random_band_limited(&dual, 1, &mut Rng::seeded(4));
    fs::write(&input, serde_json::to_string(&g).unwrap()).unwrap();
    let r2 = record(&run_with(&cfg, dir.path(), &["poisson"]));
    assert_ne!(r["inputs_digest"], r2["inputs_digest"]);
}
