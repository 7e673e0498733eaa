use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prodmeasure::io::{read_tree, tree_from_json};
use prodmeasure::stats::{average_coefficients, norm_distance};
use prodmeasure::{CoefficientTree, NodeId};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prodmeasure"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn coeffs_of_constant_series_are_zero() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "flat.csv", "1\n1\n1\n1\n");
    let tree = tree_from_json(&ok(&["coeffs", s(&input), "--depth", "2"])).unwrap();
    assert_eq!(tree.total_mass(), 4.0);
    assert!(tree.dense_coefficients().iter().all(|&a| a == 0.0));
}

#[test]
fn coeffs_match_library_example() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "s.csv", "3\n1\n2\n2\n");
    let tree = tree_from_json(&ok(&["coeffs", s(&input)])).unwrap();
    assert_eq!(tree.dense_coefficients(), vec![0.0, 0.5, 0.0]);
}

#[test]
fn malformed_line_names_line_number() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "bad.csv", "1\n2\nx\n4\n");
    let msg = err(&["coeffs", s(&input)]);
    assert!(msg.starts_with("error[parse]:"), "{msg}");
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn reconstruct_round_trips_coeffs_output() {
    let dir = TempDir::new().unwrap();
    let values = "0.25\n3\n0\n1.5\n7\n0.125\n2\n9\n";
    let input = write(dir.path(), "v.csv", values);
    let tree = dir.path().join("t.json");
    ok(&["coeffs", s(&input), "-o", s(&tree)]);
    let leaves = ok(&["reconstruct", s(&tree)]);
    let got: Vec<f64> = data_lines(&leaves).iter().map(|l| l.parse().unwrap()).collect();
    let want: Vec<f64> = values.lines().map(|l| l.parse().unwrap()).collect();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12 * w.abs(), "{g} vs {w}");
    }
    assert_eq!(got.len(), want.len());
}

#[test]
fn reconstruct_uniform_tree() {
    let dir = TempDir::new().unwrap();
    let tree = write(dir.path(), "z.json", r#"{"depth": 3, "totalMass": 1.0, "coeffs": []}"#);
    let leaves = ok(&["reconstruct", s(&tree), "--depth", "3"]);
    assert_eq!(data_lines(&leaves), vec!["0.125"; 8]);
    let msg = err(&["reconstruct", s(&tree), "--depth", "4"]);
    assert!(msg.starts_with("error[depth]"), "{msg}");
}

#[test]
fn distance_agrees_with_library() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.json", r#"{"depth": 2, "totalMass": 1.0, "coeffs": [[0,0,0.5],[1,1,-0.25]]}"#);
    let b = write(dir.path(), "b.json", r#"{"depth": 2, "totalMass": 1.0, "coeffs": [[0,0,-0.5],[1,0,0.75]]}"#);
    let c = write(dir.path(), "c.json", r#"{"depth": 3, "totalMass": 1.0, "coeffs": []}"#);
    assert_eq!(ok(&["distance", s(&a), s(&a)]).trim(), "0");
    let d: f64 = ok(&["distance", s(&a), s(&b)]).trim().parse().unwrap();
    assert_eq!(d, norm_distance(&read_tree(&a).unwrap(), &read_tree(&b).unwrap()).unwrap());
    assert!(err(&["distance", s(&a), s(&c)]).starts_with("error[shape]"));
}

#[test]
fn infer_averages_and_rejects_empty_list() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.json", r#"{"depth": 2, "totalMass": 2.0, "coeffs": [[0,0,0.5],[1,1,-0.25]]}"#);
    let b = write(dir.path(), "b.json", r#"{"depth": 2, "totalMass": 4.0, "coeffs": [[0,0,-0.5],[1,0,0.75]]}"#);
    let single = tree_from_json(&ok(&["infer", s(&a)])).unwrap();
    assert_eq!(single, read_tree(&a).unwrap());
    let both = tree_from_json(&ok(&["infer", s(&a), s(&b)])).unwrap();
    let expected = average_coefficients(&[read_tree(&a).unwrap(), read_tree(&b).unwrap()]).unwrap();
    assert_eq!(both, expected);
    assert_eq!(both.dense_coefficients(), vec![0.0, 0.375, -0.125]);
    assert!(err(&["infer"]).starts_with("error[domain]"));
}

fn noise_fixture(dir: &Path, sigma: f64) -> (PathBuf, PathBuf) {
    let tree = write(
        dir,
        "t.json",
        r#"{"depth": 3, "totalMass": 2.0, "coeffs": [[0,0,0.5],[1,0,-0.25],[2,3,0.125]]}"#,
    );
    let params = write(
        dir,
        "p.json",
        &format!(r#"{{"mode": "per-scale", "depth": 3, "sigmas": {{"0": {sigma}, "1": {sigma}, "2": {sigma}}}}}"#),
    );
    (tree, params)
}

#[test]
fn noise_with_zero_sigma_returns_input() {
    let dir = TempDir::new().unwrap();
    let (tree, params) = noise_fixture(dir.path(), 0.0);
    let out = dir.path().join("out");
    ok(&["noise", s(&tree), "--params", s(&params), "--samples", "10", "--out-dir", s(&out)]);
    let noisy = read_tree(&out.join("noisy-0000.json")).unwrap();
    let original = read_tree(&tree).unwrap();
    assert_eq!(noisy.total_mass(), original.total_mass());
    for (x, y) in noisy.dense_coefficients().iter().zip(original.dense_coefficients()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn noise_reruns_are_byte_identical_and_stats_cover_every_node() {
    let dir = TempDir::new().unwrap();
    let (tree, params) = noise_fixture(dir.path(), 0.3);
    let outs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("out{k}"))).collect();
    for out in &outs {
        ok(&[
            "noise", s(&tree), "--params", s(&params), "--seed", "11", "--samples", "200", "--realizations",
            "3", "--out-dir", s(out),
        ]);
    }
    for name in ["noisy-0000.json", "noisy-0001.json", "noisy-0002.json", "stats.csv"] {
        assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap(), "{name}");
    }
    assert_ne!(
        fs::read(outs[0].join("noisy-0000.json")).unwrap(),
        fs::read(outs[0].join("noisy-0001.json")).unwrap()
    );
    let stats = fs::read_to_string(outs[0].join("stats.csv")).unwrap();
    let rows = data_lines(&stats);
    assert_eq!(rows[0], "node,scale,index,original,mean,variance,stderr");
    assert_eq!(rows.len() - 1, 7);
}

#[test]
fn noise_above_kahane_bound_warns() {
    let dir = TempDir::new().unwrap();
    let (tree, params) = noise_fixture(dir.path(), 1.2);
    let out = run(&[
        "noise", s(&tree), "--params", s(&params), "--samples", "4", "--out-dir", s(&dir.path().join("o")),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 ln 2"));
}

#[test]
fn dirac_examples() {
    let zero = tree_from_json(&ok(&["dirac", "0", "--depth", "3"])).unwrap();
    let spine: Vec<(NodeId, f64)> = zero.coefficients().collect();
    assert_eq!(
        spine,
        vec![
            (NodeId::new(0, 0).unwrap(), 1.0),
            (NodeId::new(1, 0).unwrap(), 1.0),
            (NodeId::new(2, 0).unwrap(), 1.0)
        ]
    );
    let half = tree_from_json(&ok(&["dirac", "0.5", "--depth", "3"])).unwrap();
    assert_eq!(half, CoefficientTree::dirac(0.5, 3).unwrap());
    assert!(err(&["dirac", "1.5"]).starts_with("error[domain]"));
    assert!(err(&["dirac", "-0.25"]).starts_with("error[domain]"));
}

#[test]
fn svg_outputs_are_deterministic_and_carry_provenance() {
    let dir = TempDir::new().unwrap();
    let tree = write(
        dir.path(),
        "t.json",
        r#"{"depth": 4, "totalMass": 1.0, "coeffs": [[0,0,0.5],[1,0,-0.25],[2,3,0.75],[3,5,-1.0]]}"#,
    );
    let knots = dir.path().join("knots.csv");
    let weld1 = ok(&["weld", s(&tree), "--max-scale", "3", "--knots-csv", s(&knots)]);
    let weld2 = ok(&["weld", s(&tree), "--max-scale", "3"]);
    assert_eq!(weld1, weld2);
    assert!(weld1.contains("<!-- prodmeasure"));
    let knot_rows = fs::read_to_string(&knots).unwrap();
    assert_eq!(data_lines(&knot_rows).len(), 1 + 17);

    let wheel1 = ok(&["wheel", s(&tree), "--colormap", "jet", "--size", "300"]);
    let wheel2 = ok(&["wheel", s(&tree), "--colormap", "jet", "--size", "300"]);
    assert_eq!(wheel1, wheel2);
    assert!(wheel1.contains("config-sha256"));
    assert_eq!(wheel1.matches("class=\"sector\"").count(), 1 + 2 + 4 + 8);
    assert!(err(&["wheel", s(&tree), "--colormap", "rainbow"]).starts_with("error[config]"));
}

#[test]
fn missing_input_fails() {
    for cmd in ["weld", "wheel", "reconstruct", "coeffs"] {
        let msg = err(&[cmd, "/nonexistent/input.json"]);
        assert!(msg.starts_with("error[io]"), "{cmd}: {msg}");
    }
}

#[test]
fn weld_from_labelled_points() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::new();
    for k in 0..64 {
        let x = (k % 8) as f64 / 8.0 + 0.01;
        let y = (k / 8) as f64 / 16.0;
        let label = if y < 0.25 { "ground" } else { "canopy" };
        csv.push_str(&format!("{x},{y},{label}\n"));
    }
    let points = write(dir.path(), "p.csv", &csv);
    let knots = dir.path().join("k.csv");
    ok(&[
        "weld", s(&points), "--points", "--depth", "6", "--class-a", "ground", "--max-scale", "4", "--knots-csv",
        s(&knots),
    ]);
    let text = fs::read_to_string(&knots).unwrap();
    for cat in ["onlyA", "onlyB", "endpoint"] {
        assert!(text.contains(cat), "missing {cat}");
    }
}

#[test]
fn config_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "v.csv", "1\n2\n3\n4\n5\n6\n7\n8\n");
    let cfg = write(dir.path(), "cfg.json", r#"{"depth": 2, "format": "csv"}"#);
    let from_cfg = ok(&["--config", s(&cfg), "coeffs", s(&input)]);
    assert!(from_cfg.contains("scale,index,coefficient"));
    assert!(!from_cfg.contains("2,0,"));
    let overridden = ok(&["--config", s(&cfg), "coeffs", s(&input), "--depth", "3", "--format", "json"]);
    assert_eq!(tree_from_json(&overridden).unwrap().depth(), 3);
}

#[test]
fn coeffs_from_points_and_features() {
    let dir = TempDir::new().unwrap();
    let points = write(dir.path(), "p.csv", "0,0\n1,1\n0.2,0.9\n0.8,0.1\n");
    let tree = tree_from_json(&ok(&["coeffs", s(&points), "--points", "--depth", "4", "--dim-order", "2,1"])).unwrap();
    assert_eq!(tree.depth(), 4);
    assert_eq!(tree.total_mass(), 4.0);
    assert!(err(&["coeffs", s(&points), "--points", "--dim-order", "0,1"]).starts_with("error[config]"));

    let features = write(
        dir.path(),
        "f.json",
        r#"{"features": [{"name": "hot", "column": 0, "op": ">", "value": 0.5},
                         {"name": "wet", "column": 1, "op": "<=", "value": 0.5}]}"#,
    );
    let ft = tree_from_json(&ok(&["coeffs", s(&points), "--features", s(&features)])).unwrap();
    assert_eq!(ft.depth(), 2);
    assert_eq!(ft.total_mass(), 4.0);
}
