use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use youngflow::holder_paths::{gen_fbm, read_path, SampledPath};
use youngflow::young_integral::{ito_residual, Square};

const EXIT_USAGE: i32 = 2;
const EXIT_PARSE: i32 = 3;
const EXIT_RANGE: i32 = 4;
const EXIT_MODULE: i32 = 5;
const EXIT_INVARIANT: i32 = 6;

fn youngflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_youngflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = youngflow(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary JSON on stdout")
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn load(dir: &Path, name: &str) -> SampledPath {
    let (cols, _, alpha) = read_path(&dir.join(name), None).unwrap();
    SampledPath::new(cols.times, cols.values, cols.dim, alpha.unwrap()).unwrap()
}

#[test]
fn path_gen_then_integrate_matches_library_ito_residual() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let n = (1usize << 14) + 1;
    let s = ok(
        d,
        &["path-gen", "--kind", "fbm", "--hurst", "0.75", "--n", &n.to_string(), "--T", "1", "--seed", "42", "--out", "z.csv"],
    );
    assert_eq!(s["schema_version"], 1);

    // The file round trip keeps the library path bit for bit.
    let direct = gen_fbm(0.75, n, 1.0, 42, 1).unwrap();
    let z = load(d, "z.csv");
    assert_eq!(z.raw_values(), direct.raw_values());
    assert_eq!(z.alpha(), direct.alpha());

    let s = ok(
        d,
        &["integrate", "--driver", "z.csv", "--integrand", r#"{"integrand":"jacobian","map":"square"}"#, "--refinements", "--out", "i.csv"],
    );
    let cli_residual = s["results"]["ito_residual"].as_f64().unwrap();
    let lib_residual = ito_residual(&Square, &direct).unwrap();
    assert_eq!(cli_residual, lib_residual);

    // Cauchy slope of the refinements is in the Young regime: 2H − 1 ± 0.2.
    let slope = s["results"]["refinements"]["cauchy_slope"].as_f64().unwrap();
    assert!((slope - 0.5).abs() <= 0.2, "slope {slope}");

    // Integral file: I_t = Z_t² − Z_0² − residual path, checked at the end node.
    let i = load(d, "i.csv");
    let zt = z.scalar(z.len() - 1);
    let gap = (zt * zt - i.scalar(i.len() - 1)).abs();
    assert!(gap <= cli_residual + 1e-12);
}

#[test]
fn malformed_csv_is_a_parse_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "t,z_1\n0,0\n0.5,abc\n1,1\n").unwrap();
    let before = files_in(d);
    let out = youngflow(
        d,
        &["integrate", "--driver", "bad.csv", "--alpha", "1", "--integrand", r#"{"integrand":"identity"}"#, "--out", "i.csv", "--summary", "s.json"],
    );
    assert_eq!(out.status.code(), Some(EXIT_PARSE));
    assert_eq!(files_in(d), before);
    assert!(out.stdout.is_empty());
}

#[test]
fn ragged_csv_and_bad_integrand_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ragged.csv"), "t,z_1\n0,0\n1\n").unwrap();
    let out = youngflow(d, &["integrate", "--driver", "ragged.csv", "--alpha", "1", "--integrand", r#"{"integrand":"identity"}"#, "--out", "i.csv"]);
    assert_eq!(out.status.code(), Some(EXIT_PARSE));
    ok(d, &["path-gen", "--kind", "linear", "--n", "65", "--out", "z.csv"]);
    let out = youngflow(d, &["integrate", "--driver", "z.csv", "--integrand", r#"{"integrand":"cubic"}"#, "--out", "i.csv"]);
    assert_eq!(out.status.code(), Some(EXIT_PARSE));
    assert!(!d.join("i.csv").exists());
}

#[test]
fn rotation_system_explodes_at_half_pi() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["path-gen", "--kind", "linear", "--n", "2001", "--T", "2", "--out", "z.csv"]);
    fs::write(d.join("a.json"), "[[0, -1], [1, 0]]").unwrap();
    let half_pi = std::f64::consts::FRAC_PI_2;
    for method in ["blocks", "yde"] {
        let s = ok(
            d,
            &["decompose-linear", "--A", "a.json", "--k", "1", "--driver", "z.csv", "--method", method, "--out", "decomp.csv"],
        );
        let t = s["results"]["explosion"]["time"].as_f64().unwrap();
        assert!((t - half_pi).abs() < 1e-3, "{method}: {t}");
        let idx = s["results"]["explosion_index"].as_u64().unwrap() as f64;
        assert!((idx / 1000.0 - half_pi).abs() < 1e-2, "{method}: node {idx}");
    }
    let s = ok(d, &["detect-explosion", "--A", "a.json", "--k", "1", "--driver", "z.csv", "--out", "ex.json"]);
    let file: Value = serde_json::from_str(&fs::read_to_string(d.join("ex.json")).unwrap()).unwrap();
    assert_eq!(file["explosion"], s["results"]["explosion"]);
    assert_eq!(file["schema_version"], 1);
}

#[test]
fn decomposition_table_is_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["path-gen", "--kind", "sine", "--amp", "0.5", "--n", "101", "--out", "z.csv"]);
    let s = ok(
        d,
        &["decompose-linear", "--A", "[[0.1,0.2,0.0],[0.3,-0.1,0.4],[0.0,0.5,0.2]]", "--k", "1", "--driver", "z.csv", "--out", "decomp.csv"],
    );
    assert!(s["results"]["explosion"].is_null());
    let text = fs::read_to_string(d.join("decomp.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("node,t,quantity,row,col,value"));
    // 1 + 2 + 2 + 4 entries per node.
    assert_eq!(lines.count(), 101 * 9);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let runs: [&[&str]; 4] = [
        &["path-gen", "--kind", "fbm", "--hurst", "0.7", "--n", "513", "--seed", "7", "--out", "z.csv", "--summary", "s0.json"],
        &["solve", "--driver", "z.csv", "--field", "builtin:linear", "--A", "[[0.2,-1],[1,0.1]]", "--x0", "1,0", "--out", "traj.csv", "--summary", "s1.json"],
        &["decompose-homogeneous", "--A", "axis:x", "--driver", "z.csv", "--x", "identity", "--out", "hd.json", "--summary", "s2.json"],
        &["decompose-linear", "--A", "[[0,-1],[1,0]]", "--k", "1", "--driver", "z.csv", "--out", "d.csv", "--summary", "s3.json"],
    ];
    let snapshot = |d: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        files_in(d).into_iter().map(|p| (p.clone(), fs::read(&p).unwrap())).collect()
    };
    for args in runs {
        let out = youngflow(d, args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let first = snapshot(d);
    for args in runs {
        assert!(youngflow(d, args).status.success());
    }
    assert_eq!(first, snapshot(d));
}

#[test]
fn sphere_pipeline_develop_transport_antidevelop() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Straight planar segment of length 2π along e1.
    let n = 1025;
    let mut csv = String::from("t,z_1,z_2\n");
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64 * std::f64::consts::TAU;
        csv.push_str(&format!("{t:.16e},{t:.16e},0\n"));
    }
    fs::write(d.join("w.csv"), csv).unwrap();
    let s = ok(d, &["develop", "--plane", "w.csv", "--alpha", "1", "--p0", "0,0,1", "--frame", "e1,e2", "--out", "x.csv"]);
    let arc = s["results"]["arc_length"].as_f64().unwrap();
    assert!((arc - std::f64::consts::TAU).abs() < 1e-12);

    // Closed great circle: transport is the identity on T_{x0}.
    let s = ok(d, &["transport", "--path", "x.csv", "--v", "0,1,0", "--out", "vT.json"]);
    let v_t: Vec<f64> = serde_json::from_value(s["results"]["v_T"].clone()).unwrap();
    assert!((v_t[0]).abs() < 1e-8 && (v_t[1] - 1.0).abs() < 1e-8 && v_t[2].abs() < 1e-8, "{v_t:?}");
    assert!(s["results"]["holonomy_angle"].as_f64().unwrap().abs() < 1e-8);

    let s = ok(d, &["antidevelop", "--path", "x.csv", "--frame", "e1,e2", "--out", "y.csv"]);
    let y: Vec<f64> = serde_json::from_value(s["results"]["terminal"].clone()).unwrap();
    // Chord increments: per-step loss is O(h³).
    assert!((y[0] - std::f64::consts::TAU).abs() < 1e-4 && y[1].abs() < 1e-12, "{y:?}");
}

#[test]
fn trivial_bundle_and_schur_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["path-gen", "--kind", "fbm", "--hurst", "0.8", "--n", "257", "--out", "z.csv"]);
    let s = ok(d, &["trivial-bundle", "--A", "axis:z", "--B", "0.7", "--y", "0.3", "--driver", "z.csv", "--out", "tb.json"]);
    assert!(s["results"]["reconstruction"].as_f64().unwrap() < 1e-12);
    let doc: Value = serde_json::from_str(&fs::read_to_string(d.join("tb.json")).unwrap()).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 257);
    assert_eq!(doc["nodes"][0]["eta"].as_array().unwrap().len(), 5);

    let s = ok(d, &["schur-foliation", "--A", "[[1,2,0],[3,1,1],[0,-1,2]]", "--driver", "z.csv", "--out", "sf.json"]);
    assert!(s["results"]["transformed_explosion"].is_null());
    let doc: Value = serde_json::from_str(&fs::read_to_string(d.join("sf.json")).unwrap()).unwrap();
    let k = doc["k"].as_u64().unwrap() as usize;
    let t = &doc["t"];
    for i in k..3 {
        for j in 0..k {
            assert_eq!(t[i][j].as_f64().unwrap(), 0.0);
        }
    }
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| youngflow(d, args).status.code();
    assert_eq!(code(&["path-gen", "--kind", "fbm", "--hurst", "0.7", "--n", "9", "--bogus", "--out", "z.csv"]), Some(EXIT_USAGE));
    assert_eq!(code(&["path-gen", "--kind", "fbm", "--hurst", "0.7", "--n", "9"]), Some(EXIT_USAGE));
    assert_eq!(code(&["path-gen", "--kind", "linear", "--hurst", "0.7", "--n", "9", "--out", "z.csv"]), Some(EXIT_USAGE));
    assert_eq!(code(&["path-gen", "--kind", "fbm", "--hurst", "0.3", "--n", "9", "--out", "z.csv"]), Some(EXIT_RANGE));
    assert_eq!(code(&["path-gen", "--kind", "fbm", "--hurst", "0.7", "--n", "10", "--out", "z.csv"]), Some(EXIT_RANGE));
    assert_eq!(code(&["schur-foliation", "--A", "[[0,-1],[1,0]]", "--out", "sf.json"]), Some(EXIT_MODULE));
    ok(d, &["path-gen", "--kind", "linear", "--n", "65", "--out", "z.csv"]);
    assert_eq!(
        code(&["decompose-linear", "--A", "[[0,-1],[1,0]]", "--k", "1", "--driver", "z.csv", "--tol", "1e-300", "--out", "d.csv"]),
        Some(EXIT_INVARIANT)
    );
    assert!(!d.join("d.csv").exists());
    assert_eq!(
        code(&["decompose-linear", "--A", "[[0,-1],[1,0]]", "--k", "2", "--driver", "z.csv", "--out", "d.csv"]),
        Some(EXIT_RANGE)
    );
    assert_eq!(code(&["transport", "--path", "z.csv", "--v", "0,1,0", "--out", "v.json"]), Some(EXIT_RANGE));
}
