use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use demreg_core::tiling::assemble_grids;
use demreg_core::{parse_grid, serialize_grid, Grid, GridHeader, DEFAULT_NODATA};
use serde_json::Value;

fn demreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demreg")).args(args).output().expect("run demreg")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_grid(path: &Path, nrows: usize, ncols: usize, values: Vec<f64>) {
    let g = Grid::new(GridHeader::new(ncols, nrows, 100.0, 200.0, 10.0, DEFAULT_NODATA).unwrap(), values).unwrap();
    fs::write(path, serialize_grid(&g)).unwrap();
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn info_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.asc");
    write_grid(&path, 1, 1, vec![42.5]);
    let out = demreg(&["info", s(&path)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("cells         1\n"), "{text}");
    assert!(text.contains("min elevation 42.5"));
}

#[test]
fn info_nodata_only_reports_absent_range() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.asc");
    write_grid(&path, 2, 2, vec![DEFAULT_NODATA; 4]);
    let text = stdout(&demreg(&["info", s(&path)]));
    assert!(text.contains("valid cells   0"));
    assert!(text.contains("min elevation absent"));
}

#[test]
fn info_malformed_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.asc");
    fs::write(&path, "ncols 2\nnrows x\n").unwrap();
    let out = demreg(&["info", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.asc") && err.contains("line 2"), "{err}");
}

#[test]
fn tile_writes_named_children_that_reassemble() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dem.asc");
    write_grid(&path, 4, 4, (0..16).map(f64::from).collect());
    let out_dir = dir.path().join("tiles");
    let out = demreg(&["tile", s(&path), "--tile", "2", "--out-dir", s(&out_dir)]);
    assert!(out.status.success());
    let mut names: Vec<String> =
        fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["dem_r0_c0.asc", "dem_r0_c1.asc", "dem_r1_c0.asc", "dem_r1_c1.asc"]);
    let tiles: Vec<Grid> =
        names.iter().map(|n| parse_grid(&fs::read_to_string(out_dir.join(n)).unwrap()).unwrap()).collect();
    let original = parse_grid(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(assemble_grids(&tiles).unwrap(), original);
}

#[test]
fn tile_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dem.asc");
    write_grid(&path, 3, 5, vec![1.0; 15]);
    for (args, files) in [(vec!["--tile-rows", "3", "--tile-cols", "5"], 1), (vec![], 1)] {
        let out_dir = tempfile::tempdir().unwrap();
        let mut full = vec!["tile", s(&path), "--out-dir", s(out_dir.path())];
        full.extend(args);
        assert!(demreg(&full).status.success());
        assert_eq!(fs::read_dir(out_dir.path()).unwrap().count(), files);
    }
    assert_eq!(demreg(&["tile", s(&path), "--tile", "0"]).status.code(), Some(2));
    assert_eq!(demreg(&["tile", s(&path), "--tile", "4"]).status.code(), Some(2));
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args =
        vec!["synth", "--seed", "9", "--rows", "90", "--cols", "100", "--n-points", "16", "--out-dir", s(dir)];
    args.extend_from_slice(extra);
    let out = demreg(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_pair_points_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--offset", "5,-3"]);
    for name in ["reference.asc", "candidate.asc", "points.csv", "truth.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let truth: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["offset"]["drow"], 5);
    assert_eq!(truth["offset"]["dcol"], -3);
    let cand = parse_grid(&fs::read_to_string(dir.path().join("candidate.asc")).unwrap()).unwrap();
    assert_eq!((cand.nrows(), cand.ncols()), (85, 97));
}

#[test]
fn register_recovers_synthetic_offset() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--offset", "5,-3"]);
    let p = |n: &str| dir.path().join(n);
    let out = demreg(&[
        "register",
        s(&p("reference.asc")),
        s(&p("candidate.asc")),
        s(&p("points.csv")),
        "--out-dem",
        s(&p("merged.asc")),
        "--out-render",
        s(&p("merged.ppm")),
        "--out-report",
        s(&p("report.json")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "registered");
    assert_eq!(report["method"], "quad-edge");
    assert_eq!(report["correspondence"]["offset"]["drow"], 5);
    assert_eq!(report["correspondence"]["offset"]["dcol"], -3);
    assert_eq!(report["errors"]["rmse"], 0.0);
    assert_eq!(report["warnings"]["false_positives"], 0);
    let merged = parse_grid(&fs::read_to_string(p("merged.asc")).unwrap()).unwrap();
    assert_eq!((merged.nrows(), merged.ncols()), (90, 100));
    assert!(fs::read(p("merged.ppm")).unwrap().starts_with(b"P6\n100 90\n255\n"));
}

#[test]
fn register_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--offset", "0,0"]);
    let r = dir.path().join("reference.asc");
    let out = demreg(&["register", s(&r), s(&r), s(&dir.path().join("points.csv")), "--method", "direct"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["correspondence"]["offset"]["drow"], 0);
    assert_eq!(report["correspondence"]["offset"]["dcol"], 0);
    let e = &report["errors"];
    assert_eq!((e["mean_diff"].as_f64(), e["rmse"].as_f64(), e["tsc"].as_f64()), (Some(0.0), Some(0.0), Some(0.0)));
    assert_eq!(e["t_defined"], true);
}

#[test]
fn register_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--offset", "2,2"]);
    let p = |n: &str| dir.path().join(n);
    fs::write(p("none.csv"), "# nothing\n").unwrap();
    let out = demreg(&["register", s(&p("reference.asc")), s(&p("candidate.asc")), s(&p("none.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2"));

    fs::write(p("bad.csv"), "a,b,c\n").unwrap();
    let out = demreg(&["register", s(&p("reference.asc")), s(&p("candidate.asc")), s(&p("bad.csv"))]);
    assert_eq!(out.status.code(), Some(1));

    let out =
        demreg(&["register", s(&p("reference.asc")), s(&p("candidate.asc")), s(&p("points.csv")), "--method", "nope"]);
    assert_eq!(out.status.code(), Some(2));

    // Elevations that occur nowhere in the candidate: nothing to vote with.
    let shifted: String = fs::read_to_string(p("points.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            f[2] += 0.3;
            format!("{},{},{}\n", f[0], f[1], f[2])
        })
        .collect();
    fs::write(p("off.csv"), shifted).unwrap();
    let out = demreg(&[
        "register",
        s(&p("reference.asc")),
        s(&p("candidate.asc")),
        s(&p("off.csv")),
        "--out-report",
        s(&p("fail.json")),
        "--out-dem",
        s(&p("fail.asc")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let report: Value = serde_json::from_str(&fs::read_to_string(p("fail.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "insufficient-matches");
    assert!(report["errors"].is_null());
    assert_eq!(report["points"].as_array().unwrap().len(), 16);
    assert!(!p("fail.asc").exists());
}

#[test]
fn bench_clean_run_has_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    let report_path = dir.path().join("bench.json");
    let out = demreg(&[
        "bench",
        "--trials",
        "3",
        "--rows",
        "80",
        "--cols",
        "80",
        "--n-points",
        "12",
        "--offset-range",
        "6",
        "--out-report",
        s(&report_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = stdout(&out);
    assert!(table.starts_with("method"));
    assert!(table.contains("direct") && table.contains("quad-edge"));
    let report: Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    for row in report["summary"].as_array().unwrap() {
        assert_eq!(row["recovered"], 3);
        assert_eq!(row["rmse"], 0.0);
        assert_eq!(row["mean_abs_diff"], 0.0);
    }
    assert_eq!(demreg(&["bench", "--n-points", "2"]).status.code(), Some(2));
}

#[test]
fn bad_thread_setting_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_demreg"))
        .args(["bench", "--trials", "1"])
        .env("DEMREG_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
