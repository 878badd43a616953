use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use passivity_cert::{parse_config, ConfigFile, TABLE1_JSON};
use passivity_core::loads::reference::BASE_ZIP;
use passivity_core::passivity::is_strictly_passive;
use passivity_core::{LoadModel, ZipParams};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_passivity-cert"))
}

fn table1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/table1.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// One suite entry written out as a standalone document.
fn entry(dir: &TempDir, name: &str, edit: impl FnOnce(&mut passivity_cert::ConfigDocument)) -> PathBuf {
    let ConfigFile::Suite(suite) = parse_config(TABLE1_JSON).unwrap() else {
        panic!("table1 is a suite")
    };
    let mut doc = suite.scenarios[name].clone();
    edit(&mut doc);
    let path = dir.path().join(format!("{name}.json"));
    std::fs::write(&path, ConfigFile::Single(Box::new(doc)).to_json()).unwrap();
    path
}

fn zip_load(dir: &TempDir, model: ZipParams) -> PathBuf {
    entry(dir, "zip", |d| {
        d.grid.loads[0].model = LoadModel::Zip(model);
        d.scenario = None;
    })
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn z_only_load_certifies_with_exit_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = zip_load(&dir, ZipParams::admittance(0.15, 0.05));
    let o = run(&["certify", "--config", arg(&cfg), "--voltage", "400"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("StrictlyPassive"));
}

#[test]
fn base_zip_at_350_volts_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = zip_load(&dir, BASE_ZIP);
    let csv = dir.path().join("cert.csv");
    let o = run(&["certify", "--config", arg(&cfg), "--voltage", "350", "--out", arg(&csv)]);
    assert_eq!(o.status.code(), Some(1));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("load,v,verdict,lambda_min,lambda_max,residual_1,residual_2")
    );
    assert!(lines.next().unwrap().starts_with("load_zip,350.0,Violated,-"));
}

#[test]
fn malformed_json_exits_two_with_position() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"grid\": {\n    \"sources\": [,\n}").unwrap();
    let o = run(&["certify", "--config", arg(&cfg), "--voltage", "400"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 3, column"), "{err}");
}

#[test]
fn unknown_key_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = zip_load(&dir, BASE_ZIP);
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replacen("\"grid\"", "\"gird\": 1, \"grid\"", 1);
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(run(&["limits", "--config", arg(&cfg)]).status.code(), Some(2));
}

fn limit_rows(o: &Output) -> Vec<(String, f64, f64)> {
    stdout(o)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn limits_of_reference_loads() {
    let dir = TempDir::new().unwrap();
    let z = run(&[
        "limits",
        "--config",
        arg(&zip_load(&dir, ZipParams::admittance(0.15, 0.05))),
    ]);
    assert_eq!(limit_rows(&z), vec![("load_zip".to_string(), 10.0, 1000.0)]);

    let base = limit_rows(&run(&["limits", "--config", arg(&zip_load(&dir, BASE_ZIP))]));
    assert_eq!(base.len(), 1);
    assert!(base[0].1 > 350.0 && base[0].1 < 400.0 && base[0].2 == 1000.0);

    let changed = entry(&dir, "exponential", |d| {
        d.grid.loads[0].model.set_param("n_p", 1.3).unwrap();
        d.grid.loads[0].model.set_param("n_q", 0.45).unwrap();
    });
    let rows = limit_rows(&run(&["limits", "--config", arg(&changed)]));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].1 > 360.0 && rows[0].1 < 400.0, "{rows:?}");
}

#[test]
fn empty_window_prints_header_and_warning() {
    let dir = TempDir::new().unwrap();
    let heavy = ZipParams {
        p_p: 1e6,
        p_q: 1e6,
        ..ZipParams::admittance(1e-3, 1e-3)
    };
    let o = run(&["limits", "--config", arg(&zip_load(&dir, heavy))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "load,v_lo,v_hi\n");
    assert!(String::from_utf8(o.stderr).unwrap().contains("warning"));
}

#[test]
fn zero_horizon_simulation_has_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = entry(&dir, "zip", |d| {
        let s = d.scenario.as_mut().unwrap();
        s.t_end = 0.0;
        s.events.clear();
    });
    let out = dir.path().join("trace.csv");
    let o = run(&["simulate", "--config", arg(&cfg), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn table1_headers_match_golden_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("trace.csv");
    let o = run(&["simulate", "--config", arg(&table1()), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout(&o);
    assert!(!summary.contains("INCONSISTENT"), "{summary}");
    for name in ["zip", "exponential"] {
        let trace = std::fs::read_to_string(dir.path().join(format!("trace.{name}.csv"))).unwrap();
        let golden = std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/table1_{name}_header.csv")),
        )
        .unwrap();
        assert_eq!(trace.lines().next(), golden.lines().next());
    }
}

#[test]
fn simulate_one_suite_entry() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("zip.csv");
    let o = run(&[
        "simulate",
        "--config",
        arg(&table1()),
        "--out",
        arg(&out),
        "--scenario",
        "zip",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.exists());
    let summary = stdout(&o);
    assert!(summary.contains("unstable") && summary.contains("settled"));
    let o = run(&[
        "simulate",
        "--config",
        arg(&table1()),
        "--out",
        arg(&out),
        "--scenario",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn sweep_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn bisect_lower_limit(model: &LoadModel) -> f64 {
    let (mut lo, mut hi) = (250.0, 600.0);
    assert!(!is_strictly_passive(model, lo).unwrap() && is_strictly_passive(model, hi).unwrap());
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if is_strictly_passive(model, mid).unwrap() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[test]
fn sweeping_conductance_widens_the_window() {
    let dir = TempDir::new().unwrap();
    let cfg = zip_load(&dir, BASE_ZIP);
    let o = run(&[
        "sweep",
        "--config",
        arg(&cfg),
        "--param",
        "load_zip.y_p",
        "--range",
        "0.1:0.2:3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows = sweep_rows(&o);
    assert_eq!(rows.len(), 3);
    let lows: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(lows[0] > lows[1] && lows[1] > lows[2], "{lows:?}");
    for r in &rows {
        let y: f64 = r[0].parse().unwrap();
        let model = LoadModel::Zip(ZipParams { y_p: y, ..BASE_ZIP });
        let lo: f64 = r[1].parse().unwrap();
        assert!((lo - bisect_lower_limit(&model)).abs() <= 0.5, "{y}: {lo}");
    }
}

#[test]
fn sweep_edge_cases() {
    let dir = TempDir::new().unwrap();
    let base = zip_load(&dir, BASE_ZIP);
    let one = run(&[
        "sweep",
        "--config",
        arg(&base),
        "--param",
        "load_zip.p_q",
        "--range",
        "1e4:2e4:1",
    ]);
    assert_eq!(sweep_rows(&one).len(), 1);

    let z = zip_load(&dir, ZipParams::admittance(0.15, 0.05));
    let o = run(&[
        "sweep",
        "--config",
        arg(&z),
        "--param",
        "load_zip.y_p",
        "--range",
        "0.01:1:7",
    ]);
    let rows = sweep_rows(&o);
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r[1] == "10.0" && r[2] == "1000.0"));

    for bad in ["load_zip.model", "load_zip.n_p", "nowhere.y_p", "load_zip"] {
        let o = run(&["sweep", "--config", arg(&base), "--param", bad, "--range", "0:1:2"]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    let o = run(&[
        "sweep",
        "--config",
        arg(&base),
        "--param",
        "load_zip.y_p",
        "--range",
        "x:1:2",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let cfg = zip_load(&dir, BASE_ZIP);
    let args = [
        "sweep",
        "--config",
        arg(&cfg),
        "--param",
        "load_zip.p_q",
        "--range",
        "5e3:3e4:16",
    ];
    let capped = bin().args(args).env("PASSIVITY_CERT_THREADS", "1").output().unwrap();
    let free = bin().args(args).env_remove("PASSIVITY_CERT_THREADS").output().unwrap();
    assert_eq!(capped.stdout, free.stdout);
}

#[test]
fn bundled_config_round_trips() {
    let first = parse_config(TABLE1_JSON).unwrap();
    let second = parse_config(&first.to_json()).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.to_json(), second.to_json());
}
