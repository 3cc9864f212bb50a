use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fdlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdlab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn derive_tables_and_inadmissible_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("unweighted.toml");
    fs::write(&cfg, "[problem]\nd = 3\nbeta = 0.0\ngamma = 0.0\np = 2.0\n").unwrap();
    let o = fdlab(dir.path(), &["derive", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["alpha", "1"]), "{out}");
    assert!(out.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["n", "3"]), "{out}");
    let rows = csv_rows(&dir.path().join("params.csv"));
    assert!(rows.iter().any(|r| r[0] == "mode" && r[1] == "unweighted"));

    fs::write(&cfg, "[problem]\nd = 3\nbeta = -1.0\ngamma = -2.0\np = 2.0\n").unwrap();
    let o = fdlab(dir.path(), &["derive", "--config", cfg.to_str().unwrap()]);
    let rows = csv_rows(&dir.path().join("params.csv"));
    let get = |k: &str| rows.iter().find(|r| r[0] == k).unwrap()[1].parse::<f64>().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!((get("alpha") - 1.5).abs() < 1e-14);
    assert!((get("n") - 10.0 / 3.0).abs() < 1e-12);

    fs::write(&cfg, "[problem]\nd = 3\nbeta = 1.0\ngamma = -2.0\np = 2.0\n").unwrap();
    let o = fdlab(dir.path(), &["derive", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[problem]"));
}

#[test]
fn config_errors_are_field_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[grid]\nr_max = 20.0\ncells = -4\n").unwrap();
    let o = fdlab(dir.path(), &["derive", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("cells"), "{err}");
    let o = fdlab(dir.path(), &["derive", "--override", "nosection=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fdlab(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_barenblatt_and_squeezed() {
    let dir = tempfile::tempdir().unwrap();
    let o = fdlab(dir.path(), &["simulate", "--override", "time.datum=barenblatt", "--override", "time.horizon=2.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap().abs() < 1e-10));

    let o = fdlab(dir.path(), &["simulate", "--override", "time.horizon=2.0"]);
    assert_eq!(o.status.code(), Some(0));
    let e_rel: Vec<f64> = csv_rows(&dir.path().join("trace.csv")).iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(e_rel.windows(2).all(|w| w[1] <= w[0]) && e_rel[0] > 0.0);

    let o = fdlab(dir.path(), &["simulate", "--override", "time.horizon=0.0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_config_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let o = fdlab(d, &["simulate", "--override", "time.horizon=1.0", "--override", "grid.cells=128"]);
        assert_eq!(o.status.code(), Some(0));
    }
    let fa = fs::read(a.path().join("trace.csv")).unwrap();
    let fb = fs::read(b.path().join("trace.csv")).unwrap();
    assert_eq!(fa, fb);
    let text = String::from_utf8(fa).unwrap();
    assert!(text.contains("# config_hash: ") && text.contains("# fdlab_core: "));
}

#[test]
fn region_map_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = fdlab(dir.path(), &["region-map", "--override", "problem.p=1.5", "--override", "problem.m=0.75"]);
    assert_eq!(o.status.code(), Some(2), "p and m together are rejected");
    let cfg = dir.path().join("map.toml");
    fs::write(&cfg, "[problem]\np = 1.5\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = fdlab(dir.path(), &["region-map", "--config", c, "--override", "problem.m=0.75"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fdlab(dir.path(), &["region-map", "--config", c]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("region_map.csv"));
    assert_eq!(rows.len(), 2500);
    assert!(rows.iter().any(|r| r[3] == "Inadmissible"));
    assert!(rows.iter().any(|r| r[3] == "SymmetryBreaking"));

    let o = fdlab(dir.path(), &["region-map", "--config", c, "--override", "sweep.gamma_lo=0.0", "--override", "sweep.gamma_hi=1.9"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("region_map.csv"));
    assert!(rows.iter().all(|r| r[3] == "Symmetry" || r[3] == "Inadmissible"));
    assert!(rows.iter().any(|r| r[3] == "Symmetry"));

    let o = fdlab(dir.path(), &["region-map", "--config", c, "--override", "sweep.beta_hi=-3.0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_threshold_deficit_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = fdlab(dir.path(), &["spectrum", "--override", "spectral.ell_max=2", "--override", "spectral.count=2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("spectrum.csv"));
    assert_eq!(rows.len(), 6);

    let cfg = dir.path().join("fam.toml");
    fs::write(&cfg, "[problem]\nd = 3\nbeta = -1.0\ngamma = -1.0\np = 1.5\n").unwrap();
    let o = fdlab(dir.path(), &["threshold", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("threshold.csv")).unwrap();
    let alpha: f64 = text.lines().find_map(|l| l.strip_prefix("# alpha: ")).unwrap().parse().unwrap();
    assert!((alpha - (2.0 - 2f64.sqrt())).abs() < 1e-3);

    let o = fdlab(dir.path(), &["gn-deficit", "--override", "time.datum=barenblatt", "--override", "grid.r_max=2000.0",
        "--override", "grid.cells=40000", "--override", "grid.spacing=geometric", "--override", "grid.first_cell=1e-3",
        "--override", "problem.m=0.8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("gn_deficit.csv"));
    let rel: f64 = rows.iter().find(|r| r[1] == "relative").unwrap()[2].parse().unwrap();
    assert!(rel.abs() < 1e-6, "{rel}");

    let o = fdlab(dir.path(), &["trace", "--override", "time.horizon=0.5", "--override", "time.samples=5"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("functionals.csv"));
    assert!(rows.iter().any(|r| r[1] == "R_star" && r[2] == "traceless_hessian"));
    assert_eq!(rows.iter().filter(|r| r[1] == "E_rel").count(), 6);
}

#[test]
fn verify_creates_missing_dir_and_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("a/b");
    let o = fdlab(&nested, &["verify", "--override", "verify.criteria=[\"A11\"]"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("A11 PASS"));
    assert!(nested.join("acceptance.csv").exists());
    let o = fdlab(&nested, &["verify", "--override", "verify.criteria=[\"A9\"]"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("A9 FAIL"));
}
