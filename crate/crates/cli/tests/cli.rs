use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BASE: &str = "sigma = 1.0\nwage = 1.0\ndiscount = 1.0\ngamma = 0.5\nalpha = 0.5\nz_max = 2.0\nprice_mode = \"endogenous\"\n";
const CHAIN: &str = r#"{"sectors": 3, "weights": [0.25, 0.25, 0.5], "kernel": [[0,0,0],[1,0,0],[0,1,0]]}"#;

fn spillover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spillover")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("base.toml"), BASE).unwrap();
        fs::write(dir.path().join("chain.json"), CHAIN).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn solve_writes_sector_tables_summary_and_manifest() {
    let ws = Workspace::new();
    let out = ws.s("run");
    let o = spillover(&["solve", "--params", &ws.s("base.toml"), "--network", &ws.s("chain.json"), "--grid", "101", "--out", &out, "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for s in 1..=3 {
        let csv = read(&ws.path(&format!("run/sector_{s}.csv")));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("z,V,dV,m"));
        assert_eq!(lines.count(), 101);
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&ws.path("run/summary.json"))).unwrap();
    let k = summary["k_star"].as_array().unwrap();
    assert_eq!(k[0].as_f64(), Some(0.0));
    assert!(k[2].as_f64().unwrap() > 0.0);

    let manifest: serde_json::Value = serde_json::from_str(&read(&ws.path("run/manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["seed"], 7);
    assert!(manifest["version"].as_str().unwrap().starts_with("0.1.0"));
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["config"]["params"]["alpha"], 0.5);
    assert_eq!(manifest["config"]["network"]["sectors"], 3);
    assert_eq!(manifest["config"]["grid"], 101);
    // no temp files are left behind
    assert!(fs::read_dir(ws.path("run")).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn missing_network_file_exits_1_and_names_the_path() {
    let ws = Workspace::new();
    let missing = ws.s("nowhere/net.json");
    let o = spillover(&["solve", "--params", &ws.s("base.toml"), "--network", &missing, "--out", &ws.s("run")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(&missing), "{}", stderr(&o));
    assert!(!ws.path("run").exists(), "no outputs before inputs are validated");
}

#[test]
fn usage_errors_print_synopsis_and_exit_1() {
    let o = spillover(&["solve", "--params", "x.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = spillover(&["bogus"]);
    assert_eq!(code(&o), 1);
    let o = spillover(&["--help"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn invalid_parameter_document_exits_1() {
    let ws = Workspace::new();
    fs::write(ws.path("bad.toml"), BASE.replace("gamma = 0.5", "gamma = 2.0")).unwrap();
    let o = spillover(&["solve", "--params", &ws.s("bad.toml"), "--network", "single:0.1", "--out", &ws.s("run")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn non_convergence_exits_2() {
    let ws = Workspace::new();
    let o = spillover(&[
        "solve", "--params", &ws.s("base.toml"), "--network", &ws.s("chain.json"), "--grid", "101",
        "--max-fixed-point-iters", "1", "--out", &ws.s("run"),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn fixed_b_overrides_price_mode() {
    let ws = Workspace::new();
    let o = spillover(&["solve", "--params", &ws.s("base.toml"), "--network", "single:0.1", "--grid", "101", "--fixed-b", "1.25", "--out", &ws.s("run")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&read(&ws.path("run/summary.json"))).unwrap();
    assert_eq!(summary["price"], 1.25);
    assert_eq!(summary["endogenous_price"], false);
}

#[test]
fn sweep_table_has_one_row_per_value_and_sector() {
    let ws = Workspace::new();
    let o = spillover(&[
        "sweep", "--params", &ws.s("base.toml"), "--network", "single:0.1", "--vary", "rho", "--values", "0.5,1,2,4",
        "--grid", "101", "--out", &ws.s("sweep"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(&ws.path("sweep/sweep.csv"));
    let rows: Vec<Vec<f64>> =
        csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![0.5, 1.0, 2.0, 4.0]);
    assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]), "mean productivity falls with rho");
    assert!(ws.path("sweep/density_discount_4_sector_1.csv").exists());
}

#[test]
fn identical_config_and_seed_give_identical_csv_bytes() {
    let ws = Workspace::new();
    let run = |out: &str| {
        let o = spillover(&[
            "ensemble", "--params", &ws.s("base.toml"), "--runs", "6", "--sectors", "3", "--grid", "101",
            "--seed", "11", "--out", out,
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let o = spillover(&[
            "simulate", "--params", &ws.s("base.toml"), "--network", &ws.s("chain.json"), "--grid", "101",
            "--firms", "50", "--horizon", "2", "--seed", "11", "--out", &format!("{out}_sim"),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    };
    let (a, b) = (ws.s("a"), ws.s("b"));
    run(&a);
    run(&b);
    for f in ["ensemble.csv", "runs.json"] {
        assert_eq!(fs::read(ws.path("a").join(f)).unwrap(), fs::read(ws.path("b").join(f)).unwrap(), "{f}");
    }
    for f in ["trajectory.csv", "histogram.csv", "mfg_sector_3.csv"] {
        assert_eq!(fs::read(ws.path("a_sim").join(f)).unwrap(), fs::read(ws.path("b_sim").join(f)).unwrap(), "{f}");
    }
    let other = ws.s("c");
    let o = spillover(&[
        "ensemble", "--params", &ws.s("base.toml"), "--runs", "6", "--sectors", "3", "--grid", "101", "--seed", "12",
        "--out", &other,
    ]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(ws.path("a/ensemble.csv")).unwrap(), fs::read(ws.path("c/ensemble.csv")).unwrap());
}

#[test]
fn ensemble_then_regress() {
    let ws = Workspace::new();
    let o = spillover(&[
        "ensemble", "--params", &ws.s("base.toml"), "--runs", "20", "--sectors", "4", "--grid", "101", "--seed", "3",
        "--threads", "2", "--out", &ws.s("ens"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = spillover(&[
        "regress", "--ensemble", &ws.s("ens"), "--params", &ws.s("base.toml"), "--curve", "0,0.5,1,2,3", "--grid", "101",
        "--out", &ws.s("reg"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(&ws.path("reg/regression.csv"));
    assert!(csv.starts_with("model,param,estimate,std_err,r_squared\n"));
    for model in ["k_mean_curve", "indirect_series", "full_indirect", "direct_only"] {
        assert!(csv.lines().any(|l| l.starts_with(model)), "{model} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&read(&ws.path("reg/regression.json"))).unwrap();
    assert!(report["comparison"]["rss_indirect"].as_f64().is_some());
}

#[test]
fn regress_on_missing_ensemble_names_the_table() {
    let ws = Workspace::new();
    let o = spillover(&["regress", "--ensemble", &ws.s("empty"), "--params", &ws.s("base.toml"), "--out", &ws.s("reg")]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ensemble.csv"), "{}", stderr(&o));
}

#[test]
fn networks_writes_comparisons_and_random_documents_round_trip() {
    let ws = Workspace::new();
    let o = spillover(&["networks", "--params", &ws.s("base.toml"), "--grid", "101", "--out", &ws.s("nets")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(ws.path("nets/density_diff_3_minus_2_sector_3.csv").exists());
    assert!(ws.path("nets/network_2_sector_3.csv").exists());

    let o = spillover(&["networks", "--random-sectors", "5", "--prob", "0.4", "--seed", "9", "--out", &ws.s("rand")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let net = ws.s("rand/network.json");
    let o = spillover(&["solve", "--params", &ws.s("base.toml"), "--network", &net, "--grid", "101", "--out", &ws.s("solve")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(ws.path("solve/sector_5.csv").exists());
}
