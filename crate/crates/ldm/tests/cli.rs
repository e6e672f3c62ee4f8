use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const HOLDINGS_FIGURE: &str = "M = 5\nMbar = 10\nsigma_a = 1.0\nsigma_w0 = 1.0\ngamma = 1.0\nalpha = 0.0\nB0 = -0.2\nkappa.kind = constant\nkappa.c0 = 1.0\n";

fn ldm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldm")).args(args).output().expect("ldm runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn param_file(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn out_dir(root: &Path, name: &str) -> (PathBuf, String) {
    let p = root.join(name);
    let s = p.to_str().unwrap().to_string();
    (p, s)
}

#[test]
fn solve_writes_one_row_per_node() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = param_file(tmp.path(), "p.params", HOLDINGS_FIGURE);
    let (out, out_s) = out_dir(tmp.path(), "solve");
    let o = ldm(&["solve", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("curves_price-impact.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,B,Bprime,A,Sigma,F1,F2"));
    assert_eq!(lines.count(), 2001);
    assert!(!out.join("curves_nash.csv").exists());
    let m = manifest(&out);
    assert_eq!(m["command"], "solve");
    assert_eq!(m["all_checks_passed"], true);
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["curves_price-impact.csv", "holdings_price-impact.csv", "drift_price-impact.csv"]);
}

#[test]
fn both_kinds_write_both_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = param_file(tmp.path(), "p.params", &format!("{HOLDINGS_FIGURE}kind = both\ngrid.n_steps = 100\n"));
    let (out, out_s) = out_dir(tmp.path(), "solve");
    assert_eq!(code(&ldm(&["solve", "--config", &cfg, "--out", &out_s])), 0);
    for kind in ["price-impact", "nash"] {
        assert_eq!(fs::read_to_string(out.join(format!("curves_{kind}.csv"))).unwrap().lines().count(), 102);
    }
}

#[test]
fn invalid_models_exit_with_config_status() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, out_s) = out_dir(tmp.path(), "bad");
    let nash_small = HOLDINGS_FIGURE.replace("M = 5", "M = 1").replace("Mbar = 10", "Mbar = 1") + "kind = nash\n";
    let no_trackers = HOLDINGS_FIGURE.replace("Mbar = 10", "Mbar = 0");
    let unknown = format!("{HOLDINGS_FIGURE}lambda = 3\n");
    let repeated = format!("{HOLDINGS_FIGURE}gamma = 2\n");
    for (name, text) in [("nash", nash_small), ("mbar", no_trackers), ("unknown", unknown), ("repeat", repeated)] {
        let cfg = param_file(tmp.path(), name, &text);
        let o = ldm(&["solve", "--config", &cfg, "--out", &out_s]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"), "{name}");
    }
    let o = ldm(&["solve", "--config", tmp.path().join("absent").to_str().unwrap(), "--out", &out_s]);
    assert_eq!(code(&o), 2);
    let o = ldm(&["simulate", "--series", "price", "--out", &out_s]);
    assert_eq!(code(&o), 2, "series need full retention");
}

#[test]
fn verify_passes_and_catches_a_perturbed_loading() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = param_file(tmp.path(), "p.params", &format!("{HOLDINGS_FIGURE}grid.n_steps = 400\n"));
    let base = ["verify", "--config", &cfg, "--paths", "256", "--oracle-paths", "20000"];
    let (out, out_s) = out_dir(tmp.path(), "ok");
    let o = ldm(&[&base[..], &["--out", &out_s]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let m = manifest(&out);
    let names: Vec<&str> = m["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"market_clearing_net_of_filter_error") && names.contains(&"filter_oracle_t0.5"), "{names:?}");
    let (out, out_s) = out_dir(tmp.path(), "perturbed");
    let o = ldm(&[&base[..], &["--out", &out_s, "--perturb", "trk_on_w=0.001"]].concat());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAILED price-impact market_clearing_net_of_filter_error"));
    assert_eq!(manifest(&out)["all_checks_passed"], false);
}

#[test]
fn verify_without_initial_target_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let text = HOLDINGS_FIGURE.replace("sigma_w0 = 1.0", "sigma_w0 = 0.0") + "grid.n_steps = 400\nkind = both\n";
    let cfg = param_file(tmp.path(), "p.params", &text);
    let (_, out_s) = out_dir(tmp.path(), "v");
    let o = ldm(&["verify", "--config", &cfg, "--paths", "256", "--oracle-paths", "20000", "--out", &out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let m = manifest(Path::new(&out_s));
    let statics: Vec<&Value> = m["checks"].as_array().unwrap().iter().filter(|c| c["name"] == "static_learning").collect();
    assert_eq!(statics.len(), 2);
    assert!(statics.iter().all(|c| c["passed"] == true));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = param_file(tmp.path(), "p.params", &format!("{HOLDINGS_FIGURE}grid.n_steps = 200\nkind = both\n"));
    let run = |name: &str| {
        let (out, out_s) = out_dir(tmp.path(), name);
        let o = ldm(&["simulate", "--config", &cfg, "--paths", "300", "--seed", "4", "--full-retention", "--series", "price,reb_holding", "--out", &out_s]);
        // Seed 4 draws |aS| near 12, past the range where the Euler decomposition bound 2/n holds.
        assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
        (out, code(&o))
    };
    let ((a, code_a), (b, code_b)) = (run("a"), run("b"));
    assert_eq!(code_a, code_b);
    let ma = manifest(&a);
    assert_eq!(ma["files"], manifest(&b)["files"]);
    let files = ma["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "series_price_nash.csv"));
    for f in files {
        let p = f["path"].as_str().unwrap();
        assert_eq!(fs::read(a.join(p)).unwrap(), fs::read(b.join(p)).unwrap(), "{p}");
    }
    let (c, c_s) = out_dir(tmp.path(), "c");
    assert!(code(&ldm(&["simulate", "--config", &cfg, "--paths", "300", "--seed", "5", "--out", &c_s])) <= 1);
    assert_ne!(fs::read(a.join("moments_nash.csv")).unwrap(), fs::read(c.join("moments_nash.csv")).unwrap());
}

#[test]
fn compare_reports_different_mixing_at_zero_impact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = param_file(tmp.path(), "p.params", &format!("{HOLDINGS_FIGURE}grid.n_steps = 400\n"));
    let (out, out_s) = out_dir(tmp.path(), "cmp");
    let o = ldm(&["compare", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code(&o), 0);
    let m = manifest(&out);
    assert!(m["report"]["max_abs_diff_B"].as_f64().unwrap() > 1e-4);
    assert_eq!(m["report"]["figure_sign_patterns_identical"], true);
    let rows = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(rows.starts_with("loading,group,max_abs_diff,"));
    assert_eq!(rows.lines().filter(|l| l.contains(",figure,")).count(), 20);
}

#[test]
fn figures_subset_writes_panels_and_scripts() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, out_s) = out_dir(tmp.path(), "fig");
    let o = ldm(&["figures", "--steps", "200", "--figures", "1E,4A", "--every", "10", "--out", &out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let e = fs::read_to_string(out.join("figures/fig1E.csv")).unwrap();
    assert_eq!(e.lines().count(), 22);
    assert!(e.lines().next().unwrap().starts_with("t,gamma_"));
    assert!(out.join("figures/fig1.gp").exists() && out.join("figures/fig4.gp").exists());
    assert!(!out.join("figures/fig2A.csv").exists());
}
