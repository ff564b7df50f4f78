use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ntklab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntklab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = ntklab(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn kernel_grid_of_two_gives_two_rows() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["kernel", "--grid", "2"]);
    let text = read(&d.path().join("kernel_ntk_resnet_L5_a0.1.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "angle_gap,value,kind,L,alpha");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",ntk_resnet,5,0.1"));
    assert!(!text.contains('\r'));
    let m = json(&d.path().join("manifest.json"));
    assert_eq!(m["command"], "kernel");
    assert_eq!(m["outputs"].as_object().unwrap().len(), 5);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["drift", "--widths", "8,16", "--seeds", "2", "--iterations", "20", "--seed", "5"];
    ok(a.path(), &args);
    ok(b.path(), &args);
    for name in ["drift.csv", "drift.json"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name}");
    }
    let ma = json(&a.path().join("manifest.json"));
    let mb = json(&b.path().join("manifest.json"));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let csv = read(&a.path().join("drift.csv"));
    for row in csv.lines().skip(1).filter(|r| r.split(',').nth(2) == Some("0")) {
        assert_eq!(row.split(',').nth(3), Some("0"), "{row}");
    }
}

#[test]
fn bad_configs_exit_nonzero_with_diagnostics() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "version = 1\n[[kernel.kernels]]\nkind = \"laplace\"\n").unwrap();
    let o = ntklab(d.path(), &["kernel", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("laplace"));
    let o = ntklab(d.path(), &["drift", "--widths", "64"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("widths"));
    let o = ntklab(d.path(), &["kernel", "--set", "kernel.colour=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn regress_reports_the_mu_ordering() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["regress"]);
    let r = json(&d.path().join("regress.json"));
    let mu = |tag: &str| {
        r["result"]["curves"].as_array().unwrap().iter().find(|c| c["kernel"] == tag).unwrap()["mu"].as_f64().unwrap()
    };
    assert!(mu("ntk_mlp_L5") < mu("ntk_resnet_L5_a1"));
    assert!(mu("ntk_resnet_L5_a1") < mu("ntk_resnet_L5_a0.1"));
    assert_eq!(mu("gaussian_g0.5"), 1.0);
    let csv = read(&d.path().join("regress_gaussian_g0.5.csv"));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",1")).count(), 6);
    assert_eq!(csv.lines().count(), 1 + 4096 + 6);
}

#[test]
fn bounds_report_matches_known_values() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["bounds", "--depth", "3"]);
    let r = json(&d.path().join("bounds.json"));
    assert!((r["result"]["report"]["alpha_threshold"].as_f64().unwrap() - 0.12001).abs() < 1e-5);
    ok(d.path(), &["bounds", "--depth", "5", "--alpha", "0.1", "--empirical-grid", "16", "--width", "64"]);
    let r = json(&d.path().join("bounds.json"));
    assert!((r["result"]["report"]["ratio"].as_f64().unwrap() - 0.3057).abs() < 1e-3);
    assert!(r["result"]["empirical_vs_bound"]["slack"].as_f64().unwrap() < 1.0);
}

#[test]
fn oracle_with_gradient_check() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["oracle", "--samples", "20000", "--covariances", "3", "--gradients"]);
    let r = json(&d.path().join("oracle.json"));
    assert_eq!(r["result"]["expectations"]["z_scores"].as_array().unwrap().len(), 3);
    assert!(r["result"]["gradient_check"]["max_rel_error"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn tiny_empirical_run_still_emits_stats() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["empirical", "--width", "8", "--seeds", "1", "--iterations", "50", "--grid", "16"]);
    let r = json(&d.path().join("empirical.json"));
    assert_eq!(r["result"]["per_seed_max_deviation"].as_array().unwrap().len(), 1);
    assert!(d.path().join("empirical_kernel_seed0.csv").exists());
    assert!(d.path().join("empirical_train_seed0.csv").exists());
    assert_eq!(read(&d.path().join("empirical_stats.csv")).lines().count(), 17);
}

#[test]
fn offntk_emits_curves_and_fraction() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["offntk", "--width", "16", "--seeds", "2", "--iterations", "30", "--grid", "256"]);
    let r = json(&d.path().join("offntk.json"));
    let f = r["result"]["fraction_resnet_smoother"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));
    assert!(d.path().join("offntk_mlp_seed1.csv").exists());
    assert!(d.path().join("offntk_resnet_seed0.csv").exists());
}

#[test]
fn all_runs_selected_criteria() {
    let d = tempfile::tempdir().unwrap();
    let o = ntklab(d.path(), &["all", "--criteria", "8", "--strict"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("[PASS]  8"));
    let csv = read(&d.path().join("acceptance.csv"));
    assert!(csv.lines().nth(1).unwrap().starts_with("8,bound arithmetic,true,"));
}

#[test]
fn show_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let o = ntklab(d.path(), &["show-config", "--seed", "11"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let c = ntklab::cli::ExperimentConfig::parse(&text).unwrap();
    assert_eq!(c.seed, 11);
}
