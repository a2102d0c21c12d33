use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn l1kde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l1kde"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("L1KDE_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"
seed = 42
[simulate]
n = [300, 1000]
h_exponent = -0.25
replicates = 60
"#;

#[test]
fn same_config_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = l1kde(d, &["--config", &cfg, "simulate"]);
        assert!(out.status.code() == Some(0) || out.status.code() == Some(4), "{out:?}");
    }
    for name in ["replicates_n300.csv", "replicates_n1000.csv", "summary_simulate.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.join("replicates_n300.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "replicate_id,seed,n,h,actual_count,l1_deviation,window_lo,window_hi,grid_step");
    assert_eq!(lines.count(), 60);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest_simulate.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 42);
    assert_eq!(m["csv_schema_version"], 1);
    assert_eq!(m["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_flag_overrides_and_changes_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    l1kde(&a, &["--config", &cfg, "simulate"]);
    l1kde(&b, &["--config", &cfg, "--seed", "43", "simulate"]);
    assert_ne!(fs::read(a.join("replicates_n300.csv")).unwrap(), fs::read(b.join("replicates_n300.csv")).unwrap());
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[simulate]\nn = [100]\nh_exponent = -0.25\nreplicates = 10\n");
    let out = l1kde(tmp.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'seed'"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "seed = 1\nsede = 2\n");
    let out = l1kde(tmp.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_kernel_file_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let k = write(tmp.path(), "k.toml", "name = \"half\"\nbreaks = [-0.5, 0.5]\ncoeffs = [[0.5]]\n");
    let out = l1kde(tmp.path(), &["sigma2", "--kernel-file", &k]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrates to"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sigma2_reports_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = l1kde(tmp.path(), &["sigma2", "--kernel", "uniform"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["sigma_sq"].as_f64().unwrap() - (1.5 - 4.0 / std::f64::consts::PI)).abs() < 1e-8);
    assert!(tmp.path().join("rho_table.csv").exists());
    let out = l1kde(tmp.path(), &["sigma2", "--kernel", "epanechnikov"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = v["sigma_sq"].as_f64().unwrap();
    assert!(s > 0.0 && s <= 2.4);
}

#[test]
fn rates_exits_3_when_nothing_is_asymptotic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[rates]\nexample = 2\nn = [10000, 100000]\nh = [0.05, 0.02]\n");
    let out = l1kde(tmp.path(), &["--config", &cfg, "rates"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("psi_scale"));
    let ledger = fs::read_to_string(tmp.path().join("rates_ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 3);
    assert!(tmp.path().join("manifest_rates.json").exists());
}

#[test]
fn failed_check_exits_4_and_report_collects_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &format!("{SMALL}ks_max = 0.0\n"));
    let out = l1kde(tmp.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ks_final"));
    let out = l1kde(tmp.path(), &["report"]);
    assert_eq!(out.status.code(), Some(4));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(r["all_pass"], false);
    assert!(fs::read_to_string(tmp.path().join("report.md")).unwrap().contains("| simulate | ks_final |"));
}

#[test]
fn smoke_config_is_quick_single_threaded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/smoke.toml");
    let t = Instant::now();
    let out = l1kde(tmp.path(), &["--config", cfg, "--threads", "1", "simulate"]);
    let secs = t.elapsed().as_secs_f64();
    assert!(out.status.code() == Some(0) || out.status.code() == Some(4), "{out:?}");
    assert!(secs < 60.0, "{secs} s");
}
