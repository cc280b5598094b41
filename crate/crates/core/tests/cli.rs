mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_halfcrystal")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn header(path: &Path) -> csv::StringRecord {
    csv::Reader::from_path(path).unwrap().headers().unwrap().clone()
}

fn column(path: &Path, name: &str) -> usize {
    header(path).iter().position(|h| h == name).unwrap()
}

#[test]
fn selftest_passes_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("selftest.csv");
    let (check, passed) = (column(&path, "check"), column(&path, "passed"));
    let all = rows(&path);
    assert!(all.iter().any(|r| &r[check] == "f-sinc"));
    assert!(all.iter().all(|r| &r[passed] == "true"));
}

#[test]
fn bands_match_hill_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("mathieu.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "--nmax", "8", "bands"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("bands.csv");
    let (n, lo, hi) = (column(&path, "n"), column(&path, "energy_minus"), column(&path, "energy_plus"));
    // 2 cos 2πx = e^{2πix} + e^{-2πix}
    let oracle = common::hill_gap_edges(|j| if j == 1 { 1.0 } else { 0.0 }, 97, 8);
    let mut seen = 0;
    for r in rows(&path) {
        let k: usize = r[n].parse().unwrap();
        if k == 0 {
            continue;
        }
        let (a, b): (f64, f64) = (r[lo].parse().unwrap(), r[hi].parse().unwrap());
        let (ea, eb) = oracle[k - 1];
        // midpoint sampling on 2048 cells shifts edges by O(mesh²)
        assert!((a - ea).abs() < 2e-5 && (b - eb).abs() < 2e-5, "gap {k}: ({a}, {b}) vs ({ea}, {eb})");
        seen += 1;
    }
    assert_eq!(seen, 8);
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let cfg = config("mathieu.toml");
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(&["--config", cfg, "--threads", "1", "states"], a.path()).status.code(), Some(0));
    assert_eq!(run(&["--config", cfg, "--threads", "4", "states"], b.path()).status.code(), Some(0));
    let (pa, pb) = (a.path().join("states.csv"), b.path().join("states.csv"));
    assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap());
    let all = rows(&pa);
    assert!(!all.is_empty());
    assert!(all.iter().all(|r| r[0] == all[0][0]));
    assert_eq!(&header(&pa)[0], "hash");
}

#[test]
fn overrides_change_the_hash() {
    let cfg = config("mathieu.toml");
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&["--config", cfg, "--nmax", "4", "bands"], a.path());
    run(&["--config", cfg, "--nmax", "5", "bands"], b.path());
    let ha = rows(&a.path().join("bands.csv"))[0][0].to_string();
    let hb = rows(&b.path().join("bands.csv"))[0][0].to_string();
    assert_ne!(ha, hb);
}

#[test]
fn verify_reports_order_failures_on_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("step.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "verify"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("FAIL verify/state-shift"), "{stderr}");
    let path = dir.path().join("verify.csv");
    let (check, fitted, verdict) = (column(&path, "check"), column(&path, "fitted"), column(&path, "verdict"));
    let all = rows(&path);
    let find = |name: &str| all.iter().find(|r| &r[check] == name).unwrap().clone();
    let shift: f64 = find("state-shift")[fitted].parse().unwrap();
    assert!(shift >= 2.5);
    for name in ["structural", "count-total", "count-lower", "zero-free-domain", "log-law", "side-prediction"] {
        assert_eq!(&find(name)[verdict], "Pass", "{name}");
    }
}

#[test]
fn resonances_in_rectangles_converge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("resonances.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "resonances"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("resonances.csv");
    let (im, conv) = (column(&path, "im"), column(&path, "converged"));
    let all = rows(&path);
    assert!(!all.is_empty());
    for r in &all {
        assert_eq!(&r[conv], "true");
        assert!(r[im].parse::<f64>().unwrap() < 0.0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["--config", missing.to_str().unwrap(), "bands"], dir.path()).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "n_max = \"many\"\n").unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap(), "bands"], dir.path()).status.code(), Some(2));

    assert_eq!(run(&["bands"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"], dir.path()).status.code(), Some(2));

    let far = dir.path().join("far.toml");
    let text = fs::read_to_string(config("mathieu.toml")).unwrap();
    fs::write(&far, format!("{text}\n[[rect]]\nre = [5.0, 6.0]\nim = [-1000.0, -999.0]\n")).unwrap();
    assert_eq!(run(&["--config", far.to_str().unwrap(), "resonances"], dir.path()).status.code(), Some(3));
}

#[test]
fn adiabatic_reports_antibound_shortfall() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("mathieu.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "adiabatic"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let path = dir.path().join("adiabatic.csv");
    let tau = column(&path, "tau");
    let taus: Vec<f64> = rows(&path).iter().map(|r| r[tau].parse().unwrap()).collect();
    assert_eq!(taus, vec![5.0, 10.0, 20.0, 40.0]);
}
