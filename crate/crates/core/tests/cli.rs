use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rtr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtr"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(path: &Path) -> HashMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.trim_start_matches("# ").split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn num(map: &HashMap<String, String>, key: &str) -> f64 {
    map.get(key)
        .unwrap_or_else(|| panic!("missing {key}"))
        .parse()
        .unwrap()
}

#[test]
fn sweep_ideal_rtr_hits_the_floor() {
    let dir = tempfile::tempdir().unwrap();
    let o = rtr(&["sweep", "--scenario", "rtr"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&dir.path().join("summary.txt"));
    assert_eq!(s["max_eps_full_db"], "-3.000000000000e+02");
    assert_eq!(s["max_eps_flat_db"], "-3.000000000000e+02");
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 502);
}

#[test]
fn sweep_nonideal_and_lc2_summaries() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rtr(&["sweep", "--scenario", "rtr-nonideal"], dir.path()).status.success());
    let s = summary(&dir.path().join("summary.txt"));
    let flat = num(&s, "max_eps_flat_db");
    assert!(flat < -40.0 && flat > -50.0, "{flat}");
    assert!((num(&s, "resonance_lf_hz") - 1000.0).abs() < 1.0);

    assert!(rtr(&["sweep", "--scenario", "lc2"], dir.path()).status.success());
    let s = summary(&dir.path().join("summary.txt"));
    let il = num(&s, "il_pass_max_db");
    assert!((0.25..=0.65).contains(&il), "{il}");
    assert_eq!(s["resonance_lf_hz"], "none");
}

#[test]
fn mc_is_deterministic_and_zero_at_zero_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = ["mc", "--scenario", "rtr-nonideal", "--tol", "0.05", "--n", "20", "--seed", "42", "--n-points", "100"];
    assert!(rtr(&args, &a).status.success());
    assert!(rtr(&args, &b).status.success());
    let csv = fs::read(a.join("mc.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("mc.csv")).unwrap());
    let s = summary(&a.join("mc_summary.txt"));
    assert!(num(&s, "phase_dev_deg_max") < 1.0);

    assert!(rtr(&["mc", "--tol", "0", "--n", "5", "--n-points", "50"], &a).status.success());
    let text = fs::read_to_string(a.join("mc.csv")).unwrap();
    for row in text.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let cols: Vec<&str> = row.split(',').collect();
        for dev in &cols[2..6] {
            assert_eq!(dev.parse::<f64>().unwrap(), 0.0, "{row}");
        }
    }
}

#[test]
fn compare_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = rtr(&["compare", "--n", "10", "--n-points", "200"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "metric,lc2,fir,rtr");
    let rows: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        ["insertion_loss_db", "sum_phase_err_deg_max", "latency_ms", "mc_phase_dev_deg_max"]
    );
    let s = summary(&dir.path().join("compare.txt"));
    assert_eq!(num(&s, "rtr.latency_ms"), 0.0);
    assert!((num(&s, "fir.latency_ms") - 511.0 / 48.0).abs() < 1e-9);
    assert!(num(&s, "rtr.insertion_loss_db").abs() <= 1e-10);
}

#[test]
fn recon_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(rtr(&["recon", "--scenario", "rtr"], dir.path()).status.success());
    let s = summary(&dir.path().join("recon_summary.txt"));
    assert!(num(&s, "relative_rms_error") <= 1e-12);
    let input = fs::read_to_string(dir.path().join("input.csv")).unwrap();
    assert!(input.starts_with("# fs=48000\n0,"));
    assert_eq!(input.lines().count(), 4801);

    assert!(rtr(&["recon", "--scenario", "fir"], dir.path()).status.success());
    let s = summary(&dir.path().join("recon_summary.txt"));
    assert!(num(&s, "relative_rms_error") <= 1e-12);
    assert_eq!(s["delay_samples"], "511");

    assert!(rtr(&["recon", "--scenario", "rtr-nonideal"], dir.path()).status.success());
    let s = summary(&dir.path().join("recon_summary.txt"));
    let err = num(&s, "relative_rms_error");
    let eps = num(&s, "max_tone_eps");
    assert!(err <= 1e-2 && err <= eps && err >= eps / 2.0);
}

#[test]
fn netlist_scenario_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("divider.cir");
    fs::write(&net, "* two-way divider\nV1 in 0 AC 1\nR1 in lo 1k\nR2 lo 0 1k\nR3 in hi 3k\nR4 hi 0 1k\n.probe v(lo)\n.probe v(hi)\n").unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("scenario = netlist:{}\nn-points = 5\n", net.display())).unwrap();
    let o = rtr(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(2).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[1], 0.5);
    assert_eq!(row[3], 0.25);
    let s = summary(&dir.path().join("summary.txt"));
    assert_eq!(s["f0_hz"], "none");
    assert_eq!(s["n_points"], "5");
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cir");
    fs::write(&bad, "V1 in 0 AC 1\nR1 in 0 10q\n").unwrap();
    let scenario = format!("netlist:{}", bad.display());
    for args in [
        vec!["sweep", "--scenario", "bogus"],
        vec!["sweep", "--k", "1.5"],
        vec!["mc", "--tol", "1.5"],
        vec!["sweep", "--scenario", scenario.as_str()],
        vec!["sweep", "--scenario", "netlist:/does/not/exist.cir"],
        vec!["recon", "--tones", "30000"],
        vec!["recon", "--tones", "1005"],
        vec!["sweep", "--not-a-flag"],
    ] {
        let o = rtr(&args, dir.path());
        assert!(!o.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    }
    let o = rtr(&["sweep", "--scenario", scenario.as_str()], dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2, column 9"));
}
