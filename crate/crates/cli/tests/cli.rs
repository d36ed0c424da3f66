use std::path::Path;
use std::process::{Command, Output};

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = qkdsim(&[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulate"));
}

#[test]
fn error_kinds_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let unknown_sub = code(&qkdsim(&["teleport"]));
    let unknown_flag = code(&qkdsim(&["simulate", "--warp-factor", "9", "--out", &out]));
    let unknown_set = code(&qkdsim(&["simulate", "--set", "warp_factor=9", "--out", &out]));
    let missing = code(&qkdsim(&["simulate", "--config", "/nonexistent/x.conf", "--out", &out]));
    let invalid = code(&qkdsim(&["simulate", "--mu", "-1", "--out", &out]));
    assert_eq!(unknown_sub, 2);
    assert_eq!(unknown_flag, 3);
    assert_eq!(unknown_set, 3);
    assert_eq!(missing, 4);
    assert_eq!(invalid, 5);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unknown_key_in_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "mu = 0.4\nwarp = 1\n").unwrap();
    let o = qkdsim(&["keyrate", "--config", conf.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn validation_names_the_field() {
    let o = qkdsim(&["keyrate", "--mu", "0.1", "--nu1", "0.5"]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu must exceed nu1"));
}

#[test]
fn help_lists_every_key_with_its_default() {
    let o = qkdsim(&["simulate", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for key in qkdsim_core::params::KEYS {
        assert!(text.contains(&format!("--{}", key.name.replace('_', "-"))), "{}", key.name);
    }
    assert!(text.contains("[default: 0.5; "));
    assert!(text.contains("[default: 0.0000001") || text.contains("[default: 1e-7"));
}

#[test]
fn short_simulation_writes_session_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdsim(&["simulate", "--duration", "2400", "--seed", "7", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let telemetry = std::fs::read_to_string(dir.path().join("telemetry.csv")).unwrap();
    assert_eq!(telemetry.lines().count(), 2401);
    let keys = std::fs::read_to_string(dir.path().join("keys.csv")).unwrap();
    assert_eq!(keys.lines().count(), 3);
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn seed_fixes_the_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = qkdsim(&["simulate", "--duration", "300", "--seed", "3", "--out", &out_arg(d.path())]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("telemetry.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn keyrate_on_expected_counts_is_near_asymptotic() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdsim(&["keyrate", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("keyrate.csv")).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    let row = r.records().next().unwrap().unwrap();
    let idx = headers.iter().position(|h| h == "efficiency").unwrap();
    let eff: f64 = row[idx].parse().unwrap();
    assert!((eff - 0.96).abs() <= 0.03, "{eff}");
}

#[test]
fn keyrate_reads_tally_files() {
    let dir = tempfile::tempdir().unwrap();
    let tally = dir.path().join("tally.csv");
    std::fs::write(
        &tally,
        "class,sent,sifted,errors\nmu,1185960000000,4858850000,187066000\nnu1,9360000000,7774000,370000\nnu2,4680000000,69000,34300\n",
    )
    .unwrap();
    let o = qkdsim(&["keyrate", "--tally-file", tally.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&tally, "class,sent,sifted,errors\nmu,10,20,0\n").unwrap();
    let o = qkdsim(&["keyrate", "--tally-file", tally.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn efficiency_curve_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdsim(&["efficiency-curve", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("efficiency_curve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n_pulses,efficiency"));
    let effs: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(effs.len(), 20);
    assert!(effs.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn calibrate_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdsim(&["calibrate", "--target-qber", "0.0385", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0);
    let conf = dir.path().join("calibrated.conf");
    let c = qkdsim_core::Config::from_file(&conf).unwrap();
    assert!((c.link.intrinsic_misalignment_error - 0.0374889).abs() < 1e-6);

    let o = qkdsim(&["calibrate", "--target-qber", "0.7", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 5);
}

#[test]
fn optimize_writes_result_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = qkdsim(&["optimize", "--n-pulses", "1e11", "--out", &out_arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let best = qkdsim_core::Config::from_file(&dir.path().join("best_config.conf")).unwrap();
    assert!(best.validated().is_ok());
    assert!(std::fs::read_to_string(dir.path().join("optimization.txt")).unwrap().contains("best rate"));
}
