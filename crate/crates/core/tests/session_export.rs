use qkdsim_core::export::{export_timeseries, KEYS_FILE, KEYS_HEADER, SUMMARY_FILE, TELEMETRY_FILE, TELEMETRY_HEADER};
use qkdsim_core::stabilization::{Observation, Stabilizer};
use qkdsim_core::{run_session, Config};

fn preset() -> Config {
    Config::default().validated().unwrap()
}

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn empty_session_writes_headers_only() {
    let out = run_session(&preset(), 0.0, 3);
    let dir = tempfile::tempdir().unwrap();
    let paths = export_timeseries(&out.telemetry, &out.records, &out.summary, dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    let (h, rows) = read_csv(&dir.path().join(TELEMETRY_FILE));
    assert_eq!(h, TELEMETRY_HEADER);
    assert!(rows.is_empty());
    let (h, rows) = read_csv(&dir.path().join(KEYS_FILE));
    assert_eq!(h, KEYS_HEADER);
    assert!(rows.is_empty());
    assert!(dir.path().join(SUMMARY_FILE).exists());
}

#[test]
fn ten_seconds_gives_ten_rows_and_no_window() {
    let out = run_session(&preset(), 10.0, 3);
    let dir = tempfile::tempdir().unwrap();
    export_timeseries(&out.telemetry, &out.records, &out.summary, dir.path()).unwrap();
    let (_, rows) = read_csv(&dir.path().join(TELEMETRY_FILE));
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.len() == TELEMETRY_HEADER.len()));
    let times: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(times, (0..10).map(f64::from).collect::<Vec<_>>());
    let (_, keys) = read_csv(&dir.path().join(KEYS_FILE));
    assert!(keys.is_empty());
}

#[test]
fn exported_values_round_trip() {
    let out = run_session(&preset(), 2.0 * 1200.0, 11);
    let dir = tempfile::tempdir().unwrap();
    export_timeseries(&out.telemetry, &out.records, &out.summary, dir.path()).unwrap();

    let (_, rows) = read_csv(&dir.path().join(TELEMETRY_FILE));
    for (row, t) in rows.iter().zip(&out.telemetry) {
        let q: f64 = row[1].parse().unwrap();
        assert!((q - t.qber[0].unwrap()).abs() <= 5e-9 * q);
        let gate: f64 = row[12].parse().unwrap();
        assert!((gate - t.gate_delay_ps).abs() <= 5e-9 * gate.abs().max(1.0));
    }

    let (_, keys) = read_csv(&dir.path().join(KEYS_FILE));
    assert_eq!(keys.len(), 2);
    for (row, r) in keys.iter().zip(&out.records) {
        assert_eq!(row[2].parse::<u64>().unwrap(), r.tally.classes[0].sifted);
        assert_eq!(row[7].parse::<u64>().unwrap(), r.tally.classes[2].errors);
        assert_eq!(row[11].parse::<u64>().unwrap(), r.key.secure_bits);
        let y1: f64 = row[9].parse().unwrap();
        assert!((y1 / r.bounds.y1_lower - 1.0).abs() <= 5e-9);
    }
}

#[test]
fn windows_partition_the_telemetry() {
    let out = run_session(&preset(), 3.0 * 1200.0 + 17.0, 5);
    assert_eq!(out.records.len(), 3);
    for (w, rec) in out.records.iter().enumerate() {
        let mut sum = qkdsim_core::PulseTally::default();
        for row in &out.telemetry[w * 1200..(w + 1) * 1200] {
            sum += row.tally;
        }
        assert_eq!(sum, rec.tally);
        assert_eq!(rec.window_start, 1200.0 * w as f64);
    }
}

/// The controllers see only observable counts and Alice's monitor. Replaying
/// the logged observations through a fresh stabilizer, with every hidden
/// field discarded, must reproduce the logged actuator trajectory exactly.
#[test]
fn controllers_never_see_hidden_state() {
    let config = preset();
    let out = run_session(&config, 1800.0, 9);
    let target = config.source.clock_rate * config.source.mean_photons_per_pulse();
    let mut replay = Stabilizer::new(&config.control, config.sim.time_step);
    for w in out.telemetry.windows(2) {
        let (now, next) = (&w[0], &w[1]);
        replay.observe(&Observation {
            signal_sifted: now.tally.signal().sifted,
            signal_errors: now.tally.signal().errors,
            detections: now.tally.total_sifted(),
            monitor_flux: now.monitor_flux,
            target_flux: target,
        });
        let s = &replay.state;
        assert_eq!(s.stretcher.setting, next.stretcher);
        assert_eq!(s.epc.settings, next.epc);
        assert_eq!(s.gate.setting, next.gate_delay_ps);
        assert_eq!(s.attenuator_db, next.atten_db);
    }
}

#[test]
fn stabilization_costs_no_pulses() {
    let on = preset();
    let mut off = preset();
    off.sim.stabilization_enabled = false;
    off.link = off.link.with_drift_frozen();
    let mut frozen_on = on.clone();
    frozen_on.link = frozen_on.link.with_drift_frozen();
    let a = run_session(&frozen_on, 1200.0, 4);
    let b = run_session(&off, 1200.0, 4);
    let (ra, rb) = (&a.records[0].tally, &b.records[0].tally);
    for (x, y) in ra.classes.iter().zip(&rb.classes) {
        assert_eq!(x.sent, y.sent);
    }
    // dithering around the optimum costs only a second-order fraction of counts
    let rel = ra.signal().sifted as f64 / rb.signal().sifted as f64;
    assert!(rel > 0.99 && rel <= 1.0 + 1e-3, "{rel}");
}

#[test]
fn different_seeds_differ() {
    let a = run_session(&preset(), 50.0, 1);
    let b = run_session(&preset(), 50.0, 2);
    assert_ne!(a.telemetry, b.telemetry);
}
