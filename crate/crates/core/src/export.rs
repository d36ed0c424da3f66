//! CSV export of session telemetry and key records.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::ExportError;
use crate::session::{SecureKeyRecord, SessionSummary, TelemetryRow};

pub const TELEMETRY_HEADER: [&str; 18] = [
    "time_s",
    "qber_mu",
    "qber_nu1",
    "qber_nu2",
    "trans_mu",
    "trans_nu1",
    "trans_nu2",
    "stretcher",
    "epc1",
    "epc2",
    "epc3",
    "epc4",
    "gate_delay_ps",
    "atten_db",
    "hidden_phase_rad",
    "hidden_pol_rad",
    "hidden_timing_ps",
    "hidden_power",
];

pub const KEYS_HEADER: [&str; 14] = [
    "window_start_s",
    "window_end_s",
    "sifted_mu",
    "errors_mu",
    "sifted_nu1",
    "errors_nu1",
    "sifted_nu2",
    "errors_nu2",
    "qber_mu",
    "y1_lower",
    "e1_upper",
    "secure_bits",
    "secure_rate_bps",
    "efficiency",
];

pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const KEYS_FILE: &str = "keys.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Nine significant digits, `%.9g` style: fixed notation for moderate
/// exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig9).unwrap_or_default()
}

fn telemetry_record(row: &TelemetryRow) -> Vec<String> {
    let mut rec = vec![format_sig9(row.time_s)];
    rec.extend(row.qber.iter().map(|q| opt(*q)));
    rec.extend(row.transmittance.iter().map(|t| opt(*t)));
    rec.push(format_sig9(row.stretcher));
    rec.extend(row.epc.iter().map(|e| format_sig9(*e)));
    rec.push(format_sig9(row.gate_delay_ps));
    rec.push(format_sig9(row.atten_db));
    rec.push(format_sig9(row.hidden.phase_error));
    rec.push(format_sig9(row.hidden.polarization_angle));
    rec.push(format_sig9(row.hidden.timing_offset));
    rec.push(format_sig9(row.hidden.power_factor));
    rec
}

fn key_record(r: &SecureKeyRecord) -> Vec<String> {
    let mut rec = vec![format_sig9(r.window_start), format_sig9(r.window_end)];
    for c in &r.tally.classes {
        rec.push(c.sifted.to_string());
        rec.push(c.errors.to_string());
    }
    rec.push(opt(r.qber_signal));
    rec.push(format_sig9(r.bounds.y1_lower));
    rec.push(format_sig9(r.bounds.e1_upper));
    rec.push(r.key.secure_bits.to_string());
    rec.push(format_sig9(r.secure_rate));
    rec.push(opt(r.key.efficiency));
    rec
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), ExportError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let csv_err = |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_telemetry(path: &Path, rows: &[TelemetryRow]) -> Result<(), ExportError> {
    write_csv(path, &TELEMETRY_HEADER, rows.iter().map(telemetry_record))
}

pub fn write_keys(path: &Path, records: &[SecureKeyRecord]) -> Result<(), ExportError> {
    write_csv(path, &KEYS_HEADER, records.iter().map(key_record))
}

/// Writes telemetry, keys and summary into `dir`; returns the paths written.
pub fn export_timeseries(
    rows: &[TelemetryRow],
    records: &[SecureKeyRecord],
    summary: &SessionSummary,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExportError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let telemetry = dir.join(TELEMETRY_FILE);
    let keys = dir.join(KEYS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    write_telemetry(&telemetry, rows)?;
    write_keys(&keys, records)?;
    std::fs::write(&summary_path, summary.to_text()).map_err(io(&summary_path))?;
    Ok(vec![telemetry, keys, summary_path])
}
