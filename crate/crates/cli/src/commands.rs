use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use qkdsim_core::channel::{calibrate_misalignment, class_rates, expectation_tally, ClassTally, DriftState};
use qkdsim_core::export::{export_timeseries, format_sig9};
use qkdsim_core::finite_key::{asymptotic_rate, distill, efficiency_curve};
use qkdsim_core::optimizer::{objective, optimize_source, SearchSettings};
use qkdsim_core::{run_session, Config, ConfigError, PulseClass, PulseTally};

use crate::args::{CommandRequest, Extra};

/// Why a command failed; each kind has its own exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    UnknownKey(ConfigError),
    UnreadableConfig(ConfigError),
    Invalid(String),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::UnknownKey(_) => 3,
            Failure::UnreadableConfig(_) => 4,
            Failure::Invalid(_) => 5,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) => f.write_str(m),
            Failure::UnknownKey(e) | Failure::UnreadableConfig(e) => write!(f, "{e}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn from_config_error(e: ConfigError) -> Failure {
    match e {
        ConfigError::UnknownKey { .. } => Failure::UnknownKey(e),
        ConfigError::Io { .. } | ConfigError::Syntax { .. } => Failure::UnreadableConfig(e),
        ConfigError::BadValue { line: Some(_), .. } => Failure::UnreadableConfig(e),
        other => Failure::Invalid(other.to_string()),
    }
}

/// Defaults, then the file, then overrides, then the seed; validated last.
pub fn build_config(req: &CommandRequest) -> Result<Config, Failure> {
    let mut config = match &req.config_path {
        Some(path) => Config::from_file(path).map_err(from_config_error)?,
        None => Config::default(),
    };
    for (key, value) in &req.overrides {
        config.set(key, value).map_err(from_config_error)?;
    }
    if let Some(seed) = req.seed {
        config.sim.rng_seed = seed;
    }
    config.validated().map_err(|e| Failure::Invalid(e.to_string()))
}

/// Files written so far; removed again unless the command completes.
struct Outputs {
    paths: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    fn new() -> Self {
        Self {
            paths: Vec::new(),
            done: false,
        }
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> anyhow::Result<()> {
        self.paths.push(path.clone());
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn finish(mut self) -> Vec<PathBuf> {
        self.done = true;
        std::mem::take(&mut self.paths)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.done {
            for p in &self.paths {
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub fn dispatch(req: &CommandRequest) -> Result<Vec<PathBuf>, Failure> {
    let config = build_config(req)?;
    fs::create_dir_all(&req.out_dir).with_context(|| format!("creating {}", req.out_dir.display()))?;
    let mut out = Outputs::new();
    match &req.extra {
        Extra::Simulate => simulate(&config, &req.out_dir, &mut out)?,
        Extra::Keyrate { tally_file, n_pulses } => keyrate(&config, tally_file.as_deref(), *n_pulses, &req.out_dir, &mut out)?,
        Extra::EfficiencyCurve { from, to, points } => curve(&config, *from, *to, *points, &req.out_dir, &mut out)?,
        Extra::Optimize { n_pulses } => optimize(&config, *n_pulses, &req.out_dir, &mut out)?,
        Extra::Calibrate { target_qber } => calibrate(&config, *target_qber, &req.out_dir, &mut out)?,
    }
    Ok(out.finish())
}

fn simulate(config: &Config, dir: &Path, out: &mut Outputs) -> Result<(), Failure> {
    let session = run_session(config, config.sim.duration, config.sim.rng_seed);
    // register first so a failed export is cleaned up too
    out.paths.extend(["telemetry.csv", "keys.csv", "summary.txt"].map(|f| dir.join(f)));
    export_timeseries(&session.telemetry, &session.records, &session.summary, dir).context("exporting session")?;
    print!("{}", session.summary.to_text());
    Ok(())
}

fn read_tally(path: &Path) -> anyhow::Result<PulseTally> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut tally = PulseTally::default();
    let mut seen = [false; 3];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        let field = |j: usize| rec.get(j).map(str::trim).ok_or_else(|| anyhow!("row {}: expected 4 columns", i + 1));
        let class = PulseClass::ALL
            .into_iter()
            .find(|c| c.label() == field(0).unwrap_or(""))
            .ok_or_else(|| anyhow!("row {}: class must be mu, nu1 or nu2", i + 1))?;
        let num = |j: usize| -> anyhow::Result<u64> {
            let s = field(j)?;
            s.parse().with_context(|| format!("row {}: `{s}` is not a count", i + 1))
        };
        let c = ClassTally {
            sent: num(1)?,
            sifted: num(2)?,
            errors: num(3)?,
        };
        if !(c.errors <= c.sifted && c.sifted <= c.sent) {
            return Err(anyhow!("row {}: need errors <= sifted <= sent", i + 1));
        }
        tally.classes[class.index()] = c;
        seen[class.index()] = true;
    }
    if seen.contains(&false) {
        return Err(anyhow!("{}: every class (mu, nu1, nu2) needs one row", path.display()));
    }
    Ok(tally)
}

fn keyrate(
    config: &Config,
    tally_file: Option<&Path>,
    n_pulses: Option<f64>,
    dir: &Path,
    out: &mut Outputs,
) -> Result<(), Failure> {
    let tally = match tally_file {
        Some(p) => read_tally(p)?,
        None => {
            let n = n_pulses.unwrap_or(config.source.clock_rate * config.security.distill_interval);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Failure::Invalid(format!("n-pulses must be positive, got {n}")));
            }
            let rates = class_rates(&DriftState::default(), &config.source, &config.link);
            expectation_tally(&rates, &config.source, n)
        }
    };
    let sent: u64 = tally.classes.iter().map(|c| c.sent).sum();
    let d = distill(&tally, &config.source, &config.security);
    let key = d
        .key
        .with_reference(asymptotic_rate(&config.source, &config.link, &config.security) * sent as f64);
    let opt = |x: Option<f64>| x.map(format_sig9).unwrap_or_default();

    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, rec: &[String]| w.write_record(rec).context("formatting keyrate.csv");
    write(
        &mut w,
        &[
            "sent", "sifted_mu", "errors_mu", "qber_mu", "y1_lower", "e1_upper", "y0_lower", "single_photon_bits",
            "leakage_bits", "privacy_amplification_bits", "secure_bits", "efficiency", "epsilon_spent",
        ]
        .map(String::from),
    )?;
    let s = tally.signal();
    write(
        &mut w,
        &[
            sent.to_string(),
            s.sifted.to_string(),
            s.errors.to_string(),
            opt(s.qber()),
            format_sig9(d.bounds.y1_lower),
            format_sig9(d.bounds.e1_upper),
            format_sig9(d.bounds.y0_lower),
            format_sig9(key.single_photon_bits),
            format_sig9(key.leakage_bits),
            format_sig9(key.privacy_amplification_bits),
            key.secure_bits.to_string(),
            opt(key.efficiency),
            format_sig9(key.epsilon_spent),
        ],
    )?;
    let bytes = w.into_inner().map_err(|e| anyhow!("formatting keyrate.csv: {e}"))?;
    out.write(dir.join("keyrate.csv"), &String::from_utf8(bytes).context("keyrate.csv encoding")?)?;
    println!(
        "secure bits: {}\nefficiency: {}\ny1_lower: {}\ne1_upper: {}",
        key.secure_bits,
        opt(key.efficiency),
        format_sig9(d.bounds.y1_lower),
        format_sig9(d.bounds.e1_upper)
    );
    Ok(())
}

fn curve(config: &Config, from: f64, to: f64, points: usize, dir: &Path, out: &mut Outputs) -> Result<(), Failure> {
    if !(from > 0.0 && to >= from && to.is_finite() && points >= 1) {
        return Err(Failure::Invalid(format!(
            "need 0 < from <= to and points >= 1, got from {from}, to {to}, points {points}"
        )));
    }
    let rows = efficiency_curve(from, to, points, &config.source, &config.link, &config.security);
    let mut text = String::from("n_pulses,efficiency\n");
    for (n, e) in rows {
        text.push_str(&format!("{},{}\n", format_sig9(n), format_sig9(e)));
    }
    out.write(dir.join("efficiency_curve.csv"), &text)?;
    Ok(())
}

fn optimize(config: &Config, n_pulses: f64, dir: &Path, out: &mut Outputs) -> Result<(), Failure> {
    let settings = SearchSettings {
        start: config.source.clone(),
        ..SearchSettings::default()
    };
    let result = optimize_source(&config.link, &config.security, n_pulses, &settings)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    let start = objective(&config.source, &config.link, &config.security, n_pulses);
    let b = &result.best;
    let clock = config.source.clock_rate;
    let text = format!(
        "block size: {n_pulses} pulses\n\
         best rate: {} bits/pulse ({} bit/s)\n\
         starting rate: {} bits/pulse\n\
         mu = {}\nnu1 = {}\nnu2 = {}\np_mu = {}\np_nu1 = {}\np_nu2 = {}\n\
         sweeps: {}\nevaluations: {}\n",
        format_sig9(result.rate),
        format_sig9(result.rate * clock),
        format_sig9(start),
        b.mu,
        b.nu1,
        b.nu2,
        b.p_mu,
        b.p_nu1,
        b.p_nu2,
        result.trace.len(),
        result.evaluations,
    );
    let best = Config {
        source: result.best.clone(),
        ..config.clone()
    };
    out.write(dir.join("optimization.txt"), &text)?;
    out.write(dir.join("best_config.conf"), &best.to_config_text())?;
    print!("{text}");
    Ok(())
}

fn calibrate(config: &Config, target: f64, dir: &Path, out: &mut Outputs) -> Result<(), Failure> {
    let e = calibrate_misalignment(&config.source, &config.link, target)
        .ok_or_else(|| Failure::Invalid(format!("target QBER {target} is not reachable on this link")))?;
    let mut calibrated = config.clone();
    calibrated.link.intrinsic_misalignment_error = e;
    out.write(dir.join("calibrated.conf"), &calibrated.to_config_text())?;
    println!("intrinsic_misalignment_error = {e}");
    Ok(())
}
