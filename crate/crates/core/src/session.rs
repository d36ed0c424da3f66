//! Closed-loop, discrete-time session: drift, feedback, sampling and
//! windowed distillation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{class_rates, DriftState, PulseClass, PulseTally, TallySampler};
use crate::finite_key::{asymptotic_rate, distill, DecoyBounds, KeyResult};
use crate::params::{steps_in, Config};
use crate::stabilization::{effective_drift, step_drift, ControllerState, Observation, Stabilizer};

/// One time step of observable statistics, actuator values and hidden truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRow {
    pub time_s: f64,
    pub qber: [Option<f64>; 3],
    pub transmittance: [Option<f64>; 3],
    pub stretcher: f64,
    pub epc: [f64; 4],
    pub gate_delay_ps: f64,
    pub atten_db: f64,
    /// Alice's power monitor reading (photons/s).
    pub monitor_flux: f64,
    /// Environmental drift before actuation. Diagnostic only; never fed to a controller.
    pub hidden: DriftState,
    pub tally: PulseTally,
}

/// One distilled key.
#[derive(Debug, Clone, PartialEq)]
pub struct SecureKeyRecord {
    pub window_start: f64,
    pub window_end: f64,
    pub tally: PulseTally,
    pub qber_signal: Option<f64>,
    pub transmittance: [Option<f64>; 3],
    pub bounds: DecoyBounds,
    pub key: KeyResult,
    /// bits/s
    pub secure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionSummary {
    pub steps: usize,
    pub windows: usize,
    pub nonzero_windows: usize,
    pub total_secure_bits: u64,
    /// bits/s over the distilled windows.
    pub mean_secure_rate: f64,
    pub mean_qber_signal: Option<f64>,
    pub max_qber_signal: Option<f64>,
    /// Fraction of per-step signal QBER within 10% (relative) of the mean.
    pub qber_within_10pct: Option<f64>,
    pub mean_efficiency: Option<f64>,
    /// Relative standard deviation of the per-window nu1/mu count ratio.
    pub decoy_ratio_rel_std: Option<f64>,
    /// Same for nu2/mu.
    pub vacuum_ratio_rel_std: Option<f64>,
    pub initial_transmittance: Option<f64>,
    pub min_transmittance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionOutput {
    pub telemetry: Vec<TelemetryRow>,
    pub records: Vec<SecureKeyRecord>,
    pub summary: SessionSummary,
}

/// Distills one complete window.
pub fn distill_window(tally: &PulseTally, config: &Config, window_start: f64) -> SecureKeyRecord {
    let interval = config.security.distill_interval;
    let d = distill(tally, &config.source, &config.security);
    let sent: u64 = tally.classes.iter().map(|c| c.sent).sum();
    let reference = asymptotic_rate(&config.source, &config.link, &config.security) * sent as f64;
    let key = d.key.with_reference(reference);
    SecureKeyRecord {
        window_start,
        window_end: window_start + interval,
        tally: *tally,
        qber_signal: tally.signal().qber(),
        transmittance: PulseClass::ALL.map(|c| tally.class(c).transmittance()),
        bounds: d.bounds,
        secure_rate: key.secure_bits as f64 / interval,
        key,
    }
}

/// Runs `duration` seconds from a zero-drift start. Deterministic in `seed`.
///
/// `config` must already be validated.
pub fn run_session(config: &Config, duration: f64, seed: u64) -> SessionOutput {
    let dt = config.sim.time_step;
    let steps = if duration > 0.0 {
        (duration / dt + 1e-9).floor() as usize
    } else {
        0
    };
    let window_steps = steps_in(config.security.distill_interval, dt).expect("validated distill interval") as usize;

    // independent streams so drift realizations do not depend on loop settings
    let mut drift_rng = ChaCha8Rng::seed_from_u64(seed);
    drift_rng.set_stream(1);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
    sample_rng.set_stream(2);

    let mut hidden = DriftState::default();
    let mut stabilizer = Stabilizer::new(&config.control, dt);
    let idle = ControllerState::new(&config.control);
    let mut sampler = TallySampler::new(&config.source);
    let target_flux = config.source.clock_rate * config.source.mean_photons_per_pulse();

    let mut telemetry = Vec::with_capacity(steps);
    let mut records = Vec::new();
    let mut window = PulseTally::default();

    for i in 0..steps {
        let ctrl = if config.sim.stabilization_enabled {
            &stabilizer.state
        } else {
            &idle
        };
        let effective = effective_drift(&hidden, ctrl);
        let rates = class_rates(&effective, &config.source, &config.link);
        let tally = sampler.sample(&rates, dt, &mut sample_rng);
        let monitor_flux = target_flux * effective.power_factor;

        telemetry.push(TelemetryRow {
            time_s: i as f64 * dt,
            qber: PulseClass::ALL.map(|c| tally.class(c).qber()),
            transmittance: PulseClass::ALL.map(|c| tally.class(c).transmittance()),
            stretcher: ctrl.stretcher.setting,
            epc: ctrl.epc.settings,
            gate_delay_ps: ctrl.gate.setting,
            atten_db: ctrl.attenuator_db,
            monitor_flux,
            hidden,
            tally,
        });

        if config.sim.stabilization_enabled {
            let signal = tally.signal();
            stabilizer.observe(&Observation {
                signal_sifted: signal.sifted,
                signal_errors: signal.errors,
                detections: tally.total_sifted(),
                monitor_flux,
                target_flux,
            });
        }

        window += tally;
        if (i + 1) % window_steps == 0 {
            let start = (i + 1 - window_steps) as f64 * dt;
            records.push(distill_window(&window, config, start));
            window = PulseTally::default();
        }

        hidden = step_drift(&hidden, &config.link, dt, &mut drift_rng);
    }

    let summary = summarize(&telemetry, &records, config.security.distill_interval);
    SessionOutput {
        telemetry,
        records,
        summary,
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn rel_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(var.sqrt() / m)
}

fn count_ratio(records: &[SecureKeyRecord], class: PulseClass) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.tally.signal().sifted > 0)
        .map(|r| r.tally.class(class).sifted as f64 / r.tally.signal().sifted as f64)
        .collect()
}

pub fn summarize(telemetry: &[TelemetryRow], records: &[SecureKeyRecord], interval: f64) -> SessionSummary {
    let qbers: Vec<f64> = telemetry.iter().filter_map(|r| r.qber[0]).collect();
    let mean_qber = mean(&qbers);
    let within = mean_qber.map(|m| qbers.iter().filter(|q| (*q - m).abs() <= 0.1 * m).count() as f64 / qbers.len() as f64);
    let trans: Vec<f64> = telemetry.iter().filter_map(|r| r.transmittance[0]).collect();
    let total_bits: u64 = records.iter().map(|r| r.key.secure_bits).sum();
    let effs: Vec<f64> = records.iter().filter_map(|r| r.key.efficiency).collect();

    SessionSummary {
        steps: telemetry.len(),
        windows: records.len(),
        nonzero_windows: records.iter().filter(|r| r.key.secure_bits > 0).count(),
        total_secure_bits: total_bits,
        mean_secure_rate: if records.is_empty() {
            0.0
        } else {
            total_bits as f64 / (records.len() as f64 * interval)
        },
        mean_qber_signal: mean_qber,
        max_qber_signal: qbers.iter().cloned().reduce(f64::max),
        qber_within_10pct: within,
        mean_efficiency: mean(&effs),
        decoy_ratio_rel_std: rel_std(&count_ratio(records, PulseClass::WeakDecoy)),
        vacuum_ratio_rel_std: rel_std(&count_ratio(records, PulseClass::VacuumDecoy)),
        initial_transmittance: trans.first().copied(),
        min_transmittance: trans.iter().cloned().reduce(f64::min),
    }
}

impl SessionSummary {
    /// Human-readable block written next to the CSV files.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.3}%", 100.0 * x));
        format!(
            "steps: {}\n\
             windows: {} ({} with nonzero key)\n\
             total secure bits: {}\n\
             mean secure rate: {:.6} Mbit/s\n\
             mean signal QBER: {}\n\
             max signal QBER: {}\n\
             signal QBER within 10% of mean: {}\n\
             mean key efficiency: {}\n\
             nu1/mu count ratio std: {}\n\
             nu2/mu count ratio std: {}\n\
             initial signal transmittance: {}\n\
             min signal transmittance: {}\n",
            self.steps,
            self.windows,
            self.nonzero_windows,
            self.total_secure_bits,
            self.mean_secure_rate / 1e6,
            pct(self.mean_qber_signal),
            pct(self.max_qber_signal),
            pct(self.qber_within_10pct),
            opt(self.mean_efficiency),
            pct(self.decoy_ratio_rel_std),
            pct(self.vacuum_ratio_rel_std),
            opt(self.initial_transmittance),
            opt(self.min_transmittance),
        )
    }
}
