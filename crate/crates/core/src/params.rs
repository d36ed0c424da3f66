//! Protocol, link, security and simulation parameters.
//!
//! Defaults reproduce the published 50 km, 1 GHz operating point. Every
//! quantity is addressable by a flat key (see [`KEYS`]) so that the same
//! names work in configuration files and command-line overrides.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ConfigError, Violation};

/// Intrinsic optical misalignment that yields a 3.85% signal QBER at the
/// default operating point with all drifts nulled. Reproduced by
/// [`crate::channel::calibrate_misalignment`].
pub const CALIBRATED_INTRINSIC_ERROR: f64 = 0.0374889180484;

/// Mean photon numbers, send probabilities and clock of the decoy source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub mu: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub p_mu: f64,
    pub p_nu1: f64,
    pub p_nu2: f64,
    /// Pulses per second.
    pub clock_rate: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            nu1: 0.1,
            nu2: 0.0007,
            p_mu: 0.9883,
            p_nu1: 0.0078,
            p_nu2: 0.0039,
            clock_rate: 1e9,
        }
    }
}

impl SourceConfig {
    pub fn intensities(&self) -> [f64; 3] {
        [self.mu, self.nu1, self.nu2]
    }

    pub fn probabilities(&self) -> [f64; 3] {
        [self.p_mu, self.p_nu1, self.p_nu2]
    }

    /// Mean photon number per emitted pulse, averaged over classes.
    pub fn mean_photons_per_pulse(&self) -> f64 {
        self.mu * self.p_mu + self.nu1 * self.p_nu1 + self.nu2 * self.p_nu2
    }
}

/// Fiber, detector and environmental drift parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    /// km
    pub fiber_length: f64,
    /// dB/km
    pub loss_coefficient: f64,
    pub detector_efficiency: f64,
    /// Per detector, per gate.
    pub dark_count_prob: f64,
    pub num_detectors: u32,
    /// Optical error with every drift nulled.
    pub intrinsic_misalignment_error: f64,
    /// Width of the detection window (ps).
    pub gate_sigma: f64,
    /// rad²/s
    pub phase_diffusion: f64,
    /// rad²/s
    pub polarization_diffusion: f64,
    /// ps/s
    pub timing_drift_rate: f64,
    /// ps²/s
    pub timing_diffusion: f64,
    /// Variance of the log power factor per second.
    pub laser_power_diffusion: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            fiber_length: 50.0,
            loss_coefficient: 0.2,
            detector_efficiency: 0.165,
            dark_count_prob: 9e-6,
            num_detectors: 2,
            intrinsic_misalignment_error: CALIBRATED_INTRINSIC_ERROR,
            gate_sigma: 100.0,
            phase_diffusion: 1e-4,
            polarization_diffusion: 1e-6,
            timing_drift_rate: 0.05,
            timing_diffusion: 0.01,
            laser_power_diffusion: 1e-8,
        }
    }
}

impl LinkConfig {
    /// Background yield Y0: probability that at least one detector fires
    /// with no signal photon present.
    pub fn background_yield(&self) -> f64 {
        -(self.num_detectors as f64 * (-self.dark_count_prob).ln_1p()).exp_m1()
    }

    pub fn with_drift_frozen(mut self) -> Self {
        self.phase_diffusion = 0.0;
        self.polarization_diffusion = 0.0;
        self.timing_drift_rate = 0.0;
        self.timing_diffusion = 0.0;
        self.laser_power_diffusion = 0.0;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityConfig {
    /// Total composable failure probability.
    pub epsilon: f64,
    /// Error-correction inefficiency f >= 1.
    pub ec_efficiency: f64,
    /// Seconds of data per distilled key.
    pub distill_interval: f64,
}

impl Default for SecurityConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            ec_efficiency: 1.15,
            distill_interval: 1200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub duration: f64,
    pub time_step: f64,
    pub rng_seed: u64,
    pub stabilization_enabled: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 129_600.0,
            time_step: 1.0,
            rng_seed: 1,
            stabilization_enabled: true,
        }
    }
}

/// Step sizes, gains and cadences of the four feedback loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    /// rad
    pub stretcher_step: f64,
    pub stretcher_interval: f64,
    /// rad
    pub epc_step: f64,
    pub polarization_interval: f64,
    /// ps
    pub gate_step: f64,
    pub gate_interval: f64,
    pub intensity_gain: f64,
    pub intensity_interval: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            stretcher_step: 0.02,
            stretcher_interval: 1.0,
            epc_step: 0.02,
            polarization_interval: 5.0,
            gate_step: 2.0,
            gate_interval: 5.0,
            intensity_gain: 1.0,
            intensity_interval: 1.0,
        }
    }
}

/// The complete parameter bundle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub source: SourceConfig,
    pub link: LinkConfig,
    pub security: SecurityConfig,
    pub sim: SimConfig,
    pub control: ControlConfig,
}

impl Config {
    /// Consumes the bundle and returns it unchanged if every invariant holds.
    pub fn validated(self) -> Result<Self, ConfigError> {
        validate_config(&self)?;
        Ok(self)
    }

    /// Parses a `key = value` file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Config::default();
        config.apply_text(&text)?;
        Ok(config)
    }

    /// Applies `key = value` lines. `#` starts a comment; blank lines are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: idx + 1 })?;
            self.set_at(key.trim(), value.trim(), Some(idx + 1))?;
        }
        Ok(())
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(key, value, None)
    }

    fn set_at(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            line,
        };
        let f = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "mu" => self.source.mu = f()?,
            "nu1" => self.source.nu1 = f()?,
            "nu2" => self.source.nu2 = f()?,
            "p_mu" => self.source.p_mu = f()?,
            "p_nu1" => self.source.p_nu1 = f()?,
            "p_nu2" => self.source.p_nu2 = f()?,
            "clock_rate" => self.source.clock_rate = f()?,
            "fiber_length" => self.link.fiber_length = f()?,
            "loss_coefficient" => self.link.loss_coefficient = f()?,
            "detector_efficiency" => self.link.detector_efficiency = f()?,
            "dark_count_prob" => self.link.dark_count_prob = f()?,
            "num_detectors" => self.link.num_detectors = value.parse().map_err(|_| bad())?,
            "intrinsic_misalignment_error" => self.link.intrinsic_misalignment_error = f()?,
            "gate_sigma" => self.link.gate_sigma = f()?,
            "phase_diffusion" => self.link.phase_diffusion = f()?,
            "polarization_diffusion" => self.link.polarization_diffusion = f()?,
            "timing_drift_rate" => self.link.timing_drift_rate = f()?,
            "timing_diffusion" => self.link.timing_diffusion = f()?,
            "laser_power_diffusion" => self.link.laser_power_diffusion = f()?,
            "epsilon" => self.security.epsilon = f()?,
            "ec_efficiency" => self.security.ec_efficiency = f()?,
            "distill_interval" => self.security.distill_interval = f()?,
            "duration" => self.sim.duration = f()?,
            "time_step" => self.sim.time_step = f()?,
            "rng_seed" => self.sim.rng_seed = value.parse().map_err(|_| bad())?,
            "stabilization_enabled" => {
                self.sim.stabilization_enabled = match value {
                    "true" | "on" | "yes" | "1" => true,
                    "false" | "off" | "no" | "0" => false,
                    _ => return Err(bad()),
                }
            }
            "stretcher_step" => self.control.stretcher_step = f()?,
            "stretcher_interval" => self.control.stretcher_interval = f()?,
            "epc_step" => self.control.epc_step = f()?,
            "polarization_interval" => self.control.polarization_interval = f()?,
            "gate_step" => self.control.gate_step = f()?,
            "gate_interval" => self.control.gate_interval = f()?,
            "intensity_gain" => self.control.intensity_gain = f()?,
            "intensity_interval" => self.control.intensity_interval = f()?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    line,
                })
            }
        }
        Ok(())
    }

    /// Textual value of a key, formatted so that `set(key, get(key))` is exact.
    pub fn get(&self, key: &str) -> Option<String> {
        let v = match key {
            "mu" => self.source.mu.to_string(),
            "nu1" => self.source.nu1.to_string(),
            "nu2" => self.source.nu2.to_string(),
            "p_mu" => self.source.p_mu.to_string(),
            "p_nu1" => self.source.p_nu1.to_string(),
            "p_nu2" => self.source.p_nu2.to_string(),
            "clock_rate" => self.source.clock_rate.to_string(),
            "fiber_length" => self.link.fiber_length.to_string(),
            "loss_coefficient" => self.link.loss_coefficient.to_string(),
            "detector_efficiency" => self.link.detector_efficiency.to_string(),
            "dark_count_prob" => self.link.dark_count_prob.to_string(),
            "num_detectors" => self.link.num_detectors.to_string(),
            "intrinsic_misalignment_error" => self.link.intrinsic_misalignment_error.to_string(),
            "gate_sigma" => self.link.gate_sigma.to_string(),
            "phase_diffusion" => self.link.phase_diffusion.to_string(),
            "polarization_diffusion" => self.link.polarization_diffusion.to_string(),
            "timing_drift_rate" => self.link.timing_drift_rate.to_string(),
            "timing_diffusion" => self.link.timing_diffusion.to_string(),
            "laser_power_diffusion" => self.link.laser_power_diffusion.to_string(),
            "epsilon" => self.security.epsilon.to_string(),
            "ec_efficiency" => self.security.ec_efficiency.to_string(),
            "distill_interval" => self.security.distill_interval.to_string(),
            "duration" => self.sim.duration.to_string(),
            "time_step" => self.sim.time_step.to_string(),
            "rng_seed" => self.sim.rng_seed.to_string(),
            "stabilization_enabled" => self.sim.stabilization_enabled.to_string(),
            "stretcher_step" => self.control.stretcher_step.to_string(),
            "stretcher_interval" => self.control.stretcher_interval.to_string(),
            "epc_step" => self.control.epc_step.to_string(),
            "polarization_interval" => self.control.polarization_interval.to_string(),
            "gate_step" => self.control.gate_step.to_string(),
            "gate_interval" => self.control.gate_interval.to_string(),
            "intensity_gain" => self.control.intensity_gain.to_string(),
            "intensity_interval" => self.control.intensity_interval.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Serializes every key in file format, one per line.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key.name).expect("every listed key is gettable");
            let _ = writeln!(out, "{} = {}", key.name, value);
        }
        out
    }
}

/// Documentation for one configuration key.
#[derive(Debug, Clone, Copy)]
pub struct KeyInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// Where the default comes from.
    pub provenance: &'static str,
}

const fn key(name: &'static str, description: &'static str, provenance: &'static str) -> KeyInfo {
    KeyInfo {
        name,
        description,
        provenance,
    }
}

const REPORTED: &str = "reported operating point";
const CHOSEN: &str = "modeling choice";

pub const KEYS: &[KeyInfo] = &[
    key("mu", "signal mean photon number per pulse", REPORTED),
    key("nu1", "weak decoy mean photon number per pulse", REPORTED),
    key("nu2", "near-vacuum decoy mean photon number per pulse", REPORTED),
    key("p_mu", "signal send probability", REPORTED),
    key("p_nu1", "weak decoy send probability", REPORTED),
    key("p_nu2", "near-vacuum decoy send probability", REPORTED),
    key("clock_rate", "pulse clock (pulses/s)", REPORTED),
    key("fiber_length", "fiber length (km)", REPORTED),
    key("loss_coefficient", "fiber attenuation (dB/km)", "reported measured loss"),
    key("detector_efficiency", "APD detection efficiency", "reported detector figure"),
    key("dark_count_prob", "dark count probability per detector per gate", "reported detector figure"),
    key("num_detectors", "number of detectors", "two-detector receiver"),
    key("intrinsic_misalignment_error", "optical error with drifts nulled", "calibrated to 3.85% signal QBER"),
    key("gate_sigma", "detection window width (ps)", CHOSEN),
    key("phase_diffusion", "interferometer phase diffusion (rad^2/s)", CHOSEN),
    key("polarization_diffusion", "fiber polarization diffusion (rad^2/s)", CHOSEN),
    key("timing_drift_rate", "photon arrival drift (ps/s)", CHOSEN),
    key("timing_diffusion", "photon arrival diffusion (ps^2/s)", CHOSEN),
    key("laser_power_diffusion", "log laser power diffusion (1/s)", CHOSEN),
    key("epsilon", "composable failure probability", REPORTED),
    key("ec_efficiency", "error-correction inefficiency f", CHOSEN),
    key("distill_interval", "key distillation interval (s)", REPORTED),
    key("duration", "simulated duration (s)", REPORTED),
    key("time_step", "simulation step (s)", "per-second statistics"),
    key("rng_seed", "random seed", CHOSEN),
    key("stabilization_enabled", "run the feedback loops", CHOSEN),
    key("stretcher_step", "fiber stretcher dither step (rad)", CHOSEN),
    key("stretcher_interval", "fiber stretcher update interval (s)", CHOSEN),
    key("epc_step", "polarization controller dither step (rad)", CHOSEN),
    key("polarization_interval", "polarization loop update interval (s)", CHOSEN),
    key("gate_step", "gate delay dither step (ps)", CHOSEN),
    key("gate_interval", "gate delay loop update interval (s)", CHOSEN),
    key("intensity_gain", "intensity loop proportional gain", CHOSEN),
    key("intensity_interval", "intensity loop update interval (s)", CHOSEN),
];

pub fn is_known_key(name: &str) -> bool {
    KEYS.iter().any(|k| k.name == name)
}

/// Checks every invariant and reports all violations at once.
pub fn validate_config(config: &Config) -> Result<(), ConfigError> {
    let mut v = Vec::new();
    let mut fail = |field: &'static str, message: String| v.push(Violation { field, message });

    let s = &config.source;
    let finite = [s.mu, s.nu1, s.nu2, s.p_mu, s.p_nu1, s.p_nu2, s.clock_rate]
        .iter()
        .all(|x| x.is_finite());
    if !finite {
        fail("source", "all source values must be finite".into());
    }
    if !(s.nu2 >= 0.0) {
        fail("nu2", format!("nu2 must be >= 0 (got {})", s.nu2));
    }
    if !(s.nu1 > s.nu2) {
        fail("nu1", format!("nu1 must exceed nu2 ({} <= {})", s.nu1, s.nu2));
    }
    if !(s.mu > s.nu1) {
        fail("mu", format!("mu must exceed nu1 ({} <= {})", s.mu, s.nu1));
    } else if !(s.mu > s.nu1 + s.nu2) {
        fail(
            "mu",
            format!("mu must exceed nu1 + nu2 for the decoy bound ({} <= {})", s.mu, s.nu1 + s.nu2),
        );
    }
    for (field, p) in [("p_mu", s.p_mu), ("p_nu1", s.p_nu1), ("p_nu2", s.p_nu2)] {
        if !(p > 0.0 && p < 1.0) {
            fail(field, format!("{field} must lie in (0, 1) (got {p})"));
        }
    }
    let sum = s.p_mu + s.p_nu1 + s.p_nu2;
    if !((sum - 1.0).abs() <= 1e-12) {
        fail("p_mu", format!("probabilities must sum to 1 (got {sum})"));
    }
    if !(s.clock_rate > 0.0) {
        fail("clock_rate", format!("clock_rate must be > 0 (got {})", s.clock_rate));
    }

    let l = &config.link;
    for (field, p) in [
        ("detector_efficiency", l.detector_efficiency),
        ("dark_count_prob", l.dark_count_prob),
        ("intrinsic_misalignment_error", l.intrinsic_misalignment_error),
    ] {
        if !(0.0..=1.0).contains(&p) {
            fail(field, format!("{field} must lie in [0, 1] (got {p})"));
        }
    }
    if !(l.fiber_length >= 0.0 && l.fiber_length.is_finite()) {
        fail("fiber_length", format!("fiber_length must be >= 0 (got {})", l.fiber_length));
    }
    if !(l.loss_coefficient >= 0.0 && l.loss_coefficient.is_finite()) {
        fail(
            "loss_coefficient",
            format!("loss_coefficient must be >= 0 (got {})", l.loss_coefficient),
        );
    }
    if l.num_detectors == 0 {
        fail("num_detectors", "num_detectors must be >= 1".into());
    }
    if !(l.gate_sigma > 0.0 && l.gate_sigma.is_finite()) {
        fail("gate_sigma", format!("gate_sigma must be > 0 (got {})", l.gate_sigma));
    }
    for (field, d) in [
        ("phase_diffusion", l.phase_diffusion),
        ("polarization_diffusion", l.polarization_diffusion),
        ("timing_diffusion", l.timing_diffusion),
        ("laser_power_diffusion", l.laser_power_diffusion),
    ] {
        if !(d >= 0.0 && d.is_finite()) {
            fail(field, format!("{field} must be >= 0 (got {d})"));
        }
    }
    if !l.timing_drift_rate.is_finite() {
        fail("timing_drift_rate", "timing_drift_rate must be finite".into());
    }

    let sec = &config.security;
    if !(sec.epsilon > 0.0 && sec.epsilon < 1.0) {
        fail("epsilon", format!("epsilon must lie in (0, 1) (got {})", sec.epsilon));
    }
    if !(sec.ec_efficiency >= 1.0 && sec.ec_efficiency.is_finite()) {
        fail(
            "ec_efficiency",
            format!("ec_efficiency must be >= 1 (got {})", sec.ec_efficiency),
        );
    }
    if !(sec.distill_interval > 0.0 && sec.distill_interval.is_finite()) {
        fail(
            "distill_interval",
            format!("distill_interval must be > 0 (got {})", sec.distill_interval),
        );
    }

    let sim = &config.sim;
    if !(sim.time_step > 0.0 && sim.time_step.is_finite()) {
        fail("time_step", format!("time_step must be > 0 (got {})", sim.time_step));
    } else {
        if !(sim.duration >= sim.time_step && sim.duration.is_finite()) {
            fail(
                "duration",
                format!("duration must be >= time_step (got {})", sim.duration),
            );
        }
        if sec.distill_interval > 0.0 && steps_in(sec.distill_interval, sim.time_step).is_none() {
            fail(
                "distill_interval",
                "distill_interval must be a whole number of time steps".into(),
            );
        }
    }

    let c = &config.control;
    for (field, step) in [
        ("stretcher_step", c.stretcher_step),
        ("epc_step", c.epc_step),
        ("gate_step", c.gate_step),
    ] {
        if !(step > 0.0 && step.is_finite()) {
            fail(field, format!("{field} must be > 0 (got {step})"));
        }
    }
    if !(c.intensity_gain > 0.0 && c.intensity_gain <= 2.0) {
        fail(
            "intensity_gain",
            format!("intensity_gain must lie in (0, 2] (got {})", c.intensity_gain),
        );
    }
    for (field, interval) in [
        ("stretcher_interval", c.stretcher_interval),
        ("polarization_interval", c.polarization_interval),
        ("gate_interval", c.gate_interval),
        ("intensity_interval", c.intensity_interval),
    ] {
        if !(interval >= sim.time_step && interval.is_finite()) {
            fail(field, format!("{field} must be >= time_step (got {interval})"));
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(v))
    }
}

/// Number of whole steps of length `step` in `span`, if `span` is (numerically) a multiple.
pub(crate) fn steps_in(span: f64, step: f64) -> Option<u64> {
    let n = (span / step).round();
    if n >= 1.0 && ((n * step - span).abs() <= 1e-9 * span.max(step)) {
        Some(n as u64)
    } else {
        None
    }
}
