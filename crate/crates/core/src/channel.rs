//! Detection and error probabilities per intensity class, and sampled counts.

use std::ops::{Add, AddAssign};

use rand::Rng;

use crate::params::{LinkConfig, SourceConfig};
use crate::sampling::binomial;

/// Intensity class of an emitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulseClass {
    Signal,
    WeakDecoy,
    VacuumDecoy,
}

impl PulseClass {
    pub const ALL: [PulseClass; 3] = [PulseClass::Signal, PulseClass::WeakDecoy, PulseClass::VacuumDecoy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            PulseClass::Signal => "mu",
            PulseClass::WeakDecoy => "nu1",
            PulseClass::VacuumDecoy => "nu2",
        }
    }
}

/// Instantaneous misalignment of the link as seen by the photons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftState {
    /// Interferometer path mismatch between encoder and decoder (rad).
    pub phase_error: f64,
    /// Rotation sending light into non-interfering paths (rad).
    pub polarization_angle: f64,
    /// Photon arrival relative to gate center (ps).
    pub timing_offset: f64,
    /// Multiplier on emitted flux.
    pub power_factor: f64,
}

impl Default for DriftState {
    fn default() -> Self {
        Self {
            phase_error: 0.0,
            polarization_angle: 0.0,
            timing_offset: 0.0,
            power_factor: 1.0,
        }
    }
}

/// Per-class gain Q and QBER E.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRates {
    pub gain: [f64; 3],
    pub qber: [f64; 3],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassTally {
    pub sent: u64,
    pub sifted: u64,
    pub errors: u64,
}

impl ClassTally {
    pub fn qber(&self) -> Option<f64> {
        (self.sifted > 0).then(|| self.errors as f64 / self.sifted as f64)
    }

    /// Detections per sent pulse, undoing the 1/2 sifting factor.
    pub fn transmittance(&self) -> Option<f64> {
        (self.sent > 0).then(|| 2.0 * self.sifted as f64 / self.sent as f64)
    }
}

impl Add for ClassTally {
    type Output = ClassTally;
    fn add(self, o: ClassTally) -> ClassTally {
        ClassTally {
            sent: self.sent + o.sent,
            sifted: self.sifted + o.sifted,
            errors: self.errors + o.errors,
        }
    }
}

/// Counts for one time step or window, indexed by [`PulseClass`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PulseTally {
    pub classes: [ClassTally; 3],
}

impl PulseTally {
    pub fn class(&self, c: PulseClass) -> &ClassTally {
        &self.classes[c.index()]
    }

    pub fn signal(&self) -> &ClassTally {
        self.class(PulseClass::Signal)
    }

    pub fn total_sifted(&self) -> u64 {
        self.classes.iter().map(|c| c.sifted).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.classes.iter().all(|c| c.errors <= c.sifted && c.sifted <= c.sent)
    }
}

impl AddAssign for PulseTally {
    fn add_assign(&mut self, o: PulseTally) {
        for (a, b) in self.classes.iter_mut().zip(o.classes) {
            *a = *a + b;
        }
    }
}

/// Fiber transmittance 10^(-alpha L / 10).
pub fn channel_transmittance(loss_coefficient: f64, fiber_length: f64) -> f64 {
    10f64.powf(-loss_coefficient * fiber_length / 10.0)
}

/// (detection-efficiency factor, phase error probability) produced by a drift state.
pub fn drift_penalties(drift: &DriftState, link: &LinkConfig) -> (f64, f64) {
    let pol = drift.polarization_angle.cos().powi(2);
    let t = drift.timing_offset / link.gate_sigma;
    let eta_factor = (pol * (-0.5 * t * t).exp()).clamp(0.0, 1.0);
    let phase = (0.5 * (1.0 - drift.phase_error.cos())).clamp(0.0, 1.0);
    (eta_factor, phase)
}

/// Signal-photon part of the gain: (1 - Y0)(1 - e^{-mu eta}).
fn signal_part(mean_photons: f64, eta_total: f64, background_yield: f64) -> f64 {
    -(1.0 - background_yield) * (-mean_photons * eta_total).exp_m1()
}

/// Gain of a Poissonian source through a threshold detector.
pub fn expected_gain(mean_photons: f64, eta_total: f64, background_yield: f64) -> f64 {
    background_yield + signal_part(mean_photons, eta_total, background_yield)
}

/// Error probability given a detection; background clicks are random.
pub fn expected_qber(mean_photons: f64, eta_total: f64, background_yield: f64, misalignment_prob: f64) -> f64 {
    let e_mis = misalignment_prob.clamp(0.0, 0.5);
    let q = expected_gain(mean_photons, eta_total, background_yield);
    if q <= 0.0 {
        return 0.5;
    }
    (0.5 * background_yield + e_mis * signal_part(mean_photons, eta_total, background_yield)) / q
}

/// Per-class gain and QBER for the given (effective) drift.
pub fn class_rates(drift: &DriftState, source: &SourceConfig, link: &LinkConfig) -> ClassRates {
    let (eta_factor, phase_prob) = drift_penalties(drift, link);
    let eta_total = channel_transmittance(link.loss_coefficient, link.fiber_length)
        * link.detector_efficiency
        * eta_factor;
    let y0 = link.background_yield();
    let e_mis = (link.intrinsic_misalignment_error + phase_prob).min(0.5);
    let mut rates = ClassRates {
        gain: [0.0; 3],
        qber: [0.0; 3],
    };
    for (i, intensity) in source.intensities().into_iter().enumerate() {
        let m = intensity * drift.power_factor;
        rates.gain[i] = expected_gain(m, eta_total, y0);
        rates.qber[i] = expected_qber(m, eta_total, y0, e_mis);
    }
    rates
}

/// Expected (unsampled) counts for `n_pulses`, rounded to integers.
pub fn expectation_tally(rates: &ClassRates, source: &SourceConfig, n_pulses: f64) -> PulseTally {
    let mut tally = PulseTally::default();
    for (i, p) in source.probabilities().into_iter().enumerate() {
        let sent = (n_pulses * p).round();
        let sifted = (sent * rates.gain[i] / 2.0).round();
        let errors = (sifted * rates.qber[i]).round();
        tally.classes[i] = ClassTally {
            sent: sent as u64,
            sifted: sifted as u64,
            errors: errors as u64,
        };
    }
    tally
}

/// Intrinsic misalignment that makes the zero-drift signal QBER equal `target`.
///
/// Returns `None` when the target lies outside what the link can produce.
pub fn calibrate_misalignment(source: &SourceConfig, link: &LinkConfig, target_qber: f64) -> Option<f64> {
    let eta = channel_transmittance(link.loss_coefficient, link.fiber_length) * link.detector_efficiency;
    let y0 = link.background_yield();
    let f = |e: f64| expected_qber(source.mu, eta, y0, e) - target_qber;
    let (mut lo, mut hi) = (0.0, 0.5);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Splits the clock into per-class pulse counts, carrying fractional
/// remainders between steps so long runs send exactly `rate * p * t` pulses.
#[derive(Debug, Clone)]
pub struct TallySampler {
    probabilities: [f64; 3],
    clock_rate: f64,
    remainder: [f64; 3],
}

impl TallySampler {
    pub fn new(source: &SourceConfig) -> Self {
        Self {
            probabilities: source.probabilities(),
            clock_rate: source.clock_rate,
            remainder: [0.0; 3],
        }
    }

    fn sent_counts(&mut self, step: f64) -> [u64; 3] {
        let mut sent = [0u64; 3];
        for i in 0..3 {
            let exact = self.clock_rate * step * self.probabilities[i] + self.remainder[i];
            let whole = exact.round().max(0.0);
            self.remainder[i] = exact - whole;
            sent[i] = whole as u64;
        }
        sent
    }

    /// Samples sifted detections and errors for one step.
    pub fn sample<R: Rng + ?Sized>(&mut self, rates: &ClassRates, step: f64, rng: &mut R) -> PulseTally {
        let sent = self.sent_counts(step);
        sample_tally(rates, sent, rng)
    }
}

/// Sifted ~ Bin(sent, Q/2), errors ~ Bin(sifted, E), per class.
pub fn sample_tally<R: Rng + ?Sized>(rates: &ClassRates, sent: [u64; 3], rng: &mut R) -> PulseTally {
    let mut tally = PulseTally::default();
    for i in 0..3 {
        let sifted = binomial(sent[i], rates.gain[i] / 2.0, rng);
        let errors = binomial(sifted, rates.qber[i], rng);
        tally.classes[i] = ClassTally {
            sent: sent[i],
            sifted,
            errors,
        };
    }
    tally
}
