//! Environmental drift and the four feedback loops that cancel it.
//!
//! Hidden drift lives in a [`DriftState`]; actuators subtract from it to give
//! the effective state the photons see ([`effective_drift`]). The loops are
//! dither climbers driven only by observable quantities: per-interval signal
//! QBER for the fiber stretcher, detection counts for the polarization
//! controller and the gate delay, and Alice's power monitor for the
//! attenuator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::DriftState;
use crate::params::{ControlConfig, LinkConfig};

/// Advances the hidden drift by `dt` seconds.
pub fn step_drift<R: Rng + ?Sized>(drift: &DriftState, link: &LinkConfig, dt: f64, rng: &mut R) -> DriftState {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let phase = normal() * (link.phase_diffusion * dt).sqrt();
    let pol = normal() * (link.polarization_diffusion * dt).sqrt();
    let timing = normal() * (link.timing_diffusion * dt).sqrt();
    let power = normal() * (link.laser_power_diffusion * dt).sqrt();
    DriftState {
        phase_error: drift.phase_error + phase,
        polarization_angle: drift.polarization_angle + pol,
        timing_offset: drift.timing_offset + link.timing_drift_rate * dt + timing,
        power_factor: drift.power_factor * power.exp(),
    }
}

/// Single-actuator dither climber: keep stepping while the reading
/// improves, reverse when it gets worse.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherLoop {
    pub setting: f64,
    pub step: f64,
    direction: f64,
    last_reading: Option<f64>,
    maximize: bool,
}

impl DitherLoop {
    pub fn new(step: f64, maximize: bool) -> Self {
        Self {
            setting: 0.0,
            step,
            direction: 1.0,
            last_reading: None,
            maximize,
        }
    }

    pub fn direction(&self) -> f64 {
        self.direction
    }

    pub fn update(&mut self, reading: f64) {
        if let Some(prev) = self.last_reading {
            let worse = if self.maximize { reading < prev } else { reading > prev };
            if worse {
                self.direction = -self.direction;
            }
        }
        self.setting += self.direction * self.step;
        self.last_reading = Some(reading);
    }
}

/// Four-channel polarization controller, climbed one channel per update.
///
/// Channel 1 rotates about the same axis as the fiber drift and cancels it
/// directly; channels 2-4 apply rotations about other axes. The net
/// misalignment is the angle of the composed rotation's output from the
/// reference state, see [`EpcLoop::residual_angle`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpcLoop {
    pub settings: [f64; 4],
    pub step: f64,
    directions: [f64; 4],
    next_channel: usize,
    last_moved: Option<usize>,
    last_reading: Option<f64>,
}

impl EpcLoop {
    pub fn new(step: f64) -> Self {
        Self {
            settings: [0.0; 4],
            step,
            directions: [1.0; 4],
            next_channel: 0,
            last_moved: None,
            last_reading: None,
        }
    }

    pub fn update(&mut self, count_rate: f64) {
        if !(count_rate > 0.0) {
            return;
        }
        if let (Some(prev), Some(ch)) = (self.last_reading, self.last_moved) {
            if count_rate < prev {
                self.directions[ch] = -self.directions[ch];
            }
        }
        let ch = self.next_channel;
        self.settings[ch] += self.directions[ch] * self.step;
        self.last_moved = Some(ch);
        self.last_reading = Some(count_rate);
        self.next_channel = (ch + 1) % 4;
    }

    /// Net polarization misalignment after the fiber rotation by
    /// `fiber_angle` and the four controller rotations.
    pub fn residual_angle(&self, fiber_angle: f64) -> f64 {
        let [c1, c2, c3, c4] = self.settings;
        // Poincare-sphere vector; overlap with the reference is (1 + z) / 2 = cos^2(angle)
        let v = [0.0, 0.0, 1.0];
        let v = rot_x(v, 2.0 * (fiber_angle - c1));
        let v = rot_y(v, 2.0 * c2);
        let v = rot_z(v, 2.0 * c3);
        let v = rot_y(v, 2.0 * c4);
        0.5 * v[2].clamp(-1.0, 1.0).acos()
    }
}

fn rot_x([x, y, z]: [f64; 3], a: f64) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [x, y * c - z * s, y * s + z * c]
}

fn rot_y([x, y, z]: [f64; 3], a: f64) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [x * c + z * s, y, -x * s + z * c]
}

fn rot_z([x, y, z]: [f64; 3], a: f64) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [x * c - y * s, x * s + y * c, z]
}

/// Actuator settings and loop memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Fiber stretcher, in radians of phase.
    pub stretcher: DitherLoop,
    pub epc: EpcLoop,
    /// Gate delay in ps.
    pub gate: DitherLoop,
    pub attenuator_db: f64,
    pub intensity_gain: f64,
    /// Last values fed to each loop.
    pub last_qber: Option<f64>,
    pub last_count_rate: Option<f64>,
    pub last_flux: Option<f64>,
}

impl ControllerState {
    pub fn new(control: &ControlConfig) -> Self {
        Self {
            stretcher: DitherLoop::new(control.stretcher_step, false),
            epc: EpcLoop::new(control.epc_step),
            gate: DitherLoop::new(control.gate_step, true),
            attenuator_db: 0.0,
            intensity_gain: control.intensity_gain,
            last_qber: None,
            last_count_rate: None,
            last_flux: None,
        }
    }

    /// Minimizes QBER by moving the fiber stretcher one step.
    pub fn stretcher_feedback(&mut self, qber_estimate: f64) {
        self.last_qber = Some(qber_estimate);
        self.stretcher.update(qber_estimate);
    }

    /// Maximizes the count rate by moving one polarization channel one step.
    /// A zero rate carries no gradient and leaves the settings alone.
    pub fn polarization_feedback(&mut self, count_rate: f64) {
        self.last_count_rate = Some(count_rate);
        self.epc.update(count_rate);
    }

    /// Maximizes the count rate by moving the gate delay one step.
    pub fn gate_delay_feedback(&mut self, count_rate: f64) {
        self.last_count_rate = Some(count_rate);
        if count_rate > 0.0 {
            self.gate.update(count_rate);
        }
    }

    /// Proportional attenuator correction toward `target_flux`.
    pub fn intensity_feedback(&mut self, measured_flux: f64, target_flux: f64) {
        self.last_flux = Some(measured_flux);
        if measured_flux > 0.0 && target_flux > 0.0 {
            self.attenuator_db += self.intensity_gain * 10.0 * (measured_flux / target_flux).log10();
        }
    }

    /// Multiplicative flux factor of the attenuator.
    pub fn attenuation(&self) -> f64 {
        10f64.powf(-self.attenuator_db / 10.0)
    }
}

/// The drift the photons experience once the actuators are applied.
pub fn effective_drift(hidden: &DriftState, ctrl: &ControllerState) -> DriftState {
    DriftState {
        phase_error: hidden.phase_error - ctrl.stretcher.setting,
        polarization_angle: ctrl.epc.residual_angle(hidden.polarization_angle),
        timing_offset: hidden.timing_offset - ctrl.gate.setting,
        power_factor: hidden.power_factor * ctrl.attenuation(),
    }
}

/// What the controllers may see after one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Sifted signal bits and their errors.
    pub signal_sifted: u64,
    pub signal_errors: u64,
    /// All sifted detections, every class.
    pub detections: u64,
    /// Alice's power monitor (photons/s).
    pub monitor_flux: f64,
    /// Flux the monitor should read.
    pub target_flux: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Accumulator {
    steps: u64,
    sifted: u64,
    errors: u64,
    detections: u64,
}

/// Runs the loops on their cadences from a stream of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Stabilizer {
    pub state: ControllerState,
    dt: f64,
    stretcher_every: u64,
    polarization_every: u64,
    gate_every: u64,
    intensity_every: u64,
    stretcher_acc: Accumulator,
    polarization_acc: Accumulator,
    gate_acc: Accumulator,
    step: u64,
}

fn every(interval: f64, dt: f64) -> u64 {
    ((interval / dt).round() as u64).max(1)
}

impl Stabilizer {
    pub fn new(control: &ControlConfig, dt: f64) -> Self {
        Self {
            state: ControllerState::new(control),
            dt,
            stretcher_every: every(control.stretcher_interval, dt),
            polarization_every: every(control.polarization_interval, dt),
            gate_every: every(control.gate_interval, dt),
            intensity_every: every(control.intensity_interval, dt),
            stretcher_acc: Accumulator::default(),
            polarization_acc: Accumulator::default(),
            gate_acc: Accumulator::default(),
            step: 0,
        }
    }

    /// Feeds one step of observations and fires every loop that is due.
    ///
    /// The two count-rate loops are interleaved: the gate loop fires half an
    /// interval after the polarization loop so their dithers do not land on
    /// the same comparison.
    pub fn observe(&mut self, obs: &Observation) {
        self.step += 1;
        for acc in [&mut self.stretcher_acc, &mut self.polarization_acc, &mut self.gate_acc] {
            acc.steps += 1;
            acc.sifted += obs.signal_sifted;
            acc.errors += obs.signal_errors;
            acc.detections += obs.detections;
        }

        if self.step % self.stretcher_every == 0 {
            let acc = std::mem::take(&mut self.stretcher_acc);
            // absent feedback: hold the setting
            if acc.sifted > 0 {
                self.state.stretcher_feedback(acc.errors as f64 / acc.sifted as f64);
            }
        }
        if self.step % self.polarization_every == 0 {
            let acc = std::mem::take(&mut self.polarization_acc);
            let rate = acc.detections as f64 / (acc.steps as f64 * self.dt);
            self.state.polarization_feedback(rate);
        }
        if (self.step + self.gate_every / 2) % self.gate_every == 0 {
            let acc = std::mem::take(&mut self.gate_acc);
            let rate = acc.detections as f64 / (acc.steps as f64 * self.dt);
            self.state.gate_delay_feedback(rate);
        }
        if self.step % self.intensity_every == 0 {
            self.state.intensity_feedback(obs.monitor_flux, obs.target_flux);
        }
    }
}
