//! Finite-size key distillation for three-intensity decoy BB84.
//!
//! A window's tallies are turned into Clopper-Pearson intervals, the
//! intervals into worst-case single-photon bounds, and those into a key
//! length:
//!
//! ```text
//! l = N1 (1 - H2(e1)) - f n_mu H2(E_mu) - log2(2 / eps_pa)
//! ```
//!
//! with `N1 = n_mu mu e^-mu Y1 / Q_mu`, every estimate at its pessimistic
//! endpoint. Half of the failure budget goes to privacy amplification and
//! half is split evenly over the binomial intervals.

mod bounds;
mod decoy;

pub use bounds::{clopper_pearson, BinomialBound};
pub use decoy::{decoy_bounds, ChannelEstimates, DecoyBounds, BOUND_INVOCATIONS};

use crate::channel::{class_rates, expectation_tally, DriftState, PulseTally};
use crate::error::StatsError;
use crate::params::{LinkConfig, SecurityConfig, SourceConfig};

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(StatsError::OutOfRange(x));
    }
    Ok(h2(x))
}

pub(crate) fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// How the total failure probability is spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget {
    /// Per binomial interval.
    pub per_bound: f64,
    pub privacy_amplification: f64,
}

impl EpsilonBudget {
    pub fn split(epsilon: f64) -> Self {
        Self {
            per_bound: epsilon / 2.0 / BOUND_INVOCATIONS as f64,
            privacy_amplification: epsilon / 2.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.per_bound * BOUND_INVOCATIONS as f64 + self.privacy_amplification
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyResult {
    pub secure_bits: u64,
    /// Key length before clamping at zero and flooring.
    pub raw_bits: f64,
    /// N1 (1 - H2(e1)).
    pub single_photon_bits: f64,
    /// f n_mu H2(E_mu).
    pub leakage_bits: f64,
    /// log2(2 / eps_pa).
    pub privacy_amplification_bits: f64,
    /// Secure bits relative to the infinite-key length for the same pulses.
    pub efficiency: Option<f64>,
    pub epsilon_spent: f64,
}

impl KeyResult {
    pub fn with_reference(mut self, asymptotic_bits: f64) -> Self {
        self.efficiency = (asymptotic_bits > 0.0).then(|| self.secure_bits as f64 / asymptotic_bits);
        self
    }
}

/// Secure key length of one window.
pub fn secure_key_length(
    tally: &PulseTally,
    est: &ChannelEstimates,
    bounds: &DecoyBounds,
    security: &SecurityConfig,
    source: &SourceConfig,
) -> KeyResult {
    let budget = EpsilonBudget::split(security.epsilon);
    let pa = (2.0 / budget.privacy_amplification).log2();
    let n_sift = tally.signal().sifted as f64;
    let q_mu = est.gain[0].upper;

    let (single, leak) = if n_sift > 0.0 && q_mu > 0.0 {
        let mu = source.mu;
        let n1 = n_sift * mu * (-mu).exp() * bounds.y1_lower / q_mu;
        (
            n1 * (1.0 - h2(bounds.e1_upper)),
            security.ec_efficiency * n_sift * h2(est.signal_qber.upper),
        )
    } else {
        (0.0, 0.0)
    };
    let raw = single - leak - pa;
    KeyResult {
        secure_bits: if raw > 0.0 { raw.floor() as u64 } else { 0 },
        raw_bits: raw,
        single_photon_bits: single,
        leakage_bits: leak,
        privacy_amplification_bits: pa,
        efficiency: None,
        epsilon_spent: budget.total(),
    }
}

/// Everything derived from one window's tallies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distillation {
    pub estimates: ChannelEstimates,
    pub bounds: DecoyBounds,
    pub key: KeyResult,
}

pub fn distill(tally: &PulseTally, source: &SourceConfig, security: &SecurityConfig) -> Distillation {
    let budget = EpsilonBudget::split(security.epsilon);
    let estimates = ChannelEstimates::from_tally(tally, budget.per_bound);
    let bounds = decoy_bounds(&estimates, source);
    let key = secure_key_length(tally, &estimates, &bounds, security, source);
    Distillation { estimates, bounds, key }
}

/// Infinite-key secure bits per emitted pulse at zero drift.
///
/// Uses the same decoy estimator as the finite case, fed with exact gains,
/// so that finite key lengths converge to it as statistics grow.
pub fn asymptotic_rate(source: &SourceConfig, link: &LinkConfig, security: &SecurityConfig) -> f64 {
    let rates = class_rates(&DriftState::default(), source, link);
    let est = ChannelEstimates::exact(&rates);
    let b = decoy_bounds(&est, source);
    let mu = source.mu;
    let single = mu * (-mu).exp() * b.y1_lower * (1.0 - h2(b.e1_upper));
    let leak = security.ec_efficiency * rates.gain[0] * h2(rates.qber[0]);
    (0.5 * source.p_mu * (single - leak)).max(0.0)
}

/// Finite-size key length (unfloored, clamped at zero) for `n_pulses` at
/// expectation tallies and zero drift.
pub fn expected_key_bits(n_pulses: f64, source: &SourceConfig, link: &LinkConfig, security: &SecurityConfig) -> f64 {
    let rates = class_rates(&DriftState::default(), source, link);
    let tally = expectation_tally(&rates, source, n_pulses);
    distill(&tally, source, security).key.raw_bits.max(0.0)
}

/// Finite secure key over `n_pulses` divided by the infinite-key length.
pub fn key_efficiency(n_pulses: f64, source: &SourceConfig, link: &LinkConfig, security: &SecurityConfig) -> f64 {
    let asym = asymptotic_rate(source, link, security) * n_pulses;
    if asym <= 0.0 {
        return 0.0;
    }
    let rates = class_rates(&DriftState::default(), source, link);
    let tally = expectation_tally(&rates, source, n_pulses);
    distill(&tally, source, security).key.secure_bits as f64 / asym
}

/// `points` log-spaced (n_pulses, efficiency) pairs from `from` to `to`.
pub fn efficiency_curve(
    from: f64,
    to: f64,
    points: usize,
    source: &SourceConfig,
    link: &LinkConfig,
    security: &SecurityConfig,
) -> Vec<(f64, f64)> {
    let (a, b) = (from.log10(), to.log10());
    (0..points)
        .map(|i| {
            let t = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
            let n = 10f64.powf(a + t * (b - a)).round();
            (n, key_efficiency(n, source, link, security))
        })
        .collect()
}
