//! Simulation of a continuously stabilized, gigahertz-clocked decoy-state
//! BB84 link with finite-size key distillation.
//!
//! The crate is organized bottom-up:
//!
//! - [`params`]: configuration bundle, defaults and validation
//! - [`channel`]: per-class gains and error rates, sampled counts
//! - [`stabilization`]: drift processes and the feedback loops
//! - [`finite_key`]: Clopper-Pearson bounds, decoy estimation, key length
//! - [`session`]: the closed-loop time-domain simulation
//! - [`export`]: CSV output
//! - [`optimizer`]: source-parameter search

pub mod channel;
pub mod error;
pub mod export;
pub mod finite_key;
pub mod optimizer;
pub mod params;
pub mod sampling;
pub mod session;
pub mod special;
pub mod stabilization;

pub use channel::{ClassRates, ClassTally, DriftState, PulseClass, PulseTally};
pub use error::{ConfigError, ExportError, OptimizeError, StatsError};
pub use params::{Config, ControlConfig, LinkConfig, SecurityConfig, SimConfig, SourceConfig};
pub use session::{run_session, SecureKeyRecord, SessionOutput, SessionSummary, TelemetryRow};
