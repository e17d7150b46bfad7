//! Cascaded down-conversion amplified by a switchable delay loop.
//!
//! * [`model`]: closed-form amplification and rate model.
//! * [`fock`]: truncated Fock-space evolution of the cascade.
//! * [`sim`]: discrete-event Monte Carlo of the apparatus.
//! * [`tags`]: time-tag streams and triplet coincidence finding.
//! * [`analysis`]: delay histograms, peak extraction and amplification estimates.

pub mod analysis;
pub mod fock;
pub mod model;
pub mod sim;
pub mod tags;
pub mod time;

pub use model::{
    amplification_curve, amplification_full, amplification_simple, breakeven_beta, AmplificationCurve,
    ModelError, ModelParams, ModelUncertainty, PassRule,
};
pub use time::{Femtos, DEFAULT_WINDOW_TICKS, TICK_FS};
pub use sim::{simulate, simulate_into, SimConfig, TruthRecord};
