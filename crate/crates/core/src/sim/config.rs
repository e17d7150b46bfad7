use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{Femtos, TICK_FS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field} = {value} must be a probability in [0, 1]")]
    Probability { field: &'static str, value: f64 },
    #[error("{field} = {value} must be finite and >= 0")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} must be > 0")]
    Zero { field: &'static str },
    #[error("duration {0} fs leaves no headroom for loop passes in 64-bit femtoseconds")]
    TooLong(u64),
}

/// How the switch decides whether a herald captures its photon.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    /// Independent Bernoulli trial with probability `eta_switch`.
    #[default]
    Lumped,
    /// The driver ignores heralds within `holdoff` of the previous herald;
    /// every other trigger succeeds.
    Holdoff,
}

/// Physical parameters of one Monte Carlo run. Durations are integer
/// femtoseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Pair creation rate at the first crystal, pairs per second.
    pub pair_rate: f64,
    /// Detection probability of the herald photon at D1.
    pub eta_herald: f64,
    /// Non-paralyzable D1 dead time.
    pub d1_dead_time: Femtos,
    pub eta_switch: f64,
    pub switch_mode: SwitchMode,
    /// Driver holdoff used by [`SwitchMode::Holdoff`].
    pub holdoff: Femtos,
    pub beta_loop: f64,
    pub p_spdc: f64,
    pub t_loop: Femtos,
    /// Fixed delay from pair creation to the first pass through the second
    /// crystal.
    pub delay_0: Femtos,
    /// Combined coupling and detection efficiency of each telecom photon.
    pub eta_1550: f64,
    pub d23_dead_time: Femtos,
    /// Gaussian timing jitter (standard deviation) of the telecom
    /// detectors; zero disables it.
    pub jitter: Femtos,
    pub tick: Femtos,
    pub max_passes: u32,
    pub duration: Femtos,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            pair_rate: 1.52e6,
            eta_herald: 1.0,
            d1_dead_time: Femtos(45_000_000),
            eta_switch: 0.94,
            switch_mode: SwitchMode::Lumped,
            holdoff: Femtos(100_000_000),
            beta_loop: 0.18,
            p_spdc: 1e-6,
            t_loop: Femtos(23_000_000),
            delay_0: Femtos(10_000_000),
            eta_1550: 0.156,
            d23_dead_time: Femtos::ZERO,
            jitter: Femtos::ZERO,
            tick: Femtos(TICK_FS),
            max_passes: 10_000,
            duration: Femtos(1_000_000_000_000),
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Detected herald rate before dead time, `pair_rate * eta_herald`.
    pub fn herald_rate(&self) -> f64 {
        self.pair_rate * self.eta_herald
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("eta_herald", self.eta_herald),
            ("eta_switch", self.eta_switch),
            ("beta_loop", self.beta_loop),
            ("p_spdc", self.p_spdc),
            ("eta_1550", self.eta_1550),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Probability { field, value });
            }
        }
        if !(self.pair_rate.is_finite() && self.pair_rate >= 0.0) {
            return Err(ConfigError::Negative {
                field: "pair_rate",
                value: self.pair_rate,
            });
        }
        if self.t_loop == Femtos::ZERO {
            return Err(ConfigError::Zero { field: "t_loop" });
        }
        if self.tick == Femtos::ZERO {
            return Err(ConfigError::Zero { field: "tick" });
        }
        if self.max_passes == 0 {
            return Err(ConfigError::Zero { field: "max_passes" });
        }
        let reach = (self.max_passes as u128 + 1) * self.t_loop.0 as u128
            + self.delay_0.0 as u128
            + self.duration.0 as u128
            + 10 * self.jitter.0 as u128;
        if reach >= u64::MAX as u128 {
            return Err(ConfigError::TooLong(self.duration.0));
        }
        let occupancy = self.herald_rate() * self.t_loop.as_seconds();
        if occupancy >= 1.0 {
            log::warn!("R1 * t_loop = {occupancy:.3}: far outside the Poisson-ejection regime");
        }
        Ok(())
    }
}
