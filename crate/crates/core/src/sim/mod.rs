//! Discrete-event Monte Carlo of the heralded loop source.
//!
//! Heralds form a Poisson process filtered by a non-paralyzable D1 dead
//! time. Each accepted herald triggers the switch, which ejects any photon
//! still in the loop, so episodes are independent given the herald times.

mod config;
mod episode;
mod heralds;
mod run;

pub use config::{ConfigError, SimConfig, SwitchMode};
pub use episode::{run_loop_episode, truth_csv, Outcome, TruthRecord, TRUTH_CSV_HEADER};
pub use heralds::{apply_dead_time, generate_heralds, DeadTime, Heralds};
pub use run::{simulate, simulate_into, Collect, SimSink, SimSummary};
