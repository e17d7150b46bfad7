//! Shared inputs for the benchmarks.

use loopcascade::sim::Collect;
use loopcascade::tags::TimeTag;
use loopcascade::{simulate_into, Femtos, SimConfig};

/// A busy configuration: high conversion probability, lossless detection.
pub fn busy_config(duration_ms: u64) -> SimConfig {
    SimConfig {
        beta_loop: 0.5,
        p_spdc: 0.02,
        eta_1550: 0.5,
        duration: Femtos(duration_ms * 1_000_000_000_000),
        seed: 1,
        ..SimConfig::default()
    }
}

pub fn simulated_tags(duration_ms: u64) -> Vec<TimeTag> {
    let mut sink = Collect::default();
    simulate_into(&busy_config(duration_ms), &mut sink).expect("valid config");
    sink.tags
}
