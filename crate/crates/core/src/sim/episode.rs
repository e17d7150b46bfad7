use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{SimConfig, SwitchMode};
use crate::time::Femtos;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Outcome {
    /// Down-converted on pass `k` (pass 0 precedes the first loop transit).
    Converted { k: u32 },
    LostInLoop,
    /// Still circulating when the switch fired for the herald at `by`.
    Ejected { by: Femtos },
    SwitchFailed,
    CapReached,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Converted { .. } => "converted",
            Outcome::LostInLoop => "lost_in_loop",
            Outcome::Ejected { .. } => "ejected",
            Outcome::SwitchFailed => "switch_failed",
            Outcome::CapReached => "cap_reached",
        }
    }

    pub fn converted_pass(&self) -> Option<u32> {
        match *self {
            Outcome::Converted { k } => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ground truth for one accepted herald.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub herald_time: Femtos,
    pub captured: bool,
    /// Index of the last pass through the second crystal, equal to the
    /// number of completed loop transits.
    pub passes: u32,
    pub outcome: Outcome,
    /// Both telecom photons were detected, on different detectors (before
    /// D2/D3 dead time). Not part of the CSV log.
    #[serde(skip)]
    pub split_pair: bool,
}

impl TruthRecord {
    fn new(herald_time: Femtos, captured: bool, passes: u32, outcome: Outcome) -> Self {
        TruthRecord {
            herald_time,
            captured,
            passes,
            outcome,
            split_pair: false,
        }
    }

    /// Record for a herald the switch driver ignored.
    pub fn ignored(herald_time: Femtos) -> Self {
        TruthRecord::new(herald_time, false, 0, Outcome::SwitchFailed)
    }

    pub fn csv_row(&self) -> String {
        let k = self.outcome.converted_pass().map(|k| k.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.herald_time.0, self.captured, self.passes, self.outcome, k
        )
    }
}

pub const TRUTH_CSV_HEADER: &str = "herald_time_fs,captured,passes,outcome,k";

pub fn truth_csv(records: &[TruthRecord]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(TRUTH_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Follows one heralded photon through the switch and the loop.
///
/// Pass `k` reaches the second crystal at `herald + delay_0 + k * t_loop`.
/// The switch fires for `next` at `next + delay_0`, so pass `k` happens iff
/// `k * t_loop < next - herald`. In [`SwitchMode::Holdoff`] the caller
/// decides whether the driver fired and the capture itself always succeeds.
pub fn run_loop_episode<R: Rng>(
    herald: Femtos,
    next: Option<Femtos>,
    cfg: &SimConfig,
    rng: &mut R,
) -> TruthRecord {
    if cfg.switch_mode == SwitchMode::Lumped && !rng.random_bool(cfg.eta_switch) {
        return TruthRecord::new(herald, false, 0, Outcome::SwitchFailed);
    }
    let window = next.map(|n| n.0.saturating_sub(herald.0));
    let t_loop = cfg.t_loop.0 as u128;
    let mut k = 0u32;
    while k < cfg.max_passes {
        if rng.random_bool(cfg.p_spdc) {
            return TruthRecord::new(herald, true, k, Outcome::Converted { k });
        }
        if let (Some(w), Some(by)) = (window, next) {
            if (k as u128 + 1) * t_loop >= w as u128 {
                return TruthRecord::new(herald, true, k, Outcome::Ejected { by });
            }
        }
        if !rng.random_bool(cfg.beta_loop) {
            return TruthRecord::new(herald, true, k, Outcome::LostInLoop);
        }
        k += 1;
    }
    TruthRecord::new(herald, true, k, Outcome::CapReached)
}
