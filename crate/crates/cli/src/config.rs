//! Flat `key = value` run configuration.
//!
//! Keys match the fields of `SimConfig`, plus the model-only keys `r1`,
//! `t_dead`, `pass_rule`, the band uncertainties and the analysis settings.
//! Durations take a unit suffix (`fs`, `ps`, `ns`, `us`, `ms`, `s`, `h`);
//! a bare number is seconds. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use loopcascade::analysis::{DEFAULT_HALFWIDTH_TICKS, DEFAULT_N_PEAKS};
use loopcascade::model::{ModelParams, ModelUncertainty, PassRule};
use loopcascade::sim::{SimConfig, SwitchMode};
use loopcascade::time::{Femtos, DEFAULT_WINDOW_TICKS};
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisSettings {
    pub window_ticks: u64,
    pub bin_width: u64,
    pub halfwidth_ticks: u64,
    pub n_peaks: usize,
    pub eta_pc_err: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            window_ticks: DEFAULT_WINDOW_TICKS,
            bin_width: 1,
            halfwidth_ticks: DEFAULT_HALFWIDTH_TICKS,
            n_peaks: DEFAULT_N_PEAKS,
            eta_pc_err: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub sim: SimConfig,
    /// Herald rate for the model; defaults to `pair_rate * eta_herald`.
    pub r1: Option<f64>,
    /// Dead time for the model; defaults to `d1_dead_time`.
    pub t_dead: Option<Femtos>,
    pub pass_rule: PassRule,
    pub eta_switch_err: f64,
    pub r1_err: f64,
    pub analysis: AnalysisSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sim: SimConfig::default(),
            r1: None,
            t_dead: None,
            pass_rule: PassRule::default(),
            eta_switch_err: 0.03,
            r1_err: 0.03e6,
            analysis: AnalysisSettings::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "pair_rate",
    "eta_herald",
    "d1_dead_time",
    "eta_switch",
    "switch_mode",
    "holdoff",
    "beta_loop",
    "p_spdc",
    "t_loop",
    "delay_0",
    "eta_1550",
    "d23_dead_time",
    "jitter",
    "tick",
    "max_passes",
    "duration",
    "seed",
    "r1",
    "t_dead",
    "pass_rule",
    "eta_switch_err",
    "r1_err",
    "window_ticks",
    "bin_width",
    "halfwidth_ticks",
    "n_peaks",
    "eta_pc_err",
];

fn invalid(key: &str, value: &str, why: &str) -> CliError {
    CliError::Validation(format!("{key} = {value:?}: {why}"))
}

fn float(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v.parse().map_err(|_| invalid(key, v, "expected a number"))?;
    if !x.is_finite() {
        return Err(invalid(key, v, "must be finite"));
    }
    Ok(x)
}

fn integer<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| invalid(key, v, "expected a non-negative integer"))
}

/// Parses `45ns`, `156.25 ps`, `0.5` (seconds) and so on into femtoseconds.
pub fn parse_duration(key: &str, v: &str) -> Result<Femtos, CliError> {
    let v = v.trim();
    let split = v
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(v.len());
    let (num, unit) = (v[..split].trim(), v[split..].trim());
    let scale = match unit {
        "fs" => 1.0,
        "ps" => 1e3,
        "ns" => 1e6,
        "us" => 1e9,
        "ms" => 1e12,
        "" | "s" => 1e15,
        "h" => 3600e15,
        _ => return Err(invalid(key, v, "unknown duration unit")),
    };
    let x = float(key, num)? * scale;
    if x < 0.0 || x >= u64::MAX as f64 {
        return Err(invalid(key, v, "duration out of range"));
    }
    Ok(Femtos(x.round() as u64))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let s = &mut self.sim;
        match key {
            "pair_rate" => s.pair_rate = float(key, v)?,
            "eta_herald" => s.eta_herald = float(key, v)?,
            "d1_dead_time" => s.d1_dead_time = parse_duration(key, v)?,
            "eta_switch" => s.eta_switch = float(key, v)?,
            "switch_mode" => {
                s.switch_mode = match v {
                    "lumped" => SwitchMode::Lumped,
                    "holdoff" => SwitchMode::Holdoff,
                    _ => return Err(invalid(key, v, "expected lumped or holdoff")),
                }
            }
            "holdoff" => s.holdoff = parse_duration(key, v)?,
            "beta_loop" => s.beta_loop = float(key, v)?,
            "p_spdc" => s.p_spdc = float(key, v)?,
            "t_loop" => s.t_loop = parse_duration(key, v)?,
            "delay_0" => s.delay_0 = parse_duration(key, v)?,
            "eta_1550" => s.eta_1550 = float(key, v)?,
            "d23_dead_time" => s.d23_dead_time = parse_duration(key, v)?,
            "jitter" => s.jitter = parse_duration(key, v)?,
            "tick" => s.tick = parse_duration(key, v)?,
            "max_passes" => s.max_passes = integer(key, v)?,
            "duration" => s.duration = parse_duration(key, v)?,
            "seed" => s.seed = integer(key, v)?,
            "r1" => self.r1 = Some(float(key, v)?),
            "t_dead" => self.t_dead = Some(parse_duration(key, v)?),
            "pass_rule" => {
                self.pass_rule = match v {
                    "dead_over_loop" => PassRule::DeadOverLoop,
                    "loop_over_dead" => PassRule::LoopOverDead,
                    _ => return Err(invalid(key, v, "expected dead_over_loop or loop_over_dead")),
                }
            }
            "eta_switch_err" => self.eta_switch_err = float(key, v)?,
            "r1_err" => self.r1_err = float(key, v)?,
            "window_ticks" => self.analysis.window_ticks = integer(key, v)?,
            "bin_width" => self.analysis.bin_width = integer(key, v)?,
            "halfwidth_ticks" => self.analysis.halfwidth_ticks = integer(key, v)?,
            "n_peaks" => self.analysis.n_peaks = integer(key, v)?,
            "eta_pc_err" => self.analysis.eta_pc_err = float(key, v)?,
            _ => return Err(CliError::Validation(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Validation(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| CliError::Validation(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn model_params(&self) -> ModelParams {
        let s = &self.sim;
        ModelParams {
            eta_switch: s.eta_switch,
            beta_loop: s.beta_loop,
            p_spdc: s.p_spdc,
            r1: self.r1.unwrap_or(s.pair_rate * s.eta_herald),
            t_loop: s.t_loop.as_seconds(),
            t_dead: self.t_dead.unwrap_or(s.d1_dead_time).as_seconds(),
            pass_rule: self.pass_rule,
        }
    }

    pub fn uncertainty(&self) -> ModelUncertainty {
        ModelUncertainty {
            eta_switch: self.eta_switch_err,
            r1: self.r1_err,
        }
    }

    pub fn validate_sim(&self) -> Result<(), CliError> {
        self.sim.validate().map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Every key with its exact value; parses back to an identical config.
    pub fn snapshot(&self) -> String {
        let s = &self.sim;
        let fs = |d: Femtos| format!("{}fs", d.0);
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("pair_rate", s.pair_rate.to_string());
        put("eta_herald", s.eta_herald.to_string());
        put("d1_dead_time", fs(s.d1_dead_time));
        put("eta_switch", s.eta_switch.to_string());
        put(
            "switch_mode",
            match s.switch_mode {
                SwitchMode::Lumped => "lumped".into(),
                SwitchMode::Holdoff => "holdoff".into(),
            },
        );
        put("holdoff", fs(s.holdoff));
        put("beta_loop", s.beta_loop.to_string());
        put("p_spdc", s.p_spdc.to_string());
        put("t_loop", fs(s.t_loop));
        put("delay_0", fs(s.delay_0));
        put("eta_1550", s.eta_1550.to_string());
        put("d23_dead_time", fs(s.d23_dead_time));
        put("jitter", fs(s.jitter));
        put("tick", fs(s.tick));
        put("max_passes", s.max_passes.to_string());
        put("duration", fs(s.duration));
        put("seed", s.seed.to_string());
        if let Some(r1) = self.r1 {
            put("r1", r1.to_string());
        }
        if let Some(t) = self.t_dead {
            put("t_dead", fs(t));
        }
        put(
            "pass_rule",
            match self.pass_rule {
                PassRule::DeadOverLoop => "dead_over_loop".into(),
                PassRule::LoopOverDead => "loop_over_dead".into(),
            },
        );
        put("eta_switch_err", self.eta_switch_err.to_string());
        put("r1_err", self.r1_err.to_string());
        let a = &self.analysis;
        put("window_ticks", a.window_ticks.to_string());
        put("bin_width", a.bin_width.to_string());
        put("halfwidth_ticks", a.halfwidth_ticks.to_string());
        put("n_peaks", a.n_peaks.to_string());
        put("eta_pc_err", a.eta_pc_err.to_string());
        out
    }
}
