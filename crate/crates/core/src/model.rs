//! Closed-form triplet-rate and amplification model for a cascade whose
//! second stage sits inside a switchable delay loop.
//!
//! All series are summed with exact geometric closed forms. The amplification
//! factor compares the triplet rate with the loop active against the
//! single-pass rate `R1 * P_SPDC`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("geometric series diverges: ratio {ratio} >= 1")]
    Divergent { ratio: f64 },
    #[error("beta grid is empty")]
    EmptyGrid,
    #[error("beta grid must be strictly increasing within [0, 1): offending value {0}")]
    BadGrid(f64),
}

pub type ModelResult<T> = Result<T, ModelError>;

/// How the number of dead-time-protected loop passes is computed.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassRule {
    /// `floor(t_dead / t_loop)`: passes completed before the herald detector
    /// can fire again.
    #[default]
    DeadOverLoop,
    /// `floor(t_loop / t_dead)`, the literal printed ratio. Kept for
    /// comparison; with the usual 45 ns / 23 ns it yields 0.
    LoopOverDead,
}

/// The scalars of the analytic model.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Switch (Pockels cell) efficiency.
    pub eta_switch: f64,
    /// Single full-loop transmission.
    pub beta_loop: f64,
    /// Per-pass down-conversion probability in the second crystal.
    pub p_spdc: f64,
    /// Detected herald rate in counts per second.
    pub r1: f64,
    /// Loop transit time in seconds.
    pub t_loop: f64,
    /// Herald detector dead time in seconds.
    pub t_dead: f64,
    #[serde(default)]
    pub pass_rule: PassRule,
}

impl Default for ModelParams {
    /// Apparatus values used for the amplification-versus-beta family.
    fn default() -> Self {
        ModelParams {
            eta_switch: 0.94,
            beta_loop: 0.0,
            p_spdc: 1.5e-6,
            r1: 1e6,
            t_loop: 23e-9,
            t_dead: 45e-9,
            pass_rule: PassRule::DeadOverLoop,
        }
    }
}

fn check_probability(name: &'static str, value: f64) -> ModelResult<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ModelError::Domain {
            name,
            value,
            expected: "[0, 1]",
        })
    }
}

fn check_nonnegative(name: &'static str, value: f64) -> ModelResult<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Domain {
            name,
            value,
            expected: ">= 0",
        })
    }
}

impl ModelParams {
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta_loop = beta;
        self
    }

    pub fn with_r1(mut self, r1: f64) -> Self {
        self.r1 = r1;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta_switch = eta;
        self
    }

    /// Checks the domain of every field. Series convergence is checked
    /// separately by the operations that need it.
    pub fn validate(&self) -> ModelResult<()> {
        check_probability("eta_switch", self.eta_switch)?;
        check_probability("beta_loop", self.beta_loop)?;
        check_probability("p_spdc", self.p_spdc)?;
        check_nonnegative("r1", self.r1)?;
        check_nonnegative("t_dead", self.t_dead)?;
        if !(self.t_loop.is_finite() && self.t_loop > 0.0) {
            return Err(ModelError::Domain {
                name: "t_loop",
                value: self.t_loop,
                expected: "> 0",
            });
        }
        Ok(())
    }

    /// Per-pass survival ratio `beta * (1 - P_SPDC)`.
    pub fn pass_ratio(&self) -> f64 {
        self.beta_loop * (1.0 - self.p_spdc)
    }
}

/// Single-pass triplet production rate `R1 * P_SPDC`.
pub fn unamplified_rate(r1: f64, p_spdc: f64) -> ModelResult<f64> {
    check_nonnegative("r1", r1)?;
    check_probability("p_spdc", p_spdc)?;
    Ok(r1 * p_spdc)
}

/// Triplet rate contributed by conversions on the `k`-th pass (k = 0 is the
/// first crossing), ignoring ejection.
pub fn pass_contribution(k: u32, p: &ModelParams) -> ModelResult<f64> {
    p.validate()?;
    let ratio = p.pass_ratio();
    Ok(p.eta_switch * p.r1 * p.p_spdc * ratio.powi(k as i32))
}

/// Sum of `ratio^k` for k in `from..=to`, both inclusive.
fn geometric_segment(ratio: f64, from: u64, to: u64) -> f64 {
    if to < from {
        return 0.0;
    }
    let n = to - from + 1;
    if ratio == 1.0 {
        return n as f64;
    }
    if ratio == 0.0 {
        return if from == 0 { 1.0 } else { 0.0 };
    }
    let head = ratio.powf(from as f64);
    // -expm1(n ln r) is 1 - r^n without cancellation when r is close to 1
    head * (-(n as f64 * ratio.ln()).exp_m1()) / (1.0 - ratio)
}

/// Sum of `ratio^k` for k >= `from`.
fn geometric_tail(ratio: f64, from: u64) -> ModelResult<f64> {
    if ratio >= 1.0 {
        return Err(ModelError::Divergent { ratio });
    }
    if ratio == 0.0 {
        return Ok(if from == 0 { 1.0 } else { 0.0 });
    }
    Ok(ratio.powf(from as f64) / (1.0 - ratio))
}

/// Amplification without ejection: `eta / (1 - beta (1 - P_SPDC))`.
pub fn amplification_simple(p: &ModelParams) -> ModelResult<f64> {
    p.validate()?;
    Ok(p.eta_switch * geometric_tail(p.pass_ratio(), 0)?)
}

/// `eta * sum_{k < n_terms} [beta (1 - P)]^k`: the first `n_terms` passes of
/// the ejection-free series.
pub fn amplification_partial(p: &ModelParams, n_terms: u64) -> ModelResult<f64> {
    p.validate()?;
    if n_terms == 0 {
        return Ok(0.0);
    }
    Ok(p.eta_switch * geometric_segment(p.pass_ratio(), 0, n_terms - 1))
}

/// Probability that no herald arrives during one loop transit,
/// `exp(-R1 t_loop)`.
pub fn survival_probability(r1: f64, t_loop: f64) -> ModelResult<f64> {
    check_nonnegative("r1", r1)?;
    check_nonnegative("t_loop", t_loop)?;
    Ok((-r1 * t_loop).exp())
}

/// Number of loop passes shielded from ejection by the herald detector's
/// dead time.
pub fn protected_passes(p: &ModelParams) -> u64 {
    let ratio = match p.pass_rule {
        PassRule::DeadOverLoop => p.t_dead / p.t_loop,
        PassRule::LoopOverDead => {
            if p.t_dead == 0.0 {
                return 0;
            }
            p.t_loop / p.t_dead
        }
    };
    // nudge so that exact multiples survive representation error (46/23)
    (ratio * (1.0 + 4.0 * f64::EPSILON)).floor().max(0.0) as u64
}

/// Full amplification with dead-time-protected passes and Poisson ejection:
///
/// `A = eta sum_{k=0}^{j} r^k + eta sum_{k>j} (r s)^k`, with
/// `r = beta (1 - P_SPDC)`, `s = exp(-R1 t_loop)` and `j` protected passes.
///
/// The ejection factor is raised to the full power `k` in the tail.
pub fn amplification_full(p: &ModelParams) -> ModelResult<f64> {
    p.validate()?;
    let ratio = p.pass_ratio();
    let survival = survival_probability(p.r1, p.t_loop)?;
    let j = protected_passes(p);
    let protected = geometric_segment(ratio, 0, j);
    let tail = geometric_tail(ratio * survival, j + 1)?;
    Ok(p.eta_switch * (protected + tail))
}

/// One-sigma uncertainties used for the model band.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelUncertainty {
    pub eta_switch: f64,
    pub r1: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub a: f64,
    pub a_lo: f64,
    pub a_hi: f64,
}

/// Amplification evaluated over a grid of loop transmissions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationCurve {
    pub params: ModelParams,
    pub uncertainty: ModelUncertainty,
    pub points: Vec<CurvePoint>,
}

impl AmplificationCurve {
    pub fn betas(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.beta)
    }

    /// CSV with header `beta,a,a_lo,a_hi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,a,a_lo,a_hi\n");
        for pt in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_sig(pt.beta),
                fmt_sig(pt.a),
                fmt_sig(pt.a_lo),
                fmt_sig(pt.a_hi)
            ));
        }
        out
    }
}

/// Formats with 16 significant digits.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.15e}")
}

/// Validates a beta grid: non-empty, strictly increasing, inside [0, 1).
pub fn validate_grid(grid: &[f64]) -> ModelResult<()> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let mut prev = f64::NEG_INFINITY;
    for &b in grid {
        if !(0.0..1.0).contains(&b) || b <= prev {
            return Err(ModelError::BadGrid(b));
        }
        prev = b;
    }
    Ok(())
}

/// Evaluates [`amplification_full`] at each beta. The band is the min/max
/// over the centre and the four `(eta +- d_eta, R1 +- d_R1)` corners; the
/// `beta_loop` field of `params` is ignored.
pub fn amplification_curve(
    params: &ModelParams,
    uncertainty: ModelUncertainty,
    beta_grid: &[f64],
) -> ModelResult<AmplificationCurve> {
    validate_grid(beta_grid)?;
    let mut points = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        let centre = params.with_beta(beta);
        let a = amplification_full(&centre)?;
        let (mut lo, mut hi) = (a, a);
        for de in [-1.0, 1.0] {
            for dr in [-1.0, 1.0] {
                let eta = (params.eta_switch + de * uncertainty.eta_switch).clamp(0.0, 1.0);
                let r1 = (params.r1 + dr * uncertainty.r1).max(0.0);
                let corner = amplification_full(&centre.with_eta(eta).with_r1(r1))?;
                lo = lo.min(corner);
                hi = hi.max(corner);
            }
        }
        points.push(CurvePoint {
            beta,
            a,
            a_lo: lo,
            a_hi: hi,
        });
    }
    Ok(AmplificationCurve {
        params: *params,
        uncertainty,
        points,
    })
}

/// Absolute tolerance of the break-even bisection.
pub const BREAKEVEN_TOL: f64 = 1e-6;

/// Smallest loop transmission at which the loop pays for the switch loss,
/// i.e. the root of `A(beta) = 1`.
///
/// Returns `Some(0.0)` when the switch alone already breaks even
/// (`A(0) >= 1`, only possible for a perfect switch) and `None` when
/// `A(beta) < 1` on all of `[0, 1]`.
pub fn breakeven_beta(p: &ModelParams) -> ModelResult<Option<f64>> {
    p.validate()?;
    // a divergent series is an unbounded gain, so it counts as above 1
    let gain = |beta: f64| match amplification_full(&p.with_beta(beta)) {
        Ok(a) => Ok(a),
        Err(ModelError::Divergent { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    };
    if gain(0.0)? >= 1.0 {
        return Ok(Some(0.0));
    }
    if gain(1.0)? < 1.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > BREAKEVEN_TOL / 4.0 {
        let mid = 0.5 * (lo + hi);
        if gain(mid)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
