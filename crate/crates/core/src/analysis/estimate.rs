use serde::{Deserialize, Serialize};

use super::{AnalysisError, PeakCounts};
use crate::model::AmplificationCurve;

/// A value with a one-sigma error.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

impl Measured {
    pub fn new(value: f64, err: f64) -> Self {
        Measured { value, err }
    }

    pub fn exact(value: f64) -> Self {
        Measured { value, err: 0.0 }
    }
}

/// `eta * (1 + (P2 + P3 + P4) / P1)` with Poisson errors on the peaks and
/// the error on `eta` propagated to first order.
pub fn estimate_amplification(peaks: &PeakCounts, eta: Measured) -> Result<Measured, AnalysisError> {
    if peaks.peaks.len() < 4 {
        return Err(AnalysisError::TooFewPeaks {
            needed: 4,
            found: peaks.peaks.len(),
        });
    }
    amplification_from_counts(&peaks.counts()[..4], eta)
}

/// Same estimator summed over every extracted peak after the first.
pub fn estimate_amplification_all(peaks: &PeakCounts, eta: Measured) -> Result<Measured, AnalysisError> {
    amplification_from_counts(&peaks.counts(), eta)
}

pub fn amplification_from_counts(counts: &[u64], eta: Measured) -> Result<Measured, AnalysisError> {
    let p1 = counts.first().copied().unwrap_or(0) as f64;
    if p1 == 0.0 {
        return Err(AnalysisError::ZeroFirstPeak);
    }
    let s: f64 = counts[1..].iter().map(|&c| c as f64).sum();
    let ratio = s / p1;
    // d/dP1 = -eta S / P1^2, d/dPi = eta / P1, var(P) = P
    let var_counts = eta.value.powi(2) * (s * s / p1.powi(3) + s / (p1 * p1));
    let var_eta = ((1.0 + ratio) * eta.err).powi(2);
    Ok(Measured {
        value: eta.value * (1.0 + ratio),
        err: (var_counts + var_eta).sqrt(),
    })
}

/// Triplets per hour with the Poisson error.
pub fn triplet_rate(count: u64, duration_s: f64) -> Result<Measured, AnalysisError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(AnalysisError::BadDuration(duration_s));
    }
    let hours = duration_s / 3600.0;
    Ok(Measured {
        value: count as f64 / hours,
        err: (count as f64).sqrt() / hours,
    })
}

/// One measured amplification at a loop efficiency.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredPoint {
    pub beta: f64,
    pub a: Measured,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub beta: f64,
    pub a_exp: f64,
    pub a_err: f64,
    pub a_model: f64,
    pub a_model_lo: f64,
    pub a_model_hi: f64,
    pub residual_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Betas whose residual exceeds [`FLAG_SIGMA`].
    pub flagged: Vec<f64>,
}

pub const FLAG_SIGMA: f64 = 3.0;

impl ComparisonReport {
    /// Mean of `a_exp / a_model - 1`.
    pub fn mean_relative_offset(&self) -> f64 {
        let n = self.rows.len().max(1) as f64;
        self.rows.iter().map(|r| r.a_exp / r.a_model - 1.0).sum::<f64>() / n
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

/// Residuals of measured points against a model curve evaluated on the
/// same beta grid. The combined sigma adds the measurement error and the
/// half-width of the model band in quadrature.
pub fn compare_to_model(points: &[MeasuredPoint], curve: &AmplificationCurve) -> Result<ComparisonReport, AnalysisError> {
    if points.len() != curve.points.len() {
        return Err(AnalysisError::GridLength {
            measured: points.len(),
            model: curve.points.len(),
        });
    }
    let mut rows = Vec::with_capacity(points.len());
    let mut flagged = Vec::new();
    for (i, (m, c)) in points.iter().zip(&curve.points).enumerate() {
        if (m.beta - c.beta).abs() > 1e-12 {
            return Err(AnalysisError::GridMismatch {
                index: i,
                measured: m.beta,
                model: c.beta,
            });
        }
        let half_band = (c.a_hi - c.a_lo) / 2.0;
        let sigma = m.a.err.hypot(half_band);
        let diff = m.a.value - c.a;
        let residual_sigma = if diff == 0.0 {
            0.0
        } else if sigma > 0.0 {
            diff / sigma
        } else {
            diff.signum() * f64::INFINITY
        };
        if residual_sigma.abs() > FLAG_SIGMA {
            flagged.push(m.beta);
        }
        rows.push(ComparisonRow {
            beta: m.beta,
            a_exp: m.a.value,
            a_err: m.a.err,
            a_model: c.a,
            a_model_lo: c.a_lo,
            a_model_hi: c.a_hi,
            residual_sigma,
        });
    }
    Ok(ComparisonReport { rows, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Peak;
    use crate::model::{amplification_curve, ModelParams, ModelUncertainty};

    fn peaks(counts: &[u64]) -> PeakCounts {
        PeakCounts {
            peaks: counts
                .iter()
                .map(|&c| Peak {
                    center: 0,
                    halfwidth: 12,
                    count: c,
                    err: (c as f64).sqrt(),
                    centroid: None,
                })
                .collect(),
            band_total: counts.iter().sum(),
            off_peak: 0,
            off_peak_width: 0,
            background_per_window: 0.0,
            off_band: 0,
        }
    }

    #[test]
    fn estimator_examples() {
        let a = estimate_amplification(&peaks(&[1000, 0, 0, 0]), Measured::exact(0.94)).unwrap();
        assert_eq!(a.value, 0.94);
        let a = estimate_amplification(&peaks(&[50, 50, 50, 50]), Measured::exact(1.0)).unwrap();
        assert_eq!(a.value, 4.0);
        assert_eq!(
            estimate_amplification(&peaks(&[0, 1, 1, 1]), Measured::exact(1.0)),
            Err(AnalysisError::ZeroFirstPeak)
        );
        assert!(matches!(
            estimate_amplification(&peaks(&[5, 1]), Measured::exact(1.0)),
            Err(AnalysisError::TooFewPeaks { .. })
        ));
        let all = estimate_amplification_all(&peaks(&[10, 5, 2, 1, 1]), Measured::exact(1.0)).unwrap();
        assert_eq!(all.value, 1.9);
    }

    #[test]
    fn error_propagation_matches_numeric_derivative() {
        let counts = [1000u64, 170, 29, 5];
        let eta = Measured::new(0.94, 0.03);
        let a = amplification_from_counts(&counts, eta).unwrap();
        let f = |c: [f64; 4], e: f64| e * (1.0 + (c[1] + c[2] + c[3]) / c[0]);
        let c0 = counts.map(|c| c as f64);
        let h = 1e-4;
        let mut var = 0.0;
        for i in 0..4 {
            let (mut up, mut dn) = (c0, c0);
            up[i] += h;
            dn[i] -= h;
            let d = (f(up, eta.value) - f(dn, eta.value)) / (2.0 * h);
            var += d * d * c0[i];
        }
        let de = (f(c0, eta.value + h) - f(c0, eta.value - h)) / (2.0 * h);
        var += (de * eta.err).powi(2);
        assert!((a.err - var.sqrt()).abs() < 1e-8, "{} vs {}", a.err, var.sqrt());
        assert!((a.value - 0.94 * (1.0 + 204.0 / 1000.0)).abs() < 1e-15);
    }

    #[test]
    fn scale_equivariant() {
        let eta = Measured::exact(0.94);
        let a = amplification_from_counts(&[400, 80, 12, 3], eta).unwrap();
        let b = amplification_from_counts(&[4000, 800, 120, 30], eta).unwrap();
        assert!((a.value - b.value).abs() < 1e-15);
    }

    #[test]
    fn geometric_peaks_give_truncated_series() {
        let (beta, p, r1, tl): (f64, f64, f64, f64) = (0.18, 1e-6, 1.52e6, 23e-9);
        let r = beta * (1.0 - p) * (-r1 * tl).exp();
        let base = 1e12;
        let counts: Vec<u64> = (0..4).map(|k| (base * r.powi(k)).round() as u64).collect();
        let a = amplification_from_counts(&counts, Measured::exact(0.94)).unwrap();
        let series = 0.94 * (0..4).map(|k| r.powi(k)).sum::<f64>();
        assert!((a.value - series).abs() < 1e-11, "{} vs {series}", a.value);
    }

    #[test]
    fn rate_examples() {
        let h = 3600.0;
        assert_eq!(triplet_rate(0, h).unwrap(), Measured::new(0.0, 0.0));
        let r = triplet_rate(5135, 105.0 * h).unwrap();
        assert!((r.value - 48.9047619).abs() < 1e-6 && (r.err - 0.6824659).abs() < 1e-6);
        let r = triplet_rate(1383, 35.0 * h).unwrap();
        assert!((r.value - 39.5142857).abs() < 1e-6 && (r.err - 1.0625345).abs() < 1e-6);
        // rate * duration = count exactly for round durations
        assert_eq!(r.value * 35.0, 1383.0);
        assert!(triplet_rate(1, 0.0).is_err());
    }

    fn curve(eta: f64) -> AmplificationCurve {
        let p = ModelParams {
            eta_switch: eta,
            r1: 1.52e6,
            p_spdc: 1e-6,
            ..ModelParams::default()
        };
        let u = ModelUncertainty {
            eta_switch: 0.03,
            r1: 0.03e6,
        };
        amplification_curve(&p, u, &[0.008, 0.05, 0.1, 0.18]).unwrap()
    }

    #[test]
    fn identical_inputs_have_zero_residuals() {
        let c = curve(0.94);
        let pts: Vec<_> = c
            .points
            .iter()
            .map(|p| MeasuredPoint {
                beta: p.beta,
                a: Measured::new(p.a, 0.02),
            })
            .collect();
        let rep = compare_to_model(&pts, &c).unwrap();
        assert!(rep.rows.iter().all(|r| r.residual_sigma == 0.0));
        assert!(rep.flagged.is_empty());
        let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        let row = &json["rows"][0];
        for key in ["beta", "a_exp", "a_err", "a_model", "a_model_lo", "a_model_hi", "residual_sigma"] {
            assert!(row.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn eta_free_model_shows_offset() {
        let truth = curve(0.94);
        let pts: Vec<_> = truth
            .points
            .iter()
            .map(|p| MeasuredPoint {
                beta: p.beta,
                a: Measured::new(p.a, 0.005),
            })
            .collect();
        let rep = compare_to_model(&pts, &curve(1.0)).unwrap();
        let off = rep.mean_relative_offset();
        assert!((off + 0.06).abs() < 0.005, "{off}");
        assert!(rep.rows.iter().all(|r| r.residual_sigma < 0.0));
    }

    #[test]
    fn grid_mismatch() {
        let c = curve(0.94);
        let pts = vec![
            MeasuredPoint {
                beta: 0.3,
                a: Measured::exact(1.0),
            };
            4
        ];
        assert!(matches!(compare_to_model(&pts, &c), Err(AnalysisError::GridMismatch { index: 0, .. })));
        assert!(matches!(compare_to_model(&pts[..2], &c), Err(AnalysisError::GridLength { .. })));
    }
}
