use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Hist2D};

pub const DEFAULT_N_PEAKS: usize = 4;
/// 2 ns at 156.25 ps per tick, floored.
pub const DEFAULT_HALFWIDTH_TICKS: u64 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: i64,
    pub halfwidth: u64,
    pub count: u64,
    /// Poisson error `sqrt(count)`.
    pub err: f64,
    /// Count-weighted mean of `t2 - t1` inside the window, in ticks.
    pub centroid: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakCounts {
    pub peaks: Vec<Peak>,
    /// Triplets with `|t3 - t2| <= halfwidth`.
    pub band_total: u64,
    /// Band triplets outside every peak window.
    pub off_peak: u64,
    /// Width in ticks of the band region outside the peak windows.
    pub off_peak_width: u64,
    /// `off_peak` scaled to one peak-window width.
    pub background_per_window: f64,
    /// Triplets with `|t3 - t2| > halfwidth`.
    pub off_band: u64,
}

impl PeakCounts {
    pub fn counts(&self) -> Vec<u64> {
        self.peaks.iter().map(|p| p.count).collect()
    }

    /// Mean distance between consecutive centroids, in ticks.
    pub fn mean_spacing(&self) -> Option<f64> {
        let c: Vec<f64> = self.peaks.iter().map(|p| p.centroid).collect::<Option<_>>()?;
        (c.len() > 1).then(|| (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64)
    }
}

/// Integrates the loop-pass peaks on the `t3 - t2 = 0` band.
///
/// The first peak sits at the band maximum `x0`; peak `k` is centred at
/// `x0 + round(k * t_loop_ticks)`. Bins are attributed by their lower edge.
pub fn extract_peaks(
    hist: &Hist2D,
    t_loop_ticks: f64,
    n_peaks: usize,
    halfwidth: u64,
) -> Result<PeakCounts, AnalysisError> {
    if t_loop_ticks.is_nan() || t_loop_ticks <= 2.0 * halfwidth as f64 {
        return Err(AnalysisError::PeakSpacing {
            t_loop_ticks,
            halfwidth,
        });
    }
    let hw = halfwidth as i64;
    let mut profile: BTreeMap<i64, u64> = BTreeMap::new();
    let mut off_band = 0;
    for (x, y, c) in hist.bins() {
        if y.abs() <= hw {
            *profile.entry(x).or_insert(0) += c;
        } else {
            off_band += c;
        }
    }
    let x0 = profile
        .iter()
        .fold(None, |best: Option<(i64, u64)>, (&x, &c)| match best {
            Some((_, b)) if b >= c => best,
            _ => Some((x, c)),
        })
        .map(|(x, _)| x)
        .ok_or(AnalysisError::EmptyHistogram)?;

    let extent = hist.x_extent() as i64;
    let mut peaks = Vec::with_capacity(n_peaks);
    for k in 0..n_peaks {
        let center = x0 + (k as f64 * t_loop_ticks).round() as i64;
        if center - hw < 0 || center + hw > extent {
            return Err(AnalysisError::PeakOutOfRange {
                index: k,
                center,
                halfwidth,
                extent: hist.x_extent(),
            });
        }
        let (mut count, mut moment) = (0u64, 0.0);
        let mid = (hist.bin_width() as f64 - 1.0) / 2.0;
        for (&x, &c) in profile.range(center - hw..=center + hw) {
            count += c;
            moment += c as f64 * (x as f64 + mid);
        }
        peaks.push(Peak {
            center,
            halfwidth,
            count,
            err: (count as f64).sqrt(),
            centroid: (count > 0).then(|| moment / count as f64),
        });
    }
    let band_total: u64 = profile.values().sum();
    let in_peaks: u64 = peaks.iter().map(|p| p.count).sum();
    let off_peak = band_total - in_peaks;
    let window = 2 * halfwidth + 1;
    let off_peak_width = (hist.x_extent() + 1).saturating_sub(n_peaks as u64 * window);
    let background_per_window = if off_peak_width > 0 {
        off_peak as f64 * window as f64 / off_peak_width as f64
    } else {
        0.0
    };
    Ok(PeakCounts {
        peaks,
        band_total,
        off_peak,
        off_peak_width,
        background_per_window,
        off_band,
    })
}
