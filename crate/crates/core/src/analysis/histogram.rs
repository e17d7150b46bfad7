use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::tags::TripletEvent;
use crate::time::DEFAULT_WINDOW_TICKS;

/// Sparse 2-D histogram of `(t2 - t1, t3 - t2)` in ticks. Keys are bin
/// indices; bin `i` covers ticks `[i * bin_width, (i + 1) * bin_width)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hist2D {
    bin_width: u64,
    /// Upper end of the `t2 - t1` axis in ticks.
    x_extent: u64,
    counts: BTreeMap<(i64, i64), u64>,
    total: u64,
    duration_fs: u64,
}

impl Hist2D {
    pub fn new(bin_width: u64, x_extent: u64, duration_s: f64) -> Result<Self, AnalysisError> {
        if bin_width == 0 {
            return Err(AnalysisError::ZeroBinWidth);
        }
        if !(duration_s.is_finite() && duration_s >= 0.0) {
            return Err(AnalysisError::BadDuration(duration_s));
        }
        Ok(Hist2D {
            bin_width,
            x_extent,
            counts: BTreeMap::new(),
            total: 0,
            duration_fs: (duration_s * 1e15).round() as u64,
        })
    }

    pub fn add(&mut self, t: &TripletEvent) {
        let w = self.bin_width as i64;
        let x = t.herald_delay() as i64;
        let y = t.telecom_delay();
        *self.counts.entry((x.div_euclid(w), y.div_euclid(w))).or_insert(0) += 1;
        self.total += 1;
    }

    /// Combines two shards of the same acquisition setup.
    pub fn merge(&mut self, other: &Hist2D) -> Result<(), AnalysisError> {
        if other.bin_width != self.bin_width || other.x_extent != self.x_extent {
            return Err(AnalysisError::IncompatibleHistograms);
        }
        for (&k, &v) in &other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        self.total += other.total;
        self.duration_fs += other.duration_fs;
        Ok(())
    }

    pub fn bin_width(&self) -> u64 {
        self.bin_width
    }

    pub fn x_extent(&self) -> u64 {
        self.x_extent
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_fs as f64 / 1e15
    }

    /// Count in the bin containing tick offsets `(x, y)`.
    pub fn count_at(&self, x: i64, y: i64) -> u64 {
        let w = self.bin_width as i64;
        self.counts.get(&(x.div_euclid(w), y.div_euclid(w))).copied().unwrap_or(0)
    }

    /// Non-empty bins as `(x_tick, y_tick, count)`, ticks at the lower bin
    /// edge.
    pub fn bins(&self) -> impl Iterator<Item = (i64, i64, u64)> + '_ {
        let w = self.bin_width as i64;
        self.counts.iter().map(move |(&(x, y), &c)| (x * w, y * w, c))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_tick,y_tick,count\n");
        for (x, y, c) in self.bins() {
            out.push_str(&format!("{x},{y},{c}\n"));
        }
        out
    }
}

pub fn build_histogram<'a>(
    triplets: impl IntoIterator<Item = &'a TripletEvent>,
    bin_width: u64,
    duration_s: f64,
) -> Result<Hist2D, AnalysisError> {
    let mut h = Hist2D::new(bin_width, DEFAULT_WINDOW_TICKS, duration_s)?;
    for t in triplets {
        h.add(t);
    }
    Ok(h)
}
