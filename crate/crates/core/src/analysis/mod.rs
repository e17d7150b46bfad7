//! Delay histograms, loop-pass peaks and amplification estimates.

mod estimate;
mod histogram;
mod peaks;

use thiserror::Error;

pub use estimate::{
    amplification_from_counts, compare_to_model, estimate_amplification, estimate_amplification_all, triplet_rate,
    ComparisonReport, ComparisonRow, Measured, MeasuredPoint, FLAG_SIGMA,
};
pub use histogram::{build_histogram, Hist2D};
pub use peaks::{extract_peaks, Peak, PeakCounts, DEFAULT_HALFWIDTH_TICKS, DEFAULT_N_PEAKS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("bin width must be positive")]
    ZeroBinWidth,
    #[error("duration {0} s is not a valid acquisition time")]
    BadDuration(f64),
    #[error("histograms with different binning cannot be merged")]
    IncompatibleHistograms,
    #[error("no triplets on the t3 - t2 = 0 band")]
    EmptyHistogram,
    #[error("loop period {t_loop_ticks} ticks does not separate windows of half-width {halfwidth}")]
    PeakSpacing { t_loop_ticks: f64, halfwidth: u64 },
    #[error("peak {index} at {center} +- {halfwidth} ticks lies outside [0, {extent}]")]
    PeakOutOfRange {
        index: usize,
        center: i64,
        halfwidth: u64,
        extent: u64,
    },
    #[error("first peak is empty")]
    ZeroFirstPeak,
    #[error("need {needed} peaks, found {found}")]
    TooFewPeaks { needed: usize, found: usize },
    #[error("{measured} measured points against {model} model points")]
    GridLength { measured: usize, model: usize },
    #[error("grid point {index}: measured beta {measured} but model beta {model}")]
    GridMismatch { index: usize, measured: f64, model: f64 },
}
