use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::time::{Femtos, FS_PER_SECOND};

/// Poisson pair creations at `pair_rate`, each detected with probability
/// `eta_herald`. Yields detected herald times in `(0, duration)`, strictly
/// increasing.
#[derive(Debug)]
pub struct Heralds<R> {
    rng: R,
    gap: Option<Exp<f64>>,
    eta: f64,
    now: u64,
    end: u64,
}

impl<R: Rng> Heralds<R> {
    pub fn new(pair_rate: f64, eta_herald: f64, duration: Femtos, rng: R) -> Self {
        // rate in pairs per femtosecond keeps the samples in integer units
        let gap = (pair_rate > 0.0)
            .then(|| Exp::new(pair_rate / FS_PER_SECOND).ok())
            .flatten();
        Heralds {
            rng,
            gap,
            eta: eta_herald.clamp(0.0, 1.0),
            now: 0,
            end: duration.0,
        }
    }
}

impl<R: Rng> Iterator for Heralds<R> {
    type Item = Femtos;

    fn next(&mut self) -> Option<Femtos> {
        let gap = self.gap?;
        loop {
            let dt = gap.sample(&mut self.rng).round().max(1.0);
            if dt >= (self.end - self.now) as f64 {
                self.now = self.end;
                self.gap = None;
                return None;
            }
            self.now += dt as u64;
            if self.rng.random_bool(self.eta) {
                return Some(Femtos(self.now));
            }
        }
    }
}

pub fn generate_heralds<R: Rng>(pair_rate: f64, eta_herald: f64, duration: Femtos, rng: R) -> Vec<Femtos> {
    Heralds::new(pair_rate, eta_herald, duration, rng).collect()
}

/// Non-paralyzable dead time: an event is kept iff it is at least
/// `dead_time` after the last kept event.
#[derive(Debug)]
pub struct DeadTime<I> {
    inner: I,
    dead: u64,
    last: Option<u64>,
    dropped: u64,
}

impl<I> DeadTime<I> {
    pub fn new(inner: I, dead_time: Femtos) -> Self {
        DeadTime {
            inner,
            dead: dead_time.0,
            last: None,
            dropped: 0,
        }
    }

    /// Events suppressed so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

impl<I: Iterator<Item = Femtos>> Iterator for DeadTime<I> {
    type Item = Femtos;

    fn next(&mut self) -> Option<Femtos> {
        for t in self.inner.by_ref() {
            match self.last {
                Some(last) if t.0 - last < self.dead => self.dropped += 1,
                _ => {
                    self.last = Some(t.0);
                    return Some(t);
                }
            }
        }
        None
    }
}

pub fn apply_dead_time(times: &[Femtos], dead_time: Femtos) -> Vec<Femtos> {
    DeadTime::new(times.iter().copied(), dead_time).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const NS: u64 = 1_000_000;

    #[test]
    fn zero_rate_is_empty() {
        let rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_heralds(0.0, 1.0, Femtos(10 * FS_PER_SECOND as u64), rng).is_empty());
    }

    #[test]
    fn count_matches_poisson_mean() {
        let rng = ChaCha8Rng::seed_from_u64(2);
        let n = Heralds::new(1e6, 1.0, Femtos(10 * FS_PER_SECOND as u64), rng).count() as f64;
        assert!((n - 1e7).abs() < 5.0 * 1e7f64.sqrt(), "{n}");
    }

    #[test]
    fn thinning_scales_count() {
        let rng = ChaCha8Rng::seed_from_u64(3);
        let n = Heralds::new(1e6, 0.25, Femtos(FS_PER_SECOND as u64), rng).count() as f64;
        assert!((n - 2.5e5).abs() < 5.0 * 2.5e5f64.sqrt(), "{n}");
    }

    #[test]
    fn strictly_increasing() {
        let rng = ChaCha8Rng::seed_from_u64(4);
        let t = generate_heralds(1e9, 1.0, Femtos(FS_PER_SECOND as u64 / 1000), rng);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exponential_gaps_pass_ks() {
        let rate = 1e6;
        let rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<_> = Heralds::new(rate, 1.0, Femtos(u64::MAX / 2), rng).take(100_000).collect();
        let mut gaps: Vec<f64> = std::iter::once(t[0].as_seconds())
            .chain(t.windows(2).map(|w| (w[1] - w[0]).as_seconds()))
            .collect();
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let d = gaps
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-rate * x).exp();
                (cdf - i as f64 / n).abs().max((i as f64 + 1.0) / n - cdf)
            })
            .fold(0.0, f64::max);
        // alpha = 0.01 asymptotic critical value
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn dead_time_examples() {
        let ns = |v: &[u64]| v.iter().map(|&x| Femtos(x * NS)).collect::<Vec<_>>();
        assert_eq!(apply_dead_time(&ns(&[0, 30, 50]), Femtos(45 * NS)), ns(&[0, 50]));
        assert_eq!(apply_dead_time(&ns(&[0, 44, 89]), Femtos(45 * NS)), ns(&[0, 89]));
        assert_eq!(apply_dead_time(&ns(&[0, 45, 46]), Femtos(45 * NS)), ns(&[0, 45]));
        let input = ns(&[1, 2, 3, 4]);
        assert_eq!(apply_dead_time(&input, Femtos::ZERO), input);
    }

    #[test]
    fn dead_time_counts_drops() {
        let t: Vec<_> = (0..10).map(|i| Femtos(i * 10 * NS)).collect();
        let mut it = DeadTime::new(t.into_iter(), Femtos(25 * NS));
        assert_eq!(it.by_ref().count(), 4);
        assert_eq!(it.dropped(), 6);
    }
}
