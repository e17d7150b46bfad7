//! Truncated Fock-space evolution of the looped cascade.
//!
//! The first crystal acts with `H1 = g1a (a0+ a1+ + h.c.)`, the second with
//! `H2 = g2 (a0 a2+ a3+ + h.c.)`, and each loop transit is a beam splitter
//! that keeps mode 0 with amplitude `sqrt(beta)` and routes the rest into a
//! fresh loss mode. Applying `U1` then `n` rounds of (`U2` at pass k, loop
//! at pass k) to the vacuum leaves triplet amplitudes
//! `-g1a g2 sqrt(beta)^k` on the kets `|0>_0 |1>_1 |1>_{2,k} |1>_{3,k}`.
//!
//! States are sparse maps from occupation vectors to amplitudes. Mode 0
//! carries no time label: after a loop transit the surviving photon simply
//! occupies the next time slot of the same mode.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

/// Largest number of second-crystal passes [`cascade_state`] will build.
pub const MAX_PASSES: u32 = 16;
/// Largest coupling accepted by [`cascade_state`].
pub const MAX_COUPLING: f64 = 0.1;
/// Default photon-number truncation per mode.
pub const DEFAULT_N_MAX: u8 = 2;

const TAYLOR_CUTOFF: f64 = 1e-18;
const TAYLOR_MAX_TERMS: u32 = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("n_passes = {0} outside 1..={MAX_PASSES}")]
    StateSize(u32),
    #[error("{name} = {value} outside the perturbative range [0, {MAX_COUPLING}]")]
    NonPerturbative { name: &'static str, value: f64 },
    #[error("beta = {0} outside [0, 1]")]
    BadBeta(f64),
    #[error("mode {0:?} is already populated")]
    ModeOccupied(ModeIndex),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeIndex {
    /// Mode 0: the photon that pumps the second crystal.
    Pump,
    /// Mode 1: the herald.
    Herald,
    /// Mode 2 created on pass k.
    Telecom2(u32),
    /// Mode 3 created on pass k.
    Telecom3(u32),
    /// Loss port of the loop transit following pass k.
    Loss(u32),
}

impl ModeIndex {
    pub fn time_index(self) -> Option<u32> {
        match self {
            ModeIndex::Pump | ModeIndex::Herald => None,
            ModeIndex::Telecom2(k) | ModeIndex::Telecom3(k) | ModeIndex::Loss(k) => Some(k),
        }
    }

    fn label(self) -> String {
        match self {
            ModeIndex::Pump => "0".into(),
            ModeIndex::Herald => "1".into(),
            ModeIndex::Telecom2(k) => format!("2@{k}"),
            ModeIndex::Telecom3(k) => format!("3@{k}"),
            ModeIndex::Loss(k) => format!("L@{k}"),
        }
    }
}

/// Occupation numbers of the populated modes; absent modes are empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occupations(BTreeMap<ModeIndex, u8>);

impl Occupations {
    pub fn vacuum() -> Self {
        Occupations::default()
    }

    pub fn from_modes(modes: impl IntoIterator<Item = (ModeIndex, u8)>) -> Self {
        Occupations(modes.into_iter().filter(|&(_, n)| n > 0).collect())
    }

    pub fn get(&self, mode: ModeIndex) -> u8 {
        self.0.get(&mode).copied().unwrap_or(0)
    }

    fn set(&mut self, mode: ModeIndex, n: u8) {
        if n == 0 {
            self.0.remove(&mode);
        } else {
            self.0.insert(mode, n);
        }
    }

    fn shifted(&self, changes: &[(ModeIndex, i8)]) -> Occupations {
        let mut out = self.clone();
        for &(mode, dn) in changes {
            let n = out.get(mode) as i16 + dn as i16;
            debug_assert!(n >= 0);
            out.set(mode, n as u8);
        }
        out
    }

    pub fn max_occupation(&self) -> u8 {
        self.0.values().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeIndex, u8)> + '_ {
        self.0.iter().map(|(&m, &n)| (m, n))
    }

    /// The ket `|0>_0 |1>_1 |1>_{2,k} |1>_{3,k}` with all other modes empty.
    pub fn triplet(k: u32) -> Occupations {
        Occupations::from_modes([
            (ModeIndex::Herald, 1),
            (ModeIndex::Telecom2(k), 1),
            (ModeIndex::Telecom3(k), 1),
        ])
    }

    /// Pass index if this is a triplet ket.
    pub fn as_triplet(&self) -> Option<u32> {
        if self.0.len() != 3 || self.get(ModeIndex::Herald) != 1 {
            return None;
        }
        let k = self.0.keys().find_map(|m| match m {
            ModeIndex::Telecom2(k) => Some(*k),
            _ => None,
        })?;
        (self.get(ModeIndex::Telecom2(k)) == 1 && self.get(ModeIndex::Telecom3(k)) == 1).then_some(k)
    }

    fn touches_loss(&self) -> bool {
        self.0.keys().any(|m| matches!(m, ModeIndex::Loss(_)))
    }
}

/// Taylor orders used for `exp(-iH1)` and `exp(-iH2)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Expansion {
    /// Fixed orders. The default (2, 1) keeps exactly the terms up to
    /// quadratic order in the couplings that reach the triplet kets.
    Orders { pdc1: u32, pdc2: u32 },
    /// Sum until the next Taylor term is negligible; norm-preserving up to
    /// truncation leakage.
    Converged,
}

impl Expansion {
    pub const PERTURBATIVE: Expansion = Expansion::Orders { pdc1: 2, pdc2: 1 };

    fn pdc1(self) -> u32 {
        match self {
            Expansion::Orders { pdc1, .. } => pdc1,
            Expansion::Converged => TAYLOR_MAX_TERMS,
        }
    }

    fn pdc2(self) -> u32 {
        match self {
            Expansion::Orders { pdc2, .. } => pdc2,
            Expansion::Converged => TAYLOR_MAX_TERMS,
        }
    }
}

impl Default for Expansion {
    fn default() -> Self {
        Expansion::PERTURBATIVE
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Couplings {
    /// First-crystal coupling times pump amplitude, `g1 * alpha`.
    pub g1_alpha: f64,
    pub g2: f64,
    pub beta: f64,
}

type Amplitudes = BTreeMap<Occupations, Complex64>;

/// A pure state on the truncated Fock space of the cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeState {
    amplitudes: Amplitudes,
    n_max: u8,
    couplings: Couplings,
    expansion: Expansion,
    leakage: f64,
}

impl CascadeState {
    pub fn vacuum(couplings: Couplings) -> Self {
        Self::vacuum_with(couplings, DEFAULT_N_MAX, Expansion::default())
    }

    pub fn vacuum_with(couplings: Couplings, n_max: u8, expansion: Expansion) -> Self {
        if n_max < 2 {
            log::warn!("n_max = {n_max} truncates the pair terms of the first crystal");
        }
        let mut amplitudes = Amplitudes::new();
        amplitudes.insert(Occupations::vacuum(), Complex64::new(1.0, 0.0));
        CascadeState {
            amplitudes,
            n_max,
            couplings,
            expansion,
            leakage: 0.0,
        }
    }

    /// Builds a state from explicit amplitudes, mostly for tests.
    pub fn from_amplitudes(
        couplings: Couplings,
        n_max: u8,
        expansion: Expansion,
        amplitudes: impl IntoIterator<Item = (Occupations, Complex64)>,
    ) -> Self {
        let mut state = CascadeState {
            amplitudes: Amplitudes::new(),
            n_max,
            couplings,
            expansion,
            leakage: 0.0,
        };
        for (occ, a) in amplitudes {
            *state.amplitudes.entry(occ).or_default() += a;
        }
        state
    }

    pub fn couplings(&self) -> Couplings {
        self.couplings
    }

    pub fn n_max(&self) -> u8 {
        self.n_max
    }

    /// Squared norm dropped by photon-number truncation so far.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitude(&self, occ: &Occupations) -> Complex64 {
        self.amplitudes.get(occ).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Occupations, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Amplitude of the triplet ket created on pass `k`.
    pub fn triplet_amplitude(&self, k: u32) -> Complex64 {
        self.amplitude(&Occupations::triplet(k))
    }

    /// Triplet amplitudes keyed by pass index.
    pub fn triplet_amplitudes(&self) -> BTreeMap<u32, Complex64> {
        self.amplitudes
            .iter()
            .filter_map(|(occ, &a)| occ.as_triplet().map(|k| (k, a)))
            .collect()
    }

    fn with_amplitudes(&self, amplitudes: Amplitudes) -> CascadeState {
        let mut out = CascadeState {
            amplitudes,
            n_max: self.n_max,
            couplings: self.couplings,
            expansion: self.expansion,
            leakage: self.leakage,
        };
        out.truncate();
        out
    }

    fn truncate(&mut self) {
        let n_max = self.n_max;
        let mut dropped = 0.0;
        self.amplitudes.retain(|occ, a| {
            let keep = occ.max_occupation() <= n_max;
            if !keep {
                dropped += a.norm_sqr();
            }
            keep && *a != Complex64::default()
        });
        self.leakage += dropped;
    }

    /// Applies the Hermitian operator `h` through its Taylor series
    /// `sum_n (-i)^n h^n / n!` up to `order`.
    fn evolve(&self, order: u32, h: impl Fn(&Amplitudes) -> Amplitudes) -> CascadeState {
        let mut total = self.amplitudes.clone();
        let mut term = self.amplitudes.clone();
        for n in 1..=order {
            let factor = Complex64::new(0.0, -1.0 / n as f64);
            term = h(&term);
            let mut norm = 0.0;
            for a in term.values_mut() {
                *a *= factor;
                norm += a.norm_sqr();
            }
            for (occ, a) in &term {
                *total.entry(occ.clone()).or_default() += a;
            }
            if norm < TAYLOR_CUTOFF * TAYLOR_CUTOFF {
                break;
            }
        }
        self.with_amplitudes(total)
    }
}

fn sqrt_u8(n: u8) -> f64 {
    (n as f64).sqrt()
}

fn h1(g: f64, psi: &Amplitudes) -> Amplitudes {
    let mut out = Amplitudes::new();
    let (p, h) = (ModeIndex::Pump, ModeIndex::Herald);
    for (occ, &a) in psi {
        let (n0, n1) = (occ.get(p), occ.get(h));
        let up = g * sqrt_u8(n0 + 1) * sqrt_u8(n1 + 1);
        *out.entry(occ.shifted(&[(p, 1), (h, 1)])).or_default() += a * up;
        if n0 > 0 && n1 > 0 {
            let down = g * sqrt_u8(n0) * sqrt_u8(n1);
            *out.entry(occ.shifted(&[(p, -1), (h, -1)])).or_default() += a * down;
        }
    }
    out
}

fn h2(g: f64, k: u32, psi: &Amplitudes) -> Amplitudes {
    let mut out = Amplitudes::new();
    let (p, s2, s3) = (ModeIndex::Pump, ModeIndex::Telecom2(k), ModeIndex::Telecom3(k));
    for (occ, &a) in psi {
        let (n0, n2, n3) = (occ.get(p), occ.get(s2), occ.get(s3));
        if n0 > 0 {
            let c = g * sqrt_u8(n0) * sqrt_u8(n2 + 1) * sqrt_u8(n3 + 1);
            *out.entry(occ.shifted(&[(p, -1), (s2, 1), (s3, 1)])).or_default() += a * c;
        }
        if n2 > 0 && n3 > 0 {
            let c = g * sqrt_u8(n0 + 1) * sqrt_u8(n2) * sqrt_u8(n3);
            *out.entry(occ.shifted(&[(p, 1), (s2, -1), (s3, -1)])).or_default() += a * c;
        }
    }
    out
}

fn binomial(n: u8, k: u8) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// First crystal: `exp(-i H1)` on the whole state.
pub fn apply_pdc1(state: &CascadeState) -> CascadeState {
    let g = state.couplings.g1_alpha;
    if g == 0.0 {
        return state.clone();
    }
    state.evolve(state.expansion.pdc1(), |psi| h1(g, psi))
}

/// Second crystal on pass `k`: `exp(-i H2)` with output modes `(2,k)`, `(3,k)`.
pub fn apply_pdc2(state: &CascadeState, k: u32) -> Result<CascadeState, FockError> {
    for mode in [ModeIndex::Telecom2(k), ModeIndex::Telecom3(k)] {
        if state.amplitudes.keys().any(|occ| occ.get(mode) > 0) {
            return Err(FockError::ModeOccupied(mode));
        }
    }
    let g = state.couplings.g2;
    if g == 0.0 {
        return Ok(state.clone());
    }
    Ok(state.evolve(state.expansion.pdc2(), |psi| h2(g, k, psi)))
}

/// Loop transit after pass `k`: each mode-0 photon survives with amplitude
/// `sqrt(beta)` or leaves through loss mode `k` with `sqrt(1 - beta)`.
pub fn apply_loop_loss(state: &CascadeState, k: u32) -> Result<CascadeState, FockError> {
    let beta = state.couplings.beta;
    if !(0.0..=1.0).contains(&beta) {
        return Err(FockError::BadBeta(beta));
    }
    let loss = ModeIndex::Loss(k);
    let (t, r) = (beta.sqrt(), (1.0 - beta).sqrt());
    let mut out = Amplitudes::new();
    for (occ, &a) in &state.amplitudes {
        if occ.get(loss) > 0 {
            return Err(FockError::ModeOccupied(loss));
        }
        let n = occ.get(ModeIndex::Pump);
        for kept in 0..=n {
            let lost = n - kept;
            let c = binomial(n, kept).sqrt() * t.powi(kept as i32) * r.powi(lost as i32);
            if c == 0.0 {
                continue;
            }
            let mut next = occ.clone();
            next.set(ModeIndex::Pump, kept);
            next.set(loss, lost);
            *out.entry(next).or_default() += a * c;
        }
    }
    Ok(state.with_amplitudes(out))
}

/// Evolves the vacuum through the first crystal and `n_passes` rounds of
/// (second crystal at pass k, loop transit k), k = 0..n_passes.
///
/// `n_passes` counts applications of the second crystal, so the triplet
/// kets run over k = 0..n_passes-1.
pub fn cascade_state(n_passes: u32, g1_alpha: f64, g2: f64, beta: f64) -> Result<CascadeState, FockError> {
    cascade_state_with(
        n_passes,
        Couplings { g1_alpha, g2, beta },
        DEFAULT_N_MAX,
        Expansion::default(),
    )
}

pub fn cascade_state_with(
    n_passes: u32,
    couplings: Couplings,
    n_max: u8,
    expansion: Expansion,
) -> Result<CascadeState, FockError> {
    if n_passes == 0 || n_passes > MAX_PASSES {
        return Err(FockError::StateSize(n_passes));
    }
    for (name, value) in [("g1_alpha", couplings.g1_alpha), ("g2", couplings.g2)] {
        if !(0.0..=MAX_COUPLING).contains(&value) {
            return Err(FockError::NonPerturbative { name, value });
        }
    }
    if !(0.0..=1.0).contains(&couplings.beta) {
        return Err(FockError::BadBeta(couplings.beta));
    }
    let mut state = apply_pdc1(&CascadeState::vacuum_with(couplings, n_max, expansion));
    for k in 0..n_passes {
        state = apply_pdc2(&state, k)?;
        state = apply_loop_loss(&state, k)?;
    }
    Ok(state)
}

/// Total probability on the triplet kets, `sum_k |amp(k)|^2`.
pub fn triplet_probability(state: &CascadeState) -> f64 {
    state.triplet_amplitudes().values().map(|a| a.norm_sqr()).sum()
}

/// Renames loss modes through `relabel`, which must be injective.
pub fn relabel_loss(state: &CascadeState, relabel: impl Fn(u32) -> u32) -> CascadeState {
    let amplitudes = state
        .amplitudes
        .iter()
        .map(|(occ, &a)| {
            let renamed = Occupations::from_modes(occ.iter().map(|(m, n)| match m {
                ModeIndex::Loss(k) => (ModeIndex::Loss(relabel(k)), n),
                other => (other, n),
            }));
            (renamed, a)
        })
        .collect();
    CascadeState {
        amplitudes,
        ..state.clone()
    }
}

/// Probabilities of the non-loss occupation patterns, tracing out the loss
/// modes.
pub fn physical_marginals(state: &CascadeState) -> BTreeMap<Occupations, f64> {
    let mut out = BTreeMap::new();
    for (occ, a) in &state.amplitudes {
        let physical = Occupations::from_modes(occ.iter().filter(|(m, _)| !matches!(m, ModeIndex::Loss(_))));
        *out.entry(physical).or_insert(0.0) += a.norm_sqr();
    }
    out
}

/// Amplitudes on kets with every loss mode empty.
pub fn loss_free_amplitudes(state: &CascadeState) -> BTreeMap<Occupations, Complex64> {
    state
        .amplitudes
        .iter()
        .filter(|(occ, _)| !occ.touches_loss())
        .map(|(occ, &a)| (occ.clone(), a))
        .collect()
}

/// Debug dump as CSV `mode_occupations,re,im`; occupations are written as
/// `mode=n` pairs joined by `;` (`0`, `1`, `2@k`, `3@k`, `L@k`).
pub fn dump_csv(state: &CascadeState) -> String {
    let mut out = String::from("mode_occupations,re,im\n");
    for (occ, a) in &state.amplitudes {
        let label: Vec<String> = occ.iter().map(|(m, n)| format!("{}={n}", m.label())).collect();
        let _ = writeln!(out, "{},{:e},{:e}", label.join(";"), a.re, a.im);
    }
    out
}
