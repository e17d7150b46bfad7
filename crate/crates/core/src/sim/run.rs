use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, SimConfig, SwitchMode};
use super::episode::{run_loop_episode, Outcome, TruthRecord};
use super::heralds::{DeadTime, Heralds};
use crate::tags::{Channel, TagStream, TimeTag};
use crate::time::Femtos;

/// Receives the sorted tag stream and the truth log of a run.
pub trait SimSink {
    fn tag(&mut self, tag: TimeTag);
    fn truth(&mut self, _record: &TruthRecord) {}
}

/// Collects everything in memory.
#[derive(Debug, Default)]
pub struct Collect {
    pub tags: Vec<TimeTag>,
    pub truth: Vec<TruthRecord>,
}

impl SimSink for Collect {
    fn tag(&mut self, tag: TimeTag) {
        self.tags.push(tag);
    }

    fn truth(&mut self, record: &TruthRecord) {
        self.truth.push(*record);
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSummary {
    /// Heralds surviving the D1 dead time.
    pub heralds: u64,
    pub dead_time_losses: u64,
    pub captured: u64,
    pub converted: u64,
    pub ejected: u64,
    pub tags: [u64; 3],
}

/// Pending tag: ordered by tick, then channel, then exact time.
type Entry = Reverse<(u64, Channel, u64)>;

struct Emitter<'a, S> {
    sink: &'a mut S,
    tick: u64,
    d23_dead: u64,
    heap: BinaryHeap<Entry>,
    last_fs: [Option<u64>; 3],
    last_tick: [Option<u64>; 3],
    counts: [u64; 3],
}

impl<S: SimSink> Emitter<'_, S> {
    fn push(&mut self, channel: Channel, fs: u64) {
        self.heap.push(Reverse((fs / self.tick, channel, fs)));
    }

    /// Emits every entry quantized before `fs`; nothing earlier can arrive.
    fn flush_before(&mut self, fs: u64) {
        let bound = fs / self.tick;
        while self.heap.peek().is_some_and(|Reverse((t, _, _))| *t < bound) {
            let Reverse((tick, channel, fs)) = self.heap.pop().unwrap();
            self.emit(tick, channel, fs);
        }
    }

    fn flush_all(&mut self) {
        while let Some(Reverse((tick, channel, fs))) = self.heap.pop() {
            self.emit(tick, channel, fs);
        }
    }

    fn emit(&mut self, tick: u64, channel: Channel, fs: u64) {
        let i = channel.id() as usize - 1;
        if channel != Channel::D1 {
            if self.last_fs[i].is_some_and(|last| fs - last < self.d23_dead) {
                return;
            }
            self.last_fs[i] = Some(fs);
        }
        // two clicks in one tick on one detector are one tag
        if self.last_tick[i] == Some(tick) {
            return;
        }
        self.last_tick[i] = Some(tick);
        self.counts[i] += 1;
        self.sink.tag(TimeTag::new(channel, tick));
    }
}

#[derive(Copy, Clone)]
struct Pending {
    time: Femtos,
    index: u64,
    fires: bool,
}

struct Episodes<'c> {
    cfg: &'c SimConfig,
    jitter: Option<Normal<f64>>,
    margin: u64,
    base: ChaCha8Rng,
}

impl Episodes<'_> {
    fn resolve<S: SimSink>(&self, p: Pending, next: Option<Femtos>, out: &mut Emitter<'_, S>, summary: &mut SimSummary) {
        let cfg = self.cfg;
        let mut rng = self.base.clone();
        rng.set_stream(p.index + 1);
        let mut record = if p.fires {
            run_loop_episode(p.time, next, cfg, &mut rng)
        } else {
            TruthRecord::ignored(p.time)
        };
        summary.captured += record.captured as u64;
        match record.outcome {
            Outcome::Converted { k } => {
                summary.converted += 1;
                let t = p.time.0 + cfg.delay_0.0 + k as u64 * cfg.t_loop.0;
                let mut hit = [false; 2];
                for _ in 0..2 {
                    let channel = if rng.random_bool(0.5) { Channel::D2 } else { Channel::D3 };
                    if !rng.random_bool(cfg.eta_1550) {
                        continue;
                    }
                    let fs = match &self.jitter {
                        Some(n) => {
                            let limit = self.margin as f64;
                            let dt: f64 = n.sample(&mut rng).clamp(-limit, limit);
                            (t as f64 + dt).max(0.0) as u64
                        }
                        None => t,
                    };
                    hit[channel as usize - 2] = true;
                    out.push(channel, fs);
                }
                record.split_pair = hit[0] && hit[1];
            }
            Outcome::Ejected { .. } => summary.ejected += 1,
            _ => {}
        }
        out.sink.truth(&record);
    }
}

/// Runs the full pipeline, streaming tags in `(ticks, channel)` order.
///
/// Randomness is split by stream: stream 0 drives herald generation and
/// stream `i + 1` drives everything that happens to herald `i`, so a run is
/// a pure function of the configuration.
pub fn simulate_into<S: SimSink>(cfg: &SimConfig, sink: &mut S) -> Result<SimSummary, ConfigError> {
    cfg.validate()?;
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut heralds = DeadTime::new(
        Heralds::new(cfg.pair_rate, cfg.eta_herald, cfg.duration, base.clone()),
        cfg.d1_dead_time,
    );
    let margin = 5 * cfg.jitter.0;
    let episodes = Episodes {
        cfg,
        jitter: (cfg.jitter.0 > 0).then(|| Normal::new(0.0, cfg.jitter.0 as f64).unwrap()),
        margin,
        base,
    };
    let mut out = Emitter {
        sink,
        tick: cfg.tick.0,
        d23_dead: cfg.d23_dead_time.0,
        heap: BinaryHeap::new(),
        last_fs: [None; 3],
        last_tick: [None; 3],
        counts: [0; 3],
    };
    let mut summary = SimSummary::default();
    let mut pending: VecDeque<Pending> = VecDeque::new();
    let mut previous: Option<Femtos> = None;

    for (index, time) in heralds.by_ref().enumerate() {
        out.push(Channel::D1, time.0);
        let fires = match cfg.switch_mode {
            SwitchMode::Lumped => true,
            SwitchMode::Holdoff => previous.is_none_or(|p| time.0 - p.0 >= cfg.holdoff.0),
        };
        previous = Some(time);
        if fires {
            while let Some(p) = pending.pop_front() {
                episodes.resolve(p, Some(time), &mut out, &mut summary);
            }
        }
        pending.push_back(Pending {
            time,
            index: index as u64,
            fires,
        });
        summary.heralds += 1;
        let earliest = pending.front().map_or(time.0, |p| p.time.0);
        out.flush_before(earliest.saturating_sub(margin));
    }
    while let Some(p) = pending.pop_front() {
        episodes.resolve(p, None, &mut out, &mut summary);
    }
    out.flush_all();
    summary.dead_time_losses = heralds.dropped();
    summary.tags = out.counts;
    Ok(summary)
}

/// Collects a whole run in memory.
pub fn simulate(cfg: &SimConfig) -> Result<(TagStream, Vec<TruthRecord>, SimSummary), ConfigError> {
    let mut sink = Collect::default();
    let summary = simulate_into(cfg, &mut sink)?;
    Ok((
        TagStream {
            tick_fs: cfg.tick.0,
            tags: sink.tags,
        },
        sink.truth,
        summary,
    ))
}
