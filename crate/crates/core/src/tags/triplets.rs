//! Triplet coincidence finding.
//!
//! Greedy earliest match in herald order: each D1 tag takes the earliest
//! unused D2 tag with `0 <= t2 - t1 <= W`, then the earliest unused D3 tag
//! with `|t3 - t2| <= W`. A tag joins at most one triplet. If the chosen D2
//! has no D3 partner the herald yields nothing and the D2 stays unused.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Channel, TimeTag};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripletEvent {
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
}

impl TripletEvent {
    /// `t2 - t1`, non-negative by construction.
    pub fn herald_delay(&self) -> u64 {
        self.t2 - self.t1
    }

    /// `t3 - t2`, signed.
    pub fn telecom_delay(&self) -> i64 {
        self.t3 as i64 - self.t2 as i64
    }

    pub fn shifted(self, by: u64) -> TripletEvent {
        TripletEvent {
            t1: self.t1 + by,
            t2: self.t2 + by,
            t3: self.t3 + by,
        }
    }
}

#[derive(Copy, Clone, Debug)]
struct Slot {
    ticks: u64,
    used: bool,
}

/// Single-pass matcher. Memory is bounded by the tags inside a `2W` span.
#[derive(Debug)]
pub struct TripletFinder {
    window: u64,
    heralds: VecDeque<u64>,
    d2: VecDeque<Slot>,
    d3: VecDeque<Slot>,
    ready: Vec<TripletEvent>,
    last: Option<TimeTag>,
}

impl TripletFinder {
    pub fn new(window_ticks: u64) -> Self {
        TripletFinder {
            window: window_ticks,
            heralds: VecDeque::new(),
            d2: VecDeque::new(),
            d3: VecDeque::new(),
            ready: Vec::new(),
            last: None,
        }
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    /// Feeds the next tag; tags must arrive sorted.
    pub fn push(&mut self, tag: TimeTag) {
        debug_assert!(self.last.is_none_or(|l| l <= tag), "unsorted input");
        self.last = Some(tag);
        // every tag at or before t1 + 2W has been seen once a later tick arrives
        while let Some(&t1) = self.heralds.front() {
            if t1.saturating_add(2 * self.window) < tag.ticks {
                self.heralds.pop_front();
                self.resolve(t1);
            } else {
                break;
            }
        }
        if self.heralds.is_empty() {
            self.prune(tag.ticks);
        }
        match tag.channel {
            Channel::D1 => self.heralds.push_back(tag.ticks),
            Channel::D2 => self.d2.push_back(Slot {
                ticks: tag.ticks,
                used: false,
            }),
            Channel::D3 => self.d3.push_back(Slot {
                ticks: tag.ticks,
                used: false,
            }),
        }
    }

    /// Drops telecom tags no current or future herald can reach.
    fn prune(&mut self, earliest_herald: u64) {
        while self.d2.front().is_some_and(|s| s.ticks < earliest_herald) {
            self.d2.pop_front();
        }
        let d3_floor = earliest_herald.saturating_sub(self.window);
        while self.d3.front().is_some_and(|s| s.ticks < d3_floor) {
            self.d3.pop_front();
        }
    }

    fn resolve(&mut self, t1: u64) {
        self.prune(t1);
        let w = self.window;
        let Some(i2) = self
            .d2
            .iter()
            .take_while(|s| s.ticks <= t1.saturating_add(w))
            .position(|s| !s.used && s.ticks >= t1)
        else {
            return;
        };
        let t2 = self.d2[i2].ticks;
        let lo = t2.saturating_sub(w);
        let hi = t2.saturating_add(w);
        let Some(i3) = self
            .d3
            .iter()
            .take_while(|s| s.ticks <= hi)
            .position(|s| !s.used && s.ticks >= lo)
        else {
            return;
        };
        self.d2[i2].used = true;
        self.d3[i3].used = true;
        self.ready.push(TripletEvent {
            t1,
            t2,
            t3: self.d3[i3].ticks,
        });
    }

    /// Takes the triplets resolved so far, in herald order.
    pub fn take_ready(&mut self) -> Vec<TripletEvent> {
        std::mem::take(&mut self.ready)
    }

    /// Resolves the remaining heralds at end of stream.
    pub fn finish(mut self) -> Vec<TripletEvent> {
        while let Some(t1) = self.heralds.pop_front() {
            self.resolve(t1);
        }
        self.ready
    }
}

/// Runs [`TripletFinder`] over a sorted stream.
pub fn find_triplets(tags: impl IntoIterator<Item = TimeTag>, window_ticks: u64) -> Vec<TripletEvent> {
    let mut finder = TripletFinder::new(window_ticks);
    let mut out = Vec::new();
    for tag in tags {
        finder.push(tag);
        out.append(&mut finder.ready);
    }
    out.extend(finder.finish());
    out
}

/// CSV `t1,t2,t3` in ticks.
pub fn triplets_csv(triplets: &[TripletEvent]) -> String {
    let mut out = String::from("t1,t2,t3\n");
    for t in triplets {
        out.push_str(&format!("{},{},{}\n", t.t1, t.t2, t.t3));
    }
    out
}
