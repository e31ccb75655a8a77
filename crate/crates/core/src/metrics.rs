//! Message and bit accounting.
//!
//! Every channel open costs one address (`⌈log2 n⌉` bits) whether or not data
//! flows over it; an open with no data is not a message. Deliveries are
//! charged by payload: addresses `⌈log2 n⌉`, rumor copies `b`, and median
//! counter tags `⌈log2 ctr_max⌉` piggybacked on the rumor they travel with.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::Payload;
use crate::model::{log2_ceil, SimConfig};
use crate::trace::PhaseLabel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub rounds: u64,
    pub channel_opens: u64,
    pub address_msgs: u64,
    pub rumor_msgs: u64,
    pub state_msgs: u64,
}

impl Counters {
    fn add(&mut self, other: &Counters) {
        self.rounds += other.rounds;
        self.channel_opens += other.channel_opens;
        self.address_msgs += other.address_msgs;
        self.rumor_msgs += other.rumor_msgs;
        self.state_msgs += other.state_msgs;
    }
}

/// Per-item bit sizes of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitCosts {
    pub address_bits: u64,
    pub rumor_bits: u64,
    pub tag_bits: u64,
}

impl BitCosts {
    pub fn for_config(cfg: &SimConfig) -> Self {
        BitCosts {
            address_bits: log2_ceil(cfg.n as f64) as u64,
            rumor_bits: cfg.b as u64,
            tag_bits: (log2_ceil(cfg.ctr_max() as f64) as u64).max(1),
        }
    }

    /// Bit total recomputed from counters alone.
    pub fn bit_total(&self, c: &Counters) -> u64 {
        c.channel_opens * self.address_bits
            + c.address_msgs * self.address_bits
            + c.rumor_msgs * self.rumor_bits
            + c.state_msgs * self.tag_bits
    }
}

/// Run-wide counters, the incrementally maintained bit total, and the
/// per-phase breakdown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub costs: BitCosts,
    pub totals: Counters,
    pub bit_total: u64,
    pub per_phase: BTreeMap<PhaseLabel, Counters>,
    #[serde(skip)]
    current: Option<PhaseLabel>,
    #[serde(skip)]
    in_round: Counters,
}

/// What a single accounting event was.
#[derive(Clone, Copy, Debug)]
pub enum Event<'a> {
    Open,
    Deliver(&'a Payload),
}

impl Metrics {
    pub fn new(costs: BitCosts) -> Self {
        Metrics {
            costs,
            totals: Counters::default(),
            bit_total: 0,
            per_phase: BTreeMap::new(),
            current: None,
            in_round: Counters::default(),
        }
    }

    /// Opens a round attributed to `phase`.
    pub fn begin_round(&mut self, phase: PhaseLabel) {
        self.flush();
        self.current = Some(phase);
        self.in_round = Counters { rounds: 1, ..Counters::default() };
        self.totals.rounds += 1;
    }

    /// Folds the open round into the per-phase breakdown.
    pub fn flush(&mut self) {
        if let Some(phase) = self.current.take() {
            self.per_phase.entry(phase).or_default().add(&self.in_round);
            self.in_round = Counters::default();
        }
    }

    pub fn account(&mut self, event: Event<'_>) {
        let costs = self.costs;
        match event {
            Event::Open => {
                self.totals.channel_opens += 1;
                self.in_round.channel_opens += 1;
                self.bit_total += costs.address_bits;
            }
            Event::Deliver(payload) => match payload {
                Payload::Address { .. } => {
                    self.totals.address_msgs += 1;
                    self.in_round.address_msgs += 1;
                    self.bit_total += costs.address_bits;
                }
                Payload::Rumor => {
                    self.totals.rumor_msgs += 1;
                    self.in_round.rumor_msgs += 1;
                    self.bit_total += costs.rumor_bits;
                }
                Payload::TaggedRumor(_) => {
                    self.totals.rumor_msgs += 1;
                    self.totals.state_msgs += 1;
                    self.in_round.rumor_msgs += 1;
                    self.in_round.state_msgs += 1;
                    self.bit_total += costs.rumor_bits + costs.tag_bits;
                }
            },
        }
    }

    pub fn recomputed_bit_total(&self) -> u64 {
        self.costs.bit_total(&self.totals)
    }

    /// Sum of the per-phase breakdown, including the round still open.
    pub fn phase_sum(&self) -> Counters {
        let mut s = Counters::default();
        for c in self.per_phase.values() {
            s.add(c);
        }
        if self.current.is_some() {
            s.add(&self.in_round);
        }
        s
    }
}
