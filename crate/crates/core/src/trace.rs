//! Per-round time series of a single run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::metrics::{Counters, Metrics};
use crate::model::{Mode, SimConfig};

/// Which part of a protocol a round belongs to.
///
/// `Dummy(k)` is an idle interval of the non-exact schedule whose length is
/// `ρ^k·c·√log n_v` (k odd, 1..=13).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhaseLabel {
    Phase0,
    Dummy(u8),
    Sub(u8),
    Phase3,
    Phase4,
    Push,
    Pull,
    PushPull,
}

impl PhaseLabel {
    pub fn is_dummy(self) -> bool {
        matches!(self, PhaseLabel::Dummy(_))
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseLabel::Phase0 => f.write_str("phase0"),
            PhaseLabel::Dummy(k) => write!(f, "dummy{k}"),
            PhaseLabel::Sub(k) => write!(f, "phase2.{k}"),
            PhaseLabel::Phase3 => f.write_str("phase3"),
            PhaseLabel::Phase4 => f.write_str("phase4"),
            PhaseLabel::Push => f.write_str("push"),
            PhaseLabel::Pull => f.write_str("pull"),
            PhaseLabel::PushPull => f.write_str("pushpull"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown phase label `{0}`")]
pub struct BadPhaseLabel(String);

impl FromStr for PhaseLabel {
    type Err = BadPhaseLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadPhaseLabel(s.to_string());
        Ok(match s {
            "phase0" => PhaseLabel::Phase0,
            "phase3" => PhaseLabel::Phase3,
            "phase4" => PhaseLabel::Phase4,
            "push" => PhaseLabel::Push,
            "pull" => PhaseLabel::Pull,
            "pushpull" => PhaseLabel::PushPull,
            _ => {
                if let Some(k) = s.strip_prefix("phase2.") {
                    PhaseLabel::Sub(k.parse().map_err(|_| bad())?)
                } else if let Some(k) = s.strip_prefix("dummy") {
                    PhaseLabel::Dummy(k.parse().map_err(|_| bad())?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Serialize for PhaseLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: u64,
    pub seed: u64,
    pub n: u32,
    pub c: u32,
    pub b: u32,
    pub mode: Mode,
    pub failure_scale: f64,
}

impl RunMeta {
    pub fn from_config(run_id: u64, cfg: &SimConfig) -> Self {
        RunMeta {
            run_id,
            seed: cfg.seed,
            n: cfg.n,
            c: cfg.c,
            b: cfg.b,
            mode: cfg.mode,
            failure_scale: cfg.failure_scale,
        }
    }
}

/// One executed round, with cumulative counters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: u32,
    pub phase: PhaseLabel,
    pub informed: u64,
    pub channel_opens: u64,
    pub address_msgs: u64,
    pub rumor_msgs: u64,
    pub state_msgs: u64,
    pub bit_total: u64,
}

impl TraceRow {
    pub fn snapshot(round: u32, phase: PhaseLabel, informed: u64, metrics: &Metrics) -> Self {
        let Counters { channel_opens, address_msgs, rumor_msgs, state_msgs, .. } = metrics.totals;
        TraceRow {
            round,
            phase,
            informed,
            channel_opens,
            address_msgs,
            rumor_msgs,
            state_msgs,
            bit_total: metrics.bit_total,
        }
    }

    pub fn counters(&self) -> Counters {
        Counters {
            rounds: self.round as u64,
            channel_opens: self.channel_opens,
            address_msgs: self.address_msgs,
            rumor_msgs: self.rumor_msgs,
            state_msgs: self.state_msgs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Nodes failed by the end of the run.
    pub failed: u64,
    pub informed: u64,
    /// Every node still alive at the end holds the rumor.
    pub complete: bool,
    /// First round after which no live node was uninformed.
    pub completion_round: Option<u32>,
    /// Round in which the last node became informed.
    pub last_infection_round: Option<u32>,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    #[serde(flatten)]
    pub meta: RunMeta,
    pub rows: Vec<TraceRow>,
    pub outcome: RunOutcome,
}

impl Trace {
    pub fn rounds(&self) -> u32 {
        self.rows.last().map_or(0, |r| r.round)
    }

    pub fn bit_total(&self) -> u64 {
        self.outcome.metrics.bit_total
    }

    /// Nodes (failed or not) that never got the rumor.
    pub fn uninformed(&self) -> u64 {
        self.meta.n as u64 - self.outcome.informed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_through_strings() {
        let all = [
            PhaseLabel::Phase0,
            PhaseLabel::Dummy(11),
            PhaseLabel::Sub(3),
            PhaseLabel::Phase3,
            PhaseLabel::Phase4,
            PhaseLabel::Push,
            PhaseLabel::Pull,
            PhaseLabel::PushPull,
        ];
        for l in all {
            assert_eq!(l.to_string().parse::<PhaseLabel>().unwrap(), l);
        }
        assert!("phase9".parse::<PhaseLabel>().is_err());
        assert_eq!(PhaseLabel::Sub(2).to_string(), "phase2.2");
    }

    #[test]
    fn labels_order_by_schedule_position() {
        assert!(PhaseLabel::Phase0 < PhaseLabel::Sub(1));
        assert!(PhaseLabel::Sub(5) < PhaseLabel::Phase3);
        assert!(PhaseLabel::Phase3 < PhaseLabel::Phase4);
    }
}
