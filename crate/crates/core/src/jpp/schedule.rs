//! Per-node phase timetables.
//!
//! With exact knowledge of `n` every node shares one timetable. With only an
//! estimate `n_v`, each node stretches its phases by powers of `ρ` and idles
//! in dummy intervals between them, so that no node enters a phase before the
//! slowest node has left the previous one.

use std::collections::BTreeMap;

use crate::error::ConfigError;
use crate::model::{loglog2_ceil, sqrt_log2_ceil, PhaseLengths, SimConfig};
use crate::rng::RngStream;
use crate::trace::PhaseLabel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub label: PhaseLabel,
    /// First round of the segment (rounds count from 1).
    pub start: u64,
    pub len: u64,
}

impl Segment {
    pub fn last_round(&self) -> u64 {
        self.start + self.len - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Timetable {
    pub segments: Vec<Segment>,
}

impl Timetable {
    fn build(parts: &[(PhaseLabel, u64)]) -> Self {
        let mut start = 1;
        let mut segments = Vec::with_capacity(parts.len());
        for &(label, len) in parts {
            if len == 0 {
                continue;
            }
            segments.push(Segment { label, start, len });
            start += len;
        }
        Timetable { segments }
    }

    pub fn exact(lengths: &PhaseLengths) -> Self {
        let mut parts = vec![(PhaseLabel::Phase0, lengths.phase0 as u64)];
        for k in 1..=lengths.num_subphases as u8 {
            parts.push((PhaseLabel::Sub(k), lengths.subphase as u64));
        }
        parts.push((PhaseLabel::Phase3, lengths.phase3 as u64));
        parts.push((PhaseLabel::Phase4, lengths.phase4 as u64));
        Timetable::build(&parts)
    }

    /// Non-exact timetable for a node with `⌈√log2 n_v⌉ = sqrt_log` and
    /// `⌈log2 log2 n_v⌉ = loglog`.
    pub fn stretched(c: u32, rho: u32, sqrt_log: u32, loglog: u32) -> Self {
        let unit = c as u64 * sqrt_log.max(1) as u64;
        let rho = rho as u64;
        let scaled = |k: u32| rho.pow(k) * unit;
        let mut parts =
            vec![(PhaseLabel::Phase0, (c as u64 * loglog as u64).max(1)), (PhaseLabel::Dummy(1), scaled(1))];
        for i in 1..=5u32 {
            parts.push((PhaseLabel::Sub(i as u8), scaled(2 * i)));
            parts.push((PhaseLabel::Dummy(2 * i as u8 + 1), scaled(2 * i + 1)));
        }
        parts.push((PhaseLabel::Phase3, scaled(12)));
        parts.push((PhaseLabel::Dummy(13), scaled(13)));
        parts.push((PhaseLabel::Phase4, scaled(14)));
        Timetable::build(&parts)
    }

    pub fn total(&self) -> u64 {
        self.segments.last().map_or(0, |s| s.start + s.len - 1)
    }

    /// Segment active in `round`, with the 1-based round index inside it.
    pub fn at(&self, round: u64) -> Option<(Segment, u64)> {
        // segments are few; a linear scan beats anything clever
        self.segments.iter().find(|s| s.start <= round && round <= s.last_round()).map(|s| (*s, round - s.start + 1))
    }

    pub fn segment(&self, label: PhaseLabel) -> Option<Segment> {
        self.segments.iter().copied().find(|s| s.label == label)
    }
}

/// Estimate class of a node: the rounded logs its timetable depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct EstimateClass {
    pub sqrt_log: u32,
    pub loglog: u32,
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub classes: Vec<EstimateClass>,
    pub tables: Vec<Timetable>,
    /// Index into `tables` per node.
    pub node_table: Vec<u16>,
    /// `log2 n_v` per node.
    pub log2_estimates: Vec<f64>,
}

impl Schedule {
    pub fn table_of(&self, v: usize) -> &Timetable {
        &self.tables[self.node_table[v] as usize]
    }

    pub fn total_rounds(&self) -> u64 {
        self.tables.iter().map(Timetable::total).max().unwrap_or(0)
    }

    pub fn is_uniform(&self) -> bool {
        self.tables.len() == 1
    }
}

/// Draws `log2 n_v` for every node uniformly from
/// `[log2 n / spread, log2 n · spread]` (never below 1).
pub fn draw_estimates(cfg: &SimConfig, rng: &mut RngStream) -> Vec<f64> {
    let l = (cfg.n as f64).log2();
    let lo = (l / cfg.estimate_spread).max(1.0);
    let hi = (l * cfg.estimate_spread).max(lo);
    (0..cfg.n).map(|_| lo + (hi - lo) * rng.unit()).collect()
}

/// Builds the timetable of every node. `log2_estimates` is ignored unless
/// `cfg.non_exact`.
pub fn compute_schedule(cfg: &SimConfig, log2_estimates: &[f64]) -> Result<Schedule, ConfigError> {
    if !cfg.non_exact {
        let lengths = PhaseLengths::from_estimate(cfg.c, cfg.n as f64);
        let l = (cfg.n as f64).log2();
        return Ok(Schedule {
            classes: vec![EstimateClass { sqrt_log: sqrt_log2_ceil(cfg.n as f64), loglog: loglog2_ceil(cfg.n as f64) }],
            tables: vec![Timetable::exact(&lengths)],
            node_table: vec![0; cfg.n as usize],
            log2_estimates: vec![l; cfg.n as usize],
        });
    }
    if cfg.rho < 2 {
        return Err(ConfigError::RhoTooSmall(cfg.rho));
    }
    let mut index: BTreeMap<EstimateClass, u16> = BTreeMap::new();
    let mut node_table = Vec::with_capacity(log2_estimates.len());
    for &le in log2_estimates {
        let nv = le.exp2();
        let class = EstimateClass { sqrt_log: sqrt_log2_ceil(nv), loglog: loglog2_ceil(nv) };
        let next = index.len() as u16;
        node_table.push(*index.entry(class).or_insert(next));
    }
    let mut classes = vec![EstimateClass { sqrt_log: 0, loglog: 0 }; index.len()];
    for (class, i) in &index {
        classes[*i as usize] = *class;
    }
    let tables = classes.iter().map(|k| Timetable::stretched(cfg.c, cfg.rho, k.sqrt_log, k.loglog)).collect();
    Ok(Schedule { classes, tables, node_table, log2_estimates: log2_estimates.to_vec() })
}

/// Synchronisation check between two consecutive working phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Handover {
    pub from: PhaseLabel,
    pub to: PhaseLabel,
    /// Last round any node spends in `from`.
    pub max_exit: u64,
    /// First round any node spends in `to`.
    pub min_entry: u64,
    /// Rounds during which every node is inside `to` simultaneously.
    pub common_window: u64,
}

impl Handover {
    pub fn separated(&self) -> bool {
        self.min_entry > self.max_exit
    }
}

const WORKING: [PhaseLabel; 8] = [
    PhaseLabel::Phase0,
    PhaseLabel::Sub(1),
    PhaseLabel::Sub(2),
    PhaseLabel::Sub(3),
    PhaseLabel::Sub(4),
    PhaseLabel::Sub(5),
    PhaseLabel::Phase3,
    PhaseLabel::Phase4,
];

/// Checks every working-phase handover over a set of timetables.
pub fn handovers(tables: &[Timetable]) -> Vec<Handover> {
    WORKING
        .windows(2)
        .map(|w| {
            let (from, to) = (w[0], w[1]);
            let prev: Vec<Segment> = tables.iter().filter_map(|t| t.segment(from)).collect();
            let next: Vec<Segment> = tables.iter().filter_map(|t| t.segment(to)).collect();
            let max_exit = prev.iter().map(Segment::last_round).max().unwrap_or(0);
            let min_entry = next.iter().map(|s| s.start).min().unwrap_or(0);
            let latest_entry = next.iter().map(|s| s.start).max().unwrap_or(0);
            let earliest_exit = next.iter().map(Segment::last_round).min().unwrap_or(0);
            let common_window = (earliest_exit + 1).saturating_sub(latest_entry);
            Handover { from, to, max_exit, min_entry, common_window }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;

    fn non_exact(n: u32, rho: u32, c: u32) -> SimConfig {
        SimConfig { non_exact: true, rho, c, ..SimConfig::new(n, Mode::Jpp, 0) }
    }

    #[test]
    fn exact_timetable_is_contiguous() {
        let cfg = SimConfig::new(65536, Mode::Jpp, 0);
        let s = compute_schedule(&cfg, &[]).unwrap();
        assert!(s.is_uniform());
        let t = &s.tables[0];
        assert_eq!(t.segments.len(), 8);
        assert_eq!(t.total(), 16 + 7 * 16);
        assert_eq!(t.at(1).unwrap().0.label, PhaseLabel::Phase0);
        assert_eq!(t.at(17).unwrap(), (t.segments[1], 1));
        assert_eq!(t.at(t.total()).unwrap().0.label, PhaseLabel::Phase4);
        assert!(t.at(t.total() + 1).is_none());
    }

    #[test]
    fn all_estimates_equal_gives_identical_timetables() {
        let cfg = non_exact(1 << 16, 4, 1);
        let est = vec![16.0; 32];
        let s = compute_schedule(&cfg, &est).unwrap();
        assert!(s.is_uniform());
        for h in handovers(&s.tables) {
            assert!(h.separated());
            let seg = s.tables[0].segment(h.to).unwrap();
            assert_eq!(h.common_window, seg.len);
        }
    }

    #[test]
    fn stretched_lengths_follow_powers_of_rho() {
        let t = Timetable::stretched(2, 3, 4, 4);
        let unit = 8u64;
        assert_eq!(t.segment(PhaseLabel::Dummy(1)).unwrap().len, 3 * unit);
        for i in 1..=5u32 {
            assert_eq!(t.segment(PhaseLabel::Sub(i as u8)).unwrap().len, 3u64.pow(2 * i) * unit);
            assert_eq!(t.segment(PhaseLabel::Dummy(2 * i as u8 + 1)).unwrap().len, 3u64.pow(2 * i + 1) * unit);
        }
        assert_eq!(t.segment(PhaseLabel::Phase3).unwrap().len, 3u64.pow(12) * unit);
        assert_eq!(t.segment(PhaseLabel::Dummy(13)).unwrap().len, 3u64.pow(13) * unit);
        assert_eq!(t.segment(PhaseLabel::Phase4).unwrap().len, 3u64.pow(14) * unit);
        assert_eq!(t.segment(PhaseLabel::Phase0).unwrap().len, 8);
    }

    #[test]
    fn spread_two_rho_four_stays_synchronised() {
        // Two estimate values at the ends of a spread-2 window around
        // log2 n = 16: log2 n_v ∈ {8, 32}.
        let cfg = non_exact(1 << 16, 4, 1);
        let s = compute_schedule(&cfg, &[8.0, 32.0]).unwrap();
        assert_eq!(s.tables.len(), 2);
        for h in handovers(&s.tables) {
            assert!(h.separated(), "{h:?}");
            assert!(h.common_window >= cfg.c as u64 * 4, "{h:?}");
        }
    }

    #[test]
    fn rho_two_can_overlap() {
        // ρ = 2 is accepted but too small to separate a spread-4 window.
        let cfg = non_exact(1 << 16, 2, 1);
        let s = compute_schedule(&cfg, &[4.0, 64.0]).unwrap();
        assert!(handovers(&s.tables).iter().any(|h| !h.separated()));
    }

    #[test]
    fn rho_one_rejected() {
        let cfg = non_exact(1024, 1, 1);
        assert_eq!(compute_schedule(&cfg, &[10.0]).unwrap_err(), ConfigError::RhoTooSmall(1));
    }

    #[test]
    fn estimates_stay_in_window() {
        let mut cfg = non_exact(1 << 16, 4, 1);
        cfg.estimate_spread = 2.0;
        let est = draw_estimates(&cfg, &mut RngStream::new(5, "est"));
        assert!(est.iter().all(|&e| (8.0..=32.0).contains(&e)));
    }
}
