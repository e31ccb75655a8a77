//! Node identities, roles, run configuration and the base-2 log conventions
//! every protocol shares.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Dense node address in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Connector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Jpp,
    Push,
    Pull,
    #[serde(rename = "pushpull")]
    PushPullMedian,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Jpp => "jpp",
            Mode::Push => "push",
            Mode::Pull => "pull",
            Mode::PushPullMedian => "pushpull",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jpp" => Ok(Mode::Jpp),
            "push" => Ok(Mode::Push),
            "pull" => Ok(Mode::Pull),
            "pushpull" | "push-pull" | "pushpull-median" => Ok(Mode::PushPullMedian),
            other => Err(ConfigError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureTiming {
    None,
    AtStart,
    PerRound,
}

impl FromStr for FailureTiming {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FailureTiming::None),
            "start" | "at-start" => Ok(FailureTiming::AtStart),
            "per-round" => Ok(FailureTiming::PerRound),
            other => Err(ConfigError::UnknownFailureTiming(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartNode {
    Random,
    Fixed(NodeId),
}

impl FromStr for StartNode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "random" {
            return Ok(StartNode::Random);
        }
        s.parse::<u32>().map(|id| StartNode::Fixed(NodeId(id))).map_err(|_| ConfigError::BadStartNode(s.to_string()))
    }
}

pub const DEFAULT_C: u32 = 4;
pub const DEFAULT_B: u32 = 8;
pub const DEFAULT_CTR_MAX_ADD: u32 = 2;
pub const DEFAULT_RHO: u32 = 2;
pub const DEFAULT_ESTIMATE_SPREAD: f64 = 2.0;

/// Every parameter of a single run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u32,
    pub c: u32,
    pub b: u32,
    pub ctr_max_add: u32,
    pub failure_scale: f64,
    pub failure_timing: FailureTiming,
    pub mode: Mode,
    pub non_exact: bool,
    pub rho: u32,
    pub estimate_spread: f64,
    pub seed: u64,
    pub start_node: StartNode,
}

impl SimConfig {
    pub fn new(n: u32, mode: Mode, seed: u64) -> Self {
        SimConfig {
            n,
            c: DEFAULT_C,
            b: DEFAULT_B,
            ctr_max_add: DEFAULT_CTR_MAX_ADD,
            failure_scale: 0.0,
            failure_timing: FailureTiming::None,
            mode,
            non_exact: false,
            rho: DEFAULT_RHO,
            estimate_spread: DEFAULT_ESTIMATE_SPREAD,
            seed,
            start_node: StartNode::Fixed(NodeId(0)),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(ConfigError::TooFewNodes(self.n));
        }
        if self.c == 0 {
            return Err(ConfigError::ZeroPhaseConstant);
        }
        if self.b == 0 {
            return Err(ConfigError::ZeroRumorBits);
        }
        if !(self.failure_scale.is_finite() && self.failure_scale >= 0.0) {
            return Err(ConfigError::BadFailureScale(self.failure_scale));
        }
        if self.non_exact {
            if self.rho < 2 {
                return Err(ConfigError::RhoTooSmall(self.rho));
            }
            if !(self.estimate_spread.is_finite() && self.estimate_spread >= 1.0) {
                return Err(ConfigError::BadEstimateSpread(self.estimate_spread));
            }
        }
        if let StartNode::Fixed(id) = self.start_node {
            if id.0 >= self.n {
                return Err(ConfigError::StartNodeOutOfRange { start: id.0, n: self.n });
            }
        }
        Ok(())
    }

    /// Per-node failure probability `min(1, f / 2^⌈√log2 n⌉)`.
    pub fn failure_probability(&self) -> f64 {
        let denom = (sqrt_log2_ceil(self.n as f64) as f64).exp2();
        (self.failure_scale / denom).min(1.0)
    }

    /// `⌈log2 log2 n⌉ + ctr_max_add`, at least 1.
    pub fn ctr_max(&self) -> u32 {
        ctr_max_for(self.n as f64, self.ctr_max_add)
    }

    /// Round cap used by the baselines: `10·⌈log2 n⌉`.
    pub fn baseline_cap(&self) -> u32 {
        10 * log2_ceil(self.n as f64)
    }
}

pub(crate) fn ctr_max_for(n: f64, add: u32) -> u32 {
    (loglog2_ceil(n) + add).max(1)
}

// The three integer-rounded logarithms used everywhere. A small epsilon keeps
// exact powers of two from rounding up through floating-point noise.
const EPS: f64 = 1e-9;

/// `⌈log2 x⌉` for `x ≥ 1`.
pub fn log2_ceil(x: f64) -> u32 {
    let l = x.log2();
    if l <= 0.0 {
        0
    } else {
        (l - EPS).ceil() as u32
    }
}

/// `⌈√(log2 x)⌉`.
pub fn sqrt_log2_ceil(x: f64) -> u32 {
    let l = x.log2();
    if l <= 0.0 {
        0
    } else {
        (l.sqrt() - EPS).ceil() as u32
    }
}

/// `⌈log2 log2 x⌉`, zero when `log2 x ≤ 1`.
pub fn loglog2_ceil(x: f64) -> u32 {
    let l = x.log2();
    if l <= 1.0 {
        0
    } else {
        (l.log2() - EPS).ceil() as u32
    }
}

/// Phase lengths of the exact-knowledge schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseLengths {
    pub phase0: u32,
    pub subphase: u32,
    pub num_subphases: u32,
    pub phase3: u32,
    pub phase4: u32,
}

impl PhaseLengths {
    pub const NUM_SUBPHASES: u32 = 5;

    pub fn from_estimate(c: u32, n_estimate: f64) -> Self {
        let sqrt_log = sqrt_log2_ceil(n_estimate).max(1);
        let per = c * sqrt_log;
        PhaseLengths {
            phase0: (c * loglog2_ceil(n_estimate)).max(1),
            subphase: per,
            num_subphases: Self::NUM_SUBPHASES,
            phase3: per,
            phase4: per,
        }
    }

    pub fn total(&self) -> u32 {
        self.phase0 + self.num_subphases * self.subphase + self.phase3 + self.phase4
    }
}

pub fn derive_phase_lengths(cfg: &SimConfig) -> PhaseLengths {
    PhaseLengths::from_estimate(cfg.c, cfg.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: u32, c: u32) -> SimConfig {
        SimConfig { c, ..SimConfig::new(n, Mode::Jpp, 0) }
    }

    #[test]
    fn phase_lengths_hand_computed() {
        let l = derive_phase_lengths(&cfg(65536, 2));
        assert_eq!(l.subphase, 8);
        assert_eq!(l.phase0, 8);
        assert_eq!(l.num_subphases, 5);

        let l = derive_phase_lengths(&cfg(2, 1));
        assert_eq!(l.phase0, 1);
        assert_eq!(l.subphase, 1);

        let l = derive_phase_lengths(&cfg(1 << 25, 3));
        assert_eq!(l.subphase, 15);
        assert_eq!(l.phase3, 15);
        assert_eq!(l.phase4, 15);
        // ⌈log2 25⌉ = 5
        assert_eq!(l.phase0, 15);

        let l = derive_phase_lengths(&cfg(1 << 10, 1));
        // ⌈√10⌉ = 4, ⌈log2 10⌉ = 4
        assert_eq!((l.phase0, l.subphase), (4, 4));
    }

    #[test]
    fn rounded_logs_on_powers_of_two() {
        assert_eq!(log2_ceil(1024.0), 10);
        assert_eq!(log2_ceil(1025.0), 11);
        assert_eq!(sqrt_log2_ceil(65536.0), 4);
        assert_eq!(sqrt_log2_ceil(131072.0), 5);
        assert_eq!(loglog2_ceil(65536.0), 4);
        assert_eq!(loglog2_ceil(4.0), 1);
        assert_eq!(loglog2_ceil(2.0), 0);
    }

    #[test]
    fn failure_probability_clamps() {
        let mut c = cfg(1024, 4);
        c.failure_scale = 32.0;
        assert_eq!(c.failure_probability(), 1.0);
        c.failure_scale = 1.0;
        assert_eq!(c.failure_probability(), 1.0 / 16.0);
        c.failure_scale = 0.0;
        assert_eq!(c.failure_probability(), 0.0);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        assert!(cfg(1, 1).validate().is_err());
        let mut c = cfg(16, 1);
        c.non_exact = true;
        c.rho = 1;
        assert!(matches!(c.validate(), Err(ConfigError::RhoTooSmall(1))));
        c.rho = 2;
        assert!(c.validate().is_ok());
        c.start_node = StartNode::Fixed(NodeId(16));
        assert!(c.validate().is_err());
    }

    #[test]
    fn ctr_max_has_floor() {
        let mut c = cfg(2, 1);
        c.ctr_max_add = 0;
        assert_eq!(c.ctr_max(), 1);
        assert_eq!(cfg(65536, 1).ctr_max(), 6);
    }
}
