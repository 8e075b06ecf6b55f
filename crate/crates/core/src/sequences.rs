//! Edge-length schedules, per-batch sample counts and batch budgets.
//!
//! Two logarithm conventions are in play. The per-cube sample count
//! `n_m = 16 log T / r_m^2` uses the natural log: the concentration step needs
//! `exp(-x^2/2)` tails to line up with `T^-8`. The exponent algebra of the
//! combined sequence (`2^{c_1 (d+2)} = (T / log T)^{...}`) needs base 2 for
//! the outer log. Both are carried in [`LogConventions`] and can be swapped
//! for sensitivity runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MAX_DEPTH;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogConventions {
    /// Base of `log T` wherever it stands for the confidence level
    /// (sample counts, `T / log T`, `log log T`).
    pub samples: LogBase,
    /// Base of the outer log in exponent formulas (`c_1`, doubling `B*`).
    pub exponents: LogBase,
}

impl Default for LogConventions {
    fn default() -> Self {
        Self {
            samples: LogBase::Natural,
            exponents: LogBase::Two,
        }
    }
}

/// Parameters of the combined edge-length sequence.
///
/// `c_1 = (dz+1) / ((d+2)(dz+2)) * log(T / log T)` and `c_{i+1} = eta c_i`
/// with `eta = (d+1-dz)/(d+2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AceParams {
    d: u32,
    dz: f64,
    horizon: u64,
    #[serde(default)]
    conventions: LogConventions,
}

impl AceParams {
    pub fn new(d: u32, dz: f64, horizon: u64) -> Result<Self> {
        Self::with_conventions(d, dz, horizon, LogConventions::default())
    }

    pub fn with_conventions(
        d: u32,
        dz: f64,
        horizon: u64,
        conventions: LogConventions,
    ) -> Result<Self> {
        let p = Self {
            d,
            dz,
            horizon,
            conventions,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        validate_dims(self.d, self.dz)?;
        if self.horizon < 2 {
            return Err(Error::InvalidHorizon(self.horizon));
        }
        if self.c1() <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "c1 = {} is not positive for T={}",
                self.c1(),
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn conventions(&self) -> LogConventions {
        self.conventions
    }

    pub fn eta(&self) -> f64 {
        eta(self.d, self.dz)
    }

    pub fn c1(&self) -> f64 {
        let d = f64::from(self.d);
        let t = self.horizon as f64;
        let ratio = t / self.conventions.samples.log(t);
        (self.dz + 1.0) / ((d + 2.0) * (self.dz + 2.0)) * self.conventions.exponents.log(ratio)
    }

    /// `c_i = c_1 eta^(i-1)` for `i >= 1`.
    pub fn c_increment(&self, i: u32) -> f64 {
        assert!(i >= 1, "batch index starts at 1");
        self.c1() * self.eta().powi(i as i32 - 1)
    }

    /// `sum_{i<=m} c_i`, zero for `m = 0`.
    pub fn partial_sum(&self, m: u32) -> f64 {
        (1..=m).map(|i| self.c_increment(i)).sum()
    }

    /// `c_1 / (1 - eta)`, the limit of the partial sums.
    pub fn exponent_limit(&self) -> f64 {
        self.c1() / (1.0 - self.eta())
    }
}

pub(crate) fn validate_dims(d: u32, dz: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    if !(dz >= 0.0 && dz < f64::from(d) + 1.0) {
        return Err(Error::InvalidParams(format!(
            "zooming dimension {dz} outside [0, d+1) for d={d}"
        )));
    }
    Ok(())
}

pub fn eta(d: u32, dz: f64) -> f64 {
    (f64::from(d) + 1.0 - dz) / (f64::from(d) + 2.0)
}

/// Pre-skip rounded sequence exponents: `floor(S_1), ceil(S_1), floor(S_2), ...`.
pub fn rounded_exponents_from_sums(sums: &[f64]) -> Vec<u32> {
    sums.iter()
        .flat_map(|s| [s.floor() as u32, s.ceil() as u32])
        .collect()
}

/// Skips batch `m` when some earlier edge length is no larger than `r_m`,
/// leaving a strictly decreasing sequence.
pub fn apply_skip_rule(exponents: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::new();
    for &e in exponents {
        if out.last().is_none_or(|&last| e > last) {
            out.push(e);
        }
    }
    out
}

// Partial sums converge geometrically; past this many terms the rounded
// exponents cannot change any more for any admissible eta.
const ROUNDED_TERMS_CAP: u32 = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EdgeLengthSchedule {
    /// `r_m = 2^(-m+1)`.
    Doubling,
    /// Raw combined sequence `r_m = 2^(-sum c_i)`; analysis only.
    Ace(AceParams),
    /// Floor/ceil rounded combined sequence with the skip rule applied.
    RoundedAce(AceParams),
    /// Explicit edge lengths; skip rule applied on construction.
    Custom { edges: Vec<f64> },
}

impl EdgeLengthSchedule {
    pub fn custom(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyInput("custom schedule"));
        }
        if let Some(r) = edges.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::InvalidParams(format!(
                "edge length {r} outside (0,1]"
            )));
        }
        let mut kept: Vec<f64> = Vec::new();
        for r in edges {
            if kept.last().is_none_or(|&last| r < last) {
                kept.push(r);
            }
        }
        Ok(Self::Custom { edges: kept })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Doubling => "doubling",
            Self::Ace(_) => "ace",
            Self::RoundedAce(_) => "rounded-ace",
            Self::Custom { .. } => "custom",
        }
    }

    /// Emitted edge lengths after skip filtering, truncated to `max_len`.
    ///
    /// Rounded-ACE and custom schedules are finite; doubling and raw ACE are
    /// cut at `max_len`.
    pub fn edges(&self, max_len: usize) -> Vec<f64> {
        match self {
            Self::Doubling => (1..=max_len as u32)
                .map(|m| (-(f64::from(m) - 1.0)).exp2())
                .collect(),
            Self::Ace(p) => (1..=max_len as u32)
                .map(|m| (-p.partial_sum(m)).exp2())
                .collect(),
            Self::RoundedAce(p) => rounded_ace_exponents(p)
                .into_iter()
                .take(max_len)
                .map(|e| (-f64::from(e)).exp2())
                .collect(),
            Self::Custom { edges } => edges.iter().copied().take(max_len).collect(),
        }
    }

    /// `r_m` for `m >= 1`, or `None` when a finite schedule has ended.
    pub fn edge_length(&self, m: u32) -> Option<f64> {
        assert!(m >= 1, "batch index starts at 1");
        match self {
            Self::Doubling => Some((-(f64::from(m) - 1.0)).exp2()),
            Self::Ace(p) => Some((-p.partial_sum(m)).exp2()),
            Self::RoundedAce(p) => rounded_ace_exponents(p)
                .get(m as usize - 1)
                .map(|&e| (-f64::from(e)).exp2()),
            Self::Custom { edges } => edges.get(m as usize - 1).copied(),
        }
    }

    /// Dyadic depths `-log2 r_m` for the engine.
    ///
    /// Fails with a schedule mismatch when some `r_m` is not `2^-integer`,
    /// which makes consecutive partition factors non-integral.
    pub fn depths(&self, max_len: usize) -> Result<Vec<u32>> {
        let max_len = max_len.min(MAX_DEPTH as usize + 1);
        match self {
            Self::Doubling => Ok((0..max_len as u32).collect()),
            Self::RoundedAce(p) => Ok(rounded_ace_exponents(p).into_iter().take(max_len).collect()),
            Self::Ace(_) => Err(Error::ScheduleMismatch(
                "raw ACE edge lengths are not dyadic; use rounded-ace".into(),
            )),
            Self::Custom { edges } => edges
                .iter()
                .take(max_len)
                .map(|&r| {
                    let e = -r.log2();
                    let k = e.round();
                    if (e - k).abs() > 1e-9 || k > f64::from(MAX_DEPTH) {
                        Err(Error::ScheduleMismatch(format!(
                            "edge length {r} is not 2^-k with k <= {MAX_DEPTH}"
                        )))
                    } else {
                        Ok(k as u32)
                    }
                })
                .collect(),
        }
    }
}

fn rounded_ace_exponents(p: &AceParams) -> Vec<u32> {
    let mut sums = Vec::new();
    let mut s = 0.0;
    let limit = p.exponent_limit();
    for i in 1..=ROUNDED_TERMS_CAP {
        s += p.c_increment(i);
        sums.push(s);
        if limit - s < 1e-12 {
            break;
        }
    }
    apply_skip_rule(&rounded_exponents_from_sums(&sums))
}

/// `ceil(c log T / r^2)`, at least 1.
pub fn samples_per_cube_with(r: f64, horizon: u64, constant: f64, base: LogBase) -> Result<u64> {
    if horizon < 2 {
        return Err(Error::InvalidHorizon(horizon));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "edge length {r} outside (0,1]"
        )));
    }
    let n = (constant * base.log(horizon as f64) / (r * r)).ceil();
    Ok((n as u64).max(1))
}

/// `n_m = ceil(16 ln T / r_m^2)`.
pub fn samples_per_cube(r: f64, horizon: u64) -> Result<u64> {
    samples_per_cube_with(r, horizon, 16.0, LogBase::Natural)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Doubling,
    Ace,
    RoundedAce,
}

/// Real-valued `B*` behind [`batch_budget`].
///
/// Doubling: `1 + log2(T / ln T) / (dz + 2)`. Combined (raw and rounded):
/// `(log log T - log(dz + 2)) / log((d+2)/(d+1-dz))`.
pub fn batch_budget_star(
    kind: ScheduleKind,
    d: u32,
    dz: f64,
    horizon: u64,
    conventions: LogConventions,
) -> Result<f64> {
    validate_dims(d, dz)?;
    if horizon < 2 {
        return Err(Error::InvalidHorizon(horizon));
    }
    let t = horizon as f64;
    let log_t = conventions.samples.log(t);
    Ok(match kind {
        ScheduleKind::Doubling => 1.0 + conventions.exponents.log(t / log_t) / (dz + 2.0),
        ScheduleKind::Ace | ScheduleKind::RoundedAce => {
            (log_t.ln() - (dz + 2.0).ln()) / (1.0 / eta(d, dz)).ln()
        }
    })
}

/// Communication rounds sufficient for the optimal rate: `ceil(B*) + 1`,
/// or `ceil(2 B*) + 1` for the rounded sequence. Negative `B*` counts as 0.
pub fn batch_budget(
    kind: ScheduleKind,
    d: u32,
    dz: f64,
    horizon: u64,
    conventions: LogConventions,
) -> Result<u64> {
    let b = batch_budget_star(kind, d, dz, horizon, conventions)?.max(0.0);
    Ok(match kind {
        ScheduleKind::RoundedAce => (2.0 * b).ceil() as u64 + 1,
        _ => b.ceil() as u64 + 1,
    })
}

/// Doubling budget written in terms of `log(T / log T)` directly.
pub fn doubling_budget_from_log_ratio(log_ratio: f64, dz: f64) -> u64 {
    let b = 1.0 + log_ratio / (dz + 2.0);
    b.max(0.0).ceil() as u64 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn geometric_increments() {
        let p = AceParams::new(2, 0.0, 80_000).unwrap();
        let ratio = p.c_increment(2) / p.c_increment(1);
        assert!(close(ratio, p.eta(), 1e-15));
        assert_eq!(p.eta(), 0.75);
    }

    #[test]
    fn c_increment_geometric_decay() {
        let p = AceParams::new(2, 1.0, 80_000).unwrap();
        assert_eq!(p.eta(), 0.5);
        assert!(close(p.c_increment(3), p.c1() * 0.25, 1e-15));
    }

    #[test]
    fn c1_two_peak_setting() {
        // (1/8) log2(80000 / ln 80000), evaluated independently.
        let t: f64 = 80_000.0;
        let expected = (t / t.ln()).log2() / 8.0;
        let p = AceParams::new(2, 0.0, 80_000).unwrap();
        assert!(close(p.c1(), expected, 1e-12));
        assert!(close(p.c1(), 1.598_845_833, 1e-9), "c1 = {}", p.c1());
    }

    #[test]
    fn doubling_edges() {
        let s = EdgeLengthSchedule::Doubling;
        assert_eq!(s.edge_length(3), Some(0.25));
        assert_eq!(s.depths(4).unwrap(), vec![0, 1, 2, 3]);
        let e = s.edges(20);
        assert!(e.windows(2).all(|w| w[0] / w[1] == 2.0));
    }

    #[test]
    fn rounded_from_hand_sums() {
        let pre = rounded_exponents_from_sums(&[1.6, 2.8, 3.7]);
        assert_eq!(pre, vec![1, 2, 2, 3, 3, 4]);
        assert_eq!(apply_skip_rule(&pre), vec![1, 2, 3, 4]);
    }

    #[test]
    fn integer_partial_sum_collapses() {
        let pre = rounded_exponents_from_sums(&[2.0, 2.5]);
        assert_eq!(pre, vec![2, 2, 2, 3]);
        assert_eq!(apply_skip_rule(&pre), vec![2, 3]);
    }

    #[test]
    fn rounded_ace_two_peak_schedule() {
        // c1 ~ 1.599, eta = 3/4: sums 1.60, 2.80, 3.70, 4.37, ... -> 6.40.
        let p = AceParams::new(2, 0.0, 80_000).unwrap();
        let s = EdgeLengthSchedule::RoundedAce(p);
        assert_eq!(s.depths(100).unwrap(), vec![1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(s.edge_length(1), Some(0.5));
        assert_eq!(s.edge_length(8), None);
    }

    #[test]
    fn raw_ace_limit() {
        let p = AceParams::new(3, 1.0, 1_000_000).unwrap();
        let s = EdgeLengthSchedule::Ace(p);
        let r = s.edge_length(400).unwrap();
        assert!(close(-r.log2(), p.c1() / (1.0 - p.eta()), 1e-9));
        assert!(s.depths(3).is_err());
    }

    #[test]
    fn custom_schedule_checks() {
        let s = EdgeLengthSchedule::custom(vec![0.5, 0.5, 0.25, 0.125]).unwrap();
        assert_eq!(s.depths(10).unwrap(), vec![1, 2, 3]);
        let bad = EdgeLengthSchedule::custom(vec![0.5, 0.3]).unwrap();
        assert!(matches!(bad.depths(10), Err(Error::ScheduleMismatch(_))));
        assert!(EdgeLengthSchedule::custom(vec![]).is_err());
        assert!(EdgeLengthSchedule::custom(vec![1.5]).is_err());
    }

    #[test]
    fn sample_counts() {
        // 16 ln 8 = 33.27
        assert_eq!(samples_per_cube(1.0, 8).unwrap(), 34);
        // 16 * 16 * ln 80000 = 2890.18
        assert_eq!(samples_per_cube(0.25, 80_000).unwrap(), 2891);
        let t = 5_000;
        let base = 16.0 * (t as f64).ln();
        assert_eq!(
            samples_per_cube(0.5, t).unwrap(),
            (4.0 * base).ceil() as u64
        );
        assert!(matches!(
            samples_per_cube(1.0, 1),
            Err(Error::InvalidHorizon(1))
        ));
    }

    #[test]
    fn doubling_budget_plug_in() {
        assert_eq!(doubling_budget_from_log_ratio(20.0, 0.0), 12);
    }

    #[test]
    fn ace_budget_two_peak() {
        let conv = LogConventions::default();
        let b = batch_budget(ScheduleKind::Ace, 2, 0.0, 80_000, conv).unwrap();
        // (ln ln 80000 - ln 2) / ln(4/3) = 6.02 -> 7 + 1
        let star = ((80_000f64).ln().ln() - 2f64.ln()) / (4.0f64 / 3.0).ln();
        assert_eq!(b, star.ceil() as u64 + 1);
        assert_eq!(b, 8);
        assert!(b <= 16);
        let r = batch_budget(ScheduleKind::RoundedAce, 2, 0.0, 80_000, conv).unwrap();
        assert_eq!(r, (2.0 * star).ceil() as u64 + 1);
    }

    #[test]
    fn budget_rejects_bad_dz() {
        let conv = LogConventions::default();
        assert!(batch_budget(ScheduleKind::Ace, 2, 3.0, 1000, conv).is_err());
        assert!(AceParams::new(2, 3.5, 1000).is_err());
        assert!(AceParams::new(0, 0.0, 1000).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn telescoping_identity(d in 1u32..6, dz_frac in 0.0f64..0.999, log_t in 3.0f64..30.0) {
                let dz = dz_frac * f64::from(d);
                let t = (log_t.exp2()) as u64;
                let p = AceParams::new(d, dz, t).unwrap();
                let c1d = p.c1() * (f64::from(d) + 2.0);
                for m in 1..=50 {
                    let lhs = p.partial_sum(m - 1) * (dz + 1.0) + p.c_increment(m) * (f64::from(d) + 2.0);
                    prop_assert!(close(lhs, c1d, 1e-9));
                }
            }

            #[test]
            fn rounded_sandwich(d in 1u32..6, dz_frac in 0.0f64..0.999, log_t in 4.0f64..40.0) {
                let dz = dz_frac * f64::from(d);
                let p = AceParams::new(d, dz, log_t.exp2() as u64).unwrap();
                for k in 1..=30u32 {
                    let s = p.partial_sum(k);
                    let raw = (-s).exp2();
                    let odd = (-s.floor()).exp2();
                    let even = (-s.ceil()).exp2();
                    prop_assert!(odd >= raw);
                    prop_assert!(even <= raw);
                    if s.fract() != 0.0 {
                        prop_assert_eq!(odd / even, 2.0);
                    }
                }
                let depths = EdgeLengthSchedule::RoundedAce(p).depths(1000).unwrap();
                prop_assert!(depths.windows(2).all(|w| w[1] > w[0]));
            }

            #[test]
            fn samples_monotone(e1 in 0u32..12, e2 in 0u32..12, t1 in 2u64..1_000_000, t2 in 2u64..1_000_000) {
                let (r_big, r_small) = ((-f64::from(e1.min(e2))).exp2(), (-f64::from(e1.max(e2))).exp2());
                let (t_lo, t_hi) = (t1.min(t2), t1.max(t2));
                prop_assert!(samples_per_cube(r_small, t_lo).unwrap() >= samples_per_cube(r_big, t_lo).unwrap());
                prop_assert!(samples_per_cube(r_big, t_hi).unwrap() >= samples_per_cube(r_big, t_lo).unwrap());
            }

            #[test]
            fn budget_monotone(t1 in 16u64..10_000_000, t2 in 16u64..10_000_000, d in 1u32..5) {
                let (lo, hi) = (t1.min(t2), t1.max(t2));
                let conv = LogConventions::default();
                for kind in [ScheduleKind::Doubling, ScheduleKind::Ace, ScheduleKind::RoundedAce] {
                    prop_assert!(batch_budget(kind, d, 0.0, hi, conv).unwrap() >= batch_budget(kind, d, 0.0, lo, conv).unwrap());
                }
            }
        }
    }
}
