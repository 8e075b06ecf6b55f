//! Regret metrics, runtime checks of the concentration, survival and gap properties,
//! and evaluators for the closed-form upper and lower bounds.

use serde::Serialize;

use crate::engine::{BatchKind, RunTrace};
use crate::environments::{zooming_number, RewardInstance};
use crate::error::{Error, Result};
use crate::geometry::{edge_at_depth, StandardCube};
use crate::sequences::{eta, LogBase};

/// Prefix sums of `mu* - mean(x_t)`, using true means.
pub fn cumulative_regret(trace: &RunTrace, instance: &RewardInstance) -> Vec<f64> {
    let mut acc = 0.0;
    trace
        .pulls
        .iter()
        .map(|p| {
            acc += instance.gap(&p.arm);
            acc
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventViolation {
    pub batch: usize,
    pub cube: StandardCube,
    pub deviation: f64,
    pub allowed: f64,
}

/// Checks `|mean(x) - mu_hat_m(C)| <= r_m + sqrt(16 ln T / n_m)` for every
/// completed batch, active cube and `x` in the cube, through the cube's
/// extrema of the mean.
pub fn check_event_e(trace: &RunTrace, instance: &RewardInstance) -> Vec<EventViolation> {
    let ln_t = (trace.horizon as f64).ln();
    let mut out = Vec::new();
    for b in trace.completed_batches() {
        let allowed = b.edge + (16.0 * ln_t / b.samples as f64).sqrt();
        for (cube, &est) in b.active.iter().zip(&b.estimates) {
            let lo = instance.cube_min(cube).value;
            let hi = instance.cube_max(cube).value;
            let deviation = (hi - est).abs().max((est - lo).abs());
            if deviation > allowed {
                out.push(EventViolation {
                    batch: b.index,
                    cube: cube.clone(),
                    deviation,
                    allowed,
                });
            }
        }
    }
    out
}

/// True iff a cube holding an optimal arm enters and survives every
/// completed batch.
pub fn check_optimal_survival(trace: &RunTrace, instance: &RewardInstance) -> bool {
    let holds_opt = |c: &StandardCube| instance.x_star().iter().any(|x| c.contains(x));
    trace.completed_batches().all(|b| {
        b.active
            .iter()
            .any(|c| holds_opt(c) && !b.eliminated.contains(c))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapViolation {
    pub t: u64,
    pub batch: usize,
    pub gap: f64,
    pub bound: f64,
}

/// Pulls breaking `gap(x) <= 8 r_{m-1}`, with `r_0 = 1`. Cleanup pulls are
/// held to `8 r` of the last completed batch.
pub fn gap_violations(trace: &RunTrace, instance: &RewardInstance) -> Vec<GapViolation> {
    let mut out = Vec::new();
    let mut prev_edge = 1.0;
    let mut last_completed = 1.0;
    for b in &trace.batches {
        let bound = match b.kind {
            BatchKind::Cleanup => 8.0 * last_completed,
            _ => 8.0 * prev_edge,
        };
        for p in &trace.pulls[(b.first_t - 1) as usize..b.last_t as usize] {
            let gap = instance.gap(&p.arm);
            if gap > bound {
                out.push(GapViolation {
                    t: p.t,
                    batch: b.index,
                    gap,
                    bound,
                });
            }
        }
        if b.kind == BatchKind::Completed {
            last_completed = b.edge;
        }
        prev_edge = b.edge;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DblinBounds {
    pub regret: f64,
    pub rounds: f64,
}

/// `528 (log T)^(1/(dz+2)) T^((dz+1)/(dz+2))` and
/// `(log T - log log T)/(dz+2) + 2`.
pub fn dblin_bounds(dz: f64, horizon: f64, base: LogBase) -> DblinBounds {
    let log_t = base.log(horizon);
    DblinBounds {
        regret: 528.0 * log_t.powf(1.0 / (dz + 2.0)) * horizon.powf((dz + 1.0) / (dz + 2.0)),
        rounds: (log_t - base.log(log_t)) / (dz + 2.0) + 2.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AblinBounds {
    pub regret: f64,
    pub rounded_regret: f64,
    pub rounds: f64,
    pub rounded_rounds: f64,
}

/// A-BLiN bound `(128 Cz log log T / log(1/eta) + 8e) T^((dz+1)/(dz+2)) (log T)^(1/(dz+2))`,
/// its rounded-sequence variant with `+ 512 Cz` in the bracket, and the
/// matching rounds bounds `log log T / log(1/eta) + 1` (twice that for rounded).
pub fn ablin_bounds(d: u32, dz: f64, cz: f64, horizon: f64, base: LogBase) -> Result<AblinBounds> {
    if d == 0 || !(0.0..f64::from(d) + 1.0).contains(&dz) {
        return Err(Error::InvalidParams(format!(
            "need 0 <= dz < d + 1 (d={d}, dz={dz})"
        )));
    }
    let log_t = base.log(horizon);
    let loglog = base.log(log_t);
    let inv_eta = base.log(1.0 / eta(d, dz));
    let scale = horizon.powf((dz + 1.0) / (dz + 2.0)) * log_t.powf(1.0 / (dz + 2.0));
    let e8 = 8.0 * std::f64::consts::E;
    Ok(AblinBounds {
        regret: (128.0 * cz * loglog / inv_eta + e8) * scale,
        rounded_regret: (128.0 * cz * loglog / inv_eta + 512.0 * cz + e8) * scale,
        rounds: loglog / inv_eta + 1.0,
        rounded_rounds: 2.0 * loglog / inv_eta + 1.0,
    })
}

/// `(1 - eps) / (1 - eps^B)` with `eps = 1/(d+2)`.
pub fn lower_bound_exponent(d: u32, batches: u32) -> f64 {
    let eps = 1.0 / (f64::from(d) + 2.0);
    (1.0 - eps) / (1.0 - eps.powi(batches as i32))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowerBound {
    /// `c0 T^((1-eps)/(1-eps^B))` with `c0 = 1/(32 e^(1/16))`.
    pub raw: f64,
    /// `c (log T)^(-eps/(1-eps^B)) R_z^(1/(1-eps^B))` with `R_z` replaced by
    /// its worst case `2 (log T)^eps T^(1-eps)`.
    pub with_rz: f64,
    pub exponent: f64,
}

pub const STATIC_RAW_CONSTANT: f64 = 1.0 / 32.0;
pub const ADAPTIVE_CONSTANT: f64 = 1.0 / 1024.0;

fn e16() -> f64 {
    (1.0f64 / 16.0).exp()
}

pub fn static_constant() -> f64 {
    1.0 / (128.0 * e16())
}

fn lower_with_rz(c: f64, d: u32, horizon: f64, batches: u32, base: LogBase) -> f64 {
    let eps = 1.0 / (f64::from(d) + 2.0);
    let p = 1.0 / (1.0 - eps.powi(batches as i32));
    let log_t = base.log(horizon);
    let rz = 2.0 * log_t.powf(eps) * horizon.powf(1.0 - eps);
    c * log_t.powf(-eps * p) * rz.powf(p)
}

pub fn lower_bound_static(d: u32, horizon: f64, batches: u32, base: LogBase) -> Result<LowerBound> {
    if batches == 0 {
        return Err(Error::InvalidParams("B must be at least 1".into()));
    }
    let exponent = lower_bound_exponent(d, batches);
    Ok(LowerBound {
        raw: STATIC_RAW_CONSTANT / e16() * horizon.powf(exponent),
        with_rz: lower_with_rz(static_constant(), d, horizon, batches, base),
        exponent,
    })
}

/// Adaptive-grid bound: constant `1/1024` and an extra `1/B^2`.
pub fn lower_bound_adaptive(
    d: u32,
    horizon: f64,
    batches: u32,
    base: LogBase,
) -> Result<LowerBound> {
    if batches == 0 {
        return Err(Error::InvalidParams("B must be at least 1".into()));
    }
    let b2 = f64::from(batches).powi(2);
    let exponent = lower_bound_exponent(d, batches);
    Ok(LowerBound {
        raw: ADAPTIVE_CONSTANT / b2 * horizon.powf(exponent),
        with_rz: lower_with_rz(ADAPTIVE_CONSTANT, d, horizon, batches, base) / b2,
        exponent,
    })
}

/// `log[((d+1)/((d+2) log C)) log T + 1] / log(d+2)`, natural logs.
pub fn min_rounds_for_optimality(d: u32, c: f64, horizon: f64) -> Result<f64> {
    if !(c > 1.0) {
        return Err(Error::InvalidParams(format!("C must exceed 1 (got {c})")));
    }
    let d = f64::from(d);
    Ok(((d + 1.0) / ((d + 2.0) * c.ln()) * horizon.ln() + 1.0).ln() / (d + 2.0).ln())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RzBudget {
    pub value: f64,
    pub r0: f64,
    /// `N_r` for `r = 2^0, ..., 2^-depth_max`.
    pub zooming: Vec<u64>,
}

/// `min over dyadic r0 in {1, ..., 2^-depth_max}` of
/// `r0 T + sum_{dyadic r >= r0} (N_r / r) ln T`.
pub fn rz_budget(instance: &RewardInstance, horizon: f64, depth_max: u32) -> RzBudget {
    let zooming: Vec<u64> = (0..=depth_max)
        .map(|i| zooming_number(instance, i).count)
        .collect();
    rz_budget_from_counts(&zooming, horizon)
}

pub fn rz_budget_from_counts(zooming: &[u64], horizon: f64) -> RzBudget {
    let ln_t = horizon.ln();
    let mut tail = 0.0;
    let mut best = (f64::INFINITY, 1.0);
    for (i, &n) in zooming.iter().enumerate() {
        let r = edge_at_depth(i as u32);
        tail += n as f64 / r * ln_t;
        let v = r * horizon + tail;
        if v < best.0 {
            best = (v, r);
        }
    }
    RzBudget {
        value: best.0,
        r0: best.1,
        zooming: zooming.to_vec(),
    }
}

/// Every bound at one parameter point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub d: u32,
    pub dz: f64,
    pub cz: f64,
    pub horizon: f64,
    pub batches: u32,
    /// Base of `log T` in the upper and lower bound formulas.
    pub log_base: LogBase,
    /// `C` in the minimum-rounds formula (natural logs).
    pub optimality_factor: f64,
    pub dblin_regret_bound: f64,
    pub ablin_regret_bound: f64,
    pub rounded_ablin_regret_bound: f64,
    pub dblin_rounds: f64,
    pub ablin_rounds: f64,
    pub rounded_ablin_rounds: f64,
    pub static_lower_bound: f64,
    pub adaptive_lower_bound: f64,
    pub static_lower_bound_raw: f64,
    pub adaptive_lower_bound_raw: f64,
    pub lower_bound_exponent: f64,
    pub min_rounds_lower: f64,
}

impl BoundReport {
    pub fn new(d: u32, dz: f64, cz: f64, horizon: f64, batches: u32) -> Result<Self> {
        Self::with_options(
            d,
            dz,
            cz,
            horizon,
            batches,
            LogBase::Two,
            std::f64::consts::E,
        )
    }

    pub fn with_options(
        d: u32,
        dz: f64,
        cz: f64,
        horizon: f64,
        batches: u32,
        log_base: LogBase,
        optimality_factor: f64,
    ) -> Result<Self> {
        if !(horizon >= 4.0 && horizon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "horizon {horizon} must be >= 4"
            )));
        }
        if !(cz > 0.0) {
            return Err(Error::InvalidParams(format!(
                "Cz must be positive (got {cz})"
            )));
        }
        let db = dblin_bounds(dz, horizon, log_base);
        let ab = ablin_bounds(d, dz, cz, horizon, log_base)?;
        let st = lower_bound_static(d, horizon, batches, log_base)?;
        let ad = lower_bound_adaptive(d, horizon, batches, log_base)?;
        Ok(Self {
            d,
            dz,
            cz,
            horizon,
            batches,
            log_base,
            optimality_factor,
            dblin_regret_bound: db.regret,
            ablin_regret_bound: ab.regret,
            rounded_ablin_regret_bound: ab.rounded_regret,
            dblin_rounds: db.rounds,
            ablin_rounds: ab.rounds,
            rounded_ablin_rounds: ab.rounded_rounds,
            static_lower_bound: st.with_rz,
            adaptive_lower_bound: ad.with_rz,
            static_lower_bound_raw: st.raw,
            adaptive_lower_bound_raw: ad.raw,
            lower_bound_exponent: st.exponent,
            min_rounds_lower: min_rounds_for_optimality(d, optimality_factor, horizon)?,
        })
    }
}

/// Regret series as `(t, regret)` rows.
pub fn regret_rows(series: &[f64]) -> impl Iterator<Item = (u64, f64)> + '_ {
    series.iter().enumerate().map(|(i, &r)| (i as u64 + 1, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_blin, PullRecord, RunConfig};
    use crate::environments::{constant_instance, linear_instance, two_peak_instance};
    use crate::geometry::Point;
    use crate::sequences::EdgeLengthSchedule;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn trace_of(arms: &[f64]) -> RunTrace {
        RunTrace {
            algorithm: "manual".into(),
            horizon: arms.len() as u64,
            seed: 0,
            config: None,
            pulls: arms
                .iter()
                .enumerate()
                .map(|(i, &x)| PullRecord {
                    t: i as u64 + 1,
                    batch: 1,
                    cube: None,
                    arm: Point::new(vec![x]).unwrap(),
                    reward: 0.0,
                })
                .collect(),
            batches: Vec::new(),
            grid: vec![0],
        }
    }

    #[test]
    fn regret_examples() {
        let lin = linear_instance();
        assert_eq!(
            cumulative_regret(&trace_of(&[0.0, 1.0]), &lin),
            vec![1.0, 1.0]
        );
        let one = cumulative_regret(&trace_of(&[0.8]), &lin);
        assert!((one[0] - 0.2).abs() < 1e-15);
        let flat = constant_instance(1, 0.0).unwrap();
        assert!(cumulative_regret(&trace_of(&[0.1, 0.9, 0.5]), &flat)
            .iter()
            .all(|&r| r == 0.0));
    }

    #[test]
    fn dblin_plug_in() {
        let b = dblin_bounds(0.0, 65536.0, LogBase::Two);
        assert!(rel(b.regret, 540_672.0) < 1e-12);
        assert!(rel(b.rounds, 8.0) < 1e-12);
        let b2 = dblin_bounds(0.0, 1e6, LogBase::Two);
        assert!(b2.regret > b.regret && b2.rounds > b.rounds);
    }

    #[test]
    fn rounded_bound_difference() {
        for &(d, dz, cz, t) in &[
            (2, 0.0, 1.0, 80_000.0),
            (1, 0.5, 3.0, 1e6),
            (3, 2.0, 16.0, 5e4),
        ] {
            let a = ablin_bounds(d, dz, cz, t, LogBase::Two).unwrap();
            let extra =
                512.0 * cz * t.powf((dz + 1.0) / (dz + 2.0)) * t.log2().powf(1.0 / (dz + 2.0));
            assert!(rel(a.rounded_regret - a.regret, extra) < 1e-9);
        }
        assert!(ablin_bounds(2, 3.0, 1.0, 1e4, LogBase::Two).is_err());
    }

    #[test]
    fn ablin_rounds_grow_slowly() {
        for &(d, dz) in &[(1u32, 0.0), (2, 0.0), (2, 1.5), (4, 3.0)] {
            let inv = ((f64::from(d) + 2.0) / (f64::from(d) + 1.0 - dz)).log2();
            for &t in &[1e3, 1e5, 1e8] {
                let a = ablin_bounds(d, dz, 1.0, t, LogBase::Two).unwrap().rounds;
                let b = ablin_bounds(d, dz, 1.0, t * t, LogBase::Two)
                    .unwrap()
                    .rounds;
                assert!(b - a <= 1.0 / inv + 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn lower_bound_examples() {
        let s = lower_bound_static(1, 1e6, 2, LogBase::Two).unwrap();
        assert!(rel(s.exponent, 0.75) < 1e-12);
        let expected = 1e6f64.powf(0.75) / (32.0 * (1.0f64 / 16.0).exp());
        assert!(rel(s.raw, expected) < 1e-12);
        assert!(rel(lower_bound_exponent(3, 1), 1.0) < 1e-15);
        assert!((lower_bound_exponent(2, 60) - 0.75).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for b in 1..10 {
            let e = lower_bound_exponent(2, b);
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn adaptive_to_static_ratio() {
        let c = ADAPTIVE_CONSTANT / static_constant();
        for &(d, t, b) in &[(1u32, 1e4, 1u32), (2, 8e4, 3), (3, 1e7, 7)] {
            let s = lower_bound_static(d, t, b, LogBase::Two).unwrap();
            let a = lower_bound_adaptive(d, t, b, LogBase::Two).unwrap();
            assert!(rel(a.with_rz / s.with_rz, c / f64::from(b * b)) < 1e-12);
        }
    }

    #[test]
    fn min_rounds_example() {
        let e = std::f64::consts::E;
        let t = e.powf(e.powi(3));
        let b = min_rounds_for_optimality(1, e, t).unwrap();
        let expected = ((2.0 / 3.0) * e.powi(3) + 1.0).ln() / 3f64.ln();
        assert!(rel(b, expected) < 1e-12);
        assert!((b - 2.43).abs() < 0.01);
        assert!(min_rounds_for_optimality(1, 1.0, 100.0).is_err());
        for &t in &[1e3, 1e6, 1e12] {
            let lo = min_rounds_for_optimality(2, 2.0, t).unwrap();
            let hi = min_rounds_for_optimality(2, 2.0, t * t).unwrap();
            assert!(hi > lo);
            assert!(hi - lo <= 2f64.ln() / 4f64.ln() + 1.0);
        }
    }

    // exhaustive scan over every (r0, summand) pair
    fn rz_oracle(counts: &[u64], t: f64) -> f64 {
        let mut best = f64::INFINITY;
        for i0 in 0..counts.len() {
            let r0 = 0.5f64.powi(i0 as i32);
            let mut tail = 0.0;
            for (i, &n) in counts.iter().enumerate() {
                let r = 0.5f64.powi(i as i32);
                if r >= r0 {
                    tail += n as f64 / r * t.ln();
                }
            }
            best = best.min(r0 * t + tail);
        }
        best
    }

    #[test]
    fn rz_matches_scan_on_linear() {
        let b = rz_budget(&linear_instance(), 1e6, 20);
        assert_eq!(b.zooming[4..], vec![16u64; 17][..]);
        assert_eq!(b.value, rz_oracle(&b.zooming, 1e6));
    }

    #[test]
    fn rz_constant_structure() {
        let inst = constant_instance(2, 0.0).unwrap();
        let b = rz_budget(&inst, 1e5, 8);
        for (i, &n) in b.zooming.iter().enumerate() {
            assert_eq!(n, 1u64 << (2 * i));
        }
        assert_eq!(b.value, rz_oracle(&b.zooming, 1e5));
    }

    #[test]
    fn rz_worst_case_inequality() {
        for (inst, t) in [(linear_instance(), 1e6), (two_peak_instance(), 8e4)] {
            let b = rz_budget(&inst, t, 12);
            let d = inst.dim() as f64;
            let cap = 2.0 * t.ln().powf(1.0 / (d + 2.0)) * t.powf((d + 1.0) / (d + 2.0));
            assert!(b.value <= cap, "{}: {} > {}", inst.name(), b.value, cap);
        }
    }

    #[test]
    fn report_is_finite() {
        let r = BoundReport::new(2, 0.0, 16.0, 80_000.0, 4).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "dblin_regret_bound",
            "ablin_regret_bound",
            "rounded_ablin_regret_bound",
            "dblin_rounds",
            "ablin_rounds",
            "static_lower_bound",
            "adaptive_lower_bound",
            "min_rounds_lower",
        ] {
            let x = v[key].as_f64().unwrap();
            assert!(x.is_finite() && x > 0.0, "{key} = {x}");
        }
    }

    #[test]
    fn noiseless_checks_hold() {
        let inst = two_peak_instance();
        let cfg = RunConfig::new(50_000, EdgeLengthSchedule::Doubling, 1).noiseless();
        let trace = run_blin(&cfg, &inst).unwrap();
        assert!(check_event_e(&trace, &inst).is_empty());
        assert!(check_optimal_survival(&trace, &inst));
        assert!(gap_violations(&trace, &inst).is_empty());
        let regret = cumulative_regret(&trace, &inst);
        assert_eq!(regret.len(), 50_000);
        assert!(regret.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn detectors_fire_on_corruption() {
        let inst = two_peak_instance();
        let cfg = RunConfig::new(50_000, EdgeLengthSchedule::Doubling, 1).noiseless();
        let trace = run_blin(&cfg, &inst).unwrap();
        let mut bad = trace.clone();
        let b = bad.batches.iter_mut().find(|b| b.active.len() > 1).unwrap();
        b.estimates[0] += 10.0;
        let target = b.active[0].clone();
        let v = check_event_e(&bad, &inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].cube, target);

        let mut gone = trace.clone();
        let b = &mut gone.batches[1];
        let opt = b
            .active
            .iter()
            .find(|c| c.contains(&inst.x_star()[0]))
            .unwrap()
            .clone();
        b.eliminated.push(opt);
        assert!(!check_optimal_survival(&gone, &inst));
    }

    proptest! {
        #[test]
        fn adaptive_never_exceeds_static(d in 1u32..5, b in 1u32..12, lt in 2.8f64..30.0) {
            let t = lt.exp();
            let s = lower_bound_static(d, t, b, LogBase::Two).unwrap();
            let a = lower_bound_adaptive(d, t, b, LogBase::Two).unwrap();
            prop_assert!(a.with_rz <= s.with_rz);
            prop_assert!(a.raw <= s.raw);
        }

        #[test]
        fn lower_bounds_below_worst_case_upper(d in 1u32..5, lt in 2.8f64..40.0, c in 1.5f64..10.0) {
            let t = lt.exp();
            let b = min_rounds_for_optimality(d, c, t).unwrap().ceil().max(1.0) as u32;
            let s = lower_bound_static(d, t, b, LogBase::Two).unwrap();
            let up = ablin_bounds(d, f64::from(d), 1.0, t, LogBase::Two).unwrap();
            prop_assert!(s.with_rz <= up.regret);
            prop_assert!(s.raw <= up.regret);
        }
    }
}
