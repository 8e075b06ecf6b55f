//! Batched Lipschitz Narrowing against a feedback channel that withholds
//! rewards until the batch commits.
//!
//! Decisions come from [`BlinPlanner`], which only ever sees committed
//! per-cube reward sums. [`verify_feedback_isolation`] replays a finished
//! trace through a fresh planner fed from the trace's committed data and
//! checks that every arm matches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environments::{sample_reward, NoiseStream, RewardInstance};
use crate::error::{Error, Result};
use crate::geometry::{edge_at_depth, CubeSet, Point, StandardCube, MAX_DEPTH};
use crate::sequences::{samples_per_cube_with, EdgeLengthSchedule, LogBase};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArmPolicy {
    #[default]
    CubeCenter,
    UniformInCube,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: u64,
    pub schedule: EdgeLengthSchedule,
    #[serde(default)]
    pub arm_policy: ArmPolicy,
    pub seed: u64,
    /// Noise standard deviation; 0 gives a noiseless channel.
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    /// `c` in `n_m = ceil(c ln T / r_m^2)`.
    #[serde(default = "default_sample_constant")]
    pub sample_constant: f64,
    /// `c` in the elimination threshold `c r_m`.
    #[serde(default = "default_elimination_constant")]
    pub elimination_constant: f64,
}

fn default_noise() -> f64 {
    1.0
}

fn default_sample_constant() -> f64 {
    16.0
}

fn default_elimination_constant() -> f64 {
    4.0
}

impl RunConfig {
    pub fn new(horizon: u64, schedule: EdgeLengthSchedule, seed: u64) -> Self {
        Self {
            horizon,
            schedule,
            arm_policy: ArmPolicy::CubeCenter,
            seed,
            noise_scale: default_noise(),
            sample_constant: default_sample_constant(),
            elimination_constant: default_elimination_constant(),
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_scale = 0.0;
        self
    }

    pub fn with_arm_policy(mut self, policy: ArmPolicy) -> Self {
        self.arm_policy = policy;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidHorizon(self.horizon));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "noise scale {}",
                self.noise_scale
            )));
        }
        Ok(())
    }

    fn samples(&self, edge: f64) -> Result<u64> {
        samples_per_cube_with(edge, self.horizon, self.sample_constant, LogBase::Natural)
    }
}

/// Handle to a pull whose reward sits in the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ticket {
    batch: usize,
    slot: usize,
}

/// Draws rewards at pull time but releases them only after `commit`.
pub struct BatchedChannel<'a> {
    instance: &'a RewardInstance,
    noise: NoiseStream,
    horizon: u64,
    pulls: u64,
    pending: Vec<f64>,
    committed: Vec<Vec<f64>>,
    grid: Vec<u64>,
}

impl<'a> BatchedChannel<'a> {
    pub fn new(instance: &'a RewardInstance, noise: NoiseStream, horizon: u64) -> Self {
        Self {
            instance,
            noise,
            horizon,
            pulls: 0,
            pending: Vec::new(),
            committed: Vec::new(),
            grid: vec![0],
        }
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    pub fn remaining(&self) -> u64 {
        self.horizon - self.pulls
    }

    pub fn pull(&mut self, arm: &Point) -> Result<Ticket> {
        if self.pulls >= self.horizon {
            return Err(Error::ChannelViolation(format!(
                "pull beyond horizon T={}",
                self.horizon
            )));
        }
        self.pulls += 1;
        self.pending
            .push(sample_reward(self.instance, &mut self.noise, arm));
        Ok(Ticket {
            batch: self.committed.len(),
            slot: self.pending.len() - 1,
        })
    }

    /// Reveals a reward; reading from the open batch is a contract violation.
    pub fn reward(&self, ticket: Ticket) -> Result<f64> {
        self.committed
            .get(ticket.batch)
            .and_then(|b| b.get(ticket.slot))
            .copied()
            .ok_or_else(|| {
                Error::ChannelViolation(format!(
                    "reward of batch {} read before commit",
                    ticket.batch + 1
                ))
            })
    }

    /// Closes the open batch and records the grid point `t_m`.
    pub fn commit(&mut self) -> Result<u64> {
        if self.pending.is_empty() {
            return Err(Error::ChannelViolation("commit of an empty batch".into()));
        }
        self.committed.push(std::mem::take(&mut self.pending));
        self.grid.push(self.pulls);
        Ok(self.pulls)
    }

    /// Rewards drawn in the open batch; only the trace logger may look.
    fn uncommitted(&self) -> &[f64] {
        &self.pending
    }

    pub fn grid(&self) -> &[u64] {
        &self.grid
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveCubeStats {
    pub cube: StandardCube,
    pub pulls: u64,
    pub reward_sum: f64,
}

impl ActiveCubeStats {
    pub fn estimate(&self) -> f64 {
        self.reward_sum / self.pulls as f64
    }
}

/// Splits `stats` into survivors and eliminated cubes: a cube goes when
/// the best estimate beats its own by more than `4 r_m`.
pub fn eliminate(
    stats: &[ActiveCubeStats],
    r_m: f64,
) -> Result<(Vec<StandardCube>, Vec<StandardCube>)> {
    eliminate_with_threshold(stats, 4.0 * r_m)
}

pub fn eliminate_with_threshold(
    stats: &[ActiveCubeStats],
    threshold: f64,
) -> Result<(Vec<StandardCube>, Vec<StandardCube>)> {
    if stats.is_empty() {
        return Err(Error::EmptyInput("no active cubes to eliminate from"));
    }
    let best = stats
        .iter()
        .map(ActiveCubeStats::estimate)
        .fold(f64::NEG_INFINITY, f64::max);
    let (keep, drop): (Vec<_>, Vec<_>) = stats
        .iter()
        .partition(|s| !(best - s.estimate() > threshold));
    Ok((
        keep.into_iter().map(|s| s.cube.clone()).collect(),
        drop.into_iter().map(|s| s.cube.clone()).collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchKind {
    /// Played in full and committed: one communication round.
    Completed,
    /// Cut short by the horizon; never committed.
    Truncated,
    /// Post-loop exploitation; needs no feedback.
    Cleanup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    /// 1-based batch index.
    pub index: usize,
    pub kind: BatchKind,
    pub depth: u32,
    pub edge: f64,
    /// Pulls scheduled per active cube.
    pub samples: u64,
    pub active: Vec<StandardCube>,
    /// Per-cube estimates, aligned with `active`; empty unless completed.
    pub estimates: Vec<f64>,
    pub eliminated: Vec<StandardCube>,
    pub mu_hat_max: Option<f64>,
    /// Pulls `first_t..=last_t` belong to this batch.
    pub first_t: u64,
    pub last_t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullRecord {
    /// 1-based time step.
    pub t: u64,
    pub batch: u64,
    pub cube: Option<StandardCube>,
    pub arm: Point,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub horizon: u64,
    pub seed: u64,
    pub config: Option<RunConfig>,
    pub pulls: Vec<PullRecord>,
    pub batches: Vec<BatchRecord>,
    /// Grid `t_0 = 0 < t_1 < ... < t_B`: every commit time, closed by `T`
    /// when the last batch was cut short by the horizon.
    pub grid: Vec<u64>,
}

impl RunTrace {
    /// Communication rounds `B`: batches on the grid. A batch truncated by
    /// the horizon ends at `t_B = T` and counts; cleanup does not.
    pub fn rounds_used(&self) -> usize {
        self.grid.len() - 1
    }

    /// Executed commits (completed batches).
    pub fn commits(&self) -> usize {
        self.completed_batches().count()
    }

    pub fn completed_batches(&self) -> impl Iterator<Item = &BatchRecord> {
        self.batches
            .iter()
            .filter(|b| b.kind == BatchKind::Completed)
    }
}

/// One batch worth of decisions.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    pub index: usize,
    pub depth: u32,
    pub edge: f64,
    pub samples: u64,
    pub cubes: Vec<StandardCube>,
}

/// The decision side of BLiN. It is fed nothing but committed per-cube
/// reward sums, so feedback isolation holds by construction.
pub struct BlinPlanner {
    config: RunConfig,
    depths: Vec<u32>,
    m: usize,
    active: Vec<StandardCube>,
    arm_rng: ChaCha8Rng,
    last: Option<(Vec<StandardCube>, Vec<f64>)>,
    finished: bool,
}

impl BlinPlanner {
    pub fn new(config: &RunConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        let depths = config.schedule.depths(MAX_DEPTH as usize + 1)?;
        if depths.is_empty() {
            return Err(Error::ScheduleMismatch("schedule is empty".into()));
        }
        if depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ScheduleMismatch(format!(
                "depths {depths:?} must strictly increase"
            )));
        }
        let mut arm_rng = ChaCha8Rng::seed_from_u64(config.seed);
        arm_rng.set_stream(1);
        Ok(Self {
            active: CubeSet::grid(dim, depths[0])?.into_vec(),
            config: config.clone(),
            depths,
            m: 0,
            arm_rng,
            last: None,
            finished: false,
        })
    }

    /// Next batch, or `None` once the schedule is exhausted.
    pub fn plan(&self) -> Result<Option<BatchPlan>> {
        if self.finished || self.m >= self.depths.len() {
            return Ok(None);
        }
        let depth = self.depths[self.m];
        let edge = edge_at_depth(depth);
        Ok(Some(BatchPlan {
            index: self.m + 1,
            depth,
            edge,
            samples: self.config.samples(edge)?,
            cubes: self.active.clone(),
        }))
    }

    pub fn arm(&mut self, cube: &StandardCube) -> Point {
        match self.config.arm_policy {
            ArmPolicy::CubeCenter => cube.center(),
            ArmPolicy::UniformInCube => cube.sample_uniform(&mut self.arm_rng),
        }
    }

    /// Consumes the committed sums of the current plan; returns the estimates
    /// and eliminated cubes and moves to the next edge length.
    pub fn observe(
        &mut self,
        plan: &BatchPlan,
        sums: &[f64],
    ) -> Result<(Vec<f64>, Vec<StandardCube>)> {
        let stats: Vec<ActiveCubeStats> = plan
            .cubes
            .iter()
            .zip(sums)
            .map(|(c, &s)| ActiveCubeStats {
                cube: c.clone(),
                pulls: plan.samples,
                reward_sum: s,
            })
            .collect();
        let (survivors, eliminated) =
            eliminate_with_threshold(&stats, self.config.elimination_constant * plan.edge)?;
        let estimates: Vec<f64> = stats.iter().map(ActiveCubeStats::estimate).collect();
        let surviving_estimates = stats
            .iter()
            .filter(|s| survivors.contains(&s.cube))
            .map(ActiveCubeStats::estimate)
            .collect();
        self.last = Some((survivors.clone(), surviving_estimates));
        self.m += 1;
        if let Some(&next) = self.depths.get(self.m) {
            let levels = next - plan.depth;
            let mut refined =
                Vec::with_capacity(survivors.len() << (levels as usize * plan.cubes[0].dim()));
            for c in &survivors {
                refined.extend(c.refine(levels)?.into_vec());
            }
            self.active = refined;
        }
        Ok((estimates, eliminated))
    }

    /// Marks the loop as exited by the horizon.
    pub fn stop(&mut self) {
        self.finished = true;
    }

    /// Cleanup cube: the survivor with the best last committed estimate.
    pub fn cleanup_cube(&self) -> Option<StandardCube> {
        let (cubes, est) = self.last.as_ref()?;
        let mut best = 0;
        for i in 1..cubes.len() {
            if est[i] > est[best] {
                best = i;
            }
        }
        cubes.get(best).cloned()
    }
}

/// Runs BLiN for exactly `T` pulls.
pub fn run_blin(config: &RunConfig, instance: &RewardInstance) -> Result<RunTrace> {
    let mut planner = BlinPlanner::new(config, instance.dim())?;
    let mut channel = BatchedChannel::new(
        instance,
        NoiseStream::with_scale(config.seed, config.noise_scale),
        config.horizon,
    );
    let mut pulls = Vec::with_capacity(config.horizon as usize);
    let mut batches = Vec::new();

    while let Some(plan) = planner.plan()? {
        let first_t = channel.pulls() + 1;
        let mut tickets = Vec::with_capacity(plan.cubes.len());
        let mut truncated = false;
        'cubes: for cube in &plan.cubes {
            let mut mine = Vec::with_capacity(plan.samples as usize);
            for _ in 0..plan.samples {
                if channel.remaining() == 0 {
                    truncated = true;
                    break 'cubes;
                }
                let arm = planner.arm(cube);
                let ticket = channel.pull(&arm)?;
                pulls.push(PullRecord {
                    t: channel.pulls(),
                    batch: plan.index as u64,
                    cube: Some(cube.clone()),
                    arm,
                    // logged for the trace only; decisions read committed rewards
                    reward: channel.uncommitted()[ticket.slot],
                });
                mine.push(ticket);
            }
            tickets.push(mine);
        }
        let mut record = BatchRecord {
            index: plan.index,
            kind: BatchKind::Truncated,
            depth: plan.depth,
            edge: plan.edge,
            samples: plan.samples,
            active: plan.cubes.clone(),
            estimates: Vec::new(),
            eliminated: Vec::new(),
            mu_hat_max: None,
            first_t,
            last_t: channel.pulls(),
        };
        if truncated {
            if record.last_t >= record.first_t {
                batches.push(record);
            }
            planner.stop();
            break;
        }
        channel.commit()?;
        let sums = tickets
            .iter()
            .map(|ts| ts.iter().map(|&t| channel.reward(t)).sum::<Result<f64>>())
            .collect::<Result<Vec<f64>>>()?;
        let (estimates, eliminated) = planner.observe(&plan, &sums)?;
        record.kind = BatchKind::Completed;
        record.mu_hat_max = estimates.iter().copied().reduce(f64::max);
        record.estimates = estimates;
        record.eliminated = eliminated;
        batches.push(record);
        if channel.remaining() == 0 {
            planner.stop();
        }
    }

    cleanup(&planner, &mut channel, &mut pulls, &mut batches)?;
    debug_assert_eq!(pulls.len() as u64, config.horizon);
    // a final batch cut short by the horizon, or the cleanup run, ends at T
    let mut grid = channel.grid().to_vec();
    if grid.last() != Some(&config.horizon) {
        grid.push(config.horizon);
    }
    Ok(RunTrace {
        algorithm: "blin".into(),
        horizon: config.horizon,
        seed: config.seed,
        config: Some(config.clone()),
        pulls,
        grid,
        batches,
    })
}

/// Plays the best surviving cube's center for every remaining step,
/// without further commits.
fn cleanup(
    planner: &BlinPlanner,
    channel: &mut BatchedChannel<'_>,
    pulls: &mut Vec<PullRecord>,
    batches: &mut Vec<BatchRecord>,
) -> Result<()> {
    let remaining = channel.remaining();
    if remaining == 0 {
        return Ok(());
    }
    let cube = planner.cleanup_cube().ok_or_else(|| {
        Error::ScheduleMismatch("schedule ended before any batch completed".into())
    })?;
    let index = batches.len() + 1;
    let arm = cube.center();
    let first_t = channel.pulls() + 1;
    for _ in 0..remaining {
        let ticket = channel.pull(&arm)?;
        pulls.push(PullRecord {
            t: channel.pulls(),
            batch: index as u64,
            cube: Some(cube.clone()),
            arm: arm.clone(),
            reward: channel.uncommitted()[ticket.slot],
        });
    }
    batches.push(BatchRecord {
        index,
        kind: BatchKind::Cleanup,
        depth: cube.depth(),
        edge: cube.edge(),
        samples: remaining,
        active: vec![cube],
        estimates: Vec::new(),
        eliminated: Vec::new(),
        mu_hat_max: None,
        first_t,
        last_t: channel.pulls(),
    });
    Ok(())
}

/// Replays `trace` through a fresh planner that sees only the trace's
/// committed rewards, batch by batch, and checks every logged arm and cube.
pub fn verify_feedback_isolation(trace: &RunTrace) -> Result<()> {
    let config = trace
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("trace carries no run config".into()))?;
    let dim = trace
        .pulls
        .first()
        .map(|p| p.arm.dim())
        .ok_or(Error::EmptyInput("trace has no pulls"))?;
    let mut planner = BlinPlanner::new(config, dim)?;
    let mismatch =
        |t: u64, what: &str| Error::ChannelViolation(format!("replay diverges at t={t}: {what}"));
    let mut cursor = 0usize;
    for record in &trace.batches {
        if record.kind == BatchKind::Cleanup {
            let cube = planner
                .cleanup_cube()
                .ok_or_else(|| mismatch(record.first_t, "cleanup without a completed batch"))?;
            for p in &trace.pulls[cursor..] {
                if p.cube.as_ref() != Some(&cube) || p.arm != cube.center() {
                    return Err(mismatch(p.t, "cleanup arm"));
                }
            }
            cursor = trace.pulls.len();
            break;
        }
        let plan = planner
            .plan()?
            .ok_or_else(|| mismatch(record.first_t, "planner ran out of batches"))?;
        if plan.cubes != record.active || plan.samples != record.samples {
            return Err(mismatch(record.first_t, "active set"));
        }
        let mut sums = Vec::with_capacity(plan.cubes.len());
        'cubes: for cube in &plan.cubes {
            let mut s = 0.0;
            for _ in 0..plan.samples {
                let Some(p) = trace.pulls.get(cursor) else {
                    break 'cubes;
                };
                if p.batch != plan.index as u64 {
                    break 'cubes;
                }
                let arm = planner.arm(cube);
                if p.cube.as_ref() != Some(cube) || p.arm != arm {
                    return Err(mismatch(p.t, "arm"));
                }
                s += p.reward;
                cursor += 1;
            }
            sums.push(s);
        }
        match record.kind {
            BatchKind::Completed => {
                if sums.len() != plan.cubes.len() {
                    return Err(mismatch(record.last_t, "short completed batch"));
                }
                let (estimates, eliminated) = planner.observe(&plan, &sums)?;
                if eliminated != record.eliminated || estimates != record.estimates {
                    return Err(mismatch(record.last_t, "elimination"));
                }
            }
            BatchKind::Truncated => planner.stop(),
            BatchKind::Cleanup => unreachable!(),
        }
    }
    if cursor != trace.pulls.len() {
        return Err(Error::ChannelViolation(format!(
            "{} pulls not accounted for by any batch",
            trace.pulls.len() - cursor
        )));
    }
    Ok(())
}

/// Zooming algorithm with per-pull feedback (`B = T`).
///
/// Coverage is tracked on a regular grid of candidate arms; an uncovered
/// candidate is activated before each step. Confidence radius is
/// `sqrt(8 ln T / (1 + n))`, index `mu_hat + 2 rad`.
pub fn run_zooming_baseline(
    horizon: u64,
    seed: u64,
    noise_scale: f64,
    instance: &RewardInstance,
) -> Result<RunTrace> {
    if horizon < 2 {
        return Err(Error::InvalidHorizon(horizon));
    }
    let d = instance.dim();
    let per_axis = match d {
        1 => 1025,
        2 => 65,
        3 => 17,
        _ => 9,
    };
    let candidates = lattice_points(d, per_axis);
    let ln_t = (horizon as f64).ln();
    let rad = |n: u64| (8.0 * ln_t / (1.0 + n as f64)).sqrt();

    struct Arm {
        x: Point,
        n: u64,
        sum: f64,
    }
    let mut arms: Vec<Arm> = Vec::new();
    let mut covered = vec![false; candidates.len()];
    let mut uncovered: Vec<usize> = (0..candidates.len()).collect();
    let mut noise = NoiseStream::with_scale(seed, noise_scale);
    let mut pulls = Vec::with_capacity(horizon as usize);

    for t in 1..=horizon {
        uncovered.retain(|&i| !covered[i]);
        if let Some(&i) = uncovered.first() {
            arms.push(Arm {
                x: candidates[i].clone(),
                n: 0,
                sum: 0.0,
            });
            let r = rad(0);
            for (j, c) in candidates.iter().enumerate() {
                if !covered[j] && c.dist_inf(&candidates[i]) < r {
                    covered[j] = true;
                }
            }
        }
        let mut best = 0;
        let mut best_index = f64::NEG_INFINITY;
        for (k, a) in arms.iter().enumerate() {
            let mean = if a.n == 0 { 0.0 } else { a.sum / a.n as f64 };
            let index = mean + 2.0 * rad(a.n);
            if index > best_index {
                best_index = index;
                best = k;
            }
        }
        let x = arms[best].x.clone();
        let y = sample_reward(instance, &mut noise, &x);
        let old = rad(arms[best].n);
        arms[best].n += 1;
        arms[best].sum += y;
        let new = rad(arms[best].n);
        // only the annulus between the old and new ball can lose coverage
        for (j, c) in candidates.iter().enumerate() {
            let dist = c.dist_inf(&x);
            if dist < old && dist >= new {
                covered[j] = arms.iter().any(|a| c.dist_inf(&a.x) < rad(a.n));
                if !covered[j] {
                    uncovered.push(j);
                }
            }
        }
        uncovered.sort_unstable();
        uncovered.dedup();
        pulls.push(PullRecord {
            t,
            batch: t,
            cube: None,
            arm: x,
            reward: y,
        });
    }
    Ok(RunTrace {
        algorithm: "zooming".into(),
        horizon,
        seed,
        config: None,
        pulls,
        batches: Vec::new(),
        grid: (0..=horizon).collect(),
    })
}

fn lattice_points(d: usize, per_axis: usize) -> Vec<Point> {
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|flat| {
            let mut rest = flat;
            let mut coords = vec![0.0; d];
            for c in coords.iter_mut().rev() {
                *c = (rest % per_axis) as f64 / (per_axis - 1) as f64;
                rest /= per_axis;
            }
            Point::from_unchecked(coords)
        })
        .collect()
}
