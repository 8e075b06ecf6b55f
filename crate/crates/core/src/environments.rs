//! Lipschitz reward instances with Gaussian noise.
//!
//! Besides the closed-form test functions this module builds the adversarial
//! peak families used by the batched lower-bound constructions, and the
//! brute-force zooming oracles (`N_r`, zooming dimension, zooming constant).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{edge_at_depth, Point, StandardCube};

/// Default grid resolution (points per axis per cube) for approximate extrema.
pub const DEFAULT_GRID_POINTS: usize = 33;

// Lattice enumeration above this many candidates falls back to a Lipschitz bound.
const MAX_LATTICE_SCAN: u128 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    L2,
    Inf,
}

/// Min or max of the mean over a cube; `exact` is false for grid estimates
/// and Lipschitz bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub exact: bool,
}

/// JSON-serialisable name of an instance and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceDescriptor {
    TwoPeak,
    Linear,
    Constant {
        d: u32,
        #[serde(default)]
        value: f64,
    },
    /// Member `instance` (1-based) of the static-grid peak family.
    StaticLowerBound {
        d: u32,
        r: f64,
        peaks: u64,
        instance: u64,
    },
    /// Instance `instance` of world `world` for the adaptive-grid construction.
    AdaptiveLowerBound {
        d: u32,
        horizon: u64,
        batches: u32,
        world: u32,
        instance: u64,
    },
}

impl InstanceDescriptor {
    pub fn build(&self) -> Result<RewardInstance> {
        match *self {
            Self::TwoPeak => Ok(two_peak_instance()),
            Self::Linear => Ok(linear_instance()),
            Self::Constant { d, value } => constant_instance(d, value),
            Self::StaticLowerBound {
                d,
                r,
                peaks,
                instance,
            } => static_lower_bound_instance(&PeakFamilyParams::new(d, r, peaks)?, instance),
            Self::AdaptiveLowerBound {
                d,
                horizon,
                batches,
                world,
                instance,
            } => adaptive_lower_bound_world(
                &AdaptiveGrid::new(d, horizon, batches)?,
                world,
                instance,
            ),
        }
    }
}

/// Descriptor plus noise settings, as named by experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDocument {
    pub instance: InstanceDescriptor,
    pub seed: u64,
    #[serde(default = "unit_scale")]
    pub noise_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug)]
enum Field {
    Constant(f64),
    Linear,
    TwoPeak { near: Point, far: Point },
    Cone(ConeField),
}

/// Mean reward function with its known optimum and Lipschitz data.
#[derive(Clone, Debug)]
pub struct RewardInstance {
    descriptor: InstanceDescriptor,
    d: usize,
    field: Field,
    metric: Metric,
    lipschitz: f64,
    mu_star: f64,
    x_star: Vec<Point>,
    grid_points: usize,
}

impl RewardInstance {
    pub fn descriptor(&self) -> &InstanceDescriptor {
        &self.descriptor
    }

    pub fn name(&self) -> &'static str {
        match self.descriptor {
            InstanceDescriptor::TwoPeak => "two-peak",
            InstanceDescriptor::Linear => "linear",
            InstanceDescriptor::Constant { .. } => "constant",
            InstanceDescriptor::StaticLowerBound { .. } => "static-lower-bound",
            InstanceDescriptor::AdaptiveLowerBound { .. } => "adaptive-lower-bound",
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Norm used inside the mean's formula.
    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Lipschitz constant with respect to the sup-norm on the arm space.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn mu_star(&self) -> f64 {
        self.mu_star
    }

    pub fn x_star(&self) -> &[Point] {
        &self.x_star
    }

    /// Resolution of the approximate extrema oracle (points per axis per cube).
    pub fn with_grid_points(mut self, points: usize) -> Self {
        self.grid_points = points.max(2);
        self
    }

    pub fn mean(&self, x: &Point) -> f64 {
        match &self.field {
            Field::Constant(v) => *v,
            Field::Linear => x.coords()[0],
            Field::TwoPeak { near, far } => 1.0 - 0.5 * x.dist_l2(near) - 0.3 * x.dist_l2(far),
            Field::Cone(c) => c.mean(x),
        }
    }

    /// Optimality gap `mu* - mean(x)`.
    pub fn gap(&self, x: &Point) -> f64 {
        self.mu_star - self.mean(x)
    }

    pub fn cube_min(&self, cube: &StandardCube) -> Bound {
        match &self.field {
            Field::Constant(v) => Bound {
                value: *v,
                exact: true,
            },
            Field::Linear => Bound {
                value: cube.interval(0).0,
                exact: true,
            },
            // mean is concave, so its minimum over a box sits at a vertex
            Field::TwoPeak { .. } => Bound {
                value: cube
                    .corners()
                    .map(|c| self.mean(&c))
                    .fold(f64::INFINITY, f64::min),
                exact: true,
            },
            Field::Cone(c) => Bound {
                value: c.cube_min(cube),
                exact: true,
            },
        }
    }

    pub fn cube_max(&self, cube: &StandardCube) -> Bound {
        match &self.field {
            Field::Constant(v) => Bound {
                value: *v,
                exact: true,
            },
            Field::Linear => Bound {
                value: cube.interval(0).1,
                exact: true,
            },
            Field::TwoPeak { near, .. } => {
                if cube.contains(near) {
                    Bound {
                        value: self.mu_star,
                        exact: true,
                    }
                } else {
                    Bound {
                        value: self.grid_extrema(cube).1,
                        exact: false,
                    }
                }
            }
            Field::Cone(c) => match c.cube_max(cube) {
                Some(v) => Bound {
                    value: v,
                    exact: true,
                },
                None => Bound {
                    value: self.lipschitz_upper(cube),
                    exact: false,
                },
            },
        }
    }

    /// `(min, max)` of the mean on a regular grid inside the cube.
    pub fn grid_extrema(&self, cube: &StandardCube) -> (f64, f64) {
        let n = self.grid_points;
        let d = cube.dim();
        let total = n.pow(d as u32);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut coords = vec![0.0; d];
        for flat in 0..total {
            let mut rest = flat;
            for (a, c) in coords.iter_mut().enumerate() {
                let step = rest % n;
                rest /= n;
                let (l, h) = cube.interval(a);
                *c = l + (h - l) * step as f64 / (n - 1) as f64;
            }
            let v = self.mean(&Point::from_unchecked(coords.clone()));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Upper bound `mean(center) + L * edge / 2`.
    pub fn lipschitz_upper(&self, cube: &StandardCube) -> f64 {
        (self.mean(&cube.center()) + self.lipschitz * cube.edge() / 2.0).min(self.mu_star)
    }

    /// Upper bound on the cube's maximum: exact when available, otherwise Lipschitz.
    fn max_upper_bound(&self, cube: &StandardCube) -> f64 {
        let b = self.cube_max(cube);
        if b.exact {
            b.value
        } else {
            self.lipschitz_upper(cube).max(b.value)
        }
    }
}

pub fn two_peak_instance() -> RewardInstance {
    let near = Point::from_unchecked(vec![0.8, 0.7]);
    let far = Point::from_unchecked(vec![0.1, 0.1]);
    let mu_star = 1.0 - 0.3 * near.dist_l2(&far);
    RewardInstance {
        descriptor: InstanceDescriptor::TwoPeak,
        d: 2,
        field: Field::TwoPeak {
            near: near.clone(),
            far,
        },
        metric: Metric::L2,
        // gradient has l2 norm <= 0.8, hence l1 norm <= 0.8 sqrt 2
        lipschitz: 0.8 * std::f64::consts::SQRT_2,
        mu_star,
        x_star: vec![near],
        grid_points: DEFAULT_GRID_POINTS,
    }
}

/// `mean(x) = x` on `[0,1]`.
pub fn linear_instance() -> RewardInstance {
    RewardInstance {
        descriptor: InstanceDescriptor::Linear,
        d: 1,
        field: Field::Linear,
        metric: Metric::Inf,
        lipschitz: 1.0,
        mu_star: 1.0,
        x_star: vec![Point::from_unchecked(vec![1.0])],
        grid_points: DEFAULT_GRID_POINTS,
    }
}

/// Flat reward; every arm is optimal. `x_star` lists the center only.
pub fn constant_instance(d: u32, value: f64) -> Result<RewardInstance> {
    if d == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    Ok(RewardInstance {
        descriptor: InstanceDescriptor::Constant { d, value },
        d: d as usize,
        field: Field::Constant(value),
        metric: Metric::Inf,
        lipschitz: 0.0,
        mu_star: value,
        x_star: vec![StandardCube::unit(d as usize).center()],
        grid_points: DEFAULT_GRID_POINTS,
    })
}

/// Regular lattice `anchor + k * pitch` (per axis) clipped to `[0,1]`.
/// Ranks are lexicographic with the first axis most significant.
#[derive(Clone, Debug)]
struct PeakLattice {
    d: usize,
    pitch: f64,
    anchor: f64,
    k_lo: i64,
    k_hi: i64,
}

impl PeakLattice {
    fn new(d: usize, pitch: f64, anchor: f64) -> Self {
        let eps = 1e-12;
        let k_lo = -((anchor / pitch + eps).floor() as i64);
        let k_hi = ((1.0 - anchor) / pitch + eps).floor() as i64;
        Self {
            d,
            pitch,
            anchor,
            k_lo,
            k_hi,
        }
    }

    fn per_axis(&self) -> u64 {
        (self.k_hi - self.k_lo + 1) as u64
    }

    fn total(&self) -> u128 {
        u128::from(self.per_axis()).pow(self.d as u32)
    }

    fn coord(&self, k: i64) -> f64 {
        (self.anchor + k as f64 * self.pitch).clamp(0.0, 1.0)
    }

    fn rank(&self, ks: &[i64]) -> u128 {
        let n = u128::from(self.per_axis());
        ks.iter()
            .fold(0u128, |acc, &k| acc * n + (k - self.k_lo) as u128)
    }

    fn ks(&self, mut rank: u128) -> Vec<i64> {
        let n = u128::from(self.per_axis());
        let mut out = vec![0i64; self.d];
        for a in (0..self.d).rev() {
            out[a] = (rank % n) as i64 + self.k_lo;
            rank /= n;
        }
        out
    }

    fn point(&self, rank: u128) -> Point {
        Point::from_unchecked(self.ks(rank).into_iter().map(|k| self.coord(k)).collect())
    }

    fn nearest(&self, x: &Point) -> Vec<i64> {
        x.coords()
            .iter()
            .map(|&c| (((c - self.anchor) / self.pitch).round() as i64).clamp(self.k_lo, self.k_hi))
            .collect()
    }

    /// Per-axis `k` ranges whose coordinates fall in `[lo - pad, hi + pad]`.
    fn ranges(&self, cube: &StandardCube, pad: f64) -> Vec<(i64, i64)> {
        (0..self.d)
            .map(|a| {
                let (lo, hi) = cube.interval(a);
                let k0 = (((lo - pad - self.anchor) / self.pitch).ceil() as i64).max(self.k_lo);
                let k1 = (((hi + pad - self.anchor) / self.pitch).floor() as i64).min(self.k_hi);
                (k0, k1)
            })
            .collect()
    }
}

/// `max{floor, max_u (h_u - |x - u|_inf)}` over a peak lattice whose cone
/// supports are pairwise disjoint, which makes cube extrema exact.
#[derive(Clone, Debug)]
struct ConeField {
    lattice: PeakLattice,
    /// Number of non-reserved lattice ranks that carry a peak.
    members: u128,
    /// Rank that is always a peak (the shared top of the adaptive worlds).
    reserved: Option<u128>,
    floor: f64,
    default_height: f64,
    special: Vec<(u128, f64)>,
    reach: f64,
}

impl ConeField {
    fn new(
        lattice: PeakLattice,
        members: u128,
        reserved: Option<u128>,
        floor: f64,
        default_height: f64,
        special: Vec<(u128, f64)>,
    ) -> Result<Self> {
        let available = lattice.total() - u128::from(reserved.is_some());
        if members > available {
            return Err(Error::InfeasiblePeaks(format!(
                "{members} peaks do not fit at separation {} in [0,1]^{}",
                lattice.pitch, lattice.d
            )));
        }
        let reach = special
            .iter()
            .map(|&(_, h)| h)
            .chain(std::iter::once(default_height))
            .fold(0.0f64, |m, h| m.max(h - floor));
        if 2.0 * reach > lattice.pitch + 1e-12 {
            return Err(Error::InfeasiblePeaks(format!(
                "cone reach {reach} overlaps at pitch {}",
                lattice.pitch
            )));
        }
        Ok(Self {
            lattice,
            members,
            reserved,
            floor,
            default_height,
            special,
            reach,
        })
    }

    /// Rank of the `e`-th (0-based) non-reserved member.
    fn member_rank(&self, e: u128) -> u128 {
        match self.reserved {
            Some(r) if e >= r => e + 1,
            _ => e,
        }
    }

    fn height(&self, rank: u128) -> Option<f64> {
        let is_member = match self.reserved {
            Some(r) if r == rank => true,
            Some(r) => (if rank > r { rank - 1 } else { rank }) < self.members,
            None => rank < self.members,
        };
        if !is_member {
            return None;
        }
        Some(
            self.special
                .iter()
                .find(|(r, _)| *r == rank)
                .map_or(self.default_height, |&(_, h)| h),
        )
    }

    fn mean(&self, x: &Point) -> f64 {
        let ks = self.lattice.nearest(x);
        let rank = self.lattice.rank(&ks);
        match self.height(rank) {
            Some(h) => {
                let u = self.lattice.point(rank);
                (h - x.dist_inf(&u)).max(self.floor)
            }
            None => self.floor,
        }
    }

    fn cube_min(&self, cube: &StandardCube) -> f64 {
        let ks = self.lattice.nearest(&cube.center());
        let rank = self.lattice.rank(&ks);
        if let Some(h) = self.height(rank) {
            let u = self.lattice.point(rank);
            let far = cube.far_dist_inf(&u);
            if far < h - self.floor {
                return h - far;
            }
        }
        self.floor
    }

    fn cube_max(&self, cube: &StandardCube) -> Option<f64> {
        let ranges = self.lattice.ranges(cube, self.reach);
        let count = ranges
            .iter()
            .map(|&(a, b)| if b < a { 0 } else { (b - a + 1) as u128 })
            .product::<u128>();
        if count > MAX_LATTICE_SCAN {
            return None;
        }
        let mut best = self.floor;
        if count == 0 {
            return Some(best);
        }
        let mut ks: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let rank = self.lattice.rank(&ks);
            if let Some(h) = self.height(rank) {
                let u = self.lattice.point(rank);
                best = best.max(h - cube.dist_inf_to(&u));
            }
            let mut a = self.lattice.d;
            loop {
                if a == 0 {
                    return Some(best);
                }
                a -= 1;
                ks[a] += 1;
                if ks[a] <= ranges[a].1 {
                    break;
                }
                ks[a] = ranges[a].0;
            }
        }
    }
}

/// Separated peak set for the static-grid family: `m` peaks at pitch `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFamilyParams {
    pub d: u32,
    pub r: f64,
    pub m: u64,
}

impl PeakFamilyParams {
    pub fn new(d: u32, r: f64, m: u64) -> Result<Self> {
        if d == 0 || !(r > 0.0 && r <= 1.0) || m == 0 {
            return Err(Error::InvalidParams(format!(
                "peak family needs d >= 1, r in (0,1], m >= 1 (got d={d}, r={r}, m={m})"
            )));
        }
        if m as f64 * r.powi(d as i32) > 1.0 + 1e-12 {
            return Err(Error::InfeasiblePeaks(format!(
                "m r^d = {} exceeds 1",
                m as f64 * r.powi(d as i32)
            )));
        }
        Ok(Self { d, r, m })
    }

    /// Family `k` for a static grid: `r_k = t_{k-1}^{-1/(d+2)}`, `M_k = floor(r_k^-d)`.
    pub fn from_static_grid(d: u32, t_prev: u64) -> Result<Self> {
        if t_prev == 0 {
            return Err(Error::InvalidParams(
                "previous grid point must be positive".into(),
            ));
        }
        let r = (t_prev as f64).powf(-1.0 / (f64::from(d) + 2.0));
        let m = (r.powi(-(d as i32)) + 1e-9).floor() as u64;
        Self::new(d, r, m)
    }

    /// Peak `u_i`, 1-based, on the origin-anchored lattice.
    pub fn peak(&self, i: u64) -> Result<Point> {
        if i == 0 || i > self.m {
            return Err(Error::IndexOutOfRange {
                index: i as usize,
                max: self.m as usize,
            });
        }
        Ok(PeakLattice::new(self.d as usize, self.r, 0.0).point(u128::from(i - 1)))
    }
}

/// Instance `I_{k,i}`: `3r/4` at `u_1`, `7r/8` at `u_i` (when `i >= 2`),
/// `5r/8` at the other peaks, cone-extended with floor `r/2`.
pub fn static_lower_bound_instance(params: &PeakFamilyParams, i: u64) -> Result<RewardInstance> {
    let r = params.r;
    if i == 0 || i > params.m {
        return Err(Error::IndexOutOfRange {
            index: i as usize,
            max: params.m as usize,
        });
    }
    let lattice = PeakLattice::new(params.d as usize, r, 0.0);
    let mut special = vec![(0u128, 0.75 * r)];
    if i >= 2 {
        special.push((u128::from(i - 1), 0.875 * r));
    }
    let field = ConeField::new(
        lattice,
        u128::from(params.m),
        None,
        0.5 * r,
        0.625 * r,
        special,
    )?;
    let (mu_star, top) = if i >= 2 {
        (0.875 * r, i)
    } else {
        (0.75 * r, 1)
    };
    Ok(RewardInstance {
        descriptor: InstanceDescriptor::StaticLowerBound {
            d: params.d,
            r,
            peaks: params.m,
            instance: i,
        },
        d: params.d as usize,
        x_star: vec![params.peak(top)?],
        field: Field::Cone(field),
        metric: Metric::Inf,
        lipschitz: 1.0,
        mu_star,
        grid_points: DEFAULT_GRID_POINTS,
    })
}

/// Reference static grid for the adaptive construction.
///
/// `T_j = T^((1 - eps^j)/(1 - eps^B))`, `eps = 1/(d+2)`,
/// `r_j = 1/(T_{j-1}^eps B)`, `M_j = floor(r_j^-d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveGrid {
    pub d: u32,
    pub horizon: u64,
    pub batches: u32,
}

impl AdaptiveGrid {
    pub fn new(d: u32, horizon: u64, batches: u32) -> Result<Self> {
        if d == 0 || batches == 0 {
            return Err(Error::InvalidParams("need d >= 1 and B >= 1".into()));
        }
        if horizon < 2 {
            return Err(Error::InvalidHorizon(horizon));
        }
        Ok(Self {
            d,
            horizon,
            batches,
        })
    }

    fn eps(&self) -> f64 {
        1.0 / (f64::from(self.d) + 2.0)
    }

    /// `T_j` for `0 <= j <= B`.
    pub fn reference_point(&self, j: u32) -> f64 {
        if j == self.batches {
            return self.horizon as f64;
        }
        let e = self.eps();
        let expo = (1.0 - e.powi(j as i32)) / (1.0 - e.powi(self.batches as i32));
        (self.horizon as f64).powf(expo)
    }

    pub fn radius(&self, j: u32) -> f64 {
        1.0 / (self.reference_point(j - 1).powf(self.eps()) * f64::from(self.batches))
    }

    pub fn peak_count(&self, j: u32) -> u64 {
        (self.radius(j).powi(-(self.d as i32)) + 1e-9).floor() as u64
    }

    /// Common anchor for every world lattice: the center when all worlds
    /// fit their peaks on a center-anchored lattice, else the origin.
    fn anchor(&self) -> f64 {
        let centered_fits = (1..=self.batches).all(|j| {
            let lat = PeakLattice::new(self.d as usize, self.radius(j), 0.5);
            lat.total() >= u128::from(self.peak_count(j))
        });
        if centered_fits {
            0.5
        } else {
            0.0
        }
    }

    fn lattice(&self, j: u32) -> PeakLattice {
        PeakLattice::new(self.d as usize, self.radius(j), self.anchor())
    }

    /// The shared top location `u_{j,M_j}`, identical for every world.
    pub fn shared_peak(&self) -> Point {
        Point::from_unchecked(vec![self.anchor(); self.d as usize])
    }

    /// `u_{j,k}` for `1 <= k <= M_j - 1`.
    pub fn peak(&self, j: u32, k: u64) -> Result<Point> {
        let m = self.peak_count(j);
        if k == 0 || k >= m {
            return Err(Error::IndexOutOfRange {
                index: k as usize,
                max: m.saturating_sub(1) as usize,
            });
        }
        let (field, _) = self.world_field(j, Some(k))?;
        Ok(field.lattice.point(field.member_rank(u128::from(k - 1))))
    }

    fn world_field(&self, j: u32, k: Option<u64>) -> Result<(ConeField, f64)> {
        let lattice = self.lattice(j);
        let anchor_ks = lattice.nearest(&self.shared_peak());
        let reserved = lattice.rank(&anchor_ks);
        let r1 = self.radius(1);
        let rb = self.radius(self.batches);
        let floor = r1 / 2.0;
        let base_top = floor + rb / 16.0;
        let mut special = vec![(reserved, base_top)];
        let mut mu_star = base_top;
        let members = u128::from(self.peak_count(j).saturating_sub(1));
        let probe = ConeField::new(
            lattice.clone(),
            members,
            Some(reserved),
            floor,
            floor,
            vec![],
        )?;
        if let Some(k) = k {
            let rank = probe.member_rank(u128::from(k - 1));
            let h = floor + self.radius(j) / 16.0 + rb / 16.0;
            special.push((rank, h));
            mu_star = h;
        }
        let field = ConeField::new(lattice, members, Some(reserved), floor, floor, special)?;
        Ok((field, mu_star))
    }
}

/// World `j`, instance `k` of the adaptive construction; `j = B` is the
/// single reference instance `I_B` (pass `k = 1`).
pub fn adaptive_lower_bound_world(grid: &AdaptiveGrid, j: u32, k: u64) -> Result<RewardInstance> {
    if j == 0 || j > grid.batches {
        return Err(Error::IndexOutOfRange {
            index: j as usize,
            max: grid.batches as usize,
        });
    }
    let (field, mu_star, x_star) = if j == grid.batches {
        if k != 1 {
            return Err(Error::IndexOutOfRange {
                index: k as usize,
                max: 1,
            });
        }
        let (f, mu) = grid.world_field(j, None)?;
        (f, mu, grid.shared_peak())
    } else {
        let x = grid.peak(j, k)?;
        let (f, mu) = grid.world_field(j, Some(k))?;
        (f, mu, x)
    };
    Ok(RewardInstance {
        descriptor: InstanceDescriptor::AdaptiveLowerBound {
            d: grid.d,
            horizon: grid.horizon,
            batches: grid.batches,
            world: j,
            instance: k,
        },
        d: grid.d as usize,
        field: Field::Cone(field),
        metric: Metric::Inf,
        lipschitz: 1.0,
        mu_star,
        x_star: vec![x_star],
        grid_points: DEFAULT_GRID_POINTS,
    })
}

/// `N_r` at `r = 2^-depth`, with an exactness flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ZoomingCount {
    pub depth: u32,
    pub count: u64,
    pub exact: bool,
}

/// Counts standard cubes of edge `r = 2^-depth` contained in `S(16 r)`.
///
/// Branch and bound from the unit cube: a subtree is counted whole once its
/// minimum clears `mu* - 16 r`, and dropped once an upper bound on its
/// maximum falls below it.
pub fn zooming_number(instance: &RewardInstance, depth: u32) -> ZoomingCount {
    let r = edge_at_depth(depth);
    let threshold = instance.mu_star() - 16.0 * r;
    let d = instance.dim() as u32;
    let mut count = 0u64;
    let mut exact = true;
    let mut stack = vec![StandardCube::unit(instance.dim())];
    while let Some(q) = stack.pop() {
        let lo = instance.cube_min(&q);
        if lo.value >= threshold {
            exact &= lo.exact;
            count += 1u64 << ((depth - q.depth()) * d);
            continue;
        }
        if q.depth() == depth {
            exact &= lo.exact;
            continue;
        }
        if instance.max_upper_bound(&q) < threshold {
            continue;
        }
        stack.extend(q.partition(2).expect("factor 2 is valid").into_vec());
    }
    ZoomingCount {
        depth,
        count,
        exact,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZoomingEstimate {
    pub table: Vec<ZoomingCount>,
    pub dz_hat: f64,
    pub cz_hat: f64,
    /// Scales used for the slope fit (finest three).
    pub fit_depths: Vec<u32>,
}

/// Fits `log N_r` against `log(1/r)` over the three finest scales
/// `r_min, 2 r_min, 4 r_min`, clips the slope to `[0, d]`, then returns the
/// smallest `a` with `N_r <= a r^-dz_hat` over every tabulated scale
/// `1/2, ..., r_min`.
pub fn zooming_dimension_estimate(
    instance: &RewardInstance,
    min_depth: u32,
) -> Result<ZoomingEstimate> {
    if min_depth < 3 {
        return Err(Error::InvalidParams(
            "need at least three dyadic scales (r_min <= 1/8)".into(),
        ));
    }
    let table: Vec<ZoomingCount> = (1..=min_depth)
        .map(|i| zooming_number(instance, i))
        .collect();
    if table.iter().all(|z| z.count == 0) {
        return Err(Error::UndefinedEstimate(
            "all zooming numbers are zero".into(),
        ));
    }
    let fit: Vec<&ZoomingCount> = table[table.len() - 3..]
        .iter()
        .filter(|z| z.count > 0)
        .collect();
    if fit.len() < 2 {
        return Err(Error::UndefinedEstimate(
            "fewer than two nonzero zooming numbers at the finest scales".into(),
        ));
    }
    let xs: Vec<f64> = fit
        .iter()
        .map(|z| f64::from(z.depth) * std::f64::consts::LN_2)
        .collect();
    let ys: Vec<f64> = fit.iter().map(|z| (z.count as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    // snap round-off so exact power laws give exact exponents
    let slope = if (slope - slope.round()).abs() < 1e-9 {
        slope.round()
    } else {
        slope
    };
    let dz_hat = slope.clamp(0.0, instance.dim() as f64);
    let cz_hat = table
        .iter()
        .map(|z| z.count as f64 * edge_at_depth(z.depth).powf(dz_hat))
        .fold(0.0, f64::max);
    Ok(ZoomingEstimate {
        fit_depths: fit.iter().map(|z| z.depth).collect(),
        table,
        dz_hat,
        cz_hat,
    })
}

/// Seeded standard-Gaussian noise, consumed in pull order.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    scale: f64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self::with_scale(seed, 1.0)
    }

    /// `scale = 0` turns the channel noiseless.
    pub fn with_scale(seed: u64, scale: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn next_noise(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.scale * z
    }
}

/// `y = mean(x) + eps`.
pub fn sample_reward(instance: &RewardInstance, noise: &mut NoiseStream, x: &Point) -> f64 {
    instance.mean(x) + noise.next_noise()
}

/// Largest `|mean(x) - mean(y)| / |x - y|_inf` over `pairs` random pairs.
pub fn max_lipschitz_ratio(instance: &RewardInstance, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = StandardCube::unit(instance.dim());
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let x = unit.sample_uniform(&mut rng);
        let y = unit.sample_uniform(&mut rng);
        let dist = x.dist_inf(&y);
        if dist > 0.0 {
            worst = worst.max((instance.mean(&x) - instance.mean(&y)).abs() / dist);
        }
    }
    worst
}
