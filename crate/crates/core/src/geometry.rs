//! Dyadic cube arithmetic over the arm space `[0,1]^d` with the sup-norm metric.
//!
//! Cubes are identified by an integer `(depth, index)` pair, so partition
//! chains of any length stay exact. Corners are only materialised as floats
//! when a caller asks for them.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest supported dyadic level. Cube indices are stored as `u32`.
pub const MAX_DEPTH: u32 = 30;

/// An arm in `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidPoint(
                "point must have at least one coordinate".into(),
            ));
        }
        if let Some(c) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidPoint(format!("coordinate {c} outside [0,1]")));
        }
        Ok(Self(coords))
    }

    /// Builds a point without range checks. Callers guarantee `[0,1]^d`.
    pub(crate) fn from_unchecked(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Sup-norm distance.
    pub fn dist_inf(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn dist_l2(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// A standard (dyadic) cube of edge `2^-depth`.
///
/// Occupies `[k_j 2^-depth, (k_j + 1) 2^-depth]` on axis `j`. Cubes are closed,
/// so boundary points belong to every cube that touches them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StandardCube {
    depth: u32,
    index: Vec<u32>,
}

impl StandardCube {
    pub fn new(depth: u32, index: Vec<u32>) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::DepthOverflow(depth));
        }
        if index.is_empty() {
            return Err(Error::InvalidCube(
                "cube must have at least one axis".into(),
            ));
        }
        let side = 1u64 << depth;
        if let Some(k) = index.iter().find(|&&k| u64::from(k) >= side) {
            return Err(Error::InvalidCube(format!(
                "index {k} out of range for depth {depth}"
            )));
        }
        Ok(Self { depth, index })
    }

    /// The whole arm space `[0,1]^d`.
    pub fn unit(dim: usize) -> Self {
        Self {
            depth: 0,
            index: vec![0; dim],
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn index(&self) -> &[u32] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn edge(&self) -> f64 {
        edge_at_depth(self.depth)
    }

    /// Closed interval occupied on `axis`.
    pub fn interval(&self, axis: usize) -> (f64, f64) {
        let e = self.edge();
        let k = f64::from(self.index[axis]);
        (k * e, (k + 1.0) * e)
    }

    pub fn lower_corner(&self) -> Point {
        Point::from_unchecked((0..self.dim()).map(|a| self.interval(a).0).collect())
    }

    pub fn center(&self) -> Point {
        let e = self.edge();
        Point::from_unchecked(
            self.index
                .iter()
                .map(|&k| (f64::from(k) + 0.5) * e)
                .collect(),
        )
    }

    /// All `2^d` corners.
    pub fn corners(&self) -> impl Iterator<Item = Point> + '_ {
        let d = self.dim();
        (0..1usize << d).map(move |mask| {
            Point::from_unchecked(
                (0..d)
                    .map(|a| {
                        let (lo, hi) = self.interval(a);
                        if mask >> a & 1 == 1 {
                            hi
                        } else {
                            lo
                        }
                    })
                    .collect(),
            )
        })
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.dim() == self.dim()
            && x.coords().iter().enumerate().all(|(a, &c)| {
                let (lo, hi) = self.interval(a);
                lo <= c && c <= hi
            })
    }

    /// Sup-norm distance from `x` to the nearest point of the cube (0 inside).
    pub fn dist_inf_to(&self, x: &Point) -> f64 {
        x.coords()
            .iter()
            .enumerate()
            .map(|(a, &c)| {
                let (lo, hi) = self.interval(a);
                (lo - c).max(c - hi).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Sup-norm distance from `x` to the farthest point of the cube.
    pub fn far_dist_inf(&self, x: &Point) -> f64 {
        x.coords()
            .iter()
            .enumerate()
            .map(|(a, &c)| {
                let (lo, hi) = self.interval(a);
                (c - lo).abs().max((hi - c).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Ancestor at `depth` (which must not exceed the cube's own depth).
    pub fn ancestor(&self, depth: u32) -> Option<StandardCube> {
        if depth > self.depth {
            return None;
        }
        let shift = self.depth - depth;
        Some(Self {
            depth,
            index: self.index.iter().map(|&k| k >> shift).collect(),
        })
    }

    /// Splits the cube into `factor^d` children of edge `edge / factor`.
    ///
    /// `factor` must be a power of two no smaller than 2. Children come out
    /// in lexicographic index order.
    pub fn partition(&self, factor: u64) -> Result<CubeSet> {
        let levels = power_of_two_levels(factor)?;
        self.refine(levels)
    }

    /// Splits the cube into the `2^(levels d)` descendants `levels` below it.
    pub fn refine(&self, levels: u32) -> Result<CubeSet> {
        let depth = self.depth + levels;
        if depth > MAX_DEPTH {
            return Err(Error::DepthOverflow(depth));
        }
        let per_axis = 1u32 << levels;
        let d = self.dim();
        let total = (per_axis as usize)
            .checked_pow(d as u32)
            .ok_or(Error::DepthOverflow(depth))?;
        let mut cubes = Vec::with_capacity(total);
        let mut offset = vec![0u32; d];
        for _ in 0..total {
            cubes.push(Self {
                depth,
                index: self
                    .index
                    .iter()
                    .zip(&offset)
                    .map(|(&k, &o)| (k << levels) + o)
                    .collect(),
            });
            // odometer, last axis fastest
            for a in (0..d).rev() {
                offset[a] += 1;
                if offset[a] < per_axis {
                    break;
                }
                offset[a] = 0;
            }
        }
        Ok(CubeSet { depth, cubes })
    }

    /// Uniform point inside the cube.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::from_unchecked(
            (0..self.dim())
                .map(|a| {
                    let (lo, hi) = self.interval(a);
                    lo + (hi - lo) * rng.gen::<f64>()
                })
                .collect(),
        )
    }
}

impl fmt::Display for StandardCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.depth)?;
        for (i, k) in self.index.iter().enumerate() {
            if i > 0 {
                write!(f, "-")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

/// Edge length `2^-depth`.
pub fn edge_at_depth(depth: u32) -> f64 {
    (-f64::from(depth)).exp2()
}

/// Returns `j` when `factor == 2^j` with `j >= 1`.
pub fn power_of_two_levels(factor: u64) -> Result<u32> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::ScheduleMismatch(format!(
            "partition factor {factor} is not a power of two >= 2"
        )));
    }
    Ok(factor.trailing_zeros())
}

/// Cubes sharing one depth, with no duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeSet {
    depth: u32,
    cubes: Vec<StandardCube>,
}

impl CubeSet {
    pub fn new(depth: u32, mut cubes: Vec<StandardCube>) -> Result<Self> {
        if let Some(c) = cubes.iter().find(|c| c.depth != depth) {
            return Err(Error::InvalidCube(format!(
                "cube {c} does not sit at depth {depth}"
            )));
        }
        cubes.sort();
        if cubes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidCube("duplicate cube in set".into()));
        }
        Ok(Self { depth, cubes })
    }

    /// The `2^(depth d)` cubes tiling `[0,1]^d` at `depth`.
    pub fn grid(dim: usize, depth: u32) -> Result<Self> {
        StandardCube::unit(dim).refine(depth)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, StandardCube> {
        self.cubes.iter()
    }

    pub fn as_slice(&self) -> &[StandardCube] {
        &self.cubes
    }

    pub fn into_vec(self) -> Vec<StandardCube> {
        self.cubes
    }

    /// Partitions every member by `factor`; the result stays sorted.
    pub fn partition_all(&self, factor: u64) -> Result<CubeSet> {
        let levels = power_of_two_levels(factor)?;
        let depth = self.depth + levels;
        let mut out = Vec::new();
        for c in &self.cubes {
            out.extend(c.refine(levels)?.into_vec());
        }
        Ok(CubeSet { depth, cubes: out })
    }

    /// Total Lebesgue measure of the members.
    pub fn measure(&self) -> f64 {
        let d = self.cubes.first().map_or(0, StandardCube::dim);
        self.cubes.len() as f64 * edge_at_depth(self.depth).powi(d as i32)
    }
}

impl<'a> IntoIterator for &'a CubeSet {
    type Item = &'a StandardCube;
    type IntoIter = std::slice::Iter<'a, StandardCube>;

    fn into_iter(self) -> Self::IntoIter {
        self.cubes.iter()
    }
}
