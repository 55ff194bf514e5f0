//! Prediction grid, label cover, discretized loss and the per-threshold cost
//! coefficients that turn regression into cost-sensitive classification.
//!
//! Grid points are addressed by integer index `j` with value `j / N`
//! (index 0 denotes the empty prefix, value 0). All snapping goes through
//! index arithmetic against those exact values, so `f(x) >= z_j` and
//! `floor_index(f(x)) >= j` always agree.

use log::warn;

use crate::error::{check_unit, FairError, Result};
use crate::loss::LossSpec;

/// The grid `Z = {j / N : j = 1..N}` with granularity `alpha = 1 / N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(FairError::InvalidArgument("grid size must be at least 1".into()));
        }
        Ok(Grid { n: n_points })
    }

    /// Grid whose granularity is `alpha`; `1 / alpha` must be (nearly) an integer.
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(FairError::InvalidArgument(format!("granularity {alpha} not in (0, 1]")));
        }
        let n = (1.0 / alpha).round();
        if (n * alpha - 1.0).abs() > 1e-9 {
            return Err(FairError::InvalidArgument(format!("1 / {alpha} is not an integer")));
        }
        Grid::new(n as usize)
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Value of grid index `j` (`0..=N`).
    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    /// The grid `Z` in increasing order.
    pub fn points(&self) -> Vec<f64> {
        (1..=self.n).map(|j| self.point(j)).collect()
    }

    /// Largest `j` in `0..=N` with `point(j) <= u`; 0 for `u < 1/N`.
    #[inline]
    pub fn floor_index(&self, u: f64) -> usize {
        if !(u > 0.0) {
            return 0;
        }
        let mut j = ((u * self.n as f64).floor() as usize).min(self.n);
        while j < self.n && self.point(j + 1) <= u {
            j += 1;
        }
        while j > 0 && self.point(j) > u {
            j -= 1;
        }
        j
    }

    /// Smallest `j` in `0..=N` with `point(j) >= z`; `N` for `z > 1`.
    pub fn ceil_index(&self, z: f64) -> usize {
        let j = self.floor_index(z);
        if self.point(j) >= z || j == self.n {
            j
        } else {
            j + 1
        }
    }

    /// Grid index of `z` if `z` is exactly a point of `Z`.
    pub fn index_of(&self, z: f64) -> Option<usize> {
        let j = self.floor_index(z);
        (j >= 1 && self.point(j) == z).then_some(j)
    }

    /// Largest multiple of alpha that is `<= u`.
    pub fn snap_down(&self, u: f64) -> f64 {
        self.point(self.floor_index(u))
    }

    /// Smallest multiple of alpha that is `>= z`.
    pub fn snap_up(&self, z: f64) -> f64 {
        self.point(self.ceil_index(z))
    }

    /// `point(j) + alpha/2`, clamped to 1.
    #[inline]
    pub fn upper_mid(&self, j: usize) -> f64 {
        ((2 * j + 1) as f64 / (2 * self.n) as f64).min(1.0)
    }

    /// `point(j) - alpha/2` for `j >= 1`.
    #[inline]
    pub fn lower_mid(&self, j: usize) -> f64 {
        debug_assert!(j >= 1);
        (2 * j - 1) as f64 / (2 * self.n) as f64
    }
}

/// Free-function form of [`Grid::new`].
pub fn build_grid(n_points: usize) -> Result<Grid> {
    Grid::new(n_points)
}

pub fn snap_down(u: f64, alpha: f64) -> Result<f64> {
    check_unit("u", u)?;
    Ok(Grid::from_alpha(alpha)?.snap_down(u))
}

pub fn snap_up(z: f64, alpha: f64) -> Result<f64> {
    check_unit("z", z)?;
    Ok(Grid::from_alpha(alpha)?.snap_up(z))
}

/// Greedy alpha/2-cover of the observed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCover {
    points: Vec<f64>,
    half_alpha: f64,
}

/// Result of snapping a label onto the cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapped {
    pub index: usize,
    pub value: f64,
}

impl LabelCover {
    /// Left-to-right scan over the sorted distinct labels: a label joins the
    /// cover iff it exceeds the last accepted point by more than `alpha / 2`.
    pub fn build(labels: &[f64], alpha: f64) -> Result<Self> {
        if labels.is_empty() {
            return Err(FairError::InvalidArgument("cannot cover an empty label set".into()));
        }
        if !(alpha > 0.0) {
            return Err(FairError::InvalidArgument(format!("granularity {alpha} must be > 0")));
        }
        for &y in labels {
            check_unit("label", y)?;
        }
        let mut sorted = labels.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let half_alpha = alpha / 2.0;
        let mut points: Vec<f64> = Vec::new();
        for y in sorted {
            match points.last() {
                Some(&last) if y - last <= half_alpha => {}
                _ => points.push(y),
            }
        }
        Ok(LabelCover { points, half_alpha })
    }

    pub fn for_grid(labels: &[f64], grid: &Grid) -> Result<Self> {
        LabelCover::build(labels, grid.alpha())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest cover point within `alpha / 2` of `y`. Labels the cover was
    /// not built from may have no such point; they go to the nearest point
    /// and a warning is logged.
    pub fn snap(&self, y: f64) -> Snapped {
        let k = self.points.partition_point(|&p| y - p > self.half_alpha);
        if k < self.points.len() && (self.points[k] - y).abs() <= self.half_alpha {
            return Snapped { index: k, value: self.points[k] };
        }
        let nearest = match k {
            0 => 0,
            k if k == self.points.len() => k - 1,
            k if (self.points[k] - y).abs() < (y - self.points[k - 1]).abs() => k,
            k => k - 1,
        };
        warn!(
            "label {y} is farther than alpha/2 from the cover; snapping to {}",
            self.points[nearest]
        );
        Snapped { index: nearest, value: self.points[nearest] }
    }
}

/// Free-function form of [`LabelCover::build`].
pub fn build_label_cover(labels: &[f64], alpha: f64) -> Result<LabelCover> {
    LabelCover::build(labels, alpha)
}

/// `l(y_snapped, floor(u) + alpha/2)` with `l(y, v) = l(y, 1)` for `v >= 1`.
pub fn discretized_loss(spec: LossSpec, cover: &LabelCover, grid: &Grid, y: f64, u: f64) -> Result<f64> {
    check_unit("label", y)?;
    check_unit("prediction", u)?;
    Ok(discretized_loss_snapped(spec, grid, cover.snap(y).value, u))
}

#[inline]
pub(crate) fn discretized_loss_snapped(spec: LossSpec, grid: &Grid, y_snapped: f64, u: f64) -> f64 {
    spec.value(y_snapped, grid.upper_mid(grid.floor_index(u)))
}

/// `N (l(y, z_j + alpha/2) - l(y, z_j - alpha/2))` for grid index `j` in `1..=N`.
#[inline]
pub fn cost_coefficient_at(spec: LossSpec, grid: &Grid, y_snapped: f64, j: usize) -> f64 {
    grid.n_points() as f64 * (spec.value(y_snapped, grid.upper_mid(j)) - spec.value(y_snapped, grid.lower_mid(j)))
}

/// Checked cost coefficient `c(y, z)`; `z` must be a grid point.
pub fn cost_coefficient(spec: LossSpec, grid: &Grid, y_snapped: f64, z: f64) -> Result<f64> {
    check_unit("label", y_snapped)?;
    let j = grid
        .index_of(z)
        .ok_or_else(|| FairError::InvalidArgument(format!("{z} is not a point of the grid")))?;
    Ok(cost_coefficient_at(spec, grid, y_snapped, j))
}

/// `c(y, z_j)` for every cover point and grid index, stored row-major by
/// cover index; column `j - 1` holds grid index `j`.
#[derive(Debug, Clone)]
pub struct CostTable {
    n: usize,
    values: Vec<f64>,
}

impl CostTable {
    pub fn new(spec: LossSpec, cover: &LabelCover, grid: &Grid) -> Self {
        let n = grid.n_points();
        let mut values = Vec::with_capacity(cover.len() * n);
        for &y in cover.points() {
            values.extend((1..=n).map(|j| cost_coefficient_at(spec, grid, y, j)));
        }
        CostTable { n, values }
    }

    /// Coefficients for cover point `k`, indexed by `j - 1`.
    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }
}
