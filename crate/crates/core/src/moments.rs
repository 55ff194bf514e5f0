//! Empirical objective and constraint values of a single predictor, given
//! its predictions on the dataset.
//!
//! Every function takes the predictions `f(X_i)` (in dataset order) rather
//! than the predictor itself, so that callers evaluate a model once and
//! reuse the result.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::discretize::{cost_coefficient_at, discretized_loss_snapped, Grid, LabelCover};
use crate::loss::LossSpec;
use crate::numeric::{pairwise_mean, pairwise_sum};

/// Disparities `gamma_{a,z}` indexed by group and grid index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    groups: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn zeros(groups: usize, n_points: usize) -> Self {
        MomentVector { groups, n_points, values: vec![0.0; groups * n_points] }
    }

    pub fn from_values(groups: usize, n_points: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), groups * n_points, "moment table has wrong size");
        MomentVector { groups, n_points, values }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// `gamma_{a, z_j}` for grid index `j` in `1..=N`.
    #[inline]
    pub fn get(&self, a: usize, j: usize) -> f64 {
        self.values[a * self.n_points + j - 1]
    }

    /// Flat storage, `a * N + (j - 1)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `max_{a,z} |gamma_{a,z}|`, the Kolmogorov-Smirnov style disparity.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += w * other`.
    pub fn add_scaled(&mut self, other: &MomentVector, w: f64) {
        assert_eq!(self.values.len(), other.values.len());
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += w * o;
        }
    }

    pub fn scaled(&self, w: f64) -> MomentVector {
        MomentVector {
            groups: self.groups,
            n_points: self.n_points,
            values: self.values.iter().map(|v| v * w).collect(),
        }
    }
}

/// Per-group mean losses `gamma^BGL_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BglVector {
    pub values: Vec<f64>,
}

impl BglVector {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Snapped labels `y_i` for every example.
pub fn snapped_labels(data: &Dataset, cover: &LabelCover) -> Vec<f64> {
    data.examples().iter().map(|e| cover.snap(e.label).value).collect()
}

/// `mean_i [ l_alpha(Y_i, f(X_i)) - l(snap(Y_i), alpha/2) ]`, one pass.
pub fn empirical_cost(
    data: &Dataset,
    spec: LossSpec,
    cover: &LabelCover,
    grid: &Grid,
    preds: &[f64],
) -> f64 {
    empirical_cost_snapped(spec, grid, &snapped_labels(data, cover), preds)
}

pub fn empirical_cost_snapped(spec: LossSpec, grid: &Grid, snapped: &[f64], preds: &[f64]) -> f64 {
    assert_eq!(snapped.len(), preds.len());
    let half = grid.alpha() / 2.0;
    let terms: Vec<f64> = snapped
        .iter()
        .zip(preds)
        .map(|(&y, &u)| discretized_loss_snapped(spec, grid, y, u) - spec.value(y, half))
        .collect();
    pairwise_mean(&terms)
}

/// The cost as an explicit average over the uniform threshold:
/// `mean_i (1/N) sum_z c(snap(Y_i), z) 1{f(X_i) >= z}`. Reference for testing.
pub fn naive_empirical_cost(
    data: &Dataset,
    spec: LossSpec,
    cover: &LabelCover,
    grid: &Grid,
    preds: &[f64],
) -> f64 {
    let n = grid.n_points();
    let mut total = 0.0;
    for (e, &u) in data.examples().iter().zip(preds) {
        let y = cover.snap(e.label).value;
        for j in 1..=n {
            if u >= grid.point(j) {
                total += cost_coefficient_at(spec, grid, y, j) / n as f64;
            }
        }
    }
    total / data.len() as f64
}

/// `P[f >= z | A = a] - P[f >= z]` for all groups and grid points, via a
/// descending sort of each group's predictions and one scan over the grid.
pub fn group_cdf_moments(data: &Dataset, grid: &Grid, preds: &[f64]) -> MomentVector {
    assert_eq!(preds.len(), data.len());
    let n = grid.n_points();
    let mut counts = vec![0usize; data.group_count() * n];
    let mut sorted = Vec::new();
    for a in 0..data.group_count() {
        sorted.clear();
        sorted.extend(data.group_members(a).iter().map(|&i| preds[i]));
        sorted.sort_by(|x, y| y.total_cmp(x));
        let mut reached = 0;
        for j in (1..=n).rev() {
            let z = grid.point(j);
            while reached < sorted.len() && sorted[reached] >= z {
                reached += 1;
            }
            counts[a * n + j - 1] = reached;
        }
    }
    moments_from_counts(data, n, &counts)
}

/// The same quantity as [`group_cdf_moments`] by a direct double loop.
pub fn naive_moments(data: &Dataset, grid: &Grid, preds: &[f64]) -> MomentVector {
    let n = grid.n_points();
    let mut counts = vec![0usize; data.group_count() * n];
    for a in 0..data.group_count() {
        for j in 1..=n {
            let z = grid.point(j);
            counts[a * n + j - 1] =
                data.examples().iter().zip(preds).filter(|(e, &u)| e.group == a && u >= z).count();
        }
    }
    moments_from_counts(data, n, &counts)
}

fn moments_from_counts(data: &Dataset, n: usize, counts: &[usize]) -> MomentVector {
    let groups = data.group_count();
    let sizes = data.group_sizes();
    let freqs = data.group_freqs();
    let cond: Vec<f64> = (0..groups * n).map(|k| counts[k] as f64 / sizes[k / n] as f64).collect();
    let mut values = vec![0.0; groups * n];
    for j in 0..n {
        let overall = pairwise_sum(&(0..groups).map(|a| freqs[a] * cond[a * n + j]).collect::<Vec<_>>());
        for a in 0..groups {
            values[a * n + j] = cond[a * n + j] - overall;
        }
    }
    MomentVector { groups, n_points: n, values }
}

/// Per-group mean of `l(Y_i, f(X_i))`.
pub fn bgl_group_losses(data: &Dataset, spec: LossSpec, preds: &[f64]) -> BglVector {
    assert_eq!(preds.len(), data.len());
    let ex = data.examples();
    let values = (0..data.group_count())
        .map(|a| {
            let terms: Vec<f64> =
                data.group_members(a).iter().map(|&i| spec.value(ex[i].label, preds[i])).collect();
            pairwise_mean(&terms)
        })
        .collect();
    BglVector { values }
}

/// `mean_i l(Y_i, f(X_i))`.
pub fn empirical_loss(data: &Dataset, spec: LossSpec, preds: &[f64]) -> f64 {
    let terms: Vec<f64> =
        data.examples().iter().zip(preds).map(|(e, &u)| spec.value(e.label, u)).collect();
    pairwise_mean(&terms)
}
