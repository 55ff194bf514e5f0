//! Exponentiated-gradient saddle-point solver for statistical parity.
//!
//! The learner plays threshold classifiers `h_f(x, z) = 1{f(x) >= z}`; the
//! multiplier player holds one non-negative dual per signed constraint
//! `+-gamma_{a,z} <= eps_a`, parameterized through a softmax with an extra
//! slack coordinate so that `||lambda||_1 < B`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::discretize::{CostTable, Grid, LabelCover};
use crate::error::{FairError, Result};
use crate::loss::LossSpec;
use crate::moments::{empirical_cost_snapped, group_cdf_moments, MomentVector};
use crate::oracles::{net_lambda, OracleKind, SpOracle};
use crate::predictor::{LinearModel, RandomizedPredictor};

/// Everything the solver and the oracles need about one training set:
/// the grid, the label cover built from the training labels, each
/// example's snapped label and the cost table `c(y, z)`.
#[derive(Debug, Clone)]
pub struct SpProblem<'a> {
    data: &'a Dataset,
    loss: LossSpec,
    grid: Grid,
    cover: LabelCover,
    cover_index: Vec<usize>,
    snapped: Vec<f64>,
    costs: CostTable,
}

/// Cost and disparities of one predictor on the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub moments: MomentVector,
}

impl<'a> SpProblem<'a> {
    pub fn new(data: &'a Dataset, loss: LossSpec, grid: Grid) -> Result<Self> {
        let cover = LabelCover::for_grid(&data.labels(), &grid)?;
        Ok(Self::with_cover(data, loss, grid, cover))
    }

    pub fn with_cover(data: &'a Dataset, loss: LossSpec, grid: Grid, cover: LabelCover) -> Self {
        let snaps: Vec<_> = data.examples().iter().map(|e| cover.snap(e.label)).collect();
        let costs = CostTable::new(loss, &cover, &grid);
        SpProblem {
            data,
            loss,
            grid,
            cover_index: snaps.iter().map(|s| s.index).collect(),
            snapped: snaps.iter().map(|s| s.value).collect(),
            cover,
            costs,
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn loss(&self) -> LossSpec {
        self.loss
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cover(&self) -> &LabelCover {
        &self.cover
    }

    /// Cover index of each example's snapped label.
    pub fn cover_index(&self) -> &[usize] {
        &self.cover_index
    }

    pub fn snapped_labels(&self) -> &[f64] {
        &self.snapped
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    pub fn evaluate_predictions(&self, preds: &[f64]) -> Evaluation {
        Evaluation {
            cost: empirical_cost_snapped(self.loss, &self.grid, &self.snapped, preds),
            moments: group_cdf_moments(self.data, &self.grid, preds),
        }
    }

    pub fn evaluate(&self, model: &LinearModel) -> Result<Evaluation> {
        Ok(self.evaluate_predictions(&model.predict_dataset(self.data)?))
    }
}

/// Signed dual table: `plus[a,z]` prices `gamma <= eps`, `minus[a,z]` prices
/// `-gamma <= eps`. Flat layout `a * N + (j - 1)` as in [`MomentVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTable {
    pub groups: usize,
    pub n_points: usize,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl DualTable {
    pub fn zeros(groups: usize, n_points: usize) -> Self {
        let len = groups * n_points;
        DualTable { groups, n_points, plus: vec![0.0; len], minus: vec![0.0; len] }
    }

    pub fn l1_norm(&self) -> f64 {
        self.plus.iter().chain(&self.minus).map(|v| v.abs()).sum()
    }

    fn add_assign(&mut self, other: &DualTable) {
        for (s, o) in self.plus.iter_mut().zip(&other.plus) {
            *s += o;
        }
        for (s, o) in self.minus.iter_mut().zip(&other.minus) {
            *s += o;
        }
    }

    fn scaled(&self, w: f64) -> DualTable {
        DualTable {
            groups: self.groups,
            n_points: self.n_points,
            plus: self.plus.iter().map(|v| v * w).collect(),
            minus: self.minus.iter().map(|v| v * w).collect(),
        }
    }
}

/// Softmax parameters of the multiplier player.
#[derive(Debug, Clone, PartialEq)]
pub struct DualStateSp {
    pub theta_plus: Vec<f64>,
    pub theta_minus: Vec<f64>,
    pub bound: f64,
    groups: usize,
    n_points: usize,
}

impl DualStateSp {
    pub fn new(groups: usize, n_points: usize, bound: f64) -> Self {
        let len = groups * n_points;
        DualStateSp { theta_plus: vec![0.0; len], theta_minus: vec![0.0; len], bound, groups, n_points }
    }

    pub fn lambda(&self) -> DualTable {
        lambda_from_theta(&self.theta_plus, &self.theta_minus, self.groups, self.n_points, self.bound)
    }
}

/// `lambda^s = B exp(theta^s) / (1 + sum exp(theta^+) + sum exp(theta^-))`,
/// evaluated after subtracting `max(0, max theta)`.
pub fn lambda_from_theta(
    theta_plus: &[f64],
    theta_minus: &[f64],
    groups: usize,
    n_points: usize,
    bound: f64,
) -> DualTable {
    let shift = theta_plus.iter().chain(theta_minus).copied().fold(0.0f64, f64::max);
    let ep: Vec<f64> = theta_plus.iter().map(|t| (t - shift).exp()).collect();
    let em: Vec<f64> = theta_minus.iter().map(|t| (t - shift).exp()).collect();
    let denom = (-shift).exp()
        + crate::numeric::pairwise_sum(&ep)
        + crate::numeric::pairwise_sum(&em);
    DualTable {
        groups,
        n_points,
        plus: ep.iter().map(|e| bound * e / denom).collect(),
        minus: em.iter().map(|e| bound * e / denom).collect(),
    }
}

/// `cost + sum_{a,z} [lambda^+ (gamma - eps_a) + lambda^- (-gamma - eps_a)]`.
pub fn lagrangian_sp(cost: f64, moments: &MomentVector, lambda: &DualTable, eps_hat: &[f64]) -> f64 {
    let n = moments.n_points();
    let mut total = cost;
    for (k, &g) in moments.values().iter().enumerate() {
        let eps = eps_hat[k / n];
        total += lambda.plus[k] * (g - eps) + lambda.minus[k] * (-g - eps);
    }
    total
}

/// Best response of the multiplier player: all of `B` on the most violated
/// signed constraint, or zero if nothing is violated. Ties go to the lowest
/// `(a, z)` index.
pub fn best_lambda_sp(moments: &MomentVector, eps_hat: &[f64], bound: f64) -> DualTable {
    let n = moments.n_points();
    let mut out = DualTable::zeros(moments.groups(), n);
    let mut best: Option<(usize, f64)> = None;
    for (k, &g) in moments.values().iter().enumerate() {
        let v = g.abs() - eps_hat[k / n];
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    if let Some((k, v)) = best {
        if v > 0.0 {
            let g = moments.values()[k];
            if g > eps_hat[k / n] {
                out.plus[k] = bound;
            } else {
                out.minus[k] = bound;
            }
        }
    }
    out
}

/// `theta^+ += eta (gamma - eps)`, `theta^- += eta (-gamma - eps)`.
pub fn exp_grad_step(state: &mut DualStateSp, moments: &MomentVector, eps_hat: &[f64], eta: f64) {
    let n = moments.n_points();
    for (k, &g) in moments.values().iter().enumerate() {
        let eps = eps_hat[k / n];
        state.theta_plus[k] += eta * (g - eps);
        state.theta_minus[k] += eta * (-g - eps);
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpConfig {
    /// Per-group slack; a single entry is broadcast to every group.
    pub eps_hat: Vec<f64>,
    pub bound: f64,
    pub nu: f64,
    pub grid_size: usize,
    pub max_iters: usize,
    pub oracle: OracleKind,
    /// `C'` in `eps_a + C' / sqrt(n_a)`; zero keeps the given slacks.
    #[serde(default)]
    pub slack_scale: f64,
}

impl Default for SpConfig {
    fn default() -> Self {
        SpConfig {
            eps_hat: vec![0.05],
            bound: 10.0,
            nu: 1e-3,
            grid_size: 40,
            max_iters: 5000,
            oracle: OracleKind::Ls,
            slack_scale: 0.0,
        }
    }
}

impl SpConfig {
    pub fn validate(&self, groups: usize) -> Result<()> {
        let bad = |m: String| Err(FairError::InvalidArgument(m));
        if !(self.bound > 0.0) {
            return bad(format!("bound B must be > 0, got {}", self.bound));
        }
        if !(self.nu > 0.0) {
            return bad(format!("threshold nu must be > 0, got {}", self.nu));
        }
        if self.grid_size == 0 || self.max_iters == 0 {
            return bad("grid size and iteration cap must be >= 1".into());
        }
        if self.eps_hat.len() != 1 && self.eps_hat.len() != groups {
            return bad(format!("{} slacks given for {groups} groups", self.eps_hat.len()));
        }
        if self.eps_hat.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return bad("slacks must lie in [0, 1]".into());
        }
        if !(self.slack_scale >= 0.0) {
            return bad("slack scale must be >= 0".into());
        }
        Ok(())
    }

    /// Per-group slacks after broadcasting and the optional `C' n_a^{-1/2}`
    /// adjustment, capped at 1.
    pub fn effective_slacks(&self, data: &Dataset) -> Vec<f64> {
        broadcast_slacks(&self.eps_hat, self.slack_scale, data)
    }

    /// Iteration bound `16 B^2 ln(2|A|N + 1) / nu^2` for exact best responses.
    pub fn iteration_bound(&self, groups: usize) -> f64 {
        16.0 * self.bound * self.bound * ((2 * groups * self.grid_size + 1) as f64).ln()
            / (self.nu * self.nu)
    }
}

pub(crate) fn broadcast_slacks(given: &[f64], scale: f64, data: &Dataset) -> Vec<f64> {
    (0..data.group_count())
        .map(|a| {
            let base = if given.len() == 1 { given[0] } else { given[a] };
            (base + scale / (data.group_sizes()[a] as f64).sqrt()).min(1.0)
        })
        .collect()
}

/// One line of the iteration history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `L(Q_t, lambda_bar_t)`.
    pub lagrangian: f64,
    /// Largest constraint excess of `Q_t` (negative when all hold with room).
    pub max_violation: f64,
    pub nu_upper: f64,
    /// Raw lower gap; may be negative with heuristic oracles.
    pub nu_lower: f64,
}

#[derive(Debug, Clone)]
pub struct SpResult {
    /// Uniform mixture of the learner's responses `h_1..h_T`.
    pub q_hat: RandomizedPredictor,
    pub lambda_bar: DualTable,
    /// `cost(Q_hat)` on the training set.
    pub cost: f64,
    /// `gamma(Q_hat)` on the training set.
    pub moments: MomentVector,
    pub nu_upper: f64,
    /// Certificate value `max(nu_lower_raw, 0)`.
    pub nu_lower: f64,
    pub nu_lower_raw: f64,
    pub iterations: usize,
    pub converged: bool,
    pub eps_hat: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl SpResult {
    /// `max_{a,z} (|gamma_{a,z}(Q_hat)| - eps_a)`.
    pub fn max_violation(&self) -> f64 {
        max_excess(&self.moments, &self.eps_hat)
    }
}

fn max_excess(moments: &MomentVector, eps: &[f64]) -> f64 {
    let n = moments.n_points();
    moments
        .values()
        .iter()
        .enumerate()
        .map(|(k, g)| g.abs() - eps[k / n])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Remembers evaluations of repeated predictors (oracles over small
/// classes return the same model many times).
#[derive(Default)]
struct EvalCache {
    entries: HashMap<Vec<u64>, Evaluation>,
}

impl EvalCache {
    const CAPACITY: usize = 1024;

    fn evaluate(&mut self, problem: &SpProblem<'_>, model: &LinearModel) -> Result<Evaluation> {
        let key: Vec<u64> =
            model.weights.iter().chain(std::iter::once(&model.intercept)).map(|v| (v + 0.0).to_bits()).collect();
        if let Some(e) = self.entries.get(&key) {
            return Ok(e.clone());
        }
        let e = problem.evaluate(model)?;
        if self.entries.len() < Self::CAPACITY {
            self.entries.insert(key, e.clone());
        }
        Ok(e)
    }
}

/// Runs the saddle-point iteration until both gaps are within `nu` or the
/// iteration cap is hit. A capped run returns the current mixture with
/// `converged = false`.
pub fn run_sp(problem: &SpProblem<'_>, config: &SpConfig, oracle: &mut dyn SpOracle) -> Result<SpResult> {
    let data = problem.data();
    config.validate(data.group_count())?;
    if config.grid_size != problem.grid().n_points() {
        return Err(FairError::InvalidArgument(format!(
            "config grid size {} does not match problem grid {}",
            config.grid_size,
            problem.grid().n_points()
        )));
    }
    let eps = config.effective_slacks(data);
    let (groups, n_points) = (data.group_count(), problem.grid().n_points());
    let bound = config.bound;
    let eta = config.nu / (8.0 * bound);

    let mut state = DualStateSp::new(groups, n_points, bound);
    let mut iterates: Vec<LinearModel> = Vec::new();
    let mut cost_sum = 0.0;
    let mut gamma_sum = MomentVector::zeros(groups, n_points);
    let mut lambda_sum = DualTable::zeros(groups, n_points);
    let mut history = Vec::new();
    let mut cache = EvalCache::default();

    loop {
        let t = iterates.len() + 1;
        let lambda = state.lambda();
        let h = oracle.best_response(problem, &net_lambda(&lambda))?;
        let eval = cache.evaluate(problem, &h)?;
        iterates.push(h);
        cost_sum += eval.cost;
        gamma_sum.add_scaled(&eval.moments, 1.0);
        lambda_sum.add_assign(&lambda);

        let inv_t = 1.0 / t as f64;
        let q_cost = cost_sum * inv_t;
        let q_gamma = gamma_sum.scaled(inv_t);
        let lambda_bar = lambda_sum.scaled(inv_t);

        let l_hat = lagrangian_sp(q_cost, &q_gamma, &lambda_bar, &eps);
        let best_lambda = best_lambda_sp(&q_gamma, &eps, bound);
        let nu_upper = lagrangian_sp(q_cost, &q_gamma, &best_lambda, &eps) - l_hat;
        let h_bar = oracle.best_response(problem, &net_lambda(&lambda_bar))?;
        let eval_bar = cache.evaluate(problem, &h_bar)?;
        let nu_lower_raw = l_hat - lagrangian_sp(eval_bar.cost, &eval_bar.moments, &lambda_bar, &eps);
        let nu_lower = nu_lower_raw.max(0.0);

        history.push(IterationRecord {
            iteration: t,
            lagrangian: l_hat,
            max_violation: max_excess(&q_gamma, &eps),
            nu_upper,
            nu_lower: nu_lower_raw,
        });

        let converged = nu_upper.max(nu_lower) <= config.nu;
        if converged || t >= config.max_iters {
            return Ok(SpResult {
                q_hat: RandomizedPredictor::uniform(&iterates)?,
                lambda_bar,
                cost: q_cost,
                moments: q_gamma,
                nu_upper,
                nu_lower,
                nu_lower_raw,
                iterations: t,
                converged,
                eps_hat: eps,
                history,
            });
        }
        exp_grad_step(&mut state, &eval.moments, &eps, eta);
    }
}

/// Builds the oracle named in `config` and runs the solver on `data`.
pub fn train_sp(data: &Dataset, loss: LossSpec, config: &SpConfig) -> Result<SpResult> {
    let grid = Grid::new(config.grid_size)?;
    let problem = SpProblem::new(data, loss, grid)?;
    let mut oracle = config.oracle.build();
    run_sp(&problem, config, oracle.as_mut())
}
