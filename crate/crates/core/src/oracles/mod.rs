//! Best-response oracles of the learner in the statistical-parity game.
//!
//! Given a signed dual table `lambda`, each oracle (approximately) minimizes
//! `cost(h_f) + sum_{a,z} lambda_{a,z} gamma_{a,z}(h_f)` over linear `f`.
//! The objective rewrites as a cost-sensitive problem with per-threshold
//! costs `c_lambda(y, a, z) = c(y, z) + N lambda_{a,z} / p_a - sum_a' N lambda_{a',z}`.

pub mod learners;

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::predictor::LinearModel;
use crate::sp_solver::{DualTable, Evaluation, SpProblem};

pub use learners::{
    fit_threshold_classifier, fit_threshold_classifier_exact, fit_weighted_least_squares,
    fit_weighted_logistic, fit_weighted_risk, hinge_objective, risk_objective_and_gradient,
    DescentConfig, HingeConfig, HingeFit, RiskFit, ThresholdRow, WeightedRow,
};

/// Signed duals `lambda_{a,z} = lambda^+ - lambda^-`, layout `a * N + (j - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetLambda {
    pub groups: usize,
    pub n_points: usize,
    pub values: Vec<f64>,
}

impl NetLambda {
    pub fn zeros(groups: usize, n_points: usize) -> Self {
        NetLambda { groups, n_points, values: vec![0.0; groups * n_points] }
    }

    #[inline]
    pub fn get(&self, a: usize, j: usize) -> f64 {
        self.values[a * self.n_points + j - 1]
    }
}

pub fn net_lambda(dual: &DualTable) -> NetLambda {
    NetLambda {
        groups: dual.groups,
        n_points: dual.n_points,
        values: dual.plus.iter().zip(&dual.minus).map(|(p, m)| p - m).collect(),
    }
}

/// `c + N lambda_{a,z_j} / p_a - sum_a' N lambda_{a',z_j}`.
pub fn c_lambda(c: f64, lambda: &NetLambda, a: usize, j: usize, p: &[f64], n: usize) -> Result<f64> {
    if !(p[a] > 0.0) {
        return Err(FairError::InvalidArgument(format!("group {a} has zero frequency")));
    }
    let nf = n as f64;
    let across: f64 = (0..lambda.groups).map(|b| nf * lambda.get(b, j)).sum();
    Ok(c + nf * lambda.get(a, j) / p[a] - across)
}

/// Group adjustments `c_lambda - c` for every `(a, j)`, layout `a * N + (j - 1)`.
pub fn group_adjustments(lambda: &NetLambda, p: &[f64]) -> Result<Vec<f64>> {
    if let Some(a) = p.iter().position(|v| !(*v > 0.0)) {
        return Err(FairError::InvalidArgument(format!("group {a} has zero frequency")));
    }
    let n = lambda.n_points;
    let nf = n as f64;
    let across: Vec<f64> = (1..=n).map(|j| (0..lambda.groups).map(|b| nf * lambda.get(b, j)).sum()).collect();
    let mut out = Vec::with_capacity(lambda.groups * n);
    for (a, pa) in p.iter().enumerate() {
        out.extend((1..=n).map(|j| nf * lambda.get(a, j) / pa - across[j - 1]));
    }
    Ok(out)
}

/// Prefix sums `g(k, a, j) = sum_{j' <= j} c_lambda(y_k, a, z_j') / N`
/// for `j in 0..=N`, with the empty prefix at `j = 0`.
#[derive(Debug, Clone)]
pub struct GLambdaTable {
    groups: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl GLambdaTable {
    #[inline]
    pub fn get(&self, k: usize, a: usize, j: usize) -> f64 {
        self.values[(k * self.groups + a) * (self.n_points + 1) + j]
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Index of the smallest prefix; among values within `1e-12` of the
    /// minimum the largest index wins.
    pub fn argmin(&self, k: usize, a: usize) -> usize {
        let row = &self.values[(k * self.groups + a) * (self.n_points + 1)..][..self.n_points + 1];
        let m = row.iter().copied().fold(f64::INFINITY, f64::min);
        row.iter().rposition(|v| *v <= m + 1e-12).unwrap_or(0)
    }
}

pub fn build_g_lambda(lambda: &NetLambda, problem: &SpProblem<'_>) -> Result<GLambdaTable> {
    let adj = group_adjustments(lambda, problem.data().group_freqs())?;
    let n = problem.grid().n_points();
    let groups = lambda.groups;
    let nf = n as f64;
    let cover_len = problem.cover().len();
    let mut values = Vec::with_capacity(cover_len * groups * (n + 1));
    for k in 0..cover_len {
        let costs = problem.costs().row(k);
        for a in 0..groups {
            let mut acc = 0.0;
            values.push(0.0);
            for j in 1..=n {
                acc += (costs[j - 1] + adj[a * n + j - 1]) / nf;
                values.push(acc);
            }
        }
    }
    Ok(GLambdaTable { groups, n_points: n, values })
}

/// Per-example regression targets `U_i = z_{argmin_j g(y_i, a_i, j)}`,
/// with the argmin computed once per `(cover point, group)` pair.
pub fn ls_targets(g: &GLambdaTable, problem: &SpProblem<'_>) -> Vec<f64> {
    let groups = problem.data().group_count();
    let cache: Vec<f64> = (0..problem.cover().len())
        .flat_map(|k| (0..groups).map(move |a| (k, a)))
        .map(|(k, a)| problem.grid().point(g.argmin(k, a)))
        .collect();
    problem
        .data()
        .examples()
        .iter()
        .zip(problem.cover_index())
        .map(|(e, &k)| cache[k * groups + e.group])
        .collect()
}

/// One cost-sensitive example: row `row` of the dataset paired with grid
/// threshold `z_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsInstance {
    pub row: usize,
    pub j: usize,
    pub cost: f64,
}

impl CsInstance {
    /// Weighted-binary form: label `1{C <= 0}` with weight `|C|`.
    pub fn weighted_binary(&self) -> (f64, bool) {
        weighted_binary(self.cost)
    }
}

pub fn weighted_binary(cost: f64) -> (f64, bool) {
    (cost.abs(), cost <= 0.0)
}

/// The `n * N` cost-sensitive instances for `lambda`.
pub fn cs_instances(problem: &SpProblem<'_>, lambda: &NetLambda) -> Result<Vec<CsInstance>> {
    let adj = group_adjustments(lambda, problem.data().group_freqs())?;
    let n = problem.grid().n_points();
    let mut out = Vec::with_capacity(problem.data().len() * n);
    for (i, (e, &k)) in problem.data().examples().iter().zip(problem.cover_index()).enumerate() {
        let costs = problem.costs().row(k);
        for j in 1..=n {
            out.push(CsInstance { row: i, j, cost: costs[j - 1] + adj[e.group * n + j - 1] });
        }
    }
    Ok(out)
}

/// Cost-sensitive reduction solved with the hinge-surrogate threshold learner.
pub fn best_h_cs(problem: &SpProblem<'_>, lambda: &NetLambda, config: &HingeConfig) -> Result<LinearModel> {
    let instances = cs_instances(problem, lambda)?;
    let examples = problem.data().examples();
    let rows: Vec<ThresholdRow<'_>> = instances
        .iter()
        .map(|inst| {
            let (weight, positive) = inst.weighted_binary();
            ThresholdRow {
                weight,
                features: &examples[inst.row].features,
                threshold: problem.grid().point(inst.j),
                positive,
            }
        })
        .collect();
    if rows.iter().all(|r| r.weight == 0.0) {
        return Ok(LinearModel::constant(problem.data().dim(), 0.0));
    }
    let fit = fit_threshold_classifier(&rows, problem.grid().alpha() / 2.0, config)?;
    Ok(fit.model())
}

/// Least-squares heuristic: regress the `g_lambda` minimizers on `X`.
pub fn best_h_ls(problem: &SpProblem<'_>, lambda: &NetLambda) -> Result<LinearModel> {
    let targets = ls_targets(&build_g_lambda(lambda, problem)?, problem);
    let rows: Vec<WeightedRow<'_>> = problem
        .data()
        .examples()
        .iter()
        .zip(&targets)
        .map(|(e, &target)| WeightedRow { weight: 1.0, features: &e.features, target })
        .collect();
    fit_weighted_least_squares(&rows, 0.0)
}

/// Pseudo-label pair for target `u`: `(label 0, weight 1 - u)` and
/// `(label 1, weight u)`.
pub fn matched_pair(u: f64) -> [(f64, f64); 2] {
    [(0.0, 1.0 - u), (1.0, u)]
}

/// Matched-loss heuristic: two weighted rows per example, fitted by weighted
/// risk minimization under the problem's loss.
pub fn best_h_matched(
    problem: &SpProblem<'_>,
    lambda: &NetLambda,
    config: &DescentConfig,
    warm: Option<&LinearModel>,
) -> Result<RiskFit> {
    let targets = ls_targets(&build_g_lambda(lambda, problem)?, problem);
    let mut rows = Vec::with_capacity(2 * targets.len());
    for (e, &u) in problem.data().examples().iter().zip(&targets) {
        for (target, weight) in matched_pair(u) {
            rows.push(WeightedRow { weight, features: &e.features, target });
        }
    }
    fit_weighted_risk(problem.loss(), &rows, config, warm)
}

/// The learner's side of the game.
pub trait SpOracle {
    fn best_response(&mut self, problem: &SpProblem<'_>, lambda: &NetLambda) -> Result<LinearModel>;
}

/// Which reduction answers the learner's best-response queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Cost-sensitive classification via the hinge surrogate.
    Cs,
    /// Least squares on the `g_lambda` minimizers.
    #[default]
    Ls,
    /// Weighted risk minimization with matched pseudo-labels.
    Matched,
}

impl OracleKind {
    pub fn build(self) -> Box<dyn SpOracle + Send> {
        match self {
            OracleKind::Cs => Box::new(CsOracle::default()),
            OracleKind::Ls => Box::new(LsOracle),
            OracleKind::Matched => Box::new(MatchedOracle::default()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OracleKind::Cs => "cs",
            OracleKind::Ls => "ls",
            OracleKind::Matched => "matched",
        }
    }
}

impl std::str::FromStr for OracleKind {
    type Err = FairError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cs" => Ok(OracleKind::Cs),
            "ls" => Ok(OracleKind::Ls),
            "matched" => Ok(OracleKind::Matched),
            other => Err(FairError::InvalidArgument(format!("unknown oracle '{other}' (cs, ls, matched)"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsOracle {
    pub config: HingeConfig,
}

impl SpOracle for CsOracle {
    fn best_response(&mut self, problem: &SpProblem<'_>, lambda: &NetLambda) -> Result<LinearModel> {
        best_h_cs(problem, lambda, &self.config)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LsOracle;

impl SpOracle for LsOracle {
    fn best_response(&mut self, problem: &SpProblem<'_>, lambda: &NetLambda) -> Result<LinearModel> {
        best_h_ls(problem, lambda)
    }
}

/// Matched-loss oracle; warm-starts each fit from the previous answer and
/// counts fits that stopped before reaching tolerance.
#[derive(Debug, Clone, Default)]
pub struct MatchedOracle {
    pub config: DescentConfig,
    pub unconverged: usize,
    last: Option<LinearModel>,
}

impl SpOracle for MatchedOracle {
    fn best_response(&mut self, problem: &SpProblem<'_>, lambda: &NetLambda) -> Result<LinearModel> {
        let fit = best_h_matched(problem, lambda, &self.config, self.last.as_ref())?;
        if !fit.converged {
            self.unconverged += 1;
        }
        self.last = Some(fit.model.clone());
        Ok(fit.model)
    }
}

/// Exact best response over a fixed finite set of candidate predictors.
/// Ties go to the earliest candidate.
#[derive(Debug, Clone)]
pub struct FiniteClassOracle {
    candidates: Vec<LinearModel>,
    evaluations: Vec<Evaluation>,
}

impl FiniteClassOracle {
    pub fn new(problem: &SpProblem<'_>, candidates: Vec<LinearModel>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(FairError::InvalidArgument("candidate set is empty".into()));
        }
        let evaluations = candidates.iter().map(|c| problem.evaluate(c)).collect::<Result<_>>()?;
        Ok(FiniteClassOracle { candidates, evaluations })
    }

    pub fn candidates(&self) -> &[LinearModel] {
        &self.candidates
    }

    pub fn evaluations(&self) -> &[Evaluation] {
        &self.evaluations
    }

    /// `cost(h) + sum lambda * gamma(h)` for every candidate.
    pub fn objectives(&self, lambda: &NetLambda) -> Vec<f64> {
        self.evaluations
            .iter()
            .map(|e| e.cost + e.moments.values().iter().zip(&lambda.values).map(|(g, l)| g * l).sum::<f64>())
            .collect()
    }
}

impl SpOracle for FiniteClassOracle {
    fn best_response(&mut self, _problem: &SpProblem<'_>, lambda: &NetLambda) -> Result<LinearModel> {
        let obj = self.objectives(lambda);
        let mut best = 0;
        for (k, v) in obj.iter().enumerate() {
            if *v < obj[best] {
                best = k;
            }
        }
        Ok(self.candidates[best].clone())
    }
}
