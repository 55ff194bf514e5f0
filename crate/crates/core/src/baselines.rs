//! Reference fits: unconstrained regression, the zero-correlation (SEO)
//! least-squares estimate, and an exact LP over a small candidate set.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{FairError, Result};
use crate::loss::LossSpec;
use crate::oracles::{fit_weighted_risk, DescentConfig, WeightedRow};
use crate::predictor::{LinearModel, RandomizedPredictor};
use crate::simplex::{LinearProgram, LpOutcome, Relation};
use crate::sp_solver::{Evaluation, SpProblem};

fn unit_rows(data: &Dataset) -> Vec<WeightedRow<'_>> {
    data.examples()
        .iter()
        .map(|e| WeightedRow { weight: 1.0, features: &e.features, target: e.label })
        .collect()
}

/// Plain risk minimization with unit weights.
pub fn fit_unconstrained(data: &Dataset, spec: LossSpec) -> Result<LinearModel> {
    Ok(fit_weighted_risk(spec, &unit_rows(data), &DescentConfig::default(), None)?.model)
}

#[derive(Debug, Clone)]
pub struct SeoFit {
    pub model: LinearModel,
    /// Pearson correlation of the unclipped scores with each centered group
    /// indicator (groups `1..`); zero when either side is constant.
    pub correlations: Vec<f64>,
}

/// Least squares subject to zero empirical covariance between the score and
/// every group indicator beyond the first, solved through the KKT system.
pub fn fit_seo(data: &Dataset) -> Result<SeoFit> {
    let groups = data.group_count();
    if groups < 2 {
        return Err(FairError::InvalidArgument("the SEO baseline needs at least two groups".into()));
    }
    let d = data.dim();
    let p = d + 1;
    let n = data.len() as f64;
    let freqs = data.group_freqs();

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut cons = DMatrix::<f64>::zeros(groups - 1, p);
    let mut xt = vec![0.0; p];
    for e in data.examples() {
        xt[..d].copy_from_slice(&e.features);
        xt[d] = 1.0;
        for i in 0..p {
            rhs[i] += xt[i] * e.label;
            for j in 0..p {
                gram[(i, j)] += xt[i] * xt[j];
            }
        }
        for a in 1..groups {
            let g = if e.group == a { 1.0 } else { 0.0 } - freqs[a];
            for k in 0..d {
                cons[(a - 1, k)] += g * e.features[k] / n;
            }
        }
    }
    // Replace the constraint rows by an orthonormal basis of their numerical
    // row space; rows that vanish up to rounding must not act as constraints.
    let scale = data.examples().iter().flat_map(|e| e.features.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-10 * scale.max(1e-300);
    let eig = (cons.transpose() * &cons).symmetric_eigen();
    let basis: Vec<usize> = (0..p).filter(|&k| eig.eigenvalues[k] > tol * tol).collect();
    let m = basis.len();
    let mut cons_basis = DMatrix::<f64>::zeros(m, p);
    for (r, &k) in basis.iter().enumerate() {
        cons_basis.row_mut(r).copy_from(&eig.eigenvectors.column(k).transpose());
    }
    let cons = cons_basis;
    let rhs = rhs.resize_vertically(p + m, 0.0);

    let mut kkt = DMatrix::<f64>::zeros(p + m, p + m);
    kkt.view_mut((0, 0), (p, p)).copy_from(&gram);
    kkt.view_mut((p, 0), (m, p)).copy_from(&cons);
    kkt.view_mut((0, p), (p, m)).copy_from(&cons.transpose());

    let residual_ok = |sol: &DVector<f64>| {
        let r = &kkt * sol - &rhs;
        sol.iter().all(|v| v.is_finite()) && r.amax() <= 1e-9 * (1.0 + rhs.amax())
    };
    let solution = match kkt.clone().lu().solve(&rhs) {
        Some(s) if residual_ok(&s) => s,
        _ => {
            log::warn!("SEO system is rank deficient; using the minimum-norm solution");
            kkt.clone()
                .svd(true, true)
                .solve(&rhs, 1e-12 * kkt.amax())
                .map_err(|e| FairError::Learner(format!("SEO solve failed: {e}")))?
        }
    };
    let model = LinearModel::new(solution.as_slice()[..d].to_vec(), solution[d]);
    let correlations = seo_correlations(data, &model);
    Ok(SeoFit { model, correlations })
}

/// Pearson correlation of unclipped scores with centered group indicators.
pub fn seo_correlations(data: &Dataset, model: &LinearModel) -> Vec<f64> {
    let n = data.len() as f64;
    let scores: Vec<f64> = data.examples().iter().map(|e| model.score_unchecked(&e.features)).collect();
    let mean = scores.iter().sum::<f64>() / n;
    let var_s = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (1..data.group_count())
        .map(|a| {
            let pa = data.group_freqs()[a];
            let cov = data
                .examples()
                .iter()
                .zip(&scores)
                .map(|(e, s)| (if e.group == a { 1.0 } else { 0.0 } - pa) * (s - mean))
                .sum::<f64>()
                / n;
            let var_g = pa * (1.0 - pa);
            if var_s.sqrt() <= 1e-12 * (1.0 + mean.abs()) || var_g <= 0.0 {
                0.0
            } else {
                cov / (var_s * var_g).sqrt()
            }
        })
        .collect()
}

/// A small fixed family of predictors (at most 50).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    models: Vec<LinearModel>,
}

impl CandidateSet {
    pub const MAX: usize = 50;

    pub fn new(models: Vec<LinearModel>) -> Result<Self> {
        if models.is_empty() || models.len() > Self::MAX {
            return Err(FairError::InvalidArgument(format!(
                "candidate set must hold 1..={} predictors, got {}",
                Self::MAX,
                models.len()
            )));
        }
        Ok(CandidateSet { models })
    }

    pub fn models(&self) -> &[LinearModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExactSolution {
    Optimal {
        /// Mixing weight of each candidate, in candidate order.
        weights: Vec<f64>,
        value: f64,
    },
    Infeasible,
}

impl ExactSolution {
    pub fn value(&self) -> Option<f64> {
        match self {
            ExactSolution::Optimal { value, .. } => Some(*value),
            ExactSolution::Infeasible => None,
        }
    }

    pub fn predictor(&self, candidates: &CandidateSet) -> Option<RandomizedPredictor> {
        let ExactSolution::Optimal { weights, .. } = self else { return None };
        let atoms: Vec<(f64, LinearModel)> = weights
            .iter()
            .zip(candidates.models())
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, m)| (*w, m.clone()))
            .collect();
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        RandomizedPredictor::new(atoms.into_iter().map(|(w, m)| (w / total, m)).collect()).ok()
    }
}

/// `min cost(Q)` over mixtures of the candidates subject to
/// `|gamma_{a,z}(Q)| <= eps_a`, by dense simplex.
pub fn solve_sp_exact(problem: &SpProblem<'_>, candidates: &CandidateSet, eps_hat: &[f64]) -> Result<ExactSolution> {
    let evals: Vec<Evaluation> = candidates.models().iter().map(|m| problem.evaluate(m)).collect::<Result<_>>()?;
    solve_sp_exact_evaluated(&evals, eps_hat)
}

/// Same LP as [`solve_sp_exact`] from precomputed candidate evaluations.
pub fn solve_sp_exact_evaluated(evals: &[Evaluation], eps_hat: &[f64]) -> Result<ExactSolution> {
    let Some(first) = evals.first() else {
        return Err(FairError::InvalidArgument("no candidates".into()));
    };
    let (groups, n_points) = (first.moments.groups(), first.moments.n_points());
    if eps_hat.len() != groups {
        return Err(FairError::Dimension { expected: groups, actual: eps_hat.len() });
    }
    let k = evals.len();
    let mut lp = LinearProgram::minimize(evals.iter().map(|e| e.cost).collect());
    lp.constrain(vec![1.0; k], Relation::Eq, 1.0);
    for idx in 0..groups * n_points {
        let eps = eps_hat[idx / n_points];
        let row: Vec<f64> = evals.iter().map(|e| e.moments.values()[idx]).collect();
        lp.constrain(row.clone(), Relation::Le, eps);
        lp.constrain(row.iter().map(|v| -v).collect(), Relation::Le, eps);
    }
    Ok(match lp.solve() {
        LpOutcome::Optimal { x, value } => ExactSolution::Optimal { weights: x, value },
        LpOutcome::Infeasible => ExactSolution::Infeasible,
        LpOutcome::Unbounded => return Err(FairError::Learner("candidate LP unbounded".into())),
    })
}
