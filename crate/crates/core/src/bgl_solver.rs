//! Exponentiated-gradient solver for bounded group loss: every group's mean
//! loss must stay below `zeta_a`.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{FairError, Result};
use crate::loss::LossSpec;
use crate::moments::{bgl_group_losses, empirical_loss, BglVector};
use crate::oracles::{fit_weighted_risk, DescentConfig, WeightedRow};
use crate::predictor::{LinearModel, RandomizedPredictor};
use crate::sp_solver::{broadcast_slacks, IterationRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BglConfig {
    /// Per-group loss bounds; a single entry is broadcast.
    pub zeta_hat: Vec<f64>,
    pub bound: f64,
    pub nu: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub slack_scale: f64,
    #[serde(default)]
    pub descent: DescentConfig,
}

impl Default for BglConfig {
    fn default() -> Self {
        BglConfig {
            zeta_hat: vec![1.0],
            bound: 10.0,
            nu: 1e-3,
            max_iters: 5000,
            slack_scale: 0.0,
            descent: DescentConfig::default(),
        }
    }
}

impl BglConfig {
    pub fn validate(&self, groups: usize) -> Result<()> {
        let bad = |m: String| Err(FairError::InvalidArgument(m));
        if !(self.bound > 0.0) {
            return bad(format!("bound B must be > 0, got {}", self.bound));
        }
        if !(self.nu > 0.0) {
            return bad(format!("threshold nu must be > 0, got {}", self.nu));
        }
        if self.max_iters == 0 {
            return bad("iteration cap must be >= 1".into());
        }
        if self.zeta_hat.len() != 1 && self.zeta_hat.len() != groups {
            return bad(format!("{} loss bounds given for {groups} groups", self.zeta_hat.len()));
        }
        if self.zeta_hat.iter().any(|z| !(0.0..=1.0).contains(z)) {
            return bad("loss bounds must lie in [0, 1]".into());
        }
        if !(self.slack_scale >= 0.0) {
            return bad("slack scale must be >= 0".into());
        }
        Ok(())
    }

    pub fn effective_bounds(&self, data: &Dataset) -> Vec<f64> {
        broadcast_slacks(&self.zeta_hat, self.slack_scale, data)
    }

    /// `4 B^2 ln(|A| + 1) / nu^2`.
    pub fn iteration_bound(&self, groups: usize) -> f64 {
        4.0 * self.bound * self.bound * ((groups + 1) as f64).ln() / (self.nu * self.nu)
    }
}

/// `lambda_a = B exp(theta_a) / (1 + sum exp(theta))`, shifted for stability.
pub fn lambda_from_theta_bgl(theta: &[f64], bound: f64) -> Vec<f64> {
    let shift = theta.iter().copied().fold(0.0f64, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| (t - shift).exp()).collect();
    let denom = (-shift).exp() + e.iter().sum::<f64>();
    e.iter().map(|v| bound * v / denom).collect()
}

/// `loss + sum_a lambda_a (gamma_a - zeta_a)`.
pub fn lagrangian_bgl(loss: f64, bgl: &BglVector, lambda: &[f64], zeta_hat: &[f64]) -> f64 {
    loss + bgl.values.iter().zip(lambda).zip(zeta_hat).map(|((g, l), z)| l * (g - z)).sum::<f64>()
}

/// `B` on the most violated group (lowest index on ties), or zero.
pub fn best_lambda_bgl(bgl: &BglVector, zeta_hat: &[f64], bound: f64) -> Vec<f64> {
    let mut out = vec![0.0; bgl.values.len()];
    let mut best: Option<(usize, f64)> = None;
    for (a, (g, z)) in bgl.values.iter().zip(zeta_hat).enumerate() {
        let v = g - z;
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    if let Some((a, v)) = best {
        if v > 0.0 {
            out[a] = bound;
        }
    }
    out
}

/// Per-example weights `1/n + lambda_{a_i} / n_{a_i}`.
pub fn bgl_weights(data: &Dataset, lambda: &[f64]) -> Vec<f64> {
    let n = data.len() as f64;
    let sizes = data.group_sizes();
    data.examples().iter().map(|e| 1.0 / n + lambda[e.group] / sizes[e.group] as f64).collect()
}

/// Weighted risk minimization with the BGL example weights.
pub fn best_f_bgl(
    data: &Dataset,
    lambda: &[f64],
    spec: LossSpec,
    descent: &DescentConfig,
    warm: Option<&LinearModel>,
) -> Result<LinearModel> {
    let weights = bgl_weights(data, lambda);
    let rows: Vec<WeightedRow<'_>> = data
        .examples()
        .iter()
        .zip(&weights)
        .map(|(e, &weight)| WeightedRow { weight, features: &e.features, target: e.label })
        .collect();
    Ok(fit_weighted_risk(spec, &rows, descent, warm)?.model)
}

/// `gamma_a <= zeta_a + (1 + 2 nu) / B` for every group.
pub fn passes_feasibility_gate(bgl: &BglVector, zeta_hat: &[f64], bound: f64, nu: f64) -> bool {
    let slack = (1.0 + 2.0 * nu) / bound;
    bgl.values.iter().zip(zeta_hat).all(|(g, z)| *g <= z + slack)
}

#[derive(Debug, Clone)]
pub struct BglResult {
    /// `None` when a converged saddle point failed the feasibility gate.
    pub q_hat: Option<RandomizedPredictor>,
    /// The final mixture regardless of the verdict.
    pub candidate: RandomizedPredictor,
    pub lambda_bar: Vec<f64>,
    pub loss: f64,
    pub group_losses: BglVector,
    pub nu_upper: f64,
    pub nu_lower: f64,
    pub nu_lower_raw: f64,
    pub iterations: usize,
    pub converged: bool,
    pub zeta_hat: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl BglResult {
    pub fn is_infeasible(&self) -> bool {
        self.q_hat.is_none()
    }
}

pub fn run_bgl(data: &Dataset, spec: LossSpec, config: &BglConfig) -> Result<BglResult> {
    config.validate(data.group_count())?;
    let zeta = config.effective_bounds(data);
    let groups = data.group_count();
    let bound = config.bound;
    let eta = config.nu / (2.0 * bound);

    let evaluate = |m: &LinearModel| -> Result<(f64, BglVector)> {
        let preds = m.predict_dataset(data)?;
        Ok((empirical_loss(data, spec, &preds), bgl_group_losses(data, spec, &preds)))
    };

    let mut theta = vec![0.0; groups];
    let mut iterates: Vec<LinearModel> = Vec::new();
    let mut loss_sum = 0.0;
    let mut bgl_sum = vec![0.0; groups];
    let mut lambda_sum = vec![0.0; groups];
    let mut history = Vec::new();
    let mut warm: Option<LinearModel> = None;
    let mut warm_bar: Option<LinearModel> = None;

    loop {
        let t = iterates.len() + 1;
        let lambda = lambda_from_theta_bgl(&theta, bound);
        let f = best_f_bgl(data, &lambda, spec, &config.descent, warm.as_ref())?;
        let (loss_f, bgl_f) = evaluate(&f)?;
        warm = Some(f.clone());
        iterates.push(f);
        loss_sum += loss_f;
        for a in 0..groups {
            bgl_sum[a] += bgl_f.values[a];
            lambda_sum[a] += lambda[a];
        }

        let inv_t = 1.0 / t as f64;
        let q_loss = loss_sum * inv_t;
        let q_bgl = BglVector { values: bgl_sum.iter().map(|v| v * inv_t).collect() };
        let lambda_bar: Vec<f64> = lambda_sum.iter().map(|v| v * inv_t).collect();

        let l_hat = lagrangian_bgl(q_loss, &q_bgl, &lambda_bar, &zeta);
        let nu_upper = lagrangian_bgl(q_loss, &q_bgl, &best_lambda_bgl(&q_bgl, &zeta, bound), &zeta) - l_hat;
        let f_bar = best_f_bgl(data, &lambda_bar, spec, &config.descent, warm_bar.as_ref())?;
        let (loss_bar, bgl_bar) = evaluate(&f_bar)?;
        warm_bar = Some(f_bar);
        let nu_lower_raw = l_hat - lagrangian_bgl(loss_bar, &bgl_bar, &lambda_bar, &zeta);
        let nu_lower = nu_lower_raw.max(0.0);

        history.push(IterationRecord {
            iteration: t,
            lagrangian: l_hat,
            max_violation: q_bgl.values.iter().zip(&zeta).map(|(g, z)| g - z).fold(f64::NEG_INFINITY, f64::max),
            nu_upper,
            nu_lower: nu_lower_raw,
        });

        let converged = nu_upper.max(nu_lower) <= config.nu;
        if converged || t >= config.max_iters {
            let candidate = RandomizedPredictor::uniform(&iterates)?;
            let feasible = passes_feasibility_gate(&q_bgl, &zeta, bound, config.nu);
            let q_hat = if converged && !feasible { None } else { Some(candidate.clone()) };
            if q_hat.is_none() {
                log::info!("bounded group loss constraints judged infeasible after {t} iterations");
            }
            return Ok(BglResult {
                q_hat,
                candidate,
                lambda_bar,
                loss: q_loss,
                group_losses: q_bgl,
                nu_upper,
                nu_lower,
                nu_lower_raw,
                iterations: t,
                converged,
                zeta_hat: zeta,
                history,
            });
        }
        for a in 0..groups {
            theta[a] += eta * (bgl_f.values[a] - zeta[a]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Example;

    #[test]
    fn lagrangian_examples() {
        let g = BglVector { values: vec![0.5] };
        assert_eq!(lagrangian_bgl(0.3, &g, &[0.0], &[0.2]), 0.3);
        assert!((lagrangian_bgl(0.3, &g, &[1.0], &[0.5]) - 0.3).abs() < 1e-15);
        assert!((lagrangian_bgl(0.3, &g, &[2.0], &[0.2]) - 0.9).abs() < 1e-15);
    }

    fn four() -> Dataset {
        let ex = vec![
            Example::new(vec![0.0], 0, 0.1),
            Example::new(vec![1.0], 0, 0.9),
            Example::new(vec![0.5], 1, 0.4),
            Example::new(vec![0.2], 1, 0.6),
        ];
        Dataset::new(ex, 2).unwrap()
    }

    #[test]
    fn weight_examples() {
        let d = four();
        assert_eq!(bgl_weights(&d, &[0.5, 0.0]), vec![0.5, 0.5, 0.25, 0.25]);
        assert_eq!(bgl_weights(&d, &[0.0, 0.0]), vec![0.25; 4]);
        let lam = [0.3, 1.7];
        let w1 = bgl_weights(&d, &lam);
        let w2 = bgl_weights(&d, &[0.6, 3.4]);
        for (a, b) in w1.iter().zip(&w2) {
            assert!((b - (2.0 * a - 0.25)).abs() < 1e-15);
            assert!(*a >= 0.25);
        }
        let total: f64 = w1.iter().sum();
        assert!((total - 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_duals_stay_bounded() {
        for theta in [vec![0.0, 0.0], vec![700.0, -3.0], vec![-50.0, 2.0]] {
            let l = lambda_from_theta_bgl(&theta, 4.0);
            assert!(l.iter().all(|v| *v >= 0.0));
            assert!(l.iter().sum::<f64>() < 4.0 + 1e-12);
        }
    }

    #[test]
    fn best_lambda_picks_worst_group() {
        let g = BglVector { values: vec![0.3, 0.5] };
        assert_eq!(best_lambda_bgl(&g, &[0.1, 0.1], 2.0), vec![0.0, 2.0]);
        assert_eq!(best_lambda_bgl(&g, &[0.6, 0.6], 2.0), vec![0.0, 0.0]);
    }

    #[test]
    fn gate_accepts_after_relaxing_by_observed_loss() {
        let g = BglVector { values: vec![0.3, 0.05] };
        assert!(!passes_feasibility_gate(&g, &[0.0, 0.0], 10.0, 0.01));
        let relax = (1.0 + 2.0 * 0.01) / 10.0 + 0.3;
        assert!(passes_feasibility_gate(&g, &[relax, relax], 10.0, 0.01));
    }
}
