//! Weighted base learners over linear models `f(x) = <w, x> + b`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::loss::LossSpec;
use crate::predictor::LinearModel;
use crate::simplex::{LinearProgram, LpOutcome, Relation};

/// One weighted regression row.
#[derive(Debug, Clone, Copy)]
pub struct WeightedRow<'a> {
    pub weight: f64,
    pub features: &'a [f64],
    pub target: f64,
}

fn check_rows(rows: &[WeightedRow<'_>]) -> Result<(usize, f64)> {
    let Some(first) = rows.first() else {
        return Err(FairError::Learner("no rows to fit".into()));
    };
    let d = first.features.len();
    let mut total = 0.0;
    for r in rows {
        if r.features.len() != d {
            return Err(FairError::Dimension { expected: d, actual: r.features.len() });
        }
        if !(r.weight >= 0.0) || !r.weight.is_finite() {
            return Err(FairError::Learner(format!("invalid row weight {}", r.weight)));
        }
        total += r.weight;
    }
    if !(total > 0.0) {
        return Err(FairError::Learner("all row weights are zero".into()));
    }
    Ok((d, total))
}

/// Minimizes `sum w_i (t_i - <w, x_i> - b)^2 + ridge ||w||^2` through the
/// normal equations. With `ridge = 0` a near-singular system gets a jitter
/// of `1e-8` times the mean diagonal.
pub fn fit_weighted_least_squares(rows: &[WeightedRow<'_>], ridge: f64) -> Result<LinearModel> {
    if !(ridge >= 0.0) {
        return Err(FairError::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let (d, _) = check_rows(rows)?;
    let p = d + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut xt = vec![0.0; p];
    for r in rows {
        if r.weight == 0.0 {
            continue;
        }
        xt[..d].copy_from_slice(r.features);
        xt[d] = 1.0;
        for i in 0..p {
            let wi = r.weight * xt[i];
            rhs[i] += wi * r.target;
            for j in i..p {
                gram[(i, j)] += wi * xt[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let solution = match solve_spd(&gram, &rhs) {
        Some(s) => s,
        None => {
            let jitter = 1e-8 * gram.trace() / p as f64;
            log::warn!("normal equations near singular; adding ridge jitter {jitter:.3e}");
            for i in 0..d {
                gram[(i, i)] += jitter;
            }
            solve_spd(&gram, &rhs)
                .or_else(|| gram.clone().lu().solve(&rhs))
                .ok_or_else(|| FairError::Learner("singular normal equations".into()))?
        }
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(FairError::Learner("least squares produced non-finite weights".into()));
    }
    Ok(LinearModel::new(solution.as_slice()[..d].to_vec(), solution[d]))
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-13 {
        return None;
    }
    Some(chol.solve(b))
}

/// Settings of the gradient-descent risk minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub max_iters: usize,
    /// Stop once the gradient's infinity norm is at most this.
    pub tol: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig { max_iters: 5000, tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct RiskFit {
    pub model: LinearModel,
    /// Weighted mean loss at the returned model (unclipped scores).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted mean loss and its gradient in `(w, b)`, computed on the
/// unclipped affine score (the loss's convex extension).
pub fn risk_objective_and_gradient(spec: LossSpec, rows: &[WeightedRow<'_>], params: &[f64]) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let mut grad = vec![0.0; d + 1];
    let mut obj = 0.0;
    let mut total = 0.0;
    for r in rows {
        total += r.weight;
        if r.weight == 0.0 {
            continue;
        }
        let u = dot(&params[..d], r.features) + params[d];
        obj += r.weight * spec.value(r.target, u);
        let g = r.weight * spec.derivative(r.target, u);
        for (gi, xi) in grad.iter_mut().zip(r.features) {
            *gi += g * xi;
        }
        grad[d] += g;
    }
    for g in grad.iter_mut() {
        *g /= total;
    }
    (obj / total, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the weighted scaled-logistic risk by full-batch gradient
/// descent. Each step starts from a Barzilai-Borwein length and backtracks
/// until the Armijo condition holds.
pub fn fit_weighted_logistic(
    rows: &[WeightedRow<'_>],
    c: f64,
    config: &DescentConfig,
    init: Option<&LinearModel>,
) -> Result<RiskFit> {
    let spec = LossSpec::scaled_logistic(c)?;
    for r in rows {
        crate::error::check_unit("label", r.target)?;
    }
    fit_weighted_risk(spec, rows, config, init)
}

/// Weighted risk minimization under `spec`: exact least squares for the
/// half-square loss, gradient descent otherwise.
pub fn fit_weighted_risk(
    spec: LossSpec,
    rows: &[WeightedRow<'_>],
    config: &DescentConfig,
    init: Option<&LinearModel>,
) -> Result<RiskFit> {
    let (d, _) = check_rows(rows)?;
    if let LossSpec::HalfSquare = spec {
        let model = fit_weighted_least_squares(rows, 0.0)?;
        let mut params = model.weights.clone();
        params.push(model.intercept);
        let (objective, _) = risk_objective_and_gradient(spec, rows, &params);
        return Ok(RiskFit { model, objective, iterations: 1, converged: true });
    }
    let mut params = match init {
        Some(m) if m.dim() == d => {
            let mut p = m.weights.clone();
            p.push(m.intercept);
            p
        }
        _ => vec![0.0; d + 1],
    };
    let (mut obj, mut grad) = risk_objective_and_gradient(spec, rows, &params);
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax <= config.tol {
            converged = true;
            break;
        }
        iterations += 1;
        if let Some((pp, pg)) = &prev {
            let s: Vec<f64> = params.iter().zip(pp).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = grad.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 0.0 {
                step = (dot(&s, &s) / sy).clamp(1e-10, 1e10);
            }
        }
        let gg = dot(&grad, &grad);
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let (cobj, cgrad) = risk_objective_and_gradient(spec, rows, &cand);
            if cobj <= obj - 1e-4 * step * gg {
                accepted = Some((cand, cobj, cgrad));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cobj, cgrad)) = accepted else {
            // no decrease representable at this scale
            converged = gmax <= config.tol.sqrt();
            break;
        };
        prev = Some((std::mem::replace(&mut params, cand), std::mem::replace(&mut grad, cgrad)));
        obj = cobj;
    }
    if !converged {
        log::warn!("risk minimizer stopped after {iterations} iterations without reaching tolerance");
    }
    Ok(RiskFit {
        model: LinearModel::new(params[..d].to_vec(), params[d]),
        objective: obj,
        iterations,
        converged,
    })
}

/// One weighted binary example over `(x, z)` for the threshold learner.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdRow<'a> {
    pub weight: f64,
    pub features: &'a [f64],
    pub threshold: f64,
    /// `true` when the example wants `<beta, x> >= z`.
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HingeConfig {
    pub iters: usize,
    /// Step scale `c` in `c / sqrt(t)`.
    pub step: f64,
}

impl Default for HingeConfig {
    fn default() -> Self {
        HingeConfig { iters: 2000, step: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HingeFit {
    /// Feature weights followed by the intercept, all in `[-1, 1]`.
    pub beta: Vec<f64>,
    pub objective: f64,
}

impl HingeFit {
    pub fn model(&self) -> LinearModel {
        let d = self.beta.len() - 1;
        LinearModel::new(self.beta[..d].to_vec(), self.beta[d])
    }
}

fn signed_margin(r: &ThresholdRow<'_>, beta: &[f64]) -> f64 {
    let d = beta.len() - 1;
    let s = dot(&beta[..d], r.features) + beta[d] - r.threshold;
    if r.positive {
        s
    } else {
        -s
    }
}

/// `sum W_i max{0, margin - s_i (<beta, x_i> + b - z_i)}` with `s_i = +-1`.
pub fn hinge_objective(rows: &[ThresholdRow<'_>], beta: &[f64], margin: f64) -> f64 {
    rows.iter().map(|r| r.weight * (margin - signed_margin(r, beta)).max(0.0)).sum()
}

fn check_threshold_rows(rows: &[ThresholdRow<'_>]) -> Result<usize> {
    let Some(first) = rows.first() else {
        return Err(FairError::Learner("no threshold instances".into()));
    };
    let d = first.features.len();
    if let Some(r) = rows.iter().find(|r| r.features.len() != d) {
        return Err(FairError::Dimension { expected: d, actual: r.features.len() });
    }
    Ok(d)
}

/// Projected subgradient descent on the hinge surrogate over the box
/// `||beta||_inf <= 1`, keeping the best iterate.
pub fn fit_threshold_classifier(rows: &[ThresholdRow<'_>], margin: f64, config: &HingeConfig) -> Result<HingeFit> {
    let d = check_threshold_rows(rows)?;
    let mut beta = vec![0.0; d + 1];
    let mut best = HingeFit { beta: beta.clone(), objective: hinge_objective(rows, &beta, margin) };
    let mut g = vec![0.0; d + 1];
    for t in 1..=config.iters {
        g.iter_mut().for_each(|v| *v = 0.0);
        for r in rows {
            if r.weight > 0.0 && signed_margin(r, &beta) < margin {
                let s = if r.positive { -r.weight } else { r.weight };
                for (gi, xi) in g.iter_mut().zip(r.features) {
                    *gi += s * xi;
                }
                g[d] += s;
            }
        }
        let norm = dot(&g, &g).sqrt();
        if norm == 0.0 {
            break;
        }
        let eta = config.step / (t as f64).sqrt() / norm;
        for (b, gi) in beta.iter_mut().zip(&g) {
            *b = (*b - eta * gi).clamp(-1.0, 1.0);
        }
        let obj = hinge_objective(rows, &beta, margin);
        if obj < best.objective {
            best = HingeFit { beta: beta.clone(), objective: obj };
        }
    }
    Ok(best)
}

/// Exact minimizer of the hinge surrogate by a dense LP. Intended for small
/// instances (at most 500 rows).
pub fn fit_threshold_classifier_exact(rows: &[ThresholdRow<'_>], margin: f64) -> Result<HingeFit> {
    let d = check_threshold_rows(rows)?;
    if rows.len() > 500 {
        return Err(FairError::InvalidArgument(format!(
            "exact hinge LP supports at most 500 rows, got {}",
            rows.len()
        )));
    }
    let p = d + 1;
    let m = rows.len();
    // variables: beta' = beta + 1 in [0, 2]^p, then one slack per row
    let mut objective = vec![0.0; p];
    objective.extend(rows.iter().map(|r| r.weight));
    let mut lp = LinearProgram::minimize(objective);
    for k in 0..p {
        let mut c = vec![0.0; p + m];
        c[k] = 1.0;
        lp.constrain(c, Relation::Le, 2.0);
    }
    for (i, r) in rows.iter().enumerate() {
        let s = if r.positive { 1.0 } else { -1.0 };
        let mut c = vec![0.0; p + m];
        let mut shift = 0.0;
        for (k, x) in r.features.iter().enumerate() {
            c[k] = s * x;
            shift += x;
        }
        c[d] = s;
        shift += 1.0;
        c[p + i] = 1.0;
        lp.constrain(c, Relation::Ge, margin + s * (r.threshold + shift));
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => {
            let beta: Vec<f64> = x[..p].iter().map(|v| (v - 1.0).clamp(-1.0, 1.0)).collect();
            let objective = hinge_objective(rows, &beta, margin);
            Ok(HingeFit { beta, objective })
        }
        other => Err(FairError::Learner(format!("hinge LP failed: {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows<'a>(xs: &'a [Vec<f64>], ws: &[f64], ts: &[f64]) -> Vec<WeightedRow<'a>> {
        xs.iter()
            .zip(ws.iter().zip(ts))
            .map(|(x, (&weight, &target))| WeightedRow { weight, features: x, target })
            .collect()
    }

    #[test]
    fn least_squares_interpolates_two_points() {
        let xs = vec![vec![0.0], vec![1.0]];
        let m = fit_weighted_least_squares(&rows(&xs, &[1.0, 1.0], &[0.2, 0.7]), 0.0).unwrap();
        assert!((m.weights[0] - 0.5).abs() < 1e-10 && (m.intercept - 0.2).abs() < 1e-10);
    }

    #[test]
    fn least_squares_weights_are_multiplicities() {
        let xs = vec![vec![0.1], vec![0.9], vec![0.4]];
        let a = fit_weighted_least_squares(&rows(&xs, &[2.0, 1.0, 1.0], &[0.3, 0.8, 0.1]), 0.0).unwrap();
        let xs3 = vec![vec![0.1], vec![0.1], vec![0.9], vec![0.4]];
        let b = fit_weighted_least_squares(&rows(&xs3, &[1.0; 4], &[0.3, 0.3, 0.8, 0.1]), 0.0).unwrap();
        assert!((a.weights[0] - b.weights[0]).abs() < 1e-12 && (a.intercept - b.intercept).abs() < 1e-12);
    }

    #[test]
    fn least_squares_first_order_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let ws: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let ts: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        for ridge in [0.0, 0.3] {
            let m = fit_weighted_least_squares(&rows(&xs, &ws, &ts), ridge).unwrap();
            let mut g = vec![0.0; 4];
            for i in 0..50 {
                let r = ws[i] * (ts[i] - m.score(&xs[i]).unwrap());
                for k in 0..3 {
                    g[k] += xs[i][k] * r;
                }
                g[3] += r;
            }
            for k in 0..3 {
                g[k] -= ridge * m.weights[k];
            }
            assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
        }
    }

    #[test]
    fn least_squares_handles_collinear_features() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0, i as f64 / 10.0]).collect();
        let ts: Vec<f64> = (0..10).map(|i| i as f64 / 20.0).collect();
        let m = fit_weighted_least_squares(&rows(&xs, &[1.0; 10], &ts), 0.0).unwrap();
        for (x, t) in xs.iter().zip(&ts) {
            assert!((m.score(x).unwrap() - t).abs() < 1e-6);
        }
        assert!(fit_weighted_least_squares(&rows(&xs, &[0.0; 10], &ts), 0.0).is_err());
    }

    #[test]
    fn logistic_matches_grid_search_on_separable_data() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
        let ts: Vec<f64> = (0..10).map(|i| if i >= 5 { 1.0 } else { 0.0 }).collect();
        let r = rows(&xs, &[1.0; 10], &ts);
        let fit = fit_weighted_logistic(&r, 5.0, &DescentConfig::default(), None).unwrap();
        let spec = LossSpec::scaled_logistic(5.0).unwrap();
        let mut best = f64::INFINITY;
        for a in 0..=400 {
            for b in 0..=400 {
                let p = [-10.0 + a as f64 * 0.05, -10.0 + b as f64 * 0.05];
                best = best.min(risk_objective_and_gradient(spec, &r, &p).0);
            }
        }
        assert!(fit.objective <= best + 1e-4, "{} vs {best}", fit.objective);
    }

    #[test]
    fn logistic_zero_weight_rows_are_ignored() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let ts: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let mut ws = vec![1.0; 40];
        ws[20..].iter_mut().for_each(|w| *w = 0.0);
        let cfg = DescentConfig { max_iters: 20000, tol: 1e-10 };
        let a = fit_weighted_logistic(&rows(&xs, &ws, &ts), 5.0, &cfg, None).unwrap();
        let b = fit_weighted_logistic(&rows(&xs[..20], &ws[..20], &ts[..20]), 5.0, &cfg, None).unwrap();
        assert!(a.converged && b.converged);
        for k in 0..2 {
            assert!((a.model.weights[k] - b.model.weights[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let ts: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let ws: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let r = rows(&xs, &ws, &ts);
        let fit = fit_weighted_logistic(&r, 5.0, &DescentConfig::default(), None).unwrap();
        let spec = LossSpec::scaled_logistic(5.0).unwrap();
        let mut p = fit.model.weights.clone();
        p.push(fit.model.intercept);
        let (_, g) = risk_objective_and_gradient(spec, &r, &p);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = p.clone();
            up[k] += h;
            let mut dn = p.clone();
            dn[k] -= h;
            let fd = (risk_objective_and_gradient(spec, &r, &up).0 - risk_objective_and_gradient(spec, &r, &dn).0)
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5);
        }
    }

    fn random_threshold_rows(seed: u64, m: usize) -> (Vec<Vec<f64>>, Vec<(f64, f64, bool)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..m).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let meta = (0..m)
            .map(|_| (rng.random::<f64>(), (rng.random_range(1..=8) as f64) / 8.0, rng.random::<bool>()))
            .collect();
        (xs, meta)
    }

    fn as_rows<'a>(xs: &'a [Vec<f64>], meta: &[(f64, f64, bool)]) -> Vec<ThresholdRow<'a>> {
        xs.iter()
            .zip(meta)
            .map(|(x, &(weight, threshold, positive))| ThresholdRow { weight, features: x, threshold, positive })
            .collect()
    }

    #[test]
    fn hinge_zero_when_margin_attainable() {
        let xs = vec![vec![0.5], vec![1.0]];
        let rows: Vec<_> = xs
            .iter()
            .map(|x| ThresholdRow { weight: 1.0, features: x, threshold: 0.25, positive: true })
            .collect();
        let exact = fit_threshold_classifier_exact(&rows, 0.0625).unwrap();
        assert!(exact.objective.abs() < 1e-9);
        let sub = fit_threshold_classifier(&rows, 0.0625, &HingeConfig::default()).unwrap();
        assert!(sub.objective.abs() < 1e-9);
    }

    #[test]
    fn subgradient_tracks_exact_lp() {
        for seed in 0..5 {
            let (xs, meta) = random_threshold_rows(seed, 200);
            let rows = as_rows(&xs, &meta);
            let exact = fit_threshold_classifier_exact(&rows, 1.0 / 16.0).unwrap();
            let sub = fit_threshold_classifier(&rows, 1.0 / 16.0, &HingeConfig::default()).unwrap();
            assert!(sub.beta.iter().all(|b| b.abs() <= 1.0));
            assert!(sub.objective >= exact.objective - 1e-7);
            assert!(sub.objective <= 1.02 * exact.objective, "{} vs {}", sub.objective, exact.objective);
        }
    }
}
