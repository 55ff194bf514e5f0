//! Slack sweeps, randomized-predictor metrics and Pareto selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bgl_solver::{run_bgl, BglConfig};
use crate::dataset::Dataset;
use crate::discretize::Grid;
use crate::error::{FairError, Result};
use crate::loss::LossSpec;
use crate::moments::{bgl_group_losses, empirical_loss, group_cdf_moments, MomentVector};
use crate::predictor::{q_expectation, RandomizedPredictor};
use crate::sp_solver::{train_sp, IterationRecord, SpConfig};

/// Expected loss of `q` on `data`.
pub fn mixture_loss(q: &RandomizedPredictor, data: &Dataset, spec: LossSpec) -> Result<f64> {
    let mut err = None;
    let v = q_expectation(q, |m| match m.predict_dataset(data) {
        Ok(p) => empirical_loss(data, spec, &p),
        Err(e) => {
            err = Some(e);
            f64::NAN
        }
    });
    err.map_or(Ok(v), Err)
}

/// Disparities of the mixture CDF, `sum_f Q(f) gamma(f)`.
pub fn mixture_moments(q: &RandomizedPredictor, data: &Dataset, grid: &Grid) -> Result<MomentVector> {
    let mut total = MomentVector::zeros(data.group_count(), grid.n_points());
    for (w, m) in q.atoms() {
        total.add_scaled(&group_cdf_moments(data, grid, &m.predict_dataset(data)?), *w);
    }
    Ok(total)
}

/// Expected per-group losses of `q`.
pub fn mixture_group_losses(q: &RandomizedPredictor, data: &Dataset, spec: LossSpec) -> Result<Vec<f64>> {
    let mut total = vec![0.0; data.group_count()];
    for (w, m) in q.atoms() {
        let g = bgl_group_losses(data, spec, &m.predict_dataset(data)?);
        total.iter_mut().zip(&g.values).for_each(|(t, v)| *t += w * v);
    }
    Ok(total)
}

/// `max_{a,z} |gamma_{a,z}(Q)|`.
pub fn sp_disparity(q: &RandomizedPredictor, data: &Dataset, grid: &Grid) -> Result<f64> {
    Ok(mixture_moments(q, data, grid)?.max_abs())
}

/// `max_a` of the expected group losses.
pub fn bgl_disparity(q: &RandomizedPredictor, data: &Dataset, spec: LossSpec) -> Result<f64> {
    Ok(mixture_group_losses(q, data, spec)?.into_iter().fold(0.0, f64::max))
}

/// One sweep result. Metrics are `NaN` when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub eps: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_disp: f64,
    pub test_disp: f64,
    pub iters: usize,
    pub converged: bool,
    /// `ok`, `infeasible` or `error: ...`.
    pub status: String,
}

impl TradeoffPoint {
    fn failed(eps: f64, e: &FairError) -> Self {
        TradeoffPoint {
            eps,
            train_loss: f64::NAN,
            test_loss: f64::NAN,
            train_disp: f64::NAN,
            test_disp: f64::NAN,
            iters: 0,
            converged: false,
            status: format!("error: {e}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub point: TradeoffPoint,
    pub history: Vec<IterationRecord>,
    /// The returned mixture; for an infeasible verdict, the rejected candidate.
    pub model: Option<RandomizedPredictor>,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    b.build().map_err(|e| FairError::InvalidArgument(format!("thread pool: {e}")))
}

/// One statistical-parity run per slack, in parallel; results keep the
/// order of `eps_list`.
pub fn sweep_sp(
    train: &Dataset,
    test: &Dataset,
    eps_list: &[f64],
    base: &SpConfig,
    loss: LossSpec,
    threads: Option<usize>,
) -> Result<Vec<SweepRun>> {
    if eps_list.is_empty() {
        return Err(FairError::InvalidArgument("slack list is empty".into()));
    }
    let grid = Grid::new(base.grid_size)?;
    let one = |&eps: &f64| -> SweepRun {
        let config = SpConfig { eps_hat: vec![eps], ..base.clone() };
        let run = || -> Result<SweepRun> {
            let res = train_sp(train, loss, &config)?;
            let point = TradeoffPoint {
                eps,
                train_loss: mixture_loss(&res.q_hat, train, loss)?,
                test_loss: mixture_loss(&res.q_hat, test, loss)?,
                train_disp: res.moments.max_abs(),
                test_disp: sp_disparity(&res.q_hat, test, &grid)?,
                iters: res.iterations,
                converged: res.converged,
                status: "ok".into(),
            };
            Ok(SweepRun { point, history: res.history, model: Some(res.q_hat) })
        };
        run().unwrap_or_else(|e| {
            log::warn!("sweep point eps={eps} failed: {e}");
            SweepRun { point: TradeoffPoint::failed(eps, &e), history: Vec::new(), model: None }
        })
    };
    Ok(pool(threads)?.install(|| eps_list.par_iter().map(one).collect()))
}

/// One bounded-group-loss run per bound, in parallel.
pub fn sweep_bgl(
    train: &Dataset,
    test: &Dataset,
    zeta_list: &[f64],
    base: &BglConfig,
    loss: LossSpec,
    threads: Option<usize>,
) -> Result<Vec<SweepRun>> {
    if zeta_list.is_empty() {
        return Err(FairError::InvalidArgument("bound list is empty".into()));
    }
    let one = |&zeta: &f64| -> SweepRun {
        let config = BglConfig { zeta_hat: vec![zeta], ..base.clone() };
        let run = || -> Result<SweepRun> {
            let res = run_bgl(train, loss, &config)?;
            let q = res.q_hat.clone().unwrap_or_else(|| res.candidate.clone());
            let point = TradeoffPoint {
                eps: zeta,
                train_loss: res.loss,
                test_loss: mixture_loss(&q, test, loss)?,
                train_disp: res.group_losses.max(),
                test_disp: bgl_disparity(&q, test, loss)?,
                iters: res.iterations,
                converged: res.converged,
                status: if res.is_infeasible() { "infeasible".into() } else { "ok".into() },
            };
            Ok(SweepRun { point, history: res.history, model: Some(q) })
        };
        run().unwrap_or_else(|e| {
            log::warn!("sweep point zeta={zeta} failed: {e}");
            SweepRun { point: TradeoffPoint::failed(zeta, &e), history: Vec::new(), model: None }
        })
    };
    Ok(pool(threads)?.install(|| zeta_list.par_iter().map(one).collect()))
}

/// Points not dominated in `(train_loss, train_disp)`; exact ties are all
/// kept and failed points are skipped. Input order is preserved.
pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let valid = |p: &TradeoffPoint| p.train_loss.is_finite() && p.train_disp.is_finite();
    points
        .iter()
        .filter(|p| valid(p))
        .filter(|p| {
            !points.iter().filter(|q| valid(q)).any(|q| {
                q.train_loss <= p.train_loss
                    && q.train_disp <= p.train_disp
                    && (q.train_loss < p.train_loss || q.train_disp < p.train_disp)
            })
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(l: f64, d: f64) -> TradeoffPoint {
        TradeoffPoint {
            eps: 0.0,
            train_loss: l,
            test_loss: l,
            train_disp: d,
            test_disp: d,
            iters: 1,
            converged: true,
            status: "ok".into(),
        }
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_front(&[pt(0.1, 0.1)]), vec![pt(0.1, 0.1)]);
        let front = pareto_front(&[pt(0.1, 0.3), pt(0.2, 0.2), pt(0.3, 0.25)]);
        assert_eq!(front, vec![pt(0.1, 0.3), pt(0.2, 0.2)]);
        let same = vec![pt(0.2, 0.2); 3];
        assert_eq!(pareto_front(&same).len(), 3);
        assert!(pareto_front(&[]).is_empty());
    }
}
