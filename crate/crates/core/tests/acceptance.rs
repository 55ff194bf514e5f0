//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fairreg::baselines::{fit_seo, fit_unconstrained, solve_sp_exact, CandidateSet, ExactSolution};
use fairreg::bgl_solver::{run_bgl, BglConfig};
use fairreg::discretize::{cost_coefficient_at, discretized_loss, LabelCover};
use fairreg::harness::sweep::{mixture_loss, sp_disparity};
use fairreg::harness::{split, sweep_sp, synth_generate, SynthSpec};
use fairreg::moments::{group_cdf_moments, naive_moments};
use fairreg::oracles::{
    best_h_ls, best_h_matched, cs_instances, fit_threshold_classifier, fit_threshold_classifier_exact,
    DescentConfig, FiniteClassOracle, HingeConfig, NetLambda, ThresholdRow,
};
use fairreg::sp_solver::{run_sp, SpConfig, SpProblem};
use fairreg::{Dataset, Example, Grid, LinearModel, LossSpec, OracleKind, RandomizedPredictor};

// Pinned tolerances.
const DISC_TOL: f64 = 1e-12;
const TELESCOPE_TOL: f64 = 1e-12;
const MOMENT_TOL: f64 = 1e-12;
const CERT_TOL: f64 = 1e-9;
const CS_IDENTITY_TOL: f64 = 1e-10;
const MATCHED_TOL: f64 = 1e-10;
const HINGE_REL_TOL: f64 = 0.02;
const SEO_TOL: f64 = 1e-8;
const BGL_LEARNER_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn losses() -> [LossSpec; 2] {
    [LossSpec::HalfSquare, LossSpec::scaled_logistic(5.0).unwrap()]
}

fn random_model(rng: &mut ChaCha8Rng, d: usize) -> LinearModel {
    LinearModel::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random_range(0.0..1.0))
}

fn uniform_data(rng: &mut ChaCha8Rng, n: usize, d: usize, groups: usize) -> Dataset {
    let examples = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            Example::new(x, i % groups, rng.random::<f64>())
        })
        .collect();
    Dataset::new(examples, groups).unwrap()
}

fn discretization_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let spec = losses()[rng.random_range(0..2)];
        let n = rng.random_range(2..=64);
        let grid = Grid::new(n).unwrap();
        let y: f64 = rng.random();
        let u: f64 = rng.random();
        let mut labels: Vec<f64> = (0..20).map(|_| rng.random()).collect();
        labels.push(y);
        let cover = LabelCover::for_grid(&labels, &grid).unwrap();
        let exact = spec.eval(y, u).unwrap();
        let approx = discretized_loss(spec, &cover, &grid, y, u).unwrap();
        worst = worst.max((exact - approx).abs() - grid.alpha());
    }
    outcome(worst <= DISC_TOL, format!("max(|l - l_alpha| - alpha) = {worst:.3e}"))
}

fn telescoping_identity() -> Outcome {
    let data = synth_generate(&SynthSpec { n: 200, seed: 7, ..SynthSpec::default() }).unwrap();
    let grid = Grid::new(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    let mut moments_equal = true;
    for spec in losses() {
        let cover = LabelCover::for_grid(&data.labels(), &grid).unwrap();
        for _ in 0..50 {
            let f = random_model(&mut rng, data.dim());
            let preds = f.predict_dataset(&data).unwrap();
            for (e, &p) in data.examples().iter().zip(&preds) {
                let ys = cover.snap(e.label).value;
                let lhs = discretized_loss(spec, &cover, &grid, e.label, grid.snap_down(p)).unwrap();
                let sum: f64 = (1..=8)
                    .filter(|&j| p >= grid.point(j))
                    .map(|j| cost_coefficient_at(spec, &grid, ys, j))
                    .sum();
                let rhs = spec.eval(ys, grid.alpha() / 2.0).unwrap() + sum / 8.0;
                worst = worst.max((lhs - rhs).abs());
            }
            let floored: Vec<f64> = preds.iter().map(|&p| grid.snap_down(p)).collect();
            moments_equal &= group_cdf_moments(&data, &grid, &preds) == group_cdf_moments(&data, &grid, &floored);
        }
    }
    outcome(
        worst <= TELESCOPE_TOL && moments_equal,
        format!("max identity error {worst:.3e}, moments of f and floor(f) identical: {moments_equal}"),
    )
}

fn fast_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=500);
        let groups = rng.random_range(1..=4).min(n);
        let data = uniform_data(&mut rng, n, 2, groups);
        let grid = Grid::new(rng.random_range(1..=16)).unwrap();
        let f = random_model(&mut rng, 2);
        let preds = f.predict_dataset(&data).unwrap();
        let fast = group_cdf_moments(&data, &grid, &preds);
        let slow = naive_moments(&data, &grid, &preds);
        for (a, b) in fast.values().iter().zip(slow.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= MOMENT_TOL, format!("max |fast - naive| = {worst:.3e}"))
}

fn theorem3_certificate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (bound, nu) = (5.0, 0.05);
    let mut failures = Vec::new();
    let mut max_iters_used = 0;
    let mut worst_cost = f64::NEG_INFINITY;
    let mut worst_viol = f64::NEG_INFINITY;
    let mut skipped = 0;
    for inst in 0..20 {
        let data = uniform_data(&mut rng, 60, 2, 2);
        let problem = SpProblem::new(&data, LossSpec::HalfSquare, Grid::new(4).unwrap()).unwrap();
        let mut models: Vec<LinearModel> = (0..4).map(|_| random_model(&mut rng, 2)).collect();
        models.push(LinearModel::constant(2, 0.5));
        let eps: Vec<f64> = (0..2).map(|_| rng.random_range(0.02..0.2)).collect();
        let config = SpConfig {
            eps_hat: eps.clone(),
            bound,
            nu,
            grid_size: 4,
            max_iters: usize::MAX,
            oracle: OracleKind::Ls,
            slack_scale: 0.0,
        };
        let cap = config.iteration_bound(2);
        let config = SpConfig { max_iters: cap.ceil() as usize, ..config };
        let mut oracle = FiniteClassOracle::new(&problem, models.clone()).unwrap();
        let res = run_sp(&problem, &config, &mut oracle).unwrap();
        let lp = solve_sp_exact(&problem, &CandidateSet::new(models).unwrap(), &eps).unwrap();
        let ExactSolution::Optimal { value, .. } = lp else {
            skipped += 1;
            continue;
        };
        max_iters_used = max_iters_used.max(res.iterations);
        let cost_gap = res.cost - (value + 2.0 * nu);
        let viol = res.max_violation() - (2.0 + 2.0 * nu) / bound;
        worst_cost = worst_cost.max(cost_gap);
        worst_viol = worst_viol.max(viol);
        if !res.converged || res.iterations as f64 > cap || cost_gap > CERT_TOL || viol > CERT_TOL {
            failures.push(inst);
        }
    }
    outcome(
        failures.is_empty() && skipped == 0,
        format!(
            "20 instances, failing {failures:?}, infeasible LPs {skipped}, max iterations {max_iters_used}, \
             worst cost excess {worst_cost:.3e}, worst violation excess {worst_viol:.3e}"
        ),
    )
}

fn noisy_two_group(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| {
            let g = i % 2;
            let x: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            let y = if g == 0 {
                (0.2 + 0.3 * x[0] + 0.2 * x[1] + 0.05 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)
            } else if rng.random::<bool>() {
                1.0
            } else {
                0.0
            };
            Example::new(x, g, y)
        })
        .collect();
    Dataset::new(examples, 2).unwrap()
}

fn bgl_contract() -> Outcome {
    let data = noisy_two_group(105, 400);
    let loss = LossSpec::HalfSquare;
    let unconstrained = RandomizedPredictor::point_mass(fit_unconstrained(&data, loss).unwrap());
    let base = mixture_loss(&unconstrained, &data, loss).unwrap();

    let vac = BglConfig { zeta_hat: vec![1.0], bound: 2.0, nu: 0.05, max_iters: 1_000_000, ..BglConfig::default() };
    let r1 = run_bgl(&data, loss, &vac).unwrap();
    let cap1 = vac.iteration_bound(2);
    let ok1 = r1.converged
        && r1.q_hat.is_some()
        && r1.loss <= base + 2.0 * vac.nu + BGL_LEARNER_TOL
        && r1.iterations as f64 <= cap1;

    let tight =
        BglConfig { zeta_hat: vec![1.0, 0.0], bound: 20.0, nu: 0.1, max_iters: 1_000_000, ..BglConfig::default() };
    let r2 = run_bgl(&data, loss, &tight).unwrap();
    let cap2 = tight.iteration_bound(2);
    let ok2 = r2.converged && r2.is_infeasible() && r2.iterations as f64 <= cap2;
    outcome(
        ok1 && ok2,
        format!(
            "vacuous: loss {:.6} vs unconstrained {base:.6} (+2nu {:.3}), {} iters (cap {cap1:.0}); \
             zeta=0 on noisy group: verdict {}, group losses {:?}, {} iters (cap {cap2:.0})",
            r1.loss,
            2.0 * vac.nu,
            r1.iterations,
            if r2.is_infeasible() { "infeasible" } else { "feasible" },
            r2.group_losses.values,
            r2.iterations
        ),
    )
}

fn oracle_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let data = uniform_data(&mut rng, 150, 2, 3);
    let n_points = 6;
    let random_lambda = |rng: &mut ChaCha8Rng| NetLambda {
        groups: 3,
        n_points,
        values: (0..3 * n_points).map(|_| rng.random_range(-2.0..2.0)).collect(),
    };

    let mut cs_err = 0.0f64;
    for spec in losses() {
        let problem = SpProblem::new(&data, spec, Grid::new(n_points).unwrap()).unwrap();
        for _ in 0..20 {
            let lam = random_lambda(&mut rng);
            let f = random_model(&mut rng, 2);
            let preds = f.predict_dataset(&data).unwrap();
            let ev = problem.evaluate_predictions(&preds);
            let lagr = ev.cost + ev.moments.values().iter().zip(&lam.values).map(|(g, l)| g * l).sum::<f64>();
            let cs: f64 = cs_instances(&problem, &lam)
                .unwrap()
                .iter()
                .filter(|c| preds[c.row] >= problem.grid().point(c.j))
                .map(|c| c.cost / n_points as f64)
                .sum::<f64>()
                / data.len() as f64;
            cs_err = cs_err.max((lagr - cs).abs());
        }
    }

    let problem = SpProblem::new(&data, LossSpec::HalfSquare, Grid::new(n_points).unwrap()).unwrap();
    let mut matched_err = 0.0f64;
    for _ in 0..10 {
        let lam = random_lambda(&mut rng);
        let a = best_h_ls(&problem, &lam).unwrap();
        let b = best_h_matched(&problem, &lam, &DescentConfig::default(), None).unwrap().model;
        for (x, y) in a.weights.iter().chain([&a.intercept]).zip(b.weights.iter().chain([&b.intercept])) {
            matched_err = matched_err.max((x - y).abs());
        }
    }

    let mut hinge_worst = 0.0f64;
    for seed in 0..5 {
        let mut r = ChaCha8Rng::seed_from_u64(200 + seed);
        let small = uniform_data(&mut r, 50, 2, 2);
        let grid = Grid::new(4).unwrap();
        let problem = SpProblem::new(&small, LossSpec::HalfSquare, grid).unwrap();
        let lam = NetLambda { groups: 2, n_points: 4, values: (0..8).map(|_| r.random_range(-0.05..0.05)).collect() };
        let inst = cs_instances(&problem, &lam).unwrap();
        let rows: Vec<ThresholdRow<'_>> = inst
            .iter()
            .map(|c| {
                let (weight, positive) = c.weighted_binary();
                ThresholdRow {
                    weight,
                    features: &small.examples()[c.row].features,
                    threshold: grid.point(c.j),
                    positive,
                }
            })
            .collect();
        let exact = fit_threshold_classifier_exact(&rows, grid.alpha() / 2.0).unwrap();
        let sub = fit_threshold_classifier(&rows, grid.alpha() / 2.0, &HingeConfig::default()).unwrap();
        hinge_worst = hinge_worst.max((sub.objective - exact.objective) / exact.objective.max(1e-12));
    }
    outcome(
        cs_err <= CS_IDENTITY_TOL && matched_err <= MATCHED_TOL && hinge_worst <= HINGE_REL_TOL,
        format!(
            "Lagrangian vs CS objective {cs_err:.3e}; matched vs LS model {matched_err:.3e}; \
             hinge subgradient vs exact LP worst relative gap {:.4}%",
            100.0 * hinge_worst
        ),
    )
}

fn seo_baseline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst_corr = 0.0f64;
    for _ in 0..10 {
        let examples = (0..300)
            .map(|i| {
                let g = i % 3;
                let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.2 * g as f64).collect();
                let y = (0.2 * x[0] + 0.3 * x[1] + 0.1 * x[2] + 0.1 * rng.random::<f64>()).clamp(0.0, 1.0);
                Example::new(x, g, y)
            })
            .collect();
        let fit = fit_seo(&Dataset::new(examples, 3).unwrap()).unwrap();
        worst_corr = fit.correlations.iter().fold(worst_corr, |m, c| m.max(c.abs()));
    }
    // features balanced within every group: the constraint is inactive
    let mut examples = Vec::new();
    for g in 0..2 {
        for k in 0..20 {
            let x = vec![k as f64 / 19.0, ((k * 7) % 20) as f64 / 19.0];
            let y = (0.1 + 0.4 * x[0] + 0.3 * x[1] + 0.01 * ((k * 3) % 5) as f64).min(1.0);
            examples.push(Example::new(x, g, y));
        }
    }
    let data = Dataset::new(examples, 2).unwrap();
    let seo = fit_seo(&data).unwrap().model;
    let plain = fit_unconstrained(&data, LossSpec::HalfSquare).unwrap();
    let diff = seo
        .weights
        .iter()
        .chain([&seo.intercept])
        .zip(plain.weights.iter().chain([&plain.intercept]))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        worst_corr <= SEO_TOL && diff <= SEO_TOL,
        format!("max |correlation| {worst_corr:.3e}; orthogonal design vs unconstrained {diff:.3e}"),
    )
}

fn tradeoff_reproduction() -> Outcome {
    let data = synth_generate(&SynthSpec { n: 2000, seed: 11, ..SynthSpec::default() }).unwrap();
    let (train, test) = split(&data, 0.5, 11).unwrap();
    let grid = Grid::new(20).unwrap();
    let eps_list = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
    let mut lines = Vec::new();
    let mut pass = true;
    for (kind, loss) in [
        (OracleKind::Ls, LossSpec::HalfSquare),
        (OracleKind::Matched, LossSpec::scaled_logistic(5.0).unwrap()),
    ] {
        let plain = RandomizedPredictor::point_mass(fit_unconstrained(&train, loss).unwrap());
        let base_disp = sp_disparity(&plain, &test, &grid).unwrap();
        let base_loss = mixture_loss(&plain, &test, loss).unwrap();
        let config = SpConfig {
            eps_hat: vec![1.0],
            bound: 10.0,
            nu: 0.02,
            grid_size: 20,
            max_iters: 2000,
            oracle: kind,
            slack_scale: 0.0,
        };
        let runs = sweep_sp(&train, &test, &eps_list, &config, loss, None).unwrap();
        let tight = &runs.last().unwrap().point;
        let ok = base_disp >= 0.3
            && tight.is_ok()
            && tight.test_disp <= 0.5 * base_disp
            && tight.test_loss - base_loss <= 0.05;
        pass &= ok;
        lines.push(format!(
            "{}: unconstrained disp {base_disp:.3} loss {base_loss:.4}, eps={} disp {:.3} loss {:.4}",
            kind.name(),
            tight.eps,
            tight.test_disp,
            tight.test_loss
        ));
    }
    outcome(pass, lines.join("; "))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_fairreg");
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("synth.csv");
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let s = run(&["synth", "--n", "400", "--seed", "5", "--out", csv.to_str().unwrap()]);
    if !s.status.success() {
        return outcome(false, format!("synth failed: {}", String::from_utf8_lossy(&s.stderr)));
    }
    let sweep = |out: &Path, threads: &str| {
        run(&[
            "sweep-sp",
            "--data",
            csv.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--eps-list",
            "0.5,0.1,0.1,0.02",
            "--grid",
            "10",
            "--nu",
            "0.05",
            "--max-iters",
            "300",
            "--threads",
            threads,
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = sweep(&a, "2");
    let rb = sweep(&b, "3");
    if !ra.status.success() || !rb.status.success() {
        return outcome(false, format!("sweep failed: {}", String::from_utf8_lossy(&ra.stderr)));
    }
    let mut same = true;
    for f in ["results.csv", "results.json", "history.jsonl"] {
        same &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    }
    outcome(same, format!("results.csv, results.json, history.jsonl byte-identical: {same}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("discretization bound", discretization_bound),
        ("telescoping identity", telescoping_identity),
        ("fast vs naive moments", fast_moments),
        ("saddle-point certificate", theorem3_certificate),
        ("bounded group loss contract", bgl_contract),
        ("oracle reduction consistency", oracle_consistency),
        ("SEO baseline", seo_baseline),
        ("synthetic tradeoff", tradeoff_reproduction),
        ("sweep determinism", determinism),
    ];
    // optional numeric arguments select a subset of criteria
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} ({name}): {verdict} [{:.1}s] {}", i + 1, start.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
