use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fairreg::baselines::{fit_seo, fit_unconstrained};
use fairreg::harness::report::{write_history_jsonl, write_history_lines, write_points_csv};
use fairreg::harness::sweep::{mixture_group_losses, mixture_loss, mixture_moments};
use fairreg::harness::{
    load_csv, load_model, save_model, split, sweep_bgl, sweep_sp, synth_generate, DataSchema, SweepReport, SynthSpec,
};
use fairreg::oracles::DescentConfig;
use fairreg::{
    run_bgl, train_sp, BglConfig, Dataset, FairError, Grid, LossSpec, OracleKind, RandomizedPredictor, SpConfig,
};

#[derive(Parser)]
#[command(name = "fairreg", version, about = "Fair regression under statistical parity or bounded group loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one statistical-parity model.
    TrainSp(TrainSpArgs),
    /// Train one bounded-group-loss model.
    TrainBgl(TrainBglArgs),
    /// Sweep statistical-parity slacks and write the tradeoff curve.
    SweepSp(SweepSpArgs),
    /// Sweep bounded-group-loss bounds and write the tradeoff curve.
    SweepBgl(SweepBglArgs),
    /// Fit an unconstrained or zero-correlation baseline.
    Baseline(BaselineArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Report loss and disparity of a stored model on a dataset.
    Audit(AuditArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label: String,
    #[arg(long, default_value = "group")]
    group: String,
    /// Comma-separated feature columns; defaults to all remaining columns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Min-max scale the label and features.
    #[arg(long)]
    normalize: bool,
    /// Fraction of rows used for training.
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LossKind {
    HalfSquare,
    Logistic,
}

#[derive(Args, Clone)]
struct LossArgs {
    #[arg(long, value_enum, default_value = "half-square")]
    loss: LossKind,
    /// Steepness of the scaled logistic loss.
    #[arg(long, default_value_t = fairreg::loss::DEFAULT_LOGISTIC_C)]
    logistic_c: f64,
}

impl LossArgs {
    fn spec(&self) -> fairreg::Result<LossSpec> {
        match self.loss {
            LossKind::HalfSquare => Ok(LossSpec::HalfSquare),
            LossKind::Logistic => LossSpec::scaled_logistic(self.logistic_c),
        }
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 10.0)]
    bound: f64,
    #[arg(long, default_value_t = 1e-3)]
    nu: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    /// Adds `c / sqrt(n_a)` to each group's slack.
    #[arg(long, default_value_t = 0.0)]
    slack_scale: f64,
    /// Exit with status 4 if a run stops before converging.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct TrainSpArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Slack per group, or a single value for all groups.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    grid: usize,
    #[arg(long, default_value = "ls")]
    oracle: OracleKind,
    /// Where to write the model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the iteration history (JSON lines).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct TrainBglArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Loss bound per group, or a single value for all groups.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    zeta: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct SweepSpArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.2,0.1,0.05,0.02,0.01")]
    eps_list: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    grid: usize,
    #[arg(long, default_value = "ls")]
    oracle: OracleKind,
    /// Directory for results.csv, results.json and history.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepBglArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.2,0.1,0.05,0.02,0.01")]
    zeta_list: Vec<f64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Unconstrained,
    Seo,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long, value_enum, default_value = "unconstrained")]
    kind: BaselineKind,
    /// Grid size used for the reported disparity.
    #[arg(long, default_value_t = 40)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
    group_weights: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    mean_shift: f64,
    #[arg(long, default_value_t = 0.2)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label: String,
    #[arg(long, default_value = "group")]
    group: String,
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    normalize: bool,
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long, default_value_t = 40)]
    grid: usize,
}

enum Failure {
    Error(FairError),
    Infeasible,
    NotConverged,
}

impl From<FairError> for Failure {
    fn from(e: FairError) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CliResult = std::result::Result<(), Failure>;

fn load(args: &DataArgs) -> fairreg::Result<(Dataset, Dataset)> {
    let schema = DataSchema {
        label_column: args.label.clone(),
        group_column: args.group.clone(),
        feature_columns: args.features.clone(),
        normalize: args.normalize,
    };
    let loaded = load_csv(&args.data, &schema)?;
    log::info!(
        "loaded {} rows, {} features, {} groups",
        loaded.dataset.len(),
        loaded.dataset.dim(),
        loaded.dataset.group_count()
    );
    split(&loaded.dataset, args.train_fraction, args.seed)
}

fn data_echo(args: &DataArgs) -> serde_json::Value {
    json!({
        "data": args.data.file_name().map(|f| f.to_string_lossy().into_owned()),
        "label": args.label,
        "group": args.group,
        "features": args.features,
        "normalize": args.normalize,
        "train_fraction": args.train_fraction,
        "seed": args.seed,
    })
}

fn print_json(v: &serde_json::Value) -> fairreg::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn sp_metrics(q: &RandomizedPredictor, data: &Dataset, loss: LossSpec, grid: &Grid) -> fairreg::Result<serde_json::Value> {
    Ok(json!({
        "loss": mixture_loss(q, data, loss)?,
        "sp_disparity": mixture_moments(q, data, grid)?.max_abs(),
        "group_losses": mixture_group_losses(q, data, loss)?,
    }))
}

fn write_history(path: &Path, eps: f64, history: &[fairreg::sp_solver::IterationRecord]) -> fairreg::Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_history_lines(&mut f, 0, eps, history)?;
    std::io::Write::flush(&mut f)?;
    Ok(())
}

fn train_sp_cmd(a: TrainSpArgs) -> CliResult {
    let (train, test) = load(&a.data)?;
    let loss = a.loss.spec()?;
    let config = SpConfig {
        eps_hat: a.eps.clone(),
        bound: a.solver.bound,
        nu: a.solver.nu,
        grid_size: a.grid,
        max_iters: a.solver.max_iters,
        oracle: a.oracle,
        slack_scale: a.solver.slack_scale,
    };
    let res = train_sp(&train, loss, &config)?;
    let grid = Grid::new(a.grid)?;
    if let Some(p) = &a.out {
        save_model(p, &res.q_hat)?;
    }
    if let Some(p) = &a.history {
        write_history(p, a.eps[0], &res.history)?;
    }
    print_json(&json!({
        "iterations": res.iterations,
        "converged": res.converged,
        "nu_upper": res.nu_upper,
        "nu_lower": res.nu_lower_raw,
        "train_cost": res.cost,
        "train_max_violation": res.max_violation(),
        "train": sp_metrics(&res.q_hat, &train, loss, &grid)?,
        "test": sp_metrics(&res.q_hat, &test, loss, &grid)?,
    }))?;
    if a.solver.strict && !res.converged {
        return Err(Failure::NotConverged);
    }
    Ok(())
}

fn bgl_config(solver: &SolverArgs, zeta: Vec<f64>) -> BglConfig {
    BglConfig {
        zeta_hat: zeta,
        bound: solver.bound,
        nu: solver.nu,
        max_iters: solver.max_iters,
        slack_scale: solver.slack_scale,
        descent: DescentConfig::default(),
    }
}

fn train_bgl_cmd(a: TrainBglArgs) -> CliResult {
    let (train, test) = load(&a.data)?;
    let loss = a.loss.spec()?;
    let res = run_bgl(&train, loss, &bgl_config(&a.solver, a.zeta.clone()))?;
    if let Some(p) = &a.history {
        write_history(p, a.zeta[0], &res.history)?;
    }
    let q = res.q_hat.as_ref().unwrap_or(&res.candidate);
    if let (Some(p), Some(q)) = (&a.out, &res.q_hat) {
        save_model(p, q)?;
    }
    print_json(&json!({
        "feasible": !res.is_infeasible(),
        "iterations": res.iterations,
        "converged": res.converged,
        "nu_upper": res.nu_upper,
        "nu_lower": res.nu_lower_raw,
        "train_loss": res.loss,
        "train_group_losses": res.group_losses.values,
        "test_loss": mixture_loss(q, &test, loss)?,
        "test_group_losses": mixture_group_losses(q, &test, loss)?,
    }))?;
    if res.is_infeasible() {
        return Err(Failure::Infeasible);
    }
    if a.solver.strict && !res.converged {
        return Err(Failure::NotConverged);
    }
    Ok(())
}

fn write_sweep(dir: &Path, config: serde_json::Value, runs: &[fairreg::harness::SweepRun]) -> fairreg::Result<()> {
    fs::create_dir_all(dir)?;
    let points: Vec<_> = runs.iter().map(|r| r.point.clone()).collect();
    write_points_csv(File::create(dir.join("results.csv"))?, &points)?;
    SweepReport::new(config, points).write_json(std::io::BufWriter::new(File::create(dir.join("results.json"))?))?;
    write_history_jsonl(File::create(dir.join("history.jsonl"))?, runs)?;
    Ok(())
}

fn sweep_status(runs: &[fairreg::harness::SweepRun], strict: bool) -> CliResult {
    for r in runs {
        let p = &r.point;
        println!(
            "eps={:<8} train_loss={:.6} test_loss={:.6} train_disp={:.6} test_disp={:.6} iters={} {}",
            p.eps, p.train_loss, p.test_loss, p.train_disp, p.test_disp, p.iters, p.status
        );
    }
    if strict && runs.iter().any(|r| !r.point.converged) {
        return Err(Failure::NotConverged);
    }
    Ok(())
}

fn sweep_sp_cmd(a: SweepSpArgs) -> CliResult {
    let (train, test) = load(&a.data)?;
    let loss = a.loss.spec()?;
    let base = SpConfig {
        eps_hat: vec![1.0],
        bound: a.solver.bound,
        nu: a.solver.nu,
        grid_size: a.grid,
        max_iters: a.solver.max_iters,
        oracle: a.oracle,
        slack_scale: a.solver.slack_scale,
    };
    let runs = sweep_sp(&train, &test, &a.eps_list, &base, loss, a.threads)?;
    let config = json!({
        "constraint": "statistical_parity",
        "eps_list": a.eps_list,
        "bound": base.bound,
        "nu": base.nu,
        "grid_size": base.grid_size,
        "max_iters": base.max_iters,
        "oracle": base.oracle,
        "slack_scale": base.slack_scale,
        "loss": loss,
        "data": data_echo(&a.data),
    });
    write_sweep(&a.out_dir, config, &runs)?;
    sweep_status(&runs, a.solver.strict)
}

fn sweep_bgl_cmd(a: SweepBglArgs) -> CliResult {
    let (train, test) = load(&a.data)?;
    let loss = a.loss.spec()?;
    let base = bgl_config(&a.solver, vec![1.0]);
    let runs = sweep_bgl(&train, &test, &a.zeta_list, &base, loss, a.threads)?;
    let config = json!({
        "constraint": "bounded_group_loss",
        "zeta_list": a.zeta_list,
        "bound": base.bound,
        "nu": base.nu,
        "max_iters": base.max_iters,
        "slack_scale": base.slack_scale,
        "loss": loss,
        "data": data_echo(&a.data),
    });
    write_sweep(&a.out_dir, config, &runs)?;
    sweep_status(&runs, a.solver.strict)
}

fn baseline_cmd(a: BaselineArgs) -> CliResult {
    let (train, test) = load(&a.data)?;
    let loss = a.loss.spec()?;
    let grid = Grid::new(a.grid)?;
    let (model, extra) = match a.kind {
        BaselineKind::Unconstrained => (fit_unconstrained(&train, loss)?, json!(null)),
        BaselineKind::Seo => {
            let fit = fit_seo(&train)?;
            (fit.model, json!(fit.correlations))
        }
    };
    let q = RandomizedPredictor::point_mass(model);
    if let Some(p) = &a.out {
        save_model(p, &q)?;
    }
    print_json(&json!({
        "train": sp_metrics(&q, &train, loss, &grid)?,
        "test": sp_metrics(&q, &test, loss, &grid)?,
        "group_correlations": extra,
    }))?;
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> CliResult {
    let spec = SynthSpec {
        n: a.n,
        d: a.d,
        group_weights: a.group_weights,
        mean_shift: a.mean_shift,
        noise_sd: a.noise_sd,
        seed: a.seed,
    };
    let data = synth_generate(&spec)?;
    let mut w = csv::Writer::from_path(&a.out).map_err(FairError::from)?;
    let mut header: Vec<String> = (0..spec.d).map(|k| format!("x{k}")).collect();
    header.extend((1..spec.group_weights.len()).map(|g| format!("is_group{g}")));
    header.push("group".into());
    header.push("label".into());
    w.write_record(&header).map_err(FairError::from)?;
    for e in data.examples() {
        let mut rec: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
        rec.push(e.group.to_string());
        rec.push(e.label.to_string());
        w.write_record(&rec).map_err(FairError::from)?;
    }
    w.flush()?;
    Ok(())
}

fn audit_cmd(a: AuditArgs) -> CliResult {
    let schema = DataSchema {
        label_column: a.label,
        group_column: a.group,
        feature_columns: a.features,
        normalize: a.normalize,
    };
    let data = load_csv(&a.data, &schema)?;
    let q = load_model(&a.model)?;
    let loss = a.loss.spec()?;
    let mut metrics = sp_metrics(&q, &data.dataset, loss, &Grid::new(a.grid)?)?;
    metrics["groups"] = json!(data.group_names);
    print_json(&metrics)?;
    Ok(())
}

fn exit_code(e: &FairError) -> u8 {
    match e {
        FairError::Data { .. } | FairError::Dataset(_) | FairError::Csv(_) | FairError::Io(_) => 2,
        FairError::Domain { .. } | FairError::Dimension { .. } | FairError::InvalidArgument(_) => 2,
        FairError::Learner(_) | FairError::Json(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainSp(a) => train_sp_cmd(a),
        Command::TrainBgl(a) => train_bgl_cmd(a),
        Command::SweepSp(a) => sweep_sp_cmd(a),
        Command::SweepBgl(a) => sweep_bgl_cmd(a),
        Command::Baseline(a) => baseline_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Audit(a) => audit_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Infeasible) => {
            eprintln!("constraints are infeasible for this bound");
            ExitCode::from(3)
        }
        Err(Failure::NotConverged) => {
            eprintln!("solver stopped before converging");
            ExitCode::from(4)
        }
    }
}
