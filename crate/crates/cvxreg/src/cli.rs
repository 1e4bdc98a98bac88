use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvxreg_core::admm::{fit_with, NoClock};
use cvxreg_core::constraints::certify;
use cvxreg_core::harness::{equispaced_grid, error_metric, synth_quadratic_with, SitePlacement};
use cvxreg_core::interpolant;
use cvxreg_core::model::FEASIBILITY_TOL;
use cvxreg_core::warmstart::{initial_consensus, GpConfig};
use cvxreg_core::{AdmmConfig, AdmmError, FunctionClass, ObservationSet, Smoothness, ZUpdate};
use serde_json::json;

use crate::bench::{self, BenchConfig, WarmStart};
use crate::error::CliError;
use crate::io::{self, sidecar, GridRow, MetricFile, ModelFile, SCHEMA_VERSION};
use crate::manifest::RunManifest;
use crate::parallel::{resolve_workers, PoolSweep};

#[derive(Debug, Parser)]
#[command(name = "cvxreg", version, about = "Least-squares regression over smooth strongly convex functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noisy samples of x^2 on [-1, 1]
    Synth(SynthArgs),
    /// Fit a model to observations
    Fit(FitArgs),
    /// Evaluate a fitted model on a grid
    Eval(EvalArgs),
    /// Scaling benchmark on synthetic data
    Bench(BenchArgs),
    /// Aggregate benchmark records
    Report(ReportArgs),
    /// fit followed by eval
    Pipeline(PipelineArgs),
}

/// `inf` or a positive number.
pub fn parse_smoothness(s: &str) -> Result<Smoothness, String> {
    if s == "inf" {
        return Ok(Smoothness::Infinite);
    }
    s.parse::<f64>()
        .map(Smoothness::Finite)
        .map_err(|_| format!("{s:?} is neither a number nor \"inf\""))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Placement {
    Equispaced,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WarmStartArg {
    Gp,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZUpdateArg {
    Exact,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrueFn {
    X2,
    None,
}

impl From<WarmStartArg> for WarmStart {
    fn from(w: WarmStartArg) -> Self {
        match w {
            WarmStartArg::Gp => WarmStart::Gp,
            WarmStartArg::None => WarmStart::None,
        }
    }
}

impl From<ZUpdateArg> for ZUpdate {
    fn from(z: ZUpdateArg) -> Self {
        match z {
            ZUpdateArg::Exact => ZUpdate::ExactAverage,
            ZUpdateArg::Paper => ZUpdate::PaperFaithful,
        }
    }
}

fn value_name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn smoothness_token(s: Smoothness) -> String {
    match s {
        Smoothness::Finite(l) => l.to_string(),
        Smoothness::Infinite => "inf".into(),
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Placement::Equispaced)]
    pub placement: Placement,
    #[arg(long)]
    pub out: PathBuf,
}

/// Solver flags shared by `fit` and `pipeline`.
#[derive(Debug, Clone, Args)]
pub struct FitOptions {
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Smoothness constant, or `inf`
    #[arg(long = "L", value_parser = parse_smoothness, default_value = "5")]
    pub l: Smoothness,
    /// ADMM penalty [default: 1/n]
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value_t = WarmStartArg::Gp)]
    pub warm_start: WarmStartArg,
    #[arg(long, value_enum, default_value_t = ZUpdateArg::Exact)]
    pub z_update: ZUpdateArg,
    /// Largest pair-residual violation accepted by certification
    #[arg(long, default_value_t = FEASIBILITY_TOL)]
    pub certify_tol: f64,
    /// Edge-sweep threads [default: $CVXREG_WORKERS, else all cores]
    #[arg(long)]
    pub workers: Option<usize>,
}

impl FitOptions {
    fn argv(&self, n: usize, workers: usize) -> Vec<String> {
        vec![
            "--mu".into(),
            self.mu.to_string(),
            "--L".into(),
            smoothness_token(self.l),
            "--rho".into(),
            self.rho.unwrap_or(1.0 / n as f64).to_string(),
            "--eps".into(),
            self.eps.to_string(),
            "--max-iters".into(),
            self.max_iters.to_string(),
            "--warm-start".into(),
            value_name(self.warm_start),
            "--z-update".into(),
            value_name(self.z_update),
            "--certify-tol".into(),
            self.certify_tol.to_string(),
            "--workers".into(),
            workers.to_string(),
        ]
    }

    fn config_json(&self, n: usize, workers: usize) -> serde_json::Value {
        json!({
            "class": io::ClassSpec { mu: self.mu, l: self.l },
            "rho": self.rho.unwrap_or(1.0 / n as f64),
            "eps": self.eps,
            "max_iters": self.max_iters,
            "warm_start": value_name(self.warm_start),
            "z_update": value_name(self.z_update),
            "certify_tol": self.certify_tol,
            "newton_tol": AdmmConfig::default().newton_tol,
            "max_newton_iters": AdmmConfig::default().max_newton_iters,
            "workers": workers,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub options: FitOptions,
    #[arg(long)]
    pub out: PathBuf,
}

/// Grid flags shared by `eval` and `pipeline`.
#[derive(Debug, Clone, Args)]
pub struct EvalOptions {
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [-1.0, 1.0])]
    pub range: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub ns: usize,
    #[arg(long, value_enum, default_value_t = TrueFn::None)]
    pub true_fn: TrueFn,
}

impl EvalOptions {
    fn argv(&self) -> Vec<String> {
        vec![
            "--range".into(),
            self.range[0].to_string(),
            self.range[1].to_string(),
            "--ns".into(),
            self.ns.to_string(),
            "--true-fn".into(),
            value_name(self.true_fn),
        ]
    }

    fn validate(&self) -> Result<(), CliError> {
        let (a, b) = (self.range[0], self.range[1]);
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CliError::invalid(format!("--range needs finite a < b, got {a} {b}")));
        }
        if self.ns < 2 {
            return Err(CliError::invalid("--ns must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub options: EvalOptions,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub fit: FitOptions,
    #[command(flatten)]
    pub eval: EvalOptions,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long)]
    pub grid_out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, num_args = 1.., default_values_t = [25, 50, 100, 200])]
    pub n_list: Vec<usize>,
    /// Realizations per configuration
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, num_args = 1.., default_values_t = [0.03, 0.01])]
    pub eps_list: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long = "L", value_parser = parse_smoothness, default_value = "5")]
    pub l: Smoothness,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value_t = WarmStartArg::Gp)]
    pub warm_start: WarmStartArg,
    #[arg(long, value_enum, default_value_t = ZUpdateArg::Exact)]
    pub z_update: ZUpdateArg,
    #[arg(long, default_value_t = 1000)]
    pub ns: usize,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Records CSV; the same records go to `<stem>.records.json` next to it
    #[arg(long)]
    pub out: PathBuf,
}

pub fn records_json_path(out: &Path) -> PathBuf {
    out.with_extension("records.json")
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Aggregate CSV [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.n < 2 {
        return Err(CliError::invalid("--n must be at least 2"));
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(CliError::invalid("--sigma must be finite and nonnegative"));
    }
    let placement = match a.placement {
        Placement::Equispaced => SitePlacement::Equispaced,
        Placement::Random => SitePlacement::Random,
    };
    let obs = synth_quadratic_with(a.n, a.sigma, a.seed, placement);
    io::write_observations(&a.out, &obs)?;
    let argv = [
        "synth", "--n", &a.n.to_string(), "--sigma", &a.sigma.to_string(), "--seed", &a.seed.to_string(),
        "--placement", &value_name(a.placement), "--out", &path_str(&a.out),
    ]
    .map(String::from)
    .to_vec();
    let mut m = RunManifest::new(
        "synth",
        argv,
        json!({ "n": a.n, "sigma": a.sigma, "placement": value_name(a.placement), "true_fn": "x2" }),
    );
    m.seed = Some(a.seed);
    m.outputs.push(a.out.clone());
    m.write()?;
    Ok(())
}

/// Fits, certifies and packages the model; non-convergence is reported through the flag
/// in the trace summary rather than as an error.
pub fn fit_model(obs: &ObservationSet, o: &FitOptions, workers: usize) -> Result<ModelFile, CliError> {
    let class = FunctionClass::new(o.mu, o.l).map_err(CliError::invalid)?;
    let config = AdmmConfig {
        rho: o.rho,
        eps: o.eps,
        max_iters: o.max_iters,
        z_update: o.z_update.into(),
        ..AdmmConfig::default()
    };
    config.validate().map_err(CliError::invalid)?;
    if !(o.certify_tol >= 0.0) {
        return Err(CliError::invalid("--certify-tol must be nonnegative"));
    }
    let warm = match o.warm_start {
        WarmStartArg::Gp => Some(
            initial_consensus(obs, &GpConfig::default()).map_err(|e| CliError::Solver(e.to_string()))?,
        ),
        WarmStartArg::None => None,
    };
    let sweep = PoolSweep::new(workers).map_err(CliError::Solver)?;
    let mut fit = match fit_with(obs, &class, &config, warm.as_deref(), &sweep, &NoClock) {
        Ok(fit) => fit,
        Err(AdmmError::MaxIterationsExceeded { fit }) => *fit,
        Err(e @ (AdmmError::InvalidConfig(_) | AdmmError::TooFewPoints { .. })) => {
            return Err(CliError::invalid(e))
        }
        Err(e) => return Err(CliError::Solver(e.to_string())),
    };
    let cert = certify(&mut fit.model, o.certify_tol);
    Ok(ModelFile::new(&fit, obs, &cert, o.certify_tol))
}

fn not_converged(model: &ModelFile) -> CliError {
    CliError::Solver(format!(
        "ADMM stopped after {} iterations with residual {:e}; best iterate written",
        model.trace.iterations, model.trace.final_residual
    ))
}

fn write_model(
    model: &ModelFile,
    out: &Path,
    input: &Path,
    argv: Vec<String>,
    config: serde_json::Value,
    subcommand: &str,
    workers: usize,
) -> Result<(), CliError> {
    io::write_json(out, model)?;
    let mut m = RunManifest::new(subcommand, argv, config);
    m.inputs.push(input.to_path_buf());
    m.outputs.push(out.to_path_buf());
    m.workers = Some(workers);
    m.write()?;
    eprintln!(
        "fit: {} iterations, residual {:.3e}, objective {:.6e}, certified {} (worst pair residual {:.3e})",
        model.trace.iterations, model.trace.final_residual, model.trace.objective, model.certified, model.worst_residual
    );
    Ok(())
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let workers = resolve_workers(a.options.workers).map_err(CliError::invalid)?;
    let obs = io::read_observations(&a.input)?;
    let model = fit_model(&obs, &a.options, workers)?;
    let mut argv = vec!["fit".into(), "--in".into(), path_str(&a.input)];
    argv.extend(a.options.argv(obs.n(), workers));
    argv.extend(["--out".into(), path_str(&a.out)]);
    write_model(&model, &a.out, &a.input, argv, a.options.config_json(obs.n(), workers), "fit", workers)?;
    if model.trace.converged {
        Ok(())
    } else {
        Err(not_converged(&model))
    }
}

/// Grid rows and, when a true function is given, the metric. The last value reports
/// whether every point was solved to tolerance.
pub fn evaluate_model(
    model: &ModelFile,
    model_path: &Path,
    o: &EvalOptions,
) -> Result<(Vec<GridRow>, Option<MetricFile>, bool), CliError> {
    o.validate()?;
    let triplets = model.triplets(model_path)?;
    if triplets.d() != 1 {
        return Err(CliError::invalid(format!("eval works on one-dimensional models, got d = {}", triplets.d())));
    }
    let class = model.class.to_class()?;
    let interp = interpolant::build(&triplets, &class).map_err(|e| CliError::Solver(e.to_string()))?;
    let truth = match o.true_fn {
        TrueFn::X2 => Some(|x: f64| x * x),
        TrueFn::None => None,
    };
    let (a, b) = (o.range[0], o.range[1]);
    let mut rows = Vec::with_capacity(o.ns);
    for x in equispaced_grid(a, b, o.ns) {
        let (phi_hat, converged) =
            bench::evaluate_point(&interp, &[x]).map_err(|e| CliError::Solver(e.to_string()))?;
        rows.push(GridRow {
            x,
            phi_hat,
            phi_true: truth.map(|t| t(x)),
            converged,
        });
    }
    let all_converged = rows.iter().all(|r| r.converged);
    let metric = truth.map(|t| {
        let mut values = rows.iter().map(|r| r.phi_hat);
        MetricFile {
            schema_version: SCHEMA_VERSION,
            true_fn: value_name(o.true_fn),
            range: [a, b],
            n_s: o.ns,
            // same grid, visited in order
            e: error_metric(|_| values.next().expect("one value per grid point"), t, (a, b), o.ns),
        }
    });
    Ok((rows, metric, all_converged))
}

fn write_eval(
    rows: &[GridRow],
    metric: Option<&MetricFile>,
    out: &Path,
    mut manifest: RunManifest,
) -> Result<(), CliError> {
    io::write_grid(out, rows)?;
    manifest.outputs.push(out.to_path_buf());
    if let Some(metric) = metric {
        let path = sidecar(out, ".metric.json");
        io::write_json(&path, metric)?;
        manifest.outputs.push(path);
        eprintln!("eval: E = {:.6e} over {} points", metric.e, metric.n_s);
    }
    manifest.write()?;
    Ok(())
}

fn unsolved_points(rows: &[GridRow]) -> CliError {
    let k = rows.iter().filter(|r| !r.converged).count();
    CliError::Solver(format!("{k} grid points hit the simplex iteration cap; flagged in the output"))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let model: ModelFile = io::read_json(&a.model)?;
    let (rows, metric, ok) = evaluate_model(&model, &a.model, &a.options)?;
    let mut argv = vec!["eval".into(), "--model".into(), path_str(&a.model)];
    argv.extend(a.options.argv());
    argv.extend(["--out".into(), path_str(&a.out)]);
    let mut m = RunManifest::new(
        "eval",
        argv,
        json!({ "range": a.options.range, "ns": a.options.ns, "true_fn": value_name(a.options.true_fn) }),
    );
    m.inputs.push(a.model.clone());
    write_eval(&rows, metric.as_ref(), &a.out, m)?;
    if ok {
        Ok(())
    } else {
        Err(unsolved_points(&rows))
    }
}

pub fn cmd_pipeline(a: &PipelineArgs) -> Result<(), CliError> {
    a.eval.validate()?;
    let workers = resolve_workers(a.fit.workers).map_err(CliError::invalid)?;
    let obs = io::read_observations(&a.input)?;
    let model = fit_model(&obs, &a.fit, workers)?;
    let mut argv = vec!["pipeline".into(), "--in".into(), path_str(&a.input)];
    argv.extend(a.fit.argv(obs.n(), workers));
    argv.extend(a.eval.argv());
    argv.extend([
        "--model-out".into(),
        path_str(&a.model_out),
        "--grid-out".into(),
        path_str(&a.grid_out),
    ]);
    let mut config = a.fit.config_json(obs.n(), workers);
    config["range"] = json!(a.eval.range);
    config["ns"] = json!(a.eval.ns);
    config["true_fn"] = json!(value_name(a.eval.true_fn));
    write_model(&model, &a.model_out, &a.input, argv.clone(), config.clone(), "pipeline", workers)?;
    let (rows, metric, ok) = evaluate_model(&model, &a.model_out, &a.eval)?;
    let mut m = RunManifest::new("pipeline", argv, config);
    m.inputs.push(a.input.clone());
    m.workers = Some(workers);
    write_eval(&rows, metric.as_ref(), &a.grid_out, m)?;
    if !model.trace.converged {
        Err(not_converged(&model))
    } else if !ok {
        Err(unsolved_points(&rows))
    } else {
        Ok(())
    }
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    if a.n_list.iter().any(|n| *n < 2) {
        return Err(CliError::invalid("every --n-list entry must be at least 2"));
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(CliError::invalid("--sigma must be finite and nonnegative"));
    }
    if a.ns < 2 {
        return Err(CliError::invalid("--ns must be at least 2"));
    }
    let class = FunctionClass::new(a.mu, a.l).map_err(CliError::invalid)?;
    let workers = resolve_workers(a.workers).map_err(CliError::invalid)?;
    let mut configs = Vec::new();
    for &eps in &a.eps_list {
        let admm = AdmmConfig {
            eps,
            max_iters: a.max_iters,
            z_update: a.z_update.into(),
            ..AdmmConfig::default()
        };
        admm.validate().map_err(CliError::invalid)?;
        for &n in &a.n_list {
            for seed in a.first_seed..a.first_seed + a.seeds {
                configs.push(BenchConfig {
                    n,
                    seed,
                    sigma: a.sigma,
                    class,
                    admm,
                    warm_start: a.warm_start.into(),
                    n_s: a.ns,
                });
            }
        }
    }
    let sweep = PoolSweep::new(workers).map_err(CliError::Solver)?;
    let records = bench::bench_scaling(&configs, &sweep, workers, |r| {
        eprintln!(
            "bench: n={} {} seed={} iters={} per-iter {:.3e}s E={:.3e}",
            r.n, r.method, r.seed, r.iters, r.time_per_iter_s, r.e_metric
        )
    })?;
    bench::write_records(&a.out, &records)?;
    let json_path = records_json_path(&a.out);
    io::write_json(&json_path, &records)?;

    let mut argv: Vec<String> = vec!["bench".into(), "--n-list".into()];
    argv.extend(a.n_list.iter().map(ToString::to_string));
    argv.extend(["--seeds".into(), a.seeds.to_string(), "--first-seed".into(), a.first_seed.to_string()]);
    argv.extend(["--sigma".into(), a.sigma.to_string(), "--eps-list".into()]);
    argv.extend(a.eps_list.iter().map(ToString::to_string));
    argv.extend([
        "--mu".into(),
        a.mu.to_string(),
        "--L".into(),
        smoothness_token(a.l),
        "--max-iters".into(),
        a.max_iters.to_string(),
        "--warm-start".into(),
        value_name(a.warm_start),
        "--z-update".into(),
        value_name(a.z_update),
        "--ns".into(),
        a.ns.to_string(),
        "--workers".into(),
        workers.to_string(),
        "--out".into(),
        path_str(&a.out),
    ]);
    let mut m = RunManifest::new(
        "bench",
        argv,
        json!({
            "n_list": a.n_list,
            "seeds": (a.first_seed..a.first_seed + a.seeds).collect::<Vec<_>>(),
            "sigma": a.sigma,
            "eps_list": a.eps_list,
            "class": io::ClassSpec::from(class),
            "max_iters": a.max_iters,
            "warm_start": value_name(a.warm_start),
            "z_update": value_name(a.z_update),
            "ns": a.ns,
            "range": [-1.0, 1.0],
            "warmup_iters": bench::WARMUP_ITERS,
            "min_timed_iters": bench::MIN_TIMED_ITERS,
        }),
    );
    m.seed = Some(a.first_seed);
    m.workers = Some(workers);
    m.outputs.push(a.out.clone());
    m.outputs.push(json_path);
    m.write()?;
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<(), CliError> {
    let records = bench::read_records(&a.input)?;
    let table = bench::report_csv(&bench::aggregate(&records));
    match &a.out {
        Some(out) => {
            io::write_file(out, table.as_bytes())?;
            let mut m = RunManifest::new(
                "report",
                vec!["report".into(), "--in".into(), path_str(&a.input), "--out".into(), path_str(out)],
                json!({}),
            );
            m.inputs.push(a.input.clone());
            m.outputs.push(out.clone());
            m.write()?;
        }
        None => print!("{table}"),
    }
    Ok(())
}
