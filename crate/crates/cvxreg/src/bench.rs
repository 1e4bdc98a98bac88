//! Scaling benchmark: synthetic quadratic data, ADMM fit, error metric on a grid.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use cvxreg_core::admm::{admm_step, build_edge_set, fit_with, Clock, EdgeSweep};
use cvxreg_core::harness::{error_metric, synth_quadratic};
use cvxreg_core::interpolant::{self, Interpolant, InterpolantError};
use cvxreg_core::warmstart::{initial_consensus, GpConfig};
use cvxreg_core::{AdmmConfig, AdmmError, AdmmFit, FunctionClass, ZUpdate};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{fmt_f64, write_file};
use crate::parallel::WallClock;

/// Iterations discarded before the per-iteration timing sample.
pub const WARMUP_ITERS: usize = 2;
/// Smallest number of timed iterations behind the per-iteration median.
pub const MIN_TIMED_ITERS: usize = 5;

pub const RECORD_COLUMNS: [&str; 15] = [
    "n",
    "method",
    "iters",
    "residual",
    "time_total_s",
    "time_per_iter_s",
    "E_metric",
    "seed",
    "eps",
    "edges",
    "workers",
    "converged",
    "time_synth_s",
    "time_warmstart_s",
    "time_eval_s",
];

/// Columns holding wall-clock measurements; everything else is reproducible.
pub const TIMING_COLUMNS: [&str; 5] = [
    "time_total_s",
    "time_per_iter_s",
    "time_synth_s",
    "time_warmstart_s",
    "time_eval_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmStart {
    Gp,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub n: usize,
    pub seed: u64,
    pub sigma: f64,
    pub class: FunctionClass,
    pub admm: AdmmConfig,
    pub warm_start: WarmStart,
    /// Grid size for the error metric on `[-1, 1]`.
    pub n_s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub method: String,
    pub iters: usize,
    pub residual: f64,
    /// ADMM wall time; data generation and warm start are reported separately.
    pub time_total_s: f64,
    pub time_per_iter_s: f64,
    #[serde(rename = "E_metric")]
    pub e_metric: f64,
    pub seed: u64,
    pub eps: f64,
    pub edges: usize,
    pub workers: usize,
    pub converged: bool,
    pub time_synth_s: f64,
    pub time_warmstart_s: f64,
    pub time_eval_s: f64,
}

pub fn method_tag(config: &AdmmConfig) -> String {
    match config.z_update {
        ZUpdate::ExactAverage => format!("admm-eps{}", config.eps),
        ZUpdate::PaperFaithful => format!("admm-paper-eps{}", config.eps),
    }
}

/// Value of the interpolant at `x`; when the simplex solver stops early its best value is
/// used and the point is flagged.
pub fn evaluate_point(interp: &Interpolant, x: &[f64]) -> Result<(f64, bool), InterpolantError> {
    match interp.evaluate(x) {
        Ok(v) => Ok((v, true)),
        Err(InterpolantError::SimplexSolverNotConverged { value, .. }) => Ok((value, false)),
        Err(e) => Err(e),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Runs one configuration. The per-iteration time is the median over the iterations after
/// the warm-up; short runs are topped up with extra timed steps from the final iterate,
/// which do not change the reported fit.
pub fn bench_one(
    config: &BenchConfig,
    sweep: &dyn EdgeSweep,
    workers: usize,
) -> Result<BenchRecord, CliError> {
    let solver = |e: String| CliError::Solver(e);
    let t0 = Instant::now();
    let obs = synth_quadratic(config.n, config.sigma, config.seed);
    let time_synth_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let warm = match config.warm_start {
        WarmStart::Gp => Some(initial_consensus(&obs, &GpConfig::default()).map_err(|e| solver(e.to_string()))?),
        WarmStart::None => None,
    };
    let time_warmstart_s = t0.elapsed().as_secs_f64();

    let clock = WallClock::start();
    let result = fit_with(&obs, &config.class, &config.admm, warm.as_deref(), sweep, &clock);
    let time_total_s = clock.seconds();
    let fit: AdmmFit = match result {
        Ok(fit) => fit,
        Err(AdmmError::MaxIterationsExceeded { fit }) => *fit,
        Err(e) => return Err(solver(e.to_string())),
    };

    let mut samples: Vec<f64> = fit.trace.iter().skip(WARMUP_ITERS).map(|t| t.wall_time_s).collect();
    if samples.len() < MIN_TIMED_ITERS {
        let edges = build_edge_set(obs.n()).map_err(|e| solver(e.to_string()))?;
        let mut state = fit.state.clone();
        let skip = WARMUP_ITERS.saturating_sub(fit.trace.len());
        for k in 0..skip + MIN_TIMED_ITERS - samples.len() {
            let t0 = Instant::now();
            state = admm_step(&state, &edges, &obs, &config.class, &config.admm, sweep)
                .map_err(|e| solver(e.to_string()))?;
            if k >= skip {
                samples.push(t0.elapsed().as_secs_f64());
            }
        }
    }
    let time_per_iter_s = median(&mut samples);

    let t0 = Instant::now();
    let interp = interpolant::build(fit.model.triplets(), &config.class).map_err(|e| solver(e.to_string()))?;
    let mut failure = None;
    let e_metric = error_metric(
        |x| match evaluate_point(&interp, &[x]) {
            Ok((v, _)) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        |x| x * x,
        (-1.0, 1.0),
        config.n_s,
    );
    if let Some(e) = failure {
        return Err(solver(e.to_string()));
    }
    let time_eval_s = t0.elapsed().as_secs_f64();

    Ok(BenchRecord {
        n: config.n,
        method: method_tag(&config.admm),
        iters: fit.iterations(),
        residual: fit.final_residual(),
        time_total_s,
        time_per_iter_s,
        e_metric,
        seed: config.seed,
        eps: config.admm.eps,
        edges: config.n * (config.n - 1),
        workers,
        converged: fit.converged,
        time_synth_s,
        time_warmstart_s,
        time_eval_s,
    })
}

/// Runs every configuration in order.
pub fn bench_scaling(
    configs: &[BenchConfig],
    sweep: &dyn EdgeSweep,
    workers: usize,
    mut progress: impl FnMut(&BenchRecord),
) -> Result<Vec<BenchRecord>, CliError> {
    configs
        .iter()
        .map(|c| {
            let r = bench_one(c, sweep, workers)?;
            progress(&r);
            Ok(r)
        })
        .collect()
}

pub fn records_csv(records: &[BenchRecord]) -> String {
    let mut out = RECORD_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let row = [
            r.n.to_string(),
            r.method.clone(),
            r.iters.to_string(),
            fmt_f64(r.residual),
            fmt_f64(r.time_total_s),
            fmt_f64(r.time_per_iter_s),
            fmt_f64(r.e_metric),
            r.seed.to_string(),
            fmt_f64(r.eps),
            r.edges.to_string(),
            r.workers.to_string(),
            r.converged.to_string(),
            fmt_f64(r.time_synth_s),
            fmt_f64(r.time_warmstart_s),
            fmt_f64(r.time_eval_s),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_records(path: &Path, records: &[BenchRecord]) -> Result<(), CliError> {
    write_file(path, records_csv(records).as_bytes())
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    let header = reader.headers().map_err(|e| CliError::format(path, e))?;
    if header.iter().collect::<Vec<_>>() != RECORD_COLUMNS {
        return Err(CliError::format(path, "unexpected benchmark header"));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| CliError::format(path, e)))
        .collect()
}

/// One line of the aggregate table: all runs sharing a method and `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub n: usize,
    pub runs: usize,
    pub converged: usize,
    pub mean_iters: f64,
    pub mean_residual: f64,
    pub median_time_per_iter_s: f64,
    pub mean_time_total_s: f64,
    #[serde(rename = "mean_E_metric")]
    pub mean_e_metric: f64,
}

/// Groups by `(method, n)` in sorted order; means are taken in record order.
pub fn aggregate(records: &[BenchRecord]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.clone(), r.n)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, n), rs)| {
            let k = rs.len() as f64;
            let mean = |f: &dyn Fn(&BenchRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / k;
            let mut per_iter: Vec<f64> = rs.iter().map(|r| r.time_per_iter_s).collect();
            ReportRow {
                method,
                n,
                runs: rs.len(),
                converged: rs.iter().filter(|r| r.converged).count(),
                mean_iters: mean(&|r| r.iters as f64),
                mean_residual: mean(&|r| r.residual),
                median_time_per_iter_s: median(&mut per_iter),
                mean_time_total_s: mean(&|r| r.time_total_s),
                mean_e_metric: mean(&|r| r.e_metric),
            }
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "method,n,runs,converged,mean_iters,mean_residual,median_time_per_iter_s,mean_time_total_s,mean_E_metric\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.n,
            r.runs,
            r.converged,
            fmt_f64(r.mean_iters),
            fmt_f64(r.mean_residual),
            fmt_f64(r.median_time_per_iter_s),
            fmt_f64(r.mean_time_total_s),
            fmt_f64(r.mean_e_metric),
        ));
    }
    out
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
