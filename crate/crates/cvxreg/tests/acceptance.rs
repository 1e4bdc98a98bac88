//! Acceptance criteria, one line each. Run with `cargo test -p cvxreg --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cvxreg::bench::{bench_scaling, log_log_slope, BenchConfig, BenchRecord, WarmStart, TIMING_COLUMNS};
use cvxreg::parallel::{resolve_workers, PoolSweep};
use cvxreg_core::admm::{build_edge_set, stopping_residual, AdmmState};
use cvxreg_core::harness::{reference_fit_small, synth_quadratic};
use cvxreg_core::interpolant::{build, Interpolant};
use cvxreg_core::local_qcqp::{
    assemble_edge_problem, dual_derivatives, dual_value, solve_edge, EdgeData, DEFAULT_MAX_NEWTON_ITERS,
    DEFAULT_NEWTON_TOL,
};
use cvxreg_core::{
    certify, constraint_residual, fit, AdmmConfig, CertifiedModel, FunctionClass, Smoothness, Triplets,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vector(r: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| r.random_range(-scale..scale)).collect()
}

fn smooth() -> FunctionClass {
    FunctionClass::new(1.0, Smoothness::Finite(5.0)).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// ADMM at eps = 1e-8 against the reference solver on 20 seeded instances, n in 3..=6.
fn oracle_equivalence(class: FunctionClass) -> Outcome {
    let config = AdmmConfig {
        eps: 1e-8,
        max_iters: 500_000,
        ..AdmmConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut binding = 0;
    for seed in 0..20u64 {
        let n = 3 + seed as usize % 4;
        let obs = synth_quadratic(n, 0.1, seed);
        let oracle = reference_fit_small(&obs, &class, 1e-7).map_err(|e| format!("seed {seed}: {e}"))?;
        let out = fit(&obs, &class, &config, None).map_err(|e| format!("seed {seed}: {e}"))?;
        let gap = (out.state.objective(&obs) - oracle.objective).abs() / oracle.objective.max(1.0);
        worst = worst.max(gap);
        binding += usize::from(oracle.objective > 1e-10);
    }
    check(
        worst <= 1e-3,
        format!("worst relative gap {worst:.2e} (tol 1e-3); {binding}/20 instances with a nonzero optimum"),
    )
}

fn feasibility_certification() -> Outcome {
    let config = AdmmConfig {
        eps: 1e-6,
        max_iters: 500_000,
        ..AdmmConfig::default()
    };
    let mut worst = f64::INFINITY;
    let mut iters = Vec::new();
    for seed in 0..3 {
        let obs = synth_quadratic(20, 0.1, seed);
        let mut out = fit(&obs, &smooth(), &config, None).map_err(|e| format!("seed {seed}: {e}"))?;
        let cert = certify(&mut out.model, 1e-4);
        worst = worst.min(cert.worst.residual);
        iters.push(out.iterations());
    }
    check(
        worst >= -1e-4,
        format!("3 fits, 380 pairs each; worst residual {worst:.2e} (tol -1e-4); iterations {iters:?}"),
    )
}

/// Random edge subproblems with O(1) data, as met inside ADMM.
fn dual_solver() -> Outcome {
    let mut r = rng(4);
    let mut worst = [0.0f64; 4];
    let mut active = 0;
    for k in 0..1000 {
        let d = [1, 2, 5][k % 3];
        let mut x_i = vector(&mut r, d, 1.0);
        let x_j = vector(&mut r, d, 1.0);
        x_i[0] = x_j[0] + if r.random_bool(0.5) { 0.2 } else { -0.2 } + 0.5 * x_i[0];
        let mu = if r.random_bool(0.3) { 0.0 } else { r.random_range(0.0..2.0) };
        let class = if r.random_bool(0.2) {
            FunctionClass::new(mu, Smoothness::Infinite).unwrap()
        } else {
            FunctionClass::new(mu, Smoothness::Finite(mu + r.random_range(0.5..10.0))).unwrap()
        };
        let (z_i, z_j) = (vector(&mut r, 1 + d, 1.0), vector(&mut r, 1 + d, 1.0));
        let (l_i, l_j) = (vector(&mut r, 1 + d, 0.3), vector(&mut r, 1 + d, 0.3));
        let data = EdgeData {
            edge: (0, 1),
            x_i: &x_i,
            x_j: &x_j,
            y_i: r.random_range(-1.0..1.0),
            y_j: r.random_range(-1.0..1.0),
            z_i: &z_i,
            z_j: &z_j,
            lambda_i: &l_i,
            lambda_j: &l_j,
        };
        let n = r.random_range(2..40);
        let prob = assemble_edge_problem(&data, r.random_range(0.05..1.0), n, &class).map_err(|e| e.to_string())?;

        let nu = r.random_range(0.0..5.0);
        let (g, h) = dual_derivatives(nu, &prob).map_err(|e| e.to_string())?;
        let step = 1e-5;
        let fd_g = (dual_value(nu + step, &prob).unwrap() - dual_value(nu - step, &prob).unwrap()) / (2.0 * step);
        let step = 1e-4;
        let fd_h = (dual_derivatives(nu + step, &prob).unwrap().0 - dual_derivatives(nu - step, &prob).unwrap().0)
            / (2.0 * step);
        worst[0] = worst[0].max((fd_g - g).abs() / g.abs().max(1.0));
        worst[1] = worst[1].max((fd_h - h).abs() / h.abs().max(1.0));

        let sol = solve_edge(&prob, DEFAULT_NEWTON_TOL, DEFAULT_MAX_NEWTON_ITERS).map_err(|e| format!("instance {k}: {e}"))?;
        let constraint = prob.constraint(&sol.xi);
        worst[2] = worst[2].max((prob.objective(&sol.xi) - dual_value(sol.nu, &prob).unwrap()).abs());
        worst[3] = worst[3].max((sol.nu * constraint).abs());
        active += usize::from(sol.nu > 0.0);
    }
    check(
        worst[0] <= 1e-5 && worst[1] <= 1e-4 && worst[2] <= 1e-8 && worst[3] <= 1e-8,
        format!(
            "1000 problems ({active} active): fd gradient {:.1e}, fd Hessian {:.1e}, duality gap {:.1e}, slackness {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn quadratic_triplets(d: usize, sites: &[f64], c0: f64, w: &[f64]) -> Triplets {
    let mut gradients = Vec::new();
    let mut values = Vec::new();
    for x in sites.chunks_exact(d) {
        gradients.extend(x.iter().zip(w).map(|(xk, wk)| c0 * xk + wk));
        values.push(0.5 * c0 * x.iter().map(|v| v * v).sum::<f64>() + x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
    }
    Triplets::new(d, sites.to_vec(), gradients, values).unwrap()
}

/// Samples of `mu/2 x^2 + a log(1 + exp(b x + s))`, a member of F(mu, mu + a b^2 / 4).
fn softplus_triplets(xs: &[f64], mu: f64, a: f64, b: f64, s: f64) -> Triplets {
    let f = |x: f64| 0.5 * mu * x * x + a * (1.0 + (b * x + s).exp()).ln();
    let g = |x: f64| mu * x + a * b / (1.0 + (-(b * x + s)).exp());
    Triplets::new(1, xs.to_vec(), xs.iter().map(|x| g(*x)).collect(), xs.iter().map(|x| f(*x)).collect()).unwrap()
}

/// Lower convex envelope of sorted samples by the monotone chain.
fn lower_envelope(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        while hull.len() >= 2 {
            let (x1, y1) = hull[hull.len() - 2];
            let (x2, y2) = hull[hull.len() - 1];
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((x, y));
    }
    hull
}

fn interpolant_fidelity() -> Outcome {
    let mut r = rng(5);
    // exact certified triplets are reproduced
    let mut site_err: f64 = 0.0;
    for d in [1, 2, 3] {
        let class = FunctionClass::new(0.5, Smoothness::Finite(4.0)).unwrap();
        let t = quadratic_triplets(d, &vector(&mut r, 12 * d, 1.0), 2.5, &vector(&mut r, d, 1.0));
        let mut model = CertifiedModel::new(t.clone(), class);
        if !certify(&mut model, 0.0).certified {
            return Err(format!("d = {d}: exact triplets failed certification"));
        }
        let f = build(&t, &class).map_err(|e| e.to_string())?;
        for i in 0..t.n() {
            site_err = site_err.max((f.evaluate(t.site(i)).unwrap() - t.value(i)).abs());
            let g = f.gradient(t.site(i)).unwrap();
            for (a, b) in g.iter().zip(t.gradient(i)) {
                site_err = site_err.max((a - b).abs());
            }
        }
    }

    // d = 1: the hull equals mu/2 x^2 plus the convex envelope of the lowest shifted upper bound
    let mu = 0.7;
    let (a, b, s) = (1.2, 2.0, 0.3);
    let l = mu + a * b * b / 4.0 + 0.5;
    let class = FunctionClass::new(mu, Smoothness::Finite(l)).unwrap();
    let t = softplus_triplets(&[-0.8, -0.1, 0.35, 0.9], mu, a, b, s);
    let f = build(&t, &class).map_err(|e| e.to_string())?;
    let points = 200_000;
    let xs: Vec<f64> = (0..points).map(|k| -2.0 + 4.0 * k as f64 / (points - 1) as f64).collect();
    let mins: Vec<f64> = xs
        .iter()
        .map(|&x| {
            (0..t.n())
                .map(|i| {
                    let (xi, gi, fi) = (t.site(i)[0], t.gradient(i)[0], t.value(i));
                    fi - 0.5 * mu * xi * xi + (gi - mu * xi) * (x - xi) + 0.5 * (l - mu) * (x - xi) * (x - xi)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let env = lower_envelope(&xs, &mins);
    let mut env_err: f64 = 0.0;
    for _ in 0..50 {
        let x = r.random_range(-1.0..1.0);
        let k = env.partition_point(|p| p.0 < x).clamp(1, env.len() - 1);
        let ((x0, y0), (x1, y1)) = (env[k - 1], env[k]);
        let expected = y0 + (y1 - y0) * (x - x0) / (x1 - x0) + 0.5 * mu * x * x;
        env_err = env_err.max((f.evaluate(&[x]).unwrap() - expected).abs());
    }

    // sampled pairs of the interpolant satisfy the class inequality
    let membership = |f: &Interpolant, c: &FunctionClass, d: usize, r: &mut ChaCha8Rng| {
        let mut worst = f64::INFINITY;
        for _ in 0..200 {
            let u = vector(r, d, 1.0);
            let v = vector(r, d, 1.0);
            let (fu, gu) = (f.evaluate(&u).unwrap(), f.gradient(&u).unwrap());
            let (fv, gv) = (f.evaluate(&v).unwrap(), f.gradient(&v).unwrap());
            worst = worst
                .min(constraint_residual(&u, fu, &gu, &v, fv, &gv, c).unwrap())
                .min(constraint_residual(&v, fv, &gv, &u, fu, &gu, c).unwrap());
        }
        worst
    };
    let mut member = membership(&f, &class, 1, &mut r);
    let c2 = smooth();
    let t2 = quadratic_triplets(2, &vector(&mut r, 20, 1.0), 2.0, &[0.3, -0.1]);
    member = member.min(membership(&build(&t2, &c2).unwrap(), &c2, 2, &mut r));

    check(
        site_err <= 1e-4 && env_err <= 1e-5 && member >= -1e-4,
        format!("site error {site_err:.1e} (tol 1e-4), envelope error {env_err:.1e} (tol 1e-5), worst sampled residual {member:.1e} (tol -1e-4)"),
    )
}

/// One benchmark sweep serves both the error trend and the timing exponent.
fn desk_scale_bench() -> Result<Vec<BenchRecord>, String> {
    let workers = resolve_workers(None)?;
    let sweep = PoolSweep::new(workers)?;
    let mut configs = Vec::new();
    for n in [25, 50, 100, 200] {
        for seed in 0..10 {
            configs.push(BenchConfig {
                n,
                seed,
                sigma: 0.1,
                class: smooth(),
                admm: AdmmConfig::default(),
                warm_start: WarmStart::Gp,
                n_s: 1000,
            });
        }
    }
    bench_scaling(&configs, &sweep, workers, |_| {}).map_err(|e| e.to_string())
}

fn per_n(records: &[BenchRecord], n: usize) -> impl Iterator<Item = &BenchRecord> {
    records.iter().filter(move |r| r.n == n)
}

fn error_trend(records: &[BenchRecord]) -> Outcome {
    let ns = [25usize, 50, 100, 200];
    let means: Vec<f64> = ns
        .iter()
        .map(|&n| per_n(records, n).map(|r| r.e_metric).sum::<f64>() / per_n(records, n).count() as f64)
        .collect();
    let monotone = means.windows(2).all(|w| w[1] < w[0]);
    let slope = log_log_slope(&ns.iter().zip(&means).map(|(n, e)| (*n as f64, *e)).collect::<Vec<_>>());
    let unconverged = records.iter().filter(|r| !r.converged).count();
    check(
        monotone && (-1.0..=-0.1).contains(&slope),
        format!(
            "mean E {:?} for n = {ns:?}; decreasing {monotone}; slope {slope:.3} (band [-1.0, -0.1]); {unconverged} runs hit the iteration cap",
            means.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn timing_exponent(records: &[BenchRecord]) -> Outcome {
    let ns = [50usize, 100, 200];
    let medians: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let mut t: Vec<f64> = per_n(records, n).map(|r| r.time_per_iter_s).collect();
            t.sort_by(f64::total_cmp);
            0.5 * (t[t.len() / 2 - 1] + t[t.len() / 2])
        })
        .collect();
    let slope = log_log_slope(&ns.iter().zip(&medians).map(|(n, t)| (*n as f64, *t)).collect::<Vec<_>>());
    check(
        (1.6..=2.6).contains(&slope),
        format!(
            "median time per iteration {:?} s for n = {ns:?}; exponent {slope:.3} (band [1.6, 2.6])",
            medians.iter().map(|t| format!("{t:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn stopping_criterion() -> Outcome {
    let mut r = rng(8);
    let mut cases = 0;
    for (n, d) in [(2, 1), (3, 2), (5, 1), (4, 3), (7, 2)] {
        let edges = build_edge_set(n).unwrap();
        let node = 1 + d;
        let slots = edges.len() * 2 * node;
        for _ in 0..20 {
            let prev = AdmmState {
                n,
                d,
                rho: 1.0,
                xi: vector(&mut r, slots, 1.0),
                z: vector(&mut r, n * node, 1.0),
                lambda: vec![0.0; slots],
                iter: 0,
                residual: f64::INFINITY,
            };
            let next = AdmmState {
                xi: vector(&mut r, slots, 1.0),
                z: vector(&mut r, n * node, 1.0),
                iter: 1,
                ..prev.clone()
            };
            let mut brute: f64 = 0.0;
            for (e, &(i, j)) in edges.edges().iter().enumerate() {
                for (slot, owner) in [(0, i), (1, j)] {
                    let start = e * 2 * node + slot * node;
                    for k in 0..node {
                        brute = brute.max((next.xi[start + k] - next.z[owner * node + k]).abs());
                    }
                }
            }
            for (a, b) in next.z.iter().zip(&prev.z) {
                brute = brute.max((a - b).abs());
            }
            if stopping_residual(&prev, &next) != brute {
                return Err(format!("n = {n}, d = {d}: {} vs brute force {brute}", stopping_residual(&prev, &next)));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} random states, exact equality with the brute-force maximum"))
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cvxreg"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

/// Bench CSV with the wall-clock columns blanked.
fn mask_timings(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let timing: Vec<bool> = header.iter().map(|h| TIMING_COLUMNS.contains(h)).collect();
    let mut out = header.join(",");
    for line in lines {
        let fields: Vec<&str> = line
            .split(',')
            .zip(&timing)
            .map(|(f, t)| if *t { "-" } else { f })
            .collect();
        out.push('\n');
        out.push_str(&fields.join(","));
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    cli(d, &["synth", "--n", "30", "--sigma", "0.1", "--seed", "9", "--out", "data.csv"])?;
    for run in ["a", "b"] {
        let model = format!("{run}.json");
        let bench = format!("{run}.csv");
        cli(d, &["fit", "--in", "data.csv", "--workers", "2", "--out", &model])?;
        cli(d, &["bench", "--n-list", "10", "20", "--seeds", "2", "--workers", "2", "--out", &bench])?;
    }
    let read = |name: &str| fs::read_to_string(d.join(name)).map_err(|e| e.to_string());
    let model_same = read("a.json")? == read("b.json")?;
    let bench_same = mask_timings(&read("a.csv")?) == mask_timings(&read("b.csv")?);
    let records = |name: &str| -> Result<Vec<BenchRecord>, String> {
        let mut rs: Vec<BenchRecord> = serde_json::from_str(&read(name)?).map_err(|e| e.to_string())?;
        for r in &mut rs {
            r.time_total_s = 0.0;
            r.time_per_iter_s = 0.0;
            r.time_synth_s = 0.0;
            r.time_warmstart_s = 0.0;
            r.time_eval_s = 0.0;
        }
        Ok(rs)
    };
    let bench_same = bench_same && records("a.records.json")? == records("b.records.json")?;
    let bench_rows = read("a.csv")?.lines().count() - 1;
    check(
        model_same && bench_same,
        format!(
            "model files identical: {model_same}; bench CSV and JSON identical outside the {} wall-clock fields: {bench_same} ({bench_rows} records)",
            TIMING_COLUMNS.len()
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id} [{tag}] {name}: {detail} ({secs:.1} s)");
    };

    report(1, "oracle equivalence, smooth strongly convex class", &mut || oracle_equivalence(smooth()));
    report(2, "oracle equivalence, convex class (mu = 0, L = inf)", &mut || {
        oracle_equivalence(FunctionClass::convex())
    });
    report(3, "feasibility certification at n = 20", &mut feasibility_certification);
    report(4, "dual solver correctness", &mut dual_solver);
    report(5, "interpolant fidelity", &mut interpolant_fidelity);
    let start = Instant::now();
    let records = desk_scale_bench();
    println!("(desk-scale benchmark: 40 fits in {:.1} s)", start.elapsed().as_secs_f64());
    report(6, "error decreases with n", &mut || error_trend(records.as_ref().map_err(Clone::clone)?));
    report(7, "per-iteration time exponent", &mut || timing_exponent(records.as_ref().map_err(Clone::clone)?));
    report(8, "stopping residual equals brute force", &mut stopping_criterion);
    report(9, "deterministic CLI outputs", &mut determinism);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
