//! Edge-based consensus ADMM over the complete directed constraint graph.
//!
//! Every ordered pair `(i, j)` owns a private copy `xi_e = [eta_{e,i}; eta_{e,j}]` of the two
//! node variables `[f, g]` it touches. One iteration solves all edge QCQPs, averages the copies
//! into the consensus vector `z`, and moves the scaled duals `lambda` by the disagreement.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::norm_inf;
use crate::local_qcqp::{
    assemble_edge_problem, solve_edge, EdgeData, QcqpError, DEFAULT_MAX_NEWTON_ITERS,
    DEFAULT_NEWTON_TOL,
};
use crate::model::{CertifiedModel, FunctionClass, ObservationSet, Triplets};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmmError {
    #[error("need at least 2 nodes, got {n}")]
    TooFewPoints { n: usize },
    #[error("invalid ADMM configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("warm start has {found} entries, expected {expected}")]
    WarmStartMismatch { expected: usize, found: usize },
    #[error("edge ({}, {}) failed: {source}", edge.0, edge.1)]
    EdgeSolve {
        edge: (usize, usize),
        #[source]
        source: QcqpError,
    },
    #[error("ADMM stopped after {} iterations with residual {:e}", fit.trace.len(), fit.state.residual)]
    MaxIterationsExceeded { fit: Box<AdmmFit> },
}

/// All ordered pairs `(i, j)`, `i != j`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    n: usize,
    edges: Vec<(usize, usize)>,
}

pub fn build_edge_set(n: usize) -> Result<EdgeSet, AdmmError> {
    if n < 2 {
        return Err(AdmmError::TooFewPoints { n });
    }
    let edges = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    Ok(EdgeSet { n, edges })
}

impl EdgeSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Number of edge slots holding a copy of `node`.
    pub fn slot_count(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|(i, j)| *i == node || *j == node)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZUpdate {
    /// Divide by the `2 (n - 1)` slots each node occupies.
    ExactAverage,
    /// Divide by `2 n`, as literally written in the reference algorithm.
    PaperFaithful,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    /// Penalty; `None` resolves to `1 / n`.
    pub rho: Option<f64>,
    pub eps: f64,
    pub max_iters: usize,
    pub z_update: ZUpdate,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: None,
            eps: 0.01,
            max_iters: 10_000,
            z_update: ZUpdate::ExactAverage,
            newton_tol: DEFAULT_NEWTON_TOL,
            max_newton_iters: DEFAULT_MAX_NEWTON_ITERS,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<(), AdmmError> {
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(AdmmError::InvalidConfig("rho must be positive"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(AdmmError::InvalidConfig("eps must be positive"));
        }
        if self.max_iters == 0 {
            return Err(AdmmError::InvalidConfig("max_iters must be at least 1"));
        }
        if !(self.newton_tol > 0.0) || self.max_newton_iters == 0 {
            return Err(AdmmError::InvalidConfig("invalid inner solver tolerances"));
        }
        Ok(())
    }

    pub fn resolved_rho(&self, n: usize) -> f64 {
        self.rho.unwrap_or(1.0 / n as f64)
    }
}

/// Iterate of the method. Per-edge vectors have stride `2 (1 + d)`, per-node vectors `1 + d`;
/// each node block is `[f, g_1 .. g_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub xi: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iter: usize,
    pub residual: f64,
}

impl AdmmState {
    /// Zero duals; `z` from the warm start, or `(y_i, 0)` without one. Edge copies start at `z`.
    pub fn new(
        obs: &ObservationSet,
        edges: &EdgeSet,
        rho: f64,
        warm_start: Option<&[f64]>,
    ) -> Result<Self, AdmmError> {
        let (n, d) = (obs.n(), obs.d());
        let node = 1 + d;
        let z = match warm_start {
            Some(w) if w.len() != n * node => {
                return Err(AdmmError::WarmStartMismatch {
                    expected: n * node,
                    found: w.len(),
                })
            }
            Some(w) => w.to_vec(),
            None => {
                let mut z = vec![0.0; n * node];
                for (i, y) in obs.values().iter().enumerate() {
                    z[i * node] = *y;
                }
                z
            }
        };
        let mut xi = Vec::with_capacity(edges.len() * 2 * node);
        for &(i, j) in edges.edges() {
            xi.extend_from_slice(&z[i * node..(i + 1) * node]);
            xi.extend_from_slice(&z[j * node..(j + 1) * node]);
        }
        Ok(Self {
            n,
            d,
            rho,
            lambda: vec![0.0; xi.len()],
            xi,
            z,
            iter: 0,
            residual: f64::INFINITY,
        })
    }

    pub fn node_len(&self) -> usize {
        1 + self.d
    }

    pub fn z_node(&self, i: usize) -> &[f64] {
        let k = self.node_len();
        &self.z[i * k..(i + 1) * k]
    }

    /// `sum_i (y_i - z_i[f])^2`.
    pub fn objective(&self, obs: &ObservationSet) -> f64 {
        let k = self.node_len();
        obs.values()
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let r = y - self.z[i * k];
                r * r
            })
            .sum()
    }

    /// Consensus vector read back as triplets at the observation sites.
    pub fn triplets(&self, obs: &ObservationSet) -> Triplets {
        let k = self.node_len();
        let mut values = Vec::with_capacity(self.n);
        let mut gradients = Vec::with_capacity(self.n * self.d);
        for block in self.z.chunks_exact(k) {
            values.push(block[0]);
            gradients.extend_from_slice(&block[1..]);
        }
        Triplets::new(self.d, obs.points().to_vec(), gradients, values)
            .expect("consensus vector matches observation shape")
    }
}

/// Runs the independent edge solves of one iteration. `solve(e, out)` writes edge `e`'s
/// solution into its `stride`-sized slot. Implementations must report the failing edge with
/// the smallest index so runs stay reproducible.
pub trait EdgeSweep {
    fn sweep(
        &self,
        stride: usize,
        out: &mut [f64],
        solve: &(dyn Fn(usize, &mut [f64]) -> Result<(), QcqpError> + Sync),
    ) -> Result<(), (usize, QcqpError)>;
}

/// Solves edges one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl EdgeSweep for Sequential {
    fn sweep(
        &self,
        stride: usize,
        out: &mut [f64],
        solve: &(dyn Fn(usize, &mut [f64]) -> Result<(), QcqpError> + Sync),
    ) -> Result<(), (usize, QcqpError)> {
        for (e, slot) in out.chunks_exact_mut(stride).enumerate() {
            solve(e, slot).map_err(|err| (e, err))?;
        }
        Ok(())
    }
}

/// Source of elapsed time for the iteration trace.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports zero elapsed time; used where no timer is available.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

pub fn admm_step(
    state: &AdmmState,
    edges: &EdgeSet,
    obs: &ObservationSet,
    class: &FunctionClass,
    config: &AdmmConfig,
    sweep: &dyn EdgeSweep,
) -> Result<AdmmState, AdmmError> {
    let node = state.node_len();
    let stride = 2 * node;
    let n = state.n;
    let mut xi = vec![0.0; edges.len() * stride];

    let solve = |e: usize, out: &mut [f64]| -> Result<(), QcqpError> {
        let (i, j) = edges.edges()[e];
        let lambda = &state.lambda[e * stride..(e + 1) * stride];
        let data = EdgeData {
            edge: (i, j),
            x_i: obs.point(i),
            x_j: obs.point(j),
            y_i: obs.values()[i],
            y_j: obs.values()[j],
            z_i: state.z_node(i),
            z_j: state.z_node(j),
            lambda_i: &lambda[..node],
            lambda_j: &lambda[node..],
        };
        let prob = assemble_edge_problem(&data, state.rho, n, class)?;
        let sol = solve_edge(&prob, config.newton_tol, config.max_newton_iters)?;
        out.copy_from_slice(&sol.xi);
        Ok(())
    };
    sweep
        .sweep(stride, &mut xi, &solve)
        .map_err(|(e, source)| AdmmError::EdgeSolve {
            edge: edges.edges()[e],
            source,
        })?;

    Ok(consensus_update(state, edges, xi, config.z_update))
}

/// z- and lambda-updates given fresh edge solutions. The reduction runs in edge order.
pub fn consensus_update(
    state: &AdmmState,
    edges: &EdgeSet,
    xi: Vec<f64>,
    mode: ZUpdate,
) -> AdmmState {
    let node = state.node_len();
    let stride = 2 * node;
    let n = state.n;
    let mut z = vec![0.0; n * node];
    for (e, &(i, j)) in edges.edges().iter().enumerate() {
        let block = &xi[e * stride..(e + 1) * stride];
        for k in 0..node {
            z[i * node + k] += block[k];
            z[j * node + k] += block[node + k];
        }
    }
    let denom = match mode {
        ZUpdate::ExactAverage => 2.0 * (n as f64 - 1.0),
        ZUpdate::PaperFaithful => 2.0 * n as f64,
    };
    z.iter_mut().for_each(|v| *v /= denom);

    let mut lambda = state.lambda.clone();
    for (e, &(i, j)) in edges.edges().iter().enumerate() {
        for k in 0..node {
            let a = e * stride + k;
            let b = a + node;
            lambda[a] += xi[a] - z[i * node + k];
            lambda[b] += xi[b] - z[j * node + k];
        }
    }

    let mut next = AdmmState {
        n,
        d: state.d,
        rho: state.rho,
        xi,
        z,
        lambda,
        iter: state.iter + 1,
        residual: 0.0,
    };
    next.residual = stopping_residual_with(state, &next, edges);
    next
}

/// `max( max_{e, i~e} |eta_{e,i}+ - z_i+|_inf , |z+ - z|_inf )`.
pub fn stopping_residual(prev: &AdmmState, next: &AdmmState) -> f64 {
    let edges = build_edge_set(next.n).expect("state has at least two nodes");
    stopping_residual_with(prev, next, &edges)
}

fn stopping_residual_with(prev: &AdmmState, next: &AdmmState, edges: &EdgeSet) -> f64 {
    let node = next.node_len();
    let stride = 2 * node;
    let mut worst: f64 = 0.0;
    for (e, &(i, j)) in edges.edges().iter().enumerate() {
        let block = &next.xi[e * stride..(e + 1) * stride];
        for k in 0..node {
            worst = worst
                .max((block[k] - next.z[i * node + k]).abs())
                .max((block[node + k] - next.z[j * node + k]).abs());
        }
    }
    let change = prev
        .z
        .iter()
        .zip(&next.z)
        .map(|(a, b)| b - a)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    worst.max(change)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub residual: f64,
    pub objective: f64,
    pub wall_time_s: f64,
}

/// Result of [`fit`]. The model is never marked certified here.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmFit {
    pub model: CertifiedModel,
    pub state: AdmmState,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

impl AdmmFit {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.trace.last().map_or(f64::INFINITY, |t| t.residual)
    }
}

pub fn fit(
    obs: &ObservationSet,
    class: &FunctionClass,
    config: &AdmmConfig,
    warm_start: Option<&[f64]>,
) -> Result<AdmmFit, AdmmError> {
    fit_with(obs, class, config, warm_start, &Sequential, &NoClock)
}

/// Iterates until the stopping residual drops to `config.eps` or `config.max_iters` is hit.
/// On the latter, the error carries the iterate with the smallest residual seen.
pub fn fit_with(
    obs: &ObservationSet,
    class: &FunctionClass,
    config: &AdmmConfig,
    warm_start: Option<&[f64]>,
    sweep: &dyn EdgeSweep,
    clock: &dyn Clock,
) -> Result<AdmmFit, AdmmError> {
    config.validate()?;
    let edges = build_edge_set(obs.n())?;
    let mut state = AdmmState::new(obs, &edges, config.resolved_rho(obs.n()), warm_start)?;
    let mut trace = Vec::new();
    let mut best_z = state.z.clone();
    let mut best_residual = f64::INFINITY;
    while state.iter < config.max_iters {
        let start = clock.seconds();
        state = admm_step(&state, &edges, obs, class, config, sweep)?;
        trace.push(TraceEntry {
            iter: state.iter,
            residual: state.residual,
            objective: state.objective(obs),
            wall_time_s: clock.seconds() - start,
        });
        if state.residual < best_residual {
            best_residual = state.residual;
            best_z.copy_from_slice(&state.z);
        }
        if state.residual <= config.eps {
            let model = CertifiedModel::new(state.triplets(obs), *class);
            return Ok(AdmmFit {
                model,
                state,
                trace,
                converged: true,
            });
        }
    }
    let mut best = state.clone();
    best.z = best_z;
    let model = CertifiedModel::new(best.triplets(obs), *class);
    Err(AdmmError::MaxIterationsExceeded {
        fit: Box::new(AdmmFit {
            model,
            state,
            trace,
            converged: false,
        }),
    })
}

/// Largest per-node deviation of the mean scaled dual from zero.
pub fn dual_mean_deviation(state: &AdmmState, edges: &EdgeSet) -> f64 {
    let node = state.node_len();
    let stride = 2 * node;
    let mut sums = vec![0.0; state.n * node];
    for (e, &(i, j)) in edges.edges().iter().enumerate() {
        for k in 0..node {
            sums[i * node + k] += state.lambda[e * stride + k];
            sums[j * node + k] += state.lambda[e * stride + node + k];
        }
    }
    let slots = 2.0 * (state.n as f64 - 1.0);
    sums.iter_mut().for_each(|v| *v /= slots);
    norm_inf(&sums)
}
