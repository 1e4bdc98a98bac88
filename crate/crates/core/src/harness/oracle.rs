//! Reference solution of the full least-squares QCQP for tiny instances.
//!
//! Exterior quadratic penalty on every ordered-pair interpolability condition, with the
//! penalty doubled from 1 up to 1e12 and each smooth subproblem minimized by damped Newton.
//! Everything here is written out directly and shares no code with the ADMM path.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{FunctionClass, ObservationSet, Smoothness};

pub const ORACLE_MAX_POINTS: usize = 8;

const PENALTY_START: f64 = 1.0;
const PENALTY_MAX: f64 = 1e12;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("reference solver handles at most {ORACLE_MAX_POINTS} points, got {n}")]
    TooManyPoints { n: usize },
    #[error("reference solver did not converge: violation {violation:e}, stationarity {stationarity:e}")]
    OracleNotConverged { violation: f64, stationarity: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub f: Vec<f64>,
    /// `n * d` gradient entries, node after node.
    pub g: Vec<f64>,
    /// `sum_i (y_i - f_i)^2`.
    pub objective: f64,
    pub max_violation: f64,
    /// Sup-norm of the penalized gradient, i.e. the KKT stationarity residual with
    /// multipliers `penalty * max(0, -r_ij)`.
    pub stationarity: f64,
    pub penalty: f64,
}

struct Problem<'a> {
    n: usize,
    d: usize,
    x: &'a [f64],
    y: &'a [f64],
    mu: f64,
    inv_l: f64,
    c: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.n * (1 + self.d)
    }

    fn g_index(&self, i: usize, k: usize) -> usize {
        self.n + i * self.d + k
    }

    /// Residual of pair (i, j) and its gradient written into `grad` (dense, length dim).
    fn residual(&self, w: &[f64], i: usize, j: usize, grad: &mut [f64]) -> f64 {
        let d = self.d;
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut value = w[i] - w[j];
        grad[i] = 1.0;
        grad[j] = -1.0;
        let mut dx_sq = 0.0;
        let mut dg_sq = 0.0;
        let mut cross = 0.0;
        for k in 0..d {
            let dx = self.x[i * d + k] - self.x[j * d + k];
            let gi = w[self.g_index(i, k)];
            let gj = w[self.g_index(j, k)];
            value -= gj * dx;
            dx_sq += dx * dx;
            dg_sq += (gi - gj) * (gi - gj);
            cross += (gi - gj) * dx;
            // d/dg_i and d/dg_j of the quadratic part, scaled by -c below
            grad[self.g_index(i, k)] = -self.c * (2.0 * self.inv_l * (gi - gj) - 2.0 * self.mu * self.inv_l * dx);
            grad[self.g_index(j, k)] =
                -dx - self.c * (-2.0 * self.inv_l * (gi - gj) + 2.0 * self.mu * self.inv_l * dx);
        }
        value - self.c * (self.inv_l * dg_sq + self.mu * dx_sq - 2.0 * self.mu * self.inv_l * cross)
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (0..self.n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    fn penalized(&self, w: &[f64], p: f64) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        let fit: f64 = (0..self.n).map(|i| { let r = self.y[i] - w[i]; r * r }).sum();
        let pen: f64 = self
            .pairs()
            .map(|(i, j)| {
                let v = (-self.residual(w, i, j, &mut scratch)).max(0.0);
                v * v
            })
            .sum();
        fit + 0.5 * p * pen
    }

    /// Gradient and Hessian of the penalized objective; returns the max violation.
    fn derivatives(&self, w: &[f64], p: f64, grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let m = self.dim();
        grad.iter_mut().for_each(|v| *v = 0.0);
        hess.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            grad[i] = -2.0 * (self.y[i] - w[i]);
            hess[i * m + i] = 2.0;
        }
        let mut dr = vec![0.0; m];
        let mut violation: f64 = 0.0;
        for (i, j) in self.pairs() {
            let r = self.residual(w, i, j, &mut dr);
            if r >= 0.0 {
                continue;
            }
            let v = -r;
            violation = violation.max(v);
            for a in 0..m {
                grad[a] -= p * v * dr[a];
                if dr[a] != 0.0 {
                    for b in 0..m {
                        hess[a * m + b] += p * dr[a] * dr[b];
                    }
                }
            }
            // curvature of -r lives on the (g_i, g_j) block: (2c/L) [[I, -I], [-I, I]]
            let curv = p * v * 2.0 * self.c * self.inv_l;
            if curv != 0.0 {
                for k in 0..self.d {
                    let (a, b) = (self.g_index(i, k), self.g_index(j, k));
                    hess[a * m + a] += curv;
                    hess[b * m + b] += curv;
                    hess[a * m + b] -= curv;
                    hess[b * m + a] -= curv;
                }
            }
        }
        violation
    }
}

/// Gaussian elimination with partial pivoting; `a` is overwritten.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> bool {
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&r, &s| a[r * m + col].abs().total_cmp(&a[s * m + col].abs()))
            .unwrap();
        if a[pivot * m + col] == 0.0 {
            return false;
        }
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
            }
            b.swap(col, pivot);
        }
        for r in (col + 1)..m {
            let factor = a[r * m + col] / a[col * m + col];
            if factor != 0.0 {
                for k in col..m {
                    a[r * m + k] -= factor * a[col * m + k];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    for r in (0..m).rev() {
        let mut s = b[r];
        for k in (r + 1)..m {
            s -= a[r * m + k] * b[k];
        }
        b[r] = s / a[r * m + r];
    }
    true
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton on the penalized objective for a fixed penalty `p`.
fn minimize(problem: &Problem<'_>, w: &mut [f64], p: f64, tol: f64) -> (f64, f64) {
    let m = problem.dim();
    let mut grad = vec![0.0; m];
    let mut hess = vec![0.0; m * m];
    let mut violation = problem.derivatives(w, p, &mut grad, &mut hess);
    for _ in 0..MAX_NEWTON {
        if sup_norm(&grad) <= 0.1 * tol {
            break;
        }
        let scale = (0..m).map(|k| hess[k * m + k]).fold(1.0f64, f64::max);
        for k in 0..m {
            hess[k * m + k] += 1e-12 * scale;
        }
        let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
        if !solve_dense(&mut hess, &mut step, m) {
            break;
        }
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        if !(slope < 0.0) {
            break;
        }
        let base = problem.penalized(w, p);
        let mut t = 1.0;
        let mut trial = w.to_vec();
        let mut moved = false;
        for _ in 0..60 {
            for k in 0..m {
                trial[k] = w[k] + t * step[k];
            }
            if problem.penalized(&trial, p) <= base + 1e-4 * t * slope {
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // objective changes are below its rounding level; fall back to the gradient norm
            for k in 0..m {
                trial[k] = w[k] + step[k];
            }
            let mut trial_grad = vec![0.0; m];
            let mut trial_hess = vec![0.0; m * m];
            let trial_violation = problem.derivatives(&trial, p, &mut trial_grad, &mut trial_hess);
            if sup_norm(&trial_grad) >= sup_norm(&grad) {
                break;
            }
            w.copy_from_slice(&trial);
            grad = trial_grad;
            hess = trial_hess;
            violation = trial_violation;
            continue;
        }
        w.copy_from_slice(&trial);
        violation = problem.derivatives(w, p, &mut grad, &mut hess);
    }
    (violation, sup_norm(&grad))
}

/// Solves `min sum (y_i - f_i)^2` subject to every ordered-pair interpolability condition.
pub fn reference_fit_small(
    obs: &ObservationSet,
    class: &FunctionClass,
    tol: f64,
) -> Result<OracleSolution, OracleError> {
    let (n, d) = (obs.n(), obs.d());
    if n > ORACLE_MAX_POINTS {
        return Err(OracleError::TooManyPoints { n });
    }
    let mu = class.mu();
    let (inv_l, c) = match class.smoothness() {
        Smoothness::Infinite => (0.0, 0.5),
        Smoothness::Finite(l) => (1.0 / l, 1.0 / (2.0 * (1.0 - mu / l))),
    };
    let problem = Problem {
        n,
        d,
        x: obs.points(),
        y: obs.values(),
        mu,
        inv_l,
        c,
    };
    let mut w = vec![0.0; problem.dim()];
    w[..n].copy_from_slice(obs.values());

    let mut p = PENALTY_START;
    let (mut violation, mut stationarity) = (f64::INFINITY, f64::INFINITY);
    while p <= PENALTY_MAX {
        (violation, stationarity) = minimize(&problem, &mut w, p, tol);
        if violation <= tol && stationarity <= tol {
            let f = w[..n].to_vec();
            let objective = f.iter().zip(obs.values()).map(|(a, b)| (a - b) * (a - b)).sum();
            return Ok(OracleSolution {
                f,
                g: w[n..].to_vec(),
                objective,
                max_violation: violation,
                stationarity,
                penalty: p,
            });
        }
        p *= 2.0;
    }
    Err(OracleError::OracleNotConverged {
        violation,
        stationarity,
    })
}
