//! Per-edge single-constraint QCQP, solved through its one-dimensional dual.
//!
//! Edge variables are ordered `xi = [f_i, g_i, f_j, g_j]`, so `xi` has `2 (1 + d)` entries.
//! The primal problem is
//!
//! ```text
//! minimize    xi' P0 xi + q0' xi + r0
//! subject to  xi' P1 xi + q1' xi + r1 <= 0
//! ```
//!
//! and its dual `phi(nu) = -q_nu' P_nu^{-1} q_nu / 4 + nu r1 + r0` with `P_nu = P0 + nu P1`,
//! `q_nu = q0 + nu q1` is maximized over `nu >= 0` by projected Newton.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{dot, Cholesky};
use crate::model::{FunctionClass, Smoothness};

pub const DEFAULT_NEWTON_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_NEWTON_ITERS: usize = 50;

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const FLAT_CURVATURE: f64 = -1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QcqpError {
    #[error("penalty must be positive, got {rho}")]
    InvalidRho { rho: f64 },
    #[error("P0 + nu P1 is not positive definite at nu = {nu}")]
    SingularSystem { nu: f64 },
    #[error("dual Newton stopped after {iterations} iterations (projected gradient {projected_gradient:e})")]
    MaxIterationsExceeded {
        iterations: usize,
        projected_gradient: f64,
        best: Box<EdgeSolution>,
    },
}

/// Standard-form data of one directed edge `(source, sink)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProblem {
    pub dim: usize,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    pub r0: f64,
    pub p1: Vec<f64>,
    pub q1: Vec<f64>,
    pub r1: f64,
    pub edge: (usize, usize),
}

/// Everything one edge subproblem reads from the ADMM state.
#[derive(Debug, Clone, Copy)]
pub struct EdgeData<'a> {
    pub edge: (usize, usize),
    pub x_i: &'a [f64],
    pub x_j: &'a [f64],
    pub y_i: f64,
    pub y_j: f64,
    pub z_i: &'a [f64],
    pub z_j: &'a [f64],
    pub lambda_i: &'a [f64],
    pub lambda_j: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSolution {
    pub xi: Vec<f64>,
    pub nu: f64,
    pub iterations: usize,
}

/// Builds the standard form of
/// `(1/2n) sum_k (y_k - f_k)^2 + (rho/2) sum_k |eta_k - z_k + lambda_k|^2`
/// subject to the interpolability condition of `i -> j`, rewritten as `<= 0`.
pub fn assemble_edge_problem(
    data: &EdgeData<'_>,
    rho: f64,
    n: usize,
    class: &FunctionClass,
) -> Result<EdgeProblem, QcqpError> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(QcqpError::InvalidRho { rho });
    }
    let d = data.x_i.len();
    let m = 2 * (1 + d);
    let (fi, fj) = (0, 1 + d);
    let inv_n = 1.0 / n as f64;

    let mut p0 = vec![0.0; m * m];
    let mut q0 = vec![0.0; m];
    let mut r0 = 0.5 * inv_n * (data.y_i * data.y_i + data.y_j * data.y_j);
    for k in 0..m {
        p0[k * m + k] = 0.5 * rho;
    }
    p0[fi * m + fi] += 0.5 * inv_n;
    p0[fj * m + fj] += 0.5 * inv_n;
    q0[fi] -= inv_n * data.y_i;
    q0[fj] -= inv_n * data.y_j;
    for (offset, z, lambda) in [(fi, data.z_i, data.lambda_i), (fj, data.z_j, data.lambda_j)] {
        for k in 0..=d {
            let target = z[k] - lambda[k];
            q0[offset + k] -= rho * target;
            r0 += 0.5 * rho * target * target;
        }
    }

    let mu = class.mu();
    let mut p1 = vec![0.0; m * m];
    let mut q1 = vec![0.0; m];
    q1[fi] = -1.0;
    q1[fj] = 1.0;
    let delta: Vec<f64> = data.x_i.iter().zip(data.x_j).map(|(a, b)| a - b).collect();
    let delta_sq = dot(&delta, &delta);
    let r1 = match class.smoothness() {
        Smoothness::Infinite => {
            for k in 0..d {
                q1[fj + 1 + k] = delta[k];
            }
            0.5 * mu * delta_sq
        }
        Smoothness::Finite(l) => {
            let c = 1.0 / (2.0 * (1.0 - mu / l));
            let curvature = c / l;
            let cross = 2.0 * c * mu / l;
            for k in 0..d {
                let (gi, gj) = (fi + 1 + k, fj + 1 + k);
                p1[gi * m + gi] = curvature;
                p1[gj * m + gj] = curvature;
                p1[gi * m + gj] = -curvature;
                p1[gj * m + gi] = -curvature;
                q1[gi] = -cross * delta[k];
                q1[gj] = (1.0 + cross) * delta[k];
            }
            c * mu * delta_sq
        }
    };

    Ok(EdgeProblem {
        dim: m,
        p0,
        q0,
        r0,
        p1,
        q1,
        r1,
        edge: data.edge,
    })
}

impl EdgeProblem {
    pub fn objective(&self, xi: &[f64]) -> f64 {
        quadratic_form(&self.p0, xi) + dot(&self.q0, xi) + self.r0
    }

    /// Constraint value; feasible when `<= 0`.
    pub fn constraint(&self, xi: &[f64]) -> f64 {
        quadratic_form(&self.p1, xi) + dot(&self.q1, xi) + self.r1
    }

    fn shifted(&self, nu: f64) -> (Vec<f64>, Vec<f64>) {
        let p: Vec<f64> = self.p0.iter().zip(&self.p1).map(|(a, b)| a + nu * b).collect();
        let q: Vec<f64> = self.q0.iter().zip(&self.q1).map(|(a, b)| a + nu * b).collect();
        (p, q)
    }

    fn factor(&self, nu: f64) -> Result<(Cholesky, Vec<f64>), QcqpError> {
        let (p, q) = self.shifted(nu);
        let chol = Cholesky::new(&p, self.dim).ok_or(QcqpError::SingularSystem { nu })?;
        Ok((chol, q))
    }

    /// Primal minimizer of the Lagrangian, `-P_nu^{-1} q_nu / 2`.
    pub fn primal(&self, nu: f64) -> Result<Vec<f64>, QcqpError> {
        let (chol, q) = self.factor(nu)?;
        let mut xi = chol.solve(&q);
        xi.iter_mut().for_each(|v| *v *= -0.5);
        Ok(xi)
    }

    fn evaluate(&self, nu: f64, derivatives: bool) -> Result<DualPoint, QcqpError> {
        let (chol, q) = self.factor(nu)?;
        let w = chol.solve(&q);
        let quad = -0.25 * dot(&q, &w);
        let value = quad + nu * self.r1 + self.r0;
        let value_scale = quad.abs() + (nu * self.r1).abs() + self.r0.abs();
        if !derivatives {
            return Ok(DualPoint {
                value,
                value_scale,
                grad: 0.0,
                grad_scale: 0.0,
                hess: 0.0,
            });
        }
        let m = self.dim;
        let mut s = vec![0.0; m];
        crate::linalg::mat_vec(&self.p1, m, &w, &mut s);
        let u = chol.solve(&self.q1);
        let t = chol.solve(&s);
        let (lin, curv) = (-0.5 * dot(&self.q1, &w), 0.25 * dot(&w, &s));
        let grad = lin + curv + self.r1;
        let hess = -0.5 * dot(&self.q1, &u) + dot(&self.q1, &t) - 0.5 * dot(&s, &t);
        Ok(DualPoint {
            value,
            value_scale,
            grad,
            grad_scale: lin.abs() + curv.abs() + self.r1.abs(),
            hess,
        })
    }
}

fn quadratic_form(p: &[f64], x: &[f64]) -> f64 {
    let m = x.len();
    p.chunks_exact(m)
        .zip(x)
        .map(|(row, xi)| xi * dot(row, x))
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct DualPoint {
    value: f64,
    /// Magnitude of the terms summed into `value`; bounds its rounding error.
    value_scale: f64,
    grad: f64,
    grad_scale: f64,
    hess: f64,
}

impl DualPoint {
    /// Stationary to `tol`, or to the rounding floor of the gradient when its terms are so
    /// large that `tol` is out of reach.
    fn converged(&self, nu: f64, tol: f64) -> bool {
        projected_gradient(nu, self.grad) <= tol.max(64.0 * f64::EPSILON * self.grad_scale)
    }
}

pub fn dual_value(nu: f64, prob: &EdgeProblem) -> Result<f64, QcqpError> {
    Ok(prob.evaluate(nu, false)?.value)
}

/// First and second derivative of the dual function at `nu`.
pub fn dual_derivatives(nu: f64, prob: &EdgeProblem) -> Result<(f64, f64), QcqpError> {
    let p = prob.evaluate(nu, true)?;
    Ok((p.grad, p.hess))
}

fn projected_gradient(nu: f64, grad: f64) -> f64 {
    if nu > 0.0 {
        grad.abs()
    } else {
        grad.max(0.0)
    }
}

pub fn solve_edge(
    prob: &EdgeProblem,
    newton_tol: f64,
    max_newton_iters: usize,
) -> Result<EdgeSolution, QcqpError> {
    solve_edge_from(prob, 0.0, newton_tol, max_newton_iters)
}

/// Projected Newton ascent on the dual starting from `nu0 >= 0`.
pub fn solve_edge_from(
    prob: &EdgeProblem,
    nu0: f64,
    newton_tol: f64,
    max_newton_iters: usize,
) -> Result<EdgeSolution, QcqpError> {
    let mut nu = nu0.max(0.0);
    let mut point = prob.evaluate(nu, true)?;
    let mut iterations = 0;
    while !point.converged(nu, newton_tol) {
        if iterations == max_newton_iters {
            return Err(QcqpError::MaxIterationsExceeded {
                iterations,
                projected_gradient: projected_gradient(nu, point.grad),
                best: Box::new(EdgeSolution {
                    xi: prob.primal(nu)?,
                    nu,
                    iterations,
                }),
            });
        }
        iterations += 1;
        let step = if point.hess < FLAT_CURVATURE {
            -point.grad / point.hess
        } else {
            point.grad
        };
        // Near the optimum the dual is flat below the rounding level of phi, so Armijo
        // cannot discriminate; the gradient still can. Checked on the full Newton step first
        // so that a spurious Armijo pass on a tiny backtracked step does not stall progress.
        if point.hess < FLAT_CURVATURE {
            let trial = (nu - point.grad / point.hess).max(0.0);
            let at_trial = prob.evaluate(trial, true)?;
            let flat = (at_trial.value - point.value).abs()
                <= 16.0 * f64::EPSILON * point.value_scale.max(at_trial.value_scale);
            if trial != nu
                && flat
                && projected_gradient(trial, at_trial.grad) < projected_gradient(nu, point.grad)
            {
                nu = trial;
                point = at_trial;
                continue;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = (nu + t * step).max(0.0);
            if trial == nu {
                break;
            }
            let value = prob.evaluate(trial, false)?.value;
            if value >= point.value + ARMIJO * point.grad * (trial - nu) {
                accepted = Some(trial);
                break;
            }
            t *= BACKTRACK;
        }
        match accepted {
            Some(next) => {
                nu = next;
                point = prob.evaluate(nu, true)?;
            }
            None => {
                return Err(QcqpError::MaxIterationsExceeded {
                    iterations,
                    projected_gradient: projected_gradient(nu, point.grad),
                    best: Box::new(EdgeSolution {
                        xi: prob.primal(nu)?,
                        nu,
                        iterations,
                    }),
                })
            }
        }
    }
    Ok(EdgeSolution {
        xi: prob.primal(nu)?,
        nu,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem() -> EdgeProblem {
        EdgeProblem {
            dim: 2,
            p0: vec![1.0, 0.0, 0.0, 1.0],
            q0: vec![0.0; 2],
            r0: 1.0,
            p1: vec![0.0; 4],
            q1: vec![0.0; 2],
            r1: -1.0,
            edge: (0, 1),
        }
    }

    fn sample_data<'a>(x: &'a [[f64; 1]; 2], zl: &'a [[f64; 2]; 4]) -> EdgeData<'a> {
        EdgeData {
            edge: (0, 1),
            x_i: &x[0],
            x_j: &x[1],
            y_i: 0.3,
            y_j: 1.1,
            z_i: &zl[0],
            z_j: &zl[1],
            lambda_i: &zl[2],
            lambda_j: &zl[3],
        }
    }

    #[test]
    fn plug_in_dual_value() {
        assert_eq!(dual_value(2.0, &identity_problem()), Ok(-1.0));
        assert_eq!(dual_derivatives(2.0, &identity_problem()), Ok((-1.0, 0.0)));
    }

    #[test]
    fn zero_multiplier_gives_unconstrained_minimum() {
        let x = [[0.0], [1.0]];
        let zl = [[0.2, 0.1], [0.9, 1.5], [0.01, -0.02], [0.0, 0.03]];
        let prob = assemble_edge_problem(&sample_data(&x, &zl), 0.5, 4, &FunctionClass::convex())
            .unwrap();
        let xi = prob.primal(0.0).unwrap();
        let phi0 = dual_value(0.0, &prob).unwrap();
        assert!((prob.objective(&xi) - phi0).abs() < 1e-12);
    }

    #[test]
    fn nonsmooth_constraint_is_affine() {
        let x = [[0.0], [1.0]];
        let zl = [[0.0; 2]; 4];
        let prob = assemble_edge_problem(&sample_data(&x, &zl), 0.5, 4, &FunctionClass::convex())
            .unwrap();
        assert!(prob.p1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_nonpositive_rho() {
        let x = [[0.0], [1.0]];
        let zl = [[0.0; 2]; 4];
        let r = assemble_edge_problem(&sample_data(&x, &zl), 0.0, 4, &FunctionClass::convex());
        assert_eq!(r, Err(QcqpError::InvalidRho { rho: 0.0 }));
    }

    #[test]
    fn inactive_constraint_returns_zero_multiplier() {
        // consensus on exact samples of x^2 already satisfies the convexity condition
        let x = [[0.0], [1.0]];
        let zl = [[0.0, 0.0], [1.0, 2.0], [0.0; 2], [0.0; 2]];
        let mut data = sample_data(&x, &zl);
        data.y_i = 0.0;
        data.y_j = 1.0;
        let prob = assemble_edge_problem(&data, 0.5, 2, &FunctionClass::convex()).unwrap();
        let sol = solve_edge(&prob, 1e-9, 50).unwrap();
        assert_eq!(sol.nu, 0.0);
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.xi, prob.primal(0.0).unwrap());
    }
}
