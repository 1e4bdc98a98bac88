//! Everywhere-defined functions built from fitted triplets.
//!
//! For finite `L` the triplets are moved to conjugate coordinates, where each one defines a
//! quadratic `h_i(s) = |s|^2 / (2 (L - mu)) + a_i.s + b_i`. The interpolant is
//! `(max_i h_i)^*(x) + mu/2 |x|^2`. Maximizing the conjugate over `s` in closed form leaves
//!
//! ```text
//! phi(x) = mu/2 |x|^2 + min_{lambda in simplex} (L - mu)/2 |x - A lambda|^2 - b.lambda
//! ```
//!
//! a small simplex-constrained QP per evaluation point.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{dot, norm_sq};
use crate::model::{FunctionClass, Smoothness, Triplets};

pub const SIMPLEX_TOL: f64 = 1e-9;
pub const SIMPLEX_MAX_ITERS: usize = 10_000;
const POWER_ITERS: usize = 100;
/// Relative pivot threshold below which the reduced Gram matrix counts as singular.
const RANK_TOL: f64 = 1e-13;

/// Algorithm for the per-point simplex QP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SimplexMethod {
    /// Primal active set; exact up to rounding, terminates after finitely many support changes.
    #[default]
    ActiveSet,
    /// Accelerated projected gradient with adaptive restart. Slow here because `AᵀA` has rank
    /// at most `d`; kept for cross-checking.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterpolantError {
    #[error("the smooth hull needs a finite L")]
    ClassMismatch,
    #[error("expected a point of dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("interpolant needs at least one triplet")]
    Empty,
    #[error("simplex QP not converged (gap {gap:e}); best value {value}")]
    SimplexSolverNotConverged { value: f64, gap: f64 },
    #[error("gradient is only defined for the smooth hull")]
    NotDifferentiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolantKind {
    SmoothHull,
    MaxAffine,
    MaxQuadraticMinorant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub lambda: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Frank-Wolfe gap at `lambda`, an upper bound on its suboptimality.
    pub gap: f64,
}

/// Hull of the shifted conjugate pieces. `slopes` holds `a_i` row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothHull {
    d: usize,
    mu: f64,
    l: f64,
    slopes: Vec<f64>,
    offsets: Vec<f64>,
    qp: SimplexQp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Interpolant {
    SmoothHull(SmoothHull),
    /// `max_i f_i + g_i.(x - x_i)`.
    MaxAffine(Triplets),
    /// `max_i f_i + g_i.(x - x_i) + mu/2 |x - x_i|^2`.
    MaxQuadraticMinorant { triplets: Triplets, mu: f64 },
}

/// Picks the interpolant matching the class: hull for finite `L`, max of affine or
/// `mu`-quadratic minorants otherwise.
pub fn build(triplets: &Triplets, class: &FunctionClass) -> Result<Interpolant, InterpolantError> {
    if triplets.n() == 0 {
        return Err(InterpolantError::Empty);
    }
    Ok(match class.smoothness() {
        Smoothness::Finite(_) => {
            Interpolant::SmoothHull(SmoothHull::new(triplets, class.mu(), class.smoothness())?)
        }
        Smoothness::Infinite if class.mu() == 0.0 => Interpolant::MaxAffine(triplets.clone()),
        Smoothness::Infinite => Interpolant::MaxQuadraticMinorant {
            triplets: triplets.clone(),
            mu: class.mu(),
        },
    })
}

impl SmoothHull {
    pub fn new(
        triplets: &Triplets,
        mu: f64,
        smoothness: Smoothness,
    ) -> Result<Self, InterpolantError> {
        let l = smoothness.finite().ok_or(InterpolantError::ClassMismatch)?;
        if triplets.n() == 0 {
            return Err(InterpolantError::Empty);
        }
        let kappa = l - mu;
        let conj = triplets.to_conjugate(mu).0;
        let d = triplets.d();
        let mut slopes = Vec::with_capacity(conj.n() * d);
        let mut offsets = Vec::with_capacity(conj.n());
        for i in 0..conj.n() {
            let (xt, gt) = (conj.site(i), conj.gradient(i));
            slopes.extend(gt.iter().zip(xt).map(|(g, x)| g - x / kappa));
            offsets.push(conj.value(i) - dot(gt, xt) + norm_sq(xt) / (2.0 * kappa));
        }
        let qp = SimplexQp::new(&slopes, d, &offsets, kappa);
        Ok(Self {
            d,
            mu,
            l,
            slopes,
            offsets,
            qp,
        })
    }

    pub fn slope(&self, i: usize) -> &[f64] {
        &self.slopes[i * self.d..(i + 1) * self.d]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// `p_i(x) + mu/2 |x|^2` for the single piece `i`.
    pub fn piece(&self, i: usize, x: &[f64]) -> f64 {
        let kappa = self.l - self.mu;
        let a = self.slope(i);
        let r: f64 = x.iter().zip(a).map(|(xk, ak)| (xk - ak) * (xk - ak)).sum();
        0.5 * self.mu * norm_sq(x) + 0.5 * kappa * r - self.offsets[i]
    }

    fn solve(&self, x: &[f64]) -> Result<SimplexSolution, SimplexSolution> {
        self.qp.solve(x, SIMPLEX_TOL, SIMPLEX_MAX_ITERS, SimplexMethod::ActiveSet)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, InterpolantError> {
        let shift = 0.5 * self.mu * norm_sq(x);
        match self.solve(x) {
            Ok(s) => Ok(s.value + shift),
            Err(s) => Err(InterpolantError::SimplexSolverNotConverged {
                value: s.value + shift,
                gap: s.gap,
            }),
        }
    }

    /// `mu x + (L - mu)(x - A lambda*)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, InterpolantError> {
        let s = self.solve(x).map_err(|s| InterpolantError::SimplexSolverNotConverged {
            value: s.value + 0.5 * self.mu * norm_sq(x),
            gap: s.gap,
        })?;
        let kappa = self.l - self.mu;
        let mut center = vec![0.0; self.d];
        for (i, w) in s.lambda.iter().enumerate() {
            if *w != 0.0 {
                for (c, a) in center.iter_mut().zip(self.slope(i)) {
                    *c += w * a;
                }
            }
        }
        Ok(x.iter()
            .zip(&center)
            .map(|(xk, ck)| self.mu * xk + kappa * (xk - ck))
            .collect())
    }
}

impl Interpolant {
    pub fn kind(&self) -> InterpolantKind {
        match self {
            Interpolant::SmoothHull(_) => InterpolantKind::SmoothHull,
            Interpolant::MaxAffine(_) => InterpolantKind::MaxAffine,
            Interpolant::MaxQuadraticMinorant { .. } => InterpolantKind::MaxQuadraticMinorant,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Interpolant::SmoothHull(h) => h.d,
            Interpolant::MaxAffine(t) | Interpolant::MaxQuadraticMinorant { triplets: t, .. } => {
                t.d()
            }
        }
    }

    fn check(&self, x: &[f64]) -> Result<(), InterpolantError> {
        if x.len() != self.d() {
            return Err(InterpolantError::DimensionMismatch {
                expected: self.d(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, InterpolantError> {
        self.check(x)?;
        match self {
            Interpolant::SmoothHull(h) => h.evaluate(x),
            Interpolant::MaxAffine(t) => Ok(max_minorant(t, 0.0, x)),
            Interpolant::MaxQuadraticMinorant { triplets, mu } => Ok(max_minorant(triplets, *mu, x)),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, InterpolantError> {
        self.check(x)?;
        match self {
            Interpolant::SmoothHull(h) => h.gradient(x),
            _ => Err(InterpolantError::NotDifferentiable),
        }
    }
}

fn max_minorant(t: &Triplets, mu: f64, x: &[f64]) -> f64 {
    (0..t.n())
        .map(|i| {
            let xi = t.site(i);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((xk, sk), gk) in x.iter().zip(xi).zip(t.gradient(i)) {
                let dx = xk - sk;
                lin += gk * dx;
                sq += dx * dx;
            }
            t.value(i) + lin + 0.5 * mu * sq
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Minimizes `(L - mu)/2 |x - A lambda|^2 - b.lambda` over the probability simplex, where
/// `a` holds the `n` columns of `A` row by row.
pub fn solve_simplex_qp(
    a: &[f64],
    b: &[f64],
    x: &[f64],
    l: f64,
    mu: f64,
    tol: f64,
    method: SimplexMethod,
) -> Result<SimplexSolution, InterpolantError> {
    let d = x.len();
    if b.is_empty() {
        return Err(InterpolantError::Empty);
    }
    if a.len() != b.len() * d {
        return Err(InterpolantError::DimensionMismatch {
            expected: b.len() * d,
            found: a.len(),
        });
    }
    SimplexQp::new(a, d, b, l - mu)
        .solve(x, tol, SIMPLEX_MAX_ITERS, method)
        .map_err(|s| InterpolantError::SimplexSolverNotConverged {
            value: s.value,
            gap: s.gap,
        })
}

/// Problem data with the columns of `A` centered; the simplex constraint makes the shift
/// exact and it shrinks the Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
struct SimplexQp {
    d: usize,
    kappa: f64,
    mean: Vec<f64>,
    centered: Vec<f64>,
    offsets: Vec<f64>,
    lipschitz: f64,
}

impl SimplexQp {
    fn new(a: &[f64], d: usize, b: &[f64], kappa: f64) -> Self {
        let n = b.len();
        let mut mean = vec![0.0; d];
        for row in a.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let centered: Vec<f64> = a
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m))
            .collect();
        let lipschitz = kappa * largest_gram_eigenvalue(&centered, d, n);
        Self {
            d,
            kappa,
            mean,
            centered,
            offsets: b.to_vec(),
            lipschitz: lipschitz.max(f64::MIN_POSITIVE),
        }
    }

    fn n(&self) -> usize {
        self.offsets.len()
    }

    /// Value and gradient at `lambda` for the centered target `xc`.
    fn value_and_gradient(&self, xc: &[f64], lambda: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.d;
        let mut r = xc.to_vec();
        for (w, col) in lambda.iter().zip(self.centered.chunks_exact(d)) {
            if *w != 0.0 {
                for (rk, ck) in r.iter_mut().zip(col) {
                    *rk -= w * ck;
                }
            }
        }
        for ((g, col), b) in grad.iter_mut().zip(self.centered.chunks_exact(d)).zip(&self.offsets) {
            *g = -self.kappa * dot(col, &r) - b;
        }
        0.5 * self.kappa * norm_sq(&r) - dot(&self.offsets, lambda)
    }

    /// Both methods stop once the Frank-Wolfe gap is at most `tol * max(1, |value|)`.
    /// `Err` carries the last iterate when `max_iters` is exhausted.
    fn solve(
        &self,
        x: &[f64],
        tol: f64,
        max_iters: usize,
        method: SimplexMethod,
    ) -> Result<SimplexSolution, SimplexSolution> {
        let xc: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let start = self.best_vertex(&xc);
        match method {
            SimplexMethod::ActiveSet => self.active_set(&xc, start, tol, max_iters),
            SimplexMethod::ProjectedGradient => self.accelerated(&xc, start, tol, max_iters),
        }
    }

    fn column(&self, i: usize) -> &[f64] {
        &self.centered[i * self.d..(i + 1) * self.d]
    }

    fn best_vertex(&self, xc: &[f64]) -> usize {
        (0..self.n())
            .map(|i| {
                let r: f64 = xc.iter().zip(self.column(i)).map(|(a, c)| (a - c) * (a - c)).sum();
                0.5 * self.kappa * r - self.offsets[i]
            })
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
            .0
    }

    fn accelerated(
        &self,
        xc: &[f64],
        start: usize,
        tol: f64,
        max_iters: usize,
    ) -> Result<SimplexSolution, SimplexSolution> {
        let n = self.n();
        let xc = xc.to_vec();
        let mut lambda = vec![0.0; n];
        lambda[start] = 1.0;
        let mut grad = vec![0.0; n];
        let mut value = self.value_and_gradient(&xc, &lambda, &mut grad);
        let mut gap = frank_wolfe_gap(&lambda, &grad);
        if gap <= tol * value.abs().max(1.0) {
            return Ok(SimplexSolution {
                lambda,
                value,
                iterations: 0,
                gap,
            });
        }

        let step = 1.0 / self.lipschitz;
        let mut y = lambda.clone();
        let mut y_grad = grad.clone();
        let mut t = 1.0f64;
        let mut next = vec![0.0; n];
        for iteration in 1..=max_iters {
            for ((nk, yk), gk) in next.iter_mut().zip(&y).zip(&y_grad) {
                *nk = yk - step * gk;
            }
            project_onto_simplex(&mut next);
            let mut next_grad = vec![0.0; n];
            let next_value = self.value_and_gradient(&xc, &next, &mut next_grad);
            let next_gap = frank_wolfe_gap(&next, &next_grad);

            let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
            if next_value > value {
                // restart momentum from the current iterate
                t = 1.0;
                y.copy_from_slice(&lambda);
                y_grad.copy_from_slice(&grad);
                continue;
            }
            let beta = (t - 1.0) / t_next;
            for ((yk, nk), lk) in y.iter_mut().zip(&next).zip(&lambda) {
                *yk = nk + beta * (nk - lk);
            }
            self.value_and_gradient(&xc, &y, &mut y_grad);
            t = t_next;
            lambda.copy_from_slice(&next);
            grad = next_grad;
            value = next_value;
            gap = next_gap;
            if gap <= tol * value.abs().max(1.0) {
                return Ok(SimplexSolution {
                    lambda,
                    value,
                    iterations: iteration,
                    gap,
                });
            }
        }
        Err(SimplexSolution {
            lambda,
            value,
            iterations: max_iters,
            gap,
        })
    }
    /// Primal active-set method. Each pass minimizes over the affine hull of the support;
    /// when that subproblem is singular (the Hessian has rank at most `d`) the objective is
    /// linear along a null direction, which is followed to the boundary instead.
    fn active_set(
        &self,
        xc: &[f64],
        start: usize,
        tol: f64,
        max_iters: usize,
    ) -> Result<SimplexSolution, SimplexSolution> {
        let n = self.n();
        let mut lambda = vec![0.0; n];
        lambda[start] = 1.0;
        let mut support = vec![start];
        let mut grad = vec![0.0; n];
        let mut stationary = true;
        let mut last = SimplexSolution {
            lambda: Vec::new(),
            value: f64::INFINITY,
            iterations: 0,
            gap: f64::INFINITY,
        };
        for iteration in 0..=max_iters {
            let value = self.value_and_gradient(xc, &lambda, &mut grad);
            let gap = frank_wolfe_gap(&lambda, &grad);
            if gap <= tol * value.abs().max(1.0) {
                return Ok(SimplexSolution {
                    lambda,
                    value,
                    iterations: iteration,
                    gap,
                });
            }
            last = SimplexSolution {
                lambda: lambda.clone(),
                value,
                iterations: iteration,
                gap,
            };
            if stationary {
                let entering = (0..n)
                    .filter(|i| !support.contains(i))
                    .min_by(|&i, &j| grad[i].total_cmp(&grad[j]));
                match entering {
                    Some(j) => support.push(j),
                    // every vertex already in play; the gap is rounding noise
                    None => break,
                }
            }
            let (direction, bounded) = self.support_direction(&support, &grad);
            // ratio test over the support
            let mut step = if bounded { 1.0 } else { f64::INFINITY };
            let mut blocking = None;
            for (k, &i) in support.iter().enumerate() {
                if direction[k] < 0.0 {
                    let limit = lambda[i] / -direction[k];
                    if limit < step {
                        step = limit;
                        blocking = Some(k);
                    }
                }
            }
            if !step.is_finite() {
                break;
            }
            for (k, &i) in support.iter().enumerate() {
                lambda[i] = (lambda[i] + step * direction[k]).max(0.0);
            }
            stationary = blocking.is_none();
            if let Some(k) = blocking {
                lambda[support[k]] = 0.0;
                support.swap_remove(k);
            }
            let total: f64 = support.iter().map(|&i| lambda[i]).sum();
            support.iter().for_each(|&i| lambda[i] /= total);
        }
        Err(last)
    }

    /// Search direction on the support (entries in support order), and whether it is a
    /// Newton step (bounded, unit length) or a descent ray along which the objective is linear.
    fn support_direction(&self, support: &[usize], grad: &[f64]) -> (Vec<f64>, bool) {
        let k = support.len();
        if k == 1 {
            return (vec![0.0], true);
        }
        // coordinates u on {sum p = 0}: p = sum_j u_j (e_{s_j} - e_{s_0})
        let m = k - 1;
        let d = self.d;
        let base = self.column(support[0]);
        let diffs: Vec<f64> = support[1..]
            .iter()
            .flat_map(|&i| self.column(i).iter().zip(base).map(|(c, b)| c - b))
            .collect();
        let rhs: Vec<f64> = support[1..].iter().map(|&i| grad[support[0]] - grad[i]).collect();
        let mut gram = vec![0.0; m * m];
        for p in 0..m {
            for q in 0..=p {
                let v = self.kappa * dot(&diffs[p * d..(p + 1) * d], &diffs[q * d..(q + 1) * d]);
                gram[p * m + q] = v;
                gram[q * m + p] = v;
            }
        }
        let (u, bounded) = match pivoted_cholesky(&mut gram, m) {
            Factor::Full(perm) => (solve_permuted(&gram, m, &perm, &rhs), true),
            Factor::Deficient { perm, rank } => {
                let mut u = null_vector(&gram, m, &perm, rank);
                // objective is linear along u with slope -rhs.u; walk downhill
                if dot(&rhs, &u) < 0.0 {
                    u.iter_mut().for_each(|v| *v = -*v);
                }
                (u, false)
            }
        };
        let mut direction = Vec::with_capacity(k);
        direction.push(-u.iter().sum::<f64>());
        direction.extend_from_slice(&u);
        (direction, bounded)
    }
}

enum Factor {
    Full(Vec<usize>),
    Deficient { perm: Vec<usize>, rank: usize },
}

/// Diagonally pivoted Cholesky of the symmetric `m x m` matrix in place. On return the
/// lower triangle of the leading `rank` columns holds `L` for `P A Pᵀ = L Lᵀ`, with `A`
/// indexed through `perm`.
fn pivoted_cholesky(a: &mut [f64], m: usize) -> Factor {
    let mut perm: Vec<usize> = (0..m).collect();
    let scale = (0..m).map(|i| a[i * m + i]).fold(0.0f64, f64::max);
    for t in 0..m {
        let (best, pivot) = (t..m)
            .map(|r| (r, a[perm[r] * m + perm[r]]))
            .fold((t, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        if !(pivot > RANK_TOL * scale) {
            return Factor::Deficient { perm, rank: t };
        }
        perm.swap(t, best);
        let p = perm[t];
        let root = libm::sqrt(pivot);
        a[p * m + p] = root;
        for &r in &perm[t + 1..] {
            a[r * m + p] /= root;
        }
        for (idx, &r) in perm.iter().enumerate().skip(t + 1) {
            let lr = a[r * m + p];
            for &c in &perm[t + 1..=idx] {
                a[r * m + c] -= lr * a[c * m + p];
                if c != r {
                    a[c * m + r] = a[r * m + c];
                }
            }
        }
    }
    Factor::Full(perm)
}

/// Solves `A u = rhs` from a full-rank pivoted factorization.
fn solve_permuted(l: &[f64], m: usize, perm: &[usize], rhs: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m];
    for t in 0..m {
        let p = perm[t];
        let s: f64 = (0..t).map(|k| l[p * m + perm[k]] * y[k]).sum();
        y[t] = (rhs[p] - s) / l[p * m + p];
    }
    let mut u = vec![0.0; m];
    for t in (0..m).rev() {
        let p = perm[t];
        let s: f64 = ((t + 1)..m).map(|k| l[perm[k] * m + p] * u[perm[k]]).sum();
        u[p] = (y[t] - s) / l[p * m + p];
    }
    u
}

/// Vector in the (numerical) kernel: unit weight on the first unpivoted index, the pivoted
/// block solved against its column, zeros elsewhere.
fn null_vector(l: &[f64], m: usize, perm: &[usize], rank: usize) -> Vec<f64> {
    let free = perm[rank];
    let mut u = vec![0.0; m];
    u[free] = 1.0;
    // L_PP y = -L_{free,P} relationship: solve L_PP L_PPᵀ u_P = -A_{P,free}
    // with A_{P,free} = L_PP L_{free,P}ᵀ, so L_PPᵀ u_P = -L_{free,P}ᵀ.
    for t in (0..rank).rev() {
        let p = perm[t];
        let s: f64 = ((t + 1)..rank).map(|k| l[perm[k] * m + p] * u[perm[k]]).sum();
        u[p] = (-l[free * m + p] - s) / l[p * m + p];
    }
    u
}

fn frank_wolfe_gap(lambda: &[f64], grad: &[f64]) -> f64 {
    let min = grad.iter().copied().fold(f64::INFINITY, f64::min);
    (dot(grad, lambda) - min).max(0.0)
}

/// Largest eigenvalue of `AᵀA`, by power iteration on the `d x d` matrix `sum_i a_i a_iᵀ`
/// (same nonzero spectrum). Capped by the trace, which bounds it from above.
fn largest_gram_eigenvalue(c: &[f64], d: usize, n: usize) -> f64 {
    let mut gram = vec![0.0; d * d];
    for row in c.chunks_exact(d) {
        for p in 0..d {
            for q in 0..d {
                gram[p * d + q] += row[p] * row[q];
            }
        }
    }
    let frobenius: f64 = (0..d).map(|k| gram[k * d + k]).sum();
    if n == 0 || frobenius == 0.0 {
        return 0.0;
    }
    let mut v = vec![1.0; d];
    let mut estimate = 0.0;
    let mut w = vec![0.0; d];
    for _ in 0..POWER_ITERS {
        crate::linalg::mat_vec(&gram, d, &v, &mut w);
        let norm = libm::sqrt(norm_sq(&w));
        if norm == 0.0 {
            break;
        }
        estimate = dot(&v, &w) / norm_sq(&v);
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / norm);
    }
    // power iteration approaches from below
    (1.05 * estimate).min(frobenius).max(estimate)
}

/// Euclidean projection onto `{w >= 0, sum w = 1}` by sorting.
pub fn project_onto_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}
