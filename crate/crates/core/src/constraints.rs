//! Pairwise interpolability conditions for `F_{mu,L}` and whole-model certification.
//!
//! Residuals follow the convention `LHS - RHS`, so a nonnegative residual means the
//! ordered pair `(i, j)` satisfies its condition.

use crate::model::{CertifiedModel, FunctionClass, ModelError, Smoothness, Triplets};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairResidual {
    pub i: usize,
    pub j: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certification {
    pub certified: bool,
    pub worst: PairResidual,
}

/// Interpolability residual of the ordered pair `(i, j)`:
///
/// `f_i - f_j - g_j.(x_i - x_j) - c [ |g_i - g_j|^2 / L + mu |x_i - x_j|^2 - 2 (mu/L) (g_j - g_i).(x_j - x_i) ]`
///
/// with `c = 1 / (2 (1 - mu/L))`. The `L = inf` limit is evaluated in closed form.
pub fn constraint_residual(
    x_i: &[f64],
    f_i: f64,
    g_i: &[f64],
    x_j: &[f64],
    f_j: f64,
    g_j: &[f64],
    class: &FunctionClass,
) -> Result<f64, ModelError> {
    let d = x_i.len();
    for (index, len) in [g_i.len(), x_j.len(), g_j.len()].into_iter().enumerate() {
        if len != d {
            return Err(ModelError::DimensionMismatch {
                index: index + 1,
                expected: d,
                found: len,
            });
        }
    }
    Ok(residual_unchecked(x_i, f_i, g_i, x_j, f_j, g_j, class))
}

pub(crate) fn residual_unchecked(
    x_i: &[f64],
    f_i: f64,
    g_i: &[f64],
    x_j: &[f64],
    f_j: f64,
    g_j: &[f64],
    class: &FunctionClass,
) -> f64 {
    let mu = class.mu();
    let mut linear = 0.0;
    let mut dx_sq = 0.0;
    let mut dg_sq = 0.0;
    let mut cross = 0.0;
    for k in 0..x_i.len() {
        let dx = x_i[k] - x_j[k];
        let dg = g_i[k] - g_j[k];
        linear += g_j[k] * dx;
        dx_sq += dx * dx;
        dg_sq += dg * dg;
        // (g_j - g_i).(x_j - x_i) == dg.dx
        cross += dg * dx;
    }
    let base = f_i - f_j - linear;
    match class.smoothness() {
        Smoothness::Infinite if mu == 0.0 => base,
        Smoothness::Infinite => base - 0.5 * mu * dx_sq,
        Smoothness::Finite(l) => {
            let c = 1.0 / (2.0 * (1.0 - mu / l));
            base - c * (dg_sq / l + mu * dx_sq - 2.0 * (mu / l) * cross)
        }
    }
}

/// Residual of the ordered pair `(i, j)` within a triplet set.
pub fn pair_residual(t: &Triplets, i: usize, j: usize, class: &FunctionClass) -> f64 {
    residual_unchecked(
        t.site(i),
        t.value(i),
        t.gradient(i),
        t.site(j),
        t.value(j),
        t.gradient(j),
        class,
    )
}

/// Smallest residual over all ordered pairs, scanned row-major; the first minimizer wins ties.
/// A single triplet has no pairs and reports `(0, 0, 0.0)`.
pub fn worst_pair(t: &Triplets, class: &FunctionClass) -> PairResidual {
    let mut worst = PairResidual {
        i: 0,
        j: 0,
        residual: 0.0,
    };
    let mut first = true;
    for i in 0..t.n() {
        for j in 0..t.n() {
            if i == j {
                continue;
            }
            let residual = pair_residual(t, i, j, class);
            if first || residual < worst.residual {
                worst = PairResidual { i, j, residual };
                first = false;
            }
        }
    }
    worst
}

/// Checks every ordered pair against `-tol` and records the verdict on the model.
pub fn certify(model: &mut CertifiedModel, tol: f64) -> Certification {
    let worst = worst_pair(model.triplets(), &model.class());
    let certified = worst.residual >= -tol;
    model.certified = certified;
    Certification { certified, worst }
}
