//! Small dense kernels. Matrices are row-major `&[f64]` with an explicit order.

use alloc::vec::Vec;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `out = M v` for a square matrix of order `n`.
pub fn mat_vec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (row, o) in m.chunks_exact(n).zip(out.iter_mut()) {
        *o = dot(row, v);
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`, stored in the lower triangle.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: Vec<f64>,
    order: usize,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive.
    pub fn new(a: &[f64], order: usize) -> Option<Self> {
        let mut factor = a.to_vec();
        factor_in_place(&mut factor, order)?;
        Some(Self { factor, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        solve_factored(&self.factor, self.order, b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// In-place Cholesky factorization; only the lower triangle of the result is meaningful.
pub fn factor_in_place(a: &mut [f64], n: usize) -> Option<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) {
            return None;
        }
        let pivot = libm::sqrt(diag);
        a[j * n + j] = pivot;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / pivot;
        }
    }
    Some(())
}

/// Forward and back substitution with a factor produced by [`factor_in_place`].
pub fn solve_factored(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
