#![allow(dead_code)]

use cvxreg_core::local_qcqp::{assemble_edge_problem, EdgeData, EdgeProblem};
use cvxreg_core::{FunctionClass, Smoothness, Triplets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_class(rng: &mut ChaCha8Rng) -> FunctionClass {
    let mu = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) };
    if rng.random_bool(0.2) {
        FunctionClass::new(mu, Smoothness::Infinite).unwrap()
    } else {
        FunctionClass::new(mu, Smoothness::Finite(mu + rng.random_range(0.5..10.0))).unwrap()
    }
}

/// Edge data with O(1) entries, owned so the borrowed view can be rebuilt freely.
#[derive(Debug, Clone)]
pub struct EdgeInstance {
    pub d: usize,
    pub n: usize,
    pub rho: f64,
    pub class: FunctionClass,
    pub x_i: Vec<f64>,
    pub x_j: Vec<f64>,
    pub y: [f64; 2],
    pub z_i: Vec<f64>,
    pub z_j: Vec<f64>,
    pub lambda_i: Vec<f64>,
    pub lambda_j: Vec<f64>,
}

impl EdgeInstance {
    pub fn random(rng: &mut ChaCha8Rng, d: usize) -> Self {
        let mut x_i = vector(rng, d, 1.0);
        let x_j = vector(rng, d, 1.0);
        // keep the sites apart
        x_i[0] = x_j[0] + if rng.random_bool(0.5) { 0.2 } else { -0.2 } + 0.5 * x_i[0];
        Self {
            d,
            n: rng.random_range(2..40),
            rho: rng.random_range(0.05..1.0),
            class: random_class(rng),
            x_i,
            x_j,
            y: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            z_i: vector(rng, 1 + d, 1.0),
            z_j: vector(rng, 1 + d, 1.0),
            lambda_i: vector(rng, 1 + d, 0.3),
            lambda_j: vector(rng, 1 + d, 0.3),
        }
    }

    pub fn data(&self) -> EdgeData<'_> {
        EdgeData {
            edge: (0, 1),
            x_i: &self.x_i,
            x_j: &self.x_j,
            y_i: self.y[0],
            y_j: self.y[1],
            z_i: &self.z_i,
            z_j: &self.z_j,
            lambda_i: &self.lambda_i,
            lambda_j: &self.lambda_j,
        }
    }

    pub fn problem(&self) -> EdgeProblem {
        assemble_edge_problem(&self.data(), self.rho, self.n, &self.class).unwrap()
    }
}

/// Exact triplets of `mu/2 x^2 + a softplus(b x + s)` in d = 1, which lies in F(mu, mu + a b^2 / 4).
pub fn softplus_triplets(xs: &[f64], mu: f64, a: f64, b: f64, s: f64) -> Triplets {
    let f = |x: f64| 0.5 * mu * x * x + a * (1.0 + (b * x + s).exp()).ln();
    let g = |x: f64| mu * x + a * b / (1.0 + (-(b * x + s)).exp());
    Triplets::new(
        1,
        xs.to_vec(),
        xs.iter().map(|x| g(*x)).collect(),
        xs.iter().map(|x| f(*x)).collect(),
    )
    .unwrap()
}

/// Triplets of `c0/2 |x|^2 + w.x` at the given sites.
pub fn quadratic_triplets(d: usize, sites: &[f64], c0: f64, w: &[f64]) -> Triplets {
    let n = sites.len() / d;
    let mut gradients = Vec::with_capacity(n * d);
    let mut values = Vec::with_capacity(n);
    for x in sites.chunks_exact(d) {
        gradients.extend(x.iter().zip(w).map(|(xk, wk)| c0 * xk + wk));
        values.push(0.5 * c0 * x.iter().map(|v| v * v).sum::<f64>() + x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
    }
    Triplets::new(d, sites.to_vec(), gradients, values).unwrap()
}
