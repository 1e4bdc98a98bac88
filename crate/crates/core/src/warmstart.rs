//! Gaussian-process posterior mean used to initialize the consensus vector.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{dist_sq, Cholesky};
use crate::model::ObservationSet;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    FactorizationFailed { jitter: f64 },
    #[error("invalid GP hyperparameter: {0}")]
    InvalidHyperparameter(&'static str),
}

/// Optional overrides; unset fields fall back to data-driven defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GpConfig {
    pub lengthscale: Option<f64>,
    pub signal_var: Option<f64>,
    pub noise_var: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpConfig {
    /// Defaults: lengthscale = median pairwise site distance, signal variance = sample
    /// variance of `y` (1 when the data are constant), noise variance = 1% of the signal.
    pub fn resolve(&self, obs: &ObservationSet) -> GpHyper {
        let lengthscale = self.lengthscale.unwrap_or_else(|| median_pairwise_distance(obs));
        let signal_var = self.signal_var.unwrap_or_else(|| {
            let v = variance(obs.values());
            if v > 0.0 {
                v
            } else {
                1.0
            }
        });
        GpHyper {
            lengthscale,
            signal_var,
            noise_var: self.noise_var.unwrap_or(0.01 * signal_var),
        }
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn median_pairwise_distance(obs: &ObservationSet) -> f64 {
    let n = obs.n();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(libm::sqrt(dist_sq(obs.point(i), obs.point(j))));
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let m = dists.len();
    if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    }
}

/// Fitted posterior with `alpha = (K + noise I)^{-1} y`.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyper,
    jitter: f64,
    d: usize,
    sites: Vec<f64>,
    alpha: Vec<f64>,
}

impl GpModel {
    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    /// Extra diagonal added to make the factorization succeed; zero when none was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn kernel(&self, u: &[f64], v: &[f64]) -> f64 {
        self.hyper.signal_var * libm::exp(-dist_sq(u, v) / (2.0 * self.hyper.lengthscale * self.hyper.lengthscale))
    }
}

/// Squared-exponential kernel `s^2 exp(-|u - v|^2 / (2 l^2))`.
pub fn kernel_matrix(obs: &ObservationSet, hyper: &GpHyper) -> Vec<f64> {
    kernel_matrix_points(obs.d(), obs.points(), hyper)
}

fn kernel_matrix_points(d: usize, sites: &[f64], hyper: &GpHyper) -> Vec<f64> {
    let n = sites.len() / d;
    let scale = 2.0 * hyper.lengthscale * hyper.lengthscale;
    let mut k = vec![0.0; n * n];
    for (i, u) in sites.chunks_exact(d).enumerate() {
        for (j, v) in sites.chunks_exact(d).enumerate() {
            k[i * n + j] = hyper.signal_var * libm::exp(-dist_sq(u, v) / scale);
        }
    }
    k
}

pub fn gp_fit(obs: &ObservationSet, hyper: GpHyper) -> Result<GpModel, GpError> {
    gp_fit_points(obs.d(), obs.points(), obs.values(), hyper)
}

/// Same as [`gp_fit`] on raw sites (`d` coordinates each) and values; allows a single site.
pub fn gp_fit_points(
    d: usize,
    sites: &[f64],
    values: &[f64],
    hyper: GpHyper,
) -> Result<GpModel, GpError> {
    if !(hyper.lengthscale > 0.0 && hyper.lengthscale.is_finite()) {
        return Err(GpError::InvalidHyperparameter("lengthscale must be positive"));
    }
    if !(hyper.signal_var > 0.0 && hyper.signal_var.is_finite()) {
        return Err(GpError::InvalidHyperparameter("signal variance must be positive"));
    }
    if !(hyper.noise_var >= 0.0 && hyper.noise_var.is_finite()) {
        return Err(GpError::InvalidHyperparameter("noise variance must be nonnegative"));
    }
    let n = values.len();
    let mut k = kernel_matrix_points(d, sites, &hyper);
    for i in 0..n {
        k[i * n + i] += hyper.noise_var;
    }
    let mut jitter = 0.0;
    let chol = loop {
        let mut shifted = k.clone();
        for i in 0..n {
            shifted[i * n + i] += jitter;
        }
        if let Some(c) = Cholesky::new(&shifted, n) {
            break c;
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(GpError::FactorizationFailed { jitter: JITTER_MAX });
        }
    };
    Ok(GpModel {
        hyper,
        jitter,
        d,
        sites: sites.to_vec(),
        alpha: chol.solve(values),
    })
}

/// Posterior mean `k_x' alpha` and its gradient `-sum_i alpha_i k(x, x_i) (x - x_i) / l^2`.
pub fn gp_mean_and_derivative(model: &GpModel, x: &[f64]) -> (f64, Vec<f64>) {
    let d = model.d;
    let inv_l2 = 1.0 / (model.hyper.lengthscale * model.hyper.lengthscale);
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    for (site, a) in model.sites.chunks_exact(d).zip(&model.alpha) {
        let w = a * model.kernel(x, site);
        value += w;
        for ((g, xk), sk) in grad.iter_mut().zip(x).zip(site) {
            *g -= w * (xk - sk) * inv_l2;
        }
    }
    (value, grad)
}

/// `z_i = (m(x_i), grad m(x_i))`, laid out node after node.
pub fn initial_consensus(obs: &ObservationSet, config: &GpConfig) -> Result<Vec<f64>, GpError> {
    let model = gp_fit(obs, config.resolve(obs))?;
    let mut z = Vec::with_capacity(obs.n() * (1 + obs.d()));
    for i in 0..obs.n() {
        let (v, g) = gp_mean_and_derivative(&model, obs.point(i));
        z.push(v);
        z.extend_from_slice(&g);
    }
    Ok(z)
}

/// Posterior mean at the training sites.
pub fn fitted_values(model: &GpModel) -> Vec<f64> {
    model
        .sites
        .chunks_exact(model.d)
        .map(|s| gp_mean_and_derivative(model, s).0)
        .collect()
}
