//! Observations, function classes and (site, gradient, value) triplets.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::linalg::{dot, norm_sq};

/// Two sites closer than this in max-norm are treated as the same site.
pub const DUPLICATE_SITE_TOL: f64 = 1e-12;

/// Default tolerance on constraint residuals when certifying a model.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch at index {index}: expected {expected}, found {found}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("sites {first} and {second} coincide")]
    DuplicateSite { first: usize, second: usize },
    #[error("need at least 2 observations, got {n}")]
    TooFewPoints { n: usize },
    #[error("invalid function class: mu = {mu}, L = {l}")]
    InvalidClass { mu: f64, l: Smoothness },
    #[error("conjugate coordinates are undefined for L = inf")]
    InfiniteL,
    #[error("non-finite input at index {index}")]
    NonFinite { index: usize },
}

/// Smoothness constant `L`, with the nonsmooth case kept out of float arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    Finite(f64),
    Infinite,
}

impl Smoothness {
    pub fn finite(self) -> Option<f64> {
        match self {
            Smoothness::Finite(l) => Some(l),
            Smoothness::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Smoothness::Infinite)
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothness::Finite(l) => write!(f, "{l}"),
            Smoothness::Infinite => f.write_str("inf"),
        }
    }
}

/// The class of `L`-smooth, `mu`-strongly convex functions, `0 <= mu < L <= inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionClass {
    mu: f64,
    smoothness: Smoothness,
}

impl FunctionClass {
    pub fn new(mu: f64, smoothness: Smoothness) -> Result<Self, ModelError> {
        let valid = mu.is_finite()
            && mu >= 0.0
            && match smoothness {
                Smoothness::Finite(l) => l.is_finite() && l > mu,
                Smoothness::Infinite => true,
            };
        if valid {
            Ok(Self { mu, smoothness })
        } else {
            Err(ModelError::InvalidClass { mu, l: smoothness })
        }
    }

    /// Plain convex functions, `mu = 0` and `L = inf`.
    pub fn convex() -> Self {
        Self {
            mu: 0.0,
            smoothness: Smoothness::Infinite,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn l(&self) -> Option<f64> {
        self.smoothness.finite()
    }
}

/// Validated noisy observations `y_i` at distinct sites `x_i` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    d: usize,
    points: Vec<f64>,
    values: Vec<f64>,
}

/// Builds an [`ObservationSet`] from ragged input, checking shape and site distinctness.
pub fn validate_observations(
    points: &[Vec<f64>],
    values: &[f64],
) -> Result<ObservationSet, ModelError> {
    if points.len() != values.len() {
        return Err(ModelError::DimensionMismatch {
            index: points.len().min(values.len()),
            expected: points.len(),
            found: values.len(),
        });
    }
    let d = points.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(points.len() * d);
    for (index, p) in points.iter().enumerate() {
        if p.len() != d || d == 0 {
            return Err(ModelError::DimensionMismatch {
                index,
                expected: d.max(1),
                found: p.len(),
            });
        }
        flat.extend_from_slice(p);
    }
    ObservationSet::from_flat(d, flat, values.to_vec())
}

impl ObservationSet {
    /// `points` holds `n * d` coordinates, site after site.
    pub fn from_flat(d: usize, points: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if d == 0 || points.len() != values.len() * d {
            return Err(ModelError::DimensionMismatch {
                index: 0,
                expected: values.len() * d.max(1),
                found: points.len(),
            });
        }
        let n = values.len();
        if n < 2 {
            return Err(ModelError::TooFewPoints { n });
        }
        if let Some(index) = points
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| k / d)
            .or_else(|| values.iter().position(|v| !v.is_finite()))
        {
            return Err(ModelError::NonFinite { index });
        }
        for i in 0..n {
            let xi = &points[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                let xj = &points[j * d..(j + 1) * d];
                let gap = xi
                    .iter()
                    .zip(xj)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if gap <= DUPLICATE_SITE_TOL {
                    return Err(ModelError::DuplicateSite {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(Self { d, points, values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A set `{(x_i, g_i, f_i)}` of sites, gradients and function values.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    d: usize,
    sites: Vec<f64>,
    gradients: Vec<f64>,
    values: Vec<f64>,
}

impl Triplets {
    pub fn new(
        d: usize,
        sites: Vec<f64>,
        gradients: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let n = values.len();
        if d == 0 || sites.len() != n * d || gradients.len() != n * d {
            return Err(ModelError::DimensionMismatch {
                index: 0,
                expected: n * d.max(1),
                found: if sites.len() != n * d {
                    sites.len()
                } else {
                    gradients.len()
                },
            });
        }
        Ok(Self {
            d,
            sites,
            gradients,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.sites[i * self.d..(i + 1) * self.d]
    }

    pub fn gradient(&self, i: usize) -> &[f64] {
        &self.gradients[i * self.d..(i + 1) * self.d]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn gradients(&self) -> &[f64] {
        &self.gradients
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(g - mu x, x, x.g - f - mu/2 |x|^2)` for every triplet.
    pub fn to_conjugate(&self, mu: f64) -> ConjugateTriplets {
        let mut sites = Vec::with_capacity(self.sites.len());
        let mut values = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let (x, g) = (self.site(i), self.gradient(i));
            sites.extend(g.iter().zip(x).map(|(gk, xk)| gk - mu * xk));
            values.push(dot(x, g) - self.values[i] - 0.5 * mu * norm_sq(x));
        }
        ConjugateTriplets(Triplets {
            d: self.d,
            sites,
            gradients: self.sites.clone(),
            values,
        })
    }
}

/// Triplets expressed in conjugate coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateTriplets(pub Triplets);

impl ConjugateTriplets {
    pub fn triplets(&self) -> &Triplets {
        &self.0
    }

    /// Inverse of [`Triplets::to_conjugate`] for the same `mu`.
    pub fn to_primal(&self, mu: f64) -> Triplets {
        let t = &self.0;
        let mut gradients = Vec::with_capacity(t.sites.len());
        let mut values = Vec::with_capacity(t.n());
        for i in 0..t.n() {
            let (xt, gt) = (t.site(i), t.gradient(i));
            gradients.extend(xt.iter().zip(gt).map(|(a, x)| a + mu * x));
            let g = &gradients[i * t.d..];
            values.push(dot(gt, g) - t.values[i] - 0.5 * mu * norm_sq(gt));
        }
        Triplets {
            d: t.d,
            sites: t.gradients.clone(),
            gradients,
            values,
        }
    }
}

/// Fitted triplets together with their class. `certified` is only set by
/// [`crate::constraints::certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedModel {
    triplets: Triplets,
    class: FunctionClass,
    pub(crate) certified: bool,
}

impl CertifiedModel {
    pub fn new(triplets: Triplets, class: FunctionClass) -> Self {
        Self {
            triplets,
            class,
            certified: false,
        }
    }

    pub fn triplets(&self) -> &Triplets {
        &self.triplets
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn certified(&self) -> bool {
        self.certified
    }

    pub fn into_triplets(self) -> Triplets {
        self.triplets
    }
}

pub fn to_conjugate_coordinates(model: &CertifiedModel) -> Result<ConjugateTriplets, ModelError> {
    if model.class.smoothness.is_infinite() {
        return Err(ModelError::InfiniteL);
    }
    Ok(model.triplets.to_conjugate(model.class.mu))
}
