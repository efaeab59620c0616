//! Positive-definite kernels, Gram matrices and their jittered Cholesky
//! factorization.
//!
//! The factor is stored as an upper-triangular `R` with `K + jitter·I = RᵀR`,
//! so the `i`-th column of `R` is the feature vector of the `i`-th sample.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// First diagonal jitter tried when factorizing a Gram matrix.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const JITTER_CAP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Laplace,
    Gaussian,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Self::Laplace),
            "gaussian" => Ok(Self::Gaussian),
            other => invalid(format!("unknown kernel kind `{other}`")),
        }
    }
}

/// Norm used by the Laplace kernel distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceNorm {
    #[default]
    L1,
    L2,
}

/// A kernel family together with its lengthscale.
///
/// * Laplace: `k(u, v) = exp(-‖u - v‖ / σ)` with the configured norm (L1 by default).
/// * Gaussian: `k(u, v) = exp(-‖u - v‖₂² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    pub lengthscale: T,
    pub laplace_norm: DistanceNorm,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(kind: KernelKind, lengthscale: T) -> Result<Self> {
        let spec = Self {
            kind,
            lengthscale,
            laplace_norm: DistanceNorm::L1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn laplace(lengthscale: T) -> Result<Self> {
        Self::new(KernelKind::Laplace, lengthscale)
    }

    pub fn gaussian(lengthscale: T) -> Result<Self> {
        Self::new(KernelKind::Gaussian, lengthscale)
    }

    pub fn with_lengthscale(&self, lengthscale: T) -> Self {
        Self { lengthscale, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > T::zero()) || !self.lengthscale.is_finite() {
            return invalid(format!(
                "kernel lengthscale must be positive and finite, got {}",
                self.lengthscale
            ));
        }
        Ok(())
    }

    /// The distance this kernel is a function of. Used for lengthscale
    /// heuristics such as the median pairwise distance.
    pub fn distance(&self, u: &DVector<T>, v: &DVector<T>) -> T {
        match (self.kind, self.laplace_norm) {
            (KernelKind::Laplace, DistanceNorm::L1) => u
                .iter()
                .zip(v.iter())
                .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs()),
            _ => squared_distance(u, v).sqrt(),
        }
    }

    #[inline]
    fn eval_unchecked(&self, u: &DVector<T>, v: &DVector<T>) -> T {
        match self.kind {
            KernelKind::Laplace => (-self.distance(u, v) / self.lengthscale).exp(),
            KernelKind::Gaussian => {
                let two = T::lit(2.0);
                (-squared_distance(u, v) / (two * self.lengthscale * self.lengthscale)).exp()
            }
        }
    }
}

fn squared_distance<T: Real>(u: &DVector<T>, v: &DVector<T>) -> T {
    u.iter().zip(v.iter()).fold(T::zero(), |acc, (&a, &b)| {
        let d = a - b;
        acc + d * d
    })
}

/// Evaluates `k_σ(u, v)`.
pub fn kernel_eval<T: Real>(spec: &KernelSpec<T>, u: &DVector<T>, v: &DVector<T>) -> Result<T> {
    spec.validate()?;
    if u.len() != v.len() {
        return invalid(format!(
            "kernel arguments differ in dimension ({} vs {})",
            u.len(),
            v.len()
        ));
    }
    Ok(spec.eval_unchecked(u, v))
}

/// Kernel matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramFactor<T: Real> {
    /// Kernel matrix before jitter, unit diagonal.
    pub k: DMatrix<T>,
    /// Upper-triangular factor with `RᵀR = K + jitter·I`.
    pub r: DMatrix<T>,
    /// Diagonal jitter that was needed for the factorization to succeed.
    pub jitter: T,
}

impl<T: Real> GramFactor<T> {
    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    /// Solves `Rᵀ x = v`, i.e. returns `R⁻ᵀ v`.
    pub fn solve_rt(&self, v: &DVector<T>) -> DVector<T> {
        self.r
            .tr_solve_upper_triangular(v)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Solves `(K + jitter·I) x = v` through the two triangular systems.
    pub fn solve(&self, v: &DVector<T>) -> DVector<T> {
        let w = self.solve_rt(v);
        self.r
            .solve_upper_triangular(&w)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `log det(K + jitter·I)` from the diagonal of `R`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        self.r.diagonal().iter().fold(T::zero(), |acc, &d| acc + two * d.ln())
    }

    /// Largest absolute entry of `K + jitter·I - RᵀR`.
    pub fn reconstruction_error(&self) -> T {
        let mut shifted = self.k.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += self.jitter;
        }
        let rtr = self.r.transpose() * &self.r;
        (shifted - rtr).amax()
    }
}

/// Assembles `K_ij = k(u_i, u_j)`.
pub fn kernel_matrix<T: Real>(spec: &KernelSpec<T>, points: &[DVector<T>]) -> Result<DMatrix<T>> {
    spec.validate()?;
    check_points(points)?;
    let n = points.len();
    let mut k = DMatrix::<T>::identity(n, n);
    for j in 0..n {
        for i in 0..j {
            let value = spec.eval_unchecked(&points[i], &points[j]);
            k[(i, j)] = value;
            k[(j, i)] = value;
        }
    }
    Ok(k)
}

/// Kernel feature vector `v(u)_i = k(u_i, u)`.
pub fn feature_vector<T: Real>(spec: &KernelSpec<T>, points: &[DVector<T>], u: &DVector<T>) -> Result<DVector<T>> {
    spec.validate()?;
    if let Some(p) = points.first() {
        if p.len() != u.len() {
            return invalid(format!(
                "query dimension {} does not match sample dimension {}",
                u.len(),
                p.len()
            ));
        }
    }
    Ok(DVector::from_iterator(
        points.len(),
        points.iter().map(|p| spec.eval_unchecked(p, u)),
    ))
}

fn check_points<T: Real>(points: &[DVector<T>]) -> Result<()> {
    let Some(first) = points.first() else {
        return invalid("at least one point is required");
    };
    let d = first.len();
    if let Some(bad) = points.iter().position(|p| p.len() != d) {
        return invalid(format!(
            "point {bad} has dimension {} but point 0 has dimension {d}",
            points[bad].len()
        ));
    }
    Ok(())
}

/// Builds the Gram matrix for `points` and factorizes it.
pub fn gram_matrix<T: Real>(spec: &KernelSpec<T>, points: &[DVector<T>]) -> Result<GramFactor<T>> {
    let k = kernel_matrix(spec, points)?;
    factorize(k)
}

/// Cholesky factorization of a symmetric matrix with escalating jitter:
/// `1e-10`, `1e-9`, ... up to `1e-4`.
pub fn factorize<T: Real>(k: DMatrix<T>) -> Result<GramFactor<T>> {
    let mut jitter = JITTER_START;
    while jitter <= JITTER_CAP * (1.0 + 1e-9) {
        let j = T::lit(jitter);
        let mut shifted = k.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += j;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let r = chol.l().transpose();
            return Ok(GramFactor { k, r, jitter: j });
        }
        jitter *= 10.0;
    }
    Err(Error::NumericalFailure(format!(
        "Cholesky factorization of the {n}x{n} Gram matrix failed with jitter up to {JITTER_CAP:e}",
        n = k.nrows()
    )))
}
