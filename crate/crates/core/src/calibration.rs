//! Kernel lengthscale selection by Gaussian-process negative log-likelihood:
//! a log-spaced grid search followed by a short descent in `log σ`.

use nalgebra::{Cholesky, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{factorize, kernel_matrix, GramFactor, KernelKind, KernelSpec};
use crate::scalar::Real;

const GRID_POINTS: usize = 16;
const GRID_LOW: f64 = 0.01;
const GRID_HIGH: f64 = 10.0;
const FD_STEP: f64 = 1e-4;
const MAX_LOG_STEP: f64 = 0.5;
const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig<T> {
    /// Candidate lengthscales; derived from the data when `None`.
    pub grid: Option<Vec<T>>,
    /// Diagonal noise; `1e-6 · var(y)` when `None`.
    pub noise_var: Option<T>,
    pub refine_steps: usize,
    /// Gradient step in log-lengthscale space.
    pub refine_rate: T,
}

impl<T: Real> Default for CalibrationConfig<T> {
    fn default() -> Self {
        Self {
            grid: None,
            noise_var: None,
            refine_steps: 20,
            refine_rate: T::lit(0.1),
        }
    }
}

impl<T: Real> CalibrationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                return Err(Error::Config("calibration grid is empty".into()));
            }
            if grid.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
                return Err(Error::Config("calibration grid values must be positive".into()));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("calibration grid must be strictly increasing".into()));
            }
        }
        if let Some(nu) = self.noise_var {
            if !(nu >= T::zero()) || !nu.is_finite() {
                return Err(Error::Config(format!("noise_var must be non-negative, got {nu}")));
            }
        }
        if !(self.refine_rate > T::zero()) {
            return Err(Error::Config("refine_rate must be positive".into()));
        }
        Ok(())
    }
}

/// `½ yᵀ(K + νI)⁻¹y + ½ log|K + νI| + (N/2) log 2π`. Diagonal jitter is
/// added only if `K + νI` does not factorize as is.
pub fn nll<T: Real>(spec: &KernelSpec<T>, points: &[DVector<T>], y: &DVector<T>, noise_var: T) -> Result<T> {
    if points.len() != y.len() {
        return invalid(format!("{} points but {} targets", points.len(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return invalid("targets must be finite");
    }
    let mut k = kernel_matrix(spec, points)?;
    for i in 0..k.nrows() {
        k[(i, i)] += noise_var;
    }
    let f = match Cholesky::new(k.clone()) {
        Some(chol) => GramFactor {
            r: chol.l().transpose(),
            k,
            jitter: T::zero(),
        },
        None => factorize(k)?,
    };
    let alpha = f.solve_rt(y);
    let half = T::lit(0.5);
    Ok(half * alpha.norm_squared() + half * f.log_det() + half * T::from_usize_lossy(y.len()) * T::two_pi().ln())
}

/// Median of the pairwise distances under the kernel's own metric.
pub fn median_pairwise_distance<T: Real>(spec: &KernelSpec<T>, points: &[DVector<T>]) -> T {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for j in 0..points.len() {
        for i in 0..j {
            d.push(spec.distance(&points[i], &points[j]));
        }
    }
    if d.is_empty() {
        return T::zero();
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) * T::lit(0.5)
    }
}

/// 16 log-spaced values over `[0.01, 10] ×` the median pairwise distance.
pub fn default_grid<T: Real>(spec: &KernelSpec<T>, points: &[DVector<T>]) -> Vec<T> {
    let mut scale = median_pairwise_distance(spec, points);
    if !(scale > T::zero()) {
        scale = T::one();
    }
    let (lo, hi) = (GRID_LOW.ln(), GRID_HIGH.ln());
    (0..GRID_POINTS)
        .map(|i| {
            let t = i as f64 / (GRID_POINTS - 1) as f64;
            scale * T::lit((lo + t * (hi - lo)).exp())
        })
        .collect()
}

fn variance<T: Real>(y: &DVector<T>) -> T {
    let n = T::from_usize_lossy(y.len());
    let mean = y.sum() / n;
    y.iter()
        .map(|v| (*v - mean) * (*v - mean))
        .fold(T::zero(), |a, b| a + b)
        / n
}

#[derive(Debug, Clone)]
pub struct Calibration<T: Real> {
    pub spec: KernelSpec<T>,
    pub nll: T,
    /// NLL for each grid value, `None` where the factorization failed.
    pub grid: Vec<(T, Option<T>)>,
}

pub fn auto_calibrate<T: Real>(
    points: &[DVector<T>],
    y: &DVector<T>,
    kind: KernelKind,
    cfg: &CalibrationConfig<T>,
) -> Result<Calibration<T>> {
    cfg.validate()?;
    let base = KernelSpec::new(kind, T::one())?;
    let grid = match &cfg.grid {
        Some(g) => g.clone(),
        None => default_grid(&base, points),
    };
    let noise = cfg.noise_var.unwrap_or_else(|| T::lit(1e-6) * variance(y));
    let eval = |s: T| {
        nll(&base.with_lengthscale(s), points, y, noise)
            .ok()
            .filter(|v| v.is_finite())
    };

    let values: Vec<Option<T>> = grid.par_iter().map(|&s| eval(s)).collect();
    let mut best: Option<(T, T)> = None;
    for (&s, v) in grid.iter().zip(&values) {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((s, v));
            }
        }
    }
    let Some((s0, v0)) = best else {
        return Err(Error::Config(
            "NLL could not be evaluated at any grid lengthscale".into(),
        ));
    };

    let h = T::lit(FD_STEP);
    let max_step = T::lit(MAX_LOG_STEP);
    let (mut log_s, mut current) = (s0.ln(), v0);
    'refine: for _ in 0..cfg.refine_steps {
        let (Some(up), Some(down)) = (eval((log_s + h).exp()), eval((log_s - h).exp())) else {
            break;
        };
        let g = (up - down) / (h + h);
        let mut step = (-cfg.refine_rate * g).max(-max_step).min(max_step);
        for _ in 0..=MAX_HALVINGS {
            if let Some(v) = eval((log_s + step).exp()) {
                if v < current {
                    log_s += step;
                    current = v;
                    continue 'refine;
                }
            }
            step *= T::lit(0.5);
        }
        break;
    }

    Ok(Calibration {
        spec: base.with_lengthscale(log_s.exp()),
        nll: current,
        grid: grid.into_iter().zip(values).collect(),
    })
}
