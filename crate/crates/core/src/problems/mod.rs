//! Benchmark problems and the cost-evaluation interface used by every optimizer.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;

use crate::error::{invalid, Result};
use crate::scalar::Real;

pub mod benchmarks;
pub mod pose;
pub mod pusher;
pub mod spline;

pub use benchmarks::{benchmark_suite, problem_by_name, problem_names, reference_optimum};
pub use pose::{so2_error, so3_error, Pose2};
pub use spline::ControlSpline;

/// Axis-aligned box of admissible control vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<T: Real> {
    lower: DVector<T>,
    upper: DVector<T>,
}

impl<T: Real> Bounds<T> {
    pub fn new(lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return invalid(format!(
                "bound vectors differ in length ({} vs {})",
                lower.len(),
                upper.len()
            ));
        }
        if lower.is_empty() {
            return invalid("bounds must have at least one dimension");
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() || lower[i] > upper[i] {
                return invalid(format!("invalid bounds [{}, {}] in dimension {i}", lower[i], upper[i]));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` in each of `dim` dimensions.
    pub fn uniform(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(DVector::from_element(dim, lo), DVector::from_element(dim, hi))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<T> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<T> {
        &self.upper
    }

    /// `0.5 (u_max + u_min)`.
    pub fn center(&self) -> DVector<T> {
        (&self.lower + &self.upper) * T::lit(0.5)
    }

    /// `0.5 (u_max - u_min)`.
    pub fn half_width(&self) -> DVector<T> {
        (&self.upper - &self.lower) * T::lit(0.5)
    }

    pub fn clip(&self, u: &DVector<T>) -> DVector<T> {
        DVector::from_fn(u.len(), |i, _| {
            let v = u[i];
            if v < self.lower[i] {
                self.lower[i]
            } else if v > self.upper[i] {
                self.upper[i]
            } else {
                v
            }
        })
    }

    pub fn contains(&self, u: &DVector<T>) -> bool {
        u.len() == self.dim() && (0..u.len()).all(|i| u[i] >= self.lower[i] && u[i] <= self.upper[i])
    }
}

/// A bounded, deterministic cost function of a control vector.
///
/// `evaluate` may return `+∞` for an infeasible rollout; callers treat any
/// non-finite value that way.
pub trait Problem<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    fn bounds(&self) -> &Bounds<T>;

    fn evaluate(&self, u: &DVector<T>) -> T;

    fn dim(&self) -> usize {
        self.bounds().dim()
    }

    /// Initial nominal control.
    fn initial(&self) -> DVector<T> {
        self.bounds().center()
    }

    /// Receding-horizon shift of a decision vector. Problems without a time
    /// structure keep the vector unchanged.
    fn shift(&self, u: &DVector<T>) -> DVector<T> {
        u.clone()
    }
}

impl<T: Real, P: Problem<T> + ?Sized> Problem<T> for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn bounds(&self) -> &Bounds<T> {
        (**self).bounds()
    }
    fn evaluate(&self, u: &DVector<T>) -> T {
        (**self).evaluate(u)
    }
    fn initial(&self) -> DVector<T> {
        (**self).initial()
    }
    fn shift(&self, u: &DVector<T>) -> DVector<T> {
        (**self).shift(u)
    }
}

impl<T: Real, P: Problem<T> + ?Sized> Problem<T> for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn bounds(&self) -> &Bounds<T> {
        (**self).bounds()
    }
    fn evaluate(&self, u: &DVector<T>) -> T {
        (**self).evaluate(u)
    }
    fn initial(&self) -> DVector<T> {
        (**self).initial()
    }
    fn shift(&self, u: &DVector<T>) -> DVector<T> {
        (**self).shift(u)
    }
}

/// A problem defined by a closure.
pub struct FnProblem<T: Real, F> {
    name: String,
    bounds: Bounds<T>,
    f: F,
}

impl<T: Real, F> FnProblem<T, F>
where
    F: Fn(&DVector<T>) -> T + Send + Sync,
{
    pub fn new(name: impl Into<String>, bounds: Bounds<T>, f: F) -> Self {
        Self {
            name: name.into(),
            bounds,
            f,
        }
    }
}

impl<T: Real, F> Problem<T> for FnProblem<T, F>
where
    F: Fn(&DVector<T>) -> T + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }
    fn bounds(&self) -> &Bounds<T> {
        &self.bounds
    }
    fn evaluate(&self, u: &DVector<T>) -> T {
        (self.f)(u)
    }
}

impl<T: Real, F> fmt::Debug for FnProblem<T, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnProblem").field("name", &self.name).finish()
    }
}

/// Wraps a problem and counts calls to `evaluate`.
pub struct CountingProblem<P> {
    inner: P,
    count: AtomicU64,
}

impl<P> CountingProblem<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<T: Real, P: Problem<T>> Problem<T> for CountingProblem<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn bounds(&self) -> &Bounds<T> {
        self.inner.bounds()
    }
    fn evaluate(&self, u: &DVector<T>) -> T {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(u)
    }
    fn initial(&self) -> DVector<T> {
        self.inner.initial()
    }
    fn shift(&self, u: &DVector<T>) -> DVector<T> {
        self.inner.shift(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_geometry() {
        let b = Bounds::new(DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![3.0, 2.0])).unwrap();
        assert_eq!(b.center(), DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(b.half_width(), DVector::from_vec(vec![2.0, 1.0]));
        let clipped = b.clip(&DVector::from_vec(vec![5.0, -1.0]));
        assert_eq!(clipped, DVector::from_vec(vec![3.0, 0.0]));
        assert!(b.contains(&clipped));
        assert!(!b.contains(&DVector::from_vec(vec![0.0])));
    }

    #[test]
    fn bounds_reject_bad_input() {
        assert!(Bounds::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.0])).is_err());
        assert!(Bounds::new(DVector::from_vec(vec![0.0]), DVector::from_vec(vec![f64::NAN])).is_err());
        assert!(Bounds::<f64>::uniform(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn counting_wrapper_counts() {
        let p = FnProblem::new("sq", Bounds::uniform(1, -1.0, 1.0).unwrap(), |u: &DVector<f64>| {
            u[0] * u[0]
        });
        let c = CountingProblem::new(p);
        for _ in 0..3 {
            c.evaluate(&DVector::from_element(1, 0.5));
        }
        assert_eq!(c.count(), 3);
        assert_eq!(c.shift(&DVector::from_element(1, 0.2))[0], 0.2);
    }
}
