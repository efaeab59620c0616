//! Cubic-spline parameterization of a control sequence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Boundary condition of the interpolating spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndCondition {
    /// Zero second derivative at both ends.
    #[default]
    Natural,
    /// Zero first derivative at both ends.
    Clamped,
}

/// Interpolating cubic spline through `P` control points at uniform knots on
/// `[0, horizon]`, one column per actuated dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpline<T: Real> {
    points: DMatrix<T>,
    horizon: T,
    dt: T,
    end: EndCondition,
    second: DMatrix<T>,
}

impl<T: Real> ControlSpline<T> {
    pub fn new(points: DMatrix<T>, horizon: T, dt: T, end: EndCondition) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return invalid("a spline needs at least one control point and one dimension");
        }
        if !(horizon > T::zero()) || !(dt > T::zero()) || dt > horizon {
            return invalid(format!("invalid horizon {horizon} / time step {dt}"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return invalid("control points must be finite");
        }
        let second = second_derivatives(&points, horizon, end);
        Ok(Self {
            points,
            horizon,
            dt,
            end,
            second,
        })
    }

    /// Builds the spline from a decision vector laid out point by point:
    /// `u[k * m + j]` is dimension `j` of control point `k`.
    pub fn from_flat(u: &DVector<T>, n_points: usize, horizon: T, dt: T, end: EndCondition) -> Result<Self> {
        if n_points == 0 || !u.len().is_multiple_of(n_points) {
            return invalid(format!(
                "decision vector of length {} does not split into {n_points} control points",
                u.len()
            ));
        }
        let m = u.len() / n_points;
        Self::new(DMatrix::from_fn(n_points, m, |k, j| u[k * m + j]), horizon, dt, end)
    }

    pub fn to_flat(&self) -> DVector<T> {
        let (p, m) = self.points.shape();
        DVector::from_fn(p * m, |i, _| self.points[(i / m, i % m)])
    }

    pub fn control_points(&self) -> &DMatrix<T> {
        &self.points
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn end_condition(&self) -> EndCondition {
        self.end
    }

    /// Number of `dt` steps covering the horizon.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0).max(1)
    }

    pub fn knot(&self, k: usize) -> T {
        let p = self.points.nrows();
        if p == 1 {
            return T::zero();
        }
        self.horizon * T::from_usize_lossy(k) / T::from_usize_lossy(p - 1)
    }

    /// Spline value at time `t`; times outside `[0, horizon]` are clamped.
    pub fn eval(&self, t: T) -> DVector<T> {
        let (p, m) = self.points.shape();
        if p == 1 {
            return self.points.row(0).transpose();
        }
        let t = t.max(T::zero()).min(self.horizon);
        let h = self.horizon / T::from_usize_lossy(p - 1);
        let k = (t / h).floor().to_usize().unwrap_or(0).min(p - 2);
        let a = (self.knot(k + 1) - t) / h;
        let b = T::one() - a;
        let six = T::lit(6.0);
        DVector::from_fn(m, |j, _| {
            let (y0, y1) = (self.points[(k, j)], self.points[(k + 1, j)]);
            let (m0, m1) = (self.second[(k, j)], self.second[(k + 1, j)]);
            a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / six
        })
    }

    /// Values at `t = 0, dt, ..., n_steps·dt`.
    pub fn sample(&self) -> Vec<DVector<T>> {
        (0..=self.n_steps())
            .map(|i| self.eval(self.dt * T::from_usize_lossy(i)))
            .collect()
    }

    /// Receding-horizon shift of the control points.
    pub fn shifted(&self) -> Self {
        let points = receding_shift(&self.points);
        let second = second_derivatives(&points, self.horizon, self.end);
        Self {
            points,
            second,
            ..self.clone()
        }
    }
}

/// Drops the first control point, moves the rest forward and repeats the last.
pub fn receding_shift<T: Real>(points: &DMatrix<T>) -> DMatrix<T> {
    let p = points.nrows();
    DMatrix::from_fn(p, points.ncols(), |k, j| points[((k + 1).min(p - 1), j)])
}

/// Second derivatives at the knots from the tridiagonal spline system.
fn second_derivatives<T: Real>(points: &DMatrix<T>, horizon: T, end: EndCondition) -> DMatrix<T> {
    let (p, m) = points.shape();
    let mut out = DMatrix::zeros(p, m);
    if p < 3 && end == EndCondition::Natural || p < 2 {
        return out;
    }
    let h = horizon / T::from_usize_lossy(p - 1);
    let six_h2 = T::lit(6.0) / (h * h);
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));

    // Rows of the tridiagonal system (sub, diag, sup) for unknowns 0..p.
    let mut sub = vec![T::zero(); p];
    let mut diag = vec![one; p];
    let mut sup = vec![T::zero(); p];
    for k in 1..p - 1 {
        sub[k] = one;
        diag[k] = four;
        sup[k] = one;
    }
    if end == EndCondition::Clamped {
        diag[0] = two;
        sup[0] = one;
        sub[p - 1] = one;
        diag[p - 1] = two;
    }

    for j in 0..m {
        let y = |k: usize| points[(k, j)];
        let mut rhs = vec![T::zero(); p];
        for (k, r) in rhs.iter_mut().enumerate().take(p - 1).skip(1) {
            *r = six_h2 * (y(k + 1) - two * y(k) + y(k - 1));
        }
        if end == EndCondition::Clamped {
            rhs[0] = six_h2 * (y(1) - y(0));
            rhs[p - 1] = -six_h2 * (y(p - 1) - y(p - 2));
        }
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        for k in 0..p {
            out[(k, j)] = x[k];
        }
    }
    out
}

/// Thomas algorithm; the systems built above are diagonally dominant.
fn solve_tridiagonal<T: Real>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spline(points: Vec<f64>, m: usize, end: EndCondition) -> ControlSpline<f64> {
        let p = points.len() / m;
        ControlSpline::new(DMatrix::from_row_slice(p, m, &points), 1.0, 0.01, end).unwrap()
    }

    #[test]
    fn constant_points_give_constant_spline() {
        let s = spline(vec![0.7, -0.2, 0.7, -0.2, 0.7, -0.2], 2, EndCondition::Natural);
        for i in 0..=20 {
            let v = s.eval(i as f64 / 20.0);
            assert!((v[0] - 0.7).abs() < 1e-15 && (v[1] + 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn natural_spline_hand_value() {
        // Knots 0, 1/3, 2/3, 1; second derivatives -28.8 and 7.2 at the interior knots.
        let s = spline(vec![0.0, 1.0, 0.0, -1.0], 1, EndCondition::Natural);
        assert!((s.eval(0.5)[0] - 0.65).abs() < 1e-12);
    }

    #[test]
    fn natural_spline_matches_dense_solve() {
        // Independent construction: solve for the 4 cubic coefficients of each
        // of the 3 segments with a dense 12x12 system.
        let y = [0.0, 1.0, 0.0, -1.0];
        let h: f64 = 1.0 / 3.0;
        let mut a = DMatrix::<f64>::zeros(12, 12);
        let mut b = DVector::<f64>::zeros(12);
        let mut row = 0;
        // Segment s: c0 + c1 x + c2 x² + c3 x³ with local x ∈ [0, h].
        for s in 0..3 {
            a[(row, 4 * s)] = 1.0;
            b[row] = y[s];
            row += 1;
            for p in 0..4 {
                a[(row, 4 * s + p)] = h.powi(p as i32);
            }
            b[row] = y[s + 1];
            row += 1;
        }
        for s in 0..2 {
            // first derivative continuity
            a[(row, 4 * s + 1)] = 1.0;
            a[(row, 4 * s + 2)] = 2.0 * h;
            a[(row, 4 * s + 3)] = 3.0 * h * h;
            a[(row, 4 * (s + 1) + 1)] = -1.0;
            row += 1;
            // second derivative continuity
            a[(row, 4 * s + 2)] = 2.0;
            a[(row, 4 * s + 3)] = 6.0 * h;
            a[(row, 4 * (s + 1) + 2)] = -2.0;
            row += 1;
        }
        a[(row, 2)] = 2.0;
        row += 1;
        a[(row, 4 * 2 + 2)] = 2.0;
        a[(row, 4 * 2 + 3)] = 6.0 * h;
        let coef = a.lu().solve(&b).unwrap();
        let x = 0.5 - h;
        let expected = coef[4] + coef[5] * x + coef[6] * x * x + coef[7] * x * x * x;

        let s = spline(y.to_vec(), 1, EndCondition::Natural);
        assert!((s.eval(0.5)[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn clamped_ends_have_zero_slope() {
        let s = spline(vec![0.0, 1.0, -0.5, 2.0], 1, EndCondition::Clamped);
        let eps = 1e-6;
        let d0 = (s.eval(eps)[0] - s.eval(0.0)[0]) / eps;
        let d1 = (s.eval(1.0)[0] - s.eval(1.0 - eps)[0]) / eps;
        assert!(d0.abs() < 1e-4 && d1.abs() < 1e-4);
    }

    #[test]
    fn times_are_clamped() {
        let s = spline(vec![1.0, 2.0, 4.0], 1, EndCondition::Natural);
        assert_eq!(s.eval(-1.0)[0], s.eval(0.0)[0]);
        assert_eq!(s.eval(3.0)[0], s.eval(1.0)[0]);
        assert_eq!(s.sample().len(), 101);
    }

    #[test]
    fn flat_round_trip_and_dimensions() {
        let u = DVector::from_fn(12, |i, _| i as f64);
        let s = ControlSpline::from_flat(&u, 6, 1.0, 0.01, EndCondition::Natural).unwrap();
        assert_eq!(s.control_points().shape(), (6, 2));
        assert_eq!(s.control_points()[(1, 0)], 2.0);
        assert_eq!(s.to_flat(), u);
        assert!(ControlSpline::from_flat(&u, 5, 1.0, 0.01, EndCondition::Natural).is_err());
    }

    #[test]
    fn shift_examples() {
        let pts = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(receding_shift(&pts), DMatrix::from_row_slice(3, 1, &[2.0, 3.0, 3.0]));
        let same = DMatrix::from_element(4, 2, 0.3);
        assert_eq!(receding_shift(&same), same);
        let mut p = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 6.0, 3.0, 7.0, 4.0, 8.0]);
        for _ in 0..4 {
            p = receding_shift(&p);
        }
        assert!(p.row_iter().all(|r| r[0] == 4.0 && r[1] == 8.0));
    }

    proptest! {
        #[test]
        fn interpolates_at_knots(vals in prop::collection::vec(-10.0f64..10.0, 2..24),
                                 clamped in any::<bool>()) {
            let m = 2;
            let p = vals.len() / m;
            prop_assume!(p >= 1);
            let end = if clamped { EndCondition::Clamped } else { EndCondition::Natural };
            let s = spline(vals[..p * m].to_vec(), m, end);
            for k in 0..p {
                let v = s.eval(s.knot(k));
                for j in 0..m {
                    prop_assert!((v[j] - vals[k * m + j]).abs() < 1e-10);
                }
            }
        }
    }
}
