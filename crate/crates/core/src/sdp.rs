//! Primal-dual interior-point solver for the kernel sum-of-squares SDP
//!
//! ```text
//! primal:  max  c - μ·Tr(B)      s.t.  J_i - c = r_iᵀ B r_i,  B ⪰ 0
//! dual:    min  Σ β_i J_i         s.t.  Σ β_i = 1,  Z(β) = μI + Σ β_i r_i r_iᵀ ⪰ 0
//! ```
//!
//! where `r_i` is the `i`-th column of the Gram factor `R`. Every constraint
//! matrix `r_i r_iᵀ` is rank one, so the Schur complement of the Newton
//! system is the Hadamard product `(RᵀBR) ∘ (RᵀZ⁻¹R)` and `Σ β_i r_i r_iᵀ` is
//! just `R diag(β) Rᵀ`. The solver is a Mehrotra predictor-corrector method
//! with the HKM search direction, started from a strictly feasible point so
//! that every iterate satisfies weak duality.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::GramFactor;
use crate::scalar::Real;

pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

const STEP_FRACTION: f64 = 0.98;
/// Extra iterations run after convergence; the converged iterate with the
/// smallest complementarity is kept.
const POLISH_ITERS: usize = 15;
const POLISH_TARGET: f64 = 1e-9;

/// SDP instance built from sampled costs and their Gram factor.
#[derive(Debug, Clone)]
pub struct KsosSdpProblem<T: Real> {
    pub costs: DVector<T>,
    pub gram: GramFactor<T>,
    /// Trace regularization μ.
    pub mu: T,
}

impl<T: Real> KsosSdpProblem<T> {
    pub fn new(costs: DVector<T>, gram: GramFactor<T>, mu: T) -> Result<Self> {
        if costs.is_empty() {
            return invalid("the SDP needs at least one sample");
        }
        if costs.len() != gram.len() {
            return invalid(format!(
                "{} costs but a {}x{} Gram matrix",
                costs.len(),
                gram.len(),
                gram.len()
            ));
        }
        if let Some(i) = costs.iter().position(|c| !c.is_finite()) {
            return invalid(format!("cost {i} is not finite"));
        }
        if !(mu > T::zero()) || !mu.is_finite() {
            return invalid(format!("trace regularization must be positive, got {mu}"));
        }
        Ok(Self { costs, gram, mu })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// `Σ β_i r_i r_iᵀ + μI`.
    pub fn dual_slack(&self, beta: &DVector<T>) -> DMatrix<T> {
        let r = &self.gram.r;
        let mut z = scale_columns(r, beta) * r.transpose();
        for i in 0..z.nrows() {
            z[(i, i)] += self.mu;
        }
        symmetrize(&mut z);
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    MaxIters,
    NumericalFailure,
}

impl fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::MaxIters => "max_iters",
            Self::NumericalFailure => "numerical_failure",
        })
    }
}

/// Objective values of one interior-point iterate.
#[derive(Debug, Clone, Copy)]
pub struct IterateRecord<T> {
    pub primal_objective: T,
    pub dual_objective: T,
    /// `⟨B, Z⟩ / N`.
    pub complementarity: T,
    /// `Σ β_i`.
    pub weight_sum: T,
}

#[derive(Debug, Clone)]
pub struct KsosSolution<T: Real> {
    /// Lower-bound value `c`.
    pub c: T,
    /// PSD matrix of the quadratic form.
    pub b: DMatrix<T>,
    /// Dual multipliers β of the equality constraints.
    pub dual_weights: DVector<T>,
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
    pub status: SdpStatus,
    pub iterations: usize,
    pub history: Vec<IterateRecord<T>>,
}

impl<T: Real> KsosSolution<T> {
    pub fn max_residual(&self) -> T {
        self.primal_residual.max(self.dual_residual).max(self.gap.abs())
    }
}

/// Residuals recomputed from `(c, B, β)` alone.
#[derive(Debug, Clone, Copy)]
pub struct KktReport<T> {
    /// `max_i |J_i - c - r_iᵀBr_i|`, or the PSD violation of `B` if larger.
    pub primal_residual: T,
    /// Largest of `|Σβ - 1|` and the PSD violation of `μI + Σ β_i r_i r_iᵀ`.
    pub dual_residual: T,
    /// `|primal objective - dual objective|`.
    pub gap: T,
    pub primal_objective: T,
    pub dual_objective: T,
    pub min_eig_b: T,
    pub min_eig_dual_slack: T,
    pub weight_sum_error: T,
}

impl<T: Real> KktReport<T> {
    pub fn max_residual(&self) -> T {
        self.primal_residual.max(self.dual_residual).max(self.gap.abs())
    }
}

pub fn check_kkt<T: Real>(problem: &KsosSdpProblem<T>, solution: &KsosSolution<T>) -> KktReport<T> {
    kkt_report(problem, solution.c, &solution.b, &solution.dual_weights)
}

fn kkt_report<T: Real>(problem: &KsosSdpProblem<T>, c: T, b: &DMatrix<T>, beta: &DVector<T>) -> KktReport<T> {
    let r = &problem.gram.r;
    let quad = (r.transpose() * b * r).diagonal();
    let eq = problem
        .costs
        .iter()
        .zip(quad.iter())
        .fold(T::zero(), |acc, (&j, &q)| acc.max((j - c - q).abs()));
    let min_eig_b = min_eigenvalue(b);
    let z = problem.dual_slack(beta);
    let min_eig_dual_slack = min_eigenvalue(&z);
    let weight_sum_error = (beta.sum() - T::one()).abs();
    let primal_objective = c - problem.mu * b.trace();
    let dual_objective = beta.dot(&problem.costs);
    KktReport {
        primal_residual: eq.max(-min_eig_b),
        dual_residual: weight_sum_error.max(-min_eig_dual_slack),
        gap: (primal_objective - dual_objective).abs(),
        primal_objective,
        dual_objective,
        min_eig_b,
        min_eig_dual_slack,
        weight_sum_error,
    }
}

#[derive(Clone)]
struct Iterate<T: Real> {
    b: DMatrix<T>,
    c: T,
    beta: DVector<T>,
    z: DMatrix<T>,
}

struct Direction<T: Real> {
    db: DMatrix<T>,
    dc: T,
    dbeta: DVector<T>,
    dz: DMatrix<T>,
}

enum SchurFactor<T: Real> {
    Cholesky(Cholesky<T, nalgebra::Dyn>),
    Lu(nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>),
}

impl<T: Real> SchurFactor<T> {
    fn new(m: DMatrix<T>) -> Option<Self> {
        match Cholesky::new(m.clone()) {
            Some(ch) => Some(Self::Cholesky(ch)),
            None => {
                let lu = m.lu();
                lu.is_invertible().then_some(Self::Lu(lu))
            }
        }
    }

    fn solve(&self, rhs: &DVector<T>) -> Option<DVector<T>> {
        let x = match self {
            Self::Cholesky(ch) => ch.solve(rhs),
            Self::Lu(lu) => lu.solve(rhs)?,
        };
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// Solves the kernel SOS SDP to tolerance `tol` on the residuals reported by
/// [`check_kkt`].
///
/// Costs are shifted to a zero minimum and divided by their spread before the
/// interior-point iterations; the solution is mapped back afterwards. The
/// problem is equivariant under both maps, so this only improves conditioning.
pub fn solve_ksos<T: Real>(problem: &KsosSdpProblem<T>, max_iters: usize, tol: T) -> Result<KsosSolution<T>> {
    if !(tol > T::zero()) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let offset = problem.costs.min();
    let spread = problem.costs.max() - offset;
    let scale = if spread > T::zero() { spread } else { T::one() };
    let normalized = KsosSdpProblem {
        costs: problem.costs.map(|j| (j - offset) / scale),
        gram: problem.gram.clone(),
        mu: problem.mu,
    };
    let inner_tol = tol / scale;
    let mut sol = solve_normalized(&normalized, max_iters, inner_tol);

    sol.c = offset + sol.c * scale;
    sol.b *= scale;
    for rec in &mut sol.history {
        rec.primal_objective = offset + rec.primal_objective * scale;
        rec.dual_objective = offset * rec.weight_sum + rec.dual_objective * scale;
        rec.complementarity *= scale;
    }
    let report = kkt_report(problem, sol.c, &sol.b, &sol.dual_weights);
    sol.primal_residual = report.primal_residual;
    sol.dual_residual = report.dual_residual;
    sol.gap = report.gap;
    Ok(sol)
}

fn solve_normalized<T: Real>(problem: &KsosSdpProblem<T>, max_iters: usize, tol: T) -> KsosSolution<T> {
    let n = problem.len();
    let nf = T::from_usize_lossy(n);
    let r = &problem.gram.r;
    let rt = r.transpose();
    let costs = &problem.costs;

    let mut it = initial_point(problem);
    let mut history = Vec::new();
    let mut status = SdpStatus::MaxIters;
    let mut iterations = 0;
    let mut best: Option<(Iterate<T>, T, usize)> = None;

    for k in 0..=max_iters {
        let report = kkt_report(problem, it.c, &it.b, &it.beta);
        let complementarity = it.b.component_mul(&it.z).sum() / nf;
        history.push(IterateRecord {
            primal_objective: report.primal_objective,
            dual_objective: report.dual_objective,
            complementarity,
            weight_sum: it.beta.sum(),
        });
        if report.max_residual() < tol {
            status = SdpStatus::Optimal;
            match &best {
                Some((_, best_comp, _)) if complementarity >= *best_comp => {}
                _ => {
                    let first = best.as_ref().map_or(k, |b| b.2);
                    best = Some((it.clone(), complementarity, first));
                }
            }
        }
        if let Some((_, best_comp, first)) = &best {
            if *best_comp < tol * T::lit(POLISH_TARGET) || k >= first + POLISH_ITERS {
                break;
            }
        }
        if k == max_iters {
            break;
        }

        let Some(z_chol) = Cholesky::new(it.z.clone()) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let z_inv = z_chol.inverse();
        let p = &rt * &it.b * r;
        let q = &rt * &z_inv * r;
        let Some(schur) = SchurFactor::new(p.component_mul(&q)) else {
            status = SdpStatus::NumericalFailure;
            break;
        };

        let rp = DVector::from_fn(n, |i, _| costs[i] - p[(i, i)] - it.c);
        let rd = problem.dual_slack(&it.beta) - &it.z;
        let rf = T::one() - it.beta.sum();
        let ones = DVector::from_element(n, T::one());
        let Some(schur_ones) = schur.solve(&ones) else {
            status = SdpStatus::NumericalFailure;
            break;
        };

        let ctx = NewtonContext {
            r,
            rt: &rt,
            b: &it.b,
            z_inv: &z_inv,
            rp: &rp,
            rd: &rd,
            rf,
            schur: &schur,
            schur_ones: &schur_ones,
        };

        let mu_now = it.b.component_mul(&it.z).sum() / nf;
        let Some(pred) = ctx.direction(T::zero(), None) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let ap = max_step(&it.b, &pred.db).min(T::one());
        let ad = max_step(&it.z, &pred.dz).min(T::one());
        let mu_aff = (&it.b + &pred.db * ap).component_mul(&(&it.z + &pred.dz * ad)).sum() / nf;
        let ratio = (mu_aff / mu_now).max(T::zero()).min(T::one());
        let centering = ratio * ratio * ratio;

        let Some(dir) = ctx.direction(centering * mu_now, Some((&pred.db, &pred.dz))) else {
            status = SdpStatus::NumericalFailure;
            break;
        };
        let frac = T::lit(STEP_FRACTION);
        let ap = (frac * max_step(&it.b, &dir.db)).min(T::one());
        let ad = (frac * max_step(&it.z, &dir.dz)).min(T::one());

        iterations = k + 1;
        it.b += &dir.db * ap;
        it.c += dir.dc * ap;
        it.beta += &dir.dbeta * ad;
        it.z += &dir.dz * ad;
        symmetrize(&mut it.b);
        symmetrize(&mut it.z);

        if !it.c.is_finite() || it.b.iter().any(|v| !v.is_finite()) {
            status = SdpStatus::NumericalFailure;
            break;
        }
    }

    if let Some((polished, _, _)) = best {
        it = polished;
        status = SdpStatus::Optimal;
    }
    KsosSolution {
        c: it.c,
        b: it.b,
        dual_weights: it.beta,
        primal_residual: T::zero(),
        dual_residual: T::zero(),
        gap: T::zero(),
        status,
        iterations,
        history,
    }
}

/// Strictly feasible primal-dual starting point.
///
/// With `c₀ = min J - s` and `D = diag((J_i - c₀) / K̃_ii)`, the matrix
/// `B₀ = R⁻ᵀ D^½ RᵀR D^½ R⁻¹` is positive definite and satisfies every
/// equality constraint exactly. The dual starts at uniform weights.
fn initial_point<T: Real>(problem: &KsosSdpProblem<T>) -> Iterate<T> {
    let n = problem.len();
    let costs = &problem.costs;
    let r = &problem.gram.r;
    let jmin = costs.min();
    let jmax = costs.max();
    let mean_abs = costs.iter().fold(T::zero(), |a, &j| a + j.abs()) / T::from_usize_lossy(n);
    let mut scale = (jmax - jmin).max(T::lit(1e-3) * mean_abs);
    if !(scale > T::zero()) {
        scale = T::one();
    }
    let c = jmin - scale;

    let sqrt_d = DVector::from_fn(n, |i, _| {
        let kii = r.column(i).norm_squared();
        ((costs[i] - c) / kii).sqrt()
    });
    // Gᵀ = R⁻ᵀ D^½ Rᵀ, so B₀ = GᵀG = Gᵀ (Gᵀ)ᵀ.
    let rhs = scale_rows(&r.transpose(), &sqrt_d);
    let gt = r
        .tr_solve_upper_triangular(&rhs)
        .expect("Cholesky factor has a positive diagonal");
    let mut b = &gt * gt.transpose();
    symmetrize(&mut b);

    let beta = DVector::from_element(n, T::one() / T::from_usize_lossy(n));
    let z = problem.dual_slack(&beta);
    Iterate { b, c, beta, z }
}

struct NewtonContext<'a, T: Real> {
    r: &'a DMatrix<T>,
    rt: &'a DMatrix<T>,
    b: &'a DMatrix<T>,
    z_inv: &'a DMatrix<T>,
    rp: &'a DVector<T>,
    rd: &'a DMatrix<T>,
    rf: T,
    schur: &'a SchurFactor<T>,
    schur_ones: &'a DVector<T>,
}

impl<T: Real> NewtonContext<'_, T> {
    /// HKM direction targeting `BZ = τI`, with an optional Mehrotra
    /// second-order correction `ΔB_aff ΔZ_aff`.
    fn direction(&self, tau: T, corr: Option<(&DMatrix<T>, &DMatrix<T>)>) -> Option<Direction<T>> {
        let n = self.b.nrows();
        let mut w = self.b * self.rd;
        if let Some((db, dz)) = corr {
            w += db * dz;
        }
        let mut g = self.z_inv * tau - self.b - sym(&(w * self.z_inv));
        symmetrize(&mut g);

        let ag = (self.rt * &g * self.r).diagonal();
        let h = ag - self.rp;
        let x = self.schur.solve(&h)?;
        let denom = self.schur_ones.sum();
        if !(denom.abs() > T::zero()) {
            return None;
        }
        let dc = (self.rf - x.sum()) / denom;
        let dbeta = x + self.schur_ones * dc;

        let at_dbeta = scale_columns(self.r, &dbeta) * self.rt;
        let mut dz = self.rd + &at_dbeta;
        symmetrize(&mut dz);
        let mut db = g - sym(&(self.b * &at_dbeta * self.z_inv));
        symmetrize(&mut db);
        debug_assert_eq!(db.nrows(), n);
        Some(Direction { db, dc, dbeta, dz })
    }
}

/// Largest `α` with `X + αΔX ⪰ 0` (infinite when `ΔX ⪰ 0`).
fn max_step<T: Real>(x: &DMatrix<T>, dx: &DMatrix<T>) -> T {
    let Some(chol) = Cholesky::new(x.clone()) else {
        return T::zero();
    };
    let l = chol.l();
    let Some(left) = l.solve_lower_triangular(dx) else {
        return T::zero();
    };
    let Some(s) = l.solve_lower_triangular(&left.transpose()) else {
        return T::zero();
    };
    let lambda_min = min_eigenvalue(&sym(&s));
    if lambda_min >= T::zero() {
        T::infinity()
    } else {
        -T::one() / lambda_min
    }
}

pub(crate) fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    sym(m).symmetric_eigenvalues().min()
}

fn sym<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for j in 0..n {
        for i in 0..j {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn scale_columns<T: Real>(m: &DMatrix<T>, s: &DVector<T>) -> DMatrix<T> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= s[j];
    }
    out
}

fn scale_rows<T: Real>(m: &DMatrix<T>, s: &DVector<T>) -> DMatrix<T> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= s[i];
    }
    out
}
