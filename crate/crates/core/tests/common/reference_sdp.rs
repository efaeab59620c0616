//! Slow reference solver for the kernel SOS SDP, used as a test oracle.
//!
//! Log-barrier method on the dual problem
//!     min  Σ β_i J_i   s.t.  Σ β_i = 1,  Z(β) = μI + Σ β_i r_i r_iᵀ ≻ 0
//! with dense eigendecompositions for the barrier. At a barrier-central point
//! the primal pair is recovered as `B = Z⁻¹/t`, `c = J_i - r_iᵀBr_i`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub struct ReferenceSolution {
    pub c: f64,
    pub b: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub dual_objective: f64,
}

fn slack(r: &DMatrix<f64>, mu: f64, beta: &DVector<f64>) -> DMatrix<f64> {
    let n = r.nrows();
    let mut z = DMatrix::<f64>::identity(n, n) * mu;
    for i in 0..beta.len() {
        let col = r.column(i);
        z += col * col.transpose() * beta[i];
    }
    (&z + z.transpose()) * 0.5
}

/// Returns `(log det Z, Z⁻¹)` or `None` when `Z` is not positive definite.
fn barrier_parts(z: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(z.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let logdet = eig.eigenvalues.iter().map(|l| l.ln()).sum();
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Some((logdet, inv))
}

pub fn solve_reference(costs: &DVector<f64>, r: &DMatrix<f64>, mu: f64) -> ReferenceSolution {
    let n = costs.len();
    let mut beta = DVector::from_element(n, 1.0 / n as f64);
    let mut t = 1.0;
    let basis = zero_sum_basis(n);
    loop {
        for _ in 0..200 {
            if n == 1 {
                break;
            }
            let z = slack(r, mu, &beta);
            let (_, z_inv) = barrier_parts(&z).expect("iterate stays interior");
            let w = r.transpose() * &z_inv * r;
            let grad = DVector::from_fn(n, |i, _| t * costs[i] - w[(i, i)]);
            let hess = w.component_mul(&w);
            // Newton step restricted to {Δ : Σ Δ_i = 0}, solved in an orthonormal
            // basis of that subspace with a dense eigendecomposition.
            let hr = basis.transpose() * &hess * &basis;
            let gr = basis.transpose() * &grad;
            let eig = SymmetricEigen::new((&hr + hr.transpose()) * 0.5);
            let proj = eig.eigenvectors.transpose() * &gr;
            let coeffs = DVector::from_fn(proj.len(), |k, _| -proj[k] / eig.eigenvalues[k]);
            let step = &basis * (&eig.eigenvectors * &coeffs);
            let decrement: f64 = (0..proj.len()).map(|k| proj[k] * proj[k] / eig.eigenvalues[k]).sum();
            if decrement < 1e-22 {
                break;
            }
            // Damped Newton step for a self-concordant barrier: never leaves the domain.
            let lambda = decrement.max(0.0).sqrt();
            let mut alpha = if lambda < 0.25 { 1.0 } else { 1.0 / (1.0 + lambda) };
            // Rounding can still push a step onto the boundary; back off if so.
            while barrier_parts(&slack(r, mu, &(&beta + &step * alpha))).is_none() {
                alpha *= 0.5;
            }
            beta += &step * alpha;
        }
        if n as f64 / t < 1e-6 {
            break;
        }
        t *= 8.0;
    }
    let z = slack(r, mu, &beta);
    let (_, z_inv) = barrier_parts(&z).unwrap();
    let b = z_inv / t;
    let quad = (r.transpose() * &b * r).diagonal();
    let c = (0..n).map(|i| costs[i] - quad[i]).sum::<f64>() / n as f64;
    ReferenceSolution {
        c,
        b,
        dual_objective: beta.dot(costs),
        beta,
    }
}

/// Orthonormal basis (n × (n-1)) of the vectors whose entries sum to zero.
fn zero_sum_basis(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::identity(n, n);
    m.column_mut(0).fill(1.0 / (n as f64).sqrt());
    let q = m.qr().q();
    q.columns(1, n - 1).into_owned()
}
