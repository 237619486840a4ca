//! Small dense conic feasibility solver for trace-normalized PSD problems.
//!
//! Every inequality `Tr(X G) ≥ b` / `≤ b` is first homogenized with the trace
//! equality (`G ← G − b I`), sign-flipped into the form `Tr(X F) ≤ 0` and
//! scaled to unit Frobenius norm. The solver then computes the worst-violation
//! margin
//!
//! ```text
//! s* = min { s : Tr(X F_c) ≤ s ∀c,  Tr X = 1,  X ⪰ 0 }
//! ```
//!
//! by ADMM (OSQP-style splitting: a cached `(d+1)×(d+1)` Cholesky solve for
//! the affine part, eigenvalue clipping for the PSD cone). The problem is
//! always feasible and bounded, so no divergence detection is needed. The
//! verdict is taken from two bounds that are checked outside the iteration:
//!
//! * any PSD `X̂` with unit trace gives `s* ≤ max_c Tr(X̂ F_c)`;
//! * any `λ` on the simplex gives `s* ≥ λ_min(Σ λ_c F_c)` (a Farkas-type
//!   certificate once it is positive).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{FeasibilityVerdict, Sense, TraceLP, VerdictStatus, Certificate};
use crate::lti::{symmetrize, Matrix};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const ALPHA: f64 = 1.6;
const SIGMA: f64 = 1e-6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;

fn svec(x: &Matrix) -> Vec<f64> {
    let n = x.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push(if i == j { x[(i, i)] } else { SQRT2 * x[(i, j)] });
        }
    }
    out
}

fn smat(v: &[f64], n: usize) -> Matrix {
    let mut x = Matrix::zeros(n, n);
    let mut p = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                x[(i, i)] = v[p];
            } else {
                x[(i, j)] = v[p] / SQRT2;
                x[(j, i)] = v[p] / SQRT2;
            }
            p += 1;
        }
    }
    x
}

fn project_psd(x: &Matrix) -> Matrix {
    let eig = symmetrize(x).symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    v * Matrix::from_diagonal(&clipped) * v.transpose()
}

fn trace_inner(x: &Matrix, f: &Matrix) -> f64 {
    x.component_mul(f).sum()
}

/// Constraints as unit-norm `F_c` with `Tr(X F_c) ≤ 0`, plus the index of the
/// original constraint each came from.
pub(super) fn normalized_forms(p: &TraceLP) -> Vec<(usize, Matrix)> {
    let n = p.dim;
    let id = Matrix::identity(n, n);
    let mut out = Vec::new();
    for (idx, c) in p.constraints.iter().enumerate() {
        let f = match c.sense {
            Sense::AtLeast(b) => -(&c.g - &id * b),
            Sense::AtMost(b) => &c.g - &id * b,
            Sense::Equal(_) => continue,
        };
        let norm = f.norm();
        if norm == 0.0 {
            // 0 ≤ 0 always holds
            continue;
        }
        out.push((idx, symmetrize(&(f / norm))));
    }
    out
}

/// Upper bound on the margin from a candidate `X` (projected and trace-normalized).
fn primal_bound(x: &Matrix, forms: &[(usize, Matrix)]) -> Option<(f64, Matrix)> {
    let x = project_psd(x);
    let t = x.trace();
    if t <= 1e-12 {
        return None;
    }
    let x = x / t;
    let worst = forms.iter().map(|(_, f)| trace_inner(&x, f)).fold(f64::NEG_INFINITY, f64::max);
    Some((worst, x))
}

/// Lower bound on the margin from inequality multipliers.
fn dual_bound(y: &[f64], forms: &[(usize, Matrix)], n: usize) -> Option<(f64, Vec<f64>)> {
    let lam: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let sum: f64 = lam.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return None;
    }
    let lam: Vec<f64> = lam.iter().map(|v| v / sum).collect();
    let mut comb = Matrix::zeros(n, n);
    for (l, (_, f)) in lam.iter().zip(forms) {
        comb += f * *l;
    }
    Some((crate::lti::lambda_min(&comb), lam))
}

struct Kkt {
    a: DMatrix<f64>,
    rho: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Kkt {
    fn new(a: DMatrix<f64>, rho_base: f64) -> Self {
        let m = a.nrows();
        let mut rho = DVector::from_element(m, rho_base);
        rho[0] = 1e3 * rho_base;
        let chol = Self::factor(&a, &rho);
        Kkt { a, rho, chol }
    }

    fn factor(a: &DMatrix<f64>, rho: &DVector<f64>) -> Cholesky<f64, Dyn> {
        let nx = a.ncols();
        let mut k = DMatrix::identity(nx, nx) * SIGMA;
        for (r, row) in a.row_iter().enumerate() {
            let rt = row.transpose();
            k += &rt * row * rho[r];
        }
        Cholesky::new(k).expect("σI + AᵀρA is positive definite")
    }

    fn rescale(&mut self, factor: f64) {
        self.rho *= factor;
        self.chol = Self::factor(&self.a, &self.rho);
    }
}

pub(super) fn solve(p: &TraceLP, tol: f64, max_iter: usize) -> FeasibilityVerdict {
    let n = p.dim;
    let forms = normalized_forms(p);
    let m = forms.len();
    let centre = Matrix::identity(n, n) / n as f64;
    if m == 0 {
        return FeasibilityVerdict {
            status: VerdictStatus::Feasible,
            certificate: Some(Certificate::Primal(centre)),
            residual: 0.0,
            iterations: 0,
        };
    }
    // The centre of the spectraplex often settles the question outright.
    if let Some((upper, x)) = primal_bound(&centre, &forms) {
        if upper <= tol {
            return FeasibilityVerdict {
                status: VerdictStatus::Feasible,
                certificate: Some(Certificate::Primal(x)),
                residual: upper,
                iterations: 0,
            };
        }
    }

    let d = n * (n + 1) / 2;
    let nx = d + 1;
    let rows = 1 + m + d;
    let mut a = DMatrix::zeros(rows, nx);
    for (c, v) in svec(&Matrix::identity(n, n)).into_iter().enumerate() {
        a[(0, c)] = v;
    }
    for (r, (_, f)) in forms.iter().enumerate() {
        for (c, v) in svec(f).into_iter().enumerate() {
            a[(1 + r, c)] = v;
        }
        a[(1 + r, d)] = -1.0;
    }
    for c in 0..d {
        a[(1 + m + c, c)] = 1.0;
    }
    let mut q = DVector::zeros(nx);
    q[d] = 1.0;

    let project = |v: &mut DVector<f64>| {
        v[0] = 1.0;
        for r in 1..=m {
            v[r] = v[r].min(0.0);
        }
        let block: Vec<f64> = v.rows(1 + m, d).iter().copied().collect();
        let proj = svec(&project_psd(&smat(&block, n)));
        v.rows_mut(1 + m, d).copy_from_slice(&proj);
    };

    let mut kkt = Kkt::new(a, 0.1);
    let mut x = DVector::zeros(nx);
    for (c, v) in svec(&centre).into_iter().enumerate() {
        x[c] = v;
    }
    let mut z = &kkt.a * &x;
    project(&mut z);
    let mut y: DVector<f64> = DVector::zeros(rows);

    let mut best_upper = f64::INFINITY;
    let mut best_x = centre.clone();
    for it in 1..=max_iter {
        let rhs = &x * SIGMA - &q + kkt.a.transpose() * (kkt.rho.component_mul(&z) - &y);
        let x_tilde = kkt.chol.solve(&rhs);
        let z_tilde = &kkt.a * &x_tilde;
        x = &x_tilde * ALPHA + &x * (1.0 - ALPHA);
        let z_relaxed = &z_tilde * ALPHA + &z * (1.0 - ALPHA);
        let mut z_next = &z_relaxed + y.component_div(&kkt.rho);
        project(&mut z_next);
        y += kkt.rho.component_mul(&(&z_relaxed - &z_next));
        z = z_next;

        if it % CHECK_EVERY == 0 {
            let block: Vec<f64> = z.rows(1 + m, d).iter().copied().collect();
            if let Some((upper, xh)) = primal_bound(&smat(&block, n), &forms) {
                if upper < best_upper {
                    best_upper = upper;
                    best_x = xh;
                }
            }
            if best_upper <= tol {
                return FeasibilityVerdict {
                    status: VerdictStatus::Feasible,
                    certificate: Some(Certificate::Primal(best_x)),
                    residual: best_upper,
                    iterations: it,
                };
            }
            let y_ineq: Vec<f64> = y.rows(1, m).iter().copied().collect();
            if let Some((lower, lam)) = dual_bound(&y_ineq, &forms, n) {
                if lower > tol {
                    let mut multipliers = vec![0.0; p.constraints.len()];
                    for (l, (idx, _)) in lam.iter().zip(&forms) {
                        multipliers[*idx] = *l;
                    }
                    return FeasibilityVerdict {
                        status: VerdictStatus::Infeasible,
                        certificate: Some(Certificate::Dual { multipliers, margin: lower }),
                        residual: lower,
                        iterations: it,
                    };
                }
            }
        }

        if it % ADAPT_EVERY == 0 {
            let ax = &kkt.a * &x;
            let r_prim = (&ax - &z).amax();
            let r_dual = (&q + kkt.a.transpose() * &y).amax();
            let prim_scale = ax.amax().max(z.amax()).max(1e-12);
            let dual_scale = (kkt.a.transpose() * &y).amax().max(1.0);
            let ratio = ((r_prim / prim_scale) / (r_dual / dual_scale).max(1e-12)).sqrt();
            if ratio.is_finite() && (ratio > 5.0 || ratio < 0.2) {
                let target = (kkt.rho[1] * ratio).clamp(1e-6, 1e6);
                kkt.rescale(target / kkt.rho[1]);
            }
        }
    }
    FeasibilityVerdict {
        status: VerdictStatus::Unknown,
        certificate: Some(Certificate::Primal(best_x)),
        residual: best_upper,
        iterations: max_iter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_preserves_inner_products() {
        let a = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, -1.0, 0.5, 3.0, 0.5, 4.0]);
        let b = Matrix::from_row_slice(3, 3, &[0.0, 1.0, -2.0, 1.0, 2.0, 0.0, -2.0, 0.0, 1.0]);
        let dot: f64 = svec(&a).iter().zip(svec(&b)).map(|(u, v)| u * v).sum();
        assert!((dot - trace_inner(&a, &b)).abs() < 1e-12);
        assert_eq!(smat(&svec(&a), 3), a);
    }

    #[test]
    fn psd_projection_clips_negative_spectrum() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let p = project_psd(&x);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(p[(1, 1)].abs() < 1e-12);
    }
}
