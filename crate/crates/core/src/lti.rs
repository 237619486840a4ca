//! Linear-system numerics for sample-and-hold state feedback.
//!
//! A loop evolves as `dξ/dt = A ξ + B K x̂` where `x̂` is the state held since
//! the last communication. Everything the abstraction needs is a function of
//! the hold-transition matrices `M(k)` (state after `k` checking periods,
//! starting from `ξ = x̂ = x`) and the triggering forms
//! `N(k) = [M(k); I]ᵀ Q [M(k); I]`.

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector};
use num_rational::Ratio;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Exact checking period (or base tick), in plant time units.
pub type Period = Ratio<i64>;

const SYMMETRY_TOL: f64 = 1e-9;

/// `(X + Xᵀ) / 2`.
pub fn symmetrize(x: &Matrix) -> Matrix {
    (x + x.transpose()) * 0.5
}

pub fn sym_eigenvalues(x: &Matrix) -> Vector {
    symmetrize(x).symmetric_eigenvalues()
}

pub fn lambda_min(x: &Matrix) -> f64 {
    sym_eigenvalues(x).min()
}

pub fn lambda_max(x: &Matrix) -> f64 {
    sym_eigenvalues(x).max()
}

/// Largest real part over the (complex) spectrum.
pub fn spectral_abscissa(a: &Matrix) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &Matrix) -> bool {
    spectral_abscissa(a) < 0.0
}

fn all_finite(a: &Matrix) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Converts a decimal or `p/q` string into an exact period.
pub fn parse_period(s: &str) -> Result<Period> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| Error::input(format!("bad rational '{s}'")))?;
        let den: i64 = den.trim().parse().map_err(|_| Error::input(format!("bad rational '{s}'")))?;
        if den == 0 {
            return Err(Error::input(format!("zero denominator in '{s}'")));
        }
        return Ok(Ratio::new(num, den));
    }
    let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
    if frac_part.len() > 15 || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::input(format!("bad decimal '{s}'")));
    }
    let den = 10i64.pow(frac_part.len() as u32);
    let int: i64 = if int_part.is_empty() { 0 } else {
        int_part.parse().map_err(|_| Error::input(format!("bad decimal '{s}'")))?
    };
    let frac: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().unwrap() };
    let sign = if int_part.starts_with('-') { -1 } else { 1 };
    Ok(Ratio::new(int * den + sign * frac, den))
}

pub fn period_to_f64(p: &Period) -> f64 {
    *p.numer() as f64 / *p.denom() as f64
}

/// One sample-and-hold control loop with a quadratic periodic triggering rule.
#[derive(Debug, Clone)]
pub struct PlantLoop {
    pub a: Matrix,
    pub b: Matrix,
    /// Feedback gain with `u = K x̂`; `A + B K` must be Hurwitz.
    pub k: Matrix,
    pub h: Period,
    pub k_bar: usize,
    /// `2n × 2n` triggering form over `[ξ; x̂]`.
    pub q_trig: Matrix,
}

impl PlantLoop {
    pub fn new(a: Matrix, b: Matrix, k: Matrix, h: Period, k_bar: usize, q_trig: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::input("A must be square and non-empty"));
        }
        if b.nrows() != n {
            return Err(Error::input(format!("B must have {n} rows, has {}", b.nrows())));
        }
        let m = b.ncols();
        if k.nrows() != m || k.ncols() != n {
            return Err(Error::input(format!("K must be {m}x{n}, is {}x{}", k.nrows(), k.ncols())));
        }
        if q_trig.nrows() != 2 * n || q_trig.ncols() != 2 * n {
            return Err(Error::input(format!("triggering matrix must be {0}x{0}", 2 * n)));
        }
        if !(all_finite(&a) && all_finite(&b) && all_finite(&k) && all_finite(&q_trig)) {
            return Err(Error::input("non-finite matrix entry"));
        }
        let asym = (&q_trig - q_trig.transpose()).amax();
        if asym > SYMMETRY_TOL * q_trig.amax().max(1.0) {
            return Err(Error::input(format!("triggering matrix not symmetric (asymmetry {asym:e})")));
        }
        if *h.numer() <= 0 || *h.denom() <= 0 {
            return Err(Error::input("checking period must be positive"));
        }
        if k_bar == 0 {
            return Err(Error::input("k_bar must be at least 1"));
        }
        let acl = &a + &b * &k;
        if !is_hurwitz(&acl) {
            return Err(Error::Design(format!(
                "A + BK is not Hurwitz (spectral abscissa {:.4e})",
                spectral_abscissa(&acl)
            )));
        }
        Ok(PlantLoop { a, b, k, h, k_bar, q_trig: symmetrize(&q_trig) })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn h_f64(&self) -> f64 {
        period_to_f64(&self.h)
    }

    pub fn closed_loop(&self) -> Matrix {
        &self.a + &self.b * &self.k
    }
}

// Padé [13/13] numerator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `e^{A t}` by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exponential(a: &Matrix, t: f64) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::input("matrix exponential needs a square matrix"));
    }
    if !all_finite(a) || !t.is_finite() {
        return Err(Error::input("non-finite input to matrix exponential"));
    }
    if t < 0.0 {
        return Err(Error::input("matrix exponential time must be non-negative"));
    }
    let n = a.nrows();
    let at = a * t;
    let norm1 = at.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let x = at * 0.5f64.powi(s);

    let b = &PADE13;
    let id = Matrix::identity(n, n);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let u_inner = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9]) + &x6 * b[7] + &x4 * b[5] + &x2 * b[3] + &id * b[1];
    let u = &x * u_inner;
    let v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8]) + &x6 * b[6] + &x4 * b[4] + &x2 * b[2] + &id * b[0];

    let lu = (&v - &u).lu();
    let mut r = lu
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Numeric("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// `M(k) = e^{A kh} + ∫₀^{kh} e^{Aτ}dτ · B K`, read off the augmented
/// exponential of `[[A, BK], [0, 0]] · kh`.
pub fn hold_transition(lp: &PlantLoop, k: usize) -> Result<Matrix> {
    if k == 0 || k > lp.k_bar {
        return Err(Error::input(format!("k = {k} outside 1..={}", lp.k_bar)));
    }
    hold_transition_at(lp, k as f64 * lp.h_f64())
}

/// Hold-transition over an arbitrary elapsed time `t ≥ 0`.
pub fn hold_transition_at(lp: &PlantLoop, t: f64) -> Result<Matrix> {
    let n = lp.dim();
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&lp.a);
    aug.view_mut((0, n), (n, n)).copy_from(&(&lp.b * &lp.k));
    let e = matrix_exponential(&aug, t)?;
    Ok(e.view((0, 0), (n, n)) + e.view((0, n), (n, n)))
}

/// `[M; I]ᵀ Q [M; I]`, symmetrized.
pub fn triggering_form(q_trig: &Matrix, m: &Matrix) -> Matrix {
    let n = m.nrows();
    let mut stacked = Matrix::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(m);
    stacked.view_mut((n, 0), (n, n)).fill_with_identity();
    symmetrize(&(stacked.transpose() * q_trig * stacked))
}

/// `M(k)` and `N(k)` for `k = 1..=k_bar`.
#[derive(Debug, Clone)]
pub struct TimingTables {
    m: Vec<Matrix>,
    n: Vec<Matrix>,
}

impl TimingTables {
    pub fn from_parts(m: Vec<Matrix>, n: Vec<Matrix>) -> Result<Self> {
        if m.is_empty() || m.len() != n.len() {
            return Err(Error::input("timing tables need equally many M and N matrices"));
        }
        Ok(TimingTables { m, n: n.iter().map(symmetrize).collect() })
    }

    pub fn k_bar(&self) -> usize {
        self.m.len()
    }

    pub fn dim(&self) -> usize {
        self.m[0].nrows()
    }

    /// `M(k)`, 1-based.
    pub fn m(&self, k: usize) -> &Matrix {
        &self.m[k - 1]
    }

    /// `N(k)`, 1-based.
    pub fn n(&self, k: usize) -> &Matrix {
        &self.n[k - 1]
    }
}

pub fn timing_tables(lp: &PlantLoop) -> Result<TimingTables> {
    let mut m = Vec::with_capacity(lp.k_bar);
    let mut n = Vec::with_capacity(lp.k_bar);
    for k in 1..=lp.k_bar {
        let mk = hold_transition(lp, k)?;
        n.push(triggering_form(&lp.q_trig, &mk));
        m.push(mk);
    }
    debug!("timing tables built for k = 1..={}", lp.k_bar);
    TimingTables::from_parts(m, n)
}

/// Solves `Aclᵀ P + P Acl = −Q` through the `n² × n²` Kronecker system.
pub fn solve_lyapunov(acl: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = acl.nrows();
    if acl.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::input("Lyapunov solve needs square, equally sized matrices"));
    }
    if !is_hurwitz(acl) {
        return Err(Error::Design("closed-loop matrix is not Hurwitz".into()));
    }
    let at = acl.transpose();
    let id = Matrix::identity(n, n);
    // column-major vec: vec(Aᵀ P) = (I ⊗ Aᵀ) vec P, vec(P A) = (Aᵀ ⊗ I) vec P
    let lhs = id.kronecker(&at) + at.kronecker(&id);
    let rhs = -Vector::from_column_slice(symmetrize(q).as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&Matrix::from_column_slice(n, n, sol.as_slice())))
}

pub fn lyapunov_residual(acl: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
    (acl.transpose() * p + p * acl + q).norm()
}

/// Matrix sign function by scaled Newton iteration `Z ← ½(cZ + (cZ)⁻¹)`.
fn matrix_sign(h: &Matrix) -> Result<Matrix> {
    let n = h.nrows() as f64;
    let mut z = h.clone();
    for it in 0..100 {
        let inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular iterate in sign iteration".into()))?;
        let det = z.determinant().abs();
        let c = if det > 0.0 && det.is_finite() { det.powf(-1.0 / n) } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).norm() / next.norm();
        z = next;
        if delta < 1e-13 {
            debug!("sign iteration converged after {} steps", it + 1);
            return Ok(z);
        }
    }
    Err(Error::Numeric("matrix sign iteration did not converge in 100 steps".into()))
}

/// Continuous-time LQR. Returns `(K, P)` with `K = R⁻¹BᵀP`, so the
/// optimal input is `u = −K x` and `A − BK` is Hurwitz.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::input("LQR dimensions inconsistent"));
    }
    let r = symmetrize(r);
    let q = symmetrize(q);
    let r_chol = Cholesky::new(r.clone()).ok_or_else(|| Error::input("R must be positive definite"))?;
    let r_inv_bt = r_chol.solve(&b.transpose());
    let g = b * &r_inv_bt;

    let mut ham = Matrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&g));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-&q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let w = matrix_sign(&ham)?;
    // (W + I) [I; P] = 0 on the stable subspace
    let w11 = w.view((0, 0), (n, n));
    let w12 = w.view((0, n), (n, n));
    let w21 = w.view((n, 0), (n, n));
    let w22 = w.view((n, n), (n, n));
    let id = Matrix::identity(n, n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &id));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numeric(format!("least-squares extraction failed: {e}")))?;
    let p = symmetrize(&p);
    let k = &r_inv_bt * &p;
    if !is_hurwitz(&(a - b * &k)) {
        return Err(Error::Design("LQR closed loop is not Hurwitz; (A, B) may not be stabilizable".into()));
    }
    Ok((k, p))
}

/// Relative CARE residual `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖ / max(1, ‖Q‖, ‖P‖)`.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let r_inv = r.clone().try_inverse().expect("R invertible");
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    res.norm() / q.norm().max(p.norm()).max(1.0)
}

/// Quadratic form for `dV/dt ≤ −ρ ξᵀ Q_lyap ξ` with `V = ξᵀPξ`:
/// `[[AᵀP + PA + ρQ_lyap, PBK], [KᵀBᵀP, 0]]`.
pub fn lyapunov_triggering_matrix(
    a: &Matrix,
    b: &Matrix,
    k: &Matrix,
    p: &Matrix,
    q_lyap: &Matrix,
    rho: f64,
) -> Result<Matrix> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::input(format!("rho must lie in (0, 1), got {rho}")));
    }
    let n = a.nrows();
    if Cholesky::new(symmetrize(p)).is_none() {
        return Err(Error::input("P must be positive definite"));
    }
    let pbk = p * b * k;
    let mut q = Matrix::zeros(2 * n, 2 * n);
    q.view_mut((0, 0), (n, n)).copy_from(&(a.transpose() * p + p * a + q_lyap * rho));
    q.view_mut((0, n), (n, n)).copy_from(&pbk);
    q.view_mut((n, 0), (n, n)).copy_from(&pbk.transpose());
    Ok(symmetrize(&q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_loop(a: f64, b: f64, k: f64) -> PlantLoop {
        PlantLoop::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::from_element(1, 1, k),
            Ratio::new(1, 10),
            5,
            Matrix::zeros(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = matrix_exponential(&Matrix::zeros(3, 3), 1.0).unwrap();
        assert_relative_eq!(e, Matrix::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn expm_diagonal() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 0.5, -30.0]));
        let e = matrix_exponential(&a, 0.7).unwrap();
        for (i, d) in [-1.0f64, 0.5, -30.0].iter().enumerate() {
            assert_relative_eq!(e[(i, i)], (d * 0.7).exp(), max_relative = 1e-12);
        }
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_nilpotent() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = matrix_exponential(&a, 2.5).unwrap();
        assert_relative_eq!(e, Matrix::from_row_slice(2, 2, &[1.0, 2.5, 0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn expm_rejects_bad_input() {
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(matrix_exponential(&a, 1.0), Err(Error::Input(_))));
        assert!(matrix_exponential(&Matrix::zeros(2, 2), -1.0).is_err());
    }

    #[test]
    fn hold_transition_with_zero_dynamics() {
        // A = 0 ⇒ M(k) = I + kh BK
        let lp = scalar_loop(0.0, 1.0, -2.0);
        let m3 = hold_transition(&lp, 3).unwrap();
        assert_relative_eq!(m3[(0, 0)], 1.0 + 0.3 * -2.0, epsilon = 1e-14);
    }

    #[test]
    fn hold_transition_without_input_path() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let lp = PlantLoop::new(a.clone(), Matrix::zeros(2, 1), Matrix::zeros(1, 2), Ratio::new(1, 4), 3, Matrix::zeros(4, 4))
            .unwrap();
        let m1 = hold_transition(&lp, 1).unwrap();
        assert_relative_eq!(m1, matrix_exponential(&a, 0.25).unwrap(), epsilon = 1e-14);
        assert!(hold_transition(&lp, 0).is_err());
        assert!(hold_transition(&lp, 4).is_err());
    }

    #[test]
    fn zero_trigger_matrix_gives_zero_forms() {
        let lp = scalar_loop(-1.0, 1.0, -1.0);
        let t = timing_tables(&lp).unwrap();
        for k in 1..=t.k_bar() {
            assert_eq!(t.n(k).amax(), 0.0);
        }
    }

    #[test]
    fn plant_loop_validation() {
        let unstable = PlantLoop::new(
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 0.5),
            Ratio::new(1, 10),
            3,
            Matrix::zeros(2, 2),
        );
        assert!(matches!(unstable, Err(Error::Design(_))));
        let bad_q = PlantLoop::new(
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 0.0),
            Ratio::new(1, 10),
            3,
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        );
        assert!(matches!(bad_q, Err(Error::Input(_))));
    }

    #[test]
    fn lyapunov_trivial_cases() {
        let p = solve_lyapunov(&(-Matrix::identity(2, 2)), &(Matrix::identity(2, 2) * 2.0)).unwrap();
        assert_relative_eq!(p, Matrix::identity(2, 2), epsilon = 1e-14);
        let acl = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]));
        let p = solve_lyapunov(&acl, &Matrix::identity(2, 2)).unwrap();
        assert_relative_eq!(p, Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.25])), epsilon = 1e-14);
        assert!(matches!(solve_lyapunov(&Matrix::identity(2, 2), &Matrix::identity(2, 2)), Err(Error::Design(_))));
    }

    #[test]
    fn lqr_scalar_cases() {
        let one = Matrix::from_element(1, 1, 1.0);
        let (k, p) = lqr_gain(&Matrix::zeros(1, 1), &one, &one, &one).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-10);
        assert_relative_eq!(k[(0, 0)], 1.0, epsilon = 1e-10);

        let (k, p) = lqr_gain(&one, &one, &Matrix::zeros(1, 1), &one).unwrap();
        assert_relative_eq!(p[(0, 0)], 2.0, epsilon = 1e-10);
        assert_relative_eq!(k[(0, 0)], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn triggering_matrix_rho_checked_and_symmetric() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = Matrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        let ql = Matrix::identity(2, 2);
        let p = solve_lyapunov(&(&a + &b * &k), &ql).unwrap();
        assert!(lyapunov_triggering_matrix(&a, &b, &k, &p, &ql, 1.0).is_err());
        assert!(lyapunov_triggering_matrix(&a, &b, &k, &p, &ql, 0.0).is_err());
        let q = lyapunov_triggering_matrix(&a, &b, &k, &p, &ql, 0.5).unwrap();
        assert_eq!(q, q.transpose());
        // at refresh (x̂ = ξ) the form is −(1−ρ) xᵀ Q_lyap x ≤ 0
        let x = Vector::from_vec(vec![0.3, -1.2]);
        let xx = Vector::from_iterator(4, x.iter().chain(x.iter()).copied());
        let val = (xx.transpose() * &q * &xx)[(0, 0)];
        assert_relative_eq!(val, -0.5 * x.norm_squared(), epsilon = 1e-12);
    }

    #[test]
    fn period_parsing() {
        assert_eq!(parse_period("0.01").unwrap(), Ratio::new(1, 100));
        assert_eq!(parse_period("1/300").unwrap(), Ratio::new(1, 300));
        assert_eq!(parse_period("2").unwrap(), Ratio::new(2, 1));
        assert!(parse_period("1/0").is_err());
        assert!(parse_period("abc").is_err());
    }
}
