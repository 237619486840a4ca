mod common;

use petc_core::lti::{
    care_residual, hold_transition, lqr_gain, lyapunov_residual, matrix_exponential, solve_lyapunov, Matrix, Vector,
};
use petc_core::pipeline::design_loop;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn hold_transition_matches_rk4() {
    let cfg = common::reactor_config();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for lc in &cfg.loops {
        let lp = design_loop(lc).unwrap().plant;
        let h = lp.h_f64();
        for k in 1..=lp.k_bar {
            let m = hold_transition(&lp, k).unwrap();
            for _ in 0..10 {
                let x = random_state(&mut rng, lp.dim());
                let oracle = common::rk4_hold(&lp, &x, k as f64 * h, 1000 * k);
                let err = rel_err(&(&m * &x), &oracle);
                assert!(err <= 1e-8, "k = {k}: relative error {err:e}");
            }
        }
    }
}

#[test]
fn exponential_matches_rk4_on_unforced_plant() {
    let cfg = common::reactor_config();
    let mut lp = design_loop(&cfg.loops[0]).unwrap().plant;
    lp.k = Matrix::zeros(lp.k.nrows(), lp.k.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in [1usize, 5, 20] {
        let t = k as f64 * 0.01;
        let e = matrix_exponential(&lp.a, t).unwrap();
        for _ in 0..10 {
            let x = random_state(&mut rng, 4);
            let err = rel_err(&(&e * &x), &common::rk4_hold(&lp, &x, t, 1000 * k));
            assert!(err <= 1e-8, "t = {t}: relative error {err:e}");
        }
    }
}

#[test]
fn riccati_and_lyapunov_residuals() {
    let cfg = common::reactor_config();
    for lc in &cfg.loops {
        let w = lc.lqr.as_ref().unwrap();
        let a = petc_core::config::matrix_from_rows(&lc.a, "a").unwrap();
        let b = petc_core::config::matrix_from_rows(&lc.b, "b").unwrap();
        let q = petc_core::config::matrix_from_rows(&w.q, "q").unwrap();
        let r = petc_core::config::matrix_from_rows(&w.r, "r").unwrap();
        let (k, p) = lqr_gain(&a, &b, &q, &r).unwrap();
        assert!(care_residual(&a, &b, &q, &r, &p) < 1e-7);
        let acl = &a - &b * &k;
        let ql = &q + k.transpose() * &r * &k;
        let pl = solve_lyapunov(&acl, &ql).unwrap();
        assert!(lyapunov_residual(&acl, &pl, &ql) < 1e-8);
        // LQR value function solves the closed-loop Lyapunov equation
        assert!((&pl - &p).norm() / p.norm() < 1e-8);
    }
}
