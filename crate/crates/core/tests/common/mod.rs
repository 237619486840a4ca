#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use petc_core::config::ProjectConfig;
use petc_core::lti::{Matrix, PlantLoop, Vector};
use petc_core::game::GameGraph;
use petc_core::pipeline::{abstract_all, synthesize, AbstractedLoop, PreparedLoop, SynthesisReport};
use petc_core::synth::Synthesis;
use petc_core::traffic::TrafficModel;

pub fn reactor_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/batch_reactor.toml")
}

pub fn reactor_config() -> ProjectConfig {
    ProjectConfig::load(&reactor_config_path()).expect("reactor config")
}

/// Both reactor loops, abstracted once per test binary.
pub fn reactor_loops() -> &'static [AbstractedLoop] {
    static LOOPS: OnceLock<Vec<AbstractedLoop>> = OnceLock::new();
    LOOPS.get_or_init(|| abstract_all(&reactor_config()).expect("abstraction"))
}

/// Classical RK4 on `ξ̇ = Aξ + BK x̂` with `x̂` held, from `ξ(0) = x̂`.
pub fn rk4_hold(lp: &PlantLoop, xhat: &Vector, t: f64, steps: usize) -> Vector {
    let a = &lp.a;
    let u: Vector = &lp.b * &lp.k * xhat;
    let f = |x: &Vector| a * x + &u;
    let dt = t / steps as f64;
    let mut x = xhat.clone();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    x
}

/// `[ξ; x̂]ᵀ Q [ξ; x̂]`.
pub fn trigger_value(q: &Matrix, xi: &Vector, xhat: &Vector) -> f64 {
    let n = xi.len();
    let mut z = Vector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(xi);
    z.rows_mut(n, n).copy_from(xhat);
    z.dot(&(q * &z))
}

pub fn reactor_models() -> Vec<TrafficModel> {
    reactor_loops().iter().map(|l| l.model.clone()).collect()
}

pub fn reactor_prepared() -> Vec<PreparedLoop> {
    reactor_loops().iter().map(|l| l.prepared.clone()).collect()
}

/// Solved reactor game, built once per test binary.
pub fn reactor_synthesis() -> &'static (GameGraph, Synthesis, SynthesisReport) {
    static SYN: OnceLock<(GameGraph, Synthesis, SynthesisReport)> = OnceLock::new();
    SYN.get_or_init(|| synthesize(&reactor_config(), &reactor_models()).expect("synthesis"))
}
