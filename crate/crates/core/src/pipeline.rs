//! Stage orchestration: design, abstraction, game construction, synthesis,
//! simulation and validation, driven by a [`ProjectConfig`].

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{matrix_from_rows, LoopConfig, ProjectConfig};
use crate::error::{Error, Result};
use crate::game::{build_network_tga, compose, GameGraph};
use crate::lti::{
    lqr_gain, lyapunov_triggering_matrix, solve_lyapunov, timing_tables, Matrix, PlantLoop, TimingTables, Vector,
};
use crate::regions::{effective_bounds, region_of_state, RegionSpec};
use crate::sdp::{
    early_times, early_transition_relation, oracle_seed, sampling_oracle, transition_relation, Relation, SdpSettings,
};
use crate::sim::{simulate, SimConfig, SimLoop, SimTrace};
use crate::synth::{solve_safety, Strategy, Synthesis};
use crate::traffic::{build_quotient, build_tga, TrafficModel};

/// A loop with its gain and triggering rule fixed.
#[derive(Debug, Clone)]
pub struct DesignedLoop {
    pub plant: PlantLoop,
    /// `P` of the Lyapunov design, when the triggering rule came from one.
    pub lyapunov: Option<Matrix>,
}

pub fn design_loop(cfg: &LoopConfig) -> Result<DesignedLoop> {
    let a = matrix_from_rows(&cfg.a, "a")?;
    let b = matrix_from_rows(&cfg.b, "b")?;
    let (k, q_default) = match (&cfg.k, &cfg.lqr) {
        (Some(k), None) => (matrix_from_rows(k, "k")?, Matrix::identity(a.nrows(), a.nrows())),
        (None, Some(w)) => {
            let q = matrix_from_rows(&w.q, "lqr.q")?;
            let r = matrix_from_rows(&w.r, "lqr.r")?;
            let (k_lqr, _) = lqr_gain(&a, &b, &q, &r)?;
            let q_lyap = &q + k_lqr.transpose() * &r * &k_lqr;
            (-k_lqr, q_lyap)
        }
        _ => return Err(Error::Config("give exactly one of `k` and `lqr`".into())),
    };
    let (q_trig, lyapunov) = match (&cfg.q_trig, cfg.rho) {
        (Some(q), None) => (matrix_from_rows(q, "q_trig")?, None),
        (None, Some(rho)) => {
            let q_lyap = match &cfg.q_lyap {
                Some(q) => matrix_from_rows(q, "q_lyap")?,
                None => q_default,
            };
            let p = solve_lyapunov(&(&a + &b * &k), &q_lyap)?;
            (lyapunov_triggering_matrix(&a, &b, &k, &p, &q_lyap, rho)?, Some(p))
        }
        _ => return Err(Error::Config("give exactly one of `q_trig` and `rho`".into())),
    };
    let plant = PlantLoop::new(a, b, k, cfg.period()?, cfg.k_bar, q_trig)?;
    Ok(DesignedLoop { plant, lyapunov })
}

/// Design, timing tables and region bounds of one loop.
#[derive(Debug, Clone)]
pub struct PreparedLoop {
    pub design: DesignedLoop,
    pub tables: TimingTables,
    pub spec: RegionSpec,
}

pub fn prepare_loop(cfg: &LoopConfig, eig_threshold: f64) -> Result<PreparedLoop> {
    let design = design_loop(cfg)?;
    let tables = timing_tables(&design.plant)?;
    let spec = effective_bounds(&tables, eig_threshold)?;
    Ok(PreparedLoop { design, tables, spec })
}

pub fn prepare_all(cfg: &ProjectConfig) -> Result<Vec<PreparedLoop>> {
    cfg.loops
        .iter()
        .enumerate()
        .map(|(i, l)| {
            prepare_loop(l, cfg.abstraction.eig_threshold).map_err(|e| annotate(e, i))
        })
        .collect()
}

fn annotate(e: Error, idx: usize) -> Error {
    match e {
        Error::Design(m) => Error::Design(format!("loop {}: {m}", idx + 1)),
        Error::Numeric(m) => Error::Numeric(format!("loop {}: {m}", idx + 1)),
        Error::Abstraction(m) => Error::Abstraction(format!("loop {}: {m}", idx + 1)),
        Error::Input(m) => Error::Input(format!("loop {}: {m}", idx + 1)),
        other => other,
    }
}

pub fn sdp_settings(cfg: &ProjectConfig) -> SdpSettings {
    SdpSettings {
        tol: cfg.abstraction.sdp_tol,
        max_iter: cfg.abstraction.sdp_max_iter,
        allow_sub_miet_early: cfg.abstraction.allow_sub_miet_early,
    }
}

#[derive(Debug, Clone)]
pub struct AbstractedLoop {
    pub prepared: PreparedLoop,
    pub trigger: Relation,
    pub early: Relation,
    pub model: TrafficModel,
    pub elapsed: Duration,
}

/// Full abstraction of loop `loop_id` (1-based).
pub fn abstract_loop(loop_id: usize, prepared: PreparedLoop, settings: &SdpSettings) -> Result<AbstractedLoop> {
    let start = Instant::now();
    let trigger = transition_relation(&prepared.tables, &prepared.spec, settings)?;
    let early = early_transition_relation(&prepared.tables, &prepared.spec, settings)?;
    let model = build_quotient(loop_id, &prepared.spec, &trigger, &early)?;
    let elapsed = start.elapsed();
    info!(
        "loop {loop_id}: regions {}..={}, {} trigger / {} early edges in {:.2?}",
        prepared.spec.k_min,
        prepared.spec.k_max,
        model.trigger_edges.len(),
        model.early_edges.len(),
        elapsed
    );
    Ok(AbstractedLoop { prepared, trigger, early, model, elapsed })
}

pub fn abstract_all(cfg: &ProjectConfig) -> Result<Vec<AbstractedLoop>> {
    let settings = sdp_settings(cfg);
    prepare_all(cfg)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| abstract_loop(i + 1, p, &settings).map_err(|e| annotate(e, i)))
        .collect()
}

pub fn build_game(cfg: &ProjectConfig, models: &[TrafficModel]) -> Result<GameGraph> {
    if models.len() != cfg.loops.len() {
        return Err(Error::input(format!("{} models for {} loops", models.len(), cfg.loops.len())));
    }
    let tgas: Vec<_> = models.iter().map(build_tga).collect();
    let net = build_network_tga(cfg.network.delta)?;
    compose(&tgas, &cfg.periods()?, &net, cfg.earliness_params()?, cfg.base_tick()?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisReport {
    pub winning: bool,
    pub states: usize,
    pub moves: usize,
    pub unsafe_states: usize,
    pub winning_states: usize,
    pub initial_states: usize,
    pub losing_initial: Vec<String>,
    #[serde(skip)]
    pub build_seconds: f64,
    #[serde(skip)]
    pub solve_seconds: f64,
}

pub fn synthesize(cfg: &ProjectConfig, models: &[TrafficModel]) -> Result<(GameGraph, Synthesis, SynthesisReport)> {
    let start = Instant::now();
    let game = build_game(cfg, models)?;
    let build_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let result = solve_safety(&game);
    let solve_seconds = start.elapsed().as_secs_f64();
    let stats = game.stats();
    let losing_initial = match &result {
        Synthesis::Failure { losing_initial, .. } => losing_initial.iter().map(|s| s.to_string()).collect(),
        Synthesis::Winning(_) => Vec::new(),
    };
    let report = SynthesisReport {
        winning: result.is_winning(),
        states: stats.states,
        moves: stats.moves,
        unsafe_states: stats.unsafe_states,
        winning_states: result.strategy().winning_len(),
        initial_states: stats.initial_states,
        losing_initial,
        build_seconds,
        solve_seconds,
    };
    Ok((game, result, report))
}

/// Simulator input from prepared loops and models; initial states come from
/// the config.
pub fn sim_config(
    cfg: &ProjectConfig,
    prepared: &[PreparedLoop],
    models: &[TrafficModel],
    strategy: Strategy,
) -> Result<SimConfig> {
    if prepared.len() != models.len() {
        return Err(Error::input("one model per loop required"));
    }
    let initial_states = cfg
        .loops
        .iter()
        .enumerate()
        .map(|(i, l)| l.initial().ok_or_else(|| Error::Config(format!("loop {} has no initial_state", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let loops = prepared
        .iter()
        .zip(models)
        .map(|(p, m)| SimLoop {
            plant: p.design.plant.clone(),
            tables: p.tables.clone(),
            spec: p.spec,
            model: m.clone(),
        })
        .collect();
    Ok(SimConfig {
        loops,
        strategy,
        earliness: cfg.earliness_params()?,
        initial_states,
        duration: cfg.simulation.duration,
        arbiter: cfg.simulation.arbiter,
        seed: cfg.simulation.seed,
        prefer_early: cfg.simulation.prefer_early,
    })
}

pub fn run_simulation(cfg: &ProjectConfig, prepared: &[PreparedLoop], models: &[TrafficModel], strategy: Strategy) -> Result<SimTrace> {
    simulate(&sim_config(cfg, prepared, models, strategy)?)
}

/// Oracle successors of one `(i, k)` pair against the model's edges.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub loop_id: usize,
    pub source: usize,
    pub k: usize,
    pub oracle: BTreeSet<usize>,
    pub model: BTreeSet<usize>,
    pub missing: BTreeSet<usize>,
}

/// Sampling-oracle sweep over every `(i, k)` the model can take.
pub fn oracle_sweep(
    loop_id: usize,
    prepared: &PreparedLoop,
    model: &TrafficModel,
    samples: usize,
    seed: u64,
    allow_sub_miet: bool,
) -> Result<Vec<OracleRow>> {
    let spec = &prepared.spec;
    let mut pairs = Vec::new();
    for i in spec.regions() {
        pairs.push((i, i));
        pairs.extend(early_times(i, spec, allow_sub_miet).map(|k| (i, k)));
    }
    use rayon::prelude::*;
    pairs
        .par_iter()
        .map(|&(i, k)| {
            let oracle = sampling_oracle(&prepared.tables, spec, i, k, samples, oracle_seed(seed, loop_id, i, k))?;
            let model_set = if k == i { model.trigger_successors(i) } else { model.early_successors(i, k) };
            let missing = oracle.difference(&model_set).copied().collect();
            Ok(OracleRow { loop_id, source: i, k, oracle, model: model_set, missing })
        })
        .collect()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ConformanceReport {
    pub loop_id: usize,
    pub steps: usize,
    /// `(source, k, target)` steps missing from the model.
    pub violations: Vec<(usize, usize, usize)>,
}

/// Runs the exact PETC from random initial states and checks every natural
/// step against the model.
pub fn conformance_trials(
    loop_id: usize,
    prepared: &PreparedLoop,
    model: &TrafficModel,
    states: usize,
    events: usize,
    seed: u64,
) -> Result<ConformanceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (loop_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let n = prepared.tables.dim();
    let mut report = ConformanceReport { loop_id, ..Default::default() };
    for _ in 0..states {
        let mut x = Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let mut region = region_of_state(&x, &prepared.tables, &prepared.spec)?;
        for _ in 0..events {
            let next = prepared.tables.m(region) * &x;
            let norm = next.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                break;
            }
            x = next / norm;
            let target = region_of_state(&x, &prepared.tables, &prepared.spec)?;
            report.steps += 1;
            if !model.trigger_edges.contains(&(region, target)) {
                report.violations.push((region, region, target));
            }
            region = target;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
        [network]
        delta = 1
        [earliness]
        r = 2
        e_ref = 1
        bound = 2
        [simulation]
        duration = 2.0
        [[loops]]
        a = [[-1.0]]
        b = [[1.0]]
        k = [[-1.0]]
        rho = 0.5
        h = "1/10"
        k_bar = 10
        initial_state = [1.0]
    "#;

    #[test]
    fn scalar_loop_runs_end_to_end() {
        let cfg = ProjectConfig::from_toml(SCALAR).unwrap();
        let loops = abstract_all(&cfg).unwrap();
        assert_eq!(loops.len(), 1);
        let m = &loops[0].model;
        // homogeneous scalar dynamics: one inter-event time for every state
        assert_eq!(m.regions().len(), 1);
        let (_, syn, report) = synthesize(&cfg, &[m.clone()]).unwrap();
        assert!(report.winning);
        let prepared: Vec<_> = loops.iter().map(|l| l.prepared.clone()).collect();
        let trace = run_simulation(&cfg, &prepared, &[m.clone()], syn.strategy().clone()).unwrap();
        assert!(trace.conflicts.is_empty());
        assert!(!trace.events.is_empty());
        assert!(trace.events.iter().all(|e| e.k == m.spec.k_min));
        let rows = oracle_sweep(1, &loops[0].prepared, m, 200, 3, true).unwrap();
        assert!(rows.iter().all(|r| r.missing.is_empty()));
        let conf = conformance_trials(1, &loops[0].prepared, m, 10, 5, 1).unwrap();
        assert!(conf.violations.is_empty());
    }
}
