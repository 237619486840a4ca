//! Closed-loop simulation of several PETC loops sharing the channel under a
//! synthesized scheduler.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{earliness_update, EarlinessParams, GameState, Move, NetLocation};
use crate::lti::{hold_transition_at, period_to_f64, Matrix, Period, PlantLoop, TimingTables, Vector};
use crate::regions::{region_of_state, RegionSpec};
use crate::synth::{strategy_query, Strategy};
use crate::traffic::TrafficModel;

/// Discrete inter-event time of a held state.
pub fn exact_inter_event_time(x: &Vector, tables: &TimingTables, spec: &RegionSpec) -> Result<usize> {
    region_of_state(x, tables, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arbiter {
    RoundRobin,
    LowestLoopId,
    SeededRandom,
}

impl std::str::FromStr for Arbiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round_robin" => Ok(Arbiter::RoundRobin),
            "lowest_loop_id" => Ok(Arbiter::LowestLoopId),
            "seeded_random" => Ok(Arbiter::SeededRandom),
            _ => Err(Error::input(format!("unknown arbiter {s:?}"))),
        }
    }
}

impl fmt::Display for Arbiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arbiter::RoundRobin => "round_robin",
            Arbiter::LowestLoopId => "lowest_loop_id",
            Arbiter::SeededRandom => "seeded_random",
        })
    }
}

/// Everything the simulator needs about one loop.
#[derive(Debug, Clone)]
pub struct SimLoop {
    pub plant: PlantLoop,
    pub tables: TimingTables,
    pub spec: RegionSpec,
    pub model: TrafficModel,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub loops: Vec<SimLoop>,
    pub strategy: Strategy,
    pub earliness: EarlinessParams,
    pub initial_states: Vec<Vector>,
    /// Simulated time, in the plants' time unit.
    pub duration: f64,
    pub arbiter: Arbiter,
    pub seed: u64,
    /// Fire an allowed early move even when waiting is also allowed.
    pub prefer_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Natural,
    Early,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Natural => "natural",
            EventKind::Early => "early",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub tick: u64,
    pub time: f64,
    /// 0-based loop index.
    pub loop_id: usize,
    pub kind: EventKind,
    /// Inter-event multiple at which the loop communicated.
    pub k: usize,
    pub source_region: usize,
    pub target_region: usize,
    /// Plant state sent over the channel.
    pub state: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict {
    pub tick: u64,
    pub loop_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub xi: Vec<Vector>,
    pub xhat: Vec<Vector>,
    pub regions: Vec<usize>,
    pub clocks: Vec<u32>,
    pub e: u32,
    pub net: NetLocation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub base_tick: f64,
    pub delta: u32,
    pub records: Vec<TickRecord>,
    pub events: Vec<Event>,
    pub conflicts: Vec<Conflict>,
}

struct LoopRun {
    ticks: u32,
    /// `hold[c]`: transition from the last event over `c` base ticks.
    hold: Vec<Matrix>,
    xhat: Vector,
    region: usize,
    clock: u32,
}

fn arbitrate(
    cands: &[usize],
    arbiter: Arbiter,
    rr_next: &mut usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    match arbiter {
        Arbiter::LowestLoopId => cands[0],
        Arbiter::SeededRandom => cands[rng.random_range(0..cands.len())],
        Arbiter::RoundRobin => {
            let pick = *cands.iter().min_by_key(|&&l| (l + n - *rr_next) % n).expect("nonempty");
            *rr_next = (pick + 1) % n;
            pick
        }
    }
}

/// Runs the loops on the base-tick grid of the strategy. The initial held
/// states equal the initial plant states, so no communication is needed at
/// time zero.
pub fn simulate(cfg: &SimConfig) -> Result<SimTrace> {
    let n = cfg.loops.len();
    let codec = &cfg.strategy.codec;
    if n == 0 || cfg.initial_states.len() != n || codec.loops.len() != n {
        return Err(Error::input("one initial state and one strategy shape per loop required"));
    }
    if !(cfg.duration > 0.0) {
        return Err(Error::input("duration must be positive"));
    }
    if codec.bound != cfg.earliness.bound {
        return Err(Error::input("earliness bound differs from the strategy's"));
    }
    let base: Period = cfg.loops[0].plant.h / Period::from_integer(codec.loops[0].ticks as i64);
    let base_f = period_to_f64(&base);
    let mut runs = Vec::with_capacity(n);
    for (l, (lp, x0)) in cfg.loops.iter().zip(&cfg.initial_states).enumerate() {
        let shape = codec.loops[l];
        if lp.plant.h != base * Period::from_integer(shape.ticks as i64) {
            return Err(Error::input(format!("loop {} period does not match the strategy's base tick", l + 1)));
        }
        if (lp.spec.k_min, lp.spec.k_max) != (shape.k_min, shape.k_max) {
            return Err(Error::input(format!("loop {} regions do not match the strategy", l + 1)));
        }
        let max_clock = shape.k_max as u32 * shape.ticks;
        let hold = (0..=max_clock)
            .map(|c| match c {
                0 => Ok(Matrix::identity(lp.plant.dim(), lp.plant.dim())),
                c if c % shape.ticks == 0 => Ok(lp.tables.m((c / shape.ticks) as usize).clone()),
                c => hold_transition_at(&lp.plant, c as f64 * base_f),
            })
            .collect::<Result<Vec<_>>>()?;
        let region = region_of_state(x0, &lp.tables, &lp.spec)?;
        runs.push(LoopRun { ticks: shape.ticks, hold, xhat: x0.clone(), region, clock: 0 });
    }

    let total_ticks = (cfg.duration / base_f + 1e-9).floor() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rr_next = 0usize;
    let (mut net, mut net_clock, mut e) = (NetLocation::Idle, 0u32, 0u32);
    let delta = codec.delta;
    let mut trace = SimTrace { base_tick: base_f, delta, records: Vec::new(), events: Vec::new(), conflicts: Vec::new() };

    for tick in 0..=total_ticks {
        let time = tick as f64 * base_f;
        let state = GameState {
            regions: runs.iter().map(|r| r.region).collect(),
            clocks: runs.iter().map(|r| r.clock).collect(),
            net,
            net_clock,
            e,
        };
        let allowed = strategy_query(&cfg.strategy, &state).map_err(|_| {
            let recent: Vec<String> = trace.events.iter().rev().take(5).map(|ev| format!("{ev:?}")).collect();
            Error::Soundness(format!("at t = {time}: state {state} not winning; last events: {recent:?}"))
        })?;

        if net == NetLocation::InUse && net_clock == delta {
            net = NetLocation::Idle;
            net_clock = 0;
        }
        let forced: Vec<usize> =
            (0..n).filter(|&l| runs[l].clock == runs[l].region as u32 * runs[l].ticks).collect();
        let firing: Vec<(usize, EventKind)> = if !forced.is_empty() {
            forced.into_iter().map(|l| (l, EventKind::Natural)).collect()
        } else {
            let early: Vec<usize> = allowed
                .iter()
                .filter_map(|m| match m {
                    Move::Early(l) => Some(*l),
                    Move::Wait => None,
                })
                .collect();
            let waits = allowed.contains(&Move::Wait);
            if early.is_empty() || (waits && !cfg.prefer_early) {
                if !waits {
                    return Err(Error::Soundness(format!("at t = {time}: no usable move in {state}")));
                }
                Vec::new()
            } else {
                vec![(arbitrate(&early, cfg.arbiter, &mut rr_next, n, &mut rng), EventKind::Early)]
            }
        };

        for (l, kind) in firing {
            let lp = &cfg.loops[l];
            let run = &mut runs[l];
            if run.clock % run.ticks != 0 || run.clock == 0 {
                return Err(Error::Soundness(format!("loop {} fired off its check grid at t = {time}", l + 1)));
            }
            let k = (run.clock / run.ticks) as usize;
            let xi = &run.hold[run.clock as usize] * &run.xhat;
            let target = region_of_state(&xi, &lp.tables, &lp.spec)?;
            let conforms = match kind {
                EventKind::Natural => lp.model.trigger_edges.contains(&(run.region, target)),
                EventKind::Early => lp.model.early_edges.contains(&(run.region, k, target)),
            };
            if !conforms {
                return Err(Error::Soundness(format!(
                    "loop {} {} event Q{} --{k}--> Q{target} is not in the traffic model",
                    l + 1,
                    kind.as_str(),
                    run.region
                )));
            }
            if net != NetLocation::Idle {
                trace.conflicts.push(Conflict { tick, loop_id: l });
            }
            (net, net_clock) = match net {
                NetLocation::Idle => (NetLocation::InUse, 0),
                _ => (NetLocation::Bad, 0),
            };
            let i_ticks = run.region * run.ticks as usize;
            e = earliness_update(e, i_ticks, run.clock as usize, &cfg.earliness)?;
            trace.events.push(Event {
                tick,
                time,
                loop_id: l,
                kind,
                k,
                source_region: run.region,
                target_region: target,
                state: xi.clone(),
            });
            run.xhat = xi;
            run.region = target;
            run.clock = 0;
        }

        trace.records.push(TickRecord {
            tick,
            time,
            xi: runs.iter().map(|r| &r.hold[r.clock as usize] * &r.xhat).collect(),
            xhat: runs.iter().map(|r| r.xhat.clone()).collect(),
            regions: runs.iter().map(|r| r.region).collect(),
            clocks: runs.iter().map(|r| r.clock).collect(),
            e,
            net,
        });

        for r in runs.iter_mut() {
            r.clock += 1;
        }
        if net == NetLocation::InUse {
            net_clock += 1;
        }
    }
    Ok(trace)
}

/// Recomputes channel occupancy from the event log alone: each event holds
/// the channel for `Δ` ticks, and an event starting inside an occupied
/// window is a conflict.
pub fn conflict_scan(trace: &SimTrace) -> Vec<Conflict> {
    let mut events: Vec<(u64, usize)> = trace.events.iter().map(|e| (e.tick, e.loop_id)).collect();
    events.sort_unstable();
    let mut busy_until: Option<u64> = None;
    let mut out = Vec::new();
    for (tick, loop_id) in events {
        let end = tick + trace.delta as u64;
        match busy_until {
            Some(b) if tick < b => {
                out.push(Conflict { tick, loop_id });
                busy_until = Some(b.max(end));
            }
            _ => busy_until = Some(end),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopStats {
    pub natural: usize,
    pub early: usize,
    /// Mean time between consecutive events, `None` with fewer than two.
    pub mean_inter_event: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStats {
    pub events: usize,
    pub early_fraction: f64,
    pub loops: Vec<LoopStats>,
    /// Ticks spent at each earliness value.
    pub earliness_histogram: BTreeMap<u32, usize>,
}

pub fn trace_statistics(trace: &SimTrace) -> TraceStats {
    let n = trace.records.first().map_or(0, |r| r.regions.len());
    let mut loops = Vec::with_capacity(n);
    for l in 0..n {
        let evs: Vec<&Event> = trace.events.iter().filter(|e| e.loop_id == l).collect();
        let early = evs.iter().filter(|e| e.kind == EventKind::Early).count();
        let mean_inter_event = (evs.len() >= 2).then(|| (evs[evs.len() - 1].time - evs[0].time) / (evs.len() - 1) as f64);
        loops.push(LoopStats { natural: evs.len() - early, early, mean_inter_event });
    }
    let early: usize = loops.iter().map(|s| s.early).sum();
    let mut earliness_histogram = BTreeMap::new();
    for r in &trace.records {
        *earliness_histogram.entry(r.e).or_insert(0) += 1;
    }
    TraceStats {
        events: trace.events.len(),
        early_fraction: if trace.events.is_empty() { 0.0 } else { early as f64 / trace.events.len() as f64 },
        loops,
        earliness_histogram,
    }
}

/// Tick-level CSV: `tick,time`, then per loop `x<l>_<i>`, `xhat<l>_<i>`,
/// `region<l>`, `clock<l>`, then `e,network`. Loops are numbered from 1.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = trace.records.first() else {
        w.write_record(["tick", "time", "e", "network"])?;
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["tick".to_string(), "time".to_string()];
    for (l, x) in first.xi.iter().enumerate() {
        header.extend((0..x.len()).map(|i| format!("x{}_{}", l + 1, i + 1)));
        header.extend((0..x.len()).map(|i| format!("xhat{}_{}", l + 1, i + 1)));
        header.push(format!("region{}", l + 1));
        header.push(format!("clock{}", l + 1));
    }
    header.push("e".into());
    header.push("network".into());
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![r.tick.to_string(), format!("{:.10}", r.time)];
        for l in 0..r.xi.len() {
            row.extend(r.xi[l].iter().map(|v| format!("{v:.12e}")));
            row.extend(r.xhat[l].iter().map(|v| format!("{v:.12e}")));
            row.push(r.regions[l].to_string());
            row.push(r.clocks[l].to_string());
        }
        row.push(r.e.to_string());
        row.push(r.net.as_str().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Event CSV: `time,tick,loop_id,kind,k,source_region,target_region`.
pub fn write_events_csv<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "tick", "loop_id", "kind", "k", "source_region", "target_region"])?;
    for e in &trace.events {
        w.write_record([
            format!("{:.10}", e.time),
            e.tick.to_string(),
            (e.loop_id + 1).to_string(),
            e.kind.as_str().to_string(),
            e.k.to_string(),
            e.source_region.to_string(),
            e.target_region.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
