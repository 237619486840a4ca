//! Network automaton, earliness accumulator and the explicit discrete-tick
//! game obtained by composing the loops' traffic automata with the network.
//!
//! One step of the composed game, from a state at a tick boundary:
//!
//! 1. a channel held for `Δ` ticks is released (`done`);
//! 2. loops whose clock reached their region bound fire `trigger`; if any do,
//!    the controller has no choice this tick;
//! 3. otherwise the controller picks `wait` or one enabled `early` edge;
//! 4. every firing loop synchronizes `comm` with the network and updates the
//!    earliness; the environment resolves the successor regions;
//! 5. one tick elapses.
//!
//! States with the network in `Bad` or `e ≥ E` are unsafe sinks.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::Period;
use crate::traffic::{EdgeKind, TrafficTga};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NetLocation {
    Idle,
    InUse,
    Bad,
}

impl NetLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            NetLocation::Idle => "idle",
            NetLocation::InUse => "inuse",
            NetLocation::Bad => "bad",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }

    fn from_index(i: u64) -> Self {
        match i {
            0 => NetLocation::Idle,
            1 => NetLocation::InUse,
            _ => NetLocation::Bad,
        }
    }
}

impl std::str::FromStr for NetLocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idle" => Ok(NetLocation::Idle),
            "inuse" => Ok(NetLocation::InUse),
            "bad" => Ok(NetLocation::Bad),
            _ => Err(Error::input(format!("unknown network location {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetAction {
    Comm,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetEdge {
    pub source: NetLocation,
    pub action: NetAction,
    /// `c_N = guard`.
    pub guard: Option<u32>,
    pub reset: bool,
    pub target: NetLocation,
}

/// Shared channel held for `delta` ticks per communication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTga {
    pub delta: u32,
    pub edges: Vec<NetEdge>,
}

pub fn build_network_tga(delta: u32) -> Result<NetworkTga> {
    if delta == 0 {
        return Err(Error::input("channel occupancy must be at least one tick"));
    }
    use NetAction::*;
    use NetLocation::*;
    let e = |source, action, guard, reset, target| NetEdge { source, action, guard, reset, target };
    Ok(NetworkTga {
        delta,
        edges: vec![
            e(Idle, Comm, None, true, InUse),
            e(InUse, Done, Some(delta), false, Idle),
            e(InUse, Comm, None, false, Bad),
            e(Bad, Comm, None, false, Bad),
        ],
    })
}

impl NetworkTga {
    /// `c_N ≤ Δ` in `InUse`.
    pub fn invariant(&self, loc: NetLocation) -> Option<u32> {
        (loc == NetLocation::InUse).then_some(self.delta)
    }

    /// Location and clock after a `comm`.
    pub fn comm(&self, loc: NetLocation, clock: u32) -> (NetLocation, u32) {
        let edge = self.edges.iter().find(|e| e.source == loc && e.action == NetAction::Comm).expect("comm is total");
        (edge.target, if edge.reset { 0 } else { clock })
    }

    /// Releases the channel if `done` is enabled.
    pub fn release(&self, loc: NetLocation, clock: u32) -> (NetLocation, u32) {
        match self.edges.iter().find(|e| e.source == loc && e.action == NetAction::Done) {
            Some(edge) if edge.guard == Some(clock) => (edge.target, 0),
            _ => (loc, clock),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlinessParams {
    pub r: u32,
    pub e_ref: u32,
    /// `E`: states with `e ≥ E` are unsafe.
    pub bound: u32,
}

impl EarlinessParams {
    pub fn new(r: u32, e_ref: u32, bound: u32) -> Result<Self> {
        if r == 0 || e_ref == 0 || bound == 0 {
            return Err(Error::input("earliness parameters r, e_ref and E must be positive"));
        }
        Ok(EarlinessParams { r, e_ref, bound })
    }
}

/// `e' = clamp(e + r(i − k) − ē, 0, E)` for a communication at `k` from region `i`.
pub fn earliness_update(e: u32, i: usize, k: usize, p: &EarlinessParams) -> Result<u32> {
    if k == 0 || k > i {
        return Err(Error::input(format!("fire time {k} outside 1..={i}")));
    }
    if e > p.bound {
        return Err(Error::input(format!("earliness {e} above bound {}", p.bound)));
    }
    let raw = e as i64 + p.r as i64 * (i - k) as i64 - p.e_ref as i64;
    Ok(raw.clamp(0, p.bound as i64) as u32)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GameState {
    pub regions: Vec<usize>,
    /// Ticks since each loop's last communication.
    pub clocks: Vec<u32>,
    pub net: NetLocation,
    pub net_clock: u32,
    pub e: u32,
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(",");
        write!(
            f,
            "{} {} {}:{} {}",
            join(self.regions.iter().map(|r| r.to_string()).collect()),
            join(self.clocks.iter().map(|c| c.to_string()).collect()),
            self.net.as_str(),
            self.net_clock,
            self.e
        )
    }
}

impl std::str::FromStr for GameState {
    type Err = Error;

    /// Parses the [`Display`](fmt::Display) form `6,4 5,1 idle:0 0`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::input(format!("malformed game state {s:?}"));
        let fields: Vec<&str> = s.split_whitespace().collect();
        let [regions, clocks, net, e] = fields[..] else { return Err(bad()) };
        let list = |v: &str| v.split(',').map(|x| x.parse::<u64>().map_err(|_| bad())).collect::<Result<Vec<_>>>();
        let (net, net_clock) = net.split_once(':').ok_or_else(bad)?;
        Ok(GameState {
            regions: list(regions)?.into_iter().map(|v| v as usize).collect(),
            clocks: list(clocks)?.into_iter().map(|v| v as u32).collect(),
            net: net.parse()?,
            net_clock: net_clock.parse().map_err(|_| bad())?,
            e: e.parse().map_err(|_| bad())?,
        })
    }
}

/// Controller moves. `Wait` in a state with a forced trigger lets the plant fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Move {
    Wait,
    /// Early communication of the loop with this 0-based index.
    Early(usize),
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Wait => write!(f, "wait"),
            Move::Early(l) => write!(f, "early:{}", l + 1),
        }
    }
}

impl std::str::FromStr for Move {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "wait" {
            return Ok(Move::Wait);
        }
        s.strip_prefix("early:")
            .and_then(|l| l.parse::<usize>().ok())
            .filter(|&l| l >= 1)
            .map(|l| Move::Early(l - 1))
            .ok_or_else(|| Error::input(format!("unknown move {s:?}")))
    }
}

/// Mixed-radix packing of game states into `u64` ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCodec {
    pub loops: Vec<LoopShape>,
    pub delta: u32,
    pub bound: u32,
}

/// Region range and check period (in base ticks) of one loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopShape {
    pub k_min: usize,
    pub k_max: usize,
    pub ticks: u32,
}

impl LoopShape {
    fn max_clock(&self) -> u32 {
        self.k_max as u32 * self.ticks
    }
}

impl StateCodec {
    pub fn encode(&self, s: &GameState) -> Option<u64> {
        if s.regions.len() != self.loops.len() || s.clocks.len() != self.loops.len() {
            return None;
        }
        let mut id: u64 = 0;
        let mut push = |v: u64, radix: u64| -> Option<()> {
            if v >= radix {
                return None;
            }
            id = id.checked_mul(radix)?.checked_add(v)?;
            Some(())
        };
        for ((shape, &r), &c) in self.loops.iter().zip(&s.regions).zip(&s.clocks) {
            if r < shape.k_min {
                return None;
            }
            push((r - shape.k_min) as u64, (shape.k_max - shape.k_min + 1) as u64)?;
            push(c as u64, shape.max_clock() as u64 + 1)?;
        }
        push(s.net.index(), 3)?;
        push(s.net_clock as u64, self.delta as u64 + 1)?;
        push(s.e as u64, self.bound as u64 + 1)?;
        Some(id)
    }

    pub fn decode(&self, mut id: u64) -> GameState {
        let mut pop = |radix: u64| {
            let v = id % radix;
            id /= radix;
            v
        };
        let e = pop(self.bound as u64 + 1) as u32;
        let net_clock = pop(self.delta as u64 + 1) as u32;
        let net = NetLocation::from_index(pop(3));
        let n = self.loops.len();
        let mut regions = vec![0; n];
        let mut clocks = vec![0; n];
        for l in (0..n).rev() {
            let shape = &self.loops[l];
            clocks[l] = pop(shape.max_clock() as u64 + 1) as u32;
            regions[l] = shape.k_min + pop((shape.k_max - shape.k_min + 1) as u64) as usize;
        }
        GameState { regions, clocks, net, net_clock, e }
    }
}

/// Successor tables of one loop, indexed by `region − k_min`.
#[derive(Debug, Clone)]
struct LoopTables {
    shape: LoopShape,
    trigger: Vec<Vec<usize>>,
    /// `early[i − k_min][k]`, empty when no early edge at `k`.
    early: Vec<Vec<Vec<usize>>>,
}

impl LoopTables {
    fn from_tga(tga: &TrafficTga, ticks: u32) -> Result<Self> {
        let (&k_min, &k_max) = match (tga.locations.iter().min(), tga.locations.iter().max()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::input(format!("loop {} has no locations", tga.loop_id))),
        };
        if tga.locations.len() != k_max - k_min + 1 {
            return Err(Error::input(format!("loop {} locations are not a contiguous range", tga.loop_id)));
        }
        let size = k_max - k_min + 1;
        let mut trigger = vec![Vec::new(); size];
        let mut early = vec![vec![Vec::new(); k_max + 1]; size];
        for e in &tga.edges {
            let in_range = |q: usize| (k_min..=k_max).contains(&q);
            if !in_range(e.source) || !in_range(e.target) {
                return Err(Error::Abstraction(format!("loop {}: edge {:?} out of range", tga.loop_id, e)));
            }
            match e.kind {
                EdgeKind::Uncontrollable if e.guard == e.source => trigger[e.source - k_min].push(e.target),
                EdgeKind::Controllable if e.guard >= 1 && e.guard < e.source => early[e.source - k_min][e.guard].push(e.target),
                _ => return Err(Error::Abstraction(format!("loop {}: edge {:?} has an invalid guard", tga.loop_id, e))),
            }
        }
        if let Some(i) = trigger.iter().position(|t| t.is_empty()) {
            return Err(Error::Abstraction(format!("loop {}: region Q{} has no trigger edge", tga.loop_id, i + k_min)));
        }
        for row in trigger.iter_mut().chain(early.iter_mut().flatten()) {
            row.sort_unstable();
            row.dedup();
        }
        Ok(LoopTables { shape: LoopShape { k_min, k_max, ticks }, trigger, early })
    }

    fn bound(&self, region: usize) -> u32 {
        region as u32 * self.shape.ticks
    }

    /// Early guard `k` enabled at this clock, if any.
    fn early_at(&self, region: usize, clock: u32) -> Option<usize> {
        if clock == 0 || clock % self.shape.ticks != 0 {
            return None;
        }
        let k = (clock / self.shape.ticks) as usize;
        let row = &self.early[region - self.shape.k_min];
        (k < region && !row[k].is_empty()).then_some(k)
    }
}

/// Largest rational dividing every period.
pub fn default_base_tick(periods: &[Period]) -> Result<Period> {
    let mut it = periods.iter();
    let first = *it.next().ok_or_else(|| Error::input("no loops"))?;
    let g = it.fold(first, |g, p| Period::new(g.numer().gcd(p.numer()), g.denom().lcm(p.denom())));
    if *g.numer() <= 0 {
        return Err(Error::input("periods must be positive"));
    }
    Ok(g)
}

/// `h / base_tick`, required to be a positive integer.
pub fn ticks_per_period(h: Period, base_tick: Period) -> Result<u32> {
    if *base_tick.numer() <= 0 {
        return Err(Error::input("base tick must be positive"));
    }
    let ratio = h / base_tick;
    if !ratio.is_integer() || *ratio.numer() <= 0 {
        return Err(Error::input(format!("period {h} is not a positive integer multiple of base tick {base_tick}")));
    }
    u32::try_from(*ratio.numer()).map_err(|_| Error::input("period too large in base ticks"))
}

/// The composed game, explicit and immutable.
#[derive(Debug, Clone)]
pub struct GameGraph {
    pub codec: StateCodec,
    pub base_tick: Period,
    pub params: EarlinessParams,
    net: NetworkTga,
    loops: Vec<LoopTables>,
    states: Vec<u64>,
    index: HashMap<u64, u32>,
    move_start: Vec<u32>,
    moves: Vec<Move>,
    outcome_start: Vec<u32>,
    outcomes: Vec<u32>,
    unsafe_: Vec<bool>,
    forced: Vec<bool>,
    initial: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameStats {
    pub states: usize,
    pub moves: usize,
    pub outcomes: usize,
    pub unsafe_states: usize,
    pub initial_states: usize,
    pub forced_states: usize,
}

impl fmt::Display for GameStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "states={} moves={} outcomes={} unsafe={} initial={} forced={}",
            self.states, self.moves, self.outcomes, self.unsafe_states, self.initial_states, self.forced_states
        )
    }
}

/// Builds the explicit game reachable from every joint region with fresh
/// clocks, an idle channel and `e = 0`. `periods` are the loops' check
/// periods; `base_tick` defaults to their rational gcd.
pub fn compose(
    tgas: &[TrafficTga],
    periods: &[Period],
    net: &NetworkTga,
    params: EarlinessParams,
    base_tick: Option<Period>,
) -> Result<GameGraph> {
    if tgas.is_empty() || tgas.len() != periods.len() {
        return Err(Error::input("one period per traffic automaton required"));
    }
    let base_tick = match base_tick {
        Some(t) => t,
        None => default_base_tick(periods)?,
    };
    let loops = tgas
        .iter()
        .zip(periods)
        .map(|(tga, &h)| LoopTables::from_tga(tga, ticks_per_period(h, base_tick)?))
        .collect::<Result<Vec<_>>>()?;
    let codec = StateCodec { loops: loops.iter().map(|l| l.shape).collect(), delta: net.delta, bound: params.bound };
    let mut g = GameGraph {
        codec,
        base_tick,
        params,
        net: net.clone(),
        loops,
        states: Vec::new(),
        index: HashMap::new(),
        move_start: vec![0],
        moves: Vec::new(),
        outcome_start: vec![0],
        outcomes: Vec::new(),
        unsafe_: Vec::new(),
        forced: Vec::new(),
        initial: Vec::new(),
    };
    g.explore()?;
    Ok(g)
}

impl GameGraph {
    fn initial_states(&self) -> Vec<GameState> {
        let mut out = vec![Vec::new()];
        for l in &self.loops {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<usize>| {
                    (l.shape.k_min..=l.shape.k_max).map(move |r| {
                        let mut v = prefix.clone();
                        v.push(r);
                        v
                    })
                })
                .collect();
        }
        out.into_iter()
            .map(|regions| GameState {
                clocks: vec![0; regions.len()],
                regions,
                net: NetLocation::Idle,
                net_clock: 0,
                e: 0,
            })
            .collect()
    }

    fn intern(&mut self, id: u64, frontier: &mut Vec<u64>) -> u32 {
        if let Some(&idx) = self.index.get(&id) {
            return idx;
        }
        let idx = self.states.len() as u32;
        self.states.push(id);
        self.index.insert(id, idx);
        frontier.push(id);
        idx
    }

    /// Breadth-first enumeration; each level expands in parallel and is merged
    /// in order, so ids are deterministic.
    fn explore(&mut self) -> Result<()> {
        let mut frontier = Vec::new();
        for s in self.initial_states() {
            let id = self.codec.encode(&s).ok_or_else(|| Error::Contract("initial state not encodable".into()))?;
            let idx = self.intern(id, &mut frontier);
            self.initial.push(idx);
        }
        // States are expanded in id order, so the CSR arrays line up.
        let mut expanded = 0usize;
        while !frontier.is_empty() {
            let level: Vec<u64> = std::mem::take(&mut frontier);
            let results: Vec<Result<Expansion>> = level.par_iter().map(|&id| self.expand(id)).collect();
            for r in results {
                let exp = r?;
                self.unsafe_.push(exp.unsafe_);
                self.forced.push(exp.forced);
                for (mv, outs) in exp.moves {
                    let mut targets: Vec<u32> = outs.into_iter().map(|o| self.intern(o, &mut frontier)).collect();
                    targets.sort_unstable();
                    targets.dedup();
                    self.moves.push(mv);
                    self.outcomes.extend(targets);
                    self.outcome_start.push(self.outcomes.len() as u32);
                }
                self.move_start.push(self.moves.len() as u32);
                expanded += 1;
            }
        }
        debug_assert_eq!(expanded, self.states.len());
        Ok(())
    }

    fn expand(&self, id: u64) -> Result<Expansion> {
        let s = self.codec.decode(id);
        let unsafe_ = self.is_unsafe(&s);
        let forced = !unsafe_ && !self.forced_loops(&self.released(&s)).is_empty();
        let mut moves = Vec::new();
        for mv in self.enabled_moves(&s) {
            let outs = self
                .successors(&s, mv)?
                .iter()
                .map(|o| self.codec.encode(o).ok_or_else(|| Error::Contract(format!("successor {o} not encodable"))))
                .collect::<Result<Vec<_>>>()?;
            moves.push((mv, outs));
        }
        Ok(Expansion { unsafe_, forced, moves })
    }

    pub fn is_unsafe(&self, s: &GameState) -> bool {
        s.net == NetLocation::Bad || s.e >= self.params.bound
    }

    fn released(&self, s: &GameState) -> GameState {
        let mut t = s.clone();
        (t.net, t.net_clock) = self.net.release(s.net, s.net_clock);
        t
    }

    fn forced_loops(&self, s: &GameState) -> Vec<usize> {
        (0..self.loops.len()).filter(|&l| s.clocks[l] >= self.loops[l].bound(s.regions[l])).collect()
    }

    fn check_shape(&self, s: &GameState) -> Result<()> {
        if self.codec.encode(s).is_none() {
            return Err(Error::Contract(format!("state {s} outside the game")));
        }
        for (l, t) in self.loops.iter().enumerate() {
            if s.clocks[l] > t.bound(s.regions[l]) {
                return Err(Error::Contract(format!("state {s} violates loop {} invariant", l + 1)));
            }
        }
        if s.net == NetLocation::InUse && s.net_clock > self.net.delta {
            return Err(Error::Contract(format!("state {s} violates the network invariant")));
        }
        Ok(())
    }

    /// Controller moves available in `s`. Only `Wait` when a trigger is due
    /// (uncontrollable precedence) or the state is an unsafe sink.
    pub fn enabled_moves(&self, s: &GameState) -> Vec<Move> {
        let mut out = vec![Move::Wait];
        if self.is_unsafe(s) {
            return out;
        }
        let r = self.released(s);
        if !self.forced_loops(&r).is_empty() {
            return out;
        }
        for (l, t) in self.loops.iter().enumerate() {
            if t.early_at(r.regions[l], r.clocks[l]).is_some() {
                out.push(Move::Early(l));
            }
        }
        out
    }

    /// Environment-resolved outcomes of `mv` in `s`, in sorted order.
    pub fn successors(&self, s: &GameState, mv: Move) -> Result<Vec<GameState>> {
        self.check_shape(s)?;
        if !self.enabled_moves(s).contains(&mv) {
            return Err(Error::Contract(format!("move {mv} not enabled in {s}")));
        }
        if self.is_unsafe(s) {
            return Ok(vec![s.clone()]);
        }
        let mut t = self.released(s);
        // (loop, targets, i, k) in base ticks
        let fired: Vec<(usize, &[usize], usize, usize)> = match mv {
            Move::Wait => self
                .forced_loops(&t)
                .into_iter()
                .map(|l| {
                    let q = t.regions[l];
                    let tab = &self.loops[l];
                    let i = tab.bound(q) as usize;
                    (l, tab.trigger[q - tab.shape.k_min].as_slice(), i, i)
                })
                .collect(),
            Move::Early(l) => {
                let tab = &self.loops[l];
                let q = t.regions[l];
                let k = tab.early_at(q, t.clocks[l]).expect("enabled");
                vec![(l, tab.early[q - tab.shape.k_min][k].as_slice(), tab.bound(q) as usize, t.clocks[l] as usize)]
            }
        };
        for &(l, _, i, k) in &fired {
            (t.net, t.net_clock) = self.net.comm(t.net, t.net_clock);
            t.e = earliness_update(t.e, i, k, &self.params)?;
            t.clocks[l] = 0;
        }
        for c in t.clocks.iter_mut() {
            *c += 1;
        }
        match t.net {
            NetLocation::InUse => t.net_clock += 1,
            _ => t.net_clock = 0,
        }
        let mut outs = vec![t];
        for &(l, targets, _, _) in &fired {
            outs = outs
                .into_iter()
                .flat_map(|o| {
                    targets.iter().map(move |&j| {
                        let mut o = o.clone();
                        o.regions[l] = j;
                        o
                    })
                })
                .collect();
        }
        outs.sort();
        Ok(outs)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_loops(&self) -> usize {
        self.loops.len()
    }

    pub fn state(&self, idx: u32) -> GameState {
        self.codec.decode(self.states[idx as usize])
    }

    pub fn packed(&self, idx: u32) -> u64 {
        self.states[idx as usize]
    }

    pub fn id_of(&self, s: &GameState) -> Option<u32> {
        self.codec.encode(s).and_then(|id| self.index.get(&id).copied())
    }

    pub fn initial(&self) -> &[u32] {
        &self.initial
    }

    pub fn unsafe_at(&self, idx: u32) -> bool {
        self.unsafe_[idx as usize]
    }

    /// A trigger is due: the only move is uncontrollable.
    pub fn forced_at(&self, idx: u32) -> bool {
        self.forced[idx as usize]
    }

    /// Move indices (into the global move table) of a state.
    pub fn move_range(&self, idx: u32) -> std::ops::Range<usize> {
        self.move_start[idx as usize] as usize..self.move_start[idx as usize + 1] as usize
    }

    pub fn move_at(&self, m: usize) -> Move {
        self.moves[m]
    }

    pub fn outcomes_of(&self, m: usize) -> &[u32] {
        &self.outcomes[self.outcome_start[m] as usize..self.outcome_start[m + 1] as usize]
    }

    pub fn num_moves(&self) -> usize {
        self.moves.len()
    }

    /// Moves of a state with their outcome ids.
    pub fn moves_of(&self, idx: u32) -> impl Iterator<Item = (Move, &[u32])> {
        self.move_range(idx).map(|m| (self.moves[m], self.outcomes_of(m)))
    }

    pub fn stats(&self) -> GameStats {
        GameStats {
            states: self.states.len(),
            moves: self.moves.len(),
            outcomes: self.outcomes.len(),
            unsafe_states: self.unsafe_.iter().filter(|&&u| u).count(),
            initial_states: self.initial.len(),
            forced_states: self.forced.iter().filter(|&&f| f).count(),
        }
    }

    /// `Π(|regions|·k_max) · 3 · (Δ+1) · (E+1)` in base ticks.
    pub fn size_bound(&self) -> u128 {
        let loops: u128 = self
            .loops
            .iter()
            .map(|l| (l.shape.k_max - l.shape.k_min + 1) as u128 * (l.shape.max_clock() as u128 + 1))
            .product();
        loops * 3 * (self.net.delta as u128 + 1) * (self.params.bound as u128 + 1)
    }

    /// Line-based dump:
    ///
    /// ```text
    /// S <id> <regions> <clocks> <net>:<c_N> <e> [unsafe] [forced]
    /// M <id> <move> <target ids...>
    /// ```
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# states={} base_tick={}", self.len(), self.base_tick)?;
        for idx in 0..self.len() as u32 {
            let flags = match (self.unsafe_at(idx), self.forced_at(idx)) {
                (true, _) => " unsafe",
                (false, true) => " forced",
                _ => "",
            };
            writeln!(out, "S {idx} {}{flags}", self.state(idx))?;
            for (mv, outs) in self.moves_of(idx) {
                let ids: Vec<String> = outs.iter().map(|o| o.to_string()).collect();
                writeln!(out, "M {idx} {mv} {}", ids.join(" "))?;
            }
        }
        Ok(())
    }

    /// Ids reachable from the initial states under any moves.
    pub fn reachable_ids(&self) -> BTreeSet<u32> {
        let mut seen: BTreeSet<u32> = self.initial.iter().copied().collect();
        let mut stack: Vec<u32> = seen.iter().copied().collect();
        while let Some(s) = stack.pop() {
            for (_, outs) in self.moves_of(s) {
                for &o in outs {
                    if seen.insert(o) {
                        stack.push(o);
                    }
                }
            }
        }
        seen
    }
}

struct Expansion {
    unsafe_: bool,
    forced: bool,
    moves: Vec<(Move, Vec<u64>)>,
}
