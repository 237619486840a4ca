//! Safety-game solving and maximally permissive scheduler strategies.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::game::{GameGraph, GameState, LoopShape, Move, StateCodec};

/// Allowed moves per winning state, keyed by packed state id.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub codec: StateCodec,
    pub allowed: BTreeMap<u64, Vec<Move>>,
}

impl Strategy {
    pub fn winning_len(&self) -> usize {
        self.allowed.len()
    }

    pub fn contains(&self, s: &GameState) -> bool {
        self.codec.encode(s).is_some_and(|id| self.allowed.contains_key(&id))
    }

    /// Writes the line format:
    ///
    /// ```text
    /// petc-strategy 1
    /// loop <k_min> <k_max> <ticks>     (one per loop)
    /// delta <Δ>
    /// bound <E>
    /// <regions> <clocks> <net>:<c_N> <e> : <move> [<move> ...]
    /// ```
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "petc-strategy 1")?;
        for l in &self.codec.loops {
            writeln!(out, "loop {} {} {}", l.k_min, l.k_max, l.ticks)?;
        }
        writeln!(out, "delta {}", self.codec.delta)?;
        writeln!(out, "bound {}", self.codec.bound)?;
        for (&id, moves) in &self.allowed {
            let moves: Vec<String> = moves.iter().map(|m| m.to_string()).collect();
            writeln!(out, "{} : {}", self.codec.decode(id), moves.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = || -> Result<Option<(usize, String)>> {
            for (n, line) in lines.by_ref() {
                let line = line?;
                let t = line.trim();
                if !t.is_empty() && !t.starts_with('#') {
                    return Ok(Some((n + 1, t.to_string())));
                }
            }
            Ok(None)
        };
        let bad = |n: usize, why: &str| Error::input(format!("strategy line {n}: {why}"));
        match next()? {
            Some((_, h)) if h == "petc-strategy 1" => {}
            _ => return Err(Error::input("not a strategy file")),
        }
        let mut loops = Vec::new();
        let mut delta = None;
        let mut bound = None;
        let mut allowed = BTreeMap::new();
        let mut codec: Option<StateCodec> = None;
        while let Some((n, line)) = next()? {
            let words: Vec<&str> = line.split_whitespace().collect();
            let num = |w: &str| w.parse::<u64>().map_err(|_| bad(n, "expected an integer"));
            match words[..] {
                ["loop", a, b, t] if codec.is_none() => loops.push(LoopShape {
                    k_min: num(a)? as usize,
                    k_max: num(b)? as usize,
                    ticks: num(t)? as u32,
                }),
                ["delta", d] if codec.is_none() => delta = Some(num(d)? as u32),
                ["bound", e] if codec.is_none() => bound = Some(num(e)? as u32),
                _ => {
                    let c = match &codec {
                        Some(c) => c,
                        None => {
                            let (Some(delta), Some(bound)) = (delta, bound) else {
                                return Err(bad(n, "header incomplete"));
                            };
                            if loops.is_empty() {
                                return Err(bad(n, "no loops declared"));
                            }
                            codec.insert(StateCodec { loops: loops.clone(), delta, bound })
                        }
                    };
                    let (state, moves) = line.split_once(" : ").ok_or_else(|| bad(n, "missing ' : '"))?;
                    let s: GameState = state.parse()?;
                    let id = c.encode(&s).ok_or_else(|| bad(n, "state outside the declared game"))?;
                    let mut mv = moves.split_whitespace().map(str::parse).collect::<Result<Vec<Move>>>()?;
                    mv.sort();
                    mv.dedup();
                    allowed.insert(id, mv);
                }
            }
        }
        let codec = match codec {
            Some(c) => c,
            None => StateCodec {
                loops,
                delta: delta.ok_or_else(|| Error::input("strategy without delta"))?,
                bound: bound.ok_or_else(|| Error::input("strategy without bound"))?,
            },
        };
        Ok(Strategy { codec, allowed })
    }
}

/// Allowed moves in `s`. Errors when `s` is not winning.
pub fn strategy_query(st: &Strategy, s: &GameState) -> Result<Vec<Move>> {
    st.codec
        .encode(s)
        .and_then(|id| st.allowed.get(&id))
        .cloned()
        .ok_or_else(|| Error::Query(format!("state {s} is not in the winning set")))
}

#[derive(Debug, Clone)]
pub enum Synthesis {
    Winning(Strategy),
    /// Some initial state is losing; the strategy still covers the winning part.
    Failure { losing_initial: Vec<GameState>, strategy: Strategy },
}

impl Synthesis {
    pub fn strategy(&self) -> &Strategy {
        match self {
            Synthesis::Winning(s) | Synthesis::Failure { strategy: s, .. } => s,
        }
    }

    pub fn is_winning(&self) -> bool {
        matches!(self, Synthesis::Winning(_))
    }
}

/// Winning-state flags of the greatest fixed point of the controllable
/// predecessor, computed by backward propagation of losing states.
pub fn winning_set(g: &GameGraph) -> Vec<bool> {
    let n = g.len();
    let m = g.num_moves();
    // reverse edges: target -> moves that can reach it
    let mut rev_start = vec![0u32; n + 1];
    for mv in 0..m {
        for &t in g.outcomes_of(mv) {
            rev_start[t as usize + 1] += 1;
        }
    }
    for i in 0..n {
        rev_start[i + 1] += rev_start[i];
    }
    let mut fill = rev_start.clone();
    let mut rev = vec![0u32; rev_start[n] as usize];
    let mut owner = vec![0u32; m];
    for s in 0..n as u32 {
        for mv in g.move_range(s) {
            owner[mv] = s;
            for &t in g.outcomes_of(mv) {
                rev[fill[t as usize] as usize] = mv as u32;
                fill[t as usize] += 1;
            }
        }
    }

    let mut winning = vec![true; n];
    let mut live_moves: Vec<u32> = (0..n as u32).map(|s| g.move_range(s).len() as u32).collect();
    let mut move_alive = vec![true; m];
    let mut queue = VecDeque::new();
    for s in 0..n as u32 {
        if g.unsafe_at(s) || live_moves[s as usize] == 0 {
            winning[s as usize] = false;
            queue.push_back(s);
        }
    }
    while let Some(t) = queue.pop_front() {
        for &mv in &rev[rev_start[t as usize] as usize..rev_start[t as usize + 1] as usize] {
            let mv = mv as usize;
            let s = owner[mv] as usize;
            if !winning[s] || !move_alive[mv] {
                continue;
            }
            move_alive[mv] = false;
            live_moves[s] -= 1;
            if live_moves[s] == 0 {
                winning[s] = false;
                queue.push_back(s as u32);
            }
        }
    }
    winning
}

/// Solves `A[] not Bad and e < E` and keeps every move that stays winning.
pub fn solve_safety(g: &GameGraph) -> Synthesis {
    let winning = winning_set(g);
    let mut allowed = BTreeMap::new();
    for s in 0..g.len() as u32 {
        if !winning[s as usize] {
            continue;
        }
        let moves: Vec<Move> = g
            .moves_of(s)
            .filter(|(_, outs)| outs.iter().all(|&o| winning[o as usize]))
            .map(|(mv, _)| mv)
            .collect();
        allowed.insert(g.packed(s), moves);
    }
    let strategy = Strategy { codec: g.codec.clone(), allowed };
    let losing_initial: Vec<GameState> =
        g.initial().iter().filter(|&&s| !winning[s as usize]).map(|&s| g.state(s)).collect();
    if losing_initial.is_empty() {
        Synthesis::Winning(strategy)
    } else {
        Synthesis::Failure { losing_initial, strategy }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// A reached state has no allowed move.
    NoMove,
    /// An allowed move is not enabled in the game.
    Disabled(Move),
    /// An allowed move can reach an unsafe state.
    ReachesUnsafe(Move),
    /// The state is not part of the game at all.
    UnknownState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub state: GameState,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub reached: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-traverses the game from every initial state and every tabulated state,
/// following only allowed moves and all their outcomes.
pub fn verify_strategy(g: &GameGraph, st: &Strategy) -> VerifyReport {
    let mut report = VerifyReport::default();
    let mut roots: BTreeSet<u32> = g.initial().iter().copied().collect();
    for &id in st.allowed.keys() {
        let s = st.codec.decode(id);
        match g.id_of(&s) {
            Some(idx) => {
                roots.insert(idx);
            }
            None => report.violations.push(Violation { state: s, kind: ViolationKind::UnknownState }),
        }
    }
    let mut seen = vec![false; g.len()];
    let mut stack: Vec<u32> = roots.into_iter().collect();
    for &s in &stack {
        seen[s as usize] = true;
    }
    while let Some(s) = stack.pop() {
        report.reached += 1;
        let state = g.state(s);
        if g.unsafe_at(s) {
            continue;
        }
        let allowed = st.codec.encode(&state).and_then(|id| st.allowed.get(&id));
        let allowed = match allowed {
            Some(a) if !a.is_empty() => a,
            _ => {
                report.violations.push(Violation { state, kind: ViolationKind::NoMove });
                continue;
            }
        };
        for &mv in allowed {
            let Some((_, outs)) = g.moves_of(s).find(|(m, _)| *m == mv) else {
                report.violations.push(Violation { state: state.clone(), kind: ViolationKind::Disabled(mv) });
                continue;
            };
            if outs.iter().any(|&o| g.unsafe_at(o)) {
                report.violations.push(Violation { state: state.clone(), kind: ViolationKind::ReachesUnsafe(mv) });
            }
            for &o in outs {
                if !seen[o as usize] {
                    seen[o as usize] = true;
                    stack.push(o);
                }
            }
        }
    }
    report
}
