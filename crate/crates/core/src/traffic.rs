//! Quotient traffic model of one loop and its timed-game form.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::RegionSpec;
use crate::sdp::Relation;

/// Finite quotient of a PETC loop's traffic: region `Q_k` outputs `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub loop_id: usize,
    pub spec: RegionSpec,
    /// Natural transitions `(i, j)`.
    pub trigger_edges: BTreeSet<(usize, usize)>,
    /// Early transitions `(i, k, j)`, `k < i` the clock value at which the
    /// early communication happens.
    pub early_edges: BTreeSet<(usize, usize, usize)>,
}

impl TrafficModel {
    pub fn regions(&self) -> Vec<usize> {
        self.spec.regions().collect()
    }

    /// `H(Q_k) = k`.
    pub fn output(&self, region: usize) -> usize {
        region
    }

    /// Every region is initial.
    pub fn initial(&self) -> Vec<usize> {
        self.regions()
    }

    pub fn trigger_successors(&self, i: usize) -> BTreeSet<usize> {
        self.trigger_edges.range((i, 0)..=(i, usize::MAX)).map(|&(_, j)| j).collect()
    }

    pub fn early_successors(&self, i: usize, k: usize) -> BTreeSet<usize> {
        self.early_edges.range((i, k, 0)..=(i, k, usize::MAX)).map(|&(_, _, j)| j).collect()
    }

    /// Checks region bounds, guards and totality.
    pub fn validate(&self) -> Result<()> {
        for &(i, j) in &self.trigger_edges {
            if !self.spec.contains(i) || !self.spec.contains(j) {
                return Err(Error::Abstraction(format!("loop {}: trigger edge ({i}, {j}) out of range", self.loop_id)));
            }
        }
        for &(i, k, j) in &self.early_edges {
            if !self.spec.contains(i) || !self.spec.contains(j) || k == 0 || k >= i {
                return Err(Error::Abstraction(format!("loop {}: early edge ({i}, {k}, {j}) malformed", self.loop_id)));
            }
        }
        for i in self.spec.regions() {
            if self.trigger_successors(i).is_empty() {
                return Err(Error::Abstraction(format!("loop {}: region Q{i} has no outgoing trigger edge", self.loop_id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrafficModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }
}

/// Assembles the quotient model from decided relations.
pub fn build_quotient(loop_id: usize, spec: &RegionSpec, trigger: &Relation, early: &Relation) -> Result<TrafficModel> {
    let trigger_edges: BTreeSet<_> = trigger
        .admitted()
        .filter(|e| e.action_k == e.source)
        .map(|e| (e.source, e.target))
        .collect();
    let early_edges: BTreeSet<_> = early
        .admitted()
        .filter(|e| e.action_k < e.source)
        .map(|e| (e.source, e.action_k, e.target))
        .collect();
    let model = TrafficModel { loop_id, spec: *spec, trigger_edges, early_edges };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    /// `early`, chosen by the scheduler.
    Controllable,
    /// `trigger`, taken by the plant.
    Uncontrollable,
}

/// `source --(c = guard, kind, reset c)--> target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TgaEdge {
    pub source: usize,
    pub guard: usize,
    pub kind: EdgeKind,
    pub target: usize,
}

/// One-clock timed game automaton of a loop's traffic. Location `Q_i` has
/// invariant `c ≤ i`; every edge resets `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficTga {
    pub loop_id: usize,
    pub locations: Vec<usize>,
    pub initial: Vec<usize>,
    pub edges: Vec<TgaEdge>,
}

impl TrafficTga {
    pub fn invariant(&self, location: usize) -> usize {
        location
    }

    pub fn edges_from(&self, location: usize) -> impl Iterator<Item = &TgaEdge> {
        self.edges.iter().filter(move |e| e.source == location)
    }

    /// Targets of the edges leaving `location` with `kind` at clock value `guard`.
    pub fn targets(&self, location: usize, guard: usize, kind: EdgeKind) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.source == location && e.guard == guard && e.kind == kind)
            .map(|e| e.target)
            .collect()
    }

    /// Guard values of controllable edges out of `location`.
    pub fn early_guards(&self, location: usize) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in self.edges_from(location).filter(|e| e.kind == EdgeKind::Controllable) {
            out.entry(e.guard).or_default().push(e.target);
        }
        out
    }
}

pub fn build_tga(model: &TrafficModel) -> TrafficTga {
    let mut edges: Vec<TgaEdge> = model
        .trigger_edges
        .iter()
        .map(|&(i, j)| TgaEdge { source: i, guard: i, kind: EdgeKind::Uncontrollable, target: j })
        .chain(
            model
                .early_edges
                .iter()
                .map(|&(i, k, j)| TgaEdge { source: i, guard: k, kind: EdgeKind::Controllable, target: j }),
        )
        .collect();
    edges.sort();
    TrafficTga { loop_id: model.loop_id, locations: model.regions(), initial: model.initial(), edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{RelationEntry, VerdictStatus};

    fn entry(i: usize, k: usize, j: usize, status: VerdictStatus) -> RelationEntry {
        RelationEntry { source: i, action_k: k, target: j, status, residual: 0.0 }
    }

    #[test]
    fn single_region_model() {
        let spec = RegionSpec::new(3, 3, 1e-3).unwrap();
        let trig = Relation { entries: vec![entry(3, 3, 3, VerdictStatus::Feasible)] };
        let m = build_quotient(1, &spec, &trig, &Relation::default()).unwrap();
        assert_eq!(m.regions(), vec![3]);
        assert_eq!(m.trigger_edges.len(), 1);
        assert!(m.early_edges.is_empty());
        let tga = build_tga(&m);
        assert_eq!(tga.edges.len(), 1);
        assert_eq!(tga.edges[0].guard, tga.invariant(3));
    }

    #[test]
    fn unknown_kept_infeasible_dropped() {
        let spec = RegionSpec::new(2, 3, 1e-3).unwrap();
        let trig = Relation {
            entries: vec![
                entry(2, 2, 2, VerdictStatus::Unknown),
                entry(2, 2, 3, VerdictStatus::Infeasible),
                entry(3, 3, 2, VerdictStatus::Feasible),
            ],
        };
        let early = Relation { entries: vec![entry(3, 1, 3, VerdictStatus::Feasible), entry(3, 2, 2, VerdictStatus::Infeasible)] };
        let m = build_quotient(1, &spec, &trig, &early).unwrap();
        assert_eq!(m.trigger_edges, BTreeSet::from([(2, 2), (3, 2)]));
        assert_eq!(m.early_edges, BTreeSet::from([(3, 1, 3)]));
        let tga = build_tga(&m);
        assert_eq!(tga.edges.len(), m.trigger_edges.len() + m.early_edges.len());
        for e in &tga.edges {
            match e.kind {
                EdgeKind::Controllable => assert!(e.guard < tga.invariant(e.source)),
                EdgeKind::Uncontrollable => assert_eq!(e.guard, tga.invariant(e.source)),
            }
        }
        assert_eq!(tga.early_guards(3).get(&1), Some(&vec![3]));
    }

    #[test]
    fn missing_trigger_edge_is_an_integrity_error() {
        let spec = RegionSpec::new(2, 3, 1e-3).unwrap();
        let trig = Relation { entries: vec![entry(2, 2, 2, VerdictStatus::Feasible)] };
        assert!(matches!(build_quotient(1, &spec, &trig, &Relation::default()), Err(Error::Abstraction(_))));
    }

    #[test]
    fn json_round_trip_validates() {
        let spec = RegionSpec::new(2, 3, 1e-3).unwrap();
        let m = TrafficModel {
            loop_id: 2,
            spec,
            trigger_edges: BTreeSet::from([(2, 3), (3, 2)]),
            early_edges: BTreeSet::from([(3, 2, 3)]),
        };
        let back = TrafficModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut broken = m.clone();
        broken.trigger_edges.remove(&(3, 2));
        assert!(TrafficModel::from_json(&broken.to_json().unwrap()).is_err());
    }
}
