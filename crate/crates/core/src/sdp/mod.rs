//! Transition oracle for the quotient model.
//!
//! Whether some state of region `Q_i`, propagated for `k` checking periods,
//! lands in region `Q_j` is a non-convex quadratic feasibility question. It
//! is lifted to `X = x xᵀ ⪰ 0` with `Tr X = 1`, turning every quadratic
//! constraint into a trace constraint, and decided by [`sdp_feasibility`].
//! A random-sampling oracle provides the under-approximation used to check
//! soundness of the relaxation.

mod solver;

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{Matrix, TimingTables};
use crate::regions::{classify, RegionSpec};

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sense {
    /// `Tr(X G) ≥ b`
    AtLeast(f64),
    /// `Tr(X G) ≤ b`
    AtMost(f64),
    /// `Tr(X G) = b`
    Equal(f64),
}

#[derive(Debug, Clone)]
pub struct TraceConstraint {
    pub g: Matrix,
    pub sense: Sense,
}

/// Feasibility problem over `X ⪰ 0` with trace-linear constraints.
#[derive(Debug, Clone)]
pub struct TraceLP {
    pub dim: usize,
    pub constraints: Vec<TraceConstraint>,
}

impl TraceLP {
    /// Starts with the normalization `Tr X = 1`.
    pub fn new(dim: usize) -> Self {
        TraceLP {
            dim,
            constraints: vec![TraceConstraint { g: Matrix::identity(dim, dim), sense: Sense::Equal(1.0) }],
        }
    }

    pub fn at_least(&mut self, g: Matrix, b: f64) -> &mut Self {
        self.constraints.push(TraceConstraint { g: crate::lti::symmetrize(&g), sense: Sense::AtLeast(b) });
        self
    }

    pub fn at_most(&mut self, g: Matrix, b: f64) -> &mut Self {
        self.constraints.push(TraceConstraint { g: crate::lti::symmetrize(&g), sense: Sense::AtMost(b) });
        self
    }

    pub fn count(&self, pred: impl Fn(&Sense) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(&c.sense)).count()
    }

    pub fn validate(&self) -> Result<()> {
        let eqs: Vec<_> = self.constraints.iter().filter(|c| matches!(c.sense, Sense::Equal(_))).collect();
        if eqs.len() != 1 || eqs[0].sense != Sense::Equal(1.0) || eqs[0].g != Matrix::identity(self.dim, self.dim) {
            return Err(Error::input("exactly one equality constraint Tr(X) = 1 is required"));
        }
        for c in &self.constraints {
            if c.g.shape() != (self.dim, self.dim) {
                return Err(Error::input("constraint matrix has wrong dimension"));
            }
            if c.g.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("non-finite constraint matrix"));
            }
            if (&c.g - c.g.transpose()).amax() > 1e-9 * c.g.amax().max(1.0) {
                return Err(Error::input("constraint matrix not symmetric"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictStatus {
    Feasible,
    Infeasible,
    Unknown,
}

impl VerdictStatus {
    /// Whether the transition is kept. Undecided problems are kept so the
    /// abstraction stays an over-approximation.
    pub fn admits(self) -> bool {
        !matches!(self, VerdictStatus::Infeasible)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Feasible => "feasible",
            VerdictStatus::Infeasible => "infeasible",
            VerdictStatus::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Certificate {
    /// Unit-trace PSD matrix violating no constraint by more than the tolerance.
    Primal(Matrix),
    /// Simplex weights (indexed like `TraceLP::constraints`, zero on the
    /// equality) whose normalized combination `Σ λ_c F_c` has smallest
    /// eigenvalue `margin > tol`.
    Dual { multipliers: Vec<f64>, margin: f64 },
}

#[derive(Debug, Clone)]
pub struct FeasibilityVerdict {
    pub status: VerdictStatus,
    pub certificate: Option<Certificate>,
    /// Worst normalized violation (Feasible/Unknown) or certified margin (Infeasible).
    pub residual: f64,
    pub iterations: usize,
}

/// Decides a [`TraceLP`] up to `tol` on Frobenius-normalized constraints.
/// Never fails: an exhausted iteration budget yields `Unknown`.
pub fn sdp_feasibility(p: &TraceLP, tol: f64, max_iter: usize) -> FeasibilityVerdict {
    if p.validate().is_err() {
        return FeasibilityVerdict { status: VerdictStatus::Unknown, certificate: None, residual: f64::NAN, iterations: 0 };
    }
    solver::solve(p, tol, max_iter)
}

/// Checks a certificate against the problem without trusting the solver.
pub fn check_certificate(p: &TraceLP, v: &FeasibilityVerdict, tol: f64) -> bool {
    let forms = solver::normalized_forms(p);
    match (&v.status, &v.certificate) {
        (VerdictStatus::Feasible, Some(Certificate::Primal(x))) => {
            let lmin = crate::lti::lambda_min(x);
            let trace_ok = (x.trace() - 1.0).abs() <= 1e-9;
            lmin >= -tol && trace_ok && forms.iter().all(|(_, f)| x.component_mul(f).sum() <= tol)
        }
        (VerdictStatus::Infeasible, Some(Certificate::Dual { multipliers, .. })) => {
            if multipliers.iter().any(|l| *l < 0.0) {
                return false;
            }
            let mut comb = Matrix::zeros(p.dim, p.dim);
            for (idx, f) in &forms {
                comb += f * multipliers[*idx];
            }
            crate::lti::lambda_min(&comb) > tol
        }
        (VerdictStatus::Unknown, _) => true,
        _ => false,
    }
}

/// Relaxation of "∃x ∈ Q_i with M(k)x ∈ Q_j". `k = i` is the natural
/// transition; `k < i` an early one.
pub fn assemble_transition_sdp(i: usize, k: usize, j: usize, tables: &TimingTables, spec: &RegionSpec) -> Result<TraceLP> {
    if !spec.contains(i) || !spec.contains(j) {
        return Err(Error::input(format!("regions ({i}, {j}) outside [{}, {}]", spec.k_min, spec.k_max)));
    }
    if k == 0 || k > i || k > tables.k_bar() {
        return Err(Error::input(format!("propagation time {k} invalid for source region {i}")));
    }
    let mut p = TraceLP::new(tables.dim());
    if i < spec.k_max {
        p.at_least(tables.n(i).clone(), 0.0);
    }
    for lower in spec.k_min..i {
        p.at_most(tables.n(lower).clone(), 0.0);
    }
    let m = tables.m(k);
    let mt = m.transpose();
    if j < spec.k_max {
        p.at_least(&mt * tables.n(j) * m, 0.0);
    }
    for lower in spec.k_min..j {
        p.at_most(&mt * tables.n(lower) * m, 0.0);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Early actions below the minimum inter-event time.
    pub allow_sub_miet_early: bool,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, allow_sub_miet_early: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub source: usize,
    pub action_k: usize,
    pub target: usize,
    pub status: VerdictStatus,
    pub residual: f64,
}

/// Every evaluated `(i, k, j)` problem with its verdict.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub entries: Vec<RelationEntry>,
}

impl Relation {
    pub fn admitted(&self) -> impl Iterator<Item = &RelationEntry> {
        self.entries.iter().filter(|e| e.status.admits())
    }

    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        self.admitted().map(|e| (e.source, e.target)).collect()
    }

    pub fn triples(&self) -> BTreeSet<(usize, usize, usize)> {
        self.admitted().map(|e| (e.source, e.action_k, e.target)).collect()
    }

    pub fn count(&self, status: VerdictStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn write_csv<W: Write>(&self, loop_id: usize, out: W) -> Result<()> {
        write_relation_csv(loop_id, self.entries.iter(), out)
    }
}

pub fn write_relation_csv<'a, W: Write>(
    loop_id: usize,
    entries: impl Iterator<Item = &'a RelationEntry>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["loop_id", "source_region", "action_time_k", "target_region", "verdict", "residual"])?;
    for e in entries {
        w.write_record([
            loop_id.to_string(),
            e.source.to_string(),
            e.action_k.to_string(),
            e.target.to_string(),
            e.status.as_str().to_string(),
            format!("{:.6e}", e.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(problems: Vec<(usize, usize, usize)>, tables: &TimingTables, spec: &RegionSpec, s: &SdpSettings) -> Result<Relation> {
    let entries = problems
        .into_par_iter()
        .map(|(i, k, j)| {
            let p = assemble_transition_sdp(i, k, j, tables, spec)?;
            let v = sdp_feasibility(&p, s.tol, s.max_iter);
            Ok(RelationEntry { source: i, action_k: k, target: j, status: v.status, residual: v.residual })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Relation { entries })
}

/// Natural transitions `(i, i, j)` for all region pairs.
pub fn transition_relation(tables: &TimingTables, spec: &RegionSpec, s: &SdpSettings) -> Result<Relation> {
    let problems = spec.regions().flat_map(|i| spec.regions().map(move |j| (i, i, j))).collect();
    evaluate(problems, tables, spec, s)
}

/// Early action times available from region `i`.
pub fn early_times(i: usize, spec: &RegionSpec, allow_sub_miet: bool) -> std::ops::Range<usize> {
    let first = if allow_sub_miet { 1 } else { spec.k_min };
    first..i.max(first)
}

/// Early transitions `(i, k, j)` with `k < i`.
pub fn early_transition_relation(tables: &TimingTables, spec: &RegionSpec, s: &SdpSettings) -> Result<Relation> {
    let problems = spec
        .regions()
        .flat_map(|i| early_times(i, spec, s.allow_sub_miet_early).flat_map(move |k| spec.regions().map(move |j| (i, k, j))))
        .collect();
    evaluate(problems, tables, spec, s)
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, buf: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for v in buf.iter_mut().take(n) {
            *v = rng.sample(StandardNormal);
            norm += *v * *v;
        }
        if norm > 1e-24 {
            let inv = norm.sqrt().recip();
            buf.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// Successor regions observed from `samples` random directions that fall in
/// `Q_i`, each propagated for `k` periods. Deterministic in `seed`.
pub fn sampling_oracle(
    tables: &TimingTables,
    spec: &RegionSpec,
    i: usize,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<BTreeSet<usize>> {
    if k == 0 || k > i || k > tables.k_bar() || !spec.contains(i) {
        return Err(Error::input(format!("invalid oracle query (i = {i}, k = {k})")));
    }
    if samples == 0 {
        return Err(Error::input("need at least one sample"));
    }
    let n = tables.dim();
    let m = tables.m(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut seen = BTreeSet::new();
    for _ in 0..samples {
        random_unit(&mut rng, n, &mut x);
        if classify(&x, tables, spec) != i {
            continue;
        }
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = (0..n).map(|c| m[(r, c)] * x[c]).sum();
        }
        seen.insert(classify(&y, tables, spec));
    }
    Ok(seen)
}

/// Seed for one `(loop, i, k)` cell of a soundness sweep.
pub fn oracle_seed(base: u64, loop_id: usize, i: usize, k: usize) -> u64 {
    base ^ ((loop_id as u64) << 48) ^ ((i as u64) << 24) ^ (k as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::Vector;
    use rand_distr::Distribution;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(v))
    }

    #[test]
    fn trivially_feasible_problem() {
        let mut p = TraceLP::new(3);
        p.at_least(Matrix::identity(3, 3), 0.0);
        let v = sdp_feasibility(&p, 1e-6, 1000);
        assert_eq!(v.status, VerdictStatus::Feasible);
        match &v.certificate {
            Some(Certificate::Primal(x)) => assert!((x - Matrix::identity(3, 3) / 3.0).amax() < 1e-12),
            other => panic!("unexpected certificate {other:?}"),
        }
        assert!(check_certificate(&p, &v, 1e-6));
    }

    #[test]
    fn negative_trace_is_infeasible() {
        let mut p = TraceLP::new(2);
        p.at_least(-Matrix::identity(2, 2), 1.0);
        let v = sdp_feasibility(&p, 1e-6, 5000);
        assert_eq!(v.status, VerdictStatus::Infeasible);
        assert!(check_certificate(&p, &v, 1e-6));
    }

    #[test]
    fn opposite_definite_constraints_are_infeasible() {
        // xᵀ diag(1,2) x ≤ 0 forces x = 0, excluded by the trace
        let mut p = TraceLP::new(2);
        p.at_most(diag(&[1.0, 2.0]), 0.0);
        let v = sdp_feasibility(&p, 1e-6, 5000);
        assert_eq!(v.status, VerdictStatus::Infeasible);
        assert!(check_certificate(&p, &v, 1e-6));
    }

    #[test]
    fn needs_off_centre_solution() {
        // x₁² ≥ 4 x₂² and x₂² ≥ x₃²: feasible but not at I/n
        let mut p = TraceLP::new(3);
        p.at_least(diag(&[1.0, -4.0, 0.0]), 0.0);
        p.at_least(diag(&[0.0, 1.0, -1.0]), 0.0);
        p.at_most(diag(&[-1.0, 0.0, 3.0]), 0.0);
        let v = sdp_feasibility(&p, 1e-6, 20000);
        assert_eq!(v.status, VerdictStatus::Feasible, "{v:?}");
        assert!(check_certificate(&p, &v, 1e-6));
    }

    #[test]
    fn validation_requires_single_trace_equality() {
        let mut p = TraceLP::new(2);
        p.constraints.push(TraceConstraint { g: Matrix::identity(2, 2), sense: Sense::Equal(1.0) });
        assert!(p.validate().is_err());
        assert_eq!(sdp_feasibility(&p, 1e-6, 10).status, VerdictStatus::Unknown);
    }

    #[test]
    fn random_feasible_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = 4;
            let f = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
            let x0 = &f * f.transpose();
            let x0 = &x0 / x0.trace();
            let mut p = TraceLP::new(n);
            for _ in 0..rng.random_range(1..12) {
                let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
                let g = crate::lti::symmetrize(&g);
                if x0.component_mul(&g).sum() >= 0.0 {
                    p.at_least(g, 0.0);
                } else {
                    p.at_most(g, 0.0);
                }
            }
            let v = sdp_feasibility(&p, 1e-6, 20000);
            assert_eq!(v.status, VerdictStatus::Feasible);
            assert!(check_certificate(&p, &v, 1e-6));
        }
    }

    fn toy_tables() -> (TimingTables, RegionSpec) {
        // dynamics frozen (M = I)
        let ms = vec![Matrix::identity(2, 2); 3];
        let ns = vec![diag(&[1.0, -1.0]), diag(&[-1.0, 2.0]), diag(&[1.0, 1.0])];
        let t = TimingTables::from_parts(ms, ns).unwrap();
        (t, RegionSpec::new(1, 3, 1e-3).unwrap())
    }

    #[test]
    fn constraint_counts() {
        let (t, s) = toy_tables();
        let p = assemble_transition_sdp(1, 1, 1, &t, &s).unwrap();
        assert_eq!(p.constraints.len(), 3);
        assert_eq!(p.count(|c| matches!(c, Sense::AtLeast(_))), 2);
        let p = assemble_transition_sdp(1, 1, 2, &t, &s).unwrap();
        assert_eq!(p.constraints.len(), 4);
        assert!(assemble_transition_sdp(1, 1, 4, &t, &s).is_err());
        assert!(assemble_transition_sdp(2, 3, 1, &t, &s).is_err());
    }

    #[test]
    fn frozen_dynamics_oracle_stays_put() {
        let (t, s) = toy_tables();
        for i in [1, 2] {
            let seen = sampling_oracle(&t, &s, i, i, 2000, 3).unwrap();
            assert!(seen.iter().all(|&j| j == i), "{seen:?}");
        }
        assert!(sampling_oracle(&t, &s, 2, 0, 10, 1).is_err());
    }
}
