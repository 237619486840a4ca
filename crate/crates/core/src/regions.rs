//! Quotient states: the effective inter-event range and the map from a held
//! state to its discrete inter-event time.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{lambda_max, lambda_min, TimingTables, Vector};

pub const DEFAULT_EIG_THRESHOLD: f64 = 1e-3;

/// Effective range `[k_min, k_max]` of inter-event multiples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub k_min: usize,
    pub k_max: usize,
    pub eig_threshold: f64,
}

impl RegionSpec {
    pub fn new(k_min: usize, k_max: usize, eig_threshold: f64) -> Result<Self> {
        if k_min == 0 || k_min > k_max {
            return Err(Error::input(format!("invalid region range [{k_min}, {k_max}]")));
        }
        Ok(RegionSpec { k_min, k_max, eig_threshold })
    }

    pub fn regions(&self) -> std::ops::RangeInclusive<usize> {
        self.k_min..=self.k_max
    }

    pub fn len(&self) -> usize {
        self.k_max - self.k_min + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: usize) -> bool {
        self.regions().contains(&k)
    }
}

/// Discards the leading forms that can never fire and stops at the first form
/// that fires for every state.
///
/// * `k_min` is the first `k` with `λ_max(N(k)) > eig_threshold`.
/// * `k_max` is the first `k ≥ k_min` whose form is positive semidefinite up to
///   the relative margin, `λ_min(N(k)) > −eig_threshold · λ_max(N(k))`, or
///   `k_bar` when none is.
pub fn effective_bounds(tables: &TimingTables, eig_threshold: f64) -> Result<RegionSpec> {
    if !(eig_threshold > 0.0) {
        return Err(Error::input("eig_threshold must be positive"));
    }
    let k_bar = tables.k_bar();
    let Some(k_min) = (1..=k_bar).find(|&k| lambda_max(tables.n(k)) > eig_threshold) else {
        warn!("no triggering form ever fires within k_bar = {k_bar}; using a single region");
        return RegionSpec::new(k_bar, k_bar, eig_threshold);
    };
    let k_max = (k_min..=k_bar)
        .find(|&k| {
            let n = tables.n(k);
            lambda_min(n) > -eig_threshold * lambda_max(n)
        })
        .unwrap_or(k_bar);
    RegionSpec::new(k_min, k_max, eig_threshold)
}

#[inline]
pub(crate) fn quad_form(n: &crate::lti::Matrix, x: &[f64]) -> f64 {
    let dim = x.len();
    let mut acc = 0.0;
    for j in 0..dim {
        let mut col = 0.0;
        for i in 0..dim {
            col += n[(i, j)] * x[i];
        }
        acc += col * x[j];
    }
    acc
}

/// Region index of a held state: the first `k` in `[k_min, k_max)` with
/// `xᵀN(k)x > 0`, otherwise `k_max`.
pub fn region_of_state(x: &Vector, tables: &TimingTables, spec: &RegionSpec) -> Result<usize> {
    if x.len() != tables.dim() {
        return Err(Error::input(format!("state has dimension {}, expected {}", x.len(), tables.dim())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite state"));
    }
    Ok(classify(x.as_slice(), tables, spec))
}

pub(crate) fn classify(x: &[f64], tables: &TimingTables, spec: &RegionSpec) -> usize {
    (spec.k_min..spec.k_max)
        .find(|&k| quad_form(tables.n(k), x) > 0.0)
        .unwrap_or(spec.k_max)
}
