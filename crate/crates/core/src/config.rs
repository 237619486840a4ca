//! TOML project configuration.
//!
//! ```toml
//! out_dir = "out"
//! base_tick = "1/100"        # optional, defaults to the gcd of the periods
//!
//! [network]
//! delta = 1
//!
//! [earliness]
//! r = 2
//! e_ref = 1
//! bound = 2
//!
//! [[loops]]
//! a = [[...], ...]           # row-major
//! b = [[...], ...]
//! h = "0.01"
//! k_bar = 20
//! initial_state = [1.0, -1.0, 1.0, -1.0]
//! lqr = { q = [[...]], r = [[...]] }     # or k = [[...]]
//! rho = 0.8                              # or q_trig = [[...]]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::EarlinessParams;
use crate::lti::{parse_period, Matrix, Period, Vector};
use crate::regions::DEFAULT_EIG_THRESHOLD;
use crate::sdp::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::sim::Arbiter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrWeights {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Gain with `u = K x̂`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_trig: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Decay weight of the Lyapunov design; defaults to `Q + KᵀRK` with LQR
    /// weights and to the identity otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_lyap: Option<Vec<Vec<f64>>>,
    /// Exact period, decimal or `p/q`.
    pub h: String,
    pub k_bar: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub delta: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlinessConfig {
    pub r: u32,
    pub e_ref: u32,
    pub bound: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbstractionConfig {
    pub eig_threshold: f64,
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
    /// Early edges at every clock value below the region, not only from `k_min`.
    pub allow_sub_miet_early: bool,
    /// Samples per `(i, k)` for the `validate` oracle sweep.
    pub oracle_samples: usize,
    pub oracle_seed: u64,
    /// Random initial states per loop for conformance trials.
    pub conformance_states: usize,
    pub conformance_events: usize,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        AbstractionConfig {
            eig_threshold: DEFAULT_EIG_THRESHOLD,
            sdp_tol: DEFAULT_TOL,
            sdp_max_iter: DEFAULT_MAX_ITER,
            allow_sub_miet_early: true,
            oracle_samples: 10_000,
            oracle_seed: 1,
            conformance_states: 1_000,
            conformance_events: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub duration: f64,
    pub arbiter: Arbiter,
    pub seed: u64,
    pub prefer_early: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { duration: 1.0, arbiter: Arbiter::RoundRobin, seed: 0, prefer_early: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_tick: Option<String>,
    pub network: NetworkConfig,
    pub earliness: EarlinessConfig,
    #[serde(default)]
    pub abstraction: AbstractionConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    pub loops: Vec<LoopConfig>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what}: matrix rows must be nonempty and of equal length")));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

pub fn rows_from_matrix(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl LoopConfig {
    pub fn period(&self) -> Result<Period> {
        parse_period(&self.h)
    }

    pub fn initial(&self) -> Option<Vector> {
        self.initial_state.as_ref().map(|v| Vector::from_vec(v.clone()))
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let at = |msg: &str| Error::Config(format!("loop {}: {msg}", idx + 1));
        if self.k.is_some() == self.lqr.is_some() {
            return Err(at("give exactly one of `k` and `lqr`"));
        }
        if self.q_trig.is_some() == self.rho.is_some() {
            return Err(at("give exactly one of `q_trig` and `rho`"));
        }
        if self.q_lyap.is_some() && self.rho.is_none() {
            return Err(at("`q_lyap` only applies to the `rho` design"));
        }
        let a = matrix_from_rows(&self.a, "a")?;
        let b = matrix_from_rows(&self.b, "b")?;
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n {
            return Err(at("`a` must be square and `b` must have as many rows"));
        }
        let m = b.ncols();
        let check = |rows: &Option<Vec<Vec<f64>>>, r: usize, c: usize, what: &str| -> Result<()> {
            if let Some(rows) = rows {
                let x = matrix_from_rows(rows, what)?;
                if x.shape() != (r, c) {
                    return Err(at(&format!("`{what}` must be {r}×{c}")));
                }
            }
            Ok(())
        };
        check(&self.k, m, n, "k")?;
        check(&self.q_trig, 2 * n, 2 * n, "q_trig")?;
        check(&self.q_lyap, n, n, "q_lyap")?;
        if let Some(w) = &self.lqr {
            check(&Some(w.q.clone()), n, n, "lqr.q")?;
            check(&Some(w.r.clone()), m, m, "lqr.r")?;
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != n {
                return Err(at("`initial_state` has the wrong length"));
            }
        }
        let h = self.period().map_err(|e| at(&e.to_string()))?;
        if *h.numer() <= 0 {
            return Err(at("`h` must be positive"));
        }
        if self.k_bar == 0 {
            return Err(at("`k_bar` must be positive"));
        }
        Ok(())
    }
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ProjectConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.loops.is_empty() {
            return Err(Error::Config("at least one loop is required".into()));
        }
        for (i, l) in self.loops.iter().enumerate() {
            l.validate(i)?;
        }
        if self.network.delta == 0 {
            return Err(Error::Config("network.delta must be positive".into()));
        }
        self.earliness_params()?;
        if let Some(t) = &self.base_tick {
            parse_period(t)?;
        }
        let a = &self.abstraction;
        if !(a.eig_threshold > 0.0) || !(a.sdp_tol > 0.0) || a.sdp_max_iter == 0 {
            return Err(Error::Config("abstraction tolerances must be positive".into()));
        }
        if !(self.simulation.duration > 0.0) {
            return Err(Error::Config("simulation.duration must be positive".into()));
        }
        Ok(())
    }

    pub fn earliness_params(&self) -> Result<EarlinessParams> {
        let e = &self.earliness;
        EarlinessParams::new(e.r, e.e_ref, e.bound).map_err(|err| Error::Config(err.to_string()))
    }

    pub fn base_tick(&self) -> Result<Option<Period>> {
        self.base_tick.as_deref().map(parse_period).transpose()
    }

    pub fn periods(&self) -> Result<Vec<Period>> {
        self.loops.iter().map(LoopConfig::period).collect()
    }
}
