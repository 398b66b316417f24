//! Fluid-limit equations for Robin Hood hashing.
//!
//! The table is summarised by tail vectors: `s[i]` is the fraction of cells
//! holding a live key of age at least `i`, `u[i]` the fraction holding a
//! tombstone of age at least `i`. The age of the key currently being placed
//! follows a fast Markov chain (the level process) whose equilibrium, given
//! the tails, drives the slow evolution of the tails themselves.
//!
//! Three regimes are covered:
//!
//! * insert-only filling, integrated with forward Euler and cross-checked
//!   against the closed-form recurrence in [`celis_tails`];
//! * alternating deletions and insertions without tombstones, with the
//!   equilibrium tail given by [`no_tombstone_equilibrium`];
//! * alternating deletions and insertions with tombstones, where ages drift
//!   upward forever and only finite-horizon integration makes sense.
//!
//! All integrators run in scaled time `t`, one unit per `n` placement
//! attempts, and stop on an integrated insertion counter.

mod closed_form;
mod decay;
mod evolve;
mod level;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use closed_form::{celis_tails, no_tombstone_equilibrium, unsuccessful_search_cost};
pub use decay::{decay_envelope_check, DecayEnvelope, DecayVerdict};
pub use evolve::{
    insert_only_evolve, insert_only_fill, insert_only_fill_observed, no_tombstone_evolve,
    no_tombstone_evolve_observed, tombstone_evolve, tombstone_evolve_observed, Snapshot,
};
pub use level::{
    level_insert_only, no_tombstone_level, tombstone_level_equilibrium, tombstone_level_iterate,
    tombstone_level_residual,
};

/// Slack allowed when validating monotone tails built by callers.
const TAIL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("tail mass {mass:e} at depth {depth} exceeds the truncation tolerance")]
    Truncation { depth: usize, mass: f64 },
    #[error(
        "level equilibrium did not converge after {iterations} iterations (last change {change:e})"
    )]
    Convergence { iterations: usize, change: f64 },
}

/// A non-increasing vector of tail fractions, indexed from age 1.
///
/// Used both for live-key tails (`s`) and tombstone tails (`u`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tail(Vec<f64>);

pub type AgeTail = Tail;
pub type TombTail = Tail;

impl Tail {
    pub fn new(values: Vec<f64>) -> Result<Self, FluidError> {
        for (i, &v) in values.iter().enumerate() {
            if !(-TAIL_SLACK..=1.0 + TAIL_SLACK).contains(&v) {
                return Err(FluidError::InvalidArgument(format!(
                    "tail value {v} at age {} outside [0, 1]",
                    i + 1
                )));
            }
            if i > 0 && v > values[i - 1] + TAIL_SLACK {
                return Err(FluidError::InvalidArgument(format!(
                    "tail increases at age {}",
                    i + 1
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(depth: usize) -> Self {
        Self(vec![0.0; depth])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Truncation depth `K`.
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Value at age `i` (1-based); zero beyond the truncation depth.
    pub fn get(&self, i: usize) -> f64 {
        assert!(i >= 1, "tails are indexed from age 1");
        self.0.get(i - 1).copied().unwrap_or(0.0)
    }

    /// Values for ages `1..=depth`.
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Largest age with a non-zero value, or 0.
    pub fn support(&self) -> usize {
        self.0.iter().rposition(|&v| v > 0.0).map_or(0, |i| i + 1)
    }
}

/// Equilibrium of the level process.
///
/// `p[i-1]` is the probability that the key being placed has age at least
/// `i`; `q` is the probability of the deletion state (zero when there are no
/// deletions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDistribution {
    pub p: Vec<f64>,
    pub q: f64,
}

impl LevelDistribution {
    /// Probability that the placed key has age at least `i` (1-based).
    pub fn p(&self, i: usize) -> f64 {
        assert!(i >= 1);
        self.p.get(i - 1).copied().unwrap_or(0.0)
    }
}

/// Which form of the tombstone `ds_i/dt` equation to integrate.
///
/// The creation term reads `sum_{j>=i} (p_j - p_{j+1}) (1 - X - u_{j+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TombstoneVariant {
    /// `X = s_i`: a hand key of age `>= i` landing on an empty cell, an
    /// eligible tombstone, or a resident younger than `i`. Agrees with
    /// simulation.
    #[default]
    AsWritten,
    /// `X = s_1`, mirroring the level-process `q` equation. Counts only
    /// empty cells and tombstones as creation events.
    ConservationConsistent,
}

/// How the tombstone level equilibrium is obtained each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelMethod {
    /// Exact O(K) solve of the truncated balance equations.
    #[default]
    Direct,
    /// Warm-started damped fixed-point iteration of the level chain.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Euler step in scaled time.
    pub dt: f64,
    /// Initial truncation depth `K`.
    pub depth: usize,
    /// Depth doubles whenever `s[K] + u[K]` exceeds this.
    pub tail_tol: f64,
    /// Depth never grows past this; exceeding it is a truncation error.
    pub max_depth: usize,
    pub fixed_point_tol: f64,
    pub variant: TombstoneVariant,
    pub level_method: LevelMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-6,
            depth: 64,
            tail_tol: 1e-12,
            max_depth: 4096,
            fixed_point_tol: 1e-12,
            variant: TombstoneVariant::default(),
            level_method: LevelMethod::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_variant(mut self, variant: TombstoneVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), FluidError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FluidError::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.depth < 2 {
            return Err(FluidError::InvalidArgument(
                "depth must be at least 2".into(),
            ));
        }
        if self.max_depth < self.depth {
            return Err(FluidError::InvalidArgument("max_depth below depth".into()));
        }
        if self.tail_tol.is_nan()
            || self.fixed_point_tol.is_nan()
            || self.tail_tol <= 0.0
            || self.fixed_point_tol <= 0.0
        {
            return Err(FluidError::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// State of a fluid-limit trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    /// Scaled time.
    pub t: f64,
    pub s: AgeTail,
    /// Tombstone tail; all zero outside the tombstone regime.
    pub u: TombTail,
    /// Completed insertions divided by the number of cells.
    pub inserted_mass: f64,
}

pub(crate) fn check_load(name: &str, load: f64) -> Result<(), FluidError> {
    if !(0.0..1.0).contains(&load) {
        return Err(FluidError::InvalidArgument(format!(
            "{name} must lie in [0, 1), got {load}"
        )));
    }
    Ok(())
}
