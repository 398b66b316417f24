//! Robin Hood hashing with random probe sequences, the fluid-limit equations
//! that describe its age distribution, and a seeded Monte Carlo harness for
//! checking one against the other.
//!
//! * [`table`] is the discrete hash table.
//! * [`fluid`] solves the limiting differential equations and recurrences.
//! * [`sim`] runs many independent tables and aggregates their statistics.
//! * [`compare`] scores simulations against theory.

pub mod compare;
pub mod fluid;
pub mod probe;
pub mod sim;
pub mod table;

pub use compare::{compare, tails_to_key_fractions, CompareError, ComparisonReport, ComparisonRow};
pub use fluid::{AgeTail, FluidError, FluidState, LevelDistribution, SolverConfig, Tail, TombTail};
pub use probe::{KeyId, ProbeMode, ProbeParams};
pub use sim::{run_experiment, MeanStd, SimConfig, SimError, SimStats};
pub use table::{RobinHoodTable, TableError, TableMode};
