//! Scheduling status updates from remote Markovian sources to minimize the
//! age of incorrect information (AoII).
//!
//! A monitor pulls updates from `N` sensors over unreliable channels, `M`
//! channels per slot. Each source is a birth chain that advances one state
//! (distance `d`) with probability `p` per slot; a scheduled transmission
//! succeeds with probability `rho`. The monitor never observes a source
//! directly, so it schedules on the *predicted* AoII — the expected
//! distance-weighted mismatch accumulated since the last delivery.
//!
//! The crate provides:
//!
//! - [`model`]: the source/channel model, the three state ladders (predicted
//!   AoII, AoI, empirical AoII) and their per-slot evolution;
//! - [`closed_form`]: stationary distribution under a threshold policy,
//!   average AoII / AoI / active time, indexability, and the Whittle index
//!   polynomials together with an intersection-point construction;
//! - [`solver`]: relative value iteration for the single-user dual problem
//!   with a transmission penalty `W`, threshold extraction, and a bisection
//!   routine that locates index values independently of the closed forms;
//! - [`policy`]: top-M index scheduling (WIP-AoII, WIP-AoI, WWIP-AoI) plus
//!   random, round-robin and greedy baselines;
//! - [`sim`]: a deterministic multi-user Monte Carlo engine with common
//!   random numbers and replication statistics;
//! - [`verify`]: numerical cross-checks of every closed form against
//!   independent oracles (balance equations, truncated series, bisection).

pub mod closed_form;
pub mod model;
pub mod policy;
pub mod sim;
pub mod solver;
pub mod verify;

pub use closed_form::{Metric, ThresholdPolicy};
pub use model::{LadderState, SlotOutcome, SourceParams};
pub use policy::{IndexTable, PolicyKind, TieRule};
pub use sim::{ChannelBudget, RunResult, SimConfig, UserClass};
pub use solver::{DualProblem, SolveResult};
