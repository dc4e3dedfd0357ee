//! Source and channel model.
//!
//! A source is a birth chain: each slot it advances one state with
//! probability `p` (states are `d` apart) or stays put. The monitor keeps the
//! last delivered sample, so `j` slots after a delivery the source–monitor
//! gap is `Binomial(j, p)` states. Summing the expected gap over the window
//! gives the predicted AoII ladder `b^j = d·p·j(j+1)/2`. Two further ladders
//! share the same index: the AoI ladder `c^j = j` and the empirical AoII
//! ladder `e^j = d·j(j+1)/2`, which advances only when the source actually
//! jumps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ModelError {
    #[error("jump probability must lie in [0, 1], got {0}")]
    JumpProbability(f64),

    #[error("state distance must be positive and finite, got {0}")]
    Distance(f64),

    #[error("channel success probability must lie in (0, 1], got {0}")]
    ChannelProbability(f64),

    #[error("gap offset k={k} exceeds elapsed window {elapsed}")]
    GapOffset { k: u32, elapsed: u32 },
}

/// Per-user model parameters: jump probability `p`, state distance `d`,
/// channel success probability `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    p: f64,
    d: f64,
    rho: f64,
}

impl SourceParams {
    pub fn new(p: f64, d: f64, rho: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(ModelError::JumpProbability(p));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(ModelError::Distance(d));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(ModelError::ChannelProbability(rho));
        }
        Ok(Self { p, d, rho })
    }

    /// Probability that the source advances one state in a slot.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Distance between consecutive source states.
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Per-slot channel success probability.
    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// What happened to one user in one slot.
///
/// `channel_success` is only meaningful when `scheduled` is true; the step
/// functions ignore it otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub scheduled: bool,
    pub channel_success: bool,
    pub source_jump: bool,
}

/// Position on a state ladder: `j` slots since the event that reset it.
///
/// For the predicted and AoI ladders the reset event is a successful
/// delivery and `j` counts elapsed slots; for the empirical ladder `j`
/// counts source jumps since the last delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LadderState(u32);

impl LadderState {
    pub const ZERO: LadderState = LadderState(0);

    pub fn new(j: u32) -> Self {
        LadderState(j)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    fn triangle(self) -> f64 {
        let j = f64::from(self.0);
        0.5 * j * (j + 1.0)
    }

    /// Predicted AoII value `b^j = d·p·j(j+1)/2`.
    pub fn predicted_aoii(self, params: &SourceParams) -> f64 {
        params.d() * params.p() * self.triangle()
    }

    /// AoI value `c^j = j`.
    pub fn aoi(self) -> u32 {
        self.0
    }

    /// Empirical AoII value `e^j = d·j(j+1)/2`.
    pub fn empirical_penalty(self, distance: f64) -> f64 {
        distance * self.triangle()
    }

    /// Predicted-ladder step: reset on a successful scheduled transmission,
    /// advance otherwise. The source jump is irrelevant here — the predicted
    /// state is a deterministic function of elapsed time.
    pub fn step_predicted(self, outcome: SlotOutcome) -> LadderState {
        if outcome.scheduled && outcome.channel_success {
            LadderState(0)
        } else {
            LadderState(self.0 + 1)
        }
    }

    /// Empirical-ladder step: reset on a successful scheduled transmission,
    /// advance on a source jump, stay otherwise.
    pub fn step_empirical(self, outcome: SlotOutcome) -> LadderState {
        if outcome.scheduled && outcome.channel_success {
            LadderState(0)
        } else if outcome.source_jump {
            LadderState(self.0 + 1)
        } else {
            self
        }
    }
}

/// Probability that the source–monitor gap equals `elapsed - k` states after
/// `elapsed` slots without a delivery: the gap is `Binomial(elapsed, p)`, so
/// this is `C(elapsed, k) · p^(elapsed-k) · (1-p)^k`.
pub fn gap_pmf(k: u32, elapsed: u32, p: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(ModelError::JumpProbability(p));
    }
    if k > elapsed {
        return Err(ModelError::GapOffset { k, elapsed });
    }
    // Binomial pmf at m = elapsed - k successes out of elapsed trials.
    let m = elapsed - k;
    let mut acc = (1.0 - p).powi(k as i32);
    for i in 1..=m {
        acc *= f64::from(elapsed - m + i) / f64::from(i) * p;
    }
    Ok(acc)
}

/// Simulates one birth-chain path and returns the exact cumulative
/// distance-weighted mismatch at each offset since the start, where the
/// start is taken as the last agreement point.
///
/// Entry `j` of the result is `Σ_{u=0}^{j} gap(u)·d`, whose expectation over
/// seeds is the predicted AoII `d·p·j(j+1)/2`. Deterministic for a fixed
/// seed.
pub fn simulate_true_source(params: &SourceParams, horizon: u32, seed: u64) -> Vec<f64> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(horizon as usize);
    let mut gap = 0u64;
    let mut acc = 0.0;
    out.push(0.0);
    for _ in 1..horizon {
        if rng.random::<f64>() < params.p() {
            gap += 1;
        }
        acc += gap as f64 * params.d();
        out.push(acc);
    }
    out
}
