//! Multi-user discrete-time Monte Carlo engine.
//!
//! Slot order: compute indices from the predicted states, select `M` users,
//! draw channel and jump randomness, step the empirical (cost) and predicted
//! (scheduler) ladders, then accrue the post-transition empirical penalty.
//! Averages exclude the warmup prefix.
//!
//! Randomness is organized so that the draw for `(user, slot)` is a fixed
//! function of the episode seed: user `i` owns streams `2i` (jumps) and
//! `2i+1` (channel) of a ChaCha8 keystream, advanced once per slot whether
//! or not the draw is consumed. Policies compared on the same seed therefore
//! see common random numbers, and adding users does not perturb existing
//! streams.

use crate::closed_form::ThresholdPolicy;
use crate::model::{LadderState, SlotOutcome, SourceParams};
use crate::policy::{self, IndexTable, PolicyError, PolicyKind, TieRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Stream id for per-slot policy randomness (random baseline tie-breaking).
const POLICY_STREAM: u64 = u64::MAX;
/// Stream id for deriving per-replication seeds.
const REPLICATION_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("class proportions must sum to 1, got {0}")]
    ClassProportions(f64),

    #[error("class proportion must be finite and nonnegative, got {0}")]
    BadProportion(f64),

    #[error("at least one user class is required")]
    NoClasses,

    #[error("user count must be at least 1")]
    NoUsers,

    #[error("channel count {m} out of range 1..={n}")]
    ChannelCount { m: usize, n: usize },

    #[error("warmup {warmup} must be shorter than horizon {horizon}")]
    WarmupTooLong { warmup: u64, horizon: u64 },

    #[error("replication count must be at least 1")]
    NoReplications,

    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// A population class: shared parameters plus its share of the user count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserClass {
    pub params: SourceParams,
    pub proportion: f64,
}

/// Channels per slot, either fixed or as a fraction of the population
/// (`M = round(alpha · N)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelBudget {
    Count(usize),
    Fraction(f64),
}

impl ChannelBudget {
    pub fn channels_for(self, n_users: usize) -> usize {
        match self {
            ChannelBudget::Count(m) => m,
            ChannelBudget::Fraction(alpha) => (alpha * n_users as f64).round() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub classes: Vec<UserClass>,
    pub n_users: usize,
    pub budget: ChannelBudget,
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub common_random_numbers: bool,
}

impl SimConfig {
    pub fn channels(&self) -> usize {
        self.budget.channels_for(self.n_users)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.classes.is_empty() {
            return Err(SimError::NoClasses);
        }
        let mut total = 0.0;
        for class in &self.classes {
            if !class.proportion.is_finite() || class.proportion < 0.0 {
                return Err(SimError::BadProportion(class.proportion));
            }
            total += class.proportion;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::ClassProportions(total));
        }
        if self.n_users == 0 {
            return Err(SimError::NoUsers);
        }
        let m = self.channels();
        if m < 1 || m > self.n_users {
            return Err(SimError::ChannelCount { m, n: self.n_users });
        }
        if self.warmup >= self.horizon {
            return Err(SimError::WarmupTooLong { warmup: self.warmup, horizon: self.horizon });
        }
        Ok(())
    }

    /// Users per class by largest-remainder apportionment; ties go to the
    /// earlier class. Users are laid out class by class, so a fixed
    /// population is assigned deterministically.
    pub fn class_counts(&self) -> Vec<usize> {
        let n = self.n_users;
        let mut counts: Vec<usize> = self
            .classes
            .iter()
            .map(|c| (c.proportion * n as f64).floor() as usize)
            .collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<(f64, usize)> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.proportion * n as f64 - counts[i] as f64, i))
            .collect();
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, class) in order.iter().take(n.saturating_sub(assigned)) {
            counts[class] += 1;
        }
        counts
    }
}

/// One replication's outcome, keyed by its derived seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub avg_cost: f64,
    pub per_class: Vec<f64>,
}

/// Time- and user-averaged empirical AoII cost, with replication statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mean_cost: f64,
    pub std_err: f64,
    pub per_class: Vec<f64>,
    pub replications: Vec<ReplicationOutcome>,
    pub trace: Option<Vec<f64>>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn policy_salt(kind: PolicyKind) -> u64 {
    let tag = PolicyKind::ALL.iter().position(|k| *k == kind).unwrap() as u64 + 1;
    tag.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct EpisodeOutput {
    avg_cost: f64,
    per_class: Vec<f64>,
    trace: Option<Vec<f64>>,
}

fn episode(
    config: &SimConfig,
    kind: PolicyKind,
    seed: u64,
    record_trace: bool,
) -> Result<EpisodeOutput, SimError> {
    let n = config.n_users;
    let m = config.channels();
    let counts = config.class_counts();

    let mut user_params = Vec::with_capacity(n);
    let mut class_of = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            user_params.push(config.classes[class].params);
            class_of.push(class);
        }
    }

    let mut jump_rngs: Vec<ChaCha8Rng> =
        (0..n).map(|i| stream_rng(seed, 2 * i as u64)).collect();
    let mut chan_rngs: Vec<ChaCha8Rng> =
        (0..n).map(|i| stream_rng(seed, 2 * i as u64 + 1)).collect();
    let mut policy_rng = stream_rng(seed, POLICY_STREAM);

    let mut pred = vec![LadderState::ZERO; n];
    let mut emp = vec![LadderState::ZERO; n];
    let mut since_success = vec![0u64; n];
    let mut scheduled = vec![false; n];
    let mut table = IndexTable::default();
    let mut order_buf: Vec<usize> = Vec::new();
    let mut selected: Vec<usize> = Vec::new();
    let mut cursor = 0usize;

    let mut acc = 0.0;
    let mut class_acc = vec![0.0; config.classes.len()];
    let mut trace = record_trace.then(|| Vec::with_capacity(config.horizon as usize));

    for t in 0..config.horizon {
        match kind {
            PolicyKind::RoundRobin => {
                cursor = policy::round_robin_select_into(cursor, n, m, &mut selected)?;
            }
            PolicyKind::Random => {
                table.recompute(kind, &pred, &user_params)?;
                let tie = TieRule::SeededRandom(policy_rng.random());
                policy::select_top_m_into(&table, m, tie, &mut order_buf, &mut selected)?;
            }
            _ => {
                table.recompute(kind, &pred, &user_params)?;
                policy::select_top_m_into(
                    &table,
                    m,
                    TieRule::LowestId,
                    &mut order_buf,
                    &mut selected,
                )?;
            }
        }
        for &u in &selected {
            scheduled[u] = true;
        }

        let mut slot_cost = 0.0;
        for i in 0..n {
            let jump = jump_rngs[i].random::<f64>() < user_params[i].p();
            let chan = chan_rngs[i].random::<f64>();
            let success = scheduled[i] && chan < user_params[i].rho();
            let outcome = SlotOutcome {
                scheduled: scheduled[i],
                channel_success: success,
                source_jump: jump,
            };
            emp[i] = emp[i].step_empirical(outcome);
            pred[i] = pred[i].step_predicted(outcome);
            since_success[i] = if success { 0 } else { since_success[i] + 1 };
            debug_assert_eq!(
                u64::from(pred[i].index()),
                since_success[i],
                "predicted ladder diverged from the elapsed-slots counter"
            );

            let penalty = emp[i].empirical_penalty(user_params[i].d());
            if t >= config.warmup {
                acc += penalty;
                class_acc[class_of[i]] += penalty;
            }
            slot_cost += penalty;
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(slot_cost / n as f64);
        }
        for &u in &selected {
            scheduled[u] = false;
        }
    }

    let slots = (config.horizon - config.warmup) as f64;
    let per_class = counts
        .iter()
        .zip(&class_acc)
        .map(|(&count, &sum)| if count == 0 { 0.0 } else { sum / (slots * count as f64) })
        .collect();
    Ok(EpisodeOutput { avg_cost: acc / (slots * n as f64), per_class, trace })
}

fn single_run_result(seed: u64, out: EpisodeOutput) -> RunResult {
    RunResult {
        mean_cost: out.avg_cost,
        std_err: 0.0,
        per_class: out.per_class.clone(),
        replications: vec![ReplicationOutcome {
            replication: 0,
            seed,
            avg_cost: out.avg_cost,
            per_class: out.per_class,
        }],
        trace: out.trace,
    }
}

/// Runs one episode under `kind`. Bit-reproducible for a fixed seed.
pub fn run_episode(
    config: &SimConfig,
    kind: PolicyKind,
    seed: u64,
) -> Result<RunResult, SimError> {
    config.validate()?;
    Ok(single_run_result(seed, episode(config, kind, seed, false)?))
}

/// Like [`run_episode`], additionally recording the per-slot population-mean
/// empirical penalty.
pub fn run_episode_with_trace(
    config: &SimConfig,
    kind: PolicyKind,
    seed: u64,
) -> Result<RunResult, SimError> {
    config.validate()?;
    Ok(single_run_result(seed, episode(config, kind, seed, true)?))
}

/// Per-replication seeds derived from the master seed, fixed up front so the
/// replication set is independent of evaluation order and policy kind.
pub fn replication_seeds(master_seed: u64, replications: usize) -> Vec<u64> {
    let mut rng = stream_rng(master_seed, REPLICATION_STREAM);
    (0..replications).map(|_| rng.random()).collect()
}

/// Mean and standard error over independent replications. With
/// `common_random_numbers` the per-replication seeds are shared across
/// policy kinds; otherwise each kind perturbs them.
pub fn estimate_cost(
    config: &SimConfig,
    kind: PolicyKind,
    replications: usize,
) -> Result<RunResult, SimError> {
    config.validate()?;
    if replications < 1 {
        return Err(SimError::NoReplications);
    }
    let outcomes: Vec<ReplicationOutcome> = replication_seeds(config.seed, replications)
        .into_iter()
        .enumerate()
        .map(|(r, base)| {
            let seed = if config.common_random_numbers {
                base
            } else {
                splitmix64(base ^ policy_salt(kind))
            };
            let out = episode(config, kind, seed, false)?;
            Ok(ReplicationOutcome {
                replication: r,
                seed,
                avg_cost: out.avg_cost,
                per_class: out.per_class,
            })
        })
        .collect::<Result<_, SimError>>()?;

    let count = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.avg_cost).sum::<f64>() / count;
    let std_err = if outcomes.len() >= 2 {
        let var = outcomes.iter().map(|o| (o.avg_cost - mean).powi(2)).sum::<f64>()
            / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    let per_class = (0..config.classes.len())
        .map(|c| outcomes.iter().map(|o| o.per_class[c]).sum::<f64>() / count)
        .collect();
    Ok(RunResult { mean_cost: mean, std_err, per_class, replications: outcomes, trace: None })
}

/// Empirical distribution of the predicted ladder for a single user driven
/// by threshold policy `n` for `horizon` slots. Oracle for the stationary
/// closed form.
pub fn occupancy_measure(
    params: &SourceParams,
    n: ThresholdPolicy,
    horizon: u64,
    seed: u64,
) -> Vec<f64> {
    assert!(horizon >= 10_000, "occupancy estimates need at least 10^4 slots");
    let mut chan = stream_rng(seed, 1);
    let mut counts: Vec<u64> = vec![0];
    let mut j = 0u32;
    for _ in 0..horizon {
        if counts.len() <= j as usize {
            counts.resize(j as usize + 1, 0);
        }
        counts[j as usize] += 1;
        let success = n.is_active(j) && chan.random::<f64>() < params.rho();
        j = if success { 0 } else { j + 1 };
    }
    counts.into_iter().map(|c| c as f64 / horizon as f64).collect()
}

/// Time-averaged empirical AoII of a single user forced to follow threshold
/// policy `n` on its predicted ladder. This tracks the empirical chain's own
/// steady state, which is distinct from the predicted-ladder average.
pub fn threshold_empirical_cost(
    params: &SourceParams,
    n: ThresholdPolicy,
    horizon: u64,
    warmup: u64,
    seed: u64,
) -> f64 {
    assert!(warmup < horizon, "warmup must be shorter than the horizon");
    let mut jump_rng = stream_rng(seed, 0);
    let mut chan_rng = stream_rng(seed, 1);
    let mut pred = LadderState::ZERO;
    let mut emp = LadderState::ZERO;
    let mut acc = 0.0;
    for t in 0..horizon {
        let scheduled = n.is_active(pred.index());
        let jump = jump_rng.random::<f64>() < params.p();
        let success = scheduled && chan_rng.random::<f64>() < params.rho();
        let outcome = SlotOutcome { scheduled, channel_success: success, source_jump: jump };
        emp = emp.step_empirical(outcome);
        pred = pred.step_predicted(outcome);
        if t >= warmup {
            acc += emp.empirical_penalty(params.d());
        }
    }
    acc / (horizon - warmup) as f64
}
