//! Top-M index scheduling over heterogeneous users.
//!
//! Every slot the scheduler computes one index per user from its predicted
//! ladder state — never from the true source, which it cannot observe — and
//! allocates the `M` channels to the `M` largest values.

use crate::closed_form::{whittle_aoi, whittle_aoii};
use crate::model::{LadderState, SourceParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("states and params lengths differ: {states} vs {params}")]
    LengthMismatch { states: usize, params: usize },

    #[error("channel count must be at least 1")]
    NoChannels,

    #[error("user set is empty")]
    NoUsers,

    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    WipAoii,
    WipAoi,
    WwipAoi,
    Random,
    RoundRobin,
    GreedyAoii,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::WipAoii,
        PolicyKind::WipAoi,
        PolicyKind::WwipAoi,
        PolicyKind::Random,
        PolicyKind::RoundRobin,
        PolicyKind::GreedyAoii,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::WipAoii => "WIP_AOII",
            PolicyKind::WipAoi => "WIP_AOI",
            PolicyKind::WwipAoi => "WWIP_AOI",
            PolicyKind::Random => "RANDOM",
            PolicyKind::RoundRobin => "ROUND_ROBIN",
            PolicyKind::GreedyAoii => "GREEDY_AOII",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.to_ascii_uppercase();
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == up)
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

/// How to order users whose index values are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieRule {
    /// Deterministic default: prefer the smaller user id.
    LowestId,
    /// Random priorities drawn from the given seed; deterministic per seed.
    SeededRandom(u64),
}

/// Per-user snapshot the scheduler ranks: index value, ladder state and
/// source parameters, aligned by user id.
#[derive(Debug, Clone, Default)]
pub struct IndexTable {
    values: Vec<f64>,
    states: Vec<LadderState>,
    params: Vec<SourceParams>,
}

impl IndexTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, user: usize) -> f64 {
        self.values[user]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn state(&self, user: usize) -> LadderState {
        self.states[user]
    }

    pub fn source(&self, user: usize) -> &SourceParams {
        &self.params[user]
    }

    /// Refills the table in place; see [`compute_indices`].
    pub fn recompute(
        &mut self,
        kind: PolicyKind,
        states: &[LadderState],
        params: &[SourceParams],
    ) -> Result<(), PolicyError> {
        if states.len() != params.len() {
            return Err(PolicyError::LengthMismatch {
                states: states.len(),
                params: params.len(),
            });
        }
        if states.is_empty() {
            return Err(PolicyError::NoUsers);
        }
        self.values.clear();
        self.values.extend(states.iter().zip(params).map(|(s, p)| match kind {
            PolicyKind::WipAoii => whittle_aoii(s.index(), p),
            PolicyKind::WipAoi => whittle_aoi(s.index(), p.rho()).expect("validated rho"),
            PolicyKind::WwipAoi => {
                p.p() * p.d() * whittle_aoi(s.index(), p.rho()).expect("validated rho")
            }
            PolicyKind::GreedyAoii => s.predicted_aoii(p),
            // Selection ignores the values for these kinds.
            PolicyKind::Random | PolicyKind::RoundRobin => 0.0,
        }));
        self.states.clear();
        self.states.extend_from_slice(states);
        self.params.clear();
        self.params.extend_from_slice(params);
        Ok(())
    }
}

/// Computes the per-user index table for a policy kind.
pub fn compute_indices(
    kind: PolicyKind,
    states: &[LadderState],
    params: &[SourceParams],
) -> Result<IndexTable, PolicyError> {
    let mut table = IndexTable::default();
    table.recompute(kind, states, params)?;
    Ok(table)
}

/// Selects the `min(m, N)` users with the largest index values; ties resolve
/// per `tie`. Returns user ids in ascending order.
pub fn select_top_m(
    table: &IndexTable,
    m: usize,
    tie: TieRule,
) -> Result<Vec<usize>, PolicyError> {
    let mut order = Vec::new();
    let mut out = Vec::new();
    select_top_m_into(table, m, tie, &mut order, &mut out)?;
    Ok(out)
}

/// Buffer-reusing form of [`select_top_m`] for per-slot use.
pub fn select_top_m_into(
    table: &IndexTable,
    m: usize,
    tie: TieRule,
    order: &mut Vec<usize>,
    out: &mut Vec<usize>,
) -> Result<(), PolicyError> {
    let n = table.len();
    if n == 0 {
        return Err(PolicyError::NoUsers);
    }
    if m < 1 {
        return Err(PolicyError::NoChannels);
    }
    let take = m.min(n);
    order.clear();
    order.extend(0..n);
    match tie {
        TieRule::LowestId => {
            order.sort_unstable_by(|&a, &b| {
                table.values[b].total_cmp(&table.values[a]).then(a.cmp(&b))
            });
        }
        TieRule::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let keys: Vec<u64> = (0..n).map(|_| rng.random()).collect();
            order.sort_unstable_by(|&a, &b| {
                table.values[b]
                    .total_cmp(&table.values[a])
                    .then(keys[a].cmp(&keys[b]))
                    .then(a.cmp(&b))
            });
        }
    }
    out.clear();
    out.extend_from_slice(&order[..take]);
    out.sort_unstable();
    Ok(())
}

/// Round-robin selection with an explicit cursor: picks `min(m, N)` users
/// starting at `cursor` and returns the advanced cursor.
pub fn round_robin_select(
    cursor: usize,
    n: usize,
    m: usize,
) -> Result<(Vec<usize>, usize), PolicyError> {
    let mut out = Vec::new();
    let next = round_robin_select_into(cursor, n, m, &mut out)?;
    Ok((out, next))
}

/// Buffer-reusing form of [`round_robin_select`].
pub fn round_robin_select_into(
    cursor: usize,
    n: usize,
    m: usize,
    out: &mut Vec<usize>,
) -> Result<usize, PolicyError> {
    if n == 0 {
        return Err(PolicyError::NoUsers);
    }
    if m < 1 {
        return Err(PolicyError::NoChannels);
    }
    let take = m.min(n);
    out.clear();
    out.extend((0..take).map(|i| (cursor + i) % n));
    out.sort_unstable();
    Ok((cursor + take) % n)
}
