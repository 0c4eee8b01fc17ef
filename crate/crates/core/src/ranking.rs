//! Weighted-sum scoring and deterministic ranking.
//!
//! Raw indicator values are min-max normalized over the evaluated
//! population, multiplied by the normalized weights of a value system and
//! summed. Entries are ordered by descending score; scores within
//! [`TIE_EPSILON`] of each other are ties and are ordered by ascending
//! resource id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::{digest_hex, fnv1a64};
use crate::domain::{DomainError, ResourceKind};
use crate::ids::{IndicatorId, ResourceId, ValueSystemId};
use crate::state::{EvalContext, State};
use crate::value_system::{normalize, ValueSystem, ValueSystemError, Weights};

/// Scores closer than this are considered equal.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankingError {
    #[error("indicator values must be finite")]
    NonFiniteInput,
    #[error("population is empty")]
    EmptyPopulation,
    #[error("resource {0} appears twice in the population")]
    DuplicateResource(ResourceId),
    #[error("population mixes {0} and {1} resources")]
    MixedKinds(ResourceKind, ResourceKind),
    #[error("resource {0} is not in the population")]
    ResourceNotInPopulation(ResourceId),
    #[error("rankings cover different populations")]
    PopulationMismatch,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    ValueSystem(#[from] ValueSystemError),
}

impl RankingError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NonFiniteInput => "NON_FINITE_INPUT",
            Self::EmptyPopulation => "EMPTY_POPULATION",
            Self::DuplicateResource(_) => "DUPLICATE_RESOURCE",
            Self::MixedKinds(..) => "MIXED_KINDS",
            Self::ResourceNotInPopulation(_) => "RESOURCE_NOT_IN_POPULATION",
            Self::PopulationMismatch => "POPULATION_MISMATCH",
            Self::Domain(e) => e.code(),
            Self::ValueSystem(e) => e.code(),
        }
    }
}

/// Min-max normalization to `[0, 1]`. A population where every value is
/// equal (including a singleton) maps to all zeros.
pub fn normalize_indicator(raw: &[f64]) -> Result<Vec<f64>, RankingError> {
    if raw.is_empty() {
        return Err(RankingError::EmptyPopulation);
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(RankingError::NonFiniteInput);
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range <= 0.0 {
        return Ok(vec![0.0; raw.len()]);
    }
    Ok(raw.iter().map(|x| ((x - min) / range).clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorBreakdown {
    pub raw: f64,
    pub normalized: f64,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub resource: ResourceId,
    pub score: f64,
    pub per_indicator: BTreeMap<IndicatorId, IndicatorBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub resource: ResourceId,
    pub score: f64,
    /// 1-based position.
    pub rank: usize,
    pub per_indicator: BTreeMap<IndicatorId, IndicatorBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingList {
    pub value_system: ValueSystemId,
    /// Digest of the evaluated population.
    pub population: String,
    pub entries: Vec<RankedEntry>,
}

impl RankingList {
    pub fn order(&self) -> Vec<&ResourceId> {
        self.entries.iter().map(|e| &e.resource).collect()
    }

    pub fn entry(&self, id: &ResourceId) -> Option<&RankedEntry> {
        self.entries.iter().find(|e| &e.resource == id)
    }
}

/// Raw indicator values of a population, one row per resource.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub indicators: Vec<IndicatorId>,
    pub rows: Vec<(ResourceId, Vec<f64>)>,
}

/// Digest identifying a population and its evaluation context.
pub fn population_hash(ids: &[ResourceId], ctx: &EvalContext) -> String {
    let mut sorted: Vec<&str> = ids.iter().map(ResourceId::as_str).collect();
    sorted.sort_unstable();
    let mut text = sorted.join("\n");
    if let Some(y) = ctx.as_of_year {
        text.push_str(&format!("\nas_of={y}"));
    }
    for (ind, floor) in &ctx.status_floors {
        text.push_str(&format!("\nfloor:{ind}={floor:?}"));
    }
    digest_hex(fnv1a64(text.as_bytes()))
}

/// Score every row of the table under the given (not necessarily
/// normalized) weights. Indicators absent from the table get no
/// contribution.
pub fn score_table(table: &RawTable, weights: &Weights) -> Result<Vec<ScoredEntry>, RankingError> {
    if table.rows.is_empty() {
        return Err(RankingError::EmptyPopulation);
    }
    let mut seen = BTreeSet::new();
    for (id, _) in &table.rows {
        if !seen.insert(id) {
            return Err(RankingError::DuplicateResource(id.clone()));
        }
    }
    let normalized_weights = normalize(weights);
    let columns: Vec<Vec<f64>> = (0..table.indicators.len())
        .map(|j| {
            let col: Vec<f64> = table.rows.iter().map(|(_, v)| v[j]).collect();
            normalize_indicator(&col)
        })
        .collect::<Result<_, _>>()?;
    Ok(table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (id, raw))| {
            let per_indicator: BTreeMap<_, _> = table
                .indicators
                .iter()
                .enumerate()
                .map(|(j, ind)| {
                    let weight = normalized_weights.get(ind).copied().unwrap_or(0.0);
                    let normalized = columns[j][i];
                    let b = IndicatorBreakdown {
                        raw: raw[j],
                        normalized,
                        weight,
                        contribution: weight * normalized,
                    };
                    (ind.clone(), b)
                })
                .collect();
            let score = per_indicator
                .values()
                .map(|b| b.contribution)
                .sum::<f64>()
                .clamp(0.0, 1.0);
            ScoredEntry {
                resource: id.clone(),
                score,
                per_indicator,
            }
        })
        .collect())
}

/// Sort scored entries into ranking order.
pub fn order_entries(mut entries: Vec<ScoredEntry>) -> Vec<RankedEntry> {
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.resource.cmp(&b.resource))
    });
    // Chain adjacent near-equal scores into tie groups, then order each
    // group by id.
    let mut start = 0;
    for i in 1..=entries.len() {
        let split = i == entries.len() || entries[i - 1].score - entries[i].score > TIE_EPSILON;
        if split {
            entries[start..i].sort_by(|a, b| a.resource.cmp(&b.resource));
            start = i;
        }
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| RankedEntry {
            resource: e.resource,
            score: e.score,
            rank: i + 1,
            per_indicator: e.per_indicator,
        })
        .collect()
}

pub fn rank_table(
    table: &RawTable,
    value_system: &ValueSystemId,
    weights: &Weights,
    population: String,
) -> Result<RankingList, RankingError> {
    let entries = order_entries(score_table(table, weights)?);
    Ok(RankingList {
        value_system: value_system.clone(),
        population,
        entries,
    })
}

/// A homogeneous, duplicate-free, non-empty set of resources to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub kind: ResourceKind,
    pub members: Vec<ResourceId>,
    #[serde(default)]
    pub context: EvalContext,
}

impl Population {
    pub fn new(
        state: &State,
        members: Vec<ResourceId>,
        context: EvalContext,
    ) -> Result<Self, RankingError> {
        let first = members.first().ok_or(RankingError::EmptyPopulation)?;
        let kind = state.resource(first)?.kind;
        let mut seen = BTreeSet::new();
        for m in &members {
            let r = state.resource(m)?;
            if r.kind != kind {
                return Err(RankingError::MixedKinds(kind, r.kind));
            }
            if !seen.insert(m) {
                return Err(RankingError::DuplicateResource(m.clone()));
            }
        }
        Ok(Self {
            kind,
            members,
            context,
        })
    }

    /// Every registered resource of `kind`.
    pub fn of_kind(state: &State, kind: ResourceKind) -> Result<Self, RankingError> {
        let members = state.resources_of_kind(kind).map(|r| r.id.clone()).collect();
        Self::new(state, members, EvalContext::default())
    }

    pub fn hash(&self) -> String {
        population_hash(&self.members, &self.context)
    }

    pub fn contains(&self, id: &ResourceId) -> bool {
        self.members.contains(id)
    }
}

/// Raw values of the population over the indicators a value system weighs.
pub fn raw_table(state: &State, population: &Population, vs: &ValueSystem) -> Result<RawTable, RankingError> {
    let indicators = vs
        .weights
        .keys()
        .map(|id| state.indicator(id))
        .collect::<Result<Vec<_>, _>>()?;
    let matrix = state.raw_matrix(&population.members, &indicators, &population.context);
    Ok(RawTable {
        indicators: vs.weights.keys().cloned().collect(),
        rows: population.members.iter().cloned().zip(matrix).collect(),
    })
}

pub fn rank(state: &State, population: &Population, vs: &ValueSystem) -> Result<RankingList, RankingError> {
    let table = raw_table(state, population, vs)?;
    rank_table(&table, &vs.id, &vs.weights, population.hash())
}

pub fn score(
    state: &State,
    resource: &ResourceId,
    vs: &ValueSystem,
    population: &Population,
) -> Result<ScoredEntry, RankingError> {
    if !population.contains(resource) {
        return Err(RankingError::ResourceNotInPopulation(resource.clone()));
    }
    let table = raw_table(state, population, vs)?;
    score_table(&table, &vs.weights)?
        .into_iter()
        .find(|e| &e.resource == resource)
        .ok_or_else(|| RankingError::ResourceNotInPopulation(resource.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub resource: ResourceId,
    pub value_system: ValueSystemId,
    pub population: String,
    pub population_size: usize,
    pub rank: usize,
    /// Share of the rest of the population ranked below this resource, in
    /// percent. A singleton population reports 100.
    pub percentile: f64,
    pub score: f64,
    pub per_indicator: BTreeMap<IndicatorId, IndicatorBreakdown>,
    /// Indicator with the largest positive contribution.
    pub strongest: Option<IndicatorId>,
    /// Indicator with the smallest contribution.
    pub weakest: Option<IndicatorId>,
    /// Indicators on which the resource tops the population while the value
    /// system weighs them below an equal share.
    pub undervalued: Vec<IndicatorId>,
}

pub fn assessment_report(
    state: &State,
    resource: &ResourceId,
    vs: &ValueSystem,
    population: &Population,
) -> Result<AssessmentReport, RankingError> {
    if !population.contains(resource) {
        return Err(RankingError::ResourceNotInPopulation(resource.clone()));
    }
    let list = rank(state, population, vs)?;
    Ok(report_from_ranking(&list, resource).expect("resource is in the ranking"))
}

/// Build a report for one entry of an existing ranking.
pub fn report_from_ranking(list: &RankingList, resource: &ResourceId) -> Option<AssessmentReport> {
    let entry = list.entry(resource)?;
    let n = list.entries.len();
    let percentile = if n <= 1 {
        100.0
    } else {
        (n - entry.rank) as f64 / (n - 1) as f64 * 100.0
    };
    let by_contribution = || entry.per_indicator.iter().map(|(id, b)| (id, b.contribution));
    let strongest = by_contribution()
        .filter(|(_, c)| *c > 0.0)
        .fold(None, |best: Option<(&IndicatorId, f64)>, (id, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((id, c)),
        })
        .map(|(id, _)| id.clone());
    let weakest = by_contribution()
        .fold(None, |worst: Option<(&IndicatorId, f64)>, (id, c)| match worst {
            Some((_, wc)) if wc <= c => worst,
            _ => Some((id, c)),
        })
        .map(|(id, _)| id.clone());
    let fair_share = 1.0 / entry.per_indicator.len().max(1) as f64;
    let undervalued = entry
        .per_indicator
        .iter()
        .filter(|(_, b)| b.normalized >= 1.0 && b.weight < fair_share)
        .map(|(id, _)| id.clone())
        .collect();
    Some(AssessmentReport {
        resource: resource.clone(),
        value_system: list.value_system.clone(),
        population: list.population.clone(),
        population_size: n,
        rank: entry.rank,
        percentile,
        score: entry.score,
        per_indicator: entry.per_indicator.clone(),
        strongest,
        weakest,
        undervalued,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDelta {
    pub rank_a: usize,
    pub rank_b: usize,
    /// `rank_a - rank_b`; negative when the resource drops in `b`.
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingComparison {
    pub value_system_a: ValueSystemId,
    pub value_system_b: ValueSystemId,
    pub deltas: BTreeMap<ResourceId, RankDelta>,
    /// Number of discordant pairs.
    pub kendall_tau_distance: u64,
    pub pairs: u64,
}

pub fn compare_rankings(a: &RankingList, b: &RankingList) -> Result<RankingComparison, RankingError> {
    let ranks_a: BTreeMap<&ResourceId, usize> = a.entries.iter().map(|e| (&e.resource, e.rank)).collect();
    let ranks_b: BTreeMap<&ResourceId, usize> = b.entries.iter().map(|e| (&e.resource, e.rank)).collect();
    if ranks_a.len() != a.entries.len()
        || ranks_b.len() != b.entries.len()
        || !ranks_a.keys().eq(ranks_b.keys())
    {
        return Err(RankingError::PopulationMismatch);
    }
    let deltas = ranks_a
        .iter()
        .map(|(id, &ra)| {
            let rb = ranks_b[id];
            (
                (*id).clone(),
                RankDelta {
                    rank_a: ra,
                    rank_b: rb,
                    delta: ra as i64 - rb as i64,
                },
            )
        })
        .collect();
    // Positions in b, listed in a's order; discordant pairs are inversions.
    let seq: Vec<usize> = a.entries.iter().map(|e| ranks_b[&e.resource]).collect();
    let mut discordant = 0u64;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] > seq[j] {
                discordant += 1;
            }
        }
    }
    let n = seq.len() as u64;
    Ok(RankingComparison {
        value_system_a: a.value_system.clone(),
        value_system_b: b.value_system.clone(),
        deltas,
        kendall_tau_distance: discordant,
        pairs: n * n.saturating_sub(1) / 2,
    })
}
