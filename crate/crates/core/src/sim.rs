//! Deterministic multi-epoch league simulation with synthetic achievements.
//!
//! Randomness comes from SplitMix64: the state advances by
//! `0x9E3779B97F4A7C15` (wrapping) per draw and the output is the state
//! passed through the finalizer
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! An increment for a rule `{min, max}` is `min + next() % (max - min + 1)`.
//! Draws happen per epoch, per league member in ascending id order, per rule
//! in declaration order.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::audit::AuditEvent;
use crate::domain::{Aggregation, AttributeType, AttributeValue, StatusFloor, MAX_YEAR, MIN_YEAR};
use crate::ids::{IndicatorId, ResourceId};
use crate::league::{LeagueError, LeagueName, LeagueSnapshot};
use crate::portal::{Clock, NewAchievement, Portal};
use crate::state::State;

/// Largest increment a rule may draw.
pub const MAX_INCREMENT: u32 = 1000;

pub const SIMULATOR_ACTOR: &str = "simulator";

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish integer in `min..=max` by modulo reduction.
    pub fn range(&mut self, min: u32, max: u32) -> u32 {
        let span = u64::from(max - min) + 1;
        min + (self.next_u64() % span) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementRule {
    pub indicator: IndicatorId,
    pub min: u32,
    pub max: u32,
}

fn default_base_year() -> i32 {
    2024
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Calendar year of epoch 0's synthetic achievements; later epochs
    /// advance one year each.
    #[serde(default = "default_base_year")]
    pub base_year: i32,
    #[serde(default)]
    pub rules: Vec<IncrementRule>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_year: default_base_year(),
            rules: Vec::new(),
        }
    }
}

impl GeneratorConfig {
    /// Each starter indicator grows by `0..=max` per member and epoch.
    pub fn uniform(indicators: &[&str], max: u32) -> Self {
        Self {
            base_year: default_base_year(),
            rules: indicators
                .iter()
                .map(|id| IncrementRule {
                    indicator: IndicatorId::new(*id).expect("valid indicator id"),
                    min: 0,
                    max,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid generator config: {0}")]
    InvalidGeneratorConfig(String),
    #[error(transparent)]
    League(#[from] LeagueError),
}

impl SimulationError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidGeneratorConfig(_) => "INVALID_GENERATOR_CONFIG",
            Self::League(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub seed: u64,
    pub epochs: u64,
    /// League state before the first simulated epoch and after each one.
    pub trajectory: Vec<LeagueSnapshot>,
    pub events: Vec<AuditEvent>,
    /// Digest of the final state's canonical serialization.
    pub final_digest: String,
}

impl Simulation {
    pub fn final_snapshot(&self) -> &LeagueSnapshot {
        self.trajectory.last().expect("trajectory holds the initial snapshot")
    }
}

fn validate(state: &State, cfg: &GeneratorConfig, epochs: u64, start_epoch: u64) -> Result<(), SimulationError> {
    let bad = |m: String| Err(SimulationError::InvalidGeneratorConfig(m));
    if epochs == 0 {
        return bad("epochs must be at least 1".into());
    }
    let first = i64::from(cfg.base_year) + start_epoch as i64;
    let last = first + epochs as i64 - 1;
    if first < i64::from(MIN_YEAR) || last > i64::from(MAX_YEAR) {
        return bad(format!("synthetic years {first}..={last} leave {MIN_YEAR}..={MAX_YEAR}"));
    }
    for rule in &cfg.rules {
        if !state.indicators.contains_key(&rule.indicator) {
            return bad(format!("unknown indicator {}", rule.indicator));
        }
        if rule.min > rule.max {
            return bad(format!("rule for {} has min > max", rule.indicator));
        }
        if rule.max > MAX_INCREMENT {
            return bad(format!("rule for {} exceeds the maximum increment {MAX_INCREMENT}", rule.indicator));
        }
    }
    Ok(())
}

fn year_start(year: i32) -> DateTime<Utc> {
    NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("validated year")
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
}

/// Synthetic achievements for one member and one increment.
fn synthesize(
    state: &State,
    owner: &ResourceId,
    indicator: &IndicatorId,
    n: u32,
    year: i32,
    tag: &str,
) -> Vec<NewAchievement> {
    if n == 0 {
        return Vec::new();
    }
    let ind = &state.indicators[indicator];
    let ex = &ind.extractor;
    let ty = state
        .schema
        .attribute_type(ex.category, &ex.attribute)
        .expect("indicator attributes are declared");
    let one = |value: AttributeValue, k: u32| {
        let verified = ex.status_floor == StatusFloor::Verified;
        NewAchievement {
            owner: owner.clone(),
            category: ex.category,
            attributes: BTreeMap::from([(ex.attribute.clone(), value)]),
            year,
            evidence_uri: verified.then(|| format!("synthetic://{tag}/{owner}/{indicator}/{k}")),
            verified_by: verified.then(|| SIMULATOR_ACTOR.to_string()),
        }
    };
    match ex.aggregation {
        Aggregation::Sum | Aggregation::Max => vec![one(AttributeValue::Number(f64::from(n)), 0)],
        Aggregation::Count => (0..n)
            .map(|k| {
                let value = match ty {
                    AttributeType::Number => AttributeValue::Number(1.0),
                    AttributeType::Boolean => AttributeValue::Boolean(true),
                    AttributeType::Text => AttributeValue::Text("synthetic".into()),
                };
                one(value, k)
            })
            .collect(),
    }
}

/// Run `epochs` league epochs on a copy of `initial` with synthetic
/// achievements. The initial state is not modified.
pub fn simulate(
    initial: &State,
    epochs: u64,
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<Simulation, SimulationError> {
    let league = initial.league.as_ref().ok_or(LeagueError::NotInitialized)?;
    let start_epoch = league.epoch;
    validate(initial, cfg, epochs, start_epoch)?;
    let mut rng = SplitMix64::new(seed);
    let mut portal = Portal::new(initial.clone(), Clock::Fixed(year_start(cfg.base_year)));
    let mut trajectory = vec![league.snapshot()];
    for _ in 0..epochs {
        let state = portal.state();
        let ls = state.league.as_ref().expect("league present");
        let year = cfg.base_year + ls.epoch as i32;
        let tag = format!("s{seed}/e{}", ls.epoch);
        let mut members: Vec<_> = LeagueName::ALL
            .into_iter()
            .flat_map(|l| ls.members(l).iter().cloned())
            .collect();
        members.sort();
        let mut batch = Vec::new();
        for m in &members {
            for rule in &cfg.rules {
                let n = rng.range(rule.min, rule.max);
                batch.extend(synthesize(state, m, &rule.indicator, n, year, &tag));
            }
        }
        portal.set_clock(Clock::Fixed(year_start(year)));
        let outcome = portal.run_epoch(batch)?;
        trajectory.push(outcome.league);
    }
    let events = portal.take_pending();
    let final_digest = crate::store::state_digest(portal.state());
    Ok(Simulation {
        seed,
        epochs,
        trajectory,
        events,
        final_digest,
    })
}

/// First epoch at which two trajectories disagree, if any.
pub fn divergence_epoch(a: &Simulation, b: &Simulation) -> Option<u64> {
    a.trajectory
        .iter()
        .zip(&b.trajectory)
        .find(|(x, y)| x != y)
        .map(|(x, _)| x.epoch)
        .or_else(|| {
            (a.trajectory.len() != b.trajectory.len())
                .then(|| a.trajectory.len().min(b.trajectory.len()) as u64)
        })
}
