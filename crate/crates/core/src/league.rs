//! Three-tier league model with leader value systems and promotion /
//! relegation between adjacent leagues.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audit::{EventBody, RankPhase};
use crate::domain::{DomainError, ResourceKind};
use crate::ids::{ResourceId, ValueSystemId};
use crate::portal::{NewAchievement, Portal};
use crate::ranking::{rank, Population, RankingError, RankingList};
use crate::state::EvalContext;
use crate::value_system::{aggregate_weights, AggregationMethod, Owner, PsvDocument, ValueSystemError};

pub const DEFAULT_EXCHANGE_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeagueName {
    Senior,
    Middle,
    Junior,
}

impl LeagueName {
    /// Top league first.
    pub const ALL: [LeagueName; 3] = [Self::Senior, Self::Middle, Self::Junior];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Senior => "senior",
            Self::Middle => "middle",
            Self::Junior => "junior",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn lower(self) -> Option<LeagueName> {
        Self::ALL.get(self.index() + 1).copied()
    }
}

impl fmt::Display for LeagueName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LeagueName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown league {s:?}"))
    }
}

fn default_exchange_count() -> usize {
    DEFAULT_EXCHANGE_COUNT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeagueConfig {
    /// Sizes of the senior, middle and junior leagues.
    pub league_sizes: [usize; 3],
    #[serde(default = "default_exchange_count")]
    pub exchange_count: usize,
}

impl LeagueConfig {
    pub fn new(league_sizes: [usize; 3], exchange_count: usize) -> Result<Self, LeagueError> {
        let cfg = Self {
            league_sizes,
            exchange_count,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LeagueError> {
        if self.league_sizes.contains(&0) {
            return Err(LeagueError::InvalidConfig("league sizes must be positive".into()));
        }
        if self.exchange_count == 0 {
            return Err(LeagueError::InvalidConfig("exchange count must be positive".into()));
        }
        let min = *self.league_sizes.iter().min().expect("three sizes");
        if self.exchange_count > min {
            return Err(LeagueError::InvalidConfig(format!(
                "exchange count {} exceeds the smallest league size {min}",
                self.exchange_count
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.league_sizes.iter().sum()
    }

    pub fn size(&self, league: LeagueName) -> usize {
        self.league_sizes[league.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueState {
    pub epoch: u64,
    pub config: LeagueConfig,
    /// Members of each league in rank order.
    pub leagues: BTreeMap<LeagueName, Vec<ResourceId>>,
    pub leaders: BTreeMap<LeagueName, ResourceId>,
    /// Value system each league is ranked under during the next epoch.
    pub leader_psvs: BTreeMap<LeagueName, ValueSystemId>,
    /// Value system the population was first ranked under; last-resort
    /// fallback for leaders without a value system.
    pub seed_vs: ValueSystemId,
}

impl LeagueState {
    pub fn members(&self, league: LeagueName) -> &[ResourceId] {
        self.leagues.get(&league).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn members_mut(&mut self, league: LeagueName) -> &mut Vec<ResourceId> {
        self.leagues.entry(league).or_default()
    }

    pub fn all_members(&self) -> impl Iterator<Item = &ResourceId> {
        LeagueName::ALL.into_iter().flat_map(|l| self.members(l))
    }

    /// Sizes match the config, leagues are disjoint and every leader heads
    /// its league.
    pub fn check_structure(&self) -> Result<(), String> {
        self.config.validate().map_err(|e| e.to_string())?;
        let mut seen = std::collections::BTreeSet::new();
        for league in LeagueName::ALL {
            let members = self.members(league);
            if members.len() != self.config.size(league) {
                return Err(format!(
                    "{league} has {} members, config says {}",
                    members.len(),
                    self.config.size(league)
                ));
            }
            for m in members {
                if !seen.insert(m) {
                    return Err(format!("{m} is in more than one league"));
                }
            }
            if self.leaders.get(&league) != members.first() {
                return Err(format!("{league} leader is not the top of its league"));
            }
            if !self.leader_psvs.contains_key(&league) {
                return Err(format!("{league} has no leader value system"));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> LeagueSnapshot {
        LeagueSnapshot {
            epoch: self.epoch,
            config: self.config,
            leagues: self.leagues.clone(),
            leaders: self.leaders.clone(),
        }
    }
}

/// Public view of the league state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueSnapshot {
    pub epoch: u64,
    pub config: LeagueConfig,
    pub leagues: BTreeMap<LeagueName, Vec<ResourceId>>,
    pub leaders: BTreeMap<LeagueName, ResourceId>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LeagueError {
    #[error("population has {found} members but the league sizes add up to {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid league config: {0}")]
    InvalidConfig(String),
    #[error("no value system resolvable for the {0} league")]
    LeaderPsvMissing(LeagueName),
    #[error("league is not initialized")]
    NotInitialized,
    #[error("league members must be persons; {0} is not")]
    NotAPerson(ResourceId),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    ValueSystem(#[from] ValueSystemError),
}

impl LeagueError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::SizeMismatch { .. } => "SIZE_MISMATCH",
            Self::InvalidConfig(_) => "INVALID_CONFIG",
            Self::LeaderPsvMissing(_) => "LEADER_PSV_MISSING",
            Self::NotInitialized => "LEAGUE_NOT_INITIALIZED",
            Self::NotAPerson(_) => "KIND_MISMATCH",
            Self::Ranking(e) => e.code(),
            Self::Domain(e) => e.code(),
            Self::ValueSystem(e) => e.code(),
        }
    }
}

/// Members moved between one adjacent pair of leagues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub upper: LeagueName,
    pub lower: LeagueName,
    /// Bottom of the upper league, in rank order.
    pub relegated: Vec<ResourceId>,
    /// Top of the lower league, in rank order.
    pub promoted: Vec<ResourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochOutcome {
    /// Epoch number reached.
    pub epoch: u64,
    pub pre_exchange: BTreeMap<LeagueName, RankingList>,
    pub exchanges: Vec<Exchange>,
    pub post_exchange: BTreeMap<LeagueName, RankingList>,
    pub league: LeagueSnapshot,
}

/// Swap the bottom `p` of `upper` with the top `p` of `lower`. Relegated
/// members go to the head of the lower league in their order, promoted
/// members to the tail of the upper league.
pub fn exchange(upper: &mut Vec<ResourceId>, lower: &mut Vec<ResourceId>, p: usize) -> (Vec<ResourceId>, Vec<ResourceId>) {
    let relegated = upper.split_off(upper.len() - p);
    let promoted: Vec<_> = lower.drain(..p).collect();
    upper.extend(promoted.iter().cloned());
    lower.splice(0..0, relegated.iter().cloned());
    (relegated, promoted)
}

/// Label of the collective value system derived for a league whose leader
/// has none.
fn fallback_label(league: LeagueName) -> String {
    format!("{league} league mean")
}

impl Portal {
    fn league_state(&self) -> Result<&LeagueState, LeagueError> {
        self.state().league.as_ref().ok_or(LeagueError::NotInitialized)
    }

    /// Value system a league led by `leader` is ranked under: the leader's
    /// own, else the mean of the members' value systems, else `seed`.
    fn resolve_leader_psv(
        &mut self,
        league: LeagueName,
        leader: &ResourceId,
        members: &[ResourceId],
        seed: &ValueSystemId,
    ) -> Result<ValueSystemId, LeagueError> {
        let state = self.state();
        if let Some(vs) = state.resource(leader)?.psv.clone() {
            return Ok(vs);
        }
        let psvs: Vec<_> = members
            .iter()
            .filter_map(|m| state.resources.get(m)?.psv.as_ref())
            .filter_map(|vs| state.value_systems.get(vs))
            .collect();
        if psvs.is_empty() {
            if !state.value_systems.contains_key(seed) {
                return Err(LeagueError::LeaderPsvMissing(league));
            }
            return Ok(seed.clone());
        }
        let weights = aggregate_weights(&psvs, &AggregationMethod::Mean, |_| None)?;
        let label = fallback_label(league);
        let existing = state
            .value_systems
            .values()
            .find(|vs| vs.owner == Owner::Collective && vs.label == label && vs.weights == weights);
        if let Some(vs) = existing {
            return Ok(vs.id.clone());
        }
        let vs = self.create_value_system(PsvDocument {
            id: None,
            owner: Owner::Collective,
            label,
            weights,
        })?;
        Ok(vs.id)
    }

    /// Rank `population` globally under `seed_vs` and split it into leagues.
    pub fn init_league(
        &mut self,
        population: Vec<ResourceId>,
        seed_vs: &ValueSystemId,
        config: LeagueConfig,
    ) -> Result<LeagueSnapshot, LeagueError> {
        config.validate()?;
        if population.len() != config.total() {
            return Err(LeagueError::SizeMismatch {
                expected: config.total(),
                found: population.len(),
            });
        }
        for m in &population {
            if self.state().resource(m)?.kind != ResourceKind::Person {
                return Err(LeagueError::NotAPerson(m.clone()));
            }
        }
        let seed = self.value_system(seed_vs)?.clone();
        self.transaction(|p| {
            let pop = Population::new(p.state(), population, EvalContext::default())?;
            let ranking = rank(p.state(), &pop, &seed)?;
            let mut order = ranking.entries.into_iter().map(|e| e.resource);
            let mut leagues = BTreeMap::new();
            let mut leaders = BTreeMap::new();
            let mut leader_psvs = BTreeMap::new();
            for league in LeagueName::ALL {
                let members: Vec<_> = order.by_ref().take(config.size(league)).collect();
                let leader = members[0].clone();
                let vs = p.resolve_leader_psv(league, &leader, &members, &seed.id)?;
                leaders.insert(league, leader);
                leader_psvs.insert(league, vs);
                leagues.insert(league, members);
            }
            let state = LeagueState {
                epoch: 0,
                config,
                leagues,
                leaders,
                leader_psvs,
                seed_vs: seed.id.clone(),
            };
            let snapshot = state.snapshot();
            p.emit(EventBody::LeagueInitialized { league: state });
            Ok(snapshot)
        })
    }

    /// Rank one league's members under its current leader value system.
    pub fn rank_league(&self, league: LeagueName) -> Result<RankingList, LeagueError> {
        let ls = self.league_state()?;
        let vs_id = ls
            .leader_psvs
            .get(&league)
            .ok_or(LeagueError::LeaderPsvMissing(league))?;
        let vs = self
            .state()
            .value_systems
            .get(vs_id)
            .ok_or(LeagueError::LeaderPsvMissing(league))?;
        let pop = Population::new(self.state(), ls.members(league).to_vec(), EvalContext::default())?;
        Ok(rank(self.state(), &pop, vs)?)
    }

    fn rank_all(&mut self, phase: RankPhase) -> Result<BTreeMap<LeagueName, RankingList>, LeagueError> {
        let mut out = BTreeMap::new();
        for league in LeagueName::ALL {
            let list = self.rank_league(league)?;
            self.emit(EventBody::LeagueRanked {
                league,
                phase,
                value_system: list.value_system.clone(),
                order: list.entries.iter().map(|e| e.resource.clone()).collect(),
            });
            out.insert(league, list);
        }
        Ok(out)
    }

    /// Exchange members between senior and middle, then middle and junior,
    /// based on the current league orders.
    pub fn reconfigure(&mut self) -> Result<Vec<Exchange>, LeagueError> {
        let p = self.league_state()?.config.exchange_count;
        let mut out = Vec::new();
        for upper in [LeagueName::Senior, LeagueName::Middle] {
            let lower = upper.lower().expect("senior and middle have a lower league");
            let ls = self.league_state()?;
            let mut up = ls.members(upper).to_vec();
            let mut low = ls.members(lower).to_vec();
            let (relegated, promoted) = exchange(&mut up, &mut low, p);
            for (i, member) in relegated.iter().enumerate() {
                self.emit(EventBody::Relegated {
                    member: member.clone(),
                    from: upper,
                    to: lower,
                    position: i,
                });
            }
            let base = up.len() - p;
            for (i, member) in promoted.iter().enumerate() {
                self.emit(EventBody::Promoted {
                    member: member.clone(),
                    from: lower,
                    to: upper,
                    position: base + i,
                });
            }
            debug_assert_eq!(self.league_state()?.members(upper), up.as_slice());
            debug_assert_eq!(self.league_state()?.members(lower), low.as_slice());
            out.push(Exchange {
                upper,
                lower,
                relegated,
                promoted,
            });
        }
        Ok(out)
    }

    /// One epoch: attach new achievements, rank, exchange, re-rank, pick
    /// leaders and their value systems for the next epoch. Nothing changes
    /// if any step fails.
    pub fn run_epoch(&mut self, new_achievements: Vec<NewAchievement>) -> Result<EpochOutcome, LeagueError> {
        let epoch = self.league_state()?.epoch;
        self.transaction(|p| {
            p.emit(EventBody::EpochStarted { epoch });
            for a in new_achievements {
                p.attach_achievement(a)?;
            }
            let pre_exchange = p.rank_all(RankPhase::PreExchange)?;
            let exchanges = p.reconfigure()?;
            let post_exchange = p.rank_all(RankPhase::PostExchange)?;
            let seed = p.league_state()?.seed_vs.clone();
            for league in LeagueName::ALL {
                let ls = p.league_state()?;
                let members = ls.members(league).to_vec();
                let previous = ls.leaders.get(&league).cloned();
                let previous_vs = ls.leader_psvs.get(&league).cloned();
                let leader = members[0].clone();
                let vs = p.resolve_leader_psv(league, &leader, &members, &seed)?;
                if previous.as_ref() != Some(&leader) || previous_vs.as_ref() != Some(&vs) {
                    p.emit(EventBody::LeaderChanged {
                        league,
                        previous,
                        leader,
                        value_system: vs,
                    });
                }
            }
            p.emit(EventBody::EpochCompleted { epoch: epoch + 1 });
            Ok(EpochOutcome {
                epoch: epoch + 1,
                pre_exchange,
                exchanges,
                post_exchange,
                league: p.league_state()?.snapshot(),
            })
        })
    }
}
