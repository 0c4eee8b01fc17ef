//! The complete registry state and its event-driven transition function.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::audit::{AuditEvent, EventBody, ReplayError};
use crate::domain::{
    Achievement, DomainError, Indicator, Resource, ResourceKind, SchemaRegistry, StatusFloor,
};
use crate::ids::{AchievementId, IndicatorId, ResourceId, ValueSystemId};
use crate::league::{LeagueName, LeagueState};
use crate::value_system::{Owner, ValueSystem};

/// Monotone counters backing generated identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub resources: u64,
    pub achievements: u64,
    pub value_systems: u64,
}

/// Evaluation context for indicator extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalContext {
    /// Only achievements with `year <= as_of_year` count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of_year: Option<i32>,
    /// Per-indicator status floor overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub status_floors: BTreeMap<IndicatorId, StatusFloor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub schema: SchemaRegistry,
    pub resources: BTreeMap<ResourceId, Resource>,
    pub achievements: BTreeMap<AchievementId, Achievement>,
    pub indicators: BTreeMap<IndicatorId, Indicator>,
    pub value_systems: BTreeMap<ValueSystemId, ValueSystem>,
    pub league: Option<LeagueState>,
    pub counters: Counters,
    /// Sequence number of the last applied audit event.
    pub audit_head: u64,
}

impl Default for State {
    fn default() -> Self {
        Self::genesis()
    }
}

fn inconsistent(seq: u64, reason: impl Into<String>) -> ReplayError {
    ReplayError::Inconsistent {
        seq,
        reason: reason.into(),
    }
}

impl State {
    /// Empty state over the starter schema. No indicators are defined yet.
    pub fn genesis() -> Self {
        Self {
            schema: SchemaRegistry::starter(),
            resources: BTreeMap::new(),
            achievements: BTreeMap::new(),
            indicators: BTreeMap::new(),
            value_systems: BTreeMap::new(),
            league: None,
            counters: Counters::default(),
            audit_head: 0,
        }
    }

    pub fn resource(&self, id: &ResourceId) -> Result<&Resource, DomainError> {
        self.resources
            .get(id)
            .ok_or_else(|| DomainError::UnknownResource(id.clone()))
    }

    pub fn indicator(&self, id: &IndicatorId) -> Result<&Indicator, DomainError> {
        self.indicators
            .get(id)
            .ok_or_else(|| DomainError::UnknownIndicator(id.clone()))
    }

    pub fn resources_of_kind(&self, kind: ResourceKind) -> impl Iterator<Item = &Resource> {
        self.resources.values().filter(move |r| r.kind == kind)
    }

    /// Apply one audit event. The event's sequence number must directly
    /// follow `audit_head`.
    pub fn apply(&mut self, ev: &AuditEvent) -> Result<(), ReplayError> {
        let expected = self.audit_head + 1;
        if ev.seq != expected {
            return Err(ReplayError::SequenceGap {
                expected,
                found: ev.seq,
            });
        }
        let seq = ev.seq;
        match &ev.body {
            EventBody::ResourceRegistered { resource } => {
                if self.resources.contains_key(&resource.id) {
                    return Err(inconsistent(seq, format!("resource {} exists", resource.id)));
                }
                if let Some(parent) = &resource.member_of {
                    let p = self
                        .resources
                        .get(parent)
                        .ok_or_else(|| inconsistent(seq, format!("unknown parent {parent}")))?;
                    if Some(p.kind) != resource.kind.parent_kind() {
                        return Err(inconsistent(seq, "parent kind mismatch"));
                    }
                }
                self.resources.insert(resource.id.clone(), resource.clone());
                self.counters.resources += 1;
            }
            EventBody::AchievementAttached { achievement } => {
                if self.achievements.contains_key(&achievement.id) {
                    return Err(inconsistent(seq, format!("achievement {} exists", achievement.id)));
                }
                match self.resources.get(&achievement.owner) {
                    Some(r) if r.kind == ResourceKind::Person => {}
                    _ => return Err(inconsistent(seq, "owner is not a registered person")),
                }
                self.achievements.insert(achievement.id.clone(), achievement.clone());
                self.counters.achievements += 1;
            }
            EventBody::VerificationChanged {
                achievement,
                from,
                to,
                evidence_uri,
                ..
            } => {
                let a = self
                    .achievements
                    .get_mut(achievement)
                    .ok_or_else(|| inconsistent(seq, format!("unknown achievement {achievement}")))?;
                if a.status != *from || !from.can_transition_to(*to) {
                    return Err(inconsistent(seq, "status transition does not match"));
                }
                if let Some(uri) = evidence_uri {
                    a.evidence_uri = Some(uri.clone());
                }
                a.status = *to;
            }
            EventBody::IndicatorDefined { indicator } => {
                if self.indicators.contains_key(&indicator.id) {
                    return Err(inconsistent(seq, format!("indicator {} exists", indicator.id)));
                }
                self.indicators.insert(indicator.id.clone(), indicator.clone());
            }
            EventBody::ValueSystemCreated { value_system } => {
                if self.value_systems.contains_key(&value_system.id) {
                    return Err(inconsistent(seq, format!("value system {} exists", value_system.id)));
                }
                if let Owner::Resource(owner) = &value_system.owner {
                    let r = self
                        .resources
                        .get_mut(owner)
                        .ok_or_else(|| inconsistent(seq, format!("unknown owner {owner}")))?;
                    r.psv = Some(value_system.id.clone());
                }
                self.value_systems
                    .insert(value_system.id.clone(), value_system.clone());
                self.counters.value_systems += 1;
            }
            EventBody::LeagueInitialized { league } => {
                self.league = Some(league.clone());
            }
            EventBody::EpochStarted { epoch } => {
                let league = self.league_mut(seq)?;
                if league.epoch != *epoch {
                    return Err(inconsistent(seq, "epoch mismatch"));
                }
            }
            EventBody::LeagueRanked { league, order, .. } => {
                let members = self.league_mut(seq)?.members_mut(*league);
                let mut a: Vec<_> = members.iter().collect();
                let mut b: Vec<_> = order.iter().collect();
                a.sort();
                b.sort();
                if a != b {
                    return Err(inconsistent(seq, "ranked order is not a permutation of the league"));
                }
                *members = order.clone();
            }
            EventBody::Promoted {
                member,
                from,
                to,
                position,
            }
            | EventBody::Relegated {
                member,
                from,
                to,
                position,
            } => {
                let state = self.league_mut(seq)?;
                let source = state.members_mut(*from);
                let idx = source
                    .iter()
                    .position(|m| m == member)
                    .ok_or_else(|| inconsistent(seq, format!("{member} not in {from}")))?;
                source.remove(idx);
                let target = state.members_mut(*to);
                if *position > target.len() {
                    return Err(inconsistent(seq, "insert position out of range"));
                }
                target.insert(*position, member.clone());
            }
            EventBody::LeaderChanged {
                league,
                leader,
                value_system,
                ..
            } => {
                if !self.value_systems.contains_key(value_system) {
                    return Err(inconsistent(seq, format!("unknown value system {value_system}")));
                }
                let state = self.league_mut(seq)?;
                if state.members(*league).first() != Some(leader) {
                    return Err(inconsistent(seq, "leader is not at the top of its league"));
                }
                state.leaders.insert(*league, leader.clone());
                state.leader_psvs.insert(*league, value_system.clone());
            }
            EventBody::EpochCompleted { epoch } => {
                let state = self.league_mut(seq)?;
                if *epoch != state.epoch + 1 {
                    return Err(inconsistent(seq, "epoch must advance by one"));
                }
                state.epoch = *epoch;
            }
        }
        self.audit_head = seq;
        Ok(())
    }

    fn league_mut(&mut self, seq: u64) -> Result<&mut LeagueState, ReplayError> {
        self.league
            .as_mut()
            .ok_or_else(|| inconsistent(seq, "league not initialized"))
    }

    /// Fold a sequence of events into this state.
    pub fn replay<'a>(
        &mut self,
        events: impl IntoIterator<Item = &'a AuditEvent>,
    ) -> Result<usize, ReplayError> {
        let mut n = 0;
        for ev in events {
            self.apply(ev)?;
            n += 1;
        }
        Ok(n)
    }

    /// Check referential integrity and structural invariants.
    pub fn check_integrity(&self) -> Result<(), String> {
        for (id, r) in &self.resources {
            if id != &r.id {
                return Err(format!("resource key {id} does not match id {}", r.id));
            }
            if let Some(parent) = &r.member_of {
                let p = self
                    .resources
                    .get(parent)
                    .ok_or_else(|| format!("resource {id} references unknown parent {parent}"))?;
                if Some(p.kind) != r.kind.parent_kind() {
                    return Err(format!("resource {id} has parent {parent} of kind {}", p.kind));
                }
            }
            // Kinds strictly ascend along member_of, so a chain longer than
            // the number of kinds means a cycle.
            let mut cur = r;
            let mut depth = 0;
            while let Some(parent) = cur.member_of.as_ref().and_then(|p| self.resources.get(p)) {
                depth += 1;
                if depth > ResourceKind::ALL.len() {
                    return Err(format!("membership cycle through {id}"));
                }
                cur = parent;
            }
            if let Some(vs) = &r.psv {
                if !self.value_systems.contains_key(vs) {
                    return Err(format!("resource {id} references unknown value system {vs}"));
                }
            }
        }
        for (id, a) in &self.achievements {
            if id != &a.id {
                return Err(format!("achievement key {id} does not match id {}", a.id));
            }
            match self.resources.get(&a.owner) {
                Some(r) if r.kind == ResourceKind::Person => {}
                Some(_) => return Err(format!("achievement {id} owned by a non-person")),
                None => return Err(format!("achievement {id} references unknown owner {}", a.owner)),
            }
            self.schema
                .validate_attributes(a.category, &a.attributes)
                .map_err(|e| format!("achievement {id}: {e}"))?;
            if !(crate::domain::MIN_YEAR..=crate::domain::MAX_YEAR).contains(&a.year) {
                return Err(format!("achievement {id}: year {} out of range", a.year));
            }
            if a.status.requires_evidence() && a.evidence_uri.as_deref().is_none_or(str::is_empty) {
                return Err(format!("achievement {id}: status {} without evidence", a.status));
            }
        }
        for (id, ind) in &self.indicators {
            if id != &ind.id {
                return Err(format!("indicator key {id} does not match id {}", ind.id));
            }
            self.schema
                .validate_extractor(&ind.extractor)
                .map_err(|e| format!("indicator {id}: {e}"))?;
        }
        for (id, vs) in &self.value_systems {
            if id != &vs.id {
                return Err(format!("value system key {id} does not match id {}", vs.id));
            }
            crate::value_system::validate_weights(&vs.weights, |i| self.indicators.contains_key(i))
                .map_err(|e| format!("value system {id}: {e}"))?;
            if let Owner::Resource(owner) = &vs.owner {
                if !self.resources.contains_key(owner) {
                    return Err(format!("value system {id} owned by unknown resource {owner}"));
                }
            }
        }
        if let Some(league) = &self.league {
            league.check_structure().map_err(|e| format!("league: {e}"))?;
            for m in league.leagues.values().flatten() {
                match self.resources.get(m) {
                    Some(r) if r.kind == ResourceKind::Person => {}
                    _ => return Err(format!("league member {m} is not a registered person")),
                }
            }
            for vs in league.leader_psvs.values().chain(std::iter::once(&league.seed_vs)) {
                if !self.value_systems.contains_key(vs) {
                    return Err(format!("league references unknown value system {vs}"));
                }
            }
        }
        Ok(())
    }

    /// Persons reachable below `root` through `member_of` (the root itself if
    /// it is a person).
    pub fn member_persons(&self, root: &ResourceId) -> Vec<ResourceId> {
        let mut children: BTreeMap<&ResourceId, Vec<&ResourceId>> = BTreeMap::new();
        for r in self.resources.values() {
            if let Some(p) = &r.member_of {
                children.entry(p).or_default().push(&r.id);
            }
        }
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            match self.resources.get(id) {
                Some(r) if r.kind == ResourceKind::Person => out.push(id.clone()),
                Some(_) => stack.extend(children.get(id).into_iter().flatten().copied()),
                None => {}
            }
        }
        out.sort();
        out
    }

    /// Raw value of one indicator for one resource. Units and organizations
    /// sum the values of their member persons.
    pub fn raw_indicator_value(
        &self,
        resource: &ResourceId,
        indicator: &IndicatorId,
        ctx: &EvalContext,
    ) -> Result<f64, DomainError> {
        self.resource(resource)?;
        let ind = self.indicator(indicator)?;
        Ok(self.raw_matrix(std::slice::from_ref(resource), &[ind], ctx)[0][0])
    }

    /// Raw values for every (resource, indicator) pair, row-major by resource.
    /// Unknown resources yield zero rows; callers validate membership first.
    pub fn raw_matrix(
        &self,
        resources: &[ResourceId],
        indicators: &[&Indicator],
        ctx: &EvalContext,
    ) -> Vec<Vec<f64>> {
        let mut by_owner: BTreeMap<&ResourceId, Vec<&Achievement>> = BTreeMap::new();
        for a in self.achievements.values() {
            by_owner.entry(&a.owner).or_default().push(a);
        }
        let person_value = |person: &ResourceId, ind: &Indicator| -> f64 {
            let floor = ctx
                .status_floors
                .get(&ind.id)
                .copied()
                .unwrap_or(ind.extractor.status_floor);
            let owned = by_owner.get(person).map(Vec::as_slice).unwrap_or(&[]);
            ind.extractor.extract(owned.iter().copied(), ctx.as_of_year, floor)
        };
        resources
            .iter()
            .map(|rid| {
                let persons = match self.resources.get(rid) {
                    Some(r) if r.kind == ResourceKind::Person => vec![rid.clone()],
                    Some(_) => self.member_persons(rid),
                    None => Vec::new(),
                };
                indicators
                    .iter()
                    .map(|ind| persons.iter().map(|p| person_value(p, ind)).sum())
                    .collect()
            })
            .collect()
    }

    pub fn league_of(&self, member: &ResourceId) -> Option<LeagueName> {
        let league = self.league.as_ref()?;
        LeagueName::ALL
            .into_iter()
            .find(|l| league.members(*l).contains(member))
    }
}
