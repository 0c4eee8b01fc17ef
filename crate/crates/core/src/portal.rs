//! Validated commands over a [`State`].
//!
//! Each command checks its preconditions, turns the change into an
//! [`AuditEvent`] and applies it. Emitted events accumulate in a pending
//! buffer that the persistence layer drains.

use std::collections::BTreeMap;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::audit::{AuditEvent, EventBody};
use crate::domain::{
    Achievement, AttributeValue, Category, DomainError, Indicator, Resource, ResourceKind, Status,
    MAX_YEAR, MIN_YEAR,
};
use crate::ids::{AchievementId, IndicatorId, ResourceId, ValueSystemId};
use crate::state::State;
use crate::value_system::{
    aggregate_weights, validate_weights, AggregationMethod, Owner, PsvDocument, ValueSystem,
    ValueSystemError, Weights, COLLECTIVE,
};

/// Source of event timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now().trunc_subsecs(0),
            Clock::Fixed(t) => *t,
        }
    }

    /// A fixed clock when `SOURCE_DATE_EPOCH` holds a unix timestamp, the
    /// system clock otherwise.
    pub fn from_env() -> Self {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse::<i64>().ok())
            .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
            .map_or(Clock::System, Clock::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewResource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ResourceId>,
    pub kind: ResourceKind,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_of: Option<ResourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewAchievement {
    pub owner: ResourceId,
    pub category: Category,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeValue>,
    pub year: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_uri: Option<String>,
    /// When set, the achievement is verified by this actor right after it is
    /// attached. Requires an evidence uri.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_by: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Portal {
    state: State,
    clock: Clock,
    pending: Vec<AuditEvent>,
}

impl Portal {
    pub fn new(state: State, clock: Clock) -> Self {
        Self {
            state,
            clock,
            pending: Vec::new(),
        }
    }

    /// A fresh registry with the starter indicators defined.
    pub fn genesis(clock: Clock) -> Self {
        let mut portal = Self::new(State::genesis(), clock);
        for ind in crate::domain::starter_indicators() {
            portal.define_indicator(ind).expect("starter indicators are valid");
        }
        portal
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn into_state(self) -> State {
        self.state
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn set_clock(&mut self, clock: Clock) {
        self.clock = clock;
    }

    pub fn pending(&self) -> &[AuditEvent] {
        &self.pending
    }

    pub fn take_pending(&mut self) -> Vec<AuditEvent> {
        std::mem::take(&mut self.pending)
    }

    /// Run `f`; if it fails, the state and pending events are restored.
    pub fn transaction<T, E>(&mut self, f: impl FnOnce(&mut Portal) -> Result<T, E>) -> Result<T, E> {
        let saved = self.state.clone();
        let mark = self.pending.len();
        let out = f(self);
        if out.is_err() {
            self.state = saved;
            self.pending.truncate(mark);
        }
        out
    }

    pub(crate) fn restore(&mut self, state: State, pending: usize) {
        self.state = state;
        self.pending.truncate(pending);
    }

    pub(crate) fn emit(&mut self, body: EventBody) -> &AuditEvent {
        let ev = AuditEvent {
            seq: self.state.audit_head + 1,
            epoch: self.state.league.as_ref().map_or(0, |l| l.epoch),
            at: self.clock.now(),
            subjects: body.subjects(),
            body,
        };
        if let Err(e) = self.state.apply(&ev) {
            panic!("validated command produced an inapplicable event: {e}");
        }
        self.pending.push(ev);
        self.pending.last().expect("just pushed")
    }

    fn next_id<T>(&self, prefix: &str, counter: u64, taken: impl Fn(&str) -> bool, make: impl Fn(String) -> T) -> T {
        let mut n = counter + 1;
        loop {
            let candidate = format!("{prefix}{n:05}");
            if !taken(&candidate) {
                return make(candidate);
            }
            n += 1;
        }
    }

    fn id_in_use(&self, s: &str) -> bool {
        self.state.resources.keys().any(|k| k.as_str() == s)
    }

    pub fn register_resource(&mut self, req: NewResource) -> Result<Resource, DomainError> {
        if req.display_name.trim().is_empty() {
            return Err(DomainError::EmptyName);
        }
        let id = match req.id {
            Some(id) => {
                if self.state.resources.contains_key(&id) || id.as_str() == COLLECTIVE {
                    return Err(DomainError::DuplicateId(id.to_string()));
                }
                id
            }
            None => self.next_id(
                req.kind.id_prefix(),
                self.state.counters.resources,
                |s| self.id_in_use(s),
                |s| ResourceId::new(s).expect("generated ids are valid"),
            ),
        };
        if let Some(parent) = &req.member_of {
            let p = self
                .state
                .resources
                .get(parent)
                .ok_or_else(|| DomainError::UnknownParent(parent.clone()))?;
            if parent == &id {
                return Err(DomainError::CycleDetected(id));
            }
            match req.kind.parent_kind() {
                Some(k) if k == p.kind => {}
                Some(k) => {
                    return Err(DomainError::KindMismatch(format!(
                        "a {} must be a member of a {k}, not a {}",
                        req.kind, p.kind
                    )))
                }
                None => {
                    return Err(DomainError::KindMismatch(format!(
                        "a {} cannot be a member of another resource",
                        req.kind
                    )))
                }
            }
        }
        let resource = Resource {
            id,
            kind: req.kind,
            display_name: req.display_name,
            member_of: req.member_of,
            registered_at: self.clock.now(),
            psv: None,
        };
        self.emit(EventBody::ResourceRegistered {
            resource: resource.clone(),
        });
        Ok(resource)
    }

    pub fn attach_achievement(&mut self, req: NewAchievement) -> Result<Achievement, DomainError> {
        match self.state.resources.get(&req.owner) {
            None => return Err(DomainError::UnknownOwner(req.owner)),
            Some(r) if r.kind != ResourceKind::Person => {
                return Err(DomainError::KindMismatch(format!(
                    "achievements belong to persons; {} is a {}",
                    r.id, r.kind
                )))
            }
            Some(_) => {}
        }
        self.state.schema.validate_attributes(req.category, &req.attributes)?;
        if !(MIN_YEAR..=MAX_YEAR).contains(&req.year) {
            return Err(DomainError::YearOutOfRange(req.year));
        }
        let evidence_uri = req.evidence_uri.filter(|u| !u.trim().is_empty());
        let status = if evidence_uri.is_some() {
            Status::EvidenceAttached
        } else {
            Status::Reported
        };
        if req.verified_by.is_some() && evidence_uri.is_none() {
            return Err(DomainError::MissingEvidence(Status::Verified));
        }
        let id = self.next_id(
            "a-",
            self.state.counters.achievements,
            |s| self.state.achievements.keys().any(|k| k.as_str() == s),
            |s| AchievementId::new(s).expect("generated ids are valid"),
        );
        let achievement = Achievement {
            id: id.clone(),
            owner: req.owner,
            category: req.category,
            attributes: req.attributes,
            year: req.year,
            evidence_uri,
            status,
        };
        self.emit(EventBody::AchievementAttached {
            achievement: achievement.clone(),
        });
        match req.verified_by {
            Some(actor) => self.set_verification(&id, Status::Verified, &actor, None),
            None => Ok(achievement),
        }
    }

    /// Move an achievement along the verification status machine. Evidence
    /// may be supplied with the change (needed for `reported ->
    /// evidence_attached`).
    pub fn set_verification(
        &mut self,
        id: &AchievementId,
        new_status: Status,
        actor: &str,
        evidence_uri: Option<String>,
    ) -> Result<Achievement, DomainError> {
        let current = self
            .state
            .achievements
            .get(id)
            .ok_or_else(|| DomainError::UnknownAchievement(id.clone()))?;
        let evidence_uri = evidence_uri.filter(|u| !u.trim().is_empty());
        let has_evidence = evidence_uri.is_some() || current.evidence_uri.is_some();
        if new_status.requires_evidence() && !has_evidence {
            return Err(DomainError::MissingEvidence(new_status));
        }
        let from = current.status;
        if !from.can_transition_to(new_status) {
            return Err(DomainError::IllegalTransition {
                from,
                to: new_status,
            });
        }
        self.emit(EventBody::VerificationChanged {
            achievement: id.clone(),
            from,
            to: new_status,
            actor: actor.to_string(),
            evidence_uri,
        });
        Ok(self.state.achievements[id].clone())
    }

    pub fn define_indicator(&mut self, indicator: Indicator) -> Result<IndicatorId, DomainError> {
        if self.state.indicators.contains_key(&indicator.id) {
            return Err(DomainError::DuplicateId(indicator.id.to_string()));
        }
        self.state.schema.validate_extractor(&indicator.extractor)?;
        let id = indicator.id.clone();
        self.emit(EventBody::IndicatorDefined { indicator });
        Ok(id)
    }

    /// Validate a value system document without storing it.
    pub fn check_value_system(&self, doc: &PsvDocument) -> Result<(), ValueSystemError> {
        if let Owner::Resource(owner) = &doc.owner {
            if !self.state.resources.contains_key(owner) {
                return Err(ValueSystemError::UnknownOwner(owner.clone()));
            }
        }
        validate_weights(&doc.weights, |i| self.state.indicators.contains_key(i))
    }

    /// A value system built from `doc` that is not stored. Used for
    /// exploratory rankings.
    pub fn ephemeral_value_system(&self, doc: PsvDocument) -> Result<ValueSystem, ValueSystemError> {
        self.check_value_system(&doc)?;
        Ok(ValueSystem {
            id: doc
                .id
                .unwrap_or_else(|| ValueSystemId::new("ephemeral").expect("static id")),
            owner: doc.owner,
            label: doc.label,
            weights: doc.weights,
            created_at: self.clock.now(),
        })
    }

    /// Store a new immutable value system. A resource-owned value system
    /// becomes the owner's current PSV.
    pub fn create_value_system(&mut self, doc: PsvDocument) -> Result<ValueSystem, ValueSystemError> {
        self.check_value_system(&doc)?;
        let id = match doc.id {
            Some(id) => {
                if self.state.value_systems.contains_key(&id) {
                    return Err(ValueSystemError::DuplicateId(id));
                }
                id
            }
            None => self.next_id(
                "vs-",
                self.state.counters.value_systems,
                |s| self.state.value_systems.keys().any(|k| k.as_str() == s),
                |s| ValueSystemId::new(s).expect("generated ids are valid"),
            ),
        };
        let vs = ValueSystem {
            id,
            owner: doc.owner,
            label: doc.label,
            weights: doc.weights,
            created_at: self.clock.now(),
        };
        self.emit(EventBody::ValueSystemCreated {
            value_system: vs.clone(),
        });
        Ok(vs)
    }

    pub fn value_system(&self, id: &ValueSystemId) -> Result<&ValueSystem, ValueSystemError> {
        self.state
            .value_systems
            .get(id)
            .ok_or_else(|| ValueSystemError::UnknownValueSystem(id.clone()))
    }

    /// Collective weights from stored value systems (not stored).
    pub fn aggregate(&self, ids: &[ValueSystemId], method: &AggregationMethod) -> Result<Weights, ValueSystemError> {
        let psvs = ids
            .iter()
            .map(|id| self.value_system(id))
            .collect::<Result<Vec<_>, _>>()?;
        aggregate_weights(&psvs, method, |leader| {
            self.state
                .resources
                .get(leader)
                .and_then(|r| r.psv.as_ref())
                .and_then(|vs| self.state.value_systems.get(vs))
                .cloned()
        })
    }

    /// Aggregate and store the result as a collective value system.
    pub fn create_collective(
        &mut self,
        ids: &[ValueSystemId],
        method: &AggregationMethod,
        label: Option<String>,
    ) -> Result<ValueSystem, ValueSystemError> {
        let weights = self.aggregate(ids, method)?;
        let label = label.unwrap_or_else(|| {
            let names: Vec<_> = ids.iter().map(ValueSystemId::as_str).collect();
            match method {
                AggregationMethod::Mean => format!("mean of {}", names.join(",")),
                AggregationMethod::Median => format!("median of {}", names.join(",")),
                AggregationMethod::Leader(r) => format!("leader {r}"),
            }
        });
        self.create_value_system(PsvDocument {
            id: None,
            owner: Owner::Collective,
            label,
            weights,
        })
    }
}
