//! Operations shared by the HTTP handlers and the command line.
//!
//! Writes are serialized through one mutex and work on a private copy of the
//! current state; the copy is persisted and then published as the new
//! version. Readers clone the `Arc` of the latest version and never block a
//! writer for longer than the swap.

use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use valrank_core::canonical::to_canonical_string;
use valrank_core::domain::AttributeValue;
use valrank_core::league::{EpochOutcome, DEFAULT_EXCHANGE_COUNT};
use valrank_core::query::{self, Caller, DecisionOption, QueryResult};
use valrank_core::ranking::{assessment_report, compare_rankings, AssessmentReport, Population, RankingComparison};
use valrank_core::sim::{simulate, GeneratorConfig, IncrementRule, Simulation};
use valrank_core::store::{ImportReport, ReplayReport};
use valrank_core::value_system::{validate_weights, AggregationMethod, AggregationMethodKind};
use valrank_core::{
    Achievement, AchievementId, AuditEvent, Category, Clock, Indicator, LeagueConfig, LeagueSnapshot, NewAchievement,
    NewResource, Owner, Portal, PsvDocument, RankingList, Resource, ResourceId, ResourceKind, State, Status, Store,
    ValueSystem, ValueSystemId,
};

use crate::error::ApiError;

/// Per-member, per-indicator increment ceiling of the default simulation
/// generator.
pub const DEFAULT_SIM_MAX_INCREMENT: u32 = 5;

/// Canonical JSON followed by a newline; the body of every successful
/// response and of `--json` output.
pub fn render<T: Serialize>(value: &T) -> String {
    let mut s = to_canonical_string(value).expect("response types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy)]
pub struct ServiceConfig {
    pub read_only: bool,
    pub clock: Clock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub epoch: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitReport {
    pub audit_head: u64,
    pub digest: String,
}

/// Achievement body posted under an owner.
#[derive(Debug, Clone, Deserialize)]
pub struct AchievementPayload {
    pub category: Category,
    #[serde(default)]
    pub attributes: std::collections::BTreeMap<String, AttributeValue>,
    pub year: i32,
    #[serde(default)]
    pub evidence_uri: Option<String>,
    #[serde(default)]
    pub verified_by: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct VerificationRequest {
    pub status: Status,
    pub actor: String,
    #[serde(default)]
    pub evidence_uri: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AggregateRequest {
    pub method: AggregationMethodKind,
    pub psv_ids: Vec<ValueSystemId>,
    /// Person whose value system the `leader` method copies.
    #[serde(default)]
    pub leader: Option<ResourceId>,
    #[serde(default)]
    pub label: Option<String>,
}

/// A stored value system or an unsaved document.
#[derive(Debug, Clone)]
pub enum VsRef {
    Id(ValueSystemId),
    Inline(PsvDocument),
}

#[derive(Debug, Clone)]
pub struct RankingParams {
    pub kind: String,
    pub vs: VsRef,
    pub filter: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct QueryRequest {
    pub text: String,
    #[serde(default)]
    pub caller: Option<ResourceId>,
    #[serde(default)]
    pub vs: Option<ValueSystemId>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct DecisionRequest {
    pub text: String,
    #[serde(default)]
    pub options: Vec<DecisionOption>,
    #[serde(default)]
    pub caller: Option<ResourceId>,
    #[serde(default)]
    pub vs: Option<ValueSystemId>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LeagueInitRequest {
    /// Defaults to every registered person.
    #[serde(default)]
    pub population: Option<Vec<ResourceId>>,
    pub seed_vs: ValueSystemId,
    pub league_sizes: [usize; 3],
    #[serde(default)]
    pub exchange_count: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct EpochRequest {
    #[serde(default)]
    pub achievements: Vec<NewAchievement>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SimulateRequest {
    pub epochs: u64,
    pub seed: u64,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
}

pub struct Service {
    store: Option<Store>,
    config: ServiceConfig,
    writer: Mutex<()>,
    current: RwLock<Arc<State>>,
    events: RwLock<Vec<AuditEvent>>,
}

impl Service {
    /// Create a store at `dir` and open it for writing.
    pub fn init(dir: &Path, clock: Clock) -> Result<(Self, InitReport), ApiError> {
        let (store, state) = Store::init(dir, clock)?;
        let events = store.audit()?;
        let report = InitReport {
            audit_head: state.audit_head,
            digest: valrank_core::store::state_digest(&state),
        };
        let config = ServiceConfig {
            read_only: false,
            clock,
        };
        Ok((Self::with_parts(Some(store), config, state, events), report))
    }

    /// Open an existing store. A writable service holds the store lock until
    /// it is dropped.
    pub fn open(dir: &Path, config: ServiceConfig) -> Result<Self, ApiError> {
        let store = if config.read_only {
            Store::open_read_only(dir)?
        } else {
            Store::open(dir)?
        };
        let state = store.load()?;
        let events = store.audit()?;
        Ok(Self::with_parts(Some(store), config, state, events))
    }

    /// A service without persistence, starting from the portal's state and
    /// pending events.
    pub fn in_memory(mut portal: Portal, config: ServiceConfig) -> Self {
        let events = portal.take_pending();
        Self::with_parts(None, config, portal.into_state(), events)
    }

    fn with_parts(store: Option<Store>, config: ServiceConfig, state: State, events: Vec<AuditEvent>) -> Self {
        Self {
            store,
            config,
            writer: Mutex::new(()),
            current: RwLock::new(Arc::new(state)),
            events: RwLock::new(events),
        }
    }

    pub fn is_read_only(&self) -> bool {
        self.config.read_only
    }

    /// The latest published state version.
    pub fn state(&self) -> Arc<State> {
        Arc::clone(&self.current.read().expect("state lock"))
    }

    fn now(&self) -> DateTime<Utc> {
        self.config.clock.now()
    }

    /// Run `f` against a private copy of the state. On success the new
    /// events are persisted and the copy becomes the current version; on
    /// failure nothing is visible.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut Portal) -> Result<T, ApiError>) -> Result<T, ApiError> {
        if self.config.read_only {
            return Err(ApiError::read_only());
        }
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut portal = Portal::new((*self.state()).clone(), self.config.clock);
        let out = f(&mut portal)?;
        let events = portal.take_pending();
        if events.is_empty() {
            return Ok(out);
        }
        if let Some(store) = &self.store {
            store.commit(&events, portal.state())?;
        }
        let next = Arc::new(portal.into_state());
        let mut log = self.events.write().expect("event lock");
        let mut cur = self.current.write().expect("state lock");
        log.extend(events);
        *cur = next;
        Ok(out)
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            epoch: self.state().league.as_ref().map_or(0, |l| l.epoch),
        }
    }

    pub fn indicators(&self) -> Vec<Indicator> {
        self.state().indicators.values().cloned().collect()
    }

    pub fn register(&self, req: NewResource) -> Result<Resource, ApiError> {
        self.mutate(|p| Ok(p.register_resource(req)?))
    }

    pub fn attach(&self, owner: ResourceId, a: AchievementPayload) -> Result<Achievement, ApiError> {
        self.mutate(|p| {
            let req = NewAchievement {
                owner,
                category: a.category,
                attributes: a.attributes,
                year: a.year,
                evidence_uri: a.evidence_uri,
                verified_by: a.verified_by,
            };
            Ok(p.attach_achievement(req)?)
        })
    }

    pub fn verify(&self, id: AchievementId, req: VerificationRequest) -> Result<Achievement, ApiError> {
        self.mutate(|p| Ok(p.set_verification(&id, req.status, &req.actor, req.evidence_uri)?))
    }

    pub fn import(&self, csv: &[u8], atomic: bool) -> Result<ImportReport, ApiError> {
        self.mutate(|p| Ok(p.import_achievements(csv, atomic)?))
    }

    pub fn create_value_system(&self, doc: PsvDocument) -> Result<ValueSystem, ApiError> {
        self.mutate(|p| Ok(p.create_value_system(doc)?))
    }

    pub fn value_system(&self, id: &ValueSystemId) -> Result<ValueSystem, ApiError> {
        self.state()
            .value_systems
            .get(id)
            .cloned()
            .ok_or_else(|| valrank_core::ValueSystemError::UnknownValueSystem(id.clone()).into())
    }

    /// Aggregate stored value systems and store the result as a collective
    /// value system.
    pub fn aggregate(&self, req: AggregateRequest) -> Result<ValueSystem, ApiError> {
        let method = match (req.method, req.leader) {
            (AggregationMethodKind::Mean, _) => AggregationMethod::Mean,
            (AggregationMethodKind::Median, _) => AggregationMethod::Median,
            (AggregationMethodKind::Leader, Some(r)) => AggregationMethod::Leader(r),
            (AggregationMethodKind::Leader, None) => {
                return Err(ApiError::bad_request("the leader method needs a leader"))
            }
        };
        self.mutate(|p| {
            Ok(p.create_collective(&req.psv_ids, &method, req.label)?)
        })
    }

    fn resolve_vs(&self, state: &State, vs: VsRef) -> Result<ValueSystem, ApiError> {
        match vs {
            VsRef::Id(id) => state
                .value_systems
                .get(&id)
                .cloned()
                .ok_or_else(|| valrank_core::ValueSystemError::UnknownValueSystem(id).into()),
            VsRef::Inline(doc) => {
                if let Owner::Resource(owner) = &doc.owner {
                    if !state.resources.contains_key(owner) {
                        return Err(valrank_core::ValueSystemError::UnknownOwner(owner.clone()).into());
                    }
                }
                validate_weights(&doc.weights, |i| state.indicators.contains_key(i))?;
                Ok(ValueSystem {
                    id: doc
                        .id
                        .unwrap_or_else(|| ValueSystemId::new("ephemeral").expect("static id")),
                    owner: doc.owner,
                    label: doc.label,
                    weights: doc.weights,
                    created_at: self.now(),
                })
            }
        }
    }

    fn caller(&self, state: &State, resource: Option<ResourceId>, vs: Option<ValueSystemId>) -> Result<Caller, ApiError> {
        let value_system = vs.map(|id| self.resolve_vs(state, VsRef::Id(id))).transpose()?;
        Ok(Caller { resource, value_system })
    }

    /// Rank every resource of `kind` that passes `filter`.
    pub fn rankings(&self, params: RankingParams) -> Result<RankingList, ApiError> {
        let state = self.state();
        let text = format!("kind:{} {} | rank", params.kind, params.filter.unwrap_or_default());
        let q = query::parse_query(&text, &state)?;
        let caller = Caller::with_value_system(self.resolve_vs(&state, params.vs)?);
        let result = query::execute(&state, &q, &caller, &[], self.now())?;
        Ok(result.ranking.expect("rank directive yields a ranking"))
    }

    /// Rank deltas of one population under two value systems.
    pub fn compare(&self, kind: &str, a: VsRef, b: VsRef) -> Result<RankingComparison, ApiError> {
        let params = |vs| RankingParams {
            kind: kind.to_string(),
            vs,
            filter: None,
        };
        let ra = self.rankings(params(a))?;
        let rb = self.rankings(params(b))?;
        Ok(compare_rankings(&ra, &rb)?)
    }

    pub fn query(&self, req: QueryRequest) -> Result<QueryResult, ApiError> {
        let state = self.state();
        let q = query::parse_query(&req.text, &state)?;
        let caller = self.caller(&state, req.caller, req.vs)?;
        Ok(query::execute(&state, &q, &caller, &[], self.now())?)
    }

    pub fn decide(&self, req: DecisionRequest) -> Result<QueryResult, ApiError> {
        let state = self.state();
        let caller = self.caller(&state, req.caller, req.vs)?;
        Ok(query::decide(&state, &req.text, &req.options, &caller, self.now())?)
    }

    /// Assessment of one resource within every resource of its kind, under
    /// the given value system or the resource's own.
    pub fn report(&self, resource: &ResourceId, vs: Option<VsRef>) -> Result<AssessmentReport, ApiError> {
        let state = self.state();
        let r = state.resource(resource)?;
        let vs = match vs {
            Some(v) => self.resolve_vs(&state, v)?,
            None => {
                let id = r.psv.clone().ok_or_else(|| {
                    ApiError::new("NO_VALUE_SYSTEM", format!("{resource} has no value system and none was named"))
                })?;
                self.resolve_vs(&state, VsRef::Id(id))?
            }
        };
        let population = Population::of_kind(&state, r.kind)?;
        Ok(assessment_report(&state, resource, &vs, &population)?)
    }

    pub fn league(&self) -> Result<LeagueSnapshot, ApiError> {
        self.state()
            .league
            .as_ref()
            .map(|l| l.snapshot())
            .ok_or_else(|| valrank_core::LeagueError::NotInitialized.into())
    }

    pub fn league_init(&self, req: LeagueInitRequest) -> Result<LeagueSnapshot, ApiError> {
        let exchange = req.exchange_count.unwrap_or(DEFAULT_EXCHANGE_COUNT);
        let config = LeagueConfig::new(req.league_sizes, exchange)?;
        self.mutate(|p| {
            let population = req.population.unwrap_or_else(|| {
                p.state()
                    .resources_of_kind(ResourceKind::Person)
                    .map(|r| r.id.clone())
                    .collect()
            });
            Ok(p.init_league(population, &req.seed_vs, config)?)
        })
    }

    pub fn league_epoch(&self, req: EpochRequest) -> Result<EpochOutcome, ApiError> {
        self.mutate(|p| Ok(p.run_epoch(req.achievements)?))
    }

    /// Project epochs forward on a copy of the current state.
    pub fn league_simulate(&self, req: SimulateRequest) -> Result<Simulation, ApiError> {
        let state = self.state();
        let generator = req.generator.unwrap_or_else(|| default_generator(&state));
        Ok(simulate(&state, req.epochs, &generator, req.seed)?)
    }

    /// Audit events with `seq >= from_seq`.
    pub fn audit_from(&self, from_seq: u64) -> Vec<AuditEvent> {
        self.events
            .read()
            .expect("event lock")
            .iter()
            .filter(|e| e.seq >= from_seq)
            .cloned()
            .collect()
    }

    pub fn replay(&self) -> Result<ReplayReport, ApiError> {
        let store = self
            .store
            .as_ref()
            .ok_or_else(|| ApiError::internal("no store attached"))?;
        Ok(store.replay()?)
    }
}

/// Every defined indicator grows by `0..=DEFAULT_SIM_MAX_INCREMENT` per
/// member and epoch.
pub fn default_generator(state: &State) -> GeneratorConfig {
    GeneratorConfig {
        rules: state
            .indicators
            .keys()
            .map(|id| IncrementRule {
                indicator: id.clone(),
                min: 0,
                max: DEFAULT_SIM_MAX_INCREMENT,
            })
            .collect(),
        ..GeneratorConfig::default()
    }
}
