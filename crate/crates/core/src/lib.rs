//! Value-driven assessment of academic resources.
//!
//! Resources (persons, units, organizations) own achievements; indicators
//! extract numbers from achievements; value systems weigh indicators; the
//! ranking engine scores populations under a value system. A three-league
//! model reorganizes a population epoch by epoch. Every change is an audit
//! event, and the state is a fold over those events.

pub mod audit;
pub mod canonical;
pub mod domain;
pub mod ids;
pub mod league;
pub mod portal;
pub mod query;
pub mod ranking;
pub mod sim;
pub mod state;
pub mod store;
pub mod value_system;

pub use audit::{AuditEvent, EventBody};
pub use domain::{Achievement, Category, DomainError, Indicator, Resource, ResourceKind, Status};
pub use ids::{AchievementId, IndicatorId, ResourceId, ValueSystemId};
pub use league::{LeagueConfig, LeagueError, LeagueName, LeagueSnapshot, LeagueState};
pub use portal::{Clock, NewAchievement, NewResource, Portal};
pub use ranking::{RankingError, RankingList};
pub use state::State;
pub use store::{Store, StoreError};
pub use value_system::{Owner, PsvDocument, ValueSystem, ValueSystemError, Weights};
