//! Append-only audit events.
//!
//! Every state change is expressed as an [`AuditEvent`]; the state is the
//! left fold of [`crate::state::State::apply`] over the event sequence.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{Achievement, Indicator, Resource, Status};
use crate::ids::{AchievementId, ResourceId, ValueSystemId};
use crate::league::{LeagueName, LeagueState};
use crate::value_system::ValueSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankPhase {
    PreExchange,
    PostExchange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    ResourceRegistered {
        resource: Resource,
    },
    AchievementAttached {
        achievement: Achievement,
    },
    VerificationChanged {
        achievement: AchievementId,
        from: Status,
        to: Status,
        actor: String,
        /// Evidence supplied together with the status change, if any.
        evidence_uri: Option<String>,
    },
    IndicatorDefined {
        indicator: Indicator,
    },
    ValueSystemCreated {
        value_system: ValueSystem,
    },
    LeagueInitialized {
        league: LeagueState,
    },
    EpochStarted {
        epoch: u64,
    },
    LeagueRanked {
        league: LeagueName,
        phase: RankPhase,
        value_system: ValueSystemId,
        order: Vec<ResourceId>,
    },
    Promoted {
        member: ResourceId,
        from: LeagueName,
        to: LeagueName,
        position: usize,
    },
    Relegated {
        member: ResourceId,
        from: LeagueName,
        to: LeagueName,
        position: usize,
    },
    LeaderChanged {
        league: LeagueName,
        previous: Option<ResourceId>,
        leader: ResourceId,
        value_system: ValueSystemId,
    },
    EpochCompleted {
        epoch: u64,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ResourceRegistered { .. } => "resource_registered",
            Self::AchievementAttached { .. } => "achievement_attached",
            Self::VerificationChanged { .. } => "verification_changed",
            Self::IndicatorDefined { .. } => "indicator_defined",
            Self::ValueSystemCreated { .. } => "value_system_created",
            Self::LeagueInitialized { .. } => "league_initialized",
            Self::EpochStarted { .. } => "epoch_started",
            Self::LeagueRanked { .. } => "league_ranked",
            Self::Promoted { .. } => "promoted",
            Self::Relegated { .. } => "relegated",
            Self::LeaderChanged { .. } => "leader_changed",
            Self::EpochCompleted { .. } => "epoch_completed",
        }
    }

    /// Identifiers of the entities the event is about.
    pub fn subjects(&self) -> Vec<String> {
        match self {
            Self::ResourceRegistered { resource } => vec![resource.id.to_string()],
            Self::AchievementAttached { achievement } => {
                vec![achievement.id.to_string(), achievement.owner.to_string()]
            }
            Self::VerificationChanged { achievement, .. } => vec![achievement.to_string()],
            Self::IndicatorDefined { indicator } => vec![indicator.id.to_string()],
            Self::ValueSystemCreated { value_system } => vec![value_system.id.to_string()],
            Self::LeagueInitialized { league } => league
                .leagues
                .values()
                .flatten()
                .map(ToString::to_string)
                .collect(),
            Self::EpochStarted { .. } | Self::EpochCompleted { .. } => Vec::new(),
            Self::LeagueRanked { order, .. } => order.iter().map(ToString::to_string).collect(),
            Self::Promoted { member, .. } | Self::Relegated { member, .. } => vec![member.to_string()],
            Self::LeaderChanged { leader, .. } => vec![leader.to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    /// League epoch current when the event was recorded (0 without a league).
    pub epoch: u64,
    pub at: DateTime<Utc>,
    pub subjects: Vec<String>,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("audit sequence gap: expected {expected}, found {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("event {seq} does not apply: {reason}")]
    Inconsistent { seq: u64, reason: String },
}

impl ReplayError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::SequenceGap { .. } => "SEQUENCE_GAP",
            Self::Inconsistent { .. } => "REPLAY_INCONSISTENT",
        }
    }
}
