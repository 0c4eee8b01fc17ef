use serde::{Deserialize, Serialize};
use valrank_core::league::LeagueError;
use valrank_core::query::QueryError;
use valrank_core::sim::SimulationError;
use valrank_core::{DomainError, RankingError, StoreError, ValueSystemError};

/// HTTP status for every machine code the gateway can emit. Codes missing
/// from the table map to 500.
const STATUS_TABLE: &[(&str, u16)] = &[
    ("BAD_REQUEST", 400),
    ("SYNTAX_ERROR", 400),
    ("UNKNOWN_FIELD", 400),
    ("UNKNOWN_KIND", 400),
    ("UNSUPPORTED_DIRECTIVE", 400),
    ("INVALID_ID", 400),
    ("HEADER_MISMATCH", 400),
    ("UNAUTHORIZED", 401),
    ("READ_ONLY", 403),
    ("NOT_FOUND", 404),
    ("UNKNOWN_RESOURCE", 404),
    ("UNKNOWN_ACHIEVEMENT", 404),
    ("UNKNOWN_VALUE_SYSTEM", 404),
    ("UNKNOWN_OWNER", 404),
    ("DUPLICATE_ID", 409),
    ("ILLEGAL_TRANSITION", 409),
    ("LEAGUE_NOT_INITIALIZED", 409),
    ("STORE_LOCKED", 409),
    ("STORE_EXISTS", 409),
    ("UNKNOWN_PARENT", 422),
    ("UNKNOWN_INDICATOR", 422),
    ("UNKNOWN_ATTRIBUTE", 422),
    ("KIND_MISMATCH", 422),
    ("CYCLE_DETECTED", 422),
    ("SCHEMA_VIOLATION", 422),
    ("YEAR_OUT_OF_RANGE", 422),
    ("MISSING_EVIDENCE", 422),
    ("NON_NUMERIC_ATTRIBUTE", 422),
    ("EMPTY_NAME", 422),
    ("ALL_ZERO_WEIGHTS", 422),
    ("NEGATIVE_WEIGHT", 422),
    ("NON_FINITE_WEIGHT", 422),
    ("EMPTY_INPUT", 422),
    ("LEADER_HAS_NO_PSV", 422),
    ("NON_FINITE_INPUT", 422),
    ("EMPTY_POPULATION", 422),
    ("DUPLICATE_RESOURCE", 422),
    ("MIXED_KINDS", 422),
    ("RESOURCE_NOT_IN_POPULATION", 422),
    ("POPULATION_MISMATCH", 422),
    ("SIZE_MISMATCH", 422),
    ("INVALID_CONFIG", 422),
    ("LEADER_PSV_MISSING", 422),
    ("INVALID_GENERATOR_CONFIG", 422),
    ("NO_VALUE_SYSTEM", 422),
    ("EMPTY_OPTIONS", 422),
    ("IO_ERROR", 500),
    ("DIGEST_MISMATCH", 500),
    ("SCHEMA_VERSION_UNSUPPORTED", 500),
    ("INTEGRITY_VIOLATION", 500),
    ("MALFORMED_AUDIT", 500),
    ("SEQUENCE_GAP", 500),
    ("REPLAY_INCONSISTENT", 500),
    ("STORE_NOT_INITIALIZED", 500),
    ("PORT_IN_USE", 500),
    ("INTERNAL", 500),
];

pub fn status_for(code: &str) -> u16 {
    STATUS_TABLE
        .iter()
        .find(|(c, _)| *c == code)
        .map_or(500, |(_, s)| *s)
}

/// Every code with an explicit status.
pub fn known_codes() -> impl Iterator<Item = &'static str> {
    STATUS_TABLE.iter().map(|(c, _)| *c)
}

/// Error as returned to clients: `{"code","message"}` with a mapped status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status_for(code),
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("BAD_REQUEST", message)
    }

    pub fn read_only() -> Self {
        Self::new("READ_ONLY", "this instance is read-only")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new("INTERNAL", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

macro_rules! from_coded {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                ApiError::new(e.code(), e.to_string())
            }
        }
    )*};
}

from_coded!(
    DomainError,
    ValueSystemError,
    RankingError,
    LeagueError,
    QueryError,
    SimulationError,
    StoreError
);

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::bad_request(format!("invalid json: {e}"))
    }
}
