//! Resources, achievements, indicators and the schema they validate against.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::{AchievementId, IndicatorId, InvalidId, ResourceId, ValueSystemId};

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Person,
    Unit,
    Organization,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 3] = [Self::Person, Self::Unit, Self::Organization];

    /// The kind a resource of this kind may be a member of.
    pub fn parent_kind(self) -> Option<ResourceKind> {
        match self {
            Self::Person => Some(Self::Unit),
            Self::Unit => Some(Self::Organization),
            Self::Organization => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Person => "person",
            Self::Unit => "unit",
            Self::Organization => "organization",
        }
    }

    pub fn id_prefix(self) -> &'static str {
        match self {
            Self::Person => "p-",
            Self::Unit => "u-",
            Self::Organization => "o-",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ResourceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "person" => Ok(Self::Person),
            "unit" => Ok(Self::Unit),
            "organization" => Ok(Self::Organization),
            other => Err(format!("unknown resource kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: ResourceId,
    pub kind: ResourceKind,
    pub display_name: String,
    pub member_of: Option<ResourceId>,
    pub registered_at: DateTime<Utc>,
    /// Newest value system owned by this resource.
    pub psv: Option<ValueSystemId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Publication,
    CitationRecord,
    Project,
    Award,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Self::Publication,
        Self::CitationRecord,
        Self::Project,
        Self::Award,
        Self::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Publication => "publication",
            Self::CitationRecord => "citation_record",
            Self::Project => "project",
            Self::Award => "award",
            Self::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// Verification status of an achievement.
///
/// Transitions: `reported -> evidence_attached -> {verified | disputed}`,
/// and `disputed -> evidence_attached`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Reported,
    EvidenceAttached,
    Verified,
    Disputed,
}

impl Status {
    pub const ALL: [Status; 4] = [
        Self::Reported,
        Self::EvidenceAttached,
        Self::Verified,
        Self::Disputed,
    ];

    pub fn can_transition_to(self, next: Status) -> bool {
        matches!(
            (self, next),
            (Self::Reported, Self::EvidenceAttached)
                | (Self::EvidenceAttached, Self::Verified)
                | (Self::EvidenceAttached, Self::Disputed)
                | (Self::Disputed, Self::EvidenceAttached)
        )
    }

    pub fn requires_evidence(self) -> bool {
        matches!(self, Self::EvidenceAttached | Self::Verified)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Reported => "reported",
            Self::EvidenceAttached => "evidence_attached",
            Self::Verified => "verified",
            Self::Disputed => "disputed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Status::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

/// Scalar attribute value of an achievement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Boolean(bool),
    Number(f64),
    Text(String),
}

impl AttributeValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Self::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn attribute_type(&self) -> AttributeType {
        match self {
            Self::Boolean(_) => AttributeType::Boolean,
            Self::Number(_) => AttributeType::Number,
            Self::Text(_) => AttributeType::Text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Achievement {
    pub id: AchievementId,
    pub owner: ResourceId,
    pub category: Category,
    pub attributes: BTreeMap<String, AttributeValue>,
    pub year: i32,
    pub evidence_uri: Option<String>,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeType {
    Number,
    Text,
    Boolean,
}

impl AttributeType {
    /// Parse a textual cell (CSV, query literal) into a value of this type.
    pub fn parse_value(self, raw: &str) -> Option<AttributeValue> {
        match self {
            Self::Number => raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(AttributeValue::Number),
            Self::Boolean => match raw.trim() {
                "true" => Some(AttributeValue::Boolean(true)),
                "false" => Some(AttributeValue::Boolean(false)),
                _ => None,
            },
            Self::Text => Some(AttributeValue::Text(raw.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Count,
    Max,
}

/// Lowest verification status an achievement needs to count toward an indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusFloor {
    /// Everything except disputed records.
    #[default]
    Reported,
    Verified,
}

impl StatusFloor {
    pub fn admits(self, status: Status) -> bool {
        match self {
            Self::Reported => status != Status::Disputed,
            Self::Verified => status == Status::Verified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    HigherIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub category: Category,
    pub attribute: String,
    pub aggregation: Aggregation,
    #[serde(default)]
    pub status_floor: StatusFloor,
}

impl Extractor {
    /// Aggregate the matching achievements. Empty input yields 0.
    pub fn extract<'a>(
        &self,
        achievements: impl IntoIterator<Item = &'a Achievement>,
        as_of_year: Option<i32>,
        floor: StatusFloor,
    ) -> f64 {
        let values = achievements
            .into_iter()
            .filter(|a| a.category == self.category)
            .filter(|a| floor.admits(a.status))
            .filter(|a| as_of_year.is_none_or(|y| a.year <= y))
            .filter_map(|a| a.attributes.get(&self.attribute));
        match self.aggregation {
            Aggregation::Count => values.count() as f64,
            Aggregation::Sum => values.filter_map(AttributeValue::as_number).sum(),
            Aggregation::Max => values
                .filter_map(AttributeValue::as_number)
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
                .unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Indicator {
    pub id: IndicatorId,
    pub label: String,
    pub extractor: Extractor,
    #[serde(default)]
    pub direction: Direction,
}

/// Declared categories and their attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaRegistry {
    pub resource_kinds: Vec<ResourceKind>,
    pub categories: BTreeMap<Category, BTreeMap<String, AttributeType>>,
}

impl SchemaRegistry {
    /// The fixed starter schema.
    pub fn starter() -> Self {
        use AttributeType::*;
        let cat = |attrs: &[(&str, AttributeType)]| {
            attrs
                .iter()
                .map(|(n, t)| (n.to_string(), *t))
                .collect::<BTreeMap<_, _>>()
        };
        let mut categories = BTreeMap::new();
        categories.insert(
            Category::Publication,
            cat(&[
                ("impact_factor", Number),
                ("title", Text),
                ("journal", Text),
                ("peer_reviewed", Boolean),
            ]),
        );
        categories.insert(
            Category::CitationRecord,
            cat(&[("citations", Number), ("source", Text)]),
        );
        categories.insert(
            Category::Project,
            cat(&[("intl_partner_count", Number), ("title", Text), ("funding", Number)]),
        );
        categories.insert(Category::Award, cat(&[("title", Text), ("level", Text)]));
        categories.insert(Category::Other, cat(&[("title", Text), ("description", Text)]));
        Self {
            resource_kinds: ResourceKind::ALL.to_vec(),
            categories,
        }
    }

    pub fn attribute_type(&self, category: Category, attribute: &str) -> Option<AttributeType> {
        self.categories.get(&category)?.get(attribute).copied()
    }

    /// All attribute names declared by any category, with their type.
    pub fn all_attributes(&self) -> BTreeMap<&str, AttributeType> {
        self.categories
            .values()
            .flat_map(|attrs| attrs.iter().map(|(n, t)| (n.as_str(), *t)))
            .collect()
    }

    pub fn validate_attributes(
        &self,
        category: Category,
        attributes: &BTreeMap<String, AttributeValue>,
    ) -> Result<(), DomainError> {
        let declared = self
            .categories
            .get(&category)
            .ok_or_else(|| DomainError::SchemaViolation(format!("category {category} not declared")))?;
        for (name, value) in attributes {
            let Some(ty) = declared.get(name) else {
                return Err(DomainError::SchemaViolation(format!(
                    "attribute {name:?} is not declared for category {category}"
                )));
            };
            if value.attribute_type() != *ty {
                return Err(DomainError::SchemaViolation(format!(
                    "attribute {name:?} of {category} expects {ty:?}"
                )));
            }
            if let AttributeValue::Number(x) = value {
                if !x.is_finite() {
                    return Err(DomainError::SchemaViolation(format!(
                        "attribute {name:?} must be finite"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate_extractor(&self, extractor: &Extractor) -> Result<(), DomainError> {
        let ty = self
            .attribute_type(extractor.category, &extractor.attribute)
            .ok_or_else(|| DomainError::UnknownAttribute {
                category: extractor.category,
                attribute: extractor.attribute.clone(),
            })?;
        if extractor.aggregation != Aggregation::Count && ty != AttributeType::Number {
            return Err(DomainError::NonNumericAttribute(extractor.attribute.clone()));
        }
        Ok(())
    }
}

/// The starter indicators seeded into every new store.
pub fn starter_indicators() -> Vec<Indicator> {
    let ind = |id: &str, label: &str, category, attribute: &str, aggregation| Indicator {
        id: IndicatorId::new(id).expect("static id"),
        label: label.to_string(),
        extractor: Extractor {
            category,
            attribute: attribute.to_string(),
            aggregation,
            status_floor: StatusFloor::Reported,
        },
        direction: Direction::HigherIsBetter,
    };
    vec![
        ind(
            "cit",
            "Citation index",
            Category::CitationRecord,
            "citations",
            Aggregation::Sum,
        ),
        ind(
            "hif",
            "Publications in journals with an impact factor",
            Category::Publication,
            "impact_factor",
            Aggregation::Count,
        ),
        ind(
            "intl",
            "International collaboration partners",
            Category::Project,
            "intl_partner_count",
            Aggregation::Sum,
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error(transparent)]
    InvalidId(#[from] InvalidId),
    #[error("identifier {0} is already in use")]
    DuplicateId(String),
    #[error("unknown parent resource {0}")]
    UnknownParent(ResourceId),
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("membership cycle through {0}")]
    CycleDetected(ResourceId),
    #[error("unknown owner {0}")]
    UnknownOwner(ResourceId),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("year {0} outside [1900, 2100]")]
    YearOutOfRange(i32),
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: Status, to: Status },
    #[error("status {0} requires an evidence uri")]
    MissingEvidence(Status),
    #[error("unknown achievement {0}")]
    UnknownAchievement(AchievementId),
    #[error("attribute {attribute:?} is not declared for category {category}")]
    UnknownAttribute { category: Category, attribute: String },
    #[error("attribute {0:?} is not numeric; only count aggregation applies")]
    NonNumericAttribute(String),
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("unknown indicator {0}")]
    UnknownIndicator(IndicatorId),
    #[error("display name must not be empty")]
    EmptyName,
}

impl DomainError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidId(_) => "INVALID_ID",
            Self::DuplicateId(_) => "DUPLICATE_ID",
            Self::UnknownParent(_) => "UNKNOWN_PARENT",
            Self::KindMismatch(_) => "KIND_MISMATCH",
            Self::CycleDetected(_) => "CYCLE_DETECTED",
            Self::UnknownOwner(_) => "UNKNOWN_OWNER",
            Self::SchemaViolation(_) => "SCHEMA_VIOLATION",
            Self::YearOutOfRange(_) => "YEAR_OUT_OF_RANGE",
            Self::IllegalTransition { .. } => "ILLEGAL_TRANSITION",
            Self::MissingEvidence(_) => "MISSING_EVIDENCE",
            Self::UnknownAchievement(_) => "UNKNOWN_ACHIEVEMENT",
            Self::UnknownAttribute { .. } => "UNKNOWN_ATTRIBUTE",
            Self::NonNumericAttribute(_) => "NON_NUMERIC_ATTRIBUTE",
            Self::UnknownResource(_) => "UNKNOWN_RESOURCE",
            Self::UnknownIndicator(_) => "UNKNOWN_INDICATOR",
            Self::EmptyName => "EMPTY_NAME",
        }
    }
}
