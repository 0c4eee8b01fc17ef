//! Filter queries with ranking, report and decision analytics.
//!
//! ```text
//! query     := "kind" ":" kind { ["AND"] clause } [ "|" directive ]
//! clause    := field op value
//! op        := "=" | "!=" | ">=" | "<=" | "contains"
//! value     := bare-word | '"' chars '"'
//! directive := "fetch" | "rank" | "report" | "decide" "(" id { "," id } ")"
//! ```
//!
//! A clause on a field the entity has no value for is false, whatever the
//! operator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{Achievement, DomainError, Resource, ResourceKind};
use crate::ids::{IndicatorId, ResourceId, ValueSystemId};
use crate::ranking::{rank, report_from_ranking, AssessmentReport, Population, RankingError, RankingList, TIE_EPSILON};
use crate::state::{EvalContext, State};
use crate::value_system::ValueSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Person,
    Unit,
    Organization,
    Achievement,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Person => "person",
            Self::Unit => "unit",
            Self::Organization => "organization",
            Self::Achievement => "achievement",
        }
    }

    pub fn resource_kind(self) -> Option<ResourceKind> {
        match self {
            Self::Person => Some(ResourceKind::Person),
            Self::Unit => Some(ResourceKind::Unit),
            Self::Organization => Some(ResourceKind::Organization),
            Self::Achievement => None,
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        [Self::Person, Self::Unit, Self::Organization, Self::Achievement]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "contains")]
    Contains,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Ge => ">=",
            Op::Le => "<=",
            Op::Contains => "contains",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub field: String,
    pub op: Op,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "directive", content = "options", rename_all = "snake_case")]
pub enum Directive {
    Fetch,
    Rank,
    Report,
    Decide(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub kind: TargetKind,
    pub clauses: Vec<Clause>,
    #[serde(flatten)]
    pub directive: Directive,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at {position}: {message}")]
    SyntaxError { position: usize, message: String },
    #[error("unknown field {field:?} for kind {kind}")]
    UnknownField { kind: String, field: String },
    #[error("unknown kind {0:?}")]
    UnknownKind(String),
    #[error("directive {0} is not available for achievements")]
    UnsupportedDirective(String),
    #[error("no value system: the caller has none and none was named")]
    NoValueSystem,
    #[error("a decision needs at least one option")]
    EmptyOptions,
    #[error("option {0} links no resources")]
    EmptyOption(String),
    #[error("unknown value system {0}")]
    UnknownValueSystem(ValueSystemId),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::SyntaxError { .. } => "SYNTAX_ERROR",
            Self::UnknownField { .. } => "UNKNOWN_FIELD",
            Self::UnknownKind(_) => "UNKNOWN_KIND",
            Self::UnsupportedDirective(_) => "UNSUPPORTED_DIRECTIVE",
            Self::NoValueSystem => "NO_VALUE_SYSTEM",
            Self::EmptyOptions => "EMPTY_OPTIONS",
            Self::EmptyOption(_) => "EMPTY_OPTIONS",
            Self::UnknownValueSystem(_) => "UNKNOWN_VALUE_SYSTEM",
            Self::Ranking(e) => e.code(),
            Self::Domain(e) => e.code(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn syntax(position: usize, message: impl Into<String>) -> QueryError {
    QueryError::SyntaxError {
        position,
        message: message.into(),
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.'
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), QueryError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(syntax(self.pos, format!("expected {s:?}")))
        }
    }

    fn word(&mut self) -> Result<(usize, &'a str), QueryError> {
        self.skip_ws();
        let start = self.pos;
        let len = self.rest().find(|c: char| !is_word_char(c)).unwrap_or(self.rest().len());
        if len == 0 {
            return Err(syntax(start, "expected a name"));
        }
        self.pos += len;
        Ok((start, &self.src[start..self.pos]))
    }

    /// `word` if the next word is exactly `kw` (case-insensitive) followed
    /// by a non-word character.
    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        let n = kw.len();
        if rest.len() >= n
            && rest.is_char_boundary(n)
            && rest[..n].eq_ignore_ascii_case(kw)
            && !rest[n..].starts_with(is_word_char)
        {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn value(&mut self) -> Result<String, QueryError> {
        self.skip_ws();
        let start = self.pos;
        if self.rest().starts_with('"') {
            let mut out = String::new();
            let mut chars = self.rest()[1..].char_indices();
            while let Some((i, c)) = chars.next() {
                match c {
                    '"' => {
                        self.pos += 1 + i + 1;
                        return Ok(out);
                    }
                    '\\' => match chars.next() {
                        Some((_, e)) => out.push(e),
                        None => break,
                    },
                    c => out.push(c),
                }
            }
            return Err(syntax(start, "unterminated string"));
        }
        let len = self
            .rest()
            .find(|c: char| c.is_whitespace() || c == '|' || c == '"')
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(syntax(start, "expected a value"));
        }
        self.pos += len;
        Ok(self.src[start..self.pos].to_string())
    }

    fn op(&mut self) -> Result<Op, QueryError> {
        for (s, op) in [("!=", Op::Ne), (">=", Op::Ge), ("<=", Op::Le), ("=", Op::Eq)] {
            if self.eat(s) {
                return Ok(op);
            }
        }
        if self.keyword("contains") {
            return Ok(Op::Contains);
        }
        Err(syntax(self.pos, "expected one of = != >= <= contains"))
    }
}

/// Parse query text without checking field names.
pub fn parse(text: &str) -> Result<Query, QueryError> {
    let mut lx = Lexer { src: text, pos: 0 };
    if lx.at_end() {
        return Err(syntax(0, "empty query"));
    }
    if !lx.keyword("kind") {
        return Err(syntax(lx.pos, "query must start with kind:<kind>"));
    }
    lx.expect(":")?;
    let (_, kind) = lx.word()?;
    let kind: TargetKind = kind.parse().map_err(|_| QueryError::UnknownKind(kind.to_string()))?;
    let mut clauses = Vec::new();
    let mut directive = Directive::Fetch;
    loop {
        if lx.at_end() {
            break;
        }
        if lx.eat("|") {
            directive = parse_directive(&mut lx)?;
            if !lx.at_end() {
                return Err(syntax(lx.pos, "unexpected input after directive"));
            }
            break;
        }
        if !clauses.is_empty() && lx.keyword("and") && (lx.at_end() || lx.peek() == Some('|')) {
            return Err(syntax(lx.pos, "expected a clause after AND"));
        }
        let (_, field) = lx.word()?;
        let op = lx.op()?;
        let value = lx.value()?;
        clauses.push(Clause {
            field: field.to_string(),
            op,
            value,
        });
    }
    Ok(Query {
        kind,
        clauses,
        directive,
    })
}

fn parse_directive(lx: &mut Lexer<'_>) -> Result<Directive, QueryError> {
    let (start, name) = lx.word()?;
    match name {
        "fetch" => Ok(Directive::Fetch),
        "rank" => Ok(Directive::Rank),
        "report" => Ok(Directive::Report),
        "decide" => {
            lx.expect("(")?;
            let mut ids = Vec::new();
            loop {
                let (_, id) = lx.word()?;
                ids.push(id.to_string());
                if lx.eat(")") {
                    break;
                }
                lx.expect(",")?;
            }
            Ok(Directive::Decide(ids))
        }
        other => Err(syntax(start, format!("unknown directive {other:?}"))),
    }
}

const RESOURCE_FIELDS: [&str; 6] = ["id", "name", "kind", "member_of", "unit", "organization"];
const ACHIEVEMENT_FIELDS: [&str; 6] = ["id", "owner", "category", "year", "status", "evidence_uri"];

/// Field names valid for `kind` in `state`.
pub fn fields_for(state: &State, kind: TargetKind) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = BTreeSet::new();
    if kind == TargetKind::Achievement {
        out.extend(ACHIEVEMENT_FIELDS.iter().map(|s| s.to_string()));
        out.extend(state.schema.all_attributes().keys().map(|s| s.to_string()));
    } else {
        out.extend(RESOURCE_FIELDS.iter().map(|s| s.to_string()));
        out.extend(state.indicators.keys().map(|i| i.to_string()));
    }
    out
}

/// Parse query text and resolve field names against `state`.
pub fn parse_query(text: &str, state: &State) -> Result<Query, QueryError> {
    let q = parse(text)?;
    let fields = fields_for(state, q.kind);
    for c in &q.clauses {
        if !fields.contains(&c.field) {
            return Err(QueryError::UnknownField {
                kind: q.kind.as_str().to_string(),
                field: c.field.clone(),
            });
        }
    }
    if q.kind == TargetKind::Achievement && q.directive != Directive::Fetch {
        let name = match &q.directive {
            Directive::Rank => "rank",
            Directive::Report => "report",
            _ => "decide",
        };
        return Err(QueryError::UnsupportedDirective(name.to_string()));
    }
    Ok(q)
}

/// A field value as seen by the filter.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Num(f64),
    Text(String),
}

impl FieldValue {
    fn text(&self) -> String {
        match self {
            FieldValue::Num(x) => x.to_string(),
            FieldValue::Text(s) => s.clone(),
        }
    }
}

/// Whether a present field value satisfies `op literal`. Numeric comparison
/// applies when both sides are numbers, text comparison otherwise.
pub fn compare(value: &FieldValue, op: Op, literal: &str) -> bool {
    let lit_num = literal.trim().parse::<f64>().ok().filter(|x| x.is_finite());
    let ord = match (value, lit_num) {
        (FieldValue::Num(x), Some(y)) => x.partial_cmp(&y),
        _ => Some(value.text().as_str().cmp(literal)),
    };
    match op {
        Op::Eq => ord == Some(std::cmp::Ordering::Equal),
        Op::Ne => ord != Some(std::cmp::Ordering::Equal),
        Op::Ge => ord.is_some_and(|o| o.is_ge()),
        Op::Le => ord.is_some_and(|o| o.is_le()),
        Op::Contains => value.text().contains(literal),
    }
}

fn ancestor_name(state: &State, r: &Resource, kind: ResourceKind) -> Option<String> {
    let mut cur = Some(r);
    while let Some(x) = cur {
        if x.kind == kind {
            return Some(x.display_name.clone());
        }
        cur = x.member_of.as_ref().and_then(|p| state.resources.get(p));
    }
    None
}

pub fn resource_field(
    state: &State,
    r: &Resource,
    field: &str,
    indicators: &BTreeMap<&str, f64>,
) -> Option<FieldValue> {
    match field {
        "id" => Some(FieldValue::Text(r.id.to_string())),
        "name" => Some(FieldValue::Text(r.display_name.clone())),
        "kind" => Some(FieldValue::Text(r.kind.to_string())),
        "member_of" => r.member_of.as_ref().map(|p| FieldValue::Text(p.to_string())),
        "unit" => ancestor_name(state, r, ResourceKind::Unit).map(FieldValue::Text),
        "organization" => ancestor_name(state, r, ResourceKind::Organization).map(FieldValue::Text),
        other => indicators.get(other).map(|x| FieldValue::Num(*x)),
    }
}

pub fn achievement_field(a: &Achievement, field: &str) -> Option<FieldValue> {
    use crate::domain::AttributeValue;
    match field {
        "id" => Some(FieldValue::Text(a.id.to_string())),
        "owner" => Some(FieldValue::Text(a.owner.to_string())),
        "category" => Some(FieldValue::Text(a.category.to_string())),
        "year" => Some(FieldValue::Num(f64::from(a.year))),
        "status" => Some(FieldValue::Text(a.status.to_string())),
        "evidence_uri" => a.evidence_uri.clone().map(FieldValue::Text),
        attr => a.attributes.get(attr).map(|v| match v {
            AttributeValue::Number(x) => FieldValue::Num(*x),
            AttributeValue::Boolean(b) => FieldValue::Text(b.to_string()),
            AttributeValue::Text(s) => FieldValue::Text(s.clone()),
        }),
    }
}

/// Ids of the entities satisfying every clause, in ascending order.
pub fn filter(state: &State, query: &Query) -> Vec<String> {
    let Some(kind) = query.kind.resource_kind() else {
        return state
            .achievements
            .values()
            .filter(|a| {
                query.clauses.iter().all(|c| {
                    achievement_field(a, &c.field).is_some_and(|v| compare(&v, c.op, &c.value))
                })
            })
            .map(|a| a.id.to_string())
            .collect();
    };
    let candidates: Vec<&Resource> = state.resources_of_kind(kind).collect();
    let ind_fields: Vec<&crate::domain::Indicator> = query
        .clauses
        .iter()
        .filter_map(|c| state.indicators.get_key_value(&IndicatorId::new(c.field.as_str()).ok()?))
        .collect::<BTreeMap<_, _>>()
        .into_values()
        .collect();
    let ids: Vec<ResourceId> = candidates.iter().map(|r| r.id.clone()).collect();
    let matrix = state.raw_matrix(&ids, &ind_fields, &EvalContext::default());
    candidates
        .iter()
        .zip(matrix)
        .filter(|(r, row)| {
            let values: BTreeMap<&str, f64> = ind_fields.iter().map(|i| i.id.as_str()).zip(row.iter().copied()).collect();
            query.clauses.iter().all(|c| {
                resource_field(state, r, &c.field, &values).is_some_and(|v| compare(&v, c.op, &c.value))
            })
        })
        .map(|(r, _)| r.id.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOption {
    pub option_id: String,
    pub resources: Vec<ResourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOption {
    pub option_id: String,
    pub rank: usize,
    pub score: f64,
    pub resources: Vec<ResourceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMetadata {
    pub executed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: Query,
    pub matches: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingList>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reports: Option<Vec<AssessmentReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<Vec<RankedOption>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_system: Option<ValueSystemId>,
    pub metadata: QueryMetadata,
}

/// Who runs a query and which value system analytics use. An explicit
/// value system wins over the caller's own.
#[derive(Debug, Clone, Default)]
pub struct Caller {
    pub resource: Option<ResourceId>,
    pub value_system: Option<ValueSystem>,
}

impl Caller {
    pub fn with_value_system(vs: ValueSystem) -> Self {
        Self {
            resource: None,
            value_system: Some(vs),
        }
    }

    fn resolve<'a>(&'a self, state: &'a State) -> Result<&'a ValueSystem, QueryError> {
        if let Some(vs) = &self.value_system {
            return Ok(vs);
        }
        let r = self.resource.as_ref().ok_or(QueryError::NoValueSystem)?;
        let id = state.resource(r)?.psv.as_ref().ok_or(QueryError::NoValueSystem)?;
        state
            .value_systems
            .get(id)
            .ok_or_else(|| QueryError::UnknownValueSystem(id.clone()))
    }
}

fn population(state: &State, kind: ResourceKind, matches: &[String]) -> Result<Option<Population>, QueryError> {
    if matches.is_empty() {
        return Ok(None);
    }
    let members = matches
        .iter()
        .map(|m| ResourceId::new(m.as_str()).map_err(DomainError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let pop = Population::new(state, members, EvalContext::default())?;
    debug_assert_eq!(pop.kind, kind);
    Ok(Some(pop))
}

fn rank_matches(state: &State, kind: ResourceKind, matches: &[String], vs: &ValueSystem) -> Result<RankingList, QueryError> {
    match population(state, kind, matches)? {
        Some(pop) => Ok(rank(state, &pop, vs)?),
        None => Ok(RankingList {
            value_system: vs.id.clone(),
            population: crate::ranking::population_hash(&[], &EvalContext::default()),
            entries: Vec::new(),
        }),
    }
}

/// Run a parsed query.
pub fn execute(
    state: &State,
    query: &Query,
    caller: &Caller,
    options: &[DecisionOption],
    at: DateTime<Utc>,
) -> Result<QueryResult, QueryError> {
    if let Some(r) = &caller.resource {
        state.resource(r)?;
    }
    let matches = filter(state, query);
    let mut result = QueryResult {
        query: query.clone(),
        matches,
        ranking: None,
        reports: None,
        decision: None,
        value_system: None,
        metadata: QueryMetadata { executed_at: at },
    };
    let kind = match (query.kind.resource_kind(), &query.directive) {
        (_, Directive::Fetch) => return Ok(result),
        (Some(k), _) => k,
        (None, _) => return Err(QueryError::UnsupportedDirective("analytics".into())),
    };
    let vs = caller.resolve(state)?;
    result.value_system = Some(vs.id.clone());
    let ranking = rank_matches(state, kind, &result.matches, vs)?;
    match &query.directive {
        Directive::Fetch => unreachable!(),
        Directive::Rank => result.ranking = Some(ranking),
        Directive::Report => {
            let reports = ranking
                .entries
                .iter()
                .filter_map(|e| report_from_ranking(&ranking, &e.resource))
                .collect();
            result.reports = Some(reports);
        }
        Directive::Decide(ids) => {
            let chosen: Vec<DecisionOption> = if options.is_empty() {
                ids.iter()
                    .map(|id| {
                        Ok(DecisionOption {
                            option_id: id.clone(),
                            resources: vec![ResourceId::new(id.as_str()).map_err(DomainError::from)?],
                        })
                    })
                    .collect::<Result<_, QueryError>>()?
            } else {
                options
                    .iter()
                    .filter(|o| ids.is_empty() || ids.contains(&o.option_id))
                    .cloned()
                    .collect()
            };
            result.decision = Some(decide_with(state, &ranking, &chosen)?);
            result.ranking = Some(ranking);
        }
    }
    Ok(result)
}

/// Order decision options by the mean score of their linked resources.
pub fn decide_with(state: &State, ranking: &RankingList, options: &[DecisionOption]) -> Result<Vec<RankedOption>, QueryError> {
    if options.is_empty() {
        return Err(QueryError::EmptyOptions);
    }
    let mut scored = Vec::with_capacity(options.len());
    for o in options {
        if o.resources.is_empty() {
            return Err(QueryError::EmptyOption(o.option_id.clone()));
        }
        let mut sum = 0.0;
        for r in &o.resources {
            state.resource(r)?;
            let entry = ranking
                .entry(r)
                .ok_or_else(|| RankingError::ResourceNotInPopulation(r.clone()))?;
            sum += entry.score;
        }
        scored.push((o, sum / o.resources.len() as f64));
    }
    scored.sort_by(|(a, x), (b, y)| y.total_cmp(x).then_with(|| a.option_id.cmp(&b.option_id)));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (o, score))| RankedOption {
            option_id: o.option_id.clone(),
            rank: i + 1,
            score,
            resources: o.resources.clone(),
        })
        .collect())
}

/// Parse and run a decision query with explicit options.
pub fn decide(
    state: &State,
    text: &str,
    options: &[DecisionOption],
    caller: &Caller,
    at: DateTime<Utc>,
) -> Result<QueryResult, QueryError> {
    let mut q = parse_query(text, state)?;
    match &q.directive {
        Directive::Decide(_) => {}
        Directive::Fetch => q.directive = Directive::Decide(Vec::new()),
        _ => return Err(syntax(0, "a decision query takes no other directive")),
    }
    if options.is_empty() && matches!(&q.directive, Directive::Decide(ids) if ids.is_empty()) {
        return Err(QueryError::EmptyOptions);
    }
    execute(state, &q, caller, options, at)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub query: Query,
    pub filters: Vec<Clause>,
    pub matches: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_system: Option<ValueSystemId>,
    /// Weighted contribution of each indicator to each ranked score.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contributions: Option<BTreeMap<ResourceId, BTreeMap<IndicatorId, f64>>>,
    /// Raw value range per indicator used for normalization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistics: Option<BTreeMap<IndicatorId, IndicatorRange>>,
    /// Groups of entries whose scores tie, in ranked order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ties: Vec<Vec<ResourceId>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<String>,
}

pub fn explain(result: &QueryResult) -> Explanation {
    let mut out = Explanation {
        query: result.query.clone(),
        filters: result.query.clauses.clone(),
        matches: result.matches.clone(),
        value_system: result.value_system.clone(),
        contributions: None,
        statistics: None,
        ties: Vec::new(),
        tie_break: None,
    };
    let Some(ranking) = &result.ranking else {
        return out;
    };
    let mut contributions = BTreeMap::new();
    let mut stats: BTreeMap<IndicatorId, IndicatorRange> = BTreeMap::new();
    for e in &ranking.entries {
        let mut c = BTreeMap::new();
        for (ind, b) in &e.per_indicator {
            c.insert(ind.clone(), b.contribution);
            stats
                .entry(ind.clone())
                .and_modify(|r| {
                    r.min = r.min.min(b.raw);
                    r.max = r.max.max(b.raw);
                })
                .or_insert(IndicatorRange { min: b.raw, max: b.raw });
        }
        contributions.insert(e.resource.clone(), c);
    }
    let mut groups: Vec<Vec<ResourceId>> = Vec::new();
    let mut prev: Option<f64> = None;
    for e in &ranking.entries {
        match (prev, groups.last_mut()) {
            (Some(p), Some(g)) if (p - e.score).abs() <= TIE_EPSILON => g.push(e.resource.clone()),
            _ => groups.push(vec![e.resource.clone()]),
        }
        prev = Some(e.score);
    }
    out.ties = groups.into_iter().filter(|g| g.len() > 1).collect();
    if !out.ties.is_empty() {
        out.tie_break = Some("equal scores are ordered by ascending resource id".into());
    }
    out.contributions = Some(contributions);
    out.statistics = Some(stats);
    out
}
