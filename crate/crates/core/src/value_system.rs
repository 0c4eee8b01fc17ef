//! Personal and collective systems of values.
//!
//! A value system is a map from indicator to a non-negative importance
//! weight. Weights are stored exactly as given and only normalized (divided
//! by their sum) when a value system is used for scoring or compared.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ids::{IndicatorId, ResourceId, ValueSystemId};

/// Literal owner name of aggregated value systems.
pub const COLLECTIVE: &str = "collective";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Owner {
    Resource(ResourceId),
    Collective,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Resource(r) => r.fmt(f),
            Owner::Collective => f.write_str(COLLECTIVE),
        }
    }
}

impl std::str::FromStr for Owner {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == COLLECTIVE {
            Ok(Owner::Collective)
        } else {
            ResourceId::new(s).map(Owner::Resource).map_err(|e| e.to_string())
        }
    }
}

impl Serialize for Owner {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Owner {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub type Weights = BTreeMap<IndicatorId, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSystem {
    pub id: ValueSystemId,
    pub owner: Owner,
    pub label: String,
    pub weights: Weights,
    pub created_at: DateTime<Utc>,
}

/// The on-disk / over-the-wire value system document.
///
/// `{"id","owner","label","weights":{indicator_id:number}}`; `id` may be
/// omitted when submitting a new value system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsvDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ValueSystemId>,
    pub owner: Owner,
    #[serde(default)]
    pub label: String,
    pub weights: Weights,
}

impl From<&ValueSystem> for PsvDocument {
    fn from(vs: &ValueSystem) -> Self {
        Self {
            id: Some(vs.id.clone()),
            owner: vs.owner.clone(),
            label: vs.label.clone(),
            weights: vs.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethodKind {
    Mean,
    Median,
    Leader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AggregationMethod {
    Mean,
    Median,
    /// Copy of the given person's value system.
    Leader(ResourceId),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValueSystemError {
    #[error("at least one weight must be positive")]
    AllZeroWeights,
    #[error("weight of {0} is negative")]
    NegativeWeight(IndicatorId),
    #[error("weight of {0} is not finite")]
    NonFiniteWeight(IndicatorId),
    #[error("unknown indicator {0}")]
    UnknownIndicator(IndicatorId),
    #[error("aggregation needs at least one value system")]
    EmptyInput,
    #[error("leader {0} has no value system")]
    LeaderHasNoPsv(ResourceId),
    #[error("unknown value system {0}")]
    UnknownValueSystem(ValueSystemId),
    #[error("value system id {0} is already in use")]
    DuplicateId(ValueSystemId),
    #[error("unknown owner {0}")]
    UnknownOwner(ResourceId),
}

impl ValueSystemError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::AllZeroWeights => "ALL_ZERO_WEIGHTS",
            Self::NegativeWeight(_) => "NEGATIVE_WEIGHT",
            Self::NonFiniteWeight(_) => "NON_FINITE_WEIGHT",
            Self::UnknownIndicator(_) => "UNKNOWN_INDICATOR",
            Self::EmptyInput => "EMPTY_INPUT",
            Self::LeaderHasNoPsv(_) => "LEADER_HAS_NO_PSV",
            Self::UnknownValueSystem(_) => "UNKNOWN_VALUE_SYSTEM",
            Self::DuplicateId(_) => "DUPLICATE_ID",
            Self::UnknownOwner(_) => "UNKNOWN_OWNER",
        }
    }
}

/// Check weight validity against the set of registered indicators.
pub fn validate_weights<'a>(
    weights: &Weights,
    registered: impl Fn(&IndicatorId) -> bool + 'a,
) -> Result<(), ValueSystemError> {
    for (id, &w) in weights {
        if !registered(id) {
            return Err(ValueSystemError::UnknownIndicator(id.clone()));
        }
        if !w.is_finite() {
            return Err(ValueSystemError::NonFiniteWeight(id.clone()));
        }
        if w < 0.0 {
            return Err(ValueSystemError::NegativeWeight(id.clone()));
        }
    }
    if !weights.values().any(|&w| w > 0.0) {
        return Err(ValueSystemError::AllZeroWeights);
    }
    Ok(())
}

/// Weights divided by their sum.
pub fn normalize(weights: &Weights) -> Weights {
    let total: f64 = weights.values().sum();
    weights.iter().map(|(k, &w)| (k.clone(), w / total)).collect()
}

impl ValueSystem {
    pub fn normalized_weights(&self) -> Weights {
        normalize(&self.weights)
    }
}

fn indicator_union<'a>(systems: impl IntoIterator<Item = &'a Weights>) -> BTreeSet<IndicatorId> {
    systems.into_iter().flat_map(|w| w.keys().cloned()).collect()
}

/// Combine personal value systems into collective weights.
///
/// Indicators missing from a value system count as weight 0. `Leader` returns
/// the leader's weights unchanged; `leader_psv` resolves that value system.
pub fn aggregate_weights(
    psvs: &[&ValueSystem],
    method: &AggregationMethod,
    leader_psv: impl Fn(&ResourceId) -> Option<ValueSystem>,
) -> Result<Weights, ValueSystemError> {
    if let AggregationMethod::Leader(leader) = method {
        return leader_psv(leader)
            .map(|vs| vs.weights)
            .ok_or_else(|| ValueSystemError::LeaderHasNoPsv(leader.clone()));
    }
    if psvs.is_empty() {
        return Err(ValueSystemError::EmptyInput);
    }
    let normalized: Vec<Weights> = psvs.iter().map(|vs| vs.normalized_weights()).collect();
    let union = indicator_union(&normalized);
    let column = |id: &IndicatorId| -> Vec<f64> {
        normalized
            .iter()
            .map(|w| w.get(id).copied().unwrap_or(0.0))
            .collect()
    };
    let n = normalized.len() as f64;
    let out: Weights = match method {
        AggregationMethod::Mean => union
            .iter()
            .map(|id| (id.clone(), column(id).iter().sum::<f64>() / n))
            .collect(),
        AggregationMethod::Median => {
            let medians: Weights = union.iter().map(|id| (id.clone(), median(column(id)))).collect();
            if !medians.values().any(|&w| w > 0.0) {
                return Err(ValueSystemError::AllZeroWeights);
            }
            normalize(&medians)
        }
        AggregationMethod::Leader(_) => unreachable!(),
    };
    Ok(out)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// L1 distance between normalized weight vectors over the union of indicators.
/// Always within `[0, 2]`.
pub fn value_distance(a: &Weights, b: &Weights) -> f64 {
    let (na, nb) = (normalize(a), normalize(b));
    indicator_union([&na, &nb])
        .iter()
        .map(|id| (na.get(id).copied().unwrap_or(0.0) - nb.get(id).copied().unwrap_or(0.0)).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(pairs: &[(&str, f64)]) -> Weights {
        pairs
            .iter()
            .map(|(k, v)| (IndicatorId::new(*k).unwrap(), *v))
            .collect()
    }

    fn vs(id: &str, weights: Weights) -> ValueSystem {
        ValueSystem {
            id: ValueSystemId::new(id).unwrap(),
            owner: Owner::Collective,
            label: String::new(),
            weights,
            created_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    fn known(_: &IndicatorId) -> bool {
        true
    }

    #[test]
    fn weight_validation() {
        assert_eq!(
            validate_weights(&w(&[("cit", 0.0)]), known),
            Err(ValueSystemError::AllZeroWeights)
        );
        assert_eq!(
            validate_weights(&w(&[("cit", -1.0), ("hif", 2.0)]), known),
            Err(ValueSystemError::NegativeWeight(IndicatorId::new("cit").unwrap()))
        );
        assert_eq!(
            validate_weights(&w(&[("zzz", 1.0)]), |id| id.as_str() != "zzz"),
            Err(ValueSystemError::UnknownIndicator(IndicatorId::new("zzz").unwrap()))
        );
        assert!(validate_weights(&w(&[("cit", 0.8), ("hif", 0.1), ("intl", 0.1)]), known).is_ok());
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize(&w(&[("cit", 2.0), ("hif", 2.0)])), w(&[("cit", 0.5), ("hif", 0.5)]));
        assert_eq!(normalize(&w(&[("cit", 1.0)])), w(&[("cit", 1.0)]));
        let e = w(&[("cit", 0.8), ("hif", 0.1), ("intl", 0.1)]);
        let ne = normalize(&e);
        for (k, v) in &e {
            assert!((ne[k] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_disjoint_unit_vectors() {
        let a = vs("a", w(&[("cit", 1.0)]));
        let b = vs("b", w(&[("hif", 1.0)]));
        let m = aggregate_weights(&[&a, &b], &AggregationMethod::Mean, |_| None).unwrap();
        assert_eq!(m, w(&[("cit", 0.5), ("hif", 0.5)]));
    }

    #[test]
    fn mean_of_identical_is_idempotent() {
        let e = vs("e", w(&[("cit", 0.8), ("hif", 0.1), ("intl", 0.1)]));
        let m = aggregate_weights(&[&e, &e, &e, &e], &AggregationMethod::Mean, |_| None).unwrap();
        for (k, v) in &e.weights {
            assert!((m[k] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn crowd_mean_is_dominated_by_aligned_majority() {
        // One expert plus a crowd of N identical PSVs: each component mean is
        // (expert + N*crowd)/(N+1).
        let e = vs("e", w(&[("cit", 0.8), ("hif", 0.1), ("intl", 0.1)]));
        let c = vs("c", w(&[("cit", 0.1), ("hif", 0.45), ("intl", 0.45)]));
        let mut input = vec![&e];
        input.extend(std::iter::repeat_n(&c, 9));
        let m = aggregate_weights(&input, &AggregationMethod::Mean, |_| None).unwrap();
        assert!((m[&IndicatorId::new("cit").unwrap()] - 0.17).abs() < 1e-12);
        assert!((m[&IndicatorId::new("hif").unwrap()] - 0.415).abs() < 1e-12);
        assert!((m[&IndicatorId::new("intl").unwrap()] - 0.415).abs() < 1e-12);
    }

    #[test]
    fn median_renormalizes() {
        let a = vs("a", w(&[("cit", 0.6), ("hif", 0.4)]));
        let b = vs("b", w(&[("cit", 0.2), ("hif", 0.8)]));
        let c = vs("c", w(&[("cit", 0.5), ("intl", 0.5)]));
        // medians: cit 0.5, hif 0.4, intl 0 -> sum 0.9
        let m = aggregate_weights(&[&a, &b, &c], &AggregationMethod::Median, |_| None).unwrap();
        assert!((m[&IndicatorId::new("cit").unwrap()] - 0.5 / 0.9).abs() < 1e-12);
        assert!((m[&IndicatorId::new("hif").unwrap()] - 0.4 / 0.9).abs() < 1e-12);
        assert_eq!(m[&IndicatorId::new("intl").unwrap()], 0.0);
    }

    #[test]
    fn median_of_disjoint_supports_is_degenerate() {
        let a = vs("a", w(&[("cit", 1.0)]));
        let b = vs("b", w(&[("hif", 1.0)]));
        let c = vs("c", w(&[("intl", 1.0)]));
        assert_eq!(
            aggregate_weights(&[&a, &b, &c], &AggregationMethod::Median, |_| None),
            Err(ValueSystemError::AllZeroWeights)
        );
    }

    #[test]
    fn leader_and_empty_errors() {
        let p = ResourceId::new("p1").unwrap();
        assert_eq!(
            aggregate_weights(&[], &AggregationMethod::Mean, |_| None),
            Err(ValueSystemError::EmptyInput)
        );
        assert_eq!(
            aggregate_weights(&[], &AggregationMethod::Leader(p.clone()), |_| None),
            Err(ValueSystemError::LeaderHasNoPsv(p.clone()))
        );
        let e = vs("e", w(&[("cit", 3.0)]));
        let copy = aggregate_weights(&[], &AggregationMethod::Leader(p), |_| Some(e.clone())).unwrap();
        assert_eq!(copy, e.weights);
    }

    #[test]
    fn distance_examples() {
        let e = w(&[("cit", 0.8), ("hif", 0.1), ("intl", 0.1)]);
        let m = w(&[("cit", 0.1), ("hif", 0.45), ("intl", 0.45)]);
        assert_eq!(value_distance(&e, &e), 0.0);
        assert_eq!(value_distance(&w(&[("cit", 1.0)]), &w(&[("hif", 1.0)])), 2.0);
        assert!((value_distance(&e, &m) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn owner_serializes_as_plain_string() {
        let doc = PsvDocument {
            id: Some(ValueSystemId::new("e").unwrap()),
            owner: Owner::Resource(ResourceId::new("p1").unwrap()),
            label: "expert".into(),
            weights: w(&[("cit", 0.8)]),
        };
        let s = crate::canonical::to_canonical_string(&doc).unwrap();
        assert_eq!(s, r#"{"id":"e","label":"expert","owner":"p1","weights":{"cit":0.8}}"#);
        let back: PsvDocument = serde_json::from_str(&s).unwrap();
        assert_eq!(back, doc);
        let coll: PsvDocument =
            serde_json::from_str(r#"{"owner":"collective","weights":{"cit":1}}"#).unwrap();
        assert_eq!(coll.owner, Owner::Collective);
    }

    fn weights_strategy() -> impl Strategy<Value = Weights> {
        prop::collection::btree_map(
            prop::sample::select(vec!["cit", "hif", "intl", "aw"]),
            0.0f64..10.0,
            1..4,
        )
        .prop_map(|m| m.into_iter().map(|(k, v)| (IndicatorId::new(k).unwrap(), v)).collect())
        .prop_filter("needs a positive weight", |w: &Weights| w.values().any(|&x| x > 0.0))
    }

    proptest! {
        #[test]
        fn normalized_weights_sum_to_one(weights in weights_strategy()) {
            let n = normalize(&weights);
            prop_assert!(n.values().all(|&x| x >= 0.0));
            prop_assert!((n.values().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn normalization_is_scale_invariant(weights in weights_strategy(), c in 0.001f64..1000.0) {
            let scaled: Weights = weights.iter().map(|(k, v)| (k.clone(), v * c)).collect();
            let (a, b) = (normalize(&weights), normalize(&scaled));
            for (k, v) in &a {
                prop_assert!((v - b[k]).abs() <= 1e-12);
            }
        }

        #[test]
        fn distance_is_a_metric(a in weights_strategy(), b in weights_strategy(), c in weights_strategy()) {
            let (ab, ba) = (value_distance(&a, &b), value_distance(&b, &a));
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(value_distance(&a, &a) <= 1e-12);
            prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
            prop_assert!(ab <= value_distance(&a, &c) + value_distance(&c, &b) + 1e-12);
        }

        #[test]
        fn mean_commutes_with_permutation(a in weights_strategy(), b in weights_strategy(), c in weights_strategy()) {
            let (va, vb, vc) = (vs("a", a), vs("b", b), vs("c", c));
            let m1 = aggregate_weights(&[&va, &vb, &vc], &AggregationMethod::Mean, |_| None).unwrap();
            let m2 = aggregate_weights(&[&vc, &va, &vb], &AggregationMethod::Mean, |_| None).unwrap();
            for (k, v) in &m1 {
                prop_assert!((v - m2[k]).abs() <= 1e-12);
            }
        }
    }
}
