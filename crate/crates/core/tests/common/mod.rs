#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use valrank_core::domain::AttributeValue;
use valrank_core::{
    Category, Clock, IndicatorId, NewAchievement, NewResource, Owner, Portal, PsvDocument, ResourceId, ResourceKind,
    ValueSystem, Weights,
};

pub fn rid(s: &str) -> ResourceId {
    ResourceId::new(s).unwrap()
}

pub fn ids(xs: &[&str]) -> Vec<ResourceId> {
    xs.iter().map(|s| rid(s)).collect()
}

pub fn weights(pairs: &[(&str, f64)]) -> Weights {
    pairs.iter().map(|(k, v)| (IndicatorId::new(*k).unwrap(), *v)).collect()
}

pub fn fixed_clock() -> Clock {
    Clock::Fixed(DateTime::<Utc>::from_timestamp(1_700_000_000, 0).unwrap())
}

pub fn empty_portal() -> Portal {
    Portal::genesis(fixed_clock())
}

pub fn add_person(p: &mut Portal, id: &str, unit: Option<&str>) {
    p.register_resource(NewResource {
        id: Some(rid(id)),
        kind: ResourceKind::Person,
        display_name: id.to_uppercase(),
        member_of: unit.map(rid),
    })
    .unwrap();
}

pub fn achievement(owner: &str, category: Category, attr: &str, value: f64, year: i32) -> NewAchievement {
    NewAchievement {
        owner: rid(owner),
        category,
        attributes: BTreeMap::from([(attr.to_string(), AttributeValue::Number(value))]),
        year,
        evidence_uri: None,
        verified_by: None,
    }
}

/// Achievements giving `owner` the raw values (cit, hif, intl).
pub fn raw_achievements(owner: &str, cit: u32, hif: u32, intl: u32) -> Vec<NewAchievement> {
    let mut out = Vec::new();
    if cit > 0 {
        out.push(achievement(owner, Category::CitationRecord, "citations", f64::from(cit), 2018));
    }
    for _ in 0..hif {
        out.push(achievement(owner, Category::Publication, "impact_factor", 1.5, 2018));
    }
    if intl > 0 {
        out.push(achievement(owner, Category::Project, "intl_partner_count", f64::from(intl), 2018));
    }
    out
}

pub fn give(p: &mut Portal, owner: &str, cit: u32, hif: u32, intl: u32) {
    for a in raw_achievements(owner, cit, hif, intl) {
        p.attach_achievement(a).unwrap();
    }
}

pub const F4: [(&str, u32, u32, u32); 4] = [("p1", 100, 10, 2), ("p2", 20, 12, 8), ("p3", 10, 6, 10), ("p4", 0, 0, 0)];

pub fn expert_weights() -> Weights {
    weights(&[("cit", 0.8), ("hif", 0.1), ("intl", 0.1)])
}

pub fn crowd_weights() -> Weights {
    weights(&[("cit", 0.1), ("hif", 0.45), ("intl", 0.45)])
}

/// Four persons with the fixture raw values, the expert value system E
/// owned by p1 and the collective value system M.
pub fn f4() -> (Portal, ValueSystem, ValueSystem) {
    let mut p = empty_portal();
    for (id, cit, hif, intl) in F4 {
        add_person(&mut p, id, None);
        give(&mut p, id, cit, hif, intl);
    }
    let e = p
        .create_value_system(PsvDocument {
            id: Some(valrank_core::ValueSystemId::new("e").unwrap()),
            owner: Owner::Resource(rid("p1")),
            label: "expert".into(),
            weights: expert_weights(),
        })
        .unwrap();
    let m = p
        .create_value_system(PsvDocument {
            id: Some(valrank_core::ValueSystemId::new("m").unwrap()),
            owner: Owner::Collective,
            label: "crowd".into(),
            weights: crowd_weights(),
        })
        .unwrap();
    (p, e, m)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
