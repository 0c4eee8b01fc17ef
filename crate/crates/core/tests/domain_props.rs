mod common;

use common::*;
use proptest::prelude::*;
use valrank_core::state::EvalContext;
use valrank_core::{Category, IndicatorId, NewResource, ResourceKind};

fn register(p: &mut valrank_core::Portal, id: &str, kind: ResourceKind, parent: Option<&str>) {
    p.register_resource(NewResource {
        id: Some(rid(id)),
        kind,
        display_name: id.into(),
        member_of: parent.map(rid),
    })
    .unwrap();
}

/// Persons: (unit index, citations, publications, partners).
fn hierarchy() -> impl Strategy<Value = (usize, Vec<(usize, u32, u32, u32)>)> {
    (1usize..4).prop_flat_map(|units| {
        (
            Just(units),
            prop::collection::vec((0..units, 0u32..50, 0u32..4, 0u32..6), 1..8),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn organization_sums_member_persons((units, persons) in hierarchy()) {
        let mut p = empty_portal();
        register(&mut p, "org", ResourceKind::Organization, None);
        for u in 0..units {
            register(&mut p, &format!("u{u}"), ResourceKind::Unit, Some("org"));
        }
        for (i, (u, cit, hif, intl)) in persons.iter().enumerate() {
            let id = format!("m{i}");
            add_person(&mut p, &id, Some(&format!("u{u}")));
            give(&mut p, &id, *cit, *hif, *intl);
        }
        let ctx = EvalContext::default();
        let s = p.state();
        for ind in ["cit", "hif", "intl"] {
            let ind = IndicatorId::new(ind).unwrap();
            let org = s.raw_indicator_value(&rid("org"), &ind, &ctx).unwrap();
            let sum: f64 = (0..persons.len())
                .map(|i| s.raw_indicator_value(&rid(&format!("m{i}")), &ind, &ctx).unwrap())
                .sum();
            prop_assert_eq!(org, sum);
            let by_unit: f64 = (0..units)
                .map(|u| s.raw_indicator_value(&rid(&format!("u{u}")), &ind, &ctx).unwrap())
                .sum();
            prop_assert_eq!(org, by_unit);
        }
    }

    #[test]
    fn attaching_never_decreases_sum_or_count(cit in 0u32..100, extra in 1u32..100, category in 0usize..3) {
        let mut p = empty_portal();
        add_person(&mut p, "p1", None);
        give(&mut p, "p1", cit, 1, 1);
        let ctx = EvalContext::default();
        let before: Vec<f64> = ["cit", "hif", "intl"]
            .iter()
            .map(|i| p.state().raw_indicator_value(&rid("p1"), &IndicatorId::new(*i).unwrap(), &ctx).unwrap())
            .collect();
        let (cat, attr) = [
            (Category::CitationRecord, "citations"),
            (Category::Publication, "impact_factor"),
            (Category::Project, "intl_partner_count"),
        ][category];
        p.attach_achievement(achievement("p1", cat, attr, f64::from(extra), 2020)).unwrap();
        for (i, ind) in ["cit", "hif", "intl"].iter().enumerate() {
            let after = p.state().raw_indicator_value(&rid("p1"), &IndicatorId::new(*ind).unwrap(), &ctx).unwrap();
            prop_assert!(after >= before[i]);
        }
    }
}

#[test]
fn as_of_year_limits_extraction() {
    let mut p = empty_portal();
    add_person(&mut p, "p1", None);
    p.attach_achievement(achievement("p1", Category::CitationRecord, "citations", 5.0, 2010)).unwrap();
    p.attach_achievement(achievement("p1", Category::CitationRecord, "citations", 7.0, 2020)).unwrap();
    let cit = IndicatorId::new("cit").unwrap();
    let s = p.state();
    let at = |y| {
        s.raw_indicator_value(
            &rid("p1"),
            &cit,
            &EvalContext {
                as_of_year: y,
                ..Default::default()
            },
        )
        .unwrap()
    };
    assert_eq!(at(None), 12.0);
    assert_eq!(at(Some(2015)), 5.0);
    assert_eq!(at(Some(2000)), 0.0);
}

#[test]
fn disputed_and_unverified_records_follow_the_floor() {
    use valrank_core::domain::StatusFloor;
    use valrank_core::Status;
    let mut p = empty_portal();
    add_person(&mut p, "p1", None);
    let mut req = achievement("p1", Category::CitationRecord, "citations", 5.0, 2010);
    req.evidence_uri = Some("https://e".into());
    let a = p.attach_achievement(req).unwrap();
    p.attach_achievement(achievement("p1", Category::CitationRecord, "citations", 7.0, 2011)).unwrap();
    let cit = IndicatorId::new("cit").unwrap();
    let verified_only = EvalContext {
        as_of_year: None,
        status_floors: [(cit.clone(), StatusFloor::Verified)].into(),
    };
    assert_eq!(p.state().raw_indicator_value(&rid("p1"), &cit, &verified_only).unwrap(), 0.0);
    p.set_verification(&a.id, Status::Verified, "admin", None).unwrap();
    assert_eq!(p.state().raw_indicator_value(&rid("p1"), &cit, &verified_only).unwrap(), 5.0);
    let mut req = achievement("p1", Category::CitationRecord, "citations", 11.0, 2012);
    req.evidence_uri = Some("https://f".into());
    let b = p.attach_achievement(req).unwrap();
    assert_eq!(p.state().raw_indicator_value(&rid("p1"), &cit, &EvalContext::default()).unwrap(), 23.0);
    p.set_verification(&b.id, Status::Disputed, "admin", None).unwrap();
    assert_eq!(p.state().raw_indicator_value(&rid("p1"), &cit, &EvalContext::default()).unwrap(), 12.0);
}
