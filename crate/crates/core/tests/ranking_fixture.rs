mod common;

use common::*;
use valrank_core::ranking::{assessment_report, compare_rankings, normalize_indicator, rank, score, Population};
use valrank_core::value_system::{aggregate_weights, normalize, value_distance, AggregationMethod};
use valrank_core::{IndicatorId, ResourceKind, ValueSystem};

fn f4_population(p: &valrank_core::Portal) -> Population {
    Population::of_kind(p.state(), ResourceKind::Person).unwrap()
}

/// Scores recomputed from the fixture table by hand-written arithmetic.
fn oracle(w: [f64; 3]) -> [f64; 4] {
    let cit = [100.0, 20.0, 10.0, 0.0];
    let hif = [10.0, 12.0, 6.0, 0.0];
    let intl = [2.0, 8.0, 10.0, 0.0];
    let sum: f64 = w.iter().sum();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (w[0] * cit[i] / 100.0 + w[1] * hif[i] / 12.0 + w[2] * intl[i] / 10.0) / sum;
    }
    out
}

#[test]
fn expert_scores_and_order() {
    let (p, e, _) = f4();
    let list = rank(p.state(), &f4_population(&p), &e).unwrap();
    let expect = oracle([0.8, 0.1, 0.1]);
    assert!(close(expect[0], 0.903_333_333, 1e-9));
    let order: Vec<_> = list.order().into_iter().map(|r| r.as_str()).collect();
    assert_eq!(order, ["p1", "p2", "p3", "p4"]);
    for (i, id) in ["p1", "p2", "p3", "p4"].iter().enumerate() {
        assert!(close(list.entry(&rid(id)).unwrap().score, expect[i], 1e-9), "{id}");
    }
    assert!(close(list.entries[1].score, 0.34, 1e-9));
    assert!(close(list.entries[2].score, 0.23, 1e-9));
    assert_eq!(list.entries[3].score, 0.0);
}

#[test]
fn crowd_scores_and_order() {
    let (p, _, m) = f4();
    let list = rank(p.state(), &f4_population(&p), &m).unwrap();
    let order: Vec<_> = list.order().into_iter().map(|r| r.as_str()).collect();
    assert_eq!(order, ["p2", "p3", "p1", "p4"]);
    let expect = oracle([0.1, 0.45, 0.45]);
    assert!(close(expect[1], 0.83, 1e-12));
    assert!(close(list.entry(&rid("p2")).unwrap().score, 0.83, 1e-9));
    assert!(close(list.entry(&rid("p3")).unwrap().score, 0.685, 1e-9));
    assert!(close(list.entry(&rid("p1")).unwrap().score, 0.565, 1e-9));
}

#[test]
fn single_scores() {
    let (p, e, m) = f4();
    let pop = f4_population(&p);
    assert!(close(score(p.state(), &rid("p1"), &e, &pop).unwrap().score, 0.90333, 1e-5));
    assert!(close(score(p.state(), &rid("p2"), &m, &pop).unwrap().score, 0.83, 1e-9));
    for vs in [&e, &m] {
        assert_eq!(score(p.state(), &rid("p4"), vs, &pop).unwrap().score, 0.0);
    }
}

#[test]
fn normalization_examples() {
    assert_eq!(normalize_indicator(&[100.0, 20.0, 10.0, 0.0]).unwrap(), [1.0, 0.2, 0.1, 0.0]);
    assert_eq!(normalize_indicator(&[5.0, 5.0, 5.0]).unwrap(), [0.0; 3]);
    assert_eq!(normalize_indicator(&[7.0]).unwrap(), [0.0]);
}

#[test]
fn reports() {
    let (p, e, m) = f4();
    let pop = f4_population(&p);
    let r1 = assessment_report(p.state(), &rid("p1"), &e, &pop).unwrap();
    assert_eq!(r1.rank, 1);
    assert_eq!(r1.strongest.as_ref().map(IndicatorId::as_str), Some("cit"));
    assert!(close(r1.per_indicator[&IndicatorId::new("cit").unwrap()].contribution, 0.8, 1e-12));
    let r4 = assessment_report(p.state(), &rid("p4"), &e, &pop).unwrap();
    assert_eq!(r4.rank, 4);
    assert!(r4.per_indicator.values().all(|b| b.contribution == 0.0));
    assert_eq!(r4.strongest, None);
    let r1m = assessment_report(p.state(), &rid("p1"), &m, &pop).unwrap();
    assert_eq!(r1m.rank, 3);
    assert_eq!(r1m.undervalued, vec![IndicatorId::new("cit").unwrap()]);
}

#[test]
fn comparisons() {
    let (p, e, m) = f4();
    let pop = f4_population(&p);
    let a = rank(p.state(), &pop, &e).unwrap();
    let b = rank(p.state(), &pop, &m).unwrap();
    let same = compare_rankings(&a, &a).unwrap();
    assert_eq!(same.kendall_tau_distance, 0);
    assert!(same.deltas.values().all(|d| d.delta == 0));
    let diff = compare_rankings(&a, &b).unwrap();
    assert_eq!(diff.kendall_tau_distance, 2);
    assert_eq!(diff.pairs, 6);
    assert_eq!(diff.deltas[&rid("p1")].delta, -2);
}

#[test]
fn ties_break_by_id() {
    let mut p = empty_portal();
    for id in ["q2", "q1", "q3"] {
        add_person(&mut p, id, None);
    }
    give(&mut p, "q2", 10, 1, 1);
    give(&mut p, "q1", 10, 1, 1);
    let vs = ValueSystem {
        id: valrank_core::ValueSystemId::new("x").unwrap(),
        owner: valrank_core::Owner::Collective,
        label: String::new(),
        weights: expert_weights(),
        created_at: chrono::DateTime::UNIX_EPOCH,
    };
    let list = rank(p.state(), &Population::of_kind(p.state(), ResourceKind::Person).unwrap(), &vs).unwrap();
    let order: Vec<_> = list.order().into_iter().map(|r| r.as_str()).collect();
    assert_eq!(order, ["q1", "q2", "q3"]);
    assert_eq!(list.entries[0].score, list.entries[1].score);
}

#[test]
fn value_system_examples() {
    let e = expert_weights();
    let m = crowd_weights();
    assert!(close(value_distance(&e, &m), 1.4, 1e-12));
    assert_eq!(value_distance(&e, &e), 0.0);
    assert_eq!(value_distance(&weights(&[("cit", 1.0)]), &weights(&[("hif", 1.0)])), 2.0);
    assert_eq!(normalize(&weights(&[("cit", 2.0), ("hif", 2.0)])), weights(&[("cit", 0.5), ("hif", 0.5)]));
    assert_eq!(normalize(&weights(&[("cit", 1.0)])), weights(&[("cit", 1.0)]));
    assert_eq!(normalize(&e), e);
}

#[test]
fn crowd_mean_is_dominated_by_the_aligned_majority() {
    let mk = |id: &str, w| ValueSystem {
        id: valrank_core::ValueSystemId::new(id).unwrap(),
        owner: valrank_core::Owner::Collective,
        label: String::new(),
        weights: w,
        created_at: chrono::DateTime::UNIX_EPOCH,
    };
    let expert = mk("e", expert_weights());
    let crowd: Vec<_> = (0..9).map(|i| mk(&format!("c{i}"), crowd_weights())).collect();
    let mut all: Vec<&ValueSystem> = vec![&expert];
    all.extend(crowd.iter());
    let csv = aggregate_weights(&all, &AggregationMethod::Mean, |_| None).unwrap();
    // (0.8 + 9 * 0.1) / 10 and (0.1 + 9 * 0.45) / 10
    assert!(close(csv[&IndicatorId::new("cit").unwrap()], 0.17, 1e-12));
    assert!(close(csv[&IndicatorId::new("hif").unwrap()], 0.415, 1e-12));
    assert!(close(csv[&IndicatorId::new("intl").unwrap()], 0.415, 1e-12));
    let two = aggregate_weights(
        &[&mk("a", weights(&[("cit", 1.0)])), &mk("b", weights(&[("hif", 1.0)]))],
        &AggregationMethod::Mean,
        |_| None,
    )
    .unwrap();
    assert_eq!(two, weights(&[("cit", 0.5), ("hif", 0.5)]));
}
