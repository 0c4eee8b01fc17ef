mod common;

use common::*;
use proptest::prelude::*;
use valrank_core::audit::ReplayError;
use valrank_core::store::{
    append_audit, decode_snapshot, encode_snapshot, load_snapshot, read_audit, save_snapshot, state_digest, Store,
};
use valrank_core::{IndicatorId, LeagueConfig, Portal, State, StoreError, ValueSystemId};

fn f4_with_league() -> Portal {
    let (mut p, _, _) = f4();
    let pop = p.state().resources.keys().cloned().collect();
    p.init_league(pop, &ValueSystemId::new("e").unwrap(), LeagueConfig::new([2, 1, 1], 1).unwrap())
        .unwrap();
    p.run_epoch(Vec::new()).unwrap();
    p
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.json");
    let p = f4_with_league();
    let d1 = save_snapshot(p.state(), &path).unwrap();
    let loaded = load_snapshot(&path).unwrap();
    assert_eq!(&loaded, p.state());
    let d2 = save_snapshot(&loaded, &path).unwrap();
    assert_eq!(d1, d2);
    let mut changed = loaded.clone();
    let vs = changed.value_systems.get_mut(&ValueSystemId::new("e").unwrap()).unwrap();
    *vs.weights.get_mut(&IndicatorId::new("cit").unwrap()).unwrap() = 0.7;
    assert_ne!(state_digest(&changed), d1);
}

#[test]
fn empty_store_is_valid() {
    let s = State::genesis();
    assert_eq!(decode_snapshot(&encode_snapshot(&s)).unwrap(), s);
}

#[test]
fn corrupted_byte_is_detected() {
    let (p, _, _) = f4();
    let mut bytes = encode_snapshot(p.state());
    let needle = b"\"citations\":100";
    let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
    bytes[at + needle.len() - 3] = b'9';
    assert_eq!(decode_snapshot(&bytes).unwrap_err(), StoreError::DigestMismatch);
    // A flipped byte anywhere in the state either breaks the JSON or changes
    // the digest.
    let clean = encode_snapshot(p.state());
    let start = clean.windows(8).position(|w| w == b"\"state\":").unwrap() + 8;
    for i in (start..clean.len() - 2).step_by(97) {
        let mut b = clean.clone();
        b[i] ^= 0x01;
        assert!(decode_snapshot(&b).is_err(), "flip at {i}");
    }
}

#[test]
fn dangling_owner_is_an_integrity_violation() {
    let (p, _, _) = f4();
    let mut s = p.state().clone();
    let a = s.achievements.values_mut().next().unwrap();
    a.owner = rid("ghost");
    let err = decode_snapshot(&encode_snapshot(&s)).unwrap_err();
    assert!(matches!(err, StoreError::IntegrityViolation(_)), "{err:?}");
}

#[test]
fn audit_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.ndjson");
    let mut p = empty_portal();
    let genesis = p.take_pending();
    assert_eq!(genesis[0].seq, 1);
    append_audit(&path, &genesis[..1]).unwrap();
    append_audit(&path, &genesis[1..]).unwrap();
    add_person(&mut p, "p1", None);
    append_audit(&path, &p.take_pending()).unwrap();
    let read = read_audit(&path).unwrap();
    assert_eq!(read.iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3, 4]);
    // Dropping a line leaves a gap.
    let text = std::fs::read_to_string(&path).unwrap();
    let gapped: Vec<_> = text.lines().enumerate().filter(|(i, _)| *i != 1).map(|(_, l)| l).collect();
    std::fs::write(&path, gapped.join("\n")).unwrap();
    assert_eq!(
        read_audit(&path).unwrap_err(),
        StoreError::Replay(ReplayError::SequenceGap { expected: 2, found: 3 })
    );
}

#[test]
fn store_lifecycle_and_lock() {
    let dir = tempfile::tempdir().unwrap();
    let (store, state) = Store::init(dir.path(), fixed_clock()).unwrap();
    assert_eq!(state.indicators.len(), 3);
    assert!(matches!(Store::open(dir.path()), Err(StoreError::StoreLocked(_))));
    assert!(matches!(Store::init(dir.path(), fixed_clock()), Err(StoreError::AlreadyInitialized(_))));
    let mut p = Portal::new(store.load().unwrap(), fixed_clock());
    add_person(&mut p, "p1", None);
    store.commit(&p.take_pending(), p.state()).unwrap();
    drop(store);
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(&store.load().unwrap(), p.state());
    let report = store.replay().unwrap();
    assert!(report.consistent);
    assert_eq!(report.events, 4);
    let ro = Store::open_read_only(dir.path()).unwrap();
    assert!(!ro.is_writable());
    assert!(ro.commit(&[], p.state()).is_err());
    assert!(matches!(
        Store::open(&dir.path().join("missing")),
        Err(StoreError::NotInitialized(_))
    ));
}

#[test]
fn events_after_the_snapshot_are_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let (store, state) = Store::init(dir.path(), fixed_clock()).unwrap();
    let mut p = Portal::new(state, fixed_clock());
    add_person(&mut p, "p1", None);
    // Simulate a writer that stopped after the audit append.
    append_audit(&store.audit_path(), &p.take_pending()).unwrap();
    assert_eq!(&store.load().unwrap(), p.state());
}

#[test]
fn replay_reproduces_league_state() {
    let dir = tempfile::tempdir().unwrap();
    let (store, genesis) = Store::init(dir.path(), fixed_clock()).unwrap();
    let (mut p, _, _) = f4();
    let pop = p.state().resources.keys().cloned().collect();
    p.init_league(pop, &ValueSystemId::new("e").unwrap(), LeagueConfig::new([2, 1, 1], 1).unwrap())
        .unwrap();
    for _ in 0..3 {
        p.run_epoch(Vec::new()).unwrap();
    }
    let events = p.take_pending();
    // The fixture starts from the same genesis events the store holds.
    let head = genesis.audit_head as usize;
    store.commit(&events[head..], p.state()).unwrap();
    let report = store.replay().unwrap();
    assert!(report.consistent, "{report:?}");
    assert_eq!(store.load().unwrap().league, p.state().league);
}

#[test]
fn csv_import() {
    let mut p = empty_portal();
    add_person(&mut p, "p1", None);
    let csv = "owner,category,year,attr_name,attr_value,evidence_uri\n\
               p1,citation_record,2018,citations,100,https://scholar.example/p1\n\
               p1,publication,2019,impact_factor,3.2,\n\
               p1,project,2020,intl_partner_count,4,\n";
    let report = p.import_achievements(csv.as_bytes(), false).unwrap();
    assert_eq!(report.imported.len(), 3);
    assert!(report.errors.is_empty());

    let mixed = "owner,category,year,attr_name,attr_value,evidence_uri\n\
                 p1,award,2018,title,Best paper,\n\
                 ghost,award,2018,title,x,\n\
                 p1,award,1800,title,y,\n";
    let before = p.state().clone();
    let atomic = p.import_achievements(mixed.as_bytes(), true).unwrap();
    assert!(atomic.imported.is_empty());
    assert_eq!(atomic.errors.len(), 2);
    assert_eq!(p.state(), &before);

    let partial = p.import_achievements(mixed.as_bytes(), false).unwrap();
    assert_eq!(partial.imported.len(), 1);
    assert_eq!(partial.errors[0].line, 3);
    assert_eq!(partial.errors[0].code, "UNKNOWN_OWNER");
    assert_eq!(partial.errors[1].line, 4);
    assert_eq!(partial.errors[1].code, "YEAR_OUT_OF_RANGE");

    let bad_header = "owner,category,year\np1,award,2018\n";
    assert!(matches!(
        p.import_achievements(bad_header.as_bytes(), false),
        Err(StoreError::HeaderMismatch { .. })
    ));
}

/// Persons' raw values, value system weights, whether to start a league.
type SmallStore = (Vec<(u32, u32, u32)>, Vec<[u8; 3]>, bool);

fn small_store() -> impl Strategy<Value = SmallStore> {
    (
        prop::collection::vec((0u32..200, 0u32..5, 0u32..12), 0..6),
        prop::collection::vec([0u8..5, 0u8..5, 1u8..5], 0..3),
        any::<bool>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_random_stores((persons, psvs, league) in small_store()) {
        let mut p = empty_portal();
        for (i, (c, h, x)) in persons.iter().enumerate() {
            let id = format!("x{i}");
            add_person(&mut p, &id, None);
            give(&mut p, &id, *c, *h, *x);
        }
        for (i, w) in psvs.iter().enumerate() {
            let owner = if persons.is_empty() { valrank_core::Owner::Collective } else {
                valrank_core::Owner::Resource(rid(&format!("x{}", i % persons.len())))
            };
            p.create_value_system(valrank_core::PsvDocument {
                id: None,
                owner,
                label: format!("v{i}"),
                weights: weights(&[("cit", f64::from(w[0]) / 3.0), ("hif", f64::from(w[1]) * 0.1), ("intl", f64::from(w[2]))]),
            }).unwrap();
        }
        if league && persons.len() >= 3 && !psvs.is_empty() {
            let pop: Vec<_> = p.state().resources.keys().cloned().collect();
            let n = pop.len();
            let vs = p.state().value_systems.keys().next().unwrap().clone();
            p.init_league(pop, &vs, LeagueConfig::new([1, 1, n - 2], 1).unwrap()).unwrap();
            p.run_epoch(Vec::new()).unwrap();
        }
        let bytes = encode_snapshot(p.state());
        let back = decode_snapshot(&bytes).unwrap();
        prop_assert_eq!(&back, p.state());
        prop_assert_eq!(encode_snapshot(&back), bytes);
    }
}
