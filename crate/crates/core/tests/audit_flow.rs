use std::collections::BTreeSet;

use proptest::prelude::*;

use veilaudit_core::auditor::{cluster, escalate, min_cluster_size, sample_records, sample_visible, AuditorError};
use veilaudit_core::chainsim::LedgerEvent;
use veilaudit_core::linktag::extract_pseudonym;
use veilaudit_core::protocols::{irp_run, AuditTag, Party, ProtocolError, RevealCase};
use veilaudit_core::scenario::{ScenarioConfig, World};
use veilaudit_core::threshold::ThresholdError;

/// World where user 0 is the sender of 12 extra transfers.
fn outlier_world(seed: u64) -> World {
    let mut cfg = ScenarioConfig::with_size(30, 10);
    cfg.committee.t = 2;
    cfg.committee.n = 3;
    let mut w = World::generate(cfg, seed).unwrap();
    for _ in 0..12 {
        let plan = w.plan_for(0, 1 + w.transfers.len() % 9);
        w.run_transfer(plan).unwrap();
    }
    w
}

fn outlier_case(w: &World) -> RevealCase {
    let vis = sample_visible(&w.net.ledger, 1.0, 0).unwrap();
    let c = cluster(&vis, &w.et.ask, Party::A);
    let want = w.owners_a().iter().filter(|&&o| o == 0).count();
    let cases = escalate(&vis, &c, min_cluster_size(want));
    assert_eq!(cases.len(), 1);
    cases.into_iter().next().unwrap()
}

#[test]
fn escalation_finds_the_outlier() {
    let w = outlier_world(1);
    let case = outlier_case(&w);
    let own = w.owners_a().iter().filter(|&&o| o == 0).count();
    assert!(own >= 12);
    assert_eq!(case.tags.len(), own);
    assert!(case.approvals.is_empty());
    let keys: BTreeSet<_> = case.tags.iter().map(|t| t.key).collect();
    assert_eq!(keys.len(), own);
    for t in &case.tags {
        assert_eq!(t.party, Party::A);
        let tag = w.net.ledger.get(&t.key).unwrap();
        assert_eq!(Some(extract_pseudonym(&w.et.ask, &tag.party_a.ct_link)), case.cluster_evidence);
    }

    let vis = sample_visible(&w.net.ledger, 1.0, 0).unwrap();
    let c = cluster(&vis, &w.et.ask, Party::A);
    assert!(escalate(&vis, &c, |_, _| false).is_empty());
}

#[test]
fn reveal_needs_threshold_approvals() {
    let mut w = outlier_world(2);
    let mut case = outlier_case(&w);
    let events = w.net.ledger.events().len();
    case.approvals = BTreeSet::from([1]);
    let err = irp_run(&case, &w.keyset, &w.shares, &mut w.net.ledger, 0).unwrap_err();
    assert_eq!(err, ProtocolError::Threshold(ThresholdError::BelowThreshold { got: 1, need: 2 }));
    assert_eq!(w.net.ledger.events().len(), events);
    assert_eq!(w.net.ledger.reveal_count(), 0);

    for approvals in [[1, 2], [1, 3], [2, 3]] {
        case.approvals = BTreeSet::from(approvals);
        let revealed = irp_run(&case, &w.keyset, &w.shares, &mut w.net.ledger, 7).unwrap();
        assert_eq!(revealed, vec![w.users[0].pk_id]);
    }
    assert_eq!(w.net.ledger.reveal_count(), 3);
    let LedgerEvent::IdentityRevealed(rec) = w.net.ledger.events().last().unwrap() else {
        panic!("last event is not a reveal");
    };
    assert_eq!(rec.approvals, vec![2, 3]);
    assert_eq!(rec.tag_keys.len(), case.tags.len());
    assert_eq!(rec.timestamp_ms, 7);
}

#[test]
fn reveal_of_mixed_case_returns_every_identity() {
    let mut w = outlier_world(3);
    let keys: Vec<_> = w.transfers[..5].iter().map(|t| t.key).collect();
    let mut want: Vec<_> = Vec::new();
    for t in &w.transfers[..5] {
        if !want.contains(&w.users[t.owner_b].pk_id) {
            want.push(w.users[t.owner_b].pk_id);
        }
    }
    let case = RevealCase {
        case_id: b"mixed".to_vec(),
        tags: keys.iter().map(|&key| veilaudit_core::protocols::TagRef { key, party: Party::B }).collect(),
        cluster_evidence: None,
        approvals: BTreeSet::from([1, 3]),
    };
    let got = irp_run(&case, &w.keyset, &w.shares, &mut w.net.ledger, 0).unwrap();
    assert_eq!(got, want);
}

#[test]
fn visible_sample_size_is_binomial() {
    let w = World::generate(ScenarioConfig::with_size(50, 10), 4).unwrap();
    // counts only depend on the record count, so repeat the real records
    let records: Vec<_> = w.net.ledger.records().iter().cycle().take(10_000).cloned().collect();
    for seed in 0..20 {
        let v = sample_records(&records, 0.5, seed).unwrap();
        assert!((v.tags.len() as i64 - 5000).abs() <= 150, "seed {seed}: {}", v.tags.len());
        assert_eq!(v.total, 10_000);
        assert!(v.positions.windows(2).all(|p| p[0] < p[1]));
    }
    assert_eq!(sample_records(&records, 1.0, 0).unwrap().tags.len(), 10_000);
    for p in [0.0, -0.1, 1.01, f64::NAN] {
        assert!(matches!(sample_records(&records, p, 0), Err(AuditorError::BadRate(_))));
    }
}

fn one_tag() -> AuditTag {
    World::generate(ScenarioConfig::with_size(1, 2), 5).unwrap().tag(0).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tag_codec_roundtrip(ts in any::<u64>()) {
        let mut tag = one_tag();
        tag.core.ts = ts;
        let bytes = tag.encode();
        prop_assert_eq!(AuditTag::decode(&bytes).unwrap(), tag);
    }

    #[test]
    fn tag_decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        let _ = AuditTag::decode(&bytes);
    }

    #[test]
    fn truncated_tag_is_rejected(cut in 0usize..100) {
        let bytes = one_tag().encode();
        let n = bytes.len() * cut / 100;
        prop_assert!(AuditTag::decode(&bytes[..n]).is_err());
    }
}
