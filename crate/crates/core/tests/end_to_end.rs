use veilaudit_core::algebra::digest32;
use veilaudit_core::chainsim::{
    AuditOutcome, BridgeError, LedgerError, LedgerEvent, Transaction, TxKind,
};
use veilaudit_core::protocols::{aip_run, aud_build, FinalizedTransfer, Party};
use veilaudit_core::scenario::{Pattern, ScenarioConfig, World};

fn world(tags: usize, users: usize, seed: u64) -> World {
    World::generate(ScenarioConfig::with_size(tags, users), seed).unwrap()
}

#[test]
fn one_tag_per_transfer_and_commit_events() {
    let w = world(30, 6, 1);
    assert_eq!(w.net.ledger.len(), 30);
    assert_eq!(w.transfers.len(), 30);
    let commits: Vec<_> = w
        .net
        .ledger
        .events()
        .iter()
        .filter_map(|e| match e {
            LedgerEvent::TagCommitted { key, tag_hash } => Some((*key, *tag_hash)),
            _ => None,
        })
        .collect();
    assert_eq!(commits.len(), 30);
    for (i, (key, hash)) in commits.iter().enumerate() {
        let (k, tag) = &w.net.ledger.records()[i];
        assert_eq!((key, hash), (k, &tag.hash()));
        assert_eq!(&w.transfers[i].key, k);
    }
    assert!(w.net.is_conserved());
}

#[test]
fn duplicate_submission_leaves_ledger_unchanged() {
    let mut w = world(3, 3, 2);
    let tag = w.tag(0).clone();
    let before = w.net.ledger.events().len();
    assert_eq!(w.net.ledger.append(tag, &w.net.chains), Err(LedgerError::DuplicateKey));
    assert_eq!(w.net.ledger.len(), 3);
    assert_eq!(w.net.ledger.events().len(), before);
}

#[test]
fn tag_before_destination_leg_executes_is_rejected() {
    let mut w = world(0, 4, 3);
    let plan = w.random_plan();
    let (tpk, apk) = (w.keyset.tpk, w.et.apk);
    let a = aip_run(&w.users[plan.owner_a], w.net.chains.get_mut(&plan.src).unwrap(), &tpk, &apk, plan.amount, &mut w.rng).unwrap();
    let b = aip_run(&w.users[plan.owner_b], w.net.chains.get_mut(&plan.dst).unwrap(), &tpk, &apk, 0, &mut w.rng).unwrap();
    let tx = Transaction {
        sender: a.session.addr_anon,
        recipient: b.session.addr_anon,
        amount: plan.amount,
        nonce: 0,
        kind: TxKind::CrossChain { dst: plan.dst.clone() },
    };
    let txid = w.net.submit_tx(&plan.src, tx).unwrap();
    let msg = loop {
        match w.net.bridge.relay(&w.net.chains[&plan.src], &txid, 1, w.net.now_ms()) {
            Ok(m) => break m,
            Err(BridgeError::NotYetFinal { ready_at_ms }) => w.net.advance_to(ready_at_ms),
            Err(e) => panic!("{e}"),
        }
    };
    let now = w.net.now_ms();
    let txid_dst = w.net.bridge.deliver(&msg, w.net.chains.get_mut(&plan.dst).unwrap(), now).unwrap();
    let transfer = FinalizedTransfer { message: msg, txid_dst };

    // delivery submitted but not yet in a block
    let early = aud_build(&transfer, a.bundle, b.bundle, now);
    assert!(matches!(w.net.ledger.check(&early, &w.net.chains), Err(LedgerError::BadExecAttestation(_))));

    w.net.step();
    let tag = aud_build(&transfer, a.bundle, b.bundle, w.net.now_ms());
    assert_eq!(w.net.ledger.append(tag, &w.net.chains), Ok(early.dedup_key()));
}

#[test]
fn transplanted_bundle_is_rejected() {
    let mut w = world(4, 4, 4);
    let plan = w.random_plan();
    let fresh = w.execute_legs(&plan).unwrap();
    let mut t2 = fresh.build_tag(w.net.now_ms());
    t2.party_a = w.tag(1).party_a;
    assert_eq!(w.net.ledger.check(&t2, &w.net.chains), Err(LedgerError::BadLinkProof(Party::A)));
    let mut t3 = fresh.build_tag(w.net.now_ms());
    t3.party_b = w.tag(2).party_b;
    assert_eq!(w.net.ledger.check(&t3, &w.net.chains), Err(LedgerError::BadLinkProof(Party::B)));
    // both swapped in from one honest tag: still bound to the wrong context
    let mut t4 = fresh.build_tag(w.net.now_ms());
    t4.party_a = w.tag(3).party_a;
    t4.party_b = w.tag(3).party_b;
    assert_eq!(w.net.ledger.check(&t4, &w.net.chains), Err(LedgerError::BadLinkProof(Party::A)));
    let honest = fresh.build_tag(w.net.now_ms());
    assert!(w.net.ledger.append(honest, &w.net.chains).is_ok());
}

#[test]
fn one_byte_link_proof_mutation_is_rejected() {
    let mut w = world(2, 3, 5);
    let plan = w.random_plan();
    let fresh = w.execute_legs(&plan).unwrap();
    let honest = fresh.build_tag(w.net.now_ms());
    let bytes = honest.encode();
    let proof = honest.party_a.pi_link.encode();
    // proof bytes without the version prefix appear verbatim in the tag
    let body = &proof[1..];
    let at = bytes.windows(body.len()).position(|win| win == body).expect("proof embedded");
    let mut rejected = 0;
    let mut tried = 0;
    for off in (0..body.len()).step_by(7) {
        let mut m = bytes.clone();
        m[at + off] ^= 0x01;
        let Ok(tag) = veilaudit_core::protocols::AuditTag::decode(&m) else {
            tried += 1;
            rejected += 1;
            continue;
        };
        tried += 1;
        if tag.party_a.pi_link != honest.party_a.pi_link
            && w.net.ledger.check(&tag, &w.net.chains) == Err(LedgerError::BadLinkProof(Party::A))
        {
            rejected += 1;
        }
    }
    assert_eq!(rejected, tried);
    assert_eq!(w.net.ledger.len(), 2);
}

#[test]
fn escrow_pattern_runs_and_conserves() {
    let mut cfg = ScenarioConfig::with_size(10, 4);
    cfg.workload.pattern = Pattern::EscrowSettlement;
    let w = World::generate(cfg, 6).unwrap();
    assert_eq!(w.net.ledger.len(), 10);
    assert!(w.net.is_conserved());
    for c in w.net.chains.values() {
        assert_eq!(c.escrow().held(), 0);
    }
}

#[test]
fn emitted_records_are_not_stored() {
    let mut w = world(1, 3, 7);
    let now = w.net.now_ms();
    let d = digest32(b"test", &[b"x"]);
    let txid = w.net.submit_audit_record(d, now);
    w.net.step();
    assert_eq!(w.net.audit_inclusion(&txid).unwrap().outcome, AuditOutcome::Emitted(d));
    assert_eq!(w.net.ledger.len(), 1);
}

/// No artifact an outsider can read (ledger export, tag encodings, chain
/// transactions) contains a user's identity element.
#[test]
fn identities_never_appear_in_public_artifacts() {
    let w = world(40, 5, 8);
    let mut public: Vec<u8> = w.net.ledger.export().into_bytes();
    for (_, tag) in w.net.ledger.records() {
        public.extend(tag.encode());
    }
    for c in w.net.chains.values() {
        for b in c.blocks() {
            for txid in &b.txids {
                public.extend(c.tx(txid).unwrap().encode());
            }
        }
    }
    let hex_public = String::from_utf8_lossy(&public).to_string();
    for u in &w.users {
        let pk = u.pk_id.encode();
        assert!(!public.windows(32).any(|win| win == pk));
        assert!(!hex_public.contains(&hex::encode(pk)));
    }
}
