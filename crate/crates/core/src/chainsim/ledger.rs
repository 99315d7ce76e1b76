use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::algebra::{digest32, GroupElement};
use crate::codec::{CodecError, Reader, Writer};
use crate::nizk::verify_link;
use crate::protocols::{bundle_context, AuditTag, Party, RevealRecord};

use super::bridge::{count_valid_attestations, ExecMessage};
use super::chain::{ChainId, SimChain, TxKind, TxId, TxStatus};

pub type DedupKey = [u8; 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Nullifier(pub [u8; 32]);

impl Nullifier {
    pub fn derive(txid: &TxId, nonce: u64, src: &ChainId, dst: &ChainId) -> Self {
        let mut w = Writer::new();
        w.fixed(txid).u64(nonce).bytes(src.as_bytes()).bytes(dst.as_bytes());
        Nullifier(digest32(b"veilaudit/nullifier", &[&w.finish()]))
    }
}

/// Read access to the Layer-1 chains a ledger verifies against.
pub trait ChainView {
    fn chain(&self, id: &ChainId) -> Option<&SimChain>;
}

impl ChainView for BTreeMap<ChainId, SimChain> {
    fn chain(&self, id: &ChainId) -> Option<&SimChain> {
        self.get(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("dedup key already present")]
    DuplicateKey,
    #[error("nullifier already used")]
    DuplicateNullifier,
    #[error("execution attestation rejected: {0}")]
    BadExecAttestation(&'static str),
    #[error("link proof for party {0:?} rejected")]
    BadLinkProof(Party),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerParams {
    pub tpk: GroupElement,
    pub apk: GroupElement,
    pub relayer_pks: Vec<GroupElement>,
    pub t_relay: usize,
    /// Smallest confirmation depth the ledger accepts for a source leg.
    pub min_depth: u64,
}

impl LedgerParams {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.element(&self.tpk).element(&self.apk).u32(self.relayer_pks.len() as u32);
        for pk in &self.relayer_pks {
            w.element(pk);
        }
        w.u32(self.t_relay as u32).u64(self.min_depth);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::versioned(bytes)?;
        let tpk = r.element()?;
        let apk = r.element()?;
        let n = r.u32()? as usize;
        let relayer_pks = (0..n).map(|_| r.element()).collect::<Result<_, _>>()?;
        let t_relay = r.u32()? as usize;
        let min_depth = r.u64()?;
        r.finish()?;
        Ok(LedgerParams { tpk, apk, relayer_pks, t_relay, min_depth })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LedgerEvent {
    TagCommitted { key: DedupKey, tag_hash: [u8; 32] },
    IdentityRevealed(RevealRecord),
}

/// Append-only store of audit tags keyed by dedup key, with an insert-only
/// nullifier set. Every rejection leaves the ledger unchanged.
#[derive(Clone, Debug)]
pub struct AuditLedger {
    params: LedgerParams,
    records: Vec<(DedupKey, AuditTag)>,
    index: HashMap<DedupKey, usize>,
    nullifiers: HashSet<Nullifier>,
    events: Vec<LedgerEvent>,
}

impl AuditLedger {
    pub fn new(params: LedgerParams) -> Self {
        AuditLedger { params, records: Vec::new(), index: HashMap::new(), nullifiers: HashSet::new(), events: Vec::new() }
    }

    pub fn params(&self) -> &LedgerParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &DedupKey) -> Option<&AuditTag> {
        self.index.get(key).map(|&i| &self.records[i].1)
    }

    pub fn records(&self) -> &[(DedupKey, AuditTag)] {
        &self.records
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn nullifier_used(&self, n: &Nullifier) -> bool {
        self.nullifiers.contains(n)
    }

    /// Runs every acceptance check without modifying the ledger.
    pub fn check<V: ChainView>(&self, tag: &AuditTag, view: &V) -> Result<DedupKey, LedgerError> {
        let key = tag.dedup_key();
        if self.index.contains_key(&key) {
            return Err(LedgerError::DuplicateKey);
        }
        let (sender, recipient) = self.check_exec(tag, view)?;
        if self.nullifiers.contains(&tag.exec.nullifier) {
            return Err(LedgerError::DuplicateNullifier);
        }
        let c = &tag.core;
        for (party, chain, addr) in [(Party::A, &c.cid_src, sender), (Party::B, &c.cid_dst, recipient)] {
            let ctx = bundle_context(chain, &addr);
            let bundle = tag.bundle(party);
            if !verify_link(&bundle.statement(&self.params.tpk, &self.params.apk, &ctx), &bundle.pi_link) {
                return Err(LedgerError::BadLinkProof(party));
            }
        }
        Ok(key)
    }

    /// Verifies the relayer attestation and both legs against chain state;
    /// returns the source sender and destination recipient addresses.
    fn check_exec<V: ChainView>(
        &self,
        tag: &AuditTag,
        view: &V,
    ) -> Result<(crate::algebra::Address, crate::algebra::Address), LedgerError> {
        use LedgerError::BadExecAttestation as Bad;
        let c = &tag.core;
        let src = view.chain(&c.cid_src).ok_or(Bad("unknown source chain"))?;
        let dst = view.chain(&c.cid_dst).ok_or(Bad("unknown destination chain"))?;
        let depth = tag.exec.required_depth;
        if depth < self.params.min_depth.max(1) {
            return Err(Bad("depth below policy"));
        }
        if !src.is_final(&c.txid_src, depth) {
            return Err(Bad("source leg not final"));
        }
        let msg = ExecMessage::from_chain(src, &c.txid_src, &c.cid_dst, c.msg_id, depth)
            .ok_or(Bad("source transaction is not a transfer to the destination"))?;
        if count_valid_attestations(&self.params.relayer_pks, &msg, &tag.exec.attestations) < self.params.t_relay {
            return Err(Bad("insufficient relayer attestations"));
        }
        if Nullifier::derive(&c.txid_src, msg.src_nonce, &c.cid_src, &c.cid_dst) != tag.exec.nullifier {
            return Err(Bad("nullifier mismatch"));
        }
        let dtx = dst.tx(&c.txid_dst).ok_or(Bad("unknown destination transaction"))?;
        match dst.receipt(&c.txid_dst) {
            Some(r) if r.status == TxStatus::Executed => {}
            _ => return Err(Bad("destination leg not executed")),
        }
        match &dtx.kind {
            TxKind::BridgeDelivery { msg_id } if *msg_id == c.msg_id => {}
            _ => return Err(Bad("destination transaction does not deliver this message")),
        }
        let stx = src.tx(&c.txid_src).expect("checked by from_chain");
        if msg.payload_digest != dtx.payload_digest() {
            return Err(Bad("delivered payload differs"));
        }
        Ok((stx.sender, dtx.recipient))
    }

    pub fn append<V: ChainView>(&mut self, tag: AuditTag, view: &V) -> Result<DedupKey, LedgerError> {
        let key = self.check(&tag, view)?;
        self.nullifiers.insert(tag.exec.nullifier);
        self.index.insert(key, self.records.len());
        self.events.push(LedgerEvent::TagCommitted { key, tag_hash: tag.hash() });
        self.records.push((key, tag));
        Ok(key)
    }

    pub fn record_reveal(&mut self, record: RevealRecord) {
        self.events.push(LedgerEvent::IdentityRevealed(record));
    }

    pub fn reveal_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, LedgerEvent::IdentityRevealed(_))).count()
    }

    /// Line-delimited export: a `params` line, then one line per event in
    /// commit order.
    pub fn export(&self) -> String {
        let mut out = format!("params:{}\n", hex::encode(self.params.encode()));
        for e in &self.events {
            match e {
                LedgerEvent::TagCommitted { key, .. } => {
                    out.push_str("tag:");
                    out.push_str(&hex::encode(self.get(key).expect("committed").encode()));
                }
                LedgerEvent::IdentityRevealed(r) => {
                    out.push_str("reveal:");
                    out.push_str(&hex::encode(r.encode()));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedExport {
    pub params: LedgerParams,
    pub tags: Vec<AuditTag>,
    pub reveals: Vec<RevealRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExportError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate dedup key")]
    DuplicateKey { line: usize },
    #[error("line {line}: duplicate nullifier")]
    DuplicateNullifier { line: usize },
    #[error("line {line}: reveal references unknown tag")]
    UnknownTag { line: usize },
}

/// Strictly parses an export and checks the invariants that do not need
/// chain state: canonical encodings, unique keys and nullifiers, and reveals
/// that only reference earlier tags.
pub fn parse_export(text: &str) -> Result<ParsedExport, ExportError> {
    let bad = |line: usize, reason: String| ExportError::Malformed { line, reason };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty export".into()))?;
    let hex_of = |line: usize, s: &str| hex::decode(s).map_err(|e| bad(line, e.to_string()));
    let params_hex = first.strip_prefix("params:").ok_or_else(|| bad(1, "missing params line".into()))?;
    let params = LedgerParams::decode(&hex_of(1, params_hex)?).map_err(|e: CodecError| bad(1, e.to_string()))?;
    let mut out = ParsedExport { params, tags: Vec::new(), reveals: Vec::new() };
    let mut keys = HashSet::new();
    let mut nulls = HashSet::new();
    for (n, line) in lines {
        if let Some(h) = line.strip_prefix("tag:") {
            let bytes = hex_of(n, h)?;
            let tag = AuditTag::decode(&bytes).map_err(|e| bad(n, e.to_string()))?;
            if tag.encode() != bytes {
                return Err(bad(n, "non-canonical tag encoding".into()));
            }
            if !keys.insert(tag.dedup_key()) {
                return Err(ExportError::DuplicateKey { line: n });
            }
            if !nulls.insert(tag.exec.nullifier) {
                return Err(ExportError::DuplicateNullifier { line: n });
            }
            out.tags.push(tag);
        } else if let Some(h) = line.strip_prefix("reveal:") {
            let r = RevealRecord::decode(&hex_of(n, h)?).map_err(|e| bad(n, e.to_string()))?;
            if r.tag_keys.iter().any(|k| !keys.contains(k)) {
                return Err(ExportError::UnknownTag { line: n });
            }
            out.reveals.push(r);
        } else {
            return Err(bad(n, "unknown record type".into()));
        }
    }
    Ok(out)
}
