//! Deterministic simulation of the Layer-1 chains, the relayer bridge and
//! the audit chain. Time is a virtual millisecond clock owned by [`Network`].

mod bridge;
mod chain;
mod ledger;

use std::collections::{BTreeMap, HashMap};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

pub use bridge::{count_valid_attestations, message_id, Attestation, Bridge, BridgeConfig, BridgeError, BridgeMessage, ExecMessage};
pub use chain::{
    Block, ChainConfig, ChainError, ChainId, Deposit, EscrowContract, EscrowError, Receipt, SimChain, Transaction,
    TxId, TxKind, TxStatus, GATEWAY,
};
pub use ledger::{
    parse_export, AuditLedger, ChainView, DedupKey, ExportError, LedgerError, LedgerEvent, LedgerParams, Nullifier,
    ParsedExport,
};

use crate::algebra::{Address, GroupElement};
use crate::protocols::AuditTag;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub chains: Vec<ChainConfig>,
    pub audit_chain: ChainConfig,
    pub bridge: BridgeConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            chains: ["ethereum", "avalanche", "polygon", "arbitrum"]
                .into_iter()
                .map(|c| ChainConfig::new(c, 500))
                .collect(),
            audit_chain: ChainConfig::new("audit", 500),
            bridge: BridgeConfig::default(),
        }
    }
}

/// Whether the audit chain persists tags into ledger state or only logs the
/// commitment event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    Emit,
    Store,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditOutcome {
    Emitted([u8; 32]),
    Stored(DedupKey),
    Rejected(LedgerError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditInclusion {
    pub txid: TxId,
    pub submitted_ms: u64,
    pub included_ms: u64,
    pub outcome: AuditOutcome,
}

#[derive(Clone)]
pub struct Network {
    pub chains: BTreeMap<ChainId, SimChain>,
    pub audit: SimChain,
    pub bridge: Bridge,
    pub ledger: AuditLedger,
    pub mode: AuditMode,
    now_ms: u64,
    audit_nonce: u64,
    pending_tags: HashMap<TxId, AuditTag>,
    inclusions: Vec<AuditInclusion>,
}

impl Network {
    pub fn new<R: RngCore + CryptoRng>(
        config: &NetworkConfig,
        tpk: GroupElement,
        apk: GroupElement,
        mode: AuditMode,
        rng: &mut R,
    ) -> Self {
        let bridge = Bridge::new(config.bridge, rng);
        let ledger = AuditLedger::new(LedgerParams {
            tpk,
            apk,
            relayer_pks: bridge.relayer_pks().to_vec(),
            t_relay: config.bridge.t_relay,
            min_depth: config.bridge.depth,
        });
        Network {
            chains: config.chains.iter().map(|c| (c.chain_id.clone(), SimChain::new(c.clone()))).collect(),
            audit: SimChain::new(config.audit_chain.clone()),
            bridge,
            ledger,
            mode,
            now_ms: 0,
            audit_nonce: 0,
            pending_tags: HashMap::new(),
            inclusions: Vec::new(),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn chain(&self, id: &ChainId) -> Result<&SimChain, ChainError> {
        self.chains.get(id).ok_or_else(|| ChainError::UnknownChain(id.clone()))
    }

    pub fn chain_mut(&mut self, id: &ChainId) -> Result<&mut SimChain, ChainError> {
        self.chains.get_mut(id).ok_or_else(|| ChainError::UnknownChain(id.clone()))
    }

    pub fn chain_ids(&self) -> Vec<ChainId> {
        self.chains.keys().cloned().collect()
    }

    pub fn submit_tx(&mut self, chain: &ChainId, tx: Transaction) -> Result<TxId, ChainError> {
        let now = self.now_ms;
        self.chain_mut(chain)?.submit_tx(tx, now)
    }

    /// Queues a tag on the audit chain; it is processed when included.
    pub fn submit_tag(&mut self, tag: AuditTag) -> TxId {
        self.submit_tag_at(tag, self.now_ms)
    }

    pub fn submit_tag_at(&mut self, tag: AuditTag, at_ms: u64) -> TxId {
        let tx = Transaction {
            sender: Address([0; 20]),
            recipient: Address([0; 20]),
            amount: 0,
            nonce: self.audit_nonce,
            kind: TxKind::AuditRecord { digest: tag.hash() },
        };
        self.audit_nonce += 1;
        let txid = self.audit.submit_tx(tx, at_ms.max(self.now_ms)).expect("audit nonces are unique");
        self.pending_tags.insert(txid, tag);
        txid
    }

    /// Submits an opaque event-only record, as used for load generation.
    pub fn submit_audit_record(&mut self, digest: [u8; 32], at_ms: u64) -> TxId {
        let tx = Transaction {
            sender: Address([0; 20]),
            recipient: Address([0; 20]),
            amount: 0,
            nonce: self.audit_nonce,
            kind: TxKind::AuditRecord { digest },
        };
        self.audit_nonce += 1;
        self.audit.submit_tx(tx, at_ms.max(self.now_ms)).expect("audit nonces are unique")
    }

    pub fn next_block_ms(&self) -> u64 {
        self.chains
            .values()
            .map(SimChain::next_block_ms)
            .chain(std::iter::once(self.audit.next_block_ms()))
            .min()
            .expect("audit chain always present")
    }

    /// Advances the clock, producing due blocks on every chain and processing
    /// audit-chain inclusions in order.
    pub fn advance_to(&mut self, t_ms: u64) {
        if t_ms < self.now_ms {
            return;
        }
        for c in self.chains.values_mut() {
            c.produce_until(t_ms);
        }
        let included = self.audit.produce_until(t_ms);
        self.now_ms = t_ms;
        for txid in included {
            let receipt = *self.audit.receipt(&txid).expect("just included");
            let outcome = match self.pending_tags.remove(&txid) {
                Some(tag) => match self.mode {
                    AuditMode::Store => match self.ledger.append(tag, &self.chains) {
                        Ok(k) => AuditOutcome::Stored(k),
                        Err(e) => AuditOutcome::Rejected(e),
                    },
                    AuditMode::Emit => AuditOutcome::Emitted(tag.hash()),
                },
                None => match &self.audit.tx(&txid).expect("known").kind {
                    TxKind::AuditRecord { digest } => AuditOutcome::Emitted(*digest),
                    _ => unreachable!("audit chain carries only audit records"),
                },
            };
            self.inclusions.push(AuditInclusion {
                txid,
                submitted_ms: receipt.submitted_ms,
                included_ms: receipt.included_ms,
                outcome,
            });
        }
    }

    pub fn step(&mut self) {
        let t = self.next_block_ms();
        self.advance_to(t);
    }

    pub fn inclusions(&self) -> &[AuditInclusion] {
        &self.inclusions
    }

    pub fn audit_inclusion(&self, txid: &TxId) -> Option<&AuditInclusion> {
        // inclusions are appended in order; recent ones are the likely hits
        self.inclusions.iter().rev().find(|i| &i.txid == txid)
    }

    pub fn is_conserved(&self) -> bool {
        self.chains.values().all(SimChain::is_conserved)
    }
}

impl ChainView for Network {
    fn chain(&self, id: &ChainId) -> Option<&SimChain> {
        self.chains.get(id)
    }
}
