use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{digest32, Address};
use crate::codec::Writer;
use crate::nizk::{verify_ctrl, ControlProof};

pub type TxId = [u8; 32];

/// Holds value locked by outbound cross-chain transfers.
pub const GATEWAY: Address = Address([0xBB; 20]);

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainId(pub String);

impl ChainId {
    pub fn new(s: impl Into<String>) -> Self {
        ChainId(s.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxKind {
    Transfer,
    CrossChain { dst: ChainId },
    BridgeDelivery { msg_id: [u8; 32] },
    AuditRecord { digest: [u8; 32] },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub sender: Address,
    pub recipient: Address,
    pub amount: u64,
    pub nonce: u64,
    pub kind: TxKind,
}

impl Transaction {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(self.sender.as_bytes())
            .fixed(self.recipient.as_bytes())
            .u64(self.amount)
            .u64(self.nonce);
        match &self.kind {
            TxKind::Transfer => {
                w.u8(0);
            }
            TxKind::CrossChain { dst } => {
                w.u8(1).bytes(dst.as_bytes());
            }
            TxKind::BridgeDelivery { msg_id } => {
                w.u8(2).fixed(msg_id);
            }
            TxKind::AuditRecord { digest } => {
                w.u8(3).fixed(digest);
            }
        }
        w.finish()
    }

    pub fn txid(&self, chain: &ChainId) -> TxId {
        digest32(b"veilaudit/txid", &[chain.as_bytes(), &self.encode()])
    }

    /// Digest of what a cross-chain transfer asks the destination to do.
    pub fn payload_digest(&self) -> [u8; 32] {
        let mut w = Writer::new();
        w.fixed(self.recipient.as_bytes()).u64(self.amount);
        digest32(b"veilaudit/payload", &[&w.finish()])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub chain_id: ChainId,
    pub block_interval_ms: u64,
    #[serde(default = "default_finality")]
    pub finality_depth: u64,
    #[serde(default = "default_capacity")]
    pub block_capacity: usize,
}

fn default_finality() -> u64 {
    1
}

fn default_capacity() -> usize {
    10_000
}

impl ChainConfig {
    pub fn new(chain_id: &str, block_interval_ms: u64) -> Self {
        ChainConfig {
            chain_id: ChainId::new(chain_id),
            block_interval_ms,
            finality_depth: default_finality(),
            block_capacity: default_capacity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub time_ms: u64,
    pub txids: Vec<TxId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxStatus {
    Executed,
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub height: u64,
    pub submitted_ms: u64,
    pub included_ms: u64,
    pub status: TxStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("transaction already known")]
    DuplicateTx,
    #[error("submission time {at_ms} precedes the chain clock {now_ms}")]
    SubmittedInPast { at_ms: u64, now_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EscrowError {
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("unknown deposit {0}")]
    UnknownDeposit(u64),
    #[error("control proof rejected")]
    ProofRejected,
    #[error("deposit {0} already released")]
    AlreadyReleased(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deposit {
    pub amount: u64,
    pub depositor: Address,
    pub nonce_sess: Vec<u8>,
    pub released_to: Option<Address>,
}

/// Neutral escrow: funds leave only to an address whose controller proves
/// control against the nonce recorded at deposit time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EscrowContract {
    pub deposits: BTreeMap<u64, Deposit>,
    next_id: u64,
    held: u64,
    deposited: u64,
    released: u64,
}

impl EscrowContract {
    pub fn held(&self) -> u64 {
        self.held
    }

    /// `Σ deposits = Σ releases + Σ held`.
    pub fn is_conserved(&self) -> bool {
        self.deposited == self.released + self.held
            && self.held
                == self
                    .deposits
                    .values()
                    .filter(|d| d.released_to.is_none())
                    .map(|d| d.amount)
                    .sum::<u64>()
    }
}

#[derive(Clone)]
struct Pending {
    txid: TxId,
    submitted_ms: u64,
}

/// A Layer-1 chain producing one block every `block_interval_ms` of virtual
/// time. Block `h` is sealed at `h · interval` and includes every pending
/// transaction submitted strictly before that instant (up to capacity).
#[derive(Clone)]
pub struct SimChain {
    pub config: ChainConfig,
    height: u64,
    mempool: VecDeque<Pending>,
    blocks: Vec<Block>,
    txs: HashMap<TxId, Transaction>,
    receipts: HashMap<TxId, Receipt>,
    balances: BTreeMap<Address, u64>,
    minted: u64,
    escrow: EscrowContract,
    last_submit_ms: u64,
}

impl SimChain {
    pub fn new(config: ChainConfig) -> Self {
        assert!(config.block_interval_ms > 0, "block interval must be positive");
        SimChain {
            config,
            height: 0,
            mempool: VecDeque::new(),
            blocks: vec![Block { height: 0, time_ms: 0, txids: Vec::new() }],
            txs: HashMap::new(),
            receipts: HashMap::new(),
            balances: BTreeMap::new(),
            minted: 0,
            escrow: EscrowContract::default(),
            last_submit_ms: 0,
        }
    }

    pub fn id(&self) -> &ChainId {
        &self.config.chain_id
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn now_ms(&self) -> u64 {
        self.height * self.config.block_interval_ms
    }

    pub fn next_block_ms(&self) -> u64 {
        (self.height + 1) * self.config.block_interval_ms
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn balance(&self, addr: &Address) -> u64 {
        self.balances.get(addr).copied().unwrap_or(0)
    }

    pub fn minted(&self) -> u64 {
        self.minted
    }

    pub fn escrow(&self) -> &EscrowContract {
        &self.escrow
    }

    pub fn tx(&self, txid: &TxId) -> Option<&Transaction> {
        self.txs.get(txid)
    }

    pub fn receipt(&self, txid: &TxId) -> Option<&Receipt> {
        self.receipts.get(txid)
    }

    /// Confirmations of an executed transaction: 1 in its own block.
    pub fn confirmations(&self, txid: &TxId) -> Option<u64> {
        self.receipts
            .get(txid)
            .filter(|r| r.status == TxStatus::Executed)
            .map(|r| self.height - r.height + 1)
    }

    pub fn is_final(&self, txid: &TxId, depth: u64) -> bool {
        self.confirmations(txid).is_some_and(|c| c >= depth)
    }

    /// Time at which an executed transaction reaches `depth` confirmations.
    pub fn final_at_ms(&self, txid: &TxId, depth: u64) -> Option<u64> {
        self.receipts
            .get(txid)
            .filter(|r| r.status == TxStatus::Executed)
            .map(|r| (r.height + depth.max(1) - 1) * self.config.block_interval_ms)
    }

    /// Genesis-style credit outside the transaction flow.
    pub fn mint(&mut self, to: Address, amount: u64) {
        *self.balances.entry(to).or_default() += amount;
        self.minted += amount;
    }

    pub fn submit_tx(&mut self, tx: Transaction, at_ms: u64) -> Result<TxId, ChainError> {
        if at_ms < self.now_ms() || at_ms < self.last_submit_ms {
            return Err(ChainError::SubmittedInPast { at_ms, now_ms: self.now_ms().max(self.last_submit_ms) });
        }
        let txid = tx.txid(self.id());
        if self.txs.contains_key(&txid) {
            return Err(ChainError::DuplicateTx);
        }
        self.txs.insert(txid, tx);
        self.mempool.push_back(Pending { txid, submitted_ms: at_ms });
        self.last_submit_ms = at_ms;
        Ok(txid)
    }

    /// Produces every block due at or before `now_ms` and returns the txids
    /// executed in them, in inclusion order.
    pub fn produce_until(&mut self, now_ms: u64) -> Vec<TxId> {
        let mut included = Vec::new();
        while self.next_block_ms() <= now_ms {
            included.extend(self.produce_block());
        }
        included
    }

    fn produce_block(&mut self) -> Vec<TxId> {
        let time_ms = self.next_block_ms();
        let height = self.height + 1;
        let mut txids = Vec::new();
        while txids.len() < self.config.block_capacity {
            match self.mempool.front() {
                Some(p) if p.submitted_ms < time_ms => {}
                _ => break,
            }
            let p = self.mempool.pop_front().expect("front checked");
            let status = self.execute(&p.txid);
            self.receipts.insert(p.txid, Receipt { height, submitted_ms: p.submitted_ms, included_ms: time_ms, status });
            txids.push(p.txid);
        }
        self.height = height;
        self.blocks.push(Block { height, time_ms, txids: txids.clone() });
        txids
    }

    fn execute(&mut self, txid: &TxId) -> TxStatus {
        let tx = self.txs[txid].clone();
        match &tx.kind {
            TxKind::Transfer | TxKind::CrossChain { .. } => {
                let to = match tx.kind {
                    TxKind::Transfer => tx.recipient,
                    _ => GATEWAY,
                };
                if self.debit(&tx.sender, tx.amount) {
                    *self.balances.entry(to).or_default() += tx.amount;
                    TxStatus::Executed
                } else {
                    TxStatus::Failed
                }
            }
            TxKind::BridgeDelivery { .. } => {
                self.mint(tx.recipient, tx.amount);
                TxStatus::Executed
            }
            TxKind::AuditRecord { .. } => TxStatus::Executed,
        }
    }

    fn debit(&mut self, from: &Address, amount: u64) -> bool {
        match self.balances.get_mut(from) {
            Some(b) if *b >= amount => {
                *b -= amount;
                true
            }
            _ => amount == 0,
        }
    }

    pub fn escrow_deposit(&mut self, depositor: Address, amount: u64, nonce_sess: &[u8]) -> Result<u64, EscrowError> {
        if !self.debit(&depositor, amount) {
            return Err(EscrowError::InsufficientFunds);
        }
        let id = self.escrow.next_id;
        self.escrow.next_id += 1;
        self.escrow.held += amount;
        self.escrow.deposited += amount;
        self.escrow.deposits.insert(
            id,
            Deposit { amount, depositor, nonce_sess: nonce_sess.to_vec(), released_to: None },
        );
        Ok(id)
    }

    pub fn escrow_release(&mut self, deposit_id: u64, proof: &ControlProof, dest: Address) -> Result<(), EscrowError> {
        let dep = self
            .escrow
            .deposits
            .get_mut(&deposit_id)
            .ok_or(EscrowError::UnknownDeposit(deposit_id))?;
        if dep.released_to.is_some() {
            return Err(EscrowError::AlreadyReleased(deposit_id));
        }
        if !verify_ctrl(&dest, &dep.nonce_sess, proof) {
            return Err(EscrowError::ProofRejected);
        }
        dep.released_to = Some(dest);
        let amount = dep.amount;
        self.escrow.held -= amount;
        self.escrow.released += amount;
        *self.balances.entry(dest).or_default() += amount;
        Ok(())
    }

    /// `minted = Σ balances + Σ escrow held`.
    pub fn is_conserved(&self) -> bool {
        self.escrow.is_conserved() && self.minted == self.balances.values().sum::<u64>() + self.escrow.held
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{derive_address, GroupElement, Scalar};
    use crate::nizk::prove_ctrl;

    fn chain() -> SimChain {
        SimChain::new(ChainConfig::new("l1", 500))
    }

    fn tx(nonce: u64) -> Transaction {
        Transaction {
            sender: Address([1; 20]),
            recipient: Address([2; 20]),
            amount: 0,
            nonce,
            kind: TxKind::Transfer,
        }
    }

    #[test]
    fn cadence_inclusion() {
        let mut c = chain();
        let id = c.submit_tx(tx(0), 0).unwrap();
        assert!(c.produce_until(499).is_empty());
        assert_eq!(c.produce_until(500), vec![id]);
        let r = c.receipt(&id).unwrap();
        assert_eq!((r.height, r.included_ms), (1, 500));
        // submitted exactly at a block boundary waits for the next block
        let id2 = c.submit_tx(tx(1), 1000).unwrap();
        c.produce_until(1000);
        assert!(c.receipt(&id2).is_none());
        c.produce_until(1500);
        assert_eq!(c.receipt(&id2).unwrap().height, 3);
        assert_eq!(c.confirmations(&id), Some(3));
        assert!(c.is_final(&id, 3));
        assert!(!c.is_final(&id, 4));
        assert_eq!(c.final_at_ms(&id, 4), Some(2000));
    }

    #[test]
    fn distinct_nonces_give_distinct_txids() {
        let id = ChainId::new("l1");
        assert_ne!(tx(0).txid(&id), tx(1).txid(&id));
        let mut c = chain();
        c.submit_tx(tx(0), 0).unwrap();
        assert_eq!(c.submit_tx(tx(0), 0), Err(ChainError::DuplicateTx));
    }

    #[test]
    fn escrow_examples() {
        let mut c = chain();
        let owner = Address([9; 20]);
        c.mint(owner, 100);
        let sk = Scalar::from_u64(31337);
        let dest = derive_address(&GroupElement::mul_base(&sk));
        let dep = c.escrow_deposit(owner, 100, b"sess").unwrap();
        assert!(c.is_conserved());
        let proof = prove_ctrl(&sk, &dest, b"sess").unwrap();

        // proof for a different address
        let sk2 = Scalar::from_u64(4242);
        let other = derive_address(&GroupElement::mul_base(&sk2));
        let proof2 = prove_ctrl(&sk2, &other, b"sess").unwrap();
        assert_eq!(c.escrow_release(dep, &proof2, dest), Err(EscrowError::ProofRejected));

        c.escrow_release(dep, &proof, dest).unwrap();
        assert_eq!(c.escrow().held(), 0);
        assert_eq!(c.balance(&dest), 100);
        assert_eq!(c.escrow_release(dep, &proof, dest), Err(EscrowError::AlreadyReleased(dep)));
        assert_eq!(c.escrow_release(99, &proof, dest), Err(EscrowError::UnknownDeposit(99)));
        assert_eq!(c.escrow_deposit(owner, 1, b"x"), Err(EscrowError::InsufficientFunds));
        assert!(c.is_conserved());
    }

    #[test]
    fn failed_transfers_do_not_move_funds() {
        let mut c = chain();
        let mut t = tx(0);
        t.amount = 5;
        let id = c.submit_tx(t, 10).unwrap();
        c.produce_until(500);
        assert_eq!(c.receipt(&id).unwrap().status, TxStatus::Failed);
        assert_eq!(c.confirmations(&id), None);
        assert!(c.is_conserved());
    }
}
