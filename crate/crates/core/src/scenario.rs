//! End-to-end workload driver: a population of users making cross-chain
//! transfers, each audited into the ledger, with the ground truth kept for
//! scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Address;
use crate::chainsim::{
    AuditMode, AuditOutcome, BridgeConfig, BridgeError, ChainConfig, ChainError, ChainId, DedupKey, Network,
    NetworkConfig, Transaction, TxId, TxKind,
};
use crate::linktag::{et_keygen, EtKeypair};
use crate::protocols::{aip_run, aud_build, AuditTag, FinalizedTransfer, MasterIdentity, ProtocolError};
use crate::threshold::{keygen, AuthorityShare, ThresholdError, ThresholdKeyset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    SimpleTransfer,
    EscrowSettlement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitteeConfig {
    pub t: usize,
    pub n: usize,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        CommitteeConfig { t: 2, n: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub pattern: Pattern,
    /// Total tags `B`.
    pub tags: usize,
    /// Latent users `S`.
    pub users: usize,
    pub max_amount: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig { pattern: Pattern::SimpleTransfer, tags: 100, users: 25, max_amount: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub chains: Vec<ChainConfig>,
    pub audit_chain: ChainConfig,
    pub bridge: BridgeConfig,
    pub committee: CommitteeConfig,
    pub workload: WorkloadConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let net = NetworkConfig::default();
        ScenarioConfig {
            chains: net.chains,
            audit_chain: net.audit_chain,
            bridge: net.bridge,
            committee: CommitteeConfig::default(),
            workload: WorkloadConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn with_size(tags: usize, users: usize) -> Self {
        let mut c = Self::default();
        c.workload.tags = tags;
        c.workload.users = users;
        c
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig { chains: self.chains.clone(), audit_chain: self.audit_chain.clone(), bridge: self.bridge }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::BadConfig(m.to_string()));
        if self.chains.len() < 2 {
            return bad("at least two chains are required");
        }
        let mut ids: Vec<&ChainId> = self.chains.iter().map(|c| &c.chain_id).collect();
        ids.push(&self.audit_chain.chain_id);
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("chain ids must be distinct");
        }
        if self.chains.iter().chain([&self.audit_chain]).any(|c| c.block_interval_ms == 0 || c.block_capacity == 0) {
            return bad("block interval and capacity must be positive");
        }
        let b = &self.bridge;
        if b.t_relay == 0 || b.t_relay > b.n_relay || b.n_relay > 255 {
            return bad("bridge needs 1 <= t_relay <= n_relay <= 255");
        }
        if b.depth == 0 || b.depth > 64 {
            return bad("bridge depth must be in [1, 64]");
        }
        let w = &self.workload;
        if w.users < 2 {
            return bad("at least two users are required");
        }
        if w.max_amount == 0 {
            return bad("max_amount must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("bridge: {0}")]
    Bridge(#[from] BridgeError),
    #[error("tag rejected by the ledger: {0:?}")]
    TagRejected(AuditOutcome),
}

impl From<ChainError> for ScenarioError {
    fn from(e: ChainError) -> Self {
        ScenarioError::Protocol(e.into())
    }
}

impl From<ThresholdError> for ScenarioError {
    fn from(e: ThresholdError) -> Self {
        ScenarioError::BadConfig(e.to_string())
    }
}

/// Ground truth and timing for one committed transfer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferRecord {
    pub key: DedupKey,
    pub owner_a: usize,
    pub owner_b: usize,
    pub src: ChainId,
    pub dst: ChainId,
    pub amount: u64,
    pub addr_a: Address,
    pub addr_b: Address,
    pub txid_src: TxId,
    /// Inclusion time of the source-chain transaction.
    pub src_included_ms: u64,
    /// Inclusion time of the tag on the audit chain.
    pub committed_ms: u64,
}

pub const INITIAL_FUNDING: u64 = 1 << 40;

pub struct World {
    pub config: ScenarioConfig,
    pub net: Network,
    pub users: Vec<MasterIdentity>,
    pub keyset: ThresholdKeyset,
    pub shares: Vec<AuthorityShare>,
    pub et: EtKeypair,
    pub transfers: Vec<TransferRecord>,
    pub rng: ChaCha20Rng,
    tx_nonce: u64,
}

impl World {
    /// Sets up keys, chains and funded users without running any transfer.
    pub fn new(config: ScenarioConfig, seed: u64) -> Result<Self, ScenarioError> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (keyset, shares) = keygen(config.committee.t, config.committee.n, &mut rng)?;
        let et = et_keygen(&mut rng);
        let mut net = Network::new(&config.network(), keyset.tpk, et.apk, AuditMode::Store, &mut rng);
        let users: Vec<MasterIdentity> = (0..config.workload.users).map(|_| MasterIdentity::generate(&mut rng)).collect();
        for c in net.chains.values_mut() {
            for u in &users {
                c.mint(u.wallet, INITIAL_FUNDING);
            }
        }
        Ok(World { config, net, users, keyset, shares, et, transfers: Vec::new(), rng, tx_nonce: 0 })
    }

    /// Builds a world and runs `workload.tags` closed-loop transfers with
    /// owners drawn uniformly (multinomial tags-per-user).
    pub fn generate(config: ScenarioConfig, seed: u64) -> Result<Self, ScenarioError> {
        let mut w = World::new(config, seed)?;
        for _ in 0..w.config.workload.tags {
            let plan = w.random_plan();
            w.run_transfer(plan)?;
        }
        Ok(w)
    }

    pub fn random_plan(&mut self) -> TransferPlan {
        let s = self.users.len();
        let a = self.rng.gen_range(0..s);
        let b = (a + self.rng.gen_range(1..s)) % s;
        self.plan_for(a, b)
    }

    pub fn plan_for(&mut self, owner_a: usize, owner_b: usize) -> TransferPlan {
        let ids = self.net.chain_ids();
        let i = self.rng.gen_range(0..ids.len());
        let j = (i + self.rng.gen_range(1..ids.len())) % ids.len();
        TransferPlan {
            owner_a,
            owner_b,
            src: ids[i].clone(),
            dst: ids[j].clone(),
            amount: self.rng.gen_range(1..=self.config.workload.max_amount),
        }
    }

    /// Runs the source leg through relay and delivery and returns the
    /// material for a tag. The tag itself is not built.
    pub fn execute_legs(&mut self, plan: &TransferPlan) -> Result<ExecutedTransfer, ScenarioError> {
        let (tpk, apk) = (self.keyset.tpk, self.et.apk);
        let depth = self.config.bridge.depth;
        let src_chain = self.net.chains.get_mut(&plan.src).ok_or_else(|| ChainError::UnknownChain(plan.src.clone()))?;
        let aip_a = aip_run(&self.users[plan.owner_a], src_chain, &tpk, &apk, plan.amount, &mut self.rng)?;
        let dst_chain = self.net.chains.get_mut(&plan.dst).ok_or_else(|| ChainError::UnknownChain(plan.dst.clone()))?;
        let aip_b = aip_run(&self.users[plan.owner_b], dst_chain, &tpk, &apk, 0, &mut self.rng)?;

        let tx = Transaction {
            sender: aip_a.session.addr_anon,
            recipient: aip_b.session.addr_anon,
            amount: plan.amount,
            nonce: self.tx_nonce,
            kind: TxKind::CrossChain { dst: plan.dst.clone() },
        };
        self.tx_nonce += 1;
        let txid_src = self.net.submit_tx(&plan.src, tx)?;
        let message = loop {
            let now = self.net.now_ms();
            match self.net.bridge.relay(&self.net.chains[&plan.src], &txid_src, depth, now) {
                Ok(m) => break m,
                Err(BridgeError::NotYetFinal { ready_at_ms }) => self.net.advance_to(ready_at_ms.max(now + 1)),
                Err(e) => return Err(e.into()),
            }
        };
        let src_included_ms = self.net.chains[&plan.src].receipt(&txid_src).expect("final").included_ms;
        self.net.advance_to(message.ready_ms);
        let now = self.net.now_ms();
        let dst_chain = self.net.chains.get_mut(&plan.dst).expect("checked above");
        let txid_dst = self.net.bridge.deliver(&message, dst_chain, now)?;
        while self.net.chains[&plan.dst].receipt(&txid_dst).is_none() {
            self.net.step();
        }
        if self.config.workload.pattern == Pattern::EscrowSettlement {
            // recipient parks the delivered value in escrow and settles it
            // back to itself by proving control of the session address
            let dst_chain = self.net.chains.get_mut(&plan.dst).expect("checked above");
            let s = &aip_b.session;
            let dep = dst_chain
                .escrow_deposit(s.addr_anon, plan.amount, &s.nonce_sess)
                .map_err(ProtocolError::from)?;
            dst_chain.escrow_release(dep, &aip_b.ctrl, s.addr_anon).map_err(ProtocolError::from)?;
        }
        Ok(ExecutedTransfer {
            plan: plan.clone(),
            transfer: FinalizedTransfer { message, txid_dst },
            party_a: aip_a.bundle,
            party_b: aip_b.bundle,
            addr_a: aip_a.session.addr_anon,
            addr_b: aip_b.session.addr_anon,
            src_included_ms,
        })
    }

    /// One closed-loop transfer: both legs, then the tag is committed
    /// through the audit chain before returning.
    pub fn run_transfer(&mut self, plan: TransferPlan) -> Result<&TransferRecord, ScenarioError> {
        let done = self.execute_legs(&plan)?;
        let tag = done.build_tag(self.net.now_ms());
        let audit_tx = self.net.submit_tag(tag);
        let inclusion = loop {
            self.net.step();
            if let Some(i) = self.net.audit_inclusion(&audit_tx) {
                break i.clone();
            }
        };
        let key = match inclusion.outcome {
            AuditOutcome::Stored(k) => k,
            other => return Err(ScenarioError::TagRejected(other)),
        };
        self.transfers.push(TransferRecord {
            key,
            owner_a: plan.owner_a,
            owner_b: plan.owner_b,
            src: plan.src,
            dst: plan.dst,
            amount: plan.amount,
            addr_a: done.addr_a,
            addr_b: done.addr_b,
            txid_src: done.transfer.message.exec.txid_src,
            src_included_ms: done.src_included_ms,
            committed_ms: inclusion.included_ms,
        });
        Ok(self.transfers.last().expect("just pushed"))
    }

    pub fn tag(&self, i: usize) -> &AuditTag {
        &self.net.ledger.records()[i].1
    }

    /// Initiating user of every ledger record, in ledger order.
    pub fn owners_a(&self) -> Vec<usize> {
        self.transfers.iter().map(|t| t.owner_a).collect()
    }

    pub fn owners_b(&self) -> Vec<usize> {
        self.transfers.iter().map(|t| t.owner_b).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferPlan {
    pub owner_a: usize,
    pub owner_b: usize,
    pub src: ChainId,
    pub dst: ChainId,
    pub amount: u64,
}

#[derive(Clone, Debug)]
pub struct ExecutedTransfer {
    pub plan: TransferPlan,
    pub transfer: FinalizedTransfer,
    pub party_a: crate::protocols::PartyBundle,
    pub party_b: crate::protocols::PartyBundle,
    pub addr_a: Address,
    pub addr_b: Address,
    pub src_included_ms: u64,
}

impl ExecutedTransfer {
    pub fn build_tag(&self, ts: u64) -> AuditTag {
        aud_build(&self.transfer, self.party_a, self.party_b, ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_world_commits_one_tag_per_transfer() {
        let w = World::generate(ScenarioConfig::with_size(20, 5), 1).unwrap();
        assert_eq!(w.net.ledger.len(), 20);
        assert_eq!(w.transfers.len(), 20);
        for (t, (k, _)) in w.transfers.iter().zip(w.net.ledger.records()) {
            assert_eq!(&t.key, k);
            // depth 1: source block, destination block, audit block
            assert_eq!(t.committed_ms - t.src_included_ms, 1000);
        }
        assert!(w.net.is_conserved());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = World::generate(ScenarioConfig::with_size(8, 4), 9).unwrap();
        let b = World::generate(ScenarioConfig::with_size(8, 4), 9).unwrap();
        let c = World::generate(ScenarioConfig::with_size(8, 4), 10).unwrap();
        assert_eq!(a.net.ledger.export(), b.net.ledger.export());
        assert_ne!(a.net.ledger.export(), c.net.ledger.export());
    }

    #[test]
    fn escrow_settlement_pattern() {
        let mut cfg = ScenarioConfig::with_size(6, 3);
        cfg.workload.pattern = Pattern::EscrowSettlement;
        let w = World::generate(cfg, 2).unwrap();
        assert_eq!(w.net.ledger.len(), 6);
        assert!(w.net.is_conserved());
        for c in w.net.chains.values() {
            assert_eq!(c.escrow().held(), 0);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ScenarioConfig::default();
        c.bridge.depth = 0;
        assert!(matches!(World::new(c, 0), Err(ScenarioError::BadConfig(_))));
        let mut c = ScenarioConfig::default();
        c.chains.truncate(1);
        assert!(matches!(World::new(c, 0), Err(ScenarioError::BadConfig(_))));
    }
}
