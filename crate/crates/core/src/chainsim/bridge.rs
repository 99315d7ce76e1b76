use std::collections::HashSet;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{digest32, domains, schnorr_sign, schnorr_verify, Address, GroupElement, Scalar, SchnorrSignature};
use crate::codec::Writer;

use super::chain::{ChainId, SimChain, Transaction, TxId, TxKind, GATEWAY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub t_relay: usize,
    pub n_relay: usize,
    pub relay_delay_ms: u64,
    pub depth: u64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig { t_relay: 3, n_relay: 4, relay_delay_ms: 0, depth: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("source transaction is not an executed cross-chain transfer")]
    UnknownTx,
    #[error("source transaction not final before {ready_at_ms} ms")]
    NotYetFinal { ready_at_ms: u64 },
    #[error("{got} valid attestations, {need} required")]
    InsufficientAttestations { got: usize, need: usize },
    #[error("message already delivered")]
    DuplicateMessage,
    #[error("message routed to {0}, not this chain")]
    WrongDestination(ChainId),
}

/// Everything the relayers sign, each field read back from the source chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecMessage {
    pub cid_src: ChainId,
    pub txid_src: TxId,
    pub src_nonce: u64,
    pub src_height: u64,
    pub required_depth: u64,
    pub cid_dst: ChainId,
    pub msg_id: [u8; 32],
    pub payload_digest: [u8; 32],
}

impl ExecMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.bytes(self.cid_src.as_bytes())
            .fixed(&self.txid_src)
            .u64(self.src_nonce)
            .u64(self.src_height)
            .u64(self.required_depth)
            .bytes(self.cid_dst.as_bytes())
            .fixed(&self.msg_id)
            .fixed(&self.payload_digest);
        w.finish()
    }

    /// Reconstructs the signed message for `txid` from chain state. `None` if
    /// the transaction is not an executed cross-chain transfer to `cid_dst`.
    pub fn from_chain(
        src: &SimChain,
        txid: &TxId,
        cid_dst: &ChainId,
        msg_id: [u8; 32],
        required_depth: u64,
    ) -> Option<ExecMessage> {
        let tx = src.tx(txid)?;
        let receipt = src.receipt(txid)?;
        src.confirmations(txid)?;
        match &tx.kind {
            TxKind::CrossChain { dst } if dst == cid_dst => {}
            _ => return None,
        }
        Some(ExecMessage {
            cid_src: src.id().clone(),
            txid_src: *txid,
            src_nonce: tx.nonce,
            src_height: receipt.height,
            required_depth,
            cid_dst: cid_dst.clone(),
            msg_id,
            payload_digest: tx.payload_digest(),
        })
    }
}

pub type Attestation = (u8, SchnorrSignature);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BridgeMessage {
    pub exec: ExecMessage,
    pub recipient: Address,
    pub amount: u64,
    pub attestations: Vec<Attestation>,
    /// Earliest virtual time at which the destination will accept delivery.
    pub ready_ms: u64,
}

impl BridgeMessage {
    pub fn msg_id(&self) -> [u8; 32] {
        self.exec.msg_id
    }
}

/// Counts distinct relayer indices whose signature over `msg` verifies.
pub fn count_valid_attestations(relayers: &[GroupElement], msg: &ExecMessage, atts: &[Attestation]) -> usize {
    let bytes = msg.encode();
    let mut seen = HashSet::new();
    atts.iter()
        .filter(|(i, sig)| {
            let i = *i as usize;
            i < relayers.len() && !seen.contains(&i) && schnorr_verify(&relayers[i], domains::EXEC, &bytes, sig) && seen.insert(i)
        })
        .count()
}

pub fn message_id(src: &ChainId, seq: u64) -> [u8; 32] {
    digest32(b"veilaudit/msgid", &[src.as_bytes(), &seq.to_be_bytes()])
}

/// Relayer network with a per-source monotone message counter and
/// destination-side deduplication.
#[derive(Clone)]
pub struct Bridge {
    pub config: BridgeConfig,
    relayer_keys: Vec<Scalar>,
    relayer_pks: Vec<GroupElement>,
    online: Vec<bool>,
    seq: std::collections::BTreeMap<ChainId, u64>,
    delivered_ids: HashSet<(ChainId, [u8; 32])>,
    delivered_src: HashSet<(ChainId, TxId)>,
}

impl Bridge {
    pub fn new<R: RngCore + CryptoRng>(config: BridgeConfig, rng: &mut R) -> Self {
        assert!(
            config.t_relay >= 1 && config.t_relay <= config.n_relay && config.n_relay <= u8::MAX as usize,
            "relayer threshold out of range"
        );
        let relayer_keys: Vec<Scalar> = (0..config.n_relay).map(|_| Scalar::random_nonzero(rng)).collect();
        let relayer_pks = relayer_keys.iter().map(GroupElement::mul_base).collect();
        Bridge {
            config,
            relayer_keys,
            relayer_pks,
            online: vec![true; config.n_relay],
            seq: Default::default(),
            delivered_ids: HashSet::new(),
            delivered_src: HashSet::new(),
        }
    }

    pub fn relayer_pks(&self) -> &[GroupElement] {
        &self.relayer_pks
    }

    pub fn set_online(&mut self, index: usize, online: bool) {
        self.online[index] = online;
    }

    /// Observes a finalized cross-chain transfer on `src` and collects
    /// attestations from the online relayers.
    pub fn relay(&mut self, src: &SimChain, txid: &TxId, depth: u64, now_ms: u64) -> Result<BridgeMessage, BridgeError> {
        let tx: &Transaction = src.tx(txid).ok_or(BridgeError::UnknownTx)?;
        let dst = match &tx.kind {
            TxKind::CrossChain { dst } => dst.clone(),
            _ => return Err(BridgeError::UnknownTx),
        };
        let ready_at_ms = match src.receipt(txid) {
            None => src.next_block_ms() + (depth.max(1) - 1) * src.config.block_interval_ms,
            Some(_) => src.final_at_ms(txid, depth).ok_or(BridgeError::UnknownTx)?,
        };
        if !src.is_final(txid, depth) {
            return Err(BridgeError::NotYetFinal { ready_at_ms });
        }
        let counter = self.seq.entry(src.id().clone()).or_default();
        let msg_id = message_id(src.id(), *counter);
        let exec = ExecMessage::from_chain(src, txid, &dst, msg_id, depth).ok_or(BridgeError::UnknownTx)?;
        let bytes = exec.encode();
        let attestations: Vec<Attestation> = self
            .relayer_keys
            .iter()
            .enumerate()
            .filter(|(i, _)| self.online[*i])
            .map(|(i, sk)| (i as u8, schnorr_sign(sk, domains::EXEC, &bytes).expect("relayer keys are nonzero")))
            .collect();
        if attestations.len() < self.config.t_relay {
            return Err(BridgeError::InsufficientAttestations { got: attestations.len(), need: self.config.t_relay });
        }
        *counter += 1;
        Ok(BridgeMessage {
            exec,
            recipient: tx.recipient,
            amount: tx.amount,
            attestations,
            ready_ms: now_ms.max(ready_at_ms) + self.config.relay_delay_ms,
        })
    }

    /// Submits the minting transaction on the destination chain.
    pub fn deliver(&mut self, msg: &BridgeMessage, dst: &mut SimChain, now_ms: u64) -> Result<TxId, BridgeError> {
        if &msg.exec.cid_dst != dst.id() {
            return Err(BridgeError::WrongDestination(msg.exec.cid_dst.clone()));
        }
        if now_ms < msg.ready_ms {
            return Err(BridgeError::NotYetFinal { ready_at_ms: msg.ready_ms });
        }
        let got = count_valid_attestations(&self.relayer_pks, &msg.exec, &msg.attestations);
        if got < self.config.t_relay {
            return Err(BridgeError::InsufficientAttestations { got, need: self.config.t_relay });
        }
        let id_key = (dst.id().clone(), msg.exec.msg_id);
        let src_key = (msg.exec.cid_src.clone(), msg.exec.txid_src);
        if self.delivered_ids.contains(&id_key) || self.delivered_src.contains(&src_key) {
            return Err(BridgeError::DuplicateMessage);
        }
        let tx = Transaction {
            sender: GATEWAY,
            recipient: msg.recipient,
            amount: msg.amount,
            nonce: u64::from_be_bytes(msg.exec.msg_id[..8].try_into().expect("8 bytes")),
            kind: TxKind::BridgeDelivery { msg_id: msg.exec.msg_id },
        };
        let txid = dst.submit_tx(tx, now_ms).map_err(|_| BridgeError::DuplicateMessage)?;
        self.delivered_ids.insert(id_key);
        self.delivered_src.insert(src_key);
        Ok(txid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainsim::chain::ChainConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        src: SimChain,
        dst: SimChain,
        bridge: Bridge,
    }

    fn fixture(depth: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let cfg = BridgeConfig { depth, relay_delay_ms: 250, ..Default::default() };
        let mut src = SimChain::new(ChainConfig::new("src", 500));
        src.mint(Address([1; 20]), 1000);
        Fixture { src, dst: SimChain::new(ChainConfig::new("dst", 500)), bridge: Bridge::new(cfg, &mut rng) }
    }

    fn outbound(f: &mut Fixture, nonce: u64) -> TxId {
        let tx = Transaction {
            sender: Address([1; 20]),
            recipient: Address([2; 20]),
            amount: 10,
            nonce,
            kind: TxKind::CrossChain { dst: ChainId::new("dst") },
        };
        f.src.submit_tx(tx, f.src.now_ms()).unwrap()
    }

    /// Drives one transfer to destination inclusion and returns that time.
    fn delivery_time(depth: u64) -> u64 {
        let mut f = fixture(depth);
        let txid = outbound(&mut f, 0);
        let mut now = 0;
        let msg = loop {
            now += 50;
            f.src.produce_until(now);
            f.dst.produce_until(now);
            match f.bridge.relay(&f.src, &txid, depth, now) {
                Ok(m) => break m,
                Err(BridgeError::NotYetFinal { .. }) => continue,
                Err(e) => panic!("{e}"),
            }
        };
        while now < msg.ready_ms {
            now += 50;
            f.dst.produce_until(now);
        }
        let dtx = f.bridge.deliver(&msg, &mut f.dst, now).unwrap();
        loop {
            now += 50;
            f.dst.produce_until(now);
            if let Some(r) = f.dst.receipt(&dtx) {
                assert!(f.src.is_conserved() && f.dst.is_conserved());
                return r.included_ms;
            }
        }
    }

    #[test]
    fn depth_changes_delivery_by_seven_blocks() {
        let d1 = delivery_time(1);
        let d8 = delivery_time(8);
        assert_eq!(d8 - d1, 7 * 500);
        // included at 500, relayed then, ready at 750, minted in the 1000 block
        assert_eq!(d1, 1000);
    }

    #[test]
    fn not_final_is_retriable() {
        let mut f = fixture(4);
        let txid = outbound(&mut f, 0);
        f.src.produce_until(500);
        assert_eq!(f.bridge.relay(&f.src, &txid, 4, 500), Err(BridgeError::NotYetFinal { ready_at_ms: 2000 }));
        f.src.produce_until(2000);
        assert!(f.bridge.relay(&f.src, &txid, 4, 2000).is_ok());
    }

    #[test]
    fn redelivery_rejected() {
        let mut f = fixture(1);
        let txid = outbound(&mut f, 0);
        f.src.produce_until(500);
        let msg = f.bridge.relay(&f.src, &txid, 1, 500).unwrap();
        f.bridge.deliver(&msg, &mut f.dst, 750).unwrap();
        assert_eq!(f.bridge.deliver(&msg, &mut f.dst, 800), Err(BridgeError::DuplicateMessage));
        // a second relay of the same source transaction gets a new msg_id but
        // is still caught by source-side deduplication
        let again = f.bridge.relay(&f.src, &txid, 1, 800).unwrap();
        assert_ne!(again.msg_id(), msg.msg_id());
        assert_eq!(f.bridge.deliver(&again, &mut f.dst, 1100), Err(BridgeError::DuplicateMessage));
    }

    #[test]
    fn attestation_threshold() {
        let mut f = fixture(1);
        let txid = outbound(&mut f, 0);
        f.src.produce_until(500);
        f.bridge.set_online(0, false);
        f.bridge.set_online(1, false);
        assert_eq!(
            f.bridge.relay(&f.src, &txid, 1, 500),
            Err(BridgeError::InsufficientAttestations { got: 2, need: 3 })
        );
        f.bridge.set_online(1, true);
        let mut msg = f.bridge.relay(&f.src, &txid, 1, 500).unwrap();
        assert_eq!(msg.attestations.len(), 3);
        // duplicated indices count once
        msg.attestations[2] = msg.attestations[1];
        assert_eq!(
            f.bridge.deliver(&msg, &mut f.dst, 750),
            Err(BridgeError::InsufficientAttestations { got: 2, need: 3 })
        );
        // signature over a different message does not count
        let mut msg = f.bridge.relay(&f.src, &txid, 1, 500).unwrap();
        msg.exec.required_depth = 0;
        assert_eq!(
            count_valid_attestations(f.bridge.relayer_pks(), &msg.exec, &msg.attestations),
            0
        );
    }
}
