//! Identity issuance, tag assembly and threshold reveal.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::algebra::{derive_address, digest32, kdf_derive, Address, GroupElement, Scalar};
use crate::chainsim::{
    AuditLedger, BridgeMessage, ChainError, ChainId, ChainView, DedupKey, EscrowError, LedgerError, Nullifier,
    SimChain, TxId,
};
use crate::codec::{CodecError, Reader, Writer};
use crate::linktag::{encrypt_link, LinkCiphertext};
use crate::nizk::{commit, prove_ctrl, prove_link, ControlProof, LinkProof, LinkStatement, LinkWitness, NizkError, PedersenCommitment};
use crate::threshold::{combine, encrypt_uid, partial_decrypt, AuthorityShare, ThresholdError, ThresholdKeyset, UidCiphertext};
use crate::algebra::SchnorrSignature;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("escrow: {0}")]
    Escrow(#[from] EscrowError),
    #[error("proof: {0}")]
    Nizk(#[from] NizkError),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("threshold: {0}")]
    Threshold(#[from] ThresholdError),
    #[error("chain: {0}")]
    Chain(#[from] ChainError),
    #[error("tag {} not in ledger", hex::encode(.0))]
    UnknownTag(DedupKey),
}

pub const IDENTITY_SALT: &[u8] = b"id";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    A,
    B,
}

/// Long-term user key material. `x` derives from the master secret and
/// `pk_id = x·G` is the value a threshold reveal discloses.
#[derive(Clone, Debug)]
pub struct MasterIdentity {
    sk_master: Scalar,
    x: Scalar,
    pub pk_id: GroupElement,
    /// Funded operational address, `derive_address(sk_master·G)`.
    pub wallet: Address,
}

impl MasterIdentity {
    pub fn new(sk_master: Scalar) -> Self {
        let x = kdf_derive(&sk_master, IDENTITY_SALT).expect("nonempty salt");
        MasterIdentity {
            pk_id: GroupElement::mul_base(&x),
            wallet: derive_address(&GroupElement::mul_base(&sk_master)),
            sk_master,
            x,
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::new(Scalar::random_nonzero(rng))
    }

    pub fn identity_scalar(&self) -> &Scalar {
        &self.x
    }

    pub fn sk_master(&self) -> &Scalar {
        &self.sk_master
    }
}

#[derive(Clone, Debug)]
pub struct AnonSession {
    pub salt_addr: [u8; 32],
    pub sk_anon: Scalar,
    pub pk_anon: GroupElement,
    pub addr_anon: Address,
    pub nonce_sess: [u8; 16],
}

impl AnonSession {
    pub fn derive<R: RngCore + CryptoRng>(user: &MasterIdentity, rng: &mut R) -> Self {
        let mut salt_addr = [0u8; 32];
        rng.fill_bytes(&mut salt_addr);
        let mut nonce_sess = [0u8; 16];
        rng.fill_bytes(&mut nonce_sess);
        let sk_anon = kdf_derive(&user.sk_master, &salt_addr).expect("nonempty salt");
        let pk_anon = GroupElement::mul_base(&sk_anon);
        AnonSession { salt_addr, sk_anon, pk_anon, addr_anon: derive_address(&pk_anon), nonce_sess }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartyBundle {
    pub uid: UidCiphertext,
    pub com: PedersenCommitment,
    pub ct_link: LinkCiphertext,
    pub pi_link: LinkProof,
}

impl PartyBundle {
    pub fn statement<'a>(&self, tpk: &GroupElement, apk: &GroupElement, context: &'a [u8]) -> LinkStatement<'a> {
        LinkStatement { com: self.com, uid: self.uid, ct_link: self.ct_link, tpk: *tpk, apk: *apk, context }
    }

    pub fn write(&self, w: &mut Writer) {
        self.uid.write(w);
        w.element(&self.com.0);
        self.ct_link.write(w);
        self.pi_link.write(w);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(PartyBundle {
            uid: UidCiphertext::read(r)?,
            com: PedersenCommitment(r.element()?),
            ct_link: LinkCiphertext::read(r)?,
            pi_link: LinkProof::read(r)?,
        })
    }
}

/// Proof context for a bundle: the chain and anonymous address it speaks for.
pub fn bundle_context(chain: &ChainId, addr: &Address) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(chain.as_bytes()).fixed(addr.as_bytes());
    w.finish()
}

/// Builds a fresh bundle. Every call draws new `r`, `k`, `s`.
pub fn make_bundle<R: RngCore + CryptoRng>(
    user: &MasterIdentity,
    tpk: &GroupElement,
    apk: &GroupElement,
    context: &[u8],
    rng: &mut R,
) -> Result<PartyBundle, ProtocolError> {
    let witness = LinkWitness {
        x: user.x,
        r: Scalar::random(rng),
        k: Scalar::random_nonzero(rng),
        s: Scalar::random_nonzero(rng),
    };
    let uid = encrypt_uid(tpk, &user.pk_id, &witness.k);
    let com = commit(&witness.x, &witness.r);
    let ct_link = encrypt_link(apk, &witness.x, &witness.s).expect("s is nonzero");
    let st = LinkStatement { com, uid, ct_link, tpk: *tpk, apk: *apk, context };
    let pi_link = prove_link(&witness, &st, rng)?;
    Ok(PartyBundle { uid, com, ct_link, pi_link })
}

#[derive(Clone, Debug)]
pub struct AipOutput {
    pub session: AnonSession,
    pub ctrl: ControlProof,
    pub bundle: PartyBundle,
    pub deposit_id: u64,
}

/// Anonymous identity issuance on one chain: derive a session, move `amount`
/// from the user's wallet through escrow to the anonymous address, and
/// prepare the party bundle bound to that address.
pub fn aip_run<R: RngCore + CryptoRng>(
    user: &MasterIdentity,
    chain: &mut SimChain,
    tpk: &GroupElement,
    apk: &GroupElement,
    amount: u64,
    rng: &mut R,
) -> Result<AipOutput, ProtocolError> {
    let session = AnonSession::derive(user, rng);
    let ctrl = prove_ctrl(&session.sk_anon, &session.addr_anon, &session.nonce_sess)?;
    let deposit_id = chain.escrow_deposit(user.wallet, amount, &session.nonce_sess)?;
    chain.escrow_release(deposit_id, &ctrl, session.addr_anon)?;
    let context = bundle_context(chain.id(), &session.addr_anon);
    let bundle = make_bundle(user, tpk, apk, &context, rng)?;
    Ok(AipOutput { session, ctrl, bundle, deposit_id })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagCore {
    pub cid_src: ChainId,
    pub txid_src: TxId,
    pub cid_dst: ChainId,
    pub txid_dst: TxId,
    pub msg_id: [u8; 32],
    pub ts: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecAttestation {
    pub required_depth: u64,
    pub attestations: Vec<(u8, SchnorrSignature)>,
    pub nullifier: Nullifier,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditTag {
    pub core: TagCore,
    pub exec: ExecAttestation,
    pub party_a: PartyBundle,
    pub party_b: PartyBundle,
}

impl AuditTag {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        let c = &self.core;
        w.bytes(c.cid_src.as_bytes())
            .fixed(&c.txid_src)
            .bytes(c.cid_dst.as_bytes())
            .fixed(&c.txid_dst)
            .fixed(&c.msg_id)
            .u64(c.ts)
            .u64(self.exec.required_depth)
            .u32(self.exec.attestations.len() as u32);
        for (i, sig) in &self.exec.attestations {
            w.u8(*i).fixed(&sig.encode());
        }
        w.fixed(&self.exec.nullifier.0);
        self.party_a.write(&mut w);
        self.party_b.write(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::versioned(bytes)?;
        let chain = |r: &mut Reader<'_>| -> Result<ChainId, CodecError> {
            let b = r.bytes()?;
            String::from_utf8(b.to_vec()).map(ChainId).map_err(|_| CodecError::MalformedEncoding)
        };
        let core = TagCore {
            cid_src: chain(&mut r)?,
            txid_src: r.array()?,
            cid_dst: chain(&mut r)?,
            txid_dst: r.array()?,
            msg_id: r.array()?,
            ts: r.u64()?,
        };
        let required_depth = r.u64()?;
        let count = r.u32()? as usize;
        if count > u8::MAX as usize + 1 {
            return Err(CodecError::MalformedEncoding);
        }
        let mut attestations = Vec::with_capacity(count);
        for _ in 0..count {
            let i = r.u8()?;
            attestations.push((i, SchnorrSignature::decode(r.fixed(64)?)?));
        }
        let nullifier = Nullifier(r.array()?);
        let party_a = PartyBundle::read(&mut r)?;
        let party_b = PartyBundle::read(&mut r)?;
        r.finish()?;
        Ok(AuditTag { core, exec: ExecAttestation { required_depth, attestations, nullifier }, party_a, party_b })
    }

    pub fn hash(&self) -> [u8; 32] {
        digest32(b"veilaudit/tag", &[&self.encode()])
    }

    pub fn dedup_key(&self) -> DedupKey {
        dedup_key(&self.core.cid_dst, &self.core.txid_dst, &self.core.msg_id)
    }

    pub fn bundle(&self, party: Party) -> &PartyBundle {
        match party {
            Party::A => &self.party_a,
            Party::B => &self.party_b,
        }
    }
}

pub fn dedup_key(cid_dst: &ChainId, txid_dst: &TxId, msg_id: &[u8; 32]) -> DedupKey {
    let mut w = Writer::new();
    w.bytes(cid_dst.as_bytes()).fixed(txid_dst).fixed(msg_id);
    digest32(b"veilaudit/dedup", &[&w.finish()])
}

/// A cross-chain transfer whose source leg has been relayed and whose
/// delivery transaction is known.
#[derive(Clone, Debug)]
pub struct FinalizedTransfer {
    pub message: BridgeMessage,
    pub txid_dst: TxId,
}

pub fn aud_build(
    transfer: &FinalizedTransfer,
    party_a: PartyBundle,
    party_b: PartyBundle,
    ts: u64,
) -> AuditTag {
    let m = &transfer.message.exec;
    AuditTag {
        core: TagCore {
            cid_src: m.cid_src.clone(),
            txid_src: m.txid_src,
            cid_dst: m.cid_dst.clone(),
            txid_dst: transfer.txid_dst,
            msg_id: m.msg_id,
            ts,
        },
        exec: ExecAttestation {
            required_depth: m.required_depth,
            attestations: transfer.message.attestations.clone(),
            nullifier: Nullifier::derive(&m.txid_src, m.src_nonce, &m.cid_src, &m.cid_dst),
        },
        party_a,
        party_b,
    }
}

pub fn aud_build_and_submit<V: ChainView>(
    transfer: &FinalizedTransfer,
    party_a: PartyBundle,
    party_b: PartyBundle,
    ts: u64,
    ledger: &mut AuditLedger,
    view: &V,
) -> Result<DedupKey, ProtocolError> {
    Ok(ledger.append(aud_build(transfer, party_a, party_b, ts), view)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagRef {
    pub key: DedupKey,
    pub party: Party,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealCase {
    pub case_id: Vec<u8>,
    pub tags: Vec<TagRef>,
    /// Pseudonym the escalating auditor asserts all listed bundles share.
    pub cluster_evidence: Option<crate::linktag::LinkPseudonym>,
    pub approvals: BTreeSet<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealRecord {
    pub case_id: Vec<u8>,
    pub tag_keys: Vec<DedupKey>,
    pub approvals: Vec<u8>,
    pub timestamp_ms: u64,
    pub revealed: Vec<GroupElement>,
}

impl RevealRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.bytes(&self.case_id).u32(self.tag_keys.len() as u32);
        for k in &self.tag_keys {
            w.fixed(k);
        }
        w.bytes(&self.approvals).u64(self.timestamp_ms).u32(self.revealed.len() as u32);
        for p in &self.revealed {
            w.element(p);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::versioned(bytes)?;
        let case_id = r.bytes()?.to_vec();
        let n = r.u32()? as usize;
        let tag_keys = (0..n).map(|_| r.array()).collect::<Result<_, _>>()?;
        let approvals = r.bytes()?.to_vec();
        let timestamp_ms = r.u64()?;
        let n = r.u32()? as usize;
        let revealed = (0..n).map(|_| r.element()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(RevealRecord { case_id, tag_keys, approvals, timestamp_ms, revealed })
    }
}

/// Threshold identity reveal. Refuses before touching any ciphertext when
/// the case carries fewer than `t` approvals.
pub fn irp_run(
    case: &RevealCase,
    keyset: &ThresholdKeyset,
    shares_available: &[AuthorityShare],
    ledger: &mut AuditLedger,
    now_ms: u64,
) -> Result<Vec<GroupElement>, ProtocolError> {
    if case.approvals.len() < keyset.t {
        return Err(ThresholdError::BelowThreshold { got: case.approvals.len(), need: keyset.t }.into());
    }
    let mut uids: Vec<UidCiphertext> = Vec::new();
    for tr in &case.tags {
        let tag = ledger.get(&tr.key).ok_or(ProtocolError::UnknownTag(tr.key))?;
        let uid = tag.bundle(tr.party).uid;
        if !uids.contains(&uid) {
            uids.push(uid);
        }
    }
    let approving: Vec<&AuthorityShare> =
        shares_available.iter().filter(|s| case.approvals.contains(&s.index)).collect();
    let mut revealed: Vec<GroupElement> = Vec::new();
    for uid in &uids {
        let partials = approving
            .iter()
            .map(|s| partial_decrypt(keyset, s, uid))
            .collect::<Result<Vec<_>, _>>()?;
        let pk = combine(keyset, uid, &partials)?;
        if !revealed.contains(&pk) {
            revealed.push(pk);
        }
    }
    ledger.record_reveal(RevealRecord {
        case_id: case.case_id.clone(),
        tag_keys: case.tags.iter().map(|t| t.key).collect(),
        approvals: case.approvals.iter().copied().collect(),
        timestamp_ms: now_ms,
        revealed: revealed.clone(),
    });
    Ok(revealed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainsim::ChainConfig;
    use crate::linktag::{equality_test, et_keygen, Equality};
    use crate::nizk::verify_link;
    use crate::threshold::keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn aip_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (ks, _) = keygen(2, 3, &mut rng).unwrap();
        let et = et_keygen(&mut rng);
        let user = MasterIdentity::generate(&mut rng);
        let mut chain = SimChain::new(ChainConfig::new("l1", 500));
        chain.mint(user.wallet, 100);

        let a = aip_run(&user, &mut chain, &ks.tpk, &et.apk, 40, &mut rng).unwrap();
        let ctx = bundle_context(chain.id(), &a.session.addr_anon);
        assert!(verify_link(&a.bundle.statement(&ks.tpk, &et.apk, &ctx), &a.bundle.pi_link));
        assert_eq!(chain.balance(&a.session.addr_anon), 40);
        assert!(chain.is_conserved());

        let b = aip_run(&user, &mut chain, &ks.tpk, &et.apk, 0, &mut rng).unwrap();
        assert_ne!(a.session.addr_anon, b.session.addr_anon);
        let (ea, eb) = (a.bundle_bytes(), b.bundle_bytes());
        for (fa, fb) in ea.iter().zip(&eb) {
            assert_ne!(fa, fb);
        }
        assert_eq!(equality_test(&et.ask, &a.bundle.ct_link, &b.bundle.ct_link), Equality::Equal);

        let err = aip_run(&user, &mut chain, &ks.tpk, &et.apk, 61, &mut rng).unwrap_err();
        assert_eq!(err, ProtocolError::Escrow(EscrowError::InsufficientFunds));
        assert!(chain.is_conserved());
    }

    impl AipOutput {
        fn bundle_bytes(&self) -> Vec<Vec<u8>> {
            let b = &self.bundle;
            let p = &b.pi_link;
            let mut v: Vec<Vec<u8>> = [b.uid.c1, b.uid.c2, b.com.0, b.ct_link.c1, b.ct_link.c2, p.a_com, p.a_uid1, p.a_uid2, p.a_link1, p.a_link2]
                .iter()
                .map(|e| e.encode().to_vec())
                .collect();
            v.extend([p.z_x, p.z_r, p.z_k, p.z_s].iter().map(|s| s.encode().to_vec()));
            v
        }
    }

    #[test]
    fn identity_is_distinct_from_wallet_key() {
        let user = MasterIdentity::new(Scalar::from_u64(7));
        assert_ne!(user.pk_id, GroupElement::mul_base(&Scalar::from_u64(7)));
        assert_eq!(user.pk_id, GroupElement::mul_base(user.identity_scalar()));
    }
}
