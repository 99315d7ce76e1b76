//! Pedersen commitments and Fiat–Shamir sigma protocols.
//!
//! Three proof families:
//!
//! * [`ControlProof`]: a Schnorr signature by the ephemeral key over
//!   `c_CTRL = H(ctx_CTRL, addr || nonce_sess)`; the verifier recomputes the
//!   address from the revealed ephemeral public key.
//! * [`LinkProof`]: AND-composition under one challenge of
//!
//!   ```text
//!   R1: Com      = x·G + r·H
//!   R2: UID      = (k·G, x·G + k·tpk)
//!   R3: CT_link  = (s·G, x·J + s·apk)
//!   ```
//!
//!   with the shared response `z_x` tying the three relations to one `x`.
//! * [`DleqProof`]: Chaum–Pedersen proof that `log_B1(P1) = log_B2(P2)`.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::algebra::{
    derive_address, domains, generators, hash_to_scalar, schnorr_sign, schnorr_verify, Address,
    GroupElement, Scalar, SchnorrSignature,
};
use crate::codec::{CodecError, Reader, Writer};
use crate::linktag::LinkCiphertext;
use crate::threshold::UidCiphertext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NizkError {
    #[error("address is not derived from the signing key")]
    AddressMismatch,
    #[error("witness does not satisfy the statement")]
    WitnessInconsistent,
    #[error("zero signing key")]
    ZeroKey,
}

/// Non-interactive challenge derivation.
///
/// Every absorbed item is framed as `len(label) || label || len(data) || data`,
/// so both the contents and the order of absorption determine the challenge.
#[derive(Clone, Debug)]
pub struct FiatShamirTranscript {
    domain: &'static [u8],
    absorbed: Vec<u8>,
}

impl FiatShamirTranscript {
    pub fn new(domain: &'static [u8]) -> Self {
        FiatShamirTranscript { domain, absorbed: Vec::with_capacity(512) }
    }

    pub fn absorb(&mut self, label: &[u8], data: &[u8]) {
        self.absorbed.extend_from_slice(&(label.len() as u32).to_le_bytes());
        self.absorbed.extend_from_slice(label);
        self.absorbed.extend_from_slice(&(data.len() as u32).to_le_bytes());
        self.absorbed.extend_from_slice(data);
    }

    pub fn absorb_element(&mut self, label: &[u8], p: &GroupElement) {
        self.absorb(label, &p.encode());
    }

    pub fn challenge(&self) -> Scalar {
        hash_to_scalar(self.domain, &self.absorbed)
    }
}

/// `C = x·G + r·H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PedersenCommitment(pub GroupElement);

impl std::ops::Add for PedersenCommitment {
    type Output = PedersenCommitment;
    fn add(self, rhs: PedersenCommitment) -> PedersenCommitment {
        PedersenCommitment(self.0 + rhs.0)
    }
}

pub fn commit(x: &Scalar, r: &Scalar) -> PedersenCommitment {
    PedersenCommitment(GroupElement::mul_base(x) + generators().mul_h(r))
}

// ---------------------------------------------------------------------------
// Control proof

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControlProof {
    pub pk_anon: GroupElement,
    pub sig: SchnorrSignature,
}

fn ctrl_challenge(addr: &Address, nonce_sess: &[u8]) -> Scalar {
    let mut buf = Vec::with_capacity(20 + nonce_sess.len());
    buf.extend_from_slice(addr.as_bytes());
    buf.extend_from_slice(nonce_sess);
    hash_to_scalar(domains::CTRL, &buf)
}

pub fn prove_ctrl(sk_anon: &Scalar, addr: &Address, nonce_sess: &[u8]) -> Result<ControlProof, NizkError> {
    if sk_anon.is_zero() {
        return Err(NizkError::ZeroKey);
    }
    let pk_anon = GroupElement::mul_base(sk_anon);
    if derive_address(&pk_anon) != *addr {
        return Err(NizkError::AddressMismatch);
    }
    let c = ctrl_challenge(addr, nonce_sess);
    let sig = schnorr_sign(sk_anon, domains::CTRL, &c.encode()).map_err(|_| NizkError::ZeroKey)?;
    Ok(ControlProof { pk_anon, sig })
}

pub fn verify_ctrl(addr: &Address, nonce_sess: &[u8], proof: &ControlProof) -> bool {
    if derive_address(&proof.pk_anon) != *addr {
        return false;
    }
    let c = ctrl_challenge(addr, nonce_sess);
    schnorr_verify(&proof.pk_anon, domains::CTRL, &c.encode(), &proof.sig)
}

impl ControlProof {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.element(&self.pk_anon).fixed(&self.sig.encode());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::versioned(bytes)?;
        let pk_anon = r.element()?;
        let sig = SchnorrSignature::decode(r.fixed(64)?)?;
        r.finish()?;
        Ok(ControlProof { pk_anon, sig })
    }
}

// ---------------------------------------------------------------------------
// Link proof

/// Public side of the three-way consistency statement.
///
/// `context` binds the proof to the session it was produced for (chain id and
/// anonymous address); without it a complete bundle could be lifted into
/// another tag.
#[derive(Clone, Copy, Debug)]
pub struct LinkStatement<'a> {
    pub com: PedersenCommitment,
    pub uid: UidCiphertext,
    pub ct_link: LinkCiphertext,
    pub tpk: GroupElement,
    pub apk: GroupElement,
    pub context: &'a [u8],
}

#[derive(Clone, Copy, Debug)]
pub struct LinkWitness {
    pub x: Scalar,
    pub r: Scalar,
    pub k: Scalar,
    pub s: Scalar,
}

impl LinkWitness {
    /// Checks R1–R3 against a statement.
    pub fn satisfies(&self, st: &LinkStatement<'_>) -> bool {
        let gens = generators();
        let x_g = GroupElement::mul_base(&self.x);
        st.com.0 == x_g + gens.mul_h(&self.r)
            && st.uid.c1 == GroupElement::mul_base(&self.k)
            && st.uid.c2 == x_g + st.tpk * self.k
            && st.ct_link.c1 == GroupElement::mul_base(&self.s)
            && st.ct_link.c2 == gens.mul_j(&self.x) + st.apk * self.s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkProof {
    pub a_com: GroupElement,
    pub a_uid1: GroupElement,
    pub a_uid2: GroupElement,
    pub a_link1: GroupElement,
    pub a_link2: GroupElement,
    pub z_x: Scalar,
    pub z_r: Scalar,
    pub z_k: Scalar,
    pub z_s: Scalar,
}

impl LinkProof {
    pub const ENCODED_LEN: usize = 1 + 5 * 32 + 4 * 32;

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        self.write(&mut w);
        w.finish()
    }

    pub fn write(&self, w: &mut Writer) {
        w.element(&self.a_com)
            .element(&self.a_uid1)
            .element(&self.a_uid2)
            .element(&self.a_link1)
            .element(&self.a_link2)
            .scalar(&self.z_x)
            .scalar(&self.z_r)
            .scalar(&self.z_k)
            .scalar(&self.z_s);
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::versioned(bytes)?;
        let proof = Self::read(&mut r)?;
        r.finish()?;
        Ok(proof)
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(LinkProof {
            a_com: r.element()?,
            a_uid1: r.element()?,
            a_uid2: r.element()?,
            a_link1: r.element()?,
            a_link2: r.element()?,
            z_x: r.scalar()?,
            z_r: r.scalar()?,
            z_k: r.scalar()?,
            z_s: r.scalar()?,
        })
    }
}

fn link_challenge(st: &LinkStatement<'_>, announcements: [&GroupElement; 5]) -> Scalar {
    let mut t = FiatShamirTranscript::new(domains::FS);
    t.absorb(b"protocol", b"link/v1");
    t.absorb(b"ctx", domains::GLOBAL);
    t.absorb(b"context", st.context);
    t.absorb_element(b"com", &st.com.0);
    t.absorb_element(b"uid.c1", &st.uid.c1);
    t.absorb_element(b"uid.c2", &st.uid.c2);
    t.absorb_element(b"link.c1", &st.ct_link.c1);
    t.absorb_element(b"link.c2", &st.ct_link.c2);
    t.absorb_element(b"tpk", &st.tpk);
    t.absorb_element(b"apk", &st.apk);
    for (label, a) in [b"A_com".as_slice(), b"A_uid1", b"A_uid2", b"A_link1", b"A_link2"]
        .into_iter()
        .zip(announcements)
    {
        t.absorb_element(label, a);
    }
    t.challenge()
}

pub fn prove_link<R: RngCore + CryptoRng>(
    witness: &LinkWitness,
    st: &LinkStatement<'_>,
    rng: &mut R,
) -> Result<LinkProof, NizkError> {
    if !witness.satisfies(st) {
        return Err(NizkError::WitnessInconsistent);
    }
    let gens = generators();
    let (ax, ar, ak, as_) = (
        Scalar::random(rng),
        Scalar::random(rng),
        Scalar::random(rng),
        Scalar::random(rng),
    );
    let ax_g = GroupElement::mul_base(&ax);
    let a_com = ax_g + gens.mul_h(&ar);
    let a_uid1 = GroupElement::mul_base(&ak);
    let a_uid2 = ax_g + st.tpk * ak;
    let a_link1 = GroupElement::mul_base(&as_);
    let a_link2 = gens.mul_j(&ax) + st.apk * as_;
    let c = link_challenge(st, [&a_com, &a_uid1, &a_uid2, &a_link1, &a_link2]);
    Ok(LinkProof {
        a_com,
        a_uid1,
        a_uid2,
        a_link1,
        a_link2,
        z_x: ax + c * witness.x,
        z_r: ar + c * witness.r,
        z_k: ak + c * witness.k,
        z_s: as_ + c * witness.s,
    })
}

/// The five verification equations for a given challenge.
pub fn link_equations_hold(st: &LinkStatement<'_>, p: &LinkProof, c: &Scalar) -> bool {
    let gens = generators();
    let neg_c = -*c;
    let minus_one = -Scalar::ONE;
    let id = |s: &[Scalar], pts: &[GroupElement]| GroupElement::vartime_multiscalar(s, pts).is_identity();
    // z_x·G + z_r·H − c·Com − A_com
    id(&[p.z_x, p.z_r, neg_c, minus_one], &[gens.g, gens.h, st.com.0, p.a_com])
        // z_k·G − c·c1 − A_uid1
        && id(&[p.z_k, neg_c, minus_one], &[gens.g, st.uid.c1, p.a_uid1])
        // z_x·G + z_k·tpk − c·c2 − A_uid2
        && id(&[p.z_x, p.z_k, neg_c, minus_one], &[gens.g, st.tpk, st.uid.c2, p.a_uid2])
        // z_s·G − c·c1' − A_link1
        && id(&[p.z_s, neg_c, minus_one], &[gens.g, st.ct_link.c1, p.a_link1])
        // z_x·J + z_s·apk − c·c2' − A_link2
        && id(&[p.z_x, p.z_s, neg_c, minus_one], &[gens.j, st.apk, st.ct_link.c2, p.a_link2])
}

pub fn verify_link(st: &LinkStatement<'_>, proof: &LinkProof) -> bool {
    let c = link_challenge(
        st,
        [&proof.a_com, &proof.a_uid1, &proof.a_uid2, &proof.a_link1, &proof.a_link2],
    );
    link_equations_hold(st, proof, &c)
}

// ---------------------------------------------------------------------------
// DLEQ

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DleqProof {
    pub a1: GroupElement,
    pub a2: GroupElement,
    pub response: Scalar,
}

impl DleqProof {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::versioned();
        w.element(&self.a1).element(&self.a2).scalar(&self.response);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::versioned(bytes)?;
        let p = DleqProof { a1: r.element()?, a2: r.element()?, response: r.scalar()? };
        r.finish()?;
        Ok(p)
    }
}

fn dleq_challenge(
    b1: &GroupElement,
    b2: &GroupElement,
    p1: &GroupElement,
    p2: &GroupElement,
    a1: &GroupElement,
    a2: &GroupElement,
) -> Scalar {
    let mut t = FiatShamirTranscript::new(domains::FS);
    t.absorb(b"protocol", b"dleq/v1");
    t.absorb_element(b"B1", b1);
    t.absorb_element(b"B2", b2);
    t.absorb_element(b"P1", p1);
    t.absorb_element(b"P2", p2);
    t.absorb_element(b"A1", a1);
    t.absorb_element(b"A2", a2);
    t.challenge()
}

/// Proves `log_B1(w·B1) = log_B2(w·B2)`. The nonce is derived from the
/// witness and bases, so the proof is a deterministic function of its inputs.
pub fn prove_dleq(w: &Scalar, b1: &GroupElement, b2: &GroupElement) -> DleqProof {
    let p1 = *b1 * *w;
    let p2 = *b2 * *w;
    let mut nonce_input = Vec::with_capacity(5 + 96);
    nonce_input.extend_from_slice(b"dleq");
    nonce_input.extend_from_slice(&w.encode());
    nonce_input.extend_from_slice(&b1.encode());
    nonce_input.extend_from_slice(&b2.encode());
    let a = hash_to_scalar(domains::NONCE, &nonce_input);
    let a1 = *b1 * a;
    let a2 = *b2 * a;
    let c = dleq_challenge(b1, b2, &p1, &p2, &a1, &a2);
    DleqProof { a1, a2, response: a + c * *w }
}

pub fn dleq_equations_hold(
    p1: &GroupElement,
    p2: &GroupElement,
    b1: &GroupElement,
    b2: &GroupElement,
    proof: &DleqProof,
    c: &Scalar,
) -> bool {
    let neg_c = -*c;
    let minus_one = -Scalar::ONE;
    GroupElement::vartime_multiscalar(&[proof.response, neg_c, minus_one], &[*b1, *p1, proof.a1]).is_identity()
        && GroupElement::vartime_multiscalar(&[proof.response, neg_c, minus_one], &[*b2, *p2, proof.a2])
            .is_identity()
}

pub fn verify_dleq(
    p1: &GroupElement,
    p2: &GroupElement,
    b1: &GroupElement,
    b2: &GroupElement,
    proof: &DleqProof,
) -> bool {
    let c = dleq_challenge(b1, b2, p1, p2, &proof.a1, &proof.a2);
    dleq_equations_hold(p1, p2, b1, b2, proof, &c)
}

/// Honest-verifier simulators: accepting transcripts for a chosen challenge,
/// produced without any witness.
pub mod simulate {
    use super::*;

    pub fn link<R: RngCore + CryptoRng>(st: &LinkStatement<'_>, c: &Scalar, rng: &mut R) -> LinkProof {
        let gens = generators();
        let (z_x, z_r, z_k, z_s) = (
            Scalar::random(rng),
            Scalar::random(rng),
            Scalar::random(rng),
            Scalar::random(rng),
        );
        LinkProof {
            a_com: GroupElement::mul_base(&z_x) + gens.mul_h(&z_r) - st.com.0 * *c,
            a_uid1: GroupElement::mul_base(&z_k) - st.uid.c1 * *c,
            a_uid2: GroupElement::mul_base(&z_x) + st.tpk * z_k - st.uid.c2 * *c,
            a_link1: GroupElement::mul_base(&z_s) - st.ct_link.c1 * *c,
            a_link2: gens.mul_j(&z_x) + st.apk * z_s - st.ct_link.c2 * *c,
            z_x,
            z_r,
            z_k,
            z_s,
        }
    }

    pub fn dleq<R: RngCore + CryptoRng>(
        p1: &GroupElement,
        p2: &GroupElement,
        b1: &GroupElement,
        b2: &GroupElement,
        c: &Scalar,
        rng: &mut R,
    ) -> DleqProof {
        let z = Scalar::random(rng);
        DleqProof { a1: *b1 * z - *p1 * *c, a2: *b2 * z - *p2 * *c, response: z }
    }

    /// Schnorr transcript `(R, z)` with `z·G = R + c·pk`.
    pub fn schnorr<R: RngCore + CryptoRng>(
        pk: &GroupElement,
        c: &Scalar,
        rng: &mut R,
    ) -> (GroupElement, Scalar) {
        let z = Scalar::random(rng);
        (GroupElement::mul_base(&z) - *pk * *c, z)
    }
}
