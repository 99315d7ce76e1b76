//! Prime-order group arithmetic.
//!
//! Everything in the protocol stack is expressed over the Ristretto255 group
//! (prime order `q = 2^252 + 27742317777372353535851937790883648493`), so
//! there are no cofactor pitfalls and every element has a unique 32-byte
//! canonical encoding. [`Scalar`] and [`GroupElement`] are thin newtypes that
//! pin down encoding rules and keep the rest of the crate independent of the
//! curve backend.
//!
//! Hashing conventions:
//!
//! ```text
//! hash_to_scalar(d, m) = SHA-512(len(d) as u64-le || d || m)  mod q   (wide reduction)
//! hash_to_group(d, m)  = Elligator2 map of SHA-512(len(d) as u64-le || d || m)
//! digest32(d, parts)   = SHA-256(len(d) || d || len(p_1) || p_1 || ...)
//! ```

use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::LazyLock;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoBasepointTable, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as DalekScalar;
use curve25519_dalek::traits::{Identity, IsIdentity, VartimeMultiscalarMul};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha512};
use thiserror::Error;

/// Registered domain-separation strings.
pub mod domains {
    pub const CTRL: &[u8] = b"VEILAUDIT/CTRL/v1";
    pub const EXEC: &[u8] = b"VEILAUDIT/EXEC/v1";
    pub const GLOBAL: &[u8] = b"VEILAUDIT/GLOBAL/v1";
    pub const GEN_H: &[u8] = b"VEILAUDIT/GEN/H/v1";
    pub const GEN_J: &[u8] = b"VEILAUDIT/GEN/J/v1";
    pub const FS: &[u8] = b"VEILAUDIT/FS/v1";
    pub const ADDR: &[u8] = b"VEILAUDIT/ADDR/v1";
    pub const KDF: &[u8] = b"VEILAUDIT/KDF/v1";
    pub const NONCE: &[u8] = b"VEILAUDIT/NONCE/v1";

    /// Every registered string, in a stable order.
    pub const ALL: [&[u8]; 9] = [CTRL, EXEC, GLOBAL, GEN_H, GEN_J, FS, ADDR, KDF, NONCE];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("non-canonical or off-group encoding")]
    MalformedEncoding,
    #[error("key derivation salt must be non-empty")]
    EmptySalt,
    #[error("secret key is zero")]
    ZeroKey,
}

/// An element of the scalar field `Z_q`.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct Scalar(pub(crate) DalekScalar);

impl Scalar {
    pub const ZERO: Scalar = Scalar(DalekScalar::ZERO);
    pub const ONE: Scalar = Scalar(DalekScalar::ONE);
    pub const ENCODED_LEN: usize = 32;

    pub fn from_u64(v: u64) -> Self {
        Scalar(DalekScalar::from(v))
    }

    /// Uniform scalar; may be zero with probability `1/q`.
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Scalar(DalekScalar::random(rng))
    }

    /// Uniform nonzero scalar.
    pub fn random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let s = Self::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0 == DalekScalar::ZERO
    }

    /// Multiplicative inverse, `None` for zero.
    pub fn invert(&self) -> Option<Scalar> {
        if self.is_zero() {
            None
        } else {
            Some(Scalar(self.0.invert()))
        }
    }

    pub fn encode(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    /// Accepts only the canonical little-endian encoding of a value below `q`.
    pub fn decode(bytes: &[u8]) -> Result<Self, AlgebraError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| AlgebraError::MalformedEncoding)?;
        Option::from(DalekScalar::from_canonical_bytes(arr))
            .map(Scalar)
            .ok_or(AlgebraError::MalformedEncoding)
    }

    pub(crate) fn from_wide(bytes: &[u8; 64]) -> Self {
        Scalar(DalekScalar::from_bytes_mod_order_wide(bytes))
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", hex::encode(self.encode()))
    }
}

impl Hash for Scalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.encode().hash(state);
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl AddAssign for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        self.0 += rhs.0;
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ZERO, |acc, s| acc + s)
    }
}

/// An element of the prime-order group.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(pub(crate) RistrettoPoint);

impl GroupElement {
    pub const ENCODED_LEN: usize = 32;

    pub fn identity() -> Self {
        GroupElement(RistrettoPoint::identity())
    }

    /// The standard base `G`.
    pub fn generator() -> Self {
        generators().g
    }

    /// `s·G` via the precomputed basepoint table.
    pub fn mul_base(s: &Scalar) -> Self {
        GroupElement(RISTRETTO_BASEPOINT_TABLE * &s.0)
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_identity()
    }

    pub fn encode(&self) -> [u8; 32] {
        self.0.compress().to_bytes()
    }

    /// Rejects non-canonical encodings and byte strings that are not group elements.
    pub fn decode(bytes: &[u8]) -> Result<Self, AlgebraError> {
        let compressed =
            CompressedRistretto::from_slice(bytes).map_err(|_| AlgebraError::MalformedEncoding)?;
        compressed
            .decompress()
            .map(GroupElement)
            .ok_or(AlgebraError::MalformedEncoding)
    }

    /// `Σ scalars[i]·points[i]`, variable time. Only for verification of public data.
    pub fn vartime_multiscalar(scalars: &[Scalar], points: &[GroupElement]) -> Self {
        debug_assert_eq!(scalars.len(), points.len());
        GroupElement(RistrettoPoint::vartime_multiscalar_mul(
            scalars.iter().map(|s| s.0),
            points.iter().map(|p| p.0),
        ))
    }
}

impl Default for GroupElement {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", hex::encode(self.encode()))
    }
}

impl Hash for GroupElement {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.encode().hash(state);
    }
}

impl Add for GroupElement {
    type Output = GroupElement;
    fn add(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 + rhs.0)
    }
}

impl AddAssign for GroupElement {
    fn add_assign(&mut self, rhs: GroupElement) {
        self.0 += rhs.0;
    }
}

impl Sub for GroupElement {
    type Output = GroupElement;
    fn sub(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 - rhs.0)
    }
}

impl SubAssign for GroupElement {
    fn sub_assign(&mut self, rhs: GroupElement) {
        self.0 -= rhs.0;
    }
}

impl Neg for GroupElement {
    type Output = GroupElement;
    fn neg(self) -> GroupElement {
        GroupElement(-self.0)
    }
}

impl Mul<Scalar> for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: Scalar) -> GroupElement {
        GroupElement(self.0 * rhs.0)
    }
}

impl Mul<GroupElement> for Scalar {
    type Output = GroupElement;
    fn mul(self, rhs: GroupElement) -> GroupElement {
        GroupElement(rhs.0 * self.0)
    }
}

impl Sum for GroupElement {
    fn sum<I: Iterator<Item = GroupElement>>(iter: I) -> GroupElement {
        iter.fold(GroupElement::identity(), |acc, p| acc + p)
    }
}

/// The three fixed bases: `G` (standard), `H` (Pedersen blinding), `J` (link pseudonyms).
///
/// `H` and `J` come out of [`hash_to_group`], so nobody knows a discrete log
/// relation between any two of them.
pub struct GeneratorSet {
    pub g: GroupElement,
    pub h: GroupElement,
    pub j: GroupElement,
    h_table: RistrettoBasepointTable,
    j_table: RistrettoBasepointTable,
}

impl GeneratorSet {
    fn derive() -> Self {
        let h = hash_to_group(domains::GEN_H, b"");
        let j = hash_to_group(domains::GEN_J, b"");
        GeneratorSet {
            g: GroupElement(curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT),
            h,
            j,
            h_table: RistrettoBasepointTable::create(&h.0),
            j_table: RistrettoBasepointTable::create(&j.0),
        }
    }

    pub fn mul_h(&self, s: &Scalar) -> GroupElement {
        GroupElement(&self.h_table * &s.0)
    }

    pub fn mul_j(&self, s: &Scalar) -> GroupElement {
        GroupElement(&self.j_table * &s.0)
    }
}

static GENERATORS: LazyLock<GeneratorSet> = LazyLock::new(GeneratorSet::derive);

pub fn generators() -> &'static GeneratorSet {
    &GENERATORS
}

fn framed_sha512(domain: &[u8], payload: &[u8]) -> [u8; 64] {
    let mut h = Sha512::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain);
    h.update(payload);
    h.finalize().into()
}

pub fn hash_to_scalar(domain: &[u8], payload: &[u8]) -> Scalar {
    Scalar::from_wide(&framed_sha512(domain, payload))
}

pub fn hash_to_group(domain: &[u8], payload: &[u8]) -> GroupElement {
    GroupElement(RistrettoPoint::from_uniform_bytes(&framed_sha512(domain, payload)))
}

/// Length-framed SHA-256 over a list of parts. Used for identifiers
/// (txids, message ids, dedup keys, nullifiers), never for scalars.
pub fn digest32(domain: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain);
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Derives a child secret from a master secret and a non-empty salt.
pub fn kdf_derive(master_secret: &Scalar, salt: &[u8]) -> Result<Scalar, AlgebraError> {
    if salt.is_empty() {
        return Err(AlgebraError::EmptySalt);
    }
    let mut buf = Vec::with_capacity(32 + salt.len() + 4);
    buf.extend_from_slice(&master_secret.encode());
    buf.extend_from_slice(salt);
    let base = buf.len();
    for counter in 0u32.. {
        buf.truncate(base);
        if counter > 0 {
            buf.extend_from_slice(&counter.to_le_bytes());
        }
        let out = hash_to_scalar(domains::KDF, &buf);
        if !out.is_zero() {
            return Ok(out);
        }
    }
    unreachable!("hash output is zero for every counter")
}

/// Schnorr signature `(c, z)` with `c = H(R || pk || m)` and `z = k + c·sk`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SchnorrSignature {
    pub commitment_hash: Scalar,
    pub response: Scalar,
}

impl SchnorrSignature {
    pub const ENCODED_LEN: usize = 64;

    pub fn encode(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.commitment_hash.encode());
        out[32..].copy_from_slice(&self.response.encode());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, AlgebraError> {
        if bytes.len() != 64 {
            return Err(AlgebraError::MalformedEncoding);
        }
        Ok(SchnorrSignature {
            commitment_hash: Scalar::decode(&bytes[..32])?,
            response: Scalar::decode(&bytes[32..])?,
        })
    }
}

fn schnorr_challenge(domain: &[u8], r: &GroupElement, pk: &GroupElement, message: &[u8]) -> Scalar {
    let mut buf = Vec::with_capacity(64 + message.len());
    buf.extend_from_slice(&r.encode());
    buf.extend_from_slice(&pk.encode());
    buf.extend_from_slice(message);
    hash_to_scalar(domain, &buf)
}

/// Signs with a nonce derived from `(sk, domain, message)`, so signing is reproducible.
pub fn schnorr_sign(sk: &Scalar, domain: &[u8], message: &[u8]) -> Result<SchnorrSignature, AlgebraError> {
    if sk.is_zero() {
        return Err(AlgebraError::ZeroKey);
    }
    let mut nonce_input = Vec::with_capacity(40 + domain.len() + message.len());
    nonce_input.extend_from_slice(&sk.encode());
    nonce_input.extend_from_slice(&(domain.len() as u64).to_le_bytes());
    nonce_input.extend_from_slice(domain);
    nonce_input.extend_from_slice(message);
    let mut k = hash_to_scalar(domains::NONCE, &nonce_input);
    if k.is_zero() {
        k = Scalar::ONE;
    }
    let r = GroupElement::mul_base(&k);
    let pk = GroupElement::mul_base(sk);
    let c = schnorr_challenge(domain, &r, &pk, message);
    Ok(SchnorrSignature { commitment_hash: c, response: k + c * *sk })
}

pub fn schnorr_verify(pk: &GroupElement, domain: &[u8], message: &[u8], sig: &SchnorrSignature) -> bool {
    // R' = z·G − c·pk
    let r = GroupElement::vartime_multiscalar(
        &[sig.response, -sig.commitment_hash],
        &[generators().g, *pk],
    );
    schnorr_challenge(domain, &r, pk, message) == sig.commitment_hash
}

/// A 20-byte account address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address(0x{})", hex::encode(self.0))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

/// First 20 bytes of `SHA-256(ADDR domain framing || encode(pk))`.
pub fn derive_address(pk: &GroupElement) -> Address {
    let digest = digest32(domains::ADDR, &[&pk.encode()]);
    let mut out = [0u8; 20];
    out.copy_from_slice(&digest[..20]);
    Address(out)
}
