//! t-of-n threshold ElGamal for identity capsules.
//!
//! A trusted dealer samples `f(z) = a_0 + a_1 z + ... + a_{t-1} z^{t-1}`,
//! publishes Feldman commitments `F_j = a_j·G` and hands authority `i` the
//! share `f(i)`. The committee key is `tpk = F_0`. An identity element `P` is
//! encrypted as `(k·G, P + k·tpk)`. Each authority contributes `D_i = f(i)·c1`
//! with a DLEQ proof against its public share `Y_i = Σ_j i^j·F_j`, and any `t`
//! contributions combine with Lagrange coefficients at zero:
//!
//! ```text
//! P = c2 − Σ_{i∈S} λ_i·D_i,    λ_i = Π_{j∈S, j≠i} j / (j − i)
//! ```

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::algebra::{GroupElement, Scalar};
use crate::codec::{CodecError, Reader, Writer};
use crate::nizk::{prove_dleq, verify_dleq, DleqProof};

pub const MAX_AUTHORITIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ThresholdError {
    #[error("invalid threshold t={t} for n={n}")]
    BadThreshold { t: usize, n: usize },
    #[error("share {0} does not match the Feldman commitments")]
    InvalidShare(u8),
    #[error("{got} decryption shares, threshold is {need}")]
    BelowThreshold { got: usize, need: usize },
    #[error("decryption share {0} failed proof verification")]
    BadShareProof(u8),
    #[error("duplicate share index {0}")]
    DuplicateIndex(u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThresholdKeyset {
    pub tpk: GroupElement,
    pub n: usize,
    pub t: usize,
    pub feldman: Vec<GroupElement>,
    /// `Y_1..Y_n`, evaluated once from the Feldman commitments.
    public_shares: Vec<GroupElement>,
}

impl ThresholdKeyset {
    pub fn from_commitments(feldman: Vec<GroupElement>, n: usize) -> Result<Self, ThresholdError> {
        let t = feldman.len();
        check_params(t, n)?;
        let public_shares = (1..=n as u8).map(|i| feldman_eval(&feldman, i)).collect();
        Ok(ThresholdKeyset { tpk: feldman[0], n, t, feldman, public_shares })
    }

    /// `Y_i = Σ_j i^j·F_j`, the public counterpart of share `i`.
    pub fn public_share(&self, index: u8) -> GroupElement {
        match index {
            1.. if (index as usize) <= self.n => self.public_shares[index as usize - 1],
            _ => feldman_eval(&self.feldman, index),
        }
    }

    pub fn share_verify(&self, share: &AuthorityShare) -> bool {
        share.index >= 1
            && (share.index as usize) <= self.n
            && GroupElement::mul_base(&share.secret) == self.public_share(share.index)
    }
}

fn feldman_eval(feldman: &[GroupElement], index: u8) -> GroupElement {
    let x = Scalar::from_u64(index as u64);
    // Horner from the top coefficient
    feldman.iter().rev().fold(GroupElement::identity(), |acc, f| acc * x + *f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuthorityShare {
    pub index: u8,
    pub secret: Scalar,
}

impl AuthorityShare {
    pub const ENCODED_LEN: usize = 33;

    /// `index (1 byte) || secret (32 bytes)`.
    pub fn encode(&self) -> [u8; 33] {
        let mut out = [0u8; 33];
        out[0] = self.index;
        out[1..].copy_from_slice(&self.secret.encode());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let index = r.u8()?;
        let secret = r.scalar()?;
        r.finish()?;
        Ok(AuthorityShare { index, secret })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UidCiphertext {
    pub c1: GroupElement,
    pub c2: GroupElement,
}

impl UidCiphertext {
    pub fn write(&self, w: &mut Writer) {
        w.element(&self.c1).element(&self.c2);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(UidCiphertext { c1: r.element()?, c2: r.element()? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecryptionShare {
    pub index: u8,
    pub value: GroupElement,
    pub proof: DleqProof,
}

fn check_params(t: usize, n: usize) -> Result<(), ThresholdError> {
    if t < 1 || t > n || n > MAX_AUTHORITIES {
        return Err(ThresholdError::BadThreshold { t, n });
    }
    Ok(())
}

/// Shares a caller-chosen secret. Remaining coefficients come from `rng`.
pub fn deal<R: RngCore + CryptoRng>(
    secret: Scalar,
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<(ThresholdKeyset, Vec<AuthorityShare>), ThresholdError> {
    check_params(t, n)?;
    let mut coeffs = Vec::with_capacity(t);
    coeffs.push(secret);
    coeffs.extend((1..t).map(|_| Scalar::random(rng)));
    let feldman: Vec<_> = coeffs.iter().map(GroupElement::mul_base).collect();
    let shares = (1..=n as u8)
        .map(|index| {
            let x = Scalar::from_u64(index as u64);
            let secret = coeffs.iter().rev().fold(Scalar::ZERO, |acc, a| acc * x + *a);
            AuthorityShare { index, secret }
        })
        .collect();
    Ok((ThresholdKeyset::from_commitments(feldman, n)?, shares))
}

pub fn keygen<R: RngCore + CryptoRng>(
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<(ThresholdKeyset, Vec<AuthorityShare>), ThresholdError> {
    check_params(t, n)?;
    let secret = Scalar::random_nonzero(rng);
    deal(secret, t, n, rng)
}

pub fn encrypt_uid(tpk: &GroupElement, pk_id: &GroupElement, k: &Scalar) -> UidCiphertext {
    UidCiphertext { c1: GroupElement::mul_base(k), c2: *pk_id + *tpk * *k }
}

pub fn partial_decrypt(
    keyset: &ThresholdKeyset,
    share: &AuthorityShare,
    ct: &UidCiphertext,
) -> Result<DecryptionShare, ThresholdError> {
    if !keyset.share_verify(share) {
        return Err(ThresholdError::InvalidShare(share.index));
    }
    Ok(DecryptionShare {
        index: share.index,
        value: ct.c1 * share.secret,
        proof: prove_dleq(&share.secret, &GroupElement::generator(), &ct.c1),
    })
}

pub fn verify_decryption_share(keyset: &ThresholdKeyset, ct: &UidCiphertext, ds: &DecryptionShare) -> bool {
    ds.index >= 1
        && (ds.index as usize) <= keyset.n
        && verify_dleq(
            &keyset.public_share(ds.index),
            &ds.value,
            &GroupElement::generator(),
            &ct.c1,
            &ds.proof,
        )
}

/// Lagrange coefficients at zero for a set of distinct nonzero indices.
pub fn lagrange_at_zero(indices: &[u8]) -> Vec<Scalar> {
    indices
        .iter()
        .map(|&i| {
            let xi = Scalar::from_u64(i as u64);
            let (num, den) = indices.iter().filter(|&&j| j != i).fold(
                (Scalar::ONE, Scalar::ONE),
                |(num, den), &j| {
                    let xj = Scalar::from_u64(j as u64);
                    (num * xj, den * (xj - xi))
                },
            );
            num * den.invert().expect("indices are distinct")
        })
        .collect()
}

/// `c2 − Σ λ_i·D_i` without any checks. Exposed for adversarial experiments
/// that combine guessed contributions.
pub fn combine_unchecked(ct: &UidCiphertext, contributions: &[(u8, GroupElement)]) -> GroupElement {
    let indices: Vec<u8> = contributions.iter().map(|(i, _)| *i).collect();
    let lambdas = lagrange_at_zero(&indices);
    let values: Vec<GroupElement> = contributions.iter().map(|(_, v)| *v).collect();
    ct.c2 - GroupElement::vartime_multiscalar(&lambdas, &values)
}

pub fn combine(
    keyset: &ThresholdKeyset,
    ct: &UidCiphertext,
    shares: &[DecryptionShare],
) -> Result<GroupElement, ThresholdError> {
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.index) {
            return Err(ThresholdError::DuplicateIndex(s.index));
        }
    }
    if shares.len() < keyset.t {
        return Err(ThresholdError::BelowThreshold { got: shares.len(), need: keyset.t });
    }
    if let Some(bad) = shares.iter().find(|s| !verify_decryption_share(keyset, ct, s)) {
        return Err(ThresholdError::BadShareProof(bad.index));
    }
    let contributions: Vec<_> = shares.iter().map(|s| (s.index, s.value)).collect();
    Ok(combine_unchecked(ct, &contributions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(3)
    }

    #[test]
    fn keygen_examples() {
        let mut r = rng();
        let (ks, shares) = keygen(2, 3, &mut r).unwrap();
        assert_eq!(shares.len(), 3);
        assert_eq!(ks.feldman.len(), 2);
        assert_eq!(ks.feldman[0], ks.tpk);
        assert!(shares.iter().all(|s| ks.share_verify(s)));

        let secret = Scalar::random_nonzero(&mut r);
        let (ks, shares) = deal(secret, 1, 1, &mut r).unwrap();
        assert_eq!(shares[0].secret, secret);
        assert_eq!(ks.tpk, GroupElement::mul_base(&secret));

        assert_eq!(keygen(5, 3, &mut r), Err(ThresholdError::BadThreshold { t: 5, n: 3 }));
        assert!(keygen(0, 3, &mut r).is_err());
        assert!(keygen(2, 65, &mut r).is_err());
        assert!(keygen(64, 64, &mut r).is_ok());
    }

    #[test]
    fn corrupted_shares_fail_feldman() {
        let mut r = rng();
        let (ks, shares) = keygen(3, 5, &mut r).unwrap();
        for s in &shares {
            for bit in 0..252 {
                let mut bytes = s.secret.encode();
                bytes[bit / 8] ^= 1 << (bit % 8);
                if let Ok(secret) = Scalar::decode(&bytes) {
                    assert!(!ks.share_verify(&AuthorityShare { index: s.index, secret }));
                }
            }
        }
    }

    #[test]
    fn encrypt_uid_examples() {
        let mut r = rng();
        let secret = Scalar::random_nonzero(&mut r);
        let tpk = GroupElement::mul_base(&secret);
        let p = GroupElement::mul_base(&Scalar::random(&mut r));
        let ct0 = encrypt_uid(&tpk, &p, &Scalar::ZERO);
        assert!(ct0.c1.is_identity());
        assert_eq!(ct0.c2, p);
        let k1 = Scalar::random_nonzero(&mut r);
        let ct = encrypt_uid(&tpk, &p, &k1);
        assert_eq!(ct.c2 - ct.c1 * secret, p);
        let ct2 = encrypt_uid(&tpk, &p, &(k1 + Scalar::ONE));
        assert_ne!(ct.c1, ct2.c1);
        assert_ne!(ct.c2, ct2.c2);
    }

    #[test]
    fn partial_decrypt_examples() {
        let mut r = rng();
        let (ks, shares) = keygen(2, 3, &mut r).unwrap();
        let p = GroupElement::mul_base(&Scalar::random(&mut r));
        let ct = encrypt_uid(&ks.tpk, &p, &Scalar::random_nonzero(&mut r));
        let ds = partial_decrypt(&ks, &shares[0], &ct).unwrap();
        assert!(verify_decryption_share(&ks, &ct, &ds));

        let corrupt = AuthorityShare { index: 1, secret: shares[0].secret + Scalar::ONE };
        assert_eq!(partial_decrypt(&ks, &corrupt, &ct), Err(ThresholdError::InvalidShare(1)));
        // a corrupt share that slips past the Feldman gate still fails DLEQ
        let forged = DecryptionShare {
            index: 1,
            value: ct.c1 * corrupt.secret,
            proof: prove_dleq(&corrupt.secret, &GroupElement::generator(), &ct.c1),
        };
        assert!(!verify_decryption_share(&ks, &ct, &forged));

        let mut tampered = ct;
        tampered.c1 += GroupElement::generator();
        assert!(!verify_decryption_share(&ks, &tampered, &ds));
    }

    #[test]
    fn combine_matches_dealer_decryption() {
        let mut r = rng();
        for _ in 0..1000 {
            let secret = Scalar::random_nonzero(&mut r);
            let (ks, shares) = deal(secret, 2, 3, &mut r).unwrap();
            let p = GroupElement::mul_base(&Scalar::random(&mut r));
            let ct = encrypt_uid(&ks.tpk, &p, &Scalar::random_nonzero(&mut r));
            let oracle = ct.c2 - ct.c1 * secret;
            let a = (r.next_u32() % 3) as usize;
            let b = (a + 1 + (r.next_u32() % 2) as usize) % 3;
            let ds: Vec<_> = [a, b].iter().map(|&i| partial_decrypt(&ks, &shares[i], &ct).unwrap()).collect();
            assert_eq!(combine(&ks, &ct, &ds).unwrap(), oracle);
            assert_eq!(oracle, p);
        }
    }

    #[test]
    fn combine_error_paths() {
        let mut r = rng();
        let (ks, shares) = keygen(2, 3, &mut r).unwrap();
        let p = GroupElement::mul_base(&Scalar::random(&mut r));
        let ct = encrypt_uid(&ks.tpk, &p, &Scalar::random_nonzero(&mut r));
        let d0 = partial_decrypt(&ks, &shares[0], &ct).unwrap();
        let d1 = partial_decrypt(&ks, &shares[1], &ct).unwrap();
        assert_eq!(combine(&ks, &ct, &[d0]), Err(ThresholdError::BelowThreshold { got: 1, need: 2 }));
        assert_eq!(combine(&ks, &ct, &[d0, d0]), Err(ThresholdError::DuplicateIndex(1)));
        let mut bad = d1;
        bad.value += GroupElement::generator();
        assert_eq!(combine(&ks, &ct, &[d0, bad]), Err(ThresholdError::BadShareProof(2)));
        assert_eq!(combine(&ks, &ct, &[d0, d1]).unwrap(), p);
    }

    #[test]
    fn below_threshold_is_underdetermined() {
        // two completions of a (t-1)-share set consistent with the same
        // Feldman-free view reconstruct different values
        let mut r = rng();
        let (ks, shares) = keygen(3, 5, &mut r).unwrap();
        let p = GroupElement::mul_base(&Scalar::random(&mut r));
        let ct = encrypt_uid(&ks.tpk, &p, &Scalar::random_nonzero(&mut r));
        let known: Vec<_> = shares[..2].iter().map(|s| (s.index, ct.c1 * s.secret)).collect();
        let guess = |g: Scalar| {
            let mut c = known.clone();
            c.push((3, ct.c1 * g));
            combine_unchecked(&ct, &c)
        };
        assert_ne!(guess(Scalar::from_u64(1)), guess(Scalar::from_u64(2)));
    }

    #[test]
    fn share_encoding_round_trips() {
        let s = AuthorityShare { index: 7, secret: Scalar::from_u64(1234) };
        assert_eq!(AuthorityShare::decode(&s.encode()).unwrap(), s);
        assert!(AuthorityShare::decode(&s.encode()[..20]).is_err());
    }
}
