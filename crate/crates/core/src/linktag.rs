//! Auditor-only linkability.
//!
//! Every user has a stable pseudonym `L = x·J`. Each tag carries a fresh
//! ElGamal encryption `(s·G, L + s·apk)` of it under the auditor key. Without
//! `ask` the ciphertexts of one user are indistinguishable from those of
//! different users (DDH); with `ask` the pseudonym is recovered exactly.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::algebra::{generators, GroupElement, Scalar};
use crate::codec::{CodecError, Reader, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("link encryption randomness must be nonzero")]
    ZeroRandomness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EtKeypair {
    pub apk: GroupElement,
    pub ask: Scalar,
}

pub fn et_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> EtKeypair {
    let ask = Scalar::random_nonzero(rng);
    EtKeypair { apk: GroupElement::mul_base(&ask), ask }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LinkCiphertext {
    pub c1: GroupElement,
    pub c2: GroupElement,
}

impl LinkCiphertext {
    pub fn write(&self, w: &mut Writer) {
        w.element(&self.c1).element(&self.c2);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(LinkCiphertext { c1: r.element()?, c2: r.element()? })
    }
}

/// The stable per-identity group element recovered under the trapdoor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LinkPseudonym(pub GroupElement);

impl LinkPseudonym {
    pub fn of_identity(x: &Scalar) -> Self {
        LinkPseudonym(generators().mul_j(x))
    }
}

pub fn encrypt_link(apk: &GroupElement, x: &Scalar, s: &Scalar) -> Result<LinkCiphertext, LinkError> {
    if s.is_zero() {
        return Err(LinkError::ZeroRandomness);
    }
    Ok(LinkCiphertext {
        c1: GroupElement::mul_base(s),
        c2: generators().mul_j(x) + *apk * *s,
    })
}

pub fn extract_pseudonym(ask: &Scalar, ct: &LinkCiphertext) -> LinkPseudonym {
    LinkPseudonym(ct.c2 - ct.c1 * *ask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Equality {
    Equal,
    Unequal,
}

/// Pairwise trapdoor test: `c2_a − c2_b = ask·(c1_a − c1_b)`.
pub fn equality_test(ask: &Scalar, a: &LinkCiphertext, b: &LinkCiphertext) -> Equality {
    if a.c2 - b.c2 == (a.c1 - b.c1) * *ask {
        Equality::Equal
    } else {
        Equality::Unequal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn keygen_examples() {
        let kp = et_keygen(&mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(kp.apk, GroupElement::mul_base(&kp.ask));
        assert_eq!(kp, et_keygen(&mut ChaCha20Rng::seed_from_u64(1)));
        assert_ne!(kp, et_keygen(&mut ChaCha20Rng::seed_from_u64(2)));
    }

    #[test]
    fn encryption_examples() {
        let mut r = ChaCha20Rng::seed_from_u64(5);
        let kp = et_keygen(&mut r);
        let x = Scalar::random_nonzero(&mut r);
        let a = encrypt_link(&kp.apk, &x, &Scalar::from_u64(10)).unwrap();
        let b = encrypt_link(&kp.apk, &x, &Scalar::from_u64(11)).unwrap();
        assert_ne!(a.c1, b.c1);
        assert_ne!(a.c2, b.c2);
        assert_eq!(extract_pseudonym(&kp.ask, &a), LinkPseudonym(generators().j * x));
        assert_eq!(extract_pseudonym(&kp.ask, &a), extract_pseudonym(&kp.ask, &b));
        assert_ne!(extract_pseudonym(&(kp.ask + Scalar::ONE), &a), LinkPseudonym::of_identity(&x));
        assert_eq!(encrypt_link(&kp.apk, &x, &Scalar::ZERO), Err(LinkError::ZeroRandomness));
    }

    #[test]
    fn equality_examples() {
        let mut r = ChaCha20Rng::seed_from_u64(6);
        let kp = et_keygen(&mut r);
        let x1 = Scalar::random_nonzero(&mut r);
        let x2 = Scalar::random_nonzero(&mut r);
        let a = encrypt_link(&kp.apk, &x1, &Scalar::random_nonzero(&mut r)).unwrap();
        let b = encrypt_link(&kp.apk, &x1, &Scalar::random_nonzero(&mut r)).unwrap();
        let c = encrypt_link(&kp.apk, &x2, &Scalar::random_nonzero(&mut r)).unwrap();
        assert_eq!(equality_test(&kp.ask, &a, &b), Equality::Equal);
        assert_eq!(equality_test(&kp.ask, &a, &c), Equality::Unequal);
        assert_eq!(equality_test(&kp.ask, &a, &a), Equality::Equal);
    }

    #[test]
    fn equality_is_an_equivalence_relation() {
        let mut r = ChaCha20Rng::seed_from_u64(8);
        let kp = et_keygen(&mut r);
        let ids: Vec<Scalar> = (0..3).map(|_| Scalar::random_nonzero(&mut r)).collect();
        for _ in 0..1000 {
            let mut pick = || {
                let x = ids[(r.next_u32() % 3) as usize];
                (x, encrypt_link(&kp.apk, &x, &Scalar::random_nonzero(&mut r)).unwrap())
            };
            let (xa, a) = pick();
            let (xb, b) = pick();
            let (xc, c) = pick();
            let eq = |u, v| equality_test(&kp.ask, u, v) == Equality::Equal;
            assert!(eq(&a, &a));
            assert_eq!(eq(&a, &b), eq(&b, &a));
            if eq(&a, &b) && eq(&b, &c) {
                assert!(eq(&a, &c));
            }
            // exact agreement with identity ground truth
            assert_eq!(eq(&a, &b), xa == xb);
            assert_eq!(eq(&b, &c), xb == xc);
        }
    }
}
