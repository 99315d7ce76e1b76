//! Cross-chain auditing with auditor-only linkability.
//!
//! Layers, bottom up:
//!
//! * [`algebra`], [`codec`]: group arithmetic, hashing and canonical bytes.
//! * [`nizk`], [`threshold`], [`linktag`]: commitments and sigma proofs,
//!   threshold identity escrow, the auditor's link ciphertexts.
//! * [`chainsim`]: deterministic multi-chain simulator with bridge and audit ledger.
//! * [`protocols`]: anonymous identity setup, tag construction, identity revelation.
//! * [`auditor`]: pseudonym clustering and ARI/NMI scoring.
//! * [`scenario`]: end-to-end workload driver used by benchmarks and tests.
//! * [`adversary`]: attack batteries against the assembled system.

pub mod algebra;
pub mod codec;
pub mod linktag;
pub mod nizk;
pub mod threshold;
pub mod chainsim;
pub mod protocols;
pub mod auditor;
pub mod scenario;
pub mod adversary;
