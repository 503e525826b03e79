//! Commitment-based fee lock.
//!
//! The seller commits to a maximum fee `f_max` with
//! `digest = SHA256d(f_max as 8 bytes BE ‖ nonce)` and places
//! `"FLCK" ‖ digest` in a zero-amount data output inside the signed sale
//! prefix. At finalization the seller's witness record for the sale input
//! gains `"FLRV" ‖ f_max ‖ nonce`. Admission then checks the reveal against
//! the digest and the transaction fee against `f_max`.

use thiserror::Error;

use crate::ledger::keys::split_witness;
use crate::ledger::{
    compute_fee, sha256d, Amount, Script, Transaction, TxError, TxOutput, UtxoSet,
};

pub const LOCK_TAG: &[u8; 4] = b"FLCK";
pub const REVEAL_TAG: &[u8; 4] = b"FLRV";
const REVEAL_LEN: usize = 4 + 8 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeeCommitment {
    pub digest: [u8; 32],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeeReveal {
    pub f_max: Amount,
    pub nonce: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeeLockError {
    #[error("fee lock reveal missing or does not match the commitment")]
    BadCommitment,
    #[error("fee {fee} exceeds the locked maximum {f_max}")]
    FeeExceedsLock { fee: Amount, f_max: Amount },
    #[error("fee cannot be computed: {0}")]
    Fee(TxError),
}

pub fn commit_fee(f_max: Amount, nonce: [u8; 32]) -> FeeCommitment {
    FeeCommitment {
        digest: FeeReveal { f_max, nonce }.digest(),
    }
}

impl FeeReveal {
    pub fn digest(&self) -> [u8; 32] {
        let mut preimage = [0u8; 40];
        preimage[..8].copy_from_slice(&self.f_max.to_sat().to_be_bytes());
        preimage[8..].copy_from_slice(&self.nonce);
        sha256d(&preimage)
    }

    pub fn commitment(&self) -> FeeCommitment {
        FeeCommitment {
            digest: self.digest(),
        }
    }

    /// Witness extension carrying this reveal.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(REVEAL_LEN);
        out.extend_from_slice(REVEAL_TAG);
        out.extend_from_slice(&self.f_max.to_sat().to_be_bytes());
        out.extend_from_slice(&self.nonce);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<FeeReveal> {
        if bytes.len() != REVEAL_LEN || &bytes[..4] != REVEAL_TAG {
            return None;
        }
        let f_max = Amount::from_sat(u64::from_be_bytes(bytes[4..12].try_into().ok()?))?;
        Some(FeeReveal {
            f_max,
            nonce: bytes[12..].try_into().ok()?,
        })
    }
}

impl FeeCommitment {
    pub fn opens_to(&self, reveal: &FeeReveal) -> bool {
        reveal.digest() == self.digest
    }

    /// The zero-amount output that carries this commitment.
    pub fn to_output(&self) -> TxOutput {
        let mut data = LOCK_TAG.to_vec();
        data.extend_from_slice(&self.digest);
        TxOutput::data(data)
    }

    pub fn from_script(script: &Script) -> Option<FeeCommitment> {
        let data = script.data()?;
        let digest = data.strip_prefix(LOCK_TAG.as_slice())?;
        Some(FeeCommitment {
            digest: digest.try_into().ok()?,
        })
    }
}

/// Every fee-lock commitment output in `tx`.
pub fn find_fee_locks(tx: &Transaction) -> Vec<FeeCommitment> {
    tx.outputs
        .iter()
        .filter_map(|o| FeeCommitment::from_script(&o.script))
        .collect()
}

/// Every reveal carried in `tx`'s witness records.
pub fn find_reveals(tx: &Transaction) -> Vec<FeeReveal> {
    tx.witness
        .iter()
        .filter_map(|rec| split_witness(rec))
        .filter_map(|(_, ext)| FeeReveal::from_bytes(ext))
        .collect()
}

/// Checks one commitment against its reveal and the fee `tx` pays.
pub fn verify_fee_lock(
    tx: &Transaction,
    commitment: &FeeCommitment,
    reveal: &FeeReveal,
    utxos: &UtxoSet,
) -> Result<(), FeeLockError> {
    if !commitment.opens_to(reveal) {
        return Err(FeeLockError::BadCommitment);
    }
    let fee = compute_fee(tx, utxos).map_err(FeeLockError::Fee)?;
    check_cap(fee, reveal)
}

fn check_cap(fee: Amount, reveal: &FeeReveal) -> Result<(), FeeLockError> {
    if fee > reveal.f_max {
        Err(FeeLockError::FeeExceedsLock {
            fee,
            f_max: reveal.f_max,
        })
    } else {
        Ok(())
    }
}

/// Admission check: every commitment in `tx` needs a matching reveal in its
/// witness, and `fee` may not exceed any revealed cap. Transactions without
/// a commitment pass.
pub fn check_fee_locks(tx: &Transaction, fee: Amount) -> Result<(), FeeLockError> {
    let reveals = find_reveals(tx);
    for commitment in find_fee_locks(tx) {
        let reveal = reveals
            .iter()
            .find(|r| commitment.opens_to(r))
            .ok_or(FeeLockError::BadCommitment)?;
        check_cap(fee, reveal)?;
    }
    Ok(())
}
