//! Post-submission fee bump: re-sign a pending purchase with less change.

use thiserror::Error;

use crate::ledger::keys::split_witness;
use crate::ledger::{Amount, SecretKey, SigHashMode, Transaction, TxId, UtxoSet, Verifier};
use crate::mempool::{FeeRate, Mempool, SubmitResult};
use crate::psbt::{create_psbt, finalize_psbt, sign_psbt, InputSpec, PsbtError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BumpError {
    #[error("{0} is not in the mempool")]
    NotFound(TxId),
    #[error("transaction is not funded by the signer")]
    NotOwner,
    #[error("{new} sat/vB does not beat {current}")]
    RateNotHigher { new: u64, current: FeeRate },
    #[error("change cannot cover the new fee")]
    InsufficientChange,
    #[error(transparent)]
    Psbt(#[from] PsbtError),
}

/// Replaces pending `txid` with a copy paying `new_rate` sat/vB, taken from
/// the signer's change (the last output paying the signer). Inputs the
/// signer does not own keep their original witness records, which must not
/// commit to the change. Returns the replacement and its admission result.
pub fn bump_fee(
    pool: &mut Mempool,
    utxos: &UtxoSet,
    txid: &TxId,
    new_rate: u64,
    signer: &SecretKey,
    verifier: &dyn Verifier,
) -> Result<(Transaction, SubmitResult), BumpError> {
    let entry = pool.get(txid).ok_or(BumpError::NotFound(*txid))?;
    let old = entry.tx.clone();
    let me = signer.address();
    let funder = old
        .inputs
        .first()
        .and_then(|i| utxos.get(&i.outpoint))
        .and_then(|e| e.address().cloned());
    if funder.as_ref() != Some(&me) {
        return Err(BumpError::NotOwner);
    }
    let current = pool
        .conflicts_of(&old)
        .iter()
        .filter_map(|id| pool.get(id))
        .map(|e| e.fee_rate)
        .max()
        .unwrap_or(entry.fee_rate);
    let change_index = old
        .outputs
        .iter()
        .rposition(|o| o.script.address() == Some(&me))
        .ok_or(BumpError::InsufficientChange)?;

    let mut specs = Vec::with_capacity(old.inputs.len());
    for input in &old.inputs {
        let utxo = utxos
            .get(&input.outpoint)
            .cloned()
            .ok_or(BumpError::NotFound(*txid))?;
        let mode = SigHashMode::from_unlock(&input.unlock).unwrap_or(SigHashMode::All);
        specs.push(InputSpec::new(input.outpoint, utxo).with_sighash(mode));
    }
    let mut psbt = create_psbt(specs, old.outputs.clone())?;
    for (i, input) in old.inputs.iter().enumerate() {
        psbt.inputs[i].input.sequence = input.sequence;
        if psbt.inputs[i].required_signer == me {
            continue;
        }
        let (sig, extra) = old
            .witness
            .get(i)
            .and_then(|rec| split_witness(rec))
            .ok_or(BumpError::NotOwner)?;
        let signer_addr = psbt.inputs[i].required_signer.clone();
        psbt.add_signature(i, &signer_addr, sig, extra.to_vec(), verifier)?;
    }

    let vsize = psbt.estimated_vsize();
    let target = FeeRate::sat_per_vb(new_rate);
    if target <= current {
        return Err(BumpError::RateNotHigher {
            new: new_rate,
            current,
        });
    }
    let new_fee =
        Amount::from_sat(new_rate.saturating_mul(vsize)).ok_or(BumpError::InsufficientChange)?;
    let old_fee = entry.fee;
    let extra = new_fee.checked_sub(old_fee).unwrap_or(Amount::ZERO);
    let change = &mut psbt.outputs[change_index].output.amount;
    *change = change
        .checked_sub(extra)
        .ok_or(BumpError::InsufficientChange)?;
    let (signed, _) = sign_psbt(&psbt, signer);
    // a foreign signature that committed to the change is now stale
    let tx = finalize_psbt(&signed).map_err(|_| BumpError::NotOwner)?;
    let result = pool.submit(tx.clone(), utxos, verifier);
    Ok((tx, result))
}
