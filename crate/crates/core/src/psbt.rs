//! Partially signed transactions: creation, signature collection, finalization.
//!
//! Each input has exactly one required signer, the owner of the output it
//! spends. Stored signatures remember the digest of the message they signed,
//! so editing the skeleton after signing silently invalidates stale ones
//! instead of producing a transaction that fails validation later.
//!
//! Text form: `"psbt1:" ‖ base64(serialize(skeleton) ‖ varint n ‖ n × [varint
//! input index ‖ 32-byte signer key hash ‖ 32-byte signature])`. UTXO context
//! and witness extensions are not part of the text form; [`Psbt::from_text`]
//! recovers context from a UTXO set.

use std::collections::{BTreeMap, BTreeSet};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

use crate::ledger::keys::{signature_message, SIGNATURE_LEN};
use crate::ledger::{
    serialize, sha256, write_varint, Address, Amount, DecodeError, OutPoint, Reader, SecretKey,
    SigHashMode, Signature, Transaction, TxInput, TxOutput, UtxoEntry, UtxoSet, Verifier,
};

pub const TEXT_PREFIX: &str = "psbt1:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PsbtError {
    #[error("a psbt needs at least one input")]
    EmptyInputs,
    #[error("input {index} repeats an earlier outpoint")]
    DuplicateInput { index: usize },
    #[error("input {index} spends an output with no address")]
    Unspendable { index: usize },
    #[error("inputs {0:?} are not signed")]
    Incomplete(Vec<usize>),
    #[error("no input {0}")]
    NoSuchInput(usize),
    #[error("signature on input {index} does not verify for {signer}")]
    InvalidSignature { index: usize, signer: Address },
    #[error("input {index} must be signed by its lock owner, not {signer}")]
    WrongSigner { index: usize, signer: Address },
    #[error("signer {0} is not a key-derived address")]
    NonKeyAddress(Address),
    #[error("malformed psbt text: {0}")]
    Malformed(String),
    #[error("no utxo context for input {index}")]
    MissingContext { index: usize },
}

impl From<DecodeError> for PsbtError {
    fn from(e: DecodeError) -> Self {
        PsbtError::Malformed(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSig {
    pub signature: Signature,
    message_digest: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsbtInput {
    /// The input as it will appear in the final transaction; `unlock` holds
    /// the signature-hash mode.
    pub input: TxInput,
    pub utxo: UtxoEntry,
    pub required_signer: Address,
    pub partial_sigs: BTreeMap<Address, PartialSig>,
    /// Bytes appended after the signature in the final witness record.
    pub witness_extra: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsbtOutput {
    pub output: TxOutput,
    /// Opaque script metadata, carried but never interpreted.
    pub aux: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Psbt {
    pub inputs: Vec<PsbtInput>,
    pub outputs: Vec<PsbtOutput>,
}

/// One input to [`create_psbt`].
#[derive(Debug, Clone)]
pub struct InputSpec {
    pub outpoint: OutPoint,
    pub utxo: UtxoEntry,
    pub sighash: SigHashMode,
}

impl InputSpec {
    pub fn new(outpoint: OutPoint, utxo: UtxoEntry) -> InputSpec {
        InputSpec {
            outpoint,
            utxo,
            sighash: SigHashMode::All,
        }
    }

    pub fn with_sighash(mut self, mode: SigHashMode) -> InputSpec {
        self.sighash = mode;
        self
    }
}

pub fn create_psbt(inputs: Vec<InputSpec>, outputs: Vec<TxOutput>) -> Result<Psbt, PsbtError> {
    if inputs.is_empty() {
        return Err(PsbtError::EmptyInputs);
    }
    let mut seen = BTreeSet::new();
    let mut psbt_inputs = Vec::with_capacity(inputs.len());
    for (index, spec) in inputs.into_iter().enumerate() {
        if !seen.insert(spec.outpoint) {
            return Err(PsbtError::DuplicateInput { index });
        }
        let required_signer = spec
            .utxo
            .address()
            .cloned()
            .ok_or(PsbtError::Unspendable { index })?;
        let mut input = TxInput::new(spec.outpoint);
        input.unlock = spec.sighash.to_unlock();
        psbt_inputs.push(PsbtInput {
            input,
            utxo: spec.utxo,
            required_signer,
            partial_sigs: BTreeMap::new(),
            witness_extra: Vec::new(),
        });
    }
    Ok(Psbt {
        inputs: psbt_inputs,
        outputs: outputs
            .into_iter()
            .map(|output| PsbtOutput {
                output,
                aux: Vec::new(),
            })
            .collect(),
    })
}

impl Psbt {
    /// The unsigned transaction.
    pub fn skeleton(&self) -> Transaction {
        Transaction {
            inputs: self.inputs.iter().map(|i| i.input.clone()).collect(),
            outputs: self.outputs.iter().map(|o| o.output.clone()).collect(),
            witness: Vec::new(),
        }
    }

    fn message_digest(&self, skeleton: &Transaction, index: usize) -> Option<[u8; 32]> {
        signature_message(skeleton, index).map(|m| sha256(&m))
    }

    /// The required signer's signature on input `index`, if it is current.
    pub fn valid_signature(&self, index: usize) -> Option<Signature> {
        let input = self.inputs.get(index)?;
        let sig = input.partial_sigs.get(&input.required_signer)?;
        let digest = self.message_digest(&self.skeleton(), index)?;
        (sig.message_digest == digest).then_some(sig.signature)
    }

    pub fn unsigned_inputs(&self) -> Vec<usize> {
        (0..self.inputs.len())
            .filter(|&i| self.valid_signature(i).is_none())
            .collect()
    }

    /// Size of the finalized transaction. Exact, since every signature is
    /// `SIGNATURE_LEN` bytes.
    pub fn estimated_vsize(&self) -> u64 {
        let mut tx = self.skeleton();
        tx.witness = self
            .inputs
            .iter()
            .map(|i| vec![0u8; SIGNATURE_LEN + i.witness_extra.len()])
            .collect();
        tx.vsize()
    }

    pub fn total_input(&self) -> Amount {
        Amount::checked_sum(self.inputs.iter().map(|i| i.utxo.amount)).expect("input overflow")
    }

    /// Fee implied by the UTXO context, `None` if outputs exceed inputs.
    pub fn fee(&self) -> Option<Amount> {
        self.total_input()
            .checked_sub(self.skeleton().total_output())
    }

    /// Stores a signature produced elsewhere after checking it.
    pub fn add_signature(
        &mut self,
        index: usize,
        signer: &Address,
        signature: Signature,
        witness_extra: Vec<u8>,
        verifier: &dyn Verifier,
    ) -> Result<(), PsbtError> {
        let skeleton = self.skeleton();
        let input = self
            .inputs
            .get(index)
            .ok_or(PsbtError::NoSuchInput(index))?;
        if signer != &input.required_signer {
            return Err(PsbtError::WrongSigner {
                index,
                signer: signer.clone(),
            });
        }
        let message =
            signature_message(&skeleton, index).ok_or_else(|| PsbtError::InvalidSignature {
                index,
                signer: signer.clone(),
            })?;
        if !verifier.verify(signer, &message, &signature) {
            return Err(PsbtError::InvalidSignature {
                index,
                signer: signer.clone(),
            });
        }
        let input = &mut self.inputs[index];
        input.partial_sigs.insert(
            signer.clone(),
            PartialSig {
                signature,
                message_digest: sha256(&message),
            },
        );
        input.witness_extra = witness_extra;
        Ok(())
    }

    pub fn to_text(&self) -> Result<String, PsbtError> {
        let mut body = serialize(&self.skeleton());
        let mut sigs = Vec::new();
        for (index, input) in self.inputs.iter().enumerate() {
            for (signer, sig) in &input.partial_sigs {
                let hash = signer
                    .key_hash()
                    .ok_or_else(|| PsbtError::NonKeyAddress(signer.clone()))?;
                sigs.push((index, hash, sig.signature));
            }
        }
        write_varint(&mut body, sigs.len() as u64);
        for (index, hash, sig) in sigs {
            write_varint(&mut body, index as u64);
            body.extend_from_slice(&hash);
            body.extend_from_slice(&sig.0);
        }
        Ok(format!("{TEXT_PREFIX}{}", STANDARD.encode(body)))
    }

    /// Parses the text form, taking UTXO context from `utxos` and verifying
    /// every carried signature.
    pub fn from_text(
        text: &str,
        utxos: &UtxoSet,
        verifier: &dyn Verifier,
    ) -> Result<Psbt, PsbtError> {
        let b64 = text
            .strip_prefix(TEXT_PREFIX)
            .ok_or_else(|| PsbtError::Malformed("missing psbt1: prefix".into()))?;
        let bytes = STANDARD
            .decode(b64)
            .map_err(|e| PsbtError::Malformed(e.to_string()))?;
        let mut r = Reader::new(&bytes);
        let skeleton = r.transaction()?;
        if !skeleton.witness.is_empty() {
            return Err(PsbtError::Malformed("skeleton carries witness data".into()));
        }
        let mut specs = Vec::with_capacity(skeleton.inputs.len());
        for (index, input) in skeleton.inputs.iter().enumerate() {
            let utxo = utxos
                .get(&input.outpoint)
                .cloned()
                .ok_or(PsbtError::MissingContext { index })?;
            let sighash = SigHashMode::from_unlock(&input.unlock).ok_or_else(|| {
                PsbtError::Malformed(format!("input {index} has no sighash mode"))
            })?;
            specs.push(InputSpec {
                outpoint: input.outpoint,
                utxo,
                sighash,
            });
        }
        let mut psbt = create_psbt(specs, skeleton.outputs.clone())?;
        for (i, input) in skeleton.inputs.iter().enumerate() {
            psbt.inputs[i].input.sequence = input.sequence;
        }
        let n = r.count()?;
        for _ in 0..n {
            let index = r.varint()? as usize;
            let hash: [u8; 32] = r.array()?;
            let sig: [u8; SIGNATURE_LEN] = r.array()?;
            let signer = Address::from_key_hash(&hash);
            psbt.add_signature(index, &signer, Signature(sig), Vec::new(), verifier)?;
        }
        if r.remaining() != 0 {
            return Err(PsbtError::Malformed(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        Ok(psbt)
    }
}

/// Signs every input whose required signer is `key`. Returns the updated
/// PSBT and whether it is now complete.
pub fn sign_psbt(psbt: &Psbt, key: &SecretKey) -> (Psbt, bool) {
    let mut out = psbt.clone();
    let address = key.address();
    let skeleton = psbt.skeleton();
    for (index, input) in out.inputs.iter_mut().enumerate() {
        if input.required_signer != address {
            continue;
        }
        if let Some(message) = signature_message(&skeleton, index) {
            input.partial_sigs.insert(
                address.clone(),
                PartialSig {
                    signature: key.sign(&message),
                    message_digest: sha256(&message),
                },
            );
        }
    }
    let complete = is_complete(&out);
    (out, complete)
}

pub fn is_complete(psbt: &Psbt) -> bool {
    psbt.unsigned_inputs().is_empty()
}

/// Embeds each input's signature (plus any witness extension) into the
/// witness and returns the broadcastable transaction.
pub fn finalize_psbt(psbt: &Psbt) -> Result<Transaction, PsbtError> {
    let unsigned = psbt.unsigned_inputs();
    if !unsigned.is_empty() {
        return Err(PsbtError::Incomplete(unsigned));
    }
    let mut tx = psbt.skeleton();
    tx.witness = psbt
        .inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let sig = psbt.valid_signature(i).expect("checked complete");
            let mut record = sig.0.to_vec();
            record.extend_from_slice(&input.witness_extra);
            record
        })
        .collect();
    Ok(tx)
}
