//! Simulated signing.
//!
//! A key is an opaque 32-byte secret whose address is the hex of
//! SHA-256(secret). A signature is SHA-256(secret ‖ message). Verifying one
//! means recomputing it, so verification goes through a [`Verifier`] that
//! knows the secrets behind addresses (the [`KeyRegistry`]).
//!
//! Each input names its signature-hash mode in its unlock bytes:
//!
//! * `[0x01]` signs the whole transaction without witness data.
//! * `[0x83, k]` signs only this input and the first `k` outputs, so anyone
//!   may add inputs and append outputs. Sellers use it to publish a sale that
//!   any buyer can complete.

use std::collections::BTreeMap;
use std::fmt;

use super::hash::sha256;
use super::tx::{serialize, write_bytes, write_outpoint, write_output, Address, Transaction};

pub const SIGHASH_ALL: u8 = 0x01;
pub const SIGHASH_SALE: u8 = 0x83;

/// Length of the signature at the front of every witness record.
pub const SIGNATURE_LEN: usize = 32;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> SecretKey {
        SecretKey(bytes)
    }

    pub fn address(&self) -> Address {
        Address::from_key_hash(&sha256(&self.0))
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        let mut buf = Vec::with_capacity(32 + message.len());
        buf.extend_from_slice(&self.0);
        buf.extend_from_slice(message);
        Signature(sha256(&buf))
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", self.address())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 32]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigHashMode {
    All,
    /// This input plus the first `n` outputs.
    SalePrefix(u8),
}

impl SigHashMode {
    pub fn to_unlock(self) -> Vec<u8> {
        match self {
            SigHashMode::All => vec![SIGHASH_ALL],
            SigHashMode::SalePrefix(n) => vec![SIGHASH_SALE, n],
        }
    }

    pub fn from_unlock(unlock: &[u8]) -> Option<SigHashMode> {
        match unlock {
            [SIGHASH_ALL] => Some(SigHashMode::All),
            [SIGHASH_SALE, n] => Some(SigHashMode::SalePrefix(*n)),
            _ => None,
        }
    }
}

/// The bytes a signature on input `index` commits to, or `None` if the
/// input's unlock bytes name no valid mode.
pub fn signature_message(tx: &Transaction, index: usize) -> Option<Vec<u8>> {
    let input = tx.inputs.get(index)?;
    match SigHashMode::from_unlock(&input.unlock)? {
        SigHashMode::All => Some(serialize(&tx.without_witness())),
        SigHashMode::SalePrefix(n) => {
            let n = usize::from(n);
            if n == 0 || n > tx.outputs.len() {
                return None;
            }
            let mut msg = b"sale".to_vec();
            write_outpoint(&mut msg, &input.outpoint);
            write_bytes(&mut msg, &input.unlock);
            msg.extend_from_slice(&input.sequence.to_be_bytes());
            for out in &tx.outputs[..n] {
                write_output(&mut msg, out);
            }
            Some(msg)
        }
    }
}

pub trait Verifier {
    fn verify(&self, address: &Address, message: &[u8], signature: &Signature) -> bool;
}

/// Address → secret directory standing in for public-key verification.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    keys: BTreeMap<Address, SecretKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: &SecretKey) -> Address {
        let address = key.address();
        self.keys.insert(address.clone(), key.clone());
        address
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.keys.contains_key(address)
    }
}

impl Verifier for KeyRegistry {
    fn verify(&self, address: &Address, message: &[u8], signature: &Signature) -> bool {
        self.keys
            .get(address)
            .is_some_and(|k| &k.sign(message) == signature)
    }
}

/// Splits a witness record into its signature and trailing extension bytes.
pub fn split_witness(record: &[u8]) -> Option<(Signature, &[u8])> {
    if record.len() < SIGNATURE_LEN {
        return None;
    }
    let (sig, rest) = record.split_at(SIGNATURE_LEN);
    Some((Signature(sig.try_into().expect("length checked")), rest))
}
