//! Transaction model and its canonical byte layout.
//!
//! ```text
//! u16 version (=2, BE)
//! varint n_in  { [32] txid | u32 vout BE | varint len | unlock | u32 sequence BE }
//! varint n_out { u64 amount BE | u8 kind (0 address, 1 data) | varint len | bytes }
//! varint n_wit { varint len | bytes }
//! ```
//!
//! Varints are unsigned LEB128 and must be minimally encoded.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::amount::Amount;
use super::hash::{sha256d, Hash256, TxId};

pub const TX_VERSION: u16 = 2;

/// Sequence number that signals replaceability, the default for built txs.
pub const SEQUENCE_RBF: u32 = 0xffff_fffd;

/// A locking address. Simulated keys use the hex of SHA-256(secret), but any
/// non-empty string is a valid lock.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    pub fn new(s: impl Into<String>) -> Address {
        Address(s.into())
    }

    pub fn from_key_hash(hash: &[u8; 32]) -> Address {
        Address(hex::encode(hash))
    }

    /// The 32 raw bytes behind a key-derived address, if it is one.
    pub fn key_hash(&self) -> Option<[u8; 32]> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(&self.0, &mut out).ok()?;
        Some(out)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[self.0.len().saturating_sub(4)..]
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutPoint {
    pub txid: TxId,
    pub vout: u32,
}

impl OutPoint {
    pub fn new(txid: TxId, vout: u32) -> OutPoint {
        OutPoint { txid, vout }
    }
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TxInput {
    pub outpoint: OutPoint,
    /// Opaque unlock bytes. Built transactions carry the signature-hash mode here.
    pub unlock: Vec<u8>,
    pub sequence: u32,
}

impl TxInput {
    pub fn new(outpoint: OutPoint) -> TxInput {
        TxInput {
            outpoint,
            unlock: Vec::new(),
            sequence: SEQUENCE_RBF,
        }
    }
}

/// What an output is locked to.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Script {
    Address(Address),
    /// Unspendable data carrier (inscription payloads, fee-lock commitments).
    Data(Vec<u8>),
}

impl Script {
    pub fn address(&self) -> Option<&Address> {
        match self {
            Script::Address(a) => Some(a),
            Script::Data(_) => None,
        }
    }

    pub fn data(&self) -> Option<&[u8]> {
        match self {
            Script::Address(_) => None,
            Script::Data(d) => Some(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TxOutput {
    pub amount: Amount,
    pub script: Script,
}

impl TxOutput {
    pub fn pay(address: Address, amount: Amount) -> TxOutput {
        TxOutput {
            amount,
            script: Script::Address(address),
        }
    }

    pub fn data(bytes: Vec<u8>) -> TxOutput {
        TxOutput {
            amount: Amount::ZERO,
            script: Script::Data(bytes),
        }
    }

    pub fn is_data(&self) -> bool {
        matches!(self.script, Script::Data(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Transaction {
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    /// One opaque record per input once finalized; empty on skeletons.
    pub witness: Vec<Vec<u8>>,
}

impl Transaction {
    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn txid(&self) -> TxId {
        compute_txid(self)
    }

    pub fn vsize(&self) -> u64 {
        vsize(self)
    }

    pub fn total_output(&self) -> Amount {
        Amount::checked_sum(self.outputs.iter().map(|o| o.amount)).expect("output sum overflow")
    }

    pub fn spends(&self, outpoint: &OutPoint) -> bool {
        self.inputs.iter().any(|i| &i.outpoint == outpoint)
    }

    /// Same transaction with every witness record removed.
    pub fn without_witness(&self) -> Transaction {
        Transaction {
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            witness: Vec::new(),
        }
    }

    /// Structural checks that need no chain context.
    pub fn check_structure(&self) -> Result<(), StructureError> {
        if self.outputs.is_empty() {
            return Err(StructureError::NoOutputs);
        }
        if !self.witness.is_empty() && self.witness.len() != self.inputs.len() {
            return Err(StructureError::WitnessCount {
                inputs: self.inputs.len(),
                witness: self.witness.len(),
            });
        }
        for (index, out) in self.outputs.iter().enumerate() {
            match &out.script {
                Script::Data(_) if out.amount != Amount::ZERO => {
                    return Err(StructureError::FundedDataOutput { index })
                }
                Script::Address(a) if a.as_str().is_empty() => {
                    return Err(StructureError::EmptyAddress { index })
                }
                _ => {}
            }
        }
        Amount::checked_sum(self.outputs.iter().map(|o| o.amount))
            .ok_or(StructureError::OutputOverflow)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("transaction has no outputs")]
    NoOutputs,
    #[error("{witness} witness records for {inputs} inputs")]
    WitnessCount { inputs: usize, witness: usize },
    #[error("data output {index} carries a nonzero amount")]
    FundedDataOutput { index: usize },
    #[error("output {index} has an empty address")]
    EmptyAddress { index: usize },
    #[error("output total exceeds the money supply")]
    OutputOverflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("varint is not minimally encoded or overflows")]
    BadVarint,
    #[error("unknown output kind {0}")]
    OutputKind(u8),
    #[error("amount out of range")]
    AmountRange,
    #[error("address is not valid utf-8")]
    AddressUtf8,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

pub(crate) fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub(crate) fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    write_varint(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

pub(crate) fn write_outpoint(out: &mut Vec<u8>, op: &OutPoint) {
    out.extend_from_slice(op.txid.as_bytes());
    out.extend_from_slice(&op.vout.to_be_bytes());
}

pub(crate) fn write_output(out: &mut Vec<u8>, o: &TxOutput) {
    out.extend_from_slice(&o.amount.to_sat().to_be_bytes());
    match &o.script {
        Script::Address(a) => {
            out.push(0);
            write_bytes(out, a.as_str().as_bytes());
        }
        Script::Data(d) => {
            out.push(1);
            write_bytes(out, d);
        }
    }
}

/// Canonical serialization.
pub fn serialize(tx: &Transaction) -> Vec<u8> {
    let mut out = Vec::with_capacity(128);
    out.extend_from_slice(&TX_VERSION.to_be_bytes());
    write_varint(&mut out, tx.inputs.len() as u64);
    for input in &tx.inputs {
        write_outpoint(&mut out, &input.outpoint);
        write_bytes(&mut out, &input.unlock);
        out.extend_from_slice(&input.sequence.to_be_bytes());
    }
    write_varint(&mut out, tx.outputs.len() as u64);
    for o in &tx.outputs {
        write_output(&mut out, o);
    }
    write_varint(&mut out, tx.witness.len() as u64);
    for w in &tx.witness {
        write_bytes(&mut out, w);
    }
    out
}

pub fn compute_txid(tx: &Transaction) -> TxId {
    TxId(Hash256(sha256d(&serialize(tx))))
}

/// Virtual size: the raw serialized length (no witness discount).
pub fn vsize(tx: &Transaction) -> u64 {
    serialize(tx).len() as u64
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let slice = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn varint(&mut self) -> Result<u64, DecodeError> {
        let mut value: u64 = 0;
        for shift in (0..64).step_by(7) {
            let byte = self.take(1)?[0];
            let bits = u64::from(byte & 0x7f);
            if shift == 63 && bits > 1 {
                return Err(DecodeError::BadVarint);
            }
            value |= bits << shift;
            if byte & 0x80 == 0 {
                // a zero final byte after the first is a padded encoding
                if byte == 0 && shift > 0 {
                    return Err(DecodeError::BadVarint);
                }
                return Ok(value);
            }
        }
        Err(DecodeError::BadVarint)
    }

    pub(crate) fn len_prefixed(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.varint()?;
        let len = usize::try_from(len).map_err(|_| DecodeError::Truncated)?;
        self.take(len)
    }

    pub(crate) fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.varint()?;
        // every element takes at least one byte
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(DecodeError::Truncated);
        }
        Ok(n as usize)
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn transaction(&mut self) -> Result<Transaction, DecodeError> {
        let version = u16::from_be_bytes(self.array()?);
        if version != TX_VERSION {
            return Err(DecodeError::Version(version));
        }
        let n_in = self.count()?;
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            let txid = TxId(Hash256(self.array()?));
            let vout = u32::from_be_bytes(self.array()?);
            let unlock = self.len_prefixed()?.to_vec();
            let sequence = u32::from_be_bytes(self.array()?);
            inputs.push(TxInput {
                outpoint: OutPoint { txid, vout },
                unlock,
                sequence,
            });
        }
        let n_out = self.count()?;
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let amount = Amount::from_sat(u64::from_be_bytes(self.array()?))
                .ok_or(DecodeError::AmountRange)?;
            let kind = self.take(1)?[0];
            let body = self.len_prefixed()?;
            let script = match kind {
                0 => Script::Address(Address::new(
                    std::str::from_utf8(body).map_err(|_| DecodeError::AddressUtf8)?,
                )),
                1 => Script::Data(body.to_vec()),
                k => return Err(DecodeError::OutputKind(k)),
            };
            outputs.push(TxOutput { amount, script });
        }
        let n_wit = self.count()?;
        let mut witness = Vec::with_capacity(n_wit);
        for _ in 0..n_wit {
            witness.push(self.len_prefixed()?.to_vec());
        }
        let tx = Transaction {
            inputs,
            outputs,
            witness,
        };
        tx.check_structure()?;
        Ok(tx)
    }
}

/// Inverse of [`serialize`]; rejects trailing bytes and non-canonical varints.
pub fn deserialize(bytes: &[u8]) -> Result<Transaction, DecodeError> {
    let mut r = Reader::new(bytes);
    let tx = r.transaction()?;
    match r.remaining() {
        0 => Ok(tx),
        n => Err(DecodeError::Trailing(n)),
    }
}
