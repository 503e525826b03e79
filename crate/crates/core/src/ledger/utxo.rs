use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::amount::Amount;
use super::block::Block;
use super::hash::TxId;
use super::keys::{signature_message, split_witness, Verifier};
use super::tx::{Address, OutPoint, Script, StructureError, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UtxoEntry {
    pub amount: Amount,
    pub script: Script,
}

impl UtxoEntry {
    pub fn address(&self) -> Option<&Address> {
        self.script.address()
    }
}

/// Per-transaction validation failure. Input-level variants carry the input index.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("input {index} spends an unknown or spent outpoint")]
    MissingUtxo { index: usize },
    #[error("input {index} repeats an earlier outpoint")]
    DuplicateInput { index: usize },
    #[error("outputs exceed inputs")]
    NegativeFee,
    #[error("input {index} has no valid signature for its lock")]
    BadSignature { index: usize },
    #[error("input {index} spends a data-carrier output")]
    Unspendable { index: usize },
    #[error("input {index} is also spent by an earlier transaction in the block")]
    ConflictInBlock { index: usize },
    #[error("non-coinbase transaction without inputs")]
    NoInputs,
    #[error("output {vout} already exists in the utxo set")]
    DuplicateOutput { vout: u32 },
    #[error(transparent)]
    Structure(#[from] StructureError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("invalid block: transaction {position} ({txid}) failed: {reason}")]
    InvalidBlock {
        /// 0 is the coinbase, 1.. are the block's transactions in order.
        position: usize,
        txid: TxId,
        reason: TxError,
    },
}

/// The set of unspent outputs, ordered by outpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UtxoSet {
    entries: BTreeMap<OutPoint, UtxoEntry>,
}

impl UtxoSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, outpoint: &OutPoint) -> Option<&UtxoEntry> {
        self.entries.get(outpoint)
    }

    pub fn contains(&self, outpoint: &OutPoint) -> bool {
        self.entries.contains_key(outpoint)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutPoint, &UtxoEntry)> {
        self.entries.iter()
    }

    pub fn total_value(&self) -> Amount {
        Amount::checked_sum(self.entries.values().map(|e| e.amount)).expect("utxo value overflow")
    }

    /// Spendable (address-locked) outputs owned by `address`, in outpoint order.
    pub fn owned_by(&self, address: &Address) -> Vec<(OutPoint, UtxoEntry)> {
        self.entries
            .iter()
            .filter(|(_, e)| e.address() == Some(address))
            .map(|(op, e)| (*op, e.clone()))
            .collect()
    }

    pub fn balance_of(&self, address: &Address) -> Amount {
        Amount::checked_sum(self.owned_by(address).into_iter().map(|(_, e)| e.amount))
            .expect("balance overflow")
    }

    /// Adds every output of `tx`, failing if any already exists.
    fn add_outputs(&mut self, txid: TxId, tx: &Transaction) -> Result<(), TxError> {
        for vout in 0..tx.outputs.len() {
            let op = OutPoint::new(txid, vout as u32);
            if self.entries.contains_key(&op) {
                return Err(TxError::DuplicateOutput { vout: vout as u32 });
            }
        }
        for (vout, out) in tx.outputs.iter().enumerate() {
            self.entries.insert(
                OutPoint::new(txid, vout as u32),
                UtxoEntry {
                    amount: out.amount,
                    script: out.script.clone(),
                },
            );
        }
        Ok(())
    }

    /// Applies a block: `U' = U \ spent ∪ created`. Every spent outpoint must
    /// exist in the pre-block set and no two transactions may share one.
    pub fn apply_block(&self, block: &Block) -> Result<UtxoSet, BlockError> {
        let fail = |position: usize, tx: &Transaction, reason: TxError| BlockError::InvalidBlock {
            position,
            txid: tx.txid(),
            reason,
        };

        let mut spent: BTreeSet<OutPoint> = BTreeSet::new();
        for (i, tx) in block.txs.iter().enumerate() {
            let position = i + 1;
            if tx.is_coinbase() {
                return Err(fail(position, tx, TxError::NoInputs));
            }
            tx.check_structure()
                .map_err(|e| fail(position, tx, e.into()))?;
            let mut own: BTreeSet<OutPoint> = BTreeSet::new();
            for (index, input) in tx.inputs.iter().enumerate() {
                if !own.insert(input.outpoint) {
                    return Err(fail(position, tx, TxError::DuplicateInput { index }));
                }
                match self.entries.get(&input.outpoint) {
                    None => return Err(fail(position, tx, TxError::MissingUtxo { index })),
                    Some(e) if e.script.data().is_some() => {
                        return Err(fail(position, tx, TxError::Unspendable { index }))
                    }
                    Some(_) => {}
                }
                if spent.contains(&input.outpoint) {
                    return Err(fail(position, tx, TxError::ConflictInBlock { index }));
                }
            }
            compute_fee(tx, self).map_err(|e| fail(position, tx, e))?;
            spent.extend(own);
        }
        if !block.coinbase.is_coinbase() {
            return Err(fail(0, &block.coinbase, TxError::MissingUtxo { index: 0 }));
        }

        let mut next = self.clone();
        for op in &spent {
            next.entries.remove(op);
        }
        next.add_outputs(block.coinbase.txid(), &block.coinbase)
            .map_err(|e| fail(0, &block.coinbase, e))?;
        for (i, tx) in block.txs.iter().enumerate() {
            next.add_outputs(tx.txid(), tx)
                .map_err(|e| fail(i + 1, tx, e))?;
        }
        Ok(next)
    }
}

/// Σ inputs − Σ outputs.
pub fn compute_fee(tx: &Transaction, utxos: &UtxoSet) -> Result<Amount, TxError> {
    let mut total_in = Amount::ZERO;
    for (index, input) in tx.inputs.iter().enumerate() {
        let entry = utxos
            .get(&input.outpoint)
            .ok_or(TxError::MissingUtxo { index })?;
        total_in = total_in
            .checked_add(entry.amount)
            .expect("inputs are bounded by issuance");
    }
    let total_out = Amount::checked_sum(tx.outputs.iter().map(|o| o.amount))
        .ok_or(TxError::Structure(StructureError::OutputOverflow))?;
    total_in.checked_sub(total_out).ok_or(TxError::NegativeFee)
}

/// Full contextual validation. Returns the fee, or every problem found.
pub fn validate(
    tx: &Transaction,
    utxos: &UtxoSet,
    verifier: &dyn Verifier,
) -> Result<Amount, Vec<TxError>> {
    let mut errors = Vec::new();
    if let Err(e) = tx.check_structure() {
        errors.push(e.into());
    }
    if tx.inputs.is_empty() {
        errors.push(TxError::NoInputs);
    }
    let mut seen = BTreeSet::new();
    let mut all_present = true;
    for (index, input) in tx.inputs.iter().enumerate() {
        if !seen.insert(input.outpoint) {
            errors.push(TxError::DuplicateInput { index });
            continue;
        }
        let Some(entry) = utxos.get(&input.outpoint) else {
            errors.push(TxError::MissingUtxo { index });
            all_present = false;
            continue;
        };
        let Some(address) = entry.address() else {
            errors.push(TxError::Unspendable { index });
            continue;
        };
        let verified = tx
            .witness
            .get(index)
            .and_then(|rec| split_witness(rec))
            .zip(signature_message(tx, index))
            .is_some_and(|((sig, _), msg)| verifier.verify(address, &msg, &sig));
        if !verified {
            errors.push(TxError::BadSignature { index });
        }
    }
    let fee = if all_present {
        match compute_fee(tx, utxos) {
            Ok(fee) => Some(fee),
            Err(e) => {
                errors.push(e);
                None
            }
        }
    } else {
        None
    };
    match (errors.is_empty(), fee) {
        (true, Some(fee)) => Ok(fee),
        _ => Err(errors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Hash256, KeyRegistry, SecretKey, SigHashMode, TxInput, TxOutput};

    fn funded(owner: &Address, amount: u64) -> (UtxoSet, OutPoint) {
        let coinbase = Transaction {
            inputs: vec![],
            outputs: vec![TxOutput::pay(owner.clone(), Amount::sat(amount))],
            witness: vec![],
        };
        let block = Block::new(crate::ledger::BlockHash::default(), 0, coinbase, vec![]);
        let set = UtxoSet::new().apply_block(&block).unwrap();
        (set, OutPoint::new(block.coinbase.txid(), 0))
    }

    fn spend(key: &SecretKey, from: OutPoint, outs: Vec<TxOutput>) -> Transaction {
        let mut input = TxInput::new(from);
        input.unlock = SigHashMode::All.to_unlock();
        let mut tx = Transaction {
            inputs: vec![input],
            outputs: outs,
            witness: vec![],
        };
        let sig = key.sign(&signature_message(&tx, 0).unwrap());
        tx.witness = vec![sig.0.to_vec()];
        tx
    }

    #[test]
    fn fee_is_inputs_minus_outputs() {
        let a = Address::new("buyer");
        let (set, op) = funded(&a, 87_985_000);
        let tx = Transaction {
            inputs: vec![TxInput::new(op)],
            outputs: vec![
                TxOutput::pay(Address::new("seller"), Amount::sat(50_000_000)),
                TxOutput::pay(a.clone(), Amount::sat(10_000_000)),
            ],
            witness: vec![],
        };
        assert_eq!(compute_fee(&tx, &set), Ok(Amount::sat(27_985_000)));

        let mut zero = tx.clone();
        zero.outputs[1].amount = Amount::sat(37_985_000);
        assert_eq!(compute_fee(&zero, &set), Ok(Amount::ZERO));

        let mut negative = tx.clone();
        negative.outputs[1].amount = Amount::sat(37_985_001);
        assert_eq!(compute_fee(&negative, &set), Err(TxError::NegativeFee));

        let mut missing = tx;
        missing.inputs[0].outpoint.vout = 9;
        assert_eq!(
            compute_fee(&missing, &set),
            Err(TxError::MissingUtxo { index: 0 })
        );
    }

    #[test]
    fn validate_checks_signatures_against_lock() {
        let mut reg = KeyRegistry::new();
        let alice = SecretKey::from_bytes([1; 32]);
        let bob = SecretKey::from_bytes([2; 32]);
        let a = reg.register(&alice);
        reg.register(&bob);
        let (set, op) = funded(&a, 1_000);
        let outs = vec![TxOutput::pay(Address::new("x"), Amount::sat(900))];

        let good = spend(&alice, op, outs.clone());
        assert_eq!(validate(&good, &set, &reg), Ok(Amount::sat(100)));

        let wrong_key = spend(&bob, op, outs);
        assert_eq!(
            validate(&wrong_key, &set, &reg),
            Err(vec![TxError::BadSignature { index: 0 }])
        );
    }

    #[test]
    fn validate_reports_duplicates_and_missing() {
        let reg = KeyRegistry::new();
        let (set, op) = funded(&Address::new("a"), 1_000);
        let ghost = OutPoint::new(TxId(Hash256([9; 32])), 0);
        let tx = Transaction {
            inputs: vec![TxInput::new(op), TxInput::new(op), TxInput::new(ghost)],
            outputs: vec![TxOutput::pay(Address::new("x"), Amount::sat(1))],
            witness: vec![],
        };
        let errs = validate(&tx, &set, &reg).unwrap_err();
        assert!(errs.contains(&TxError::DuplicateInput { index: 1 }));
        assert!(errs.contains(&TxError::MissingUtxo { index: 2 }));
    }

    #[test]
    fn consumed_outpoint_is_missing() {
        let mut reg = KeyRegistry::new();
        let alice = SecretKey::from_bytes([1; 32]);
        let a = reg.register(&alice);
        let (set, op) = funded(&a, 1_000);
        let tx = spend(&alice, op, vec![TxOutput::pay(a.clone(), Amount::sat(990))]);
        let coinbase = Transaction {
            inputs: vec![],
            outputs: vec![TxOutput::data(vec![1])],
            witness: vec![],
        };
        let block = Block::new(
            crate::ledger::BlockHash::default(),
            1,
            coinbase,
            vec![tx.clone()],
        );
        let after = set.apply_block(&block).unwrap();
        assert!(!after.contains(&op));
        assert_eq!(
            validate(&tx, &after, &reg),
            Err(vec![TxError::MissingUtxo { index: 0 }])
        );
        // re-applying the same block fails on the consumed input
        assert!(matches!(
            after.apply_block(&block),
            Err(BlockError::InvalidBlock {
                position: 1,
                reason: TxError::MissingUtxo { index: 0 },
                ..
            })
        ));
    }

    #[test]
    fn data_outputs_are_tracked_but_unspendable() {
        let (set, _) = funded(&Address::new("a"), 5);
        let coinbase = Transaction {
            inputs: vec![],
            outputs: vec![TxOutput::data(b"x".to_vec())],
            witness: vec![],
        };
        let block = Block::new(crate::ledger::BlockHash::default(), 1, coinbase, vec![]);
        let after = set.apply_block(&block).unwrap();
        let data_op = OutPoint::new(block.coinbase.txid(), 0);
        assert_eq!(after.get(&data_op).unwrap().amount, Amount::ZERO);
        assert_eq!(after.len(), set.len() + 1);

        let tx = Transaction {
            inputs: vec![TxInput::new(data_op)],
            outputs: vec![TxOutput::pay(Address::new("b"), Amount::ZERO)],
            witness: vec![vec![0; 32]],
        };
        let errs = validate(&tx, &after, &KeyRegistry::new()).unwrap_err();
        assert!(errs.contains(&TxError::Unspendable { index: 0 }));
    }
}
