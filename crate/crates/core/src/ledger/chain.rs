use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::amount::Amount;
use super::block::{coinbase, Block};
use super::hash::{BlockHash, TxId};
use super::keys::Verifier;
use super::tx::{Address, OutPoint, Script, Transaction};
use super::utxo::{validate, BlockError, TxError, UtxoSet};

pub const DEFAULT_COINBASE_REWARD: Amount = Amount::sat(5_000_000_000);

/// Looks up who an outpoint paid, including outputs that are already spent.
pub trait AddressResolver {
    fn owner(&self, outpoint: &OutPoint) -> Option<Address>;
}

/// Every output ever confirmed, spent or not.
#[derive(Debug, Clone, Default)]
pub struct OutputIndex {
    scripts: BTreeMap<OutPoint, Script>,
}

impl OutputIndex {
    pub fn record(&mut self, block: &Block) {
        for tx in block.all_txs() {
            let txid = tx.txid();
            for (vout, out) in tx.outputs.iter().enumerate() {
                self.scripts
                    .insert(OutPoint::new(txid, vout as u32), out.script.clone());
            }
        }
    }
}

impl AddressResolver for OutputIndex {
    fn owner(&self, outpoint: &OutPoint) -> Option<Address> {
        self.scripts.get(outpoint)?.address().cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("block transaction {position} is invalid: {errors:?}")]
    InvalidTx {
        position: usize,
        errors: Vec<TxError>,
    },
    #[error(transparent)]
    Block(#[from] BlockError),
}

/// A regtest-style chain: instant blocks, no proof of work, no reorgs.
#[derive(Debug, Clone)]
pub struct Chain {
    coinbase_reward: Amount,
    blocks: Vec<Block>,
    utxos: UtxoSet,
    outputs: OutputIndex,
    confirmed: HashMap<TxId, u64>,
}

impl Chain {
    /// Height-0 block whose coinbase pays the allocations.
    pub fn genesis(allocations: Vec<(Address, Amount)>, coinbase_reward: Amount) -> Chain {
        let block = Block::new(
            BlockHash::default(),
            0,
            coinbase(0, allocations),
            Vec::new(),
        );
        let utxos = UtxoSet::new()
            .apply_block(&block)
            .expect("genesis applies to the empty set");
        let mut chain = Chain {
            coinbase_reward,
            blocks: Vec::new(),
            utxos,
            outputs: OutputIndex::default(),
            confirmed: HashMap::new(),
        };
        chain.push(block);
        chain
    }

    fn push(&mut self, block: Block) {
        self.outputs.record(&block);
        for tx in block.all_txs() {
            self.confirmed.insert(tx.txid(), block.height);
        }
        self.blocks.push(block);
    }

    /// Validates `txs` against the tip (signatures included), pays the miner
    /// reward plus fees, and appends the block.
    pub fn mine(
        &mut self,
        txs: Vec<Transaction>,
        miner: &Address,
        verifier: &dyn Verifier,
    ) -> Result<&Block, ChainError> {
        let mut fees = Amount::ZERO;
        for (i, tx) in txs.iter().enumerate() {
            let fee =
                validate(tx, &self.utxos, verifier).map_err(|errors| ChainError::InvalidTx {
                    position: i + 1,
                    errors,
                })?;
            fees = fees + fee;
        }
        let height = self.height() + 1;
        let cb = coinbase(height, vec![(miner.clone(), self.coinbase_reward + fees)]);
        let block = Block::new(self.tip().hash, height, cb, txs);
        self.utxos = self.utxos.apply_block(&block)?;
        self.push(block);
        Ok(self.tip())
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn utxos(&self) -> &UtxoSet {
        &self.utxos
    }

    pub fn output_index(&self) -> &OutputIndex {
        &self.outputs
    }

    pub fn confirmed_height(&self, txid: &TxId) -> Option<u64> {
        self.confirmed.get(txid).copied()
    }

    pub fn is_confirmed(&self, txid: &TxId) -> bool {
        self.confirmed.contains_key(txid)
    }
}

impl AddressResolver for Chain {
    fn owner(&self, outpoint: &OutPoint) -> Option<Address> {
        self.outputs.owner(outpoint)
    }
}
