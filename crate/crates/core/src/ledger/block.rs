use super::amount::Amount;
use super::hash::{sha256d, BlockHash, Hash256};
use super::tx::{Address, Transaction, TxOutput};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub hash: BlockHash,
    pub prev_hash: BlockHash,
    pub height: u64,
    pub coinbase: Transaction,
    pub txs: Vec<Transaction>,
}

impl Block {
    pub fn new(
        prev_hash: BlockHash,
        height: u64,
        coinbase: Transaction,
        txs: Vec<Transaction>,
    ) -> Block {
        let mut preimage = Vec::with_capacity(72 + 32 * (txs.len() + 1));
        preimage.extend_from_slice(prev_hash.as_bytes());
        preimage.extend_from_slice(&height.to_be_bytes());
        preimage.extend_from_slice(coinbase.txid().as_bytes());
        for tx in &txs {
            preimage.extend_from_slice(tx.txid().as_bytes());
        }
        Block {
            hash: BlockHash(Hash256(sha256d(&preimage))),
            prev_hash,
            height,
            coinbase,
            txs,
        }
    }

    /// Coinbase first, then the block's transactions in order.
    pub fn all_txs(&self) -> impl Iterator<Item = &Transaction> {
        std::iter::once(&self.coinbase).chain(self.txs.iter())
    }

    pub fn contains(&self, txid: &super::TxId) -> bool {
        self.txs.iter().any(|tx| &tx.txid() == txid)
    }
}

/// A coinbase paying `outputs`, tagged with the height so every coinbase has a
/// distinct txid.
pub fn coinbase(height: u64, outputs: Vec<(Address, Amount)>) -> Transaction {
    let mut outs: Vec<TxOutput> = outputs
        .into_iter()
        .map(|(address, amount)| TxOutput::pay(address, amount))
        .collect();
    outs.push(TxOutput::data(height.to_be_bytes().to_vec()));
    Transaction {
        inputs: Vec::new(),
        outputs: outs,
        witness: Vec::new(),
    }
}
