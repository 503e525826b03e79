//! Transactions, UTXO state transitions, blocks and the chain.

mod amount;
mod block;
mod chain;
mod hash;
pub mod keys;
mod tx;
mod utxo;

pub use amount::{Amount, COIN, MAX_MONEY};
pub use block::{coinbase, Block};
pub use chain::{AddressResolver, Chain, ChainError, OutputIndex, DEFAULT_COINBASE_REWARD};
pub use hash::{sha256, sha256d, BlockHash, Hash256, TxId};
pub use keys::{KeyRegistry, SecretKey, SigHashMode, Signature, Verifier};
pub use tx::{
    compute_txid, deserialize, serialize, vsize, Address, DecodeError, OutPoint, Script,
    StructureError, Transaction, TxInput, TxOutput, SEQUENCE_RBF, TX_VERSION,
};
pub(crate) use tx::{write_varint, Reader};
pub use utxo::{compute_fee, validate, BlockError, TxError, UtxoEntry, UtxoSet};
