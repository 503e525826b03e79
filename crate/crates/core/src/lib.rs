//! A deterministic desk-scale simulator of Bitcoin's UTXO, mempool and PSBT
//! layers, built to study fee-driven sniping of BRC20 token sales and the
//! defenses against it.
pub mod attacker;
pub mod harness;
pub mod indexer;
pub mod inscription;
pub mod ledger;
pub mod mempool;
pub mod mitigation;
pub mod psbt;
pub mod sale;

#[cfg(test)]
mod testkit;
