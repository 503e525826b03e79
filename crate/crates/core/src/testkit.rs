//! Round-one world shared by unit tests.

use crate::indexer::TokenLedger;
use crate::inscription::InscriptionMetadata;
use crate::ledger::{Amount, Chain, KeyRegistry, SecretKey, Transaction};
use crate::mempool::{Mempool, MempoolPolicy};
use crate::mitigation::FeeReveal;
use crate::psbt::{finalize_psbt, sign_psbt, Psbt};
use crate::sale::{publish_listing, set_change, Coin, Listing, PurchaseShape};

pub struct World {
    pub reg: KeyRegistry,
    pub seller: SecretKey,
    pub buyer: SecretKey,
    pub high: SecretKey,
    pub low: SecretKey,
    pub chain: Chain,
    pub pool: Mempool,
    pub ledger: TokenLedger,
}

impl World {
    pub fn new(policy: MempoolPolicy) -> World {
        let mut reg = KeyRegistry::new();
        let seller = SecretKey::from_bytes([1; 32]);
        let buyer = SecretKey::from_bytes([2; 32]);
        let high = SecretKey::from_bytes([3; 32]);
        let low = SecretKey::from_bytes([4; 32]);
        let chain = Chain::genesis(
            vec![
                (reg.register(&seller), Amount::ZERO),
                (reg.register(&buyer), Amount::sat(87_985_000)),
                (reg.register(&high), Amount::sat(78_130_000)),
                (reg.register(&low), Amount::sat(70_000_100)),
            ],
            Amount::ZERO,
        );
        World {
            reg,
            seller,
            buyer,
            high,
            low,
            chain,
            pool: Mempool::new(policy),
            ledger: TokenLedger::new(),
        }
    }

    pub fn coins(&self, k: &SecretKey) -> Vec<Coin> {
        self.chain.utxos().owned_by(&k.address())
    }

    pub fn listing(&self, lock: Option<FeeReveal>) -> Listing {
        let psbt = publish_listing(
            &self.seller,
            self.coins(&self.seller)[0].clone(),
            Amount::sat(50_000_000),
            &InscriptionMetadata::transfer("ak47", 1000),
            None,
            lock,
        )
        .unwrap();
        Listing::from_psbt(&psbt).unwrap()
    }

    /// The buyer's unsigned purchase with zero change.
    pub fn buyer_psbt(&self, lock: Option<FeeReveal>) -> Psbt {
        self.listing(lock)
            .purchase(
                &self.coins(&self.buyer),
                &self.buyer.address(),
                PurchaseShape::SharedInput,
                &self.reg,
            )
            .unwrap()
    }

    /// The buyer's signed purchase keeping 10,000,000 sats of change.
    pub fn buyer_tx(&self, lock: Option<FeeReveal>) -> Transaction {
        let mut p = self.buyer_psbt(lock);
        set_change(&mut p, Amount::sat(10_000_000)).unwrap();
        finalize_psbt(&sign_psbt(&p, &self.buyer).0).unwrap()
    }
}
