#![allow(dead_code)]

use snipesim::attacker::{observe_tx, prepare_attack, AttackEnv, SnipeVariant, Strategy};
use snipesim::indexer::TokenLedger;
use snipesim::inscription::InscriptionMetadata;
use snipesim::ledger::{
    Address, Amount, Chain, KeyRegistry, OutPoint, SecretKey, Transaction, TxOutput, UtxoEntry,
};
use snipesim::mempool::{Mempool, MempoolPolicy};
use snipesim::mitigation::FeeReveal;
use snipesim::psbt::{create_psbt, finalize_psbt, sign_psbt, InputSpec, Psbt};
use snipesim::sale::{publish_listing, set_change, Coin, Listing, PurchaseShape};

pub fn key(n: u8) -> SecretKey {
    let mut b = [0u8; 32];
    b[0] = n;
    b[31] = 0xa5;
    SecretKey::from_bytes(b)
}

/// Signs every input with whichever of `keys` owns it.
pub fn spend(coins: &[Coin], outputs: Vec<TxOutput>, keys: &[&SecretKey]) -> Transaction {
    let specs = coins
        .iter()
        .map(|(op, u)| InputSpec::new(*op, u.clone()))
        .collect();
    let mut psbt = create_psbt(specs, outputs).expect("well formed");
    for k in keys {
        psbt = sign_psbt(&psbt, k).0;
    }
    finalize_psbt(&psbt).expect("all inputs signed")
}

/// Round-one setup: a seller with a 0-sat carrier and three funded parties.
pub struct Round1 {
    pub reg: KeyRegistry,
    pub seller: SecretKey,
    pub buyer: SecretKey,
    pub high: SecretKey,
    pub low: SecretKey,
    pub chain: Chain,
    pub ledger: TokenLedger,
}

impl Round1 {
    pub fn new() -> Round1 {
        Round1::with_funds(87_985_000, 78_130_000, 70_000_100)
    }

    pub fn with_funds(buyer_sats: u64, high_sats: u64, low_sats: u64) -> Round1 {
        let mut reg = KeyRegistry::new();
        let [seller, buyer, high, low] = [key(1), key(2), key(3), key(4)];
        let chain = Chain::genesis(
            vec![
                (reg.register(&seller), Amount::ZERO),
                (reg.register(&buyer), Amount::sat(buyer_sats)),
                (reg.register(&high), Amount::sat(high_sats)),
                (reg.register(&low), Amount::sat(low_sats)),
            ],
            Amount::ZERO,
        );
        Round1 {
            reg,
            seller,
            buyer,
            high,
            low,
            chain,
            ledger: TokenLedger::new(),
        }
    }

    pub fn coins(&self, k: &SecretKey) -> Vec<Coin> {
        self.chain.utxos().owned_by(&k.address())
    }

    pub fn listing_psbt(&self, lock: Option<FeeReveal>) -> Psbt {
        publish_listing(
            &self.seller,
            self.coins(&self.seller)[0].clone(),
            Amount::sat(50_000_000),
            &InscriptionMetadata::transfer("ak47", 1000),
            None,
            lock,
        )
        .expect("listing")
    }

    pub fn purchase(&self, who: &SecretKey, lock: Option<FeeReveal>) -> Psbt {
        Listing::from_psbt(&self.listing_psbt(lock))
            .expect("listing")
            .purchase(
                &self.coins(who),
                &who.address(),
                PurchaseShape::SharedInput,
                &self.reg,
            )
            .expect("purchase")
    }

    pub fn buyer_tx(&self, lock: Option<FeeReveal>) -> Transaction {
        let mut p = self.purchase(&self.buyer, lock);
        set_change(&mut p, Amount::sat(10_000_000)).expect("change");
        finalize_psbt(&sign_psbt(&p, &self.buyer).0).expect("signed")
    }

    pub fn snipe(&self, victim: &Transaction, who: &SecretKey, strategy: Strategy) -> Transaction {
        let obs = observe_tx(victim, self.chain.utxos()).expect("victim is a sale");
        let env = AttackEnv {
            utxos: self.chain.utxos(),
            verifier: &self.reg,
            ledger: &self.ledger,
        };
        prepare_attack(
            &obs,
            &self.coins(who),
            strategy,
            SnipeVariant::SharedInput,
            who,
            &env,
        )
        .expect("attack")
        .0
    }

    pub fn pool(&self, policy: MempoolPolicy) -> Mempool {
        Mempool::new(policy)
    }
}

/// `n` single-coin wallets plus `shared` coins owned by one extra key.
pub struct Coins {
    pub reg: KeyRegistry,
    pub owners: Vec<SecretKey>,
    pub hub: SecretKey,
    pub chain: Chain,
}

impl Coins {
    pub fn new(amounts: &[u64], shared: usize) -> Coins {
        let mut reg = KeyRegistry::new();
        let owners: Vec<SecretKey> = (0..amounts.len()).map(|i| key(10 + i as u8)).collect();
        let hub = key(200);
        let mut allocs: Vec<(Address, Amount)> = owners
            .iter()
            .zip(amounts)
            .map(|(k, a)| (reg.register(k), Amount::sat(*a)))
            .collect();
        reg.register(&hub);
        for _ in 0..shared {
            allocs.push((hub.address(), Amount::ZERO));
        }
        Coins {
            reg,
            owners,
            hub,
            chain: Chain::genesis(allocs, Amount::ZERO),
        }
    }

    pub fn coin(&self, i: usize) -> Coin {
        self.chain.utxos().owned_by(&self.owners[i].address())[0].clone()
    }

    pub fn shared(&self, j: usize) -> Coin {
        self.chain.utxos().owned_by(&self.hub.address())[j].clone()
    }

    /// Wallet `i` spends its coin together with shared coin `j`, paying `fee`.
    pub fn contender(&self, i: usize, j: usize, fee: u64) -> Transaction {
        let own = self.coin(i);
        let back = own.1.amount.to_sat() - fee;
        spend(
            &[own, self.shared(j)],
            vec![TxOutput::pay(self.owners[i].address(), Amount::sat(back))],
            &[&self.owners[i], &self.hub],
        )
    }
}

pub fn entry(addr: &Address, sats: u64) -> UtxoEntry {
    UtxoEntry {
        amount: Amount::sat(sats),
        script: snipesim::ledger::Script::Address(addr.clone()),
    }
}

pub fn outpoints(tx: &Transaction) -> Vec<OutPoint> {
    tx.inputs.iter().map(|i| i.outpoint).collect()
}
