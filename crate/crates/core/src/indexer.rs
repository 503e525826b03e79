//! Off-chain BRC20 balance tracking over confirmed blocks.
//!
//! Attribution rules:
//! - the payer is the owner of a transaction's first input;
//! - deploy registers the tick and credits the full `max` to the payer;
//! - mint credits `min(amt, lim)` to the payer, capped by unissued supply;
//! - transfer debits the seller, the first address output not owned by the
//!   payer, and credits the payer. Transfers with no seller output, an
//!   unknown tick, or an insufficient seller balance are skipped.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::inscription::{extract_inscriptions, InscriptionMetadata, Op};
use crate::ledger::{Address, AddressResolver, Block, OutputIndex, Transaction, TxId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deployment {
    pub max: u64,
    pub lim: u64,
    pub deployer: Address,
    pub issued: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenEvent {
    Deployed {
        txid: TxId,
        tick: String,
        deployer: Address,
        max: u64,
    },
    Minted {
        txid: TxId,
        tick: String,
        to: Address,
        amt: u64,
    },
    Transferred {
        txid: TxId,
        tick: String,
        from: Address,
        to: Address,
        amt: u64,
    },
    Skipped {
        txid: TxId,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexerError {
    #[error("expected block at height {expected}, got {found}")]
    OutOfOrder { expected: u64, found: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tick {tick}: balances sum to {sum}, issued {issued}, max {max}")]
pub struct SupplyViolation {
    pub tick: String,
    pub sum: u64,
    pub issued: u64,
    pub max: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenLedger {
    deployed: BTreeMap<String, Deployment>,
    balances: BTreeMap<(Address, String), u64>,
}

impl TokenLedger {
    pub fn new() -> TokenLedger {
        TokenLedger::default()
    }

    pub fn balance(&self, address: &Address, tick: &str) -> u64 {
        self.balances
            .get(&(address.clone(), tick.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn deployment(&self, tick: &str) -> Option<&Deployment> {
        self.deployed.get(tick)
    }

    pub fn balances(&self) -> impl Iterator<Item = (&Address, &str, u64)> {
        self.balances.iter().map(|((a, t), v)| (a, t.as_str(), *v))
    }

    fn credit(&mut self, address: &Address, tick: &str, amt: u64) {
        if amt > 0 {
            *self
                .balances
                .entry((address.clone(), tick.to_string()))
                .or_insert(0) += amt;
        }
    }

    fn debit(&mut self, address: &Address, tick: &str, amt: u64) {
        let key = (address.clone(), tick.to_string());
        let bal = self.balances.get_mut(&key).expect("debit checked");
        *bal -= amt;
        if *bal == 0 {
            self.balances.remove(&key);
        }
    }

    /// Applies every inscription in the block's non-coinbase transactions.
    pub fn index_block(
        &mut self,
        block: &Block,
        resolver: &impl AddressResolver,
    ) -> Vec<TokenEvent> {
        let mut events = Vec::new();
        for tx in &block.txs {
            self.index_tx(tx, resolver, &mut events);
        }
        events
    }

    fn index_tx(
        &mut self,
        tx: &Transaction,
        resolver: &impl AddressResolver,
        events: &mut Vec<TokenEvent>,
    ) {
        let inscriptions = extract_inscriptions(tx);
        if inscriptions.is_empty() {
            return;
        }
        let txid = tx.txid();
        let Some(payer) = tx.inputs.first().and_then(|i| resolver.owner(&i.outpoint)) else {
            events.push(TokenEvent::Skipped {
                txid,
                reason: "payer unknown".into(),
            });
            return;
        };
        for (_, meta) in inscriptions {
            let event = match meta.op {
                Op::Deploy => self.deploy(txid, &meta, &payer),
                Op::Mint => self.mint(txid, &meta, &payer),
                Op::Transfer => self.transfer(txid, &meta, &payer, tx),
            };
            events.push(event);
        }
    }

    fn deploy(&mut self, txid: TxId, meta: &InscriptionMetadata, payer: &Address) -> TokenEvent {
        if self.deployed.contains_key(&meta.tick) {
            return TokenEvent::Skipped {
                txid,
                reason: format!("{} already deployed", meta.tick),
            };
        }
        let max = meta.max_value().expect("validated deploy");
        self.deployed.insert(
            meta.tick.clone(),
            Deployment {
                max,
                lim: meta.lim_value().expect("validated deploy"),
                deployer: payer.clone(),
                issued: max,
            },
        );
        self.credit(payer, &meta.tick, max);
        TokenEvent::Deployed {
            txid,
            tick: meta.tick.clone(),
            deployer: payer.clone(),
            max,
        }
    }

    fn mint(&mut self, txid: TxId, meta: &InscriptionMetadata, payer: &Address) -> TokenEvent {
        let Some(dep) = self.deployed.get_mut(&meta.tick) else {
            return TokenEvent::Skipped {
                txid,
                reason: format!("{} not deployed", meta.tick),
            };
        };
        let amt = meta
            .amt_value()
            .expect("validated mint")
            .min(dep.lim)
            .min(dep.max - dep.issued);
        dep.issued += amt;
        self.credit(payer, &meta.tick, amt);
        TokenEvent::Minted {
            txid,
            tick: meta.tick.clone(),
            to: payer.clone(),
            amt,
        }
    }

    fn transfer(
        &mut self,
        txid: TxId,
        meta: &InscriptionMetadata,
        payer: &Address,
        tx: &Transaction,
    ) -> TokenEvent {
        let skip = |reason: String| TokenEvent::Skipped { txid, reason };
        if !self.deployed.contains_key(&meta.tick) {
            return skip(format!("{} not deployed", meta.tick));
        }
        let Some(seller) = tx
            .outputs
            .iter()
            .filter_map(|o| o.script.address())
            .find(|a| *a != payer)
            .cloned()
        else {
            return skip("no seller output".into());
        };
        let amt = meta.amt_value().expect("validated transfer");
        let have = self.balance(&seller, &meta.tick);
        if have < amt {
            return skip(format!("{seller} holds {have} {}, needs {amt}", meta.tick));
        }
        self.debit(&seller, &meta.tick, amt);
        self.credit(payer, &meta.tick, amt);
        TokenEvent::Transferred {
            txid,
            tick: meta.tick.clone(),
            from: seller,
            to: payer.clone(),
            amt,
        }
    }

    /// Each deployed tick's balances sum to its issued supply, which never
    /// exceeds `max`.
    pub fn check_supply(&self) -> Result<(), SupplyViolation> {
        for (tick, dep) in &self.deployed {
            let sum: u64 = self
                .balances
                .iter()
                .filter(|((_, t), _)| t == tick)
                .map(|(_, v)| *v)
                .sum();
            if sum != dep.issued || dep.issued > dep.max {
                return Err(SupplyViolation {
                    tick: tick.clone(),
                    sum,
                    issued: dep.issued,
                    max: dep.max,
                });
            }
        }
        Ok(())
    }

    /// `tick address balance` lines, sorted.
    pub fn balance_report(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .balances
            .iter()
            .map(|((a, t), v)| format!("{t} {a} {v}"))
            .collect();
        lines.sort();
        lines
    }
}

/// Replays `blocks` from genesis into a fresh ledger.
pub fn rebuild(blocks: &[Block]) -> Result<TokenLedger, IndexerError> {
    let mut ledger = TokenLedger::new();
    let mut outputs = OutputIndex::default();
    for (expected, block) in (0u64..).zip(blocks) {
        if block.height != expected {
            return Err(IndexerError::OutOfOrder {
                expected,
                found: block.height,
            });
        }
        outputs.record(block);
        ledger.index_block(block, &outputs);
    }
    Ok(ledger)
}
