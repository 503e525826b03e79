//! Scenario runner: wallets, genesis, scripted actors, mining, and reports.

mod report;
mod scenario;

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::attacker::{
    observe_tx, prepare_attack, verify_success, AttackEnv, AttackOutcome, VictimObservation,
};
use crate::indexer::{rebuild, TokenLedger};
use crate::inscription::{extract_inscriptions, InscriptionMetadata, Op};
use crate::ledger::{
    Address, Amount, Chain, KeyRegistry, OutPoint, SecretKey, Transaction, TxId, TxOutput,
};
use crate::mempool::{FeeRate, Mempool, SubmitResult};
use crate::mitigation::{bump_fee, create_protected_order, FeeReveal, ProtectedOrder};
use crate::psbt::{create_psbt, finalize_psbt, is_complete, sign_psbt, InputSpec, Psbt};
use crate::sale::{carrier_tx, publish_listing, set_change, set_fee, Coin, Listing, PurchaseShape};

pub use report::{
    emit_report, AttackRow, BalanceRow, BlockRow, BlockTxRow, ExpectationRow, FeeRow, IndexerCheck,
    ListingRow, OrderRow, PoolRow, Report, ReportError, Snapshot, SubmissionRow,
};
pub use scenario::{
    builtin, list_scenarios, load_scenario, parse_scenario, Action, Allocation, BuyPricing,
    Expectation, PolicyConfig, Scenario,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error("step {step} ({action}): {message}")]
    Step {
        step: usize,
        action: &'static str,
        message: String,
    },
    #[error("scenario setup: {0}")]
    Setup(String),
}

/// Which side of the sale a transaction is on, for the fee table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Setup,
    Legitimate,
    Attacker,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Setup => "setup",
            Role::Legitimate => "legitimate",
            Role::Attacker => "attacker",
        }
    }
}

/// A running scenario. Drive it with [`Simulation::step`] or run it to a
/// [`Report`] with [`Simulation::run`].
pub struct Simulation {
    scenario: Scenario,
    rng: ChaCha20Rng,
    keys: BTreeMap<String, SecretKey>,
    registry: KeyRegistry,
    chain: Chain,
    pool: Mempool,
    tokens: TokenLedger,
    /// Every transaction the scenario built, by label.
    txs: BTreeMap<String, Transaction>,
    labels: BTreeMap<TxId, String>,
    roles: BTreeMap<String, Role>,
    /// Carrier outpoints, never used as funding.
    reserved: BTreeSet<OutPoint>,
    /// Listing PSBT per prepared sale, once published.
    sales: BTreeMap<String, Option<Psbt>>,
    orders: Vec<(String, ProtectedOrder)>,
    attacks: Vec<(String, String, AttackOutcome)>,
    submissions: Vec<SubmissionRow>,
    timeline: Vec<Snapshot>,
    blocks: Vec<BlockRow>,
    replay_ok: bool,
    supply_ok: bool,
}

fn step_err(step: usize, action: &Action, message: impl ToString) -> ScenarioError {
    ScenarioError::Step {
        step,
        action: action.kind(),
        message: message.to_string(),
    }
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Simulation, ScenarioError> {
        let mut rng = ChaCha20Rng::seed_from_u64(scenario.seed);
        let mut registry = KeyRegistry::new();
        let mut keys = BTreeMap::new();
        for name in &scenario.wallets {
            let mut secret = [0u8; 32];
            rng.fill_bytes(&mut secret);
            let key = SecretKey::from_bytes(secret);
            registry.register(&key);
            if keys.insert(name.clone(), key).is_some() {
                return Err(ScenarioError::Setup(format!(
                    "wallet {name} declared twice"
                )));
            }
        }
        let mut allocations = Vec::new();
        for a in &scenario.genesis {
            let key = keys.get(&a.wallet).ok_or_else(|| {
                ScenarioError::Setup(format!("genesis names unknown wallet {}", a.wallet))
            })?;
            let amount = Amount::from_sat(a.amount)
                .ok_or_else(|| ScenarioError::Setup(format!("amount {} out of range", a.amount)))?;
            allocations.push((key.address(), amount));
        }
        let reward = Amount::from_sat(scenario.policy.coinbase_reward)
            .ok_or_else(|| ScenarioError::Setup("coinbase reward out of range".into()))?;
        let chain = Chain::genesis(allocations, reward);
        let mut sim = Simulation {
            pool: Mempool::new(scenario.policy.mempool_policy()),
            rng,
            keys,
            registry,
            tokens: TokenLedger::new(),
            txs: BTreeMap::new(),
            labels: BTreeMap::new(),
            roles: BTreeMap::new(),
            reserved: BTreeSet::new(),
            sales: BTreeMap::new(),
            orders: Vec::new(),
            attacks: Vec::new(),
            submissions: Vec::new(),
            timeline: Vec::new(),
            blocks: Vec::new(),
            replay_ok: true,
            supply_ok: true,
            chain,
            scenario,
        };
        let genesis = sim.chain.tip().clone();
        sim.tokens.index_block(&genesis, &sim.chain);
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pool(&self) -> &Mempool {
        &self.pool
    }

    pub fn tokens(&self) -> &TokenLedger {
        &self.tokens
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn address(&self, wallet: &str) -> Option<Address> {
        self.keys.get(wallet).map(|k| k.address())
    }

    pub fn key(&self, wallet: &str) -> Option<&SecretKey> {
        self.keys.get(wallet)
    }

    /// A labelled transaction, broadcast or held.
    pub fn tx(&self, label: &str) -> Option<&Transaction> {
        self.txs.get(label)
    }

    pub fn label_of(&self, txid: &TxId) -> Option<&str> {
        self.labels.get(txid).map(String::as_str)
    }

    pub fn attacks(&self) -> impl Iterator<Item = (&str, &AttackOutcome)> {
        self.attacks.iter().map(|(w, _, o)| (w.as_str(), o))
    }

    pub fn order(&self, name: &str) -> Option<&ProtectedOrder> {
        self.orders.iter().find(|(n, _)| n == name).map(|(_, o)| o)
    }

    pub fn listing_psbt(&self, sale: &str) -> Option<&Psbt> {
        self.sales.get(sale)?.as_ref()
    }

    /// Spendable coins of `wallet`, excluding sale carriers.
    pub fn funds(&self, wallet: &str) -> Vec<Coin> {
        let Some(addr) = self.address(wallet) else {
            return Vec::new();
        };
        self.chain
            .utxos()
            .owned_by(&addr)
            .into_iter()
            .filter(|(op, _)| !self.reserved.contains(op))
            .collect()
    }

    fn wallet_key(
        &self,
        step: usize,
        action: &Action,
        wallet: &str,
    ) -> Result<SecretKey, ScenarioError> {
        self.keys
            .get(wallet)
            .cloned()
            .ok_or_else(|| step_err(step, action, format!("unknown wallet {wallet}")))
    }

    fn remember(&mut self, label: &str, tx: &Transaction, role: Role) -> Result<(), String> {
        if self.txs.contains_key(label) {
            return Err(format!("label {label} already used"));
        }
        self.txs.insert(label.to_string(), tx.clone());
        self.labels.insert(tx.txid(), label.to_string());
        self.roles.insert(label.to_string(), role);
        Ok(())
    }

    fn submit(&mut self, step: usize, label: &str) -> SubmitResult {
        let tx = self.txs[label].clone();
        let result = self
            .pool
            .submit(tx.clone(), self.chain.utxos(), &self.registry);
        let fee = crate::ledger::compute_fee(&tx, self.chain.utxos()).ok();
        self.submissions.push(SubmissionRow {
            step,
            label: label.to_string(),
            txid: tx.txid().to_string(),
            fee_sats: fee.map(|f| f.to_sat()),
            fee_rate: fee.map(|f| FeeRate::new(f, tx.vsize()).to_string()),
            result: result.label().to_string(),
        });
        result
    }

    fn label_for(&self, name: &Option<String>, default: &str) -> String {
        name.clone().unwrap_or_else(|| default.to_string())
    }

    /// Signs `psbt` with `key`, finalizes, labels and optionally submits.
    fn sign_and_send(
        &mut self,
        step: usize,
        psbt: &Psbt,
        key: &SecretKey,
        label: &str,
        role: Role,
        broadcast: bool,
    ) -> Result<(), String> {
        let (signed, _) = sign_psbt(psbt, key);
        let tx = finalize_psbt(&signed).map_err(|e| e.to_string())?;
        self.remember(label, &tx, role)?;
        if broadcast {
            self.submit(step, label);
        }
        Ok(())
    }

    /// Executes one action, then lets protected orders react.
    pub fn step(&mut self, step: usize, action: &Action) -> Result<(), ScenarioError> {
        match action {
            Action::Deploy {
                wallet,
                tick,
                max,
                lim,
                fee,
            } => {
                let key = self.wallet_key(step, action, wallet)?;
                let meta = InscriptionMetadata::deploy(tick, *max, *lim);
                let payload = meta.to_payload().map_err(|e| step_err(step, action, e))?;
                let inputs = self
                    .funds(wallet)
                    .into_iter()
                    .map(|(op, u)| InputSpec::new(op, u))
                    .collect();
                let outputs = vec![
                    TxOutput::data(payload),
                    TxOutput::pay(key.address(), Amount::ZERO),
                ];
                let mut psbt =
                    create_psbt(inputs, outputs).map_err(|e| step_err(step, action, e))?;
                set_fee(&mut psbt, Amount::sat(*fee)).map_err(|e| step_err(step, action, e))?;
                self.sign_and_send(
                    step,
                    &psbt,
                    &key,
                    &format!("deploy-{tick}"),
                    Role::Setup,
                    true,
                )
                .map_err(|e| step_err(step, action, e))?;
            }
            Action::PrepareSale { wallet, sale, fee } => {
                let key = self.wallet_key(step, action, wallet)?;
                let tx = carrier_tx(&key, &self.funds(wallet), Amount::sat(*fee))
                    .map_err(|e| step_err(step, action, e))?;
                let carrier = OutPoint::new(tx.txid(), 0);
                let label = format!("carrier-{sale}");
                self.remember(&label, &tx, Role::Setup)
                    .map_err(|e| step_err(step, action, e))?;
                self.reserved.insert(carrier);
                self.sales.insert(sale.clone(), None);
                self.submit(step, &label);
            }
            Action::PublishPsbt {
                sale,
                seller,
                tick,
                amt,
                price,
                cosigner,
                fee_lock,
            } => {
                let key = self.wallet_key(step, action, seller)?;
                let carrier_label = format!("carrier-{sale}");
                let carrier_tx = self.txs.get(&carrier_label).ok_or_else(|| {
                    step_err(step, action, format!("sale {sale} was never prepared"))
                })?;
                let op = OutPoint::new(carrier_tx.txid(), 0);
                let utxo = self.chain.utxos().get(&op).cloned().ok_or_else(|| {
                    step_err(step, action, format!("carrier for {sale} is not confirmed"))
                })?;
                let cosigner_coin = match cosigner {
                    Some(w) => Some(self.funds(w).into_iter().next().ok_or_else(|| {
                        step_err(step, action, format!("cosigner {w} has no coins"))
                    })?),
                    None => None,
                };
                let lock = fee_lock.map(|f_max| {
                    let mut nonce = [0u8; 32];
                    self.rng.fill_bytes(&mut nonce);
                    FeeReveal {
                        f_max: Amount::sat(f_max),
                        nonce,
                    }
                });
                let psbt = publish_listing(
                    &key,
                    (op, utxo),
                    Amount::sat(*price),
                    &InscriptionMetadata::transfer(tick, *amt),
                    cosigner_coin,
                    lock,
                )
                .map_err(|e| step_err(step, action, e))?;
                self.sales.insert(sale.clone(), Some(psbt));
            }
            Action::Buy {
                wallet,
                sale,
                pricing,
                name,
                broadcast,
            } => {
                let key = self.wallet_key(step, action, wallet)?;
                let mut psbt = self.purchase_psbt(step, action, wallet, sale)?;
                match pricing {
                    BuyPricing::Change(c) => {
                        set_change(&mut psbt, Amount::sat(*c))
                            .map_err(|e| step_err(step, action, e))?;
                    }
                    BuyPricing::FeeRate(r) => {
                        let fee = Amount::sat(r * psbt.estimated_vsize());
                        set_fee(&mut psbt, fee).map_err(|e| step_err(step, action, e))?;
                    }
                }
                let label = self.label_for(name, wallet);
                self.sign_and_send(step, &psbt, &key, &label, Role::Legitimate, *broadcast)
                    .map_err(|e| step_err(step, action, e))?;
            }
            Action::Snipe {
                wallet,
                strategy,
                variant,
                victim,
                name,
                broadcast,
            } => {
                let key = self.wallet_key(step, action, wallet)?;
                let obs = self.observe(step, action, wallet, victim.as_deref())?;
                let victim_label = self.label_of(&obs.victim_txid).unwrap_or("?").to_string();
                let env = AttackEnv {
                    utxos: self.chain.utxos(),
                    verifier: &self.registry,
                    ledger: &self.tokens,
                };
                let (tx, mut outcome) =
                    prepare_attack(&obs, &self.funds(wallet), *strategy, *variant, &key, &env)
                        .map_err(|e| step_err(step, action, e))?;
                let label = self.label_for(name, wallet);
                self.remember(&label, &tx, Role::Attacker)
                    .map_err(|e| step_err(step, action, e))?;
                if *broadcast {
                    outcome.admission = self.submit(step, &label).label().to_string();
                }
                self.attacks.push((wallet.clone(), victim_label, outcome));
            }
            Action::Broadcast { txs } => {
                for label in txs {
                    if !self.txs.contains_key(label) {
                        return Err(step_err(
                            step,
                            action,
                            format!("no transaction labelled {label}"),
                        ));
                    }
                    let result = self.submit(step, label);
                    let txid = self.txs[label].txid();
                    for (_, _, o) in self
                        .attacks
                        .iter_mut()
                        .filter(|(_, _, o)| o.attack_txid == txid)
                    {
                        o.admission = result.label().to_string();
                    }
                    self.settle_orders();
                }
            }
            Action::Protect {
                wallet,
                sale,
                name,
                tiers,
            } => {
                let key = self.wallet_key(step, action, wallet)?;
                let psbt = self.purchase_psbt(step, action, wallet, sale)?;
                let mut order = create_protected_order(&psbt, &key, tiers)
                    .map_err(|e| step_err(step, action, e))?;
                for tier in &order.tiers {
                    self.remember(&format!("{name}@{}", tier.rate), &tier.tx, Role::Legitimate)
                        .map_err(|e| step_err(step, action, e))?;
                }
                order.start(&mut self.pool, &self.chain, &self.registry);
                self.record_order_attempts(step, &order, 0);
                self.orders.push((name.clone(), order));
            }
            Action::Bump {
                wallet,
                tx,
                fee_rate,
                name,
            } => {
                let key = self.wallet_key(step, action, wallet)?;
                let target = self
                    .txs
                    .get(tx)
                    .ok_or_else(|| step_err(step, action, format!("no transaction labelled {tx}")))?
                    .txid();
                let (bumped, result) = bump_fee(
                    &mut self.pool,
                    self.chain.utxos(),
                    &target,
                    *fee_rate,
                    &key,
                    &self.registry,
                )
                .map_err(|e| step_err(step, action, e))?;
                let label = self.label_for(name, &format!("{tx}+bump"));
                self.remember(&label, &bumped, Role::Legitimate)
                    .map_err(|e| step_err(step, action, e))?;
                let fee = crate::ledger::compute_fee(&bumped, self.chain.utxos()).ok();
                self.submissions.push(SubmissionRow {
                    step,
                    label,
                    txid: bumped.txid().to_string(),
                    fee_sats: fee.map(|f| f.to_sat()),
                    fee_rate: fee.map(|f| FeeRate::new(f, bumped.vsize()).to_string()),
                    result: result.label().to_string(),
                });
            }
            Action::Mine { miner } => {
                let miner = self
                    .address(miner)
                    .ok_or_else(|| step_err(step, action, format!("unknown wallet {miner}")))?;
                self.mine(step, action, &miner)?;
            }
        }
        if !matches!(action, Action::Broadcast { .. }) {
            self.settle_orders();
        }
        self.snapshot(step, action);
        Ok(())
    }

    fn purchase_psbt(
        &self,
        step: usize,
        action: &Action,
        wallet: &str,
        sale: &str,
    ) -> Result<Psbt, ScenarioError> {
        let published = self
            .listing_psbt(sale)
            .ok_or_else(|| step_err(step, action, format!("sale {sale} is not published")))?;
        let listing = Listing::from_psbt(published).map_err(|e| step_err(step, action, e))?;
        let change = self.address(wallet).expect("checked wallet");
        listing
            .purchase(
                &self.funds(wallet),
                &change,
                PurchaseShape::SharedInput,
                &self.registry,
            )
            .map_err(|e| step_err(step, action, e))
    }

    fn observe(
        &self,
        step: usize,
        action: &Action,
        wallet: &str,
        victim: Option<&str>,
    ) -> Result<VictimObservation, ScenarioError> {
        let utxos = self.chain.utxos();
        let me = self.address(wallet);
        match victim {
            Some(label) => {
                let tx = match self.order(label) {
                    Some(order) => &order.current().tx,
                    None => self.txs.get(label).ok_or_else(|| {
                        step_err(step, action, format!("no victim labelled {label}"))
                    })?,
                };
                observe_tx(tx, utxos).ok_or_else(|| {
                    step_err(step, action, format!("{label} is not a pending transfer"))
                })
            }
            None => crate::attacker::scan_mempool(&self.pool, utxos)
                .into_iter()
                .find(|o| o.payer != me)
                .ok_or_else(|| step_err(step, action, "no victim in the mempool")),
        }
    }

    fn record_order_attempts(&mut self, step: usize, order: &ProtectedOrder, from: usize) {
        let first = self.label_of(&order.tiers[0].txid).unwrap_or("?");
        let name = first.split('@').next().unwrap_or(first).to_string();
        for (rate, result) in &order.attempts[from..] {
            let tier = order
                .tiers
                .iter()
                .find(|t| t.rate == *rate)
                .expect("attempted tier");
            self.submissions.push(SubmissionRow {
                step,
                label: format!("{name}@{rate}"),
                txid: tier.txid.to_string(),
                fee_sats: Some(tier.fee.to_sat()),
                fee_rate: Some(FeeRate::new(tier.fee, tier.tx.vsize()).to_string()),
                result: result.clone(),
            });
        }
    }

    fn settle_orders(&mut self) {
        // snapshots are pushed after the step, so this is the current step
        let step = self.timeline.len() + 1;
        let mut orders = std::mem::take(&mut self.orders);
        for (_, order) in orders.iter_mut() {
            let before = order.attempts.len();
            order.settle(&mut self.pool, &self.chain, &self.registry);
            if order.attempts.len() > before {
                self.record_order_attempts(step, order, before);
            }
        }
        self.orders = orders;
    }

    fn mine(&mut self, step: usize, action: &Action, miner: &Address) -> Result<(), ScenarioError> {
        let contested: BTreeSet<TxId> = self
            .pool
            .entries_by_seq()
            .into_iter()
            .filter(|e| self.pool.conflicts_of(&e.tx).len() > 1)
            .map(|e| e.txid)
            .collect();
        let picked: Vec<(Transaction, u64)> = self
            .pool
            .select_entries(self.scenario.policy.block_max_vbytes)
            .into_iter()
            .map(|e| (e.tx.clone(), e.fee.to_sat()))
            .collect();
        let txs: Vec<Transaction> = picked.iter().map(|(t, _)| t.clone()).collect();
        let block = self
            .chain
            .mine(txs, miner, &self.registry)
            .map_err(|e| step_err(step, action, e))?
            .clone();
        let evicted = self.pool.evict_for_block(&block);
        self.tokens.index_block(&block, &self.chain);
        let replayed = rebuild(self.chain.blocks()).expect("chain heights are consecutive");
        self.replay_ok &= replayed == self.tokens;
        self.supply_ok &= self.tokens.check_supply().is_ok();

        let rows = picked
            .iter()
            .map(|(tx, fee)| {
                let txid = tx.txid();
                BlockTxRow {
                    label: self.label_of(&txid).unwrap_or("?").to_string(),
                    txid: txid.to_string(),
                    fee_sats: *fee,
                    fee_rate: FeeRate::new(Amount::sat(*fee), tx.vsize()).to_string(),
                    contested: contested.contains(&txid),
                }
            })
            .collect();
        let included: BTreeSet<TxId> = block.txs.iter().map(|t| t.txid()).collect();
        self.blocks.push(BlockRow {
            height: block.height,
            hash: block.hash.to_string(),
            txs: rows,
            evicted: evicted
                .iter()
                .filter(|id| !included.contains(id))
                .map(|id| self.label_of(id).unwrap_or("?").to_string())
                .collect(),
        });

        let attacks = std::mem::take(&mut self.attacks);
        self.attacks = attacks
            .into_iter()
            .map(|(w, v, o)| {
                let o = verify_success(&o, &self.chain, &self.pool, &self.tokens);
                (w, v, o)
            })
            .collect();
        Ok(())
    }

    fn pool_rows(&self) -> Vec<PoolRow> {
        self.pool
            .entries_by_seq()
            .into_iter()
            .map(|e| PoolRow {
                label: self.label_of(&e.txid).unwrap_or("?").to_string(),
                txid: e.txid.to_string(),
                fee_sats: e.fee.to_sat(),
                fee_rate: e.fee_rate.to_string(),
                seq: e.seq,
            })
            .collect()
    }

    fn snapshot(&mut self, step: usize, action: &Action) {
        self.timeline.push(Snapshot {
            step,
            action: action.kind().to_string(),
            height: self.chain.height(),
            mempool: self.pool_rows(),
        });
    }

    fn wallet_name(&self, address: &Address) -> String {
        self.keys
            .iter()
            .find(|(_, k)| &k.address() == address)
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| address.to_string())
    }

    /// Runs every action, then evaluates expectations.
    pub fn run(mut self) -> Result<Report, ScenarioError> {
        let actions = self.scenario.actions.clone();
        for (i, action) in actions.iter().enumerate() {
            self.step(i + 1, action)?;
        }
        Ok(self.report())
    }

    /// The block at `height`, or the last mined one.
    fn block_row(&self, height: Option<u64>) -> Option<&BlockRow> {
        match height {
            Some(h) => self.blocks.iter().find(|b| b.height == h),
            None => self.blocks.last(),
        }
    }

    /// The first transfer-carrying transaction in a block.
    fn winner(&self, height: Option<u64>) -> Option<(&BlockTxRow, Option<String>)> {
        let row = self.block_row(height)?;
        row.txs.iter().find_map(|r| {
            let tx = self.txs.get(&r.label)?;
            let is_transfer = extract_inscriptions(tx)
                .iter()
                .any(|(_, m)| m.op == Op::Transfer);
            is_transfer.then(|| {
                let payer = tx
                    .inputs
                    .first()
                    .and_then(|i| crate::ledger::AddressResolver::owner(&self.chain, &i.outpoint))
                    .map(|a| self.wallet_name(&a));
                (r, payer)
            })
        })
    }

    fn check(&self, e: &Expectation) -> (String, bool, String) {
        match e {
            Expectation::WinnerFee { height, fee } => {
                let actual = self.winner(*height).map(|(r, _)| r.fee_sats);
                (
                    format!("winner fee = {fee}"),
                    actual == Some(*fee),
                    format!("{actual:?}"),
                )
            }
            Expectation::WinnerWallet { height, wallet } => {
                let actual = self.winner(*height).and_then(|(_, w)| w);
                (
                    format!("winner wallet = {wallet}"),
                    actual.as_deref() == Some(wallet.as_str()),
                    format!("{actual:?}"),
                )
            }
            Expectation::TokenBalance {
                wallet,
                tick,
                balance,
            } => {
                let actual = self.address(wallet).map(|a| self.tokens.balance(&a, tick));
                (
                    format!("{wallet} holds {balance} {tick}"),
                    actual == Some(*balance),
                    format!("{actual:?}"),
                )
            }
            Expectation::Attack {
                wallet,
                success,
                included,
                victim_evicted,
                tokens_received,
            } => {
                let o = self
                    .attacks
                    .iter()
                    .find(|(w, _, _)| w == wallet)
                    .map(|(_, _, o)| o);
                let ok = o.is_some_and(|o| {
                    success.is_none_or(|s| o.success() == s)
                        && included.is_none_or(|s| o.included == s)
                        && victim_evicted.is_none_or(|s| o.victim_evicted == s)
                        && tokens_received.is_none_or(|s| o.tokens_received == s)
                });
                let actual = o.map(|o| {
                    format!(
                        "success={} included={} victim_evicted={} tokens_received={}",
                        o.success(),
                        o.included,
                        o.victim_evicted,
                        o.tokens_received
                    )
                });
                (
                    format!("attack by {wallet}"),
                    ok,
                    actual.unwrap_or_else(|| "no attack".into()),
                )
            }
            Expectation::OrderState { order, state } => {
                let actual = self.order(order).map(|o| o.state.to_string());
                (
                    format!("order {order} is {state}"),
                    actual.as_deref() == Some(state.as_str()),
                    format!("{actual:?}"),
                )
            }
            Expectation::SubmitResult { tx, result } => {
                let actual = self
                    .submissions
                    .iter()
                    .find(|s| &s.label == tx)
                    .map(|s| s.result.clone());
                (
                    format!("{tx} submission {result}"),
                    actual.as_deref() == Some(result.as_str()),
                    format!("{actual:?}"),
                )
            }
            Expectation::Rejected { tx, reason } => {
                let actual = self
                    .submissions
                    .iter()
                    .find(|s| &s.label == tx)
                    .map(|s| s.result.clone());
                (
                    format!("{tx} rejected {reason}"),
                    actual.as_deref() == Some(reason.as_str()),
                    format!("{actual:?}"),
                )
            }
            Expectation::PsbtComplete { sale, complete } => {
                let actual = self.listing_psbt(sale).map(is_complete);
                (
                    format!("listing {sale} complete = {complete}"),
                    actual == Some(*complete),
                    format!("{actual:?}"),
                )
            }
            Expectation::Fee { tx, fee } => {
                let actual = self.fee_of(tx);
                (
                    format!("{tx} fee = {fee}"),
                    actual == Some(*fee),
                    format!("{actual:?}"),
                )
            }
            Expectation::BlockTxs { height, txs } => {
                let actual: Option<Vec<String>> = self
                    .block_row(*height)
                    .map(|b| b.txs.iter().map(|t| t.label.clone()).collect());
                (
                    format!(
                        "block {} holds {txs:?}",
                        height.map_or("last".into(), |h| h.to_string())
                    ),
                    actual.as_ref() == Some(txs),
                    format!("{actual:?}"),
                )
            }
            Expectation::MempoolEmpty => (
                "mempool empty".into(),
                self.pool.is_empty(),
                format!("{} entries", self.pool.len()),
            ),
        }
    }

    /// Fee of a labelled transaction against the UTXO set it was built on.
    fn fee_of(&self, label: &str) -> Option<u64> {
        let sub = self.submissions.iter().find(|s| s.label == label)?;
        sub.fee_sats
    }

    fn fee_table(&self) -> Vec<FeeRow> {
        let mut rows = Vec::new();
        let mut seen = BTreeSet::new();
        for s in &self.submissions {
            let role = self.roles.get(&s.label).copied().unwrap_or(Role::Setup);
            if role == Role::Setup || !seen.insert(s.label.clone()) {
                continue;
            }
            let tx = &self.txs[&s.label];
            rows.push(FeeRow {
                label: s.label.clone(),
                role: role.as_str().to_string(),
                fee_sats: s.fee_sats.unwrap_or(0),
                vsize: tx.vsize(),
                fee_rate: s.fee_rate.clone().unwrap_or_default(),
            });
        }
        rows
    }

    pub fn report(&self) -> Report {
        let expectations: Vec<ExpectationRow> = self
            .scenario
            .expect
            .iter()
            .map(|e| {
                let (description, passed, actual) = self.check(e);
                ExpectationRow {
                    description,
                    passed,
                    actual,
                }
            })
            .collect();
        let indexer = IndexerCheck {
            replay_matches: self.replay_ok,
            supply_conserved: self.supply_ok,
        };
        let passed = expectations.iter().all(|e| e.passed)
            && indexer.replay_matches
            && indexer.supply_conserved;
        let mut balances: Vec<BalanceRow> = self
            .tokens
            .balances()
            .map(|(a, t, v)| BalanceRow {
                tick: t.to_string(),
                wallet: self.wallet_name(a),
                balance: v,
            })
            .collect();
        balances.sort_by(|a, b| (&a.tick, &a.wallet).cmp(&(&b.tick, &b.wallet)));
        Report {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            policy: self.scenario.policy.mode.to_string(),
            fee_lock: self.scenario.policy.fee_lock,
            wallets: self
                .scenario
                .wallets
                .iter()
                .map(|w| (w.clone(), self.address(w).expect("declared").to_string()))
                .collect(),
            timeline: self.timeline.clone(),
            submissions: self.submissions.clone(),
            fee_table: self.fee_table(),
            blocks: self.blocks.clone(),
            balances,
            attacks: self
                .attacks
                .iter()
                .map(|(w, victim, o)| AttackRow {
                    wallet: w.clone(),
                    victim: victim.clone(),
                    label: self.label_of(&o.attack_txid).unwrap_or("?").to_string(),
                    fee_sats: o.attack_fee.to_sat(),
                    fee_rate: o.attack_fee_rate.to_string(),
                    admission: o.admission.clone(),
                    included: o.included,
                    victim_evicted: o.victim_evicted,
                    tokens_received: o.tokens_received,
                    success: o.success(),
                })
                .collect(),
            orders: self
                .orders
                .iter()
                .map(|(n, o)| OrderRow {
                    name: n.clone(),
                    state: o.state.to_string(),
                    history: o.history.iter().map(|s| s.to_string()).collect(),
                    broadcast_rates: o.broadcast_rates(),
                })
                .collect(),
            listings: self
                .sales
                .iter()
                .filter_map(|(sale, s)| {
                    let psbt = s.as_ref()?;
                    Some(ListingRow {
                        sale: sale.clone(),
                        complete: is_complete(psbt),
                        psbt: psbt.to_text().unwrap_or_default(),
                    })
                })
                .collect(),
            indexer,
            expectations,
            passed,
        }
    }
}

/// Runs a scenario to its report.
pub fn run_scenario(scenario: Scenario) -> Result<Report, ScenarioError> {
    Simulation::new(scenario)?.run()
}
