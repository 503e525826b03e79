//! The sniping bot: observe a pending purchase, copy its sale, outbid it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indexer::TokenLedger;
use crate::inscription::{extract_inscriptions, InscriptionMetadata, Op};
use crate::ledger::{
    compute_fee, Address, Amount, Chain, OutPoint, Script, SecretKey, Signature, Transaction, TxId,
    TxOutput, UtxoEntry, UtxoSet, Verifier,
};
use crate::mempool::{FeeRate, Mempool, SubmitResult};
use crate::psbt::{finalize_psbt, sign_psbt, Psbt};
use crate::sale::{set_fee, Coin, Listing, PurchaseShape, SaleError};

pub const DEFAULT_OUTBID_MARGIN: u64 = 140_000;
pub const DEFAULT_UNDERBID_FEE: u64 = 100;

/// What the bot learns from one pending transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VictimObservation {
    pub victim_txid: TxId,
    pub payer: Option<Address>,
    pub victim_inputs: Vec<OutPoint>,
    pub seller_output: (Address, Amount),
    pub inscription: InscriptionMetadata,
    pub victim_fee: Amount,
    pub victim_vsize: u64,
    pub victim_fee_rate: FeeRate,
    /// The seller's signed sale, when the victim spends a carrier.
    pub listing: Option<Listing>,
}

/// Interprets `tx` as a pending token purchase.
pub fn observe_tx(tx: &Transaction, utxos: &UtxoSet) -> Option<VictimObservation> {
    let (_, inscription) = extract_inscriptions(tx)
        .into_iter()
        .find(|(_, m)| m.op == Op::Transfer)?;
    let victim_fee = compute_fee(tx, utxos).ok()?;
    let payer = tx
        .inputs
        .first()
        .and_then(|i| utxos.get(&i.outpoint))
        .and_then(|e| e.address().cloned());
    let seller_output = tx.outputs.iter().find_map(|o| {
        let a = o.script.address()?;
        (Some(a) != payer.as_ref()).then(|| (a.clone(), o.amount))
    })?;
    Some(VictimObservation {
        victim_txid: tx.txid(),
        payer,
        victim_inputs: tx.inputs.iter().map(|i| i.outpoint).collect(),
        seller_output,
        inscription,
        victim_fee,
        victim_vsize: tx.vsize(),
        victim_fee_rate: FeeRate::new(victim_fee, tx.vsize()),
        listing: Listing::from_tx(tx, utxos),
    })
}

/// One observation per pool entry carrying a transfer, in arrival order.
pub fn scan_mempool(pool: &Mempool, utxos: &UtxoSet) -> Vec<VictimObservation> {
    pool.entries_by_seq()
        .into_iter()
        .filter_map(|e| observe_tx(&e.tx, utxos))
        .collect()
}

/// How the bot prices its copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum Strategy {
    /// Victim fee plus `margin_sats`, falling back to the smallest fee whose
    /// rate still beats the victim when funds run short.
    Outbid {
        #[serde(default = "default_margin")]
        margin_sats: u64,
    },
    /// A fixed absolute fee, for control runs.
    Underbid {
        #[serde(default = "default_underbid")]
        fee_sats: u64,
    },
    /// `fixed_rate_sat_vb` times the copy's vsize.
    FixedRate { fixed_rate_sat_vb: u64 },
}

fn default_margin() -> u64 {
    DEFAULT_OUTBID_MARGIN
}

fn default_underbid() -> u64 {
    DEFAULT_UNDERBID_FEE
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Outbid {
            margin_sats: DEFAULT_OUTBID_MARGIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnipeVariant {
    /// Spend the victim's sale carrier, so the copy and the victim conflict.
    #[default]
    SharedInput,
    /// Fund the copy entirely from the bot's own coins.
    DisjointInputs,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("funds {have} cannot cover {need}")]
    InsufficientFunds { need: Amount, have: Amount },
    #[error("victim does not spend a signed sale carrier")]
    NoSaleInput,
    #[error(transparent)]
    Sale(SaleError),
}

impl From<SaleError> for AttackError {
    fn from(e: SaleError) -> Self {
        match e {
            SaleError::InsufficientFunds { need, have } => {
                AttackError::InsufficientFunds { need, have }
            }
            other => AttackError::Sale(other),
        }
    }
}

fn listing_for(obs: &VictimObservation, variant: SnipeVariant) -> Result<Listing, AttackError> {
    match (&obs.listing, variant) {
        (Some(l), _) => Ok(l.clone()),
        (None, SnipeVariant::SharedInput) => Err(AttackError::NoSaleInput),
        (None, SnipeVariant::DisjointInputs) => {
            // Without a carrier the copy only needs the payment and the payload.
            let payload = obs.inscription.to_payload().map_err(SaleError::from)?;
            Ok(Listing {
                carrier: obs.victim_inputs[0],
                carrier_utxo: UtxoEntry {
                    amount: Amount::ZERO,
                    script: Script::Address(obs.seller_output.0.clone()),
                },
                seller: obs.seller_output.0.clone(),
                sequence: 0,
                prefix: vec![
                    TxOutput::pay(obs.seller_output.0.clone(), obs.seller_output.1),
                    TxOutput::data(payload),
                ],
                seller_signature: Signature([0; 32]),
                seller_extra: Vec::new(),
            })
        }
    }
}

/// Smallest fee at `vsize` whose rate strictly exceeds `rate`.
fn min_outbid_fee(rate: FeeRate, vsize: u64) -> u64 {
    let num = rate.fee().to_sat() as u128 * vsize as u128;
    (num / rate.vsize() as u128 + 1) as u64
}

/// Builds the unsigned copy: the victim's prefix outputs verbatim, the bot's
/// funds as inputs and its change last.
pub fn craft_snipe(
    obs: &VictimObservation,
    funds: &[Coin],
    strategy: Strategy,
    variant: SnipeVariant,
    change: &Address,
    verifier: &dyn Verifier,
) -> Result<Psbt, AttackError> {
    let listing = listing_for(obs, variant)?;
    let shape = match variant {
        SnipeVariant::SharedInput => PurchaseShape::SharedInput,
        SnipeVariant::DisjointInputs => PurchaseShape::DisjointInputs,
    };
    let mut psbt = listing.purchase(funds, change, shape, verifier)?;
    let vsize = psbt.estimated_vsize();
    let have = psbt.total_input();
    let budget = have
        .checked_sub(listing.prefix_total())
        .unwrap_or(Amount::ZERO);
    let fee = match strategy {
        Strategy::Outbid { margin_sats } => {
            let floor = min_outbid_fee(obs.victim_fee_rate, vsize);
            let preferred = (obs.victim_fee.to_sat() + margin_sats).max(floor);
            if preferred <= budget.to_sat() {
                preferred
            } else {
                floor
            }
        }
        Strategy::Underbid { fee_sats } => fee_sats,
        Strategy::FixedRate { fixed_rate_sat_vb } => fixed_rate_sat_vb * vsize,
    };
    let fee = Amount::from_sat(fee).ok_or(AttackError::InsufficientFunds {
        need: Amount::MAX,
        have,
    })?;
    set_fee(&mut psbt, fee)?;
    Ok(psbt)
}

/// Result of one snipe, filled in two stages: at broadcast and after a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackOutcome {
    pub attacker: Address,
    pub victim_txid: TxId,
    pub attack_txid: TxId,
    pub attack_fee: Amount,
    pub attack_fee_rate: FeeRate,
    pub tick: String,
    pub amt: u64,
    pub admission: String,
    pub included: bool,
    pub victim_evicted: bool,
    pub tokens_before: u64,
    pub tokens_received: u64,
}

impl AttackOutcome {
    pub fn success(&self) -> bool {
        self.included && self.victim_evicted && self.tokens_received == self.amt
    }
}

/// Everything the bot needs to read while attacking.
pub struct AttackEnv<'a> {
    pub utxos: &'a UtxoSet,
    pub verifier: &'a dyn Verifier,
    pub ledger: &'a TokenLedger,
}

/// Crafts, signs and finalizes the copy without broadcasting it.
pub fn prepare_attack(
    obs: &VictimObservation,
    funds: &[Coin],
    strategy: Strategy,
    variant: SnipeVariant,
    key: &SecretKey,
    env: &AttackEnv<'_>,
) -> Result<(Transaction, AttackOutcome), AttackError> {
    let attacker = key.address();
    let psbt = craft_snipe(obs, funds, strategy, variant, &attacker, env.verifier)?;
    let (signed, _) = sign_psbt(&psbt, key);
    let tx = finalize_psbt(&signed).map_err(SaleError::from)?;
    let fee = signed.fee().expect("fee set by craft");
    let outcome = AttackOutcome {
        victim_txid: obs.victim_txid,
        attack_txid: tx.txid(),
        attack_fee: fee,
        attack_fee_rate: FeeRate::new(fee, tx.vsize()),
        tick: obs.inscription.tick.clone(),
        amt: obs.inscription.amt_value().expect("validated transfer"),
        admission: "pending".into(),
        included: false,
        victim_evicted: false,
        tokens_before: env.ledger.balance(&attacker, &obs.inscription.tick),
        tokens_received: 0,
        attacker,
    };
    Ok((tx, outcome))
}

/// Crafts, signs and broadcasts the copy.
pub fn execute_attack(
    obs: &VictimObservation,
    funds: &[Coin],
    strategy: Strategy,
    variant: SnipeVariant,
    key: &SecretKey,
    pool: &mut Mempool,
    env: &AttackEnv<'_>,
) -> Result<(AttackOutcome, SubmitResult), AttackError> {
    let (tx, mut outcome) = prepare_attack(obs, funds, strategy, variant, key, env)?;
    let result = pool.submit(tx, env.utxos, env.verifier);
    outcome.admission = result.label().to_string();
    Ok((outcome, result))
}

/// Final verdict once blocks have been mined and indexed.
pub fn verify_success(
    outcome: &AttackOutcome,
    chain: &Chain,
    pool: &Mempool,
    ledger: &TokenLedger,
) -> AttackOutcome {
    let mut out = outcome.clone();
    out.included = chain.is_confirmed(&outcome.attack_txid);
    out.victim_evicted =
        !pool.contains(&outcome.victim_txid) && !chain.is_confirmed(&outcome.victim_txid);
    out.tokens_received = ledger
        .balance(&outcome.attacker, &outcome.tick)
        .saturating_sub(outcome.tokens_before);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mempool::MempoolPolicy;
    use crate::testkit::World;

    fn world() -> World {
        World::new(MempoolPolicy::default())
    }

    fn coins(w: &World, k: &SecretKey) -> Vec<Coin> {
        w.coins(k)
    }

    fn buyer_tx(w: &World) -> Transaction {
        w.buyer_tx(None)
    }

    fn env(w: &World) -> AttackEnv<'_> {
        AttackEnv {
            utxos: w.chain.utxos(),
            verifier: &w.reg,
            ledger: &w.ledger,
        }
    }

    #[test]
    fn observation_of_the_buyer() {
        let mut w = world();
        let tx = buyer_tx(&w);
        w.pool.submit(tx.clone(), w.chain.utxos(), &w.reg);
        let obs = scan_mempool(&w.pool, w.chain.utxos());
        assert_eq!(obs.len(), 1);
        let o = &obs[0];
        assert_eq!(
            o.seller_output,
            (w.seller.address(), Amount::sat(50_000_000))
        );
        assert_eq!(o.victim_fee, Amount::sat(27_985_000));
        assert_eq!(o.inscription, InscriptionMetadata::transfer("ak47", 1000));
        assert!(o.listing.is_some());
    }

    #[test]
    fn round_one_fee_values() {
        let w = world();
        let obs = observe_tx(&buyer_tx(&w), w.chain.utxos()).unwrap();
        let e = env(&w);
        let (tx, out) = prepare_attack(
            &obs,
            &coins(&w, &w.high),
            Strategy::default(),
            SnipeVariant::SharedInput,
            &w.high,
            &e,
        )
        .unwrap();
        assert_eq!(out.attack_fee, Amount::sat(28_125_000));
        assert_eq!(
            tx.outputs[0],
            TxOutput::pay(w.seller.address(), Amount::sat(50_000_000))
        );
        assert_eq!(tx.outputs.last().unwrap().amount, Amount::sat(5_000));
        assert!(out.attack_fee_rate > obs.victim_fee_rate);
        // the copied payload is byte-identical
        assert_eq!(tx.outputs[1], buyer_tx(&w).outputs[1]);

        let (_, low) = prepare_attack(
            &obs,
            &coins(&w, &w.low),
            Strategy::Underbid { fee_sats: 100 },
            SnipeVariant::SharedInput,
            &w.low,
            &e,
        )
        .unwrap();
        assert_eq!(low.attack_fee, Amount::sat(100));
    }

    #[test]
    fn outbid_falls_back_to_minimal_increment() {
        let w = world();
        let obs = observe_tx(&buyer_tx(&w), w.chain.utxos()).unwrap();
        let psbt = craft_snipe(
            &obs,
            &coins(&w, &w.high),
            Strategy::Outbid {
                margin_sats: 40_000_000,
            },
            SnipeVariant::SharedInput,
            &w.high.address(),
            &w.reg,
        )
        .unwrap();
        assert_eq!(psbt.fee(), Some(Amount::sat(27_985_001)));
    }

    #[test]
    fn insufficient_funds() {
        let w = world();
        let obs = observe_tx(&buyer_tx(&w), w.chain.utxos()).unwrap();
        let poor: Vec<Coin> = coins(&w, &w.high)
            .into_iter()
            .map(|(op, mut e)| {
                e.amount = Amount::sat(40_000_000);
                (op, e)
            })
            .collect();
        assert!(matches!(
            craft_snipe(
                &obs,
                &poor,
                Strategy::default(),
                SnipeVariant::SharedInput,
                &w.high.address(),
                &w.reg
            ),
            Err(AttackError::InsufficientFunds { .. })
        ));
    }

    #[test]
    fn deterministic_txid() {
        let w = world();
        let obs = observe_tx(&buyer_tx(&w), w.chain.utxos()).unwrap();
        let run = || {
            prepare_attack(
                &obs,
                &coins(&w, &w.high),
                Strategy::default(),
                SnipeVariant::SharedInput,
                &w.high,
                &env(&w),
            )
            .unwrap()
            .1
            .attack_txid
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn disjoint_copy_does_not_conflict() {
        let mut w = world();
        let victim = buyer_tx(&w);
        w.pool.submit(victim.clone(), w.chain.utxos(), &w.reg);
        let obs = observe_tx(&victim, w.chain.utxos()).unwrap();
        let (tx, _) = prepare_attack(
            &obs,
            &coins(&w, &w.high),
            Strategy::default(),
            SnipeVariant::DisjointInputs,
            &w.high,
            &env(&w),
        )
        .unwrap();
        assert!(w.pool.conflicts_of(&tx).is_empty());
        assert_eq!(tx.inputs.len(), 1);
    }
}
