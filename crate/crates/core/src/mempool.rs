//! Unconfirmed-transaction pool.
//!
//! Admission validates against the confirmed UTXO set only; no entry spends
//! another entry's output. In `Coexist` mode conflicting transactions sit
//! side by side until a block picks one. In `RbfReplace` mode a conflicting
//! transaction must beat every entry it conflicts with on fee rate and
//! evicts them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{
    validate, Amount, Block, OutPoint, Transaction, TxError, TxId, UtxoSet, Verifier,
};
use crate::mitigation::feelock::{check_fee_locks, FeeLockError};

/// Fee per virtual byte, kept as an exact fraction.
#[derive(Debug, Clone, Copy)]
pub struct FeeRate {
    fee: Amount,
    vsize: u64,
}

impl FeeRate {
    pub fn new(fee: Amount, vsize: u64) -> FeeRate {
        assert!(vsize > 0, "fee rate over zero vsize");
        FeeRate { fee, vsize }
    }

    pub fn sat_per_vb(rate: u64) -> FeeRate {
        FeeRate {
            fee: Amount::sat(rate),
            vsize: 1,
        }
    }

    pub fn fee(&self) -> Amount {
        self.fee
    }

    pub fn vsize(&self) -> u64 {
        self.vsize
    }

    /// Fee for `vsize` bytes at this rate, rounded up.
    pub fn fee_for(&self, vsize: u64) -> u64 {
        let num = self.fee.to_sat() as u128 * vsize as u128;
        num.div_ceil(self.vsize as u128) as u64
    }

    pub fn to_f64(&self) -> f64 {
        self.fee.to_sat() as f64 / self.vsize as f64
    }
}

impl Ord for FeeRate {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.fee.to_sat() as u128 * other.vsize as u128;
        let rhs = other.fee.to_sat() as u128 * self.vsize as u128;
        lhs.cmp(&rhs)
    }
}

impl PartialOrd for FeeRate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for FeeRate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FeeRate {}

/// Three decimals, rounded half up.
impl fmt::Display for FeeRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.vsize as u128;
        let milli = (self.fee.to_sat() as u128 * 2000 + v) / (2 * v);
        write!(f, "{}.{:03}", milli / 1000, milli % 1000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyMode {
    #[default]
    Coexist,
    RbfReplace,
}

impl FromStr for PolicyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coexist" => Ok(PolicyMode::Coexist),
            "rbf" | "rbf-replace" => Ok(PolicyMode::RbfReplace),
            other => Err(format!("unknown policy mode {other:?}")),
        }
    }
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyMode::Coexist => "coexist",
            PolicyMode::RbfReplace => "rbf-replace",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MempoolPolicy {
    pub mode: PolicyMode,
    /// Whole sats per vbyte.
    pub min_relay_fee_rate: u64,
    pub fee_lock_enforced: bool,
}

impl Default for MempoolPolicy {
    fn default() -> Self {
        MempoolPolicy {
            mode: PolicyMode::Coexist,
            min_relay_fee_rate: 1,
            fee_lock_enforced: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MempoolEntry {
    pub tx: Transaction,
    pub txid: TxId,
    pub fee: Amount,
    pub fee_rate: FeeRate,
    pub seq: u64,
}

impl MempoolEntry {
    /// `txid fee_sats fee_rate seq`
    pub fn listing_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.txid,
            self.fee.to_sat(),
            self.fee_rate,
            self.seq
        )
    }

    fn conflicts_with(&self, tx: &Transaction) -> bool {
        tx.inputs.iter().any(|i| self.tx.spends(&i.outpoint))
    }

    /// Block priority: higher rate first, then earlier arrival.
    fn priority_cmp(&self, other: &MempoolEntry) -> Ordering {
        other
            .fee_rate
            .cmp(&self.fee_rate)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("invalid transaction: {0:?}")]
    InvalidTx(Vec<TxError>),
    #[error("fee rate {rate} below the relay minimum {min} sat/vB")]
    BelowMinFee { rate: FeeRate, min: u64 },
    #[error("fee rate {rate} does not beat conflicting entries {conflicts:?}")]
    RbfFeeTooLow { rate: FeeRate, conflicts: Vec<TxId> },
    #[error("transaction already in the pool")]
    AlreadyInPool,
    #[error("fee lock: {0}")]
    FeeLock(FeeLockError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitResult {
    Accepted(TxId),
    Replaced { txid: TxId, evicted: Vec<TxId> },
    Rejected(RejectReason),
}

impl SubmitResult {
    pub fn is_admitted(&self) -> bool {
        !matches!(self, SubmitResult::Rejected(_))
    }

    pub fn txid(&self) -> Option<TxId> {
        match self {
            SubmitResult::Accepted(txid) | SubmitResult::Replaced { txid, .. } => Some(*txid),
            SubmitResult::Rejected(_) => None,
        }
    }

    /// Short label used in reports and scenario expectations.
    pub fn label(&self) -> &'static str {
        match self {
            SubmitResult::Accepted(_) => "accepted",
            SubmitResult::Replaced { .. } => "replaced",
            SubmitResult::Rejected(r) => match r {
                RejectReason::InvalidTx(_) => "invalid-tx",
                RejectReason::BelowMinFee { .. } => "below-min-fee",
                RejectReason::RbfFeeTooLow { .. } => "rbf-fee-too-low",
                RejectReason::AlreadyInPool => "already-in-pool",
                RejectReason::FeeLock(FeeLockError::BadCommitment) => "bad-commitment",
                RejectReason::FeeLock(FeeLockError::FeeExceedsLock { .. }) => "fee-exceeds-lock",
                RejectReason::FeeLock(FeeLockError::Fee(_)) => "invalid-tx",
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Mempool {
    policy: MempoolPolicy,
    entries: BTreeMap<TxId, MempoolEntry>,
    next_seq: u64,
}

impl Mempool {
    pub fn new(policy: MempoolPolicy) -> Mempool {
        Mempool {
            policy,
            entries: BTreeMap::new(),
            next_seq: 0,
        }
    }

    pub fn policy(&self) -> &MempoolPolicy {
        &self.policy
    }

    pub fn submit(
        &mut self,
        tx: Transaction,
        utxos: &UtxoSet,
        verifier: &dyn Verifier,
    ) -> SubmitResult {
        let txid = tx.txid();
        if self.entries.contains_key(&txid) {
            return SubmitResult::Rejected(RejectReason::AlreadyInPool);
        }
        let fee = match validate(&tx, utxos, verifier) {
            Ok(fee) => fee,
            Err(errors) => return SubmitResult::Rejected(RejectReason::InvalidTx(errors)),
        };
        let fee_rate = FeeRate::new(fee, tx.vsize());
        if fee_rate < FeeRate::sat_per_vb(self.policy.min_relay_fee_rate) {
            return SubmitResult::Rejected(RejectReason::BelowMinFee {
                rate: fee_rate,
                min: self.policy.min_relay_fee_rate,
            });
        }
        if self.policy.fee_lock_enforced {
            if let Err(e) = check_fee_locks(&tx, fee) {
                return SubmitResult::Rejected(RejectReason::FeeLock(e));
            }
        }
        let conflicts = self.conflicts_of(&tx);
        let mut evicted = Vec::new();
        if self.policy.mode == PolicyMode::RbfReplace && !conflicts.is_empty() {
            let beaten = conflicts
                .iter()
                .all(|id| self.entries[id].fee_rate < fee_rate);
            if !beaten {
                return SubmitResult::Rejected(RejectReason::RbfFeeTooLow {
                    rate: fee_rate,
                    conflicts: conflicts.into_iter().collect(),
                });
            }
            evicted = self.remove_by_seq(conflicts);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(
            txid,
            MempoolEntry {
                tx,
                txid,
                fee,
                fee_rate,
                seq,
            },
        );
        if evicted.is_empty() {
            SubmitResult::Accepted(txid)
        } else {
            SubmitResult::Replaced { txid, evicted }
        }
    }

    fn remove_by_seq(&mut self, ids: impl IntoIterator<Item = TxId>) -> Vec<TxId> {
        let mut removed: Vec<MempoolEntry> = ids
            .into_iter()
            .filter_map(|id| self.entries.remove(&id))
            .collect();
        removed.sort_by_key(|e| e.seq);
        removed.into_iter().map(|e| e.txid).collect()
    }

    /// Txids in arrival order.
    pub fn get_raw_mempool(&self) -> Vec<TxId> {
        self.entries_by_seq().into_iter().map(|e| e.txid).collect()
    }

    pub fn entries_by_seq(&self) -> Vec<&MempoolEntry> {
        let mut v: Vec<&MempoolEntry> = self.entries.values().collect();
        v.sort_by_key(|e| e.seq);
        v
    }

    pub fn get(&self, txid: &TxId) -> Option<&MempoolEntry> {
        self.entries.get(txid)
    }

    pub fn contains(&self, txid: &TxId) -> bool {
        self.entries.contains_key(txid)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pool entries sharing at least one input outpoint with `tx`.
    pub fn conflicts_of(&self, tx: &Transaction) -> BTreeSet<TxId> {
        self.entries
            .values()
            .filter(|e| e.conflicts_with(tx))
            .map(|e| e.txid)
            .collect()
    }

    /// Greedy template: descending fee rate, ties by arrival, skipping
    /// anything that conflicts with an earlier pick or overflows the budget.
    pub fn select_entries(&self, max_vbytes: u64) -> Vec<&MempoolEntry> {
        let mut ranked: Vec<&MempoolEntry> = self.entries.values().collect();
        ranked.sort_by(|a, b| a.priority_cmp(b));
        let mut spent: BTreeSet<OutPoint> = BTreeSet::new();
        let mut used = 0u64;
        let mut picked = Vec::new();
        for entry in ranked {
            let size = entry.fee_rate.vsize();
            if used + size > max_vbytes {
                continue;
            }
            if entry.tx.inputs.iter().any(|i| spent.contains(&i.outpoint)) {
                continue;
            }
            spent.extend(entry.tx.inputs.iter().map(|i| i.outpoint));
            used += size;
            picked.push(entry);
        }
        picked
    }

    pub fn select_for_block(&self, max_vbytes: u64) -> Vec<Transaction> {
        self.select_entries(max_vbytes)
            .into_iter()
            .map(|e| e.tx.clone())
            .collect()
    }

    /// Drops everything the block confirmed or made unspendable. Returned in
    /// arrival order.
    pub fn evict_for_block(&mut self, block: &Block) -> Vec<TxId> {
        let consumed: BTreeSet<OutPoint> = block
            .txs
            .iter()
            .flat_map(|tx| tx.inputs.iter().map(|i| i.outpoint))
            .collect();
        let included: BTreeSet<TxId> = block.txs.iter().map(|tx| tx.txid()).collect();
        let doomed: Vec<TxId> = self
            .entries
            .values()
            .filter(|e| {
                included.contains(&e.txid)
                    || e.tx.inputs.iter().any(|i| consumed.contains(&i.outpoint))
            })
            .map(|e| e.txid)
            .collect();
        self.remove_by_seq(doomed)
    }
}
