//! Tiered protection: the buyer pre-signs the same purchase at increasing
//! fee rates and broadcasts the next tier whenever a conflicting entry
//! outbids the current one.

use std::fmt;

use thiserror::Error;

use crate::ledger::{Amount, Chain, SecretKey, Transaction, TxId, Verifier};
use crate::mempool::{FeeRate, Mempool, MempoolEntry, SubmitResult};
use crate::psbt::{finalize_psbt, sign_psbt, Psbt, PsbtError};
use crate::sale::{set_fee, SaleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderState {
    Pending,
    TopFee,
    GettingReplaced,
    Confirmed,
    Exhausted,
}

impl OrderState {
    pub fn is_final(self) -> bool {
        matches!(self, OrderState::Confirmed | OrderState::Exhausted)
    }
}

impl fmt::Display for OrderState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderState::Pending => "Pending",
            OrderState::TopFee => "Top Fee",
            OrderState::GettingReplaced => "Getting Replaced",
            OrderState::Confirmed => "Confirmed",
            OrderState::Exhausted => "Exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtectError {
    #[error("tier rates must be non-empty and strictly increasing")]
    NonIncreasingTiers,
    #[error("change cannot cover the {rate} sat/vB tier")]
    InsufficientChange { rate: u64 },
    #[error("order still needs signatures on inputs {0:?}")]
    Unsigned(Vec<usize>),
    #[error(transparent)]
    Psbt(PsbtError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tier {
    pub rate: u64,
    pub fee: Amount,
    pub tx: Transaction,
    pub txid: TxId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedOrder {
    pub tiers: Vec<Tier>,
    /// Index of the highest tier broadcast so far.
    pub current_tier: usize,
    pub state: OrderState,
    /// Every state the order has passed through, in order.
    pub history: Vec<OrderState>,
    /// Admission label of each broadcast attempt, by tier.
    pub attempts: Vec<(u64, String)>,
}

/// Signs one purchase per tier rate. The PSBT's last output is the change
/// that shrinks as the rate rises.
pub fn create_protected_order(
    psbt: &Psbt,
    signer: &SecretKey,
    tier_rates: &[u64],
) -> Result<ProtectedOrder, ProtectError> {
    if tier_rates.is_empty() || tier_rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ProtectError::NonIncreasingTiers);
    }
    let vsize = psbt.estimated_vsize();
    let mut tiers = Vec::with_capacity(tier_rates.len());
    for &rate in tier_rates {
        let mut p = psbt.clone();
        let fee = Amount::from_sat(rate.saturating_mul(vsize))
            .ok_or(ProtectError::InsufficientChange { rate })?;
        set_fee(&mut p, fee).map_err(|e| match e {
            SaleError::InsufficientFunds { .. } => ProtectError::InsufficientChange { rate },
            SaleError::Psbt(e) => ProtectError::Psbt(e),
            other => unreachable!("set_fee only fails on funds: {other}"),
        })?;
        let (signed, _) = sign_psbt(&p, signer);
        let tx = finalize_psbt(&signed).map_err(|e| match e {
            PsbtError::Incomplete(v) => ProtectError::Unsigned(v),
            other => ProtectError::Psbt(other),
        })?;
        tiers.push(Tier {
            rate,
            fee,
            txid: tx.txid(),
            tx,
        });
    }
    Ok(ProtectedOrder {
        tiers,
        current_tier: 0,
        state: OrderState::Pending,
        history: vec![OrderState::Pending],
        attempts: Vec::new(),
    })
}

impl ProtectedOrder {
    fn set_state(&mut self, state: OrderState) {
        if self.history.last() != Some(&state) {
            self.history.push(state);
        }
        self.state = state;
    }

    pub fn current(&self) -> &Tier {
        &self.tiers[self.current_tier]
    }

    /// Rates of every tier broadcast so far.
    pub fn broadcast_rates(&self) -> Vec<u64> {
        self.attempts.iter().map(|(r, _)| *r).collect()
    }

    fn submit_tier(
        &mut self,
        index: usize,
        pool: &mut Mempool,
        chain: &Chain,
        verifier: &dyn Verifier,
    ) -> SubmitResult {
        self.current_tier = index;
        let tier = &self.tiers[index];
        let result = pool.submit(tier.tx.clone(), chain.utxos(), verifier);
        self.attempts.push((tier.rate, result.label().to_string()));
        result
    }

    /// Broadcasts the base tier.
    pub fn start(
        &mut self,
        pool: &mut Mempool,
        chain: &Chain,
        verifier: &dyn Verifier,
    ) -> SubmitResult {
        let result = self.submit_tier(0, pool, chain, verifier);
        self.refresh(pool, chain);
        result
    }

    fn is_ours(&self, txid: &TxId) -> bool {
        self.tiers.iter().any(|t| &t.txid == txid)
    }

    /// Whether a foreign conflicting entry would be mined ahead of `entry`.
    fn outbid(&self, entry: &MempoolEntry, pool: &Mempool) -> bool {
        pool.conflicts_of(&entry.tx)
            .iter()
            .filter(|id| !self.is_ours(id))
            .filter_map(|id| pool.get(id))
            .any(|rival| {
                rival.fee_rate > entry.fee_rate
                    || (rival.fee_rate == entry.fee_rate && rival.seq < entry.seq)
            })
    }

    fn refresh(&mut self, pool: &Mempool, chain: &Chain) {
        if self.tiers.iter().any(|t| chain.is_confirmed(&t.txid)) {
            self.set_state(OrderState::Confirmed);
            return;
        }
        let state = match pool.get(&self.current().txid) {
            Some(entry) if !self.outbid(entry, pool) => OrderState::TopFee,
            _ if self.current_tier + 1 == self.tiers.len() => OrderState::Exhausted,
            _ => OrderState::GettingReplaced,
        };
        self.set_state(state);
    }

    /// One monitoring tick. Returns the admission result of any tier it
    /// broadcast.
    pub fn monitor_and_escalate(
        &mut self,
        pool: &mut Mempool,
        chain: &Chain,
        verifier: &dyn Verifier,
    ) -> Option<SubmitResult> {
        if self.state.is_final() || self.state == OrderState::Pending {
            return None;
        }
        self.refresh(pool, chain);
        if self.state != OrderState::GettingReplaced {
            return None;
        }
        let result = self.submit_tier(self.current_tier + 1, pool, chain, verifier);
        self.refresh(pool, chain);
        Some(result)
    }

    /// Ticks until the order stops broadcasting.
    pub fn settle(
        &mut self,
        pool: &mut Mempool,
        chain: &Chain,
        verifier: &dyn Verifier,
    ) -> Vec<SubmitResult> {
        let mut results = Vec::new();
        while let Some(r) = self.monitor_and_escalate(pool, chain, verifier) {
            results.push(r);
        }
        results
    }

    pub fn current_rate(&self) -> FeeRate {
        FeeRate::new(self.current().fee, self.current().tx.vsize())
    }
}
