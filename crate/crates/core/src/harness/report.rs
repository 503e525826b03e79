//! Run reports, as text or JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("unsupported format {0}; use text or json")]
    UnsupportedFormat(String),
    #[error("cannot read report: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolRow {
    pub label: String,
    pub txid: String,
    pub fee_sats: u64,
    pub fee_rate: String,
    pub seq: u64,
}

/// Mempool contents after a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub action: String,
    pub height: u64,
    pub mempool: Vec<PoolRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRow {
    pub step: usize,
    pub label: String,
    pub txid: String,
    pub fee_sats: Option<u64>,
    pub fee_rate: Option<String>,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeRow {
    pub label: String,
    pub role: String,
    pub fee_sats: u64,
    pub vsize: u64,
    pub fee_rate: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockTxRow {
    pub label: String,
    pub txid: String,
    pub fee_sats: u64,
    pub fee_rate: String,
    /// Had a conflicting pool entry when the block was built.
    pub contested: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRow {
    pub height: u64,
    pub hash: String,
    pub txs: Vec<BlockTxRow>,
    /// Pool entries dropped because the block spent their inputs.
    pub evicted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub tick: String,
    pub wallet: String,
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackRow {
    pub wallet: String,
    pub victim: String,
    pub label: String,
    pub fee_sats: u64,
    pub fee_rate: String,
    pub admission: String,
    pub included: bool,
    pub victim_evicted: bool,
    pub tokens_received: u64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRow {
    pub name: String,
    pub state: String,
    pub history: Vec<String>,
    pub broadcast_rates: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingRow {
    pub sale: String,
    pub complete: bool,
    pub psbt: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexerCheck {
    /// Rebuilding balances from the chain matched the live ledger.
    pub replay_matches: bool,
    pub supply_conserved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectationRow {
    pub description: String,
    pub passed: bool,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub policy: String,
    pub fee_lock: bool,
    pub wallets: Vec<(String, String)>,
    pub timeline: Vec<Snapshot>,
    pub submissions: Vec<SubmissionRow>,
    pub fee_table: Vec<FeeRow>,
    pub blocks: Vec<BlockRow>,
    pub balances: Vec<BalanceRow>,
    pub attacks: Vec<AttackRow>,
    pub orders: Vec<OrderRow>,
    pub listings: Vec<ListingRow>,
    pub indexer: IndexerCheck,
    pub expectations: Vec<ExpectationRow>,
    pub passed: bool,
}

impl Report {
    pub fn from_json(text: &str) -> Result<Report, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {} seed={} policy={} fee_lock={}",
            self.scenario, self.seed, self.policy, self.fee_lock
        );
        for (name, addr) in &self.wallets {
            let _ = writeln!(s, "wallet {name} {}", &addr[..16.min(addr.len())]);
        }
        for snap in &self.timeline {
            let _ = writeln!(
                s,
                "step {} {} height={} mempool={}",
                snap.step,
                snap.action,
                snap.height,
                snap.mempool.len()
            );
            for e in &snap.mempool {
                let _ = writeln!(
                    s,
                    "  pool seq={} label={} fee_sats={} fee_rate={} txid={}",
                    e.seq, e.label, e.fee_sats, e.fee_rate, e.txid
                );
            }
        }
        for sub in &self.submissions {
            let _ = writeln!(
                s,
                "submit step={} label={} fee_sats={} fee_rate={} result={}",
                sub.step,
                sub.label,
                sub.fee_sats.map_or("-".into(), |f| f.to_string()),
                sub.fee_rate.as_deref().unwrap_or("-"),
                sub.result
            );
        }
        if !self.fee_table.is_empty() {
            let _ = writeln!(s, "fees");
            let _ = writeln!(
                s,
                "  {:<16} {:<11} {:>12} {:>6} {:>14}",
                "label", "role", "fee_sats", "vsize", "sat/vB"
            );
            for r in &self.fee_table {
                let _ = writeln!(
                    s,
                    "  {:<16} {:<11} {:>12} {:>6} {:>14}",
                    r.label, r.role, r.fee_sats, r.vsize, r.fee_rate
                );
            }
        }
        for b in &self.blocks {
            let _ = writeln!(s, "block {} hash={} txs={}", b.height, b.hash, b.txs.len());
            for t in &b.txs {
                let tag = if t.contested { "winner" } else { "included" };
                let _ = writeln!(
                    s,
                    "  {tag} tx fee_sats={} fee_rate={} label={} txid={}",
                    t.fee_sats, t.fee_rate, t.label, t.txid
                );
            }
            for e in &b.evicted {
                let _ = writeln!(s, "  evicted {e}");
            }
        }
        for b in &self.balances {
            let _ = writeln!(s, "balance {} {} {}", b.tick, b.wallet, b.balance);
        }
        for a in &self.attacks {
            let _ = writeln!(
                s,
                "attack {} victim={} fee_sats={} fee_rate={} admission={} included={} victim_evicted={} tokens_received={} success={}",
                a.wallet, a.victim, a.fee_sats, a.fee_rate, a.admission, a.included, a.victim_evicted, a.tokens_received, a.success
            );
        }
        for o in &self.orders {
            let _ = writeln!(
                s,
                "order {} state={} history=[{}] broadcast_rates={:?}",
                o.name,
                o.state,
                o.history.join(", "),
                o.broadcast_rates
            );
        }
        for l in &self.listings {
            let _ = writeln!(s, "listing {} complete={} {}", l.sale, l.complete, l.psbt);
        }
        let _ = writeln!(
            s,
            "indexer replay_matches={} supply_conserved={}",
            self.indexer.replay_matches, self.indexer.supply_conserved
        );
        for e in &self.expectations {
            let verdict = if e.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(
                s,
                "expect {verdict} {} (actual {})",
                e.description, e.actual
            );
        }
        let _ = writeln!(s, "result {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

pub fn emit_report(report: &Report, format: &str) -> Result<String, ReportError> {
    match format {
        "text" => Ok(report.to_text()),
        "json" => Ok(report.to_json()),
        other => Err(ReportError::UnsupportedFormat(other.to_string())),
    }
}
