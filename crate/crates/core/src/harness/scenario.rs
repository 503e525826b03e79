//! Scenario files.
//!
//! A scenario is a TOML document: a seed, a mempool policy, named wallets,
//! genesis allocations, an ordered list of `[[actions]]` tagged by `action`,
//! and `[[expect]]` assertions tagged by `kind`. See `scenarios/*.toml` for
//! the built-ins.

use serde::{Deserialize, Serialize};

use crate::attacker::{SnipeVariant, Strategy};
use crate::ledger::DEFAULT_COINBASE_REWARD;
use crate::mempool::{MempoolPolicy, PolicyMode};

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: PolicyConfig,
    pub wallets: Vec<String>,
    #[serde(default)]
    pub genesis: Vec<Allocation>,
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    pub min_relay_fee_rate: u64,
    pub fee_lock: bool,
    pub block_max_vbytes: u64,
    pub coinbase_reward: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            mode: PolicyMode::Coexist,
            min_relay_fee_rate: 1,
            fee_lock: false,
            block_max_vbytes: 1_000_000,
            coinbase_reward: DEFAULT_COINBASE_REWARD.to_sat(),
        }
    }
}

impl PolicyConfig {
    pub fn mempool_policy(&self) -> MempoolPolicy {
        MempoolPolicy {
            mode: self.mode,
            min_relay_fee_rate: self.min_relay_fee_rate,
            fee_lock_enforced: self.fee_lock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub wallet: String,
    pub amount: u64,
}

/// How a buyer sizes their purchase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuyPricing {
    /// Keep exactly this much change.
    Change(u64),
    /// Pay this many sats per vbyte.
    FeeRate(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    /// Inscribe a deploy from `wallet`'s coins.
    Deploy {
        wallet: String,
        tick: String,
        max: u64,
        lim: u64,
        fee: u64,
    },
    /// Create the zero-amount carrier for sale `sale`.
    PrepareSale {
        wallet: String,
        sale: String,
        fee: u64,
    },
    /// Sign and publish the listing for `sale`.
    PublishPsbt {
        sale: String,
        seller: String,
        tick: String,
        amt: u64,
        price: u64,
        #[serde(default)]
        cosigner: Option<String>,
        /// Commit to this maximum fee.
        #[serde(default)]
        fee_lock: Option<u64>,
    },
    Buy {
        wallet: String,
        sale: String,
        #[serde(flatten)]
        pricing: BuyPricing,
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "yes")]
        broadcast: bool,
    },
    Snipe {
        wallet: String,
        #[serde(flatten, default)]
        strategy: Strategy,
        #[serde(default)]
        variant: SnipeVariant,
        /// Label of the transaction or order to copy; defaults to the
        /// earliest pool transfer not paid by `wallet`.
        #[serde(default)]
        victim: Option<String>,
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "yes")]
        broadcast: bool,
    },
    /// Submit held transactions in the given order.
    Broadcast {
        txs: Vec<String>,
    },
    Protect {
        wallet: String,
        sale: String,
        name: String,
        tiers: Vec<u64>,
    },
    Bump {
        wallet: String,
        tx: String,
        fee_rate: u64,
        #[serde(default)]
        name: Option<String>,
    },
    Mine {
        miner: String,
    },
}

fn yes() -> bool {
    true
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Deploy { .. } => "deploy",
            Action::PrepareSale { .. } => "prepare-sale",
            Action::PublishPsbt { .. } => "publish-psbt",
            Action::Buy { .. } => "buy",
            Action::Snipe { .. } => "snipe",
            Action::Broadcast { .. } => "broadcast",
            Action::Protect { .. } => "protect",
            Action::Bump { .. } => "bump",
            Action::Mine { .. } => "mine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Expectation {
    /// Fee of the winning transfer in block `height` (default: last block).
    WinnerFee {
        #[serde(default)]
        height: Option<u64>,
        fee: u64,
    },
    /// Wallet that funded the winning transfer.
    WinnerWallet {
        #[serde(default)]
        height: Option<u64>,
        wallet: String,
    },
    TokenBalance {
        wallet: String,
        tick: String,
        balance: u64,
    },
    Attack {
        wallet: String,
        #[serde(default)]
        success: Option<bool>,
        #[serde(default)]
        included: Option<bool>,
        #[serde(default)]
        victim_evicted: Option<bool>,
        #[serde(default)]
        tokens_received: Option<u64>,
    },
    OrderState {
        order: String,
        state: String,
    },
    /// Admission label of the first submission of `tx`.
    SubmitResult {
        tx: String,
        result: String,
    },
    Rejected {
        tx: String,
        reason: String,
    },
    PsbtComplete {
        sale: String,
        complete: bool,
    },
    Fee {
        tx: String,
        fee: u64,
    },
    /// Labels of block `height`'s transactions, in block order.
    BlockTxs {
        #[serde(default)]
        height: Option<u64>,
        txs: Vec<String>,
    },
    MempoolEmpty,
}

const BUILTINS: &[(&str, &str)] = &[
    ("round1", include_str!("../../scenarios/round1.toml")),
    ("round2", include_str!("../../scenarios/round2.toml")),
    ("round3", include_str!("../../scenarios/round3.toml")),
    (
        "mitigation-tiered",
        include_str!("../../scenarios/mitigation-tiered.toml"),
    ),
    (
        "mitigation-bump",
        include_str!("../../scenarios/mitigation-bump.toml"),
    ),
    (
        "mitigation-feelock",
        include_str!("../../scenarios/mitigation-feelock.toml"),
    ),
    (
        "rbf-mode-comparison",
        include_str!("../../scenarios/rbf-mode-comparison.toml"),
    ),
    (
        "disjoint-variant",
        include_str!("../../scenarios/disjoint-variant.toml"),
    ),
];

pub fn list_scenarios() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
}

pub fn builtin(name: &str) -> Option<Scenario> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_scenario(text).expect("built-in scenarios parse"))
}

/// A built-in by name, otherwise a path to a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = builtin(name_or_path) {
        return Ok(s);
    }
    let text = std::fs::read_to_string(name_or_path)
        .map_err(|e| ScenarioError::UnknownScenario(format!("{name_or_path}: {e}")))?;
    parse_scenario(&text)
}
