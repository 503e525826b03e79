//! BRC20 inscription metadata: canonical JSON, hex payloads, decoding.
//!
//! Canonical rendering has no whitespace, string values only, and keys in the
//! order `p, op, tick` followed by `max, lim` (deploy) or `amt` (mint/transfer).
//! The leading protocol pair is written `{"p:"brc-20"`, without the closing
//! quote on the key, matching the payloads seen on the wire. Decoding accepts
//! that form as well as strict JSON, in any key order.

use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::ledger::{Script, Transaction};

pub const PROTOCOL: &str = "brc-20";

const STRICT_HEAD: &str = "{\"p\":\"";
const WIRE_HEAD: &str = "{\"p:\"";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Deploy,
    Mint,
    Transfer,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Deploy => "deploy",
            Op::Mint => "mint",
            Op::Transfer => "transfer",
        }
    }

    fn parse(s: &str) -> Option<Op> {
        match s {
            "deploy" => Some(Op::Deploy),
            "mint" => Some(Op::Mint),
            "transfer" => Some(Op::Transfer),
            _ => None,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InscriptionMetadata {
    pub p: String,
    pub op: Op,
    pub tick: String,
    pub amt: Option<String>,
    pub max: Option<String>,
    pub lim: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InscriptionError {
    #[error("payload is not lowercase hex")]
    NotHex,
    #[error("payload is not a JSON object")]
    NotJson,
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),
}

impl InscriptionMetadata {
    pub fn deploy(tick: &str, max: u64, lim: u64) -> InscriptionMetadata {
        InscriptionMetadata {
            p: PROTOCOL.into(),
            op: Op::Deploy,
            tick: tick.into(),
            amt: None,
            max: Some(max.to_string()),
            lim: Some(lim.to_string()),
        }
    }

    pub fn mint(tick: &str, amt: u64) -> InscriptionMetadata {
        InscriptionMetadata {
            p: PROTOCOL.into(),
            op: Op::Mint,
            tick: tick.into(),
            amt: Some(amt.to_string()),
            max: None,
            lim: None,
        }
    }

    pub fn transfer(tick: &str, amt: u64) -> InscriptionMetadata {
        InscriptionMetadata {
            p: PROTOCOL.into(),
            op: Op::Transfer,
            tick: tick.into(),
            amt: Some(amt.to_string()),
            max: None,
            lim: None,
        }
    }

    pub fn validate(&self) -> Result<(), InscriptionError> {
        let invalid = |m: String| Err(InscriptionError::InvalidMetadata(m));
        if self.p != PROTOCOL {
            return invalid(format!("protocol must be {PROTOCOL:?}, got {:?}", self.p));
        }
        let tick_ok = (1..=8).contains(&self.tick.len())
            && self
                .tick
                .bytes()
                .all(|b| b.is_ascii_graphic() && b != b'"' && b != b'\\');
        if !tick_ok {
            return invalid(format!(
                "tick {:?} must be 1-8 printable ascii chars",
                self.tick
            ));
        }
        match self.op {
            Op::Deploy => {
                if self.amt.is_some() {
                    return invalid("deploy carries no amt".into());
                }
                let max = self
                    .max
                    .as_deref()
                    .ok_or(InscriptionError::MissingField("max"))?;
                let lim = self
                    .lim
                    .as_deref()
                    .ok_or(InscriptionError::MissingField("lim"))?;
                check_number("max", max)?;
                check_number("lim", lim)?;
            }
            Op::Mint | Op::Transfer => {
                if self.max.is_some() || self.lim.is_some() {
                    return invalid(format!("{} carries no max/lim", self.op));
                }
                let amt = self
                    .amt
                    .as_deref()
                    .ok_or(InscriptionError::MissingField("amt"))?;
                check_number("amt", amt)?;
            }
        }
        Ok(())
    }

    pub fn amt_value(&self) -> Option<u64> {
        self.amt.as_deref().and_then(|s| s.parse().ok())
    }

    pub fn max_value(&self) -> Option<u64> {
        self.max.as_deref().and_then(|s| s.parse().ok())
    }

    pub fn lim_value(&self) -> Option<u64> {
        self.lim.as_deref().and_then(|s| s.parse().ok())
    }

    /// Canonical JSON text. Assumes [`validate`](Self::validate) passed.
    pub fn canonical_json(&self) -> String {
        let mut parts = vec![
            ("p", self.p.as_str()),
            ("op", self.op.as_str()),
            ("tick", self.tick.as_str()),
        ];
        for (key, value) in [("max", &self.max), ("lim", &self.lim), ("amt", &self.amt)] {
            if let Some(v) = value {
                parts.push((key, v.as_str()));
            }
        }
        let body: Vec<String> = parts
            .iter()
            .map(|(k, v)| format!("\"{k}\":\"{v}\""))
            .collect();
        let strict = format!("{{{}}}", body.join(","));
        strict.replacen(STRICT_HEAD, WIRE_HEAD, 1)
    }

    /// UTF-8 bytes of the canonical JSON, the payload of a data output.
    pub fn to_payload(&self) -> Result<Vec<u8>, InscriptionError> {
        self.validate()?;
        Ok(self.canonical_json().into_bytes())
    }
}

fn check_number(field: &str, s: &str) -> Result<(), InscriptionError> {
    let well_formed = !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && !s.starts_with('0');
    match s.parse::<u64>() {
        Ok(v) if well_formed && v > 0 => Ok(()),
        _ => Err(InscriptionError::InvalidMetadata(format!(
            "{field} {s:?} is not a positive integer below 2^64"
        ))),
    }
}

/// Lowercase hex of the canonical JSON bytes.
pub fn encode_inscription(meta: &InscriptionMetadata) -> Result<String, InscriptionError> {
    Ok(hex::encode(meta.to_payload()?))
}

pub fn decode_inscription(hexdata: &str) -> Result<InscriptionMetadata, InscriptionError> {
    if hexdata.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(InscriptionError::NotHex);
    }
    let bytes = hex::decode(hexdata).map_err(|_| InscriptionError::NotHex)?;
    decode_payload(&bytes)
}

/// Decodes raw payload bytes (already un-hexed).
pub fn decode_payload(bytes: &[u8]) -> Result<InscriptionMetadata, InscriptionError> {
    let repaired;
    let json = match bytes.strip_prefix(WIRE_HEAD.as_bytes()) {
        Some(rest) => {
            repaired = [STRICT_HEAD.as_bytes(), rest].concat();
            &repaired[..]
        }
        None => bytes,
    };
    let value: Value = serde_json::from_slice(json).map_err(|_| InscriptionError::NotJson)?;
    let Value::Object(map) = value else {
        return Err(InscriptionError::NotJson);
    };
    let string =
        |map: &Map<String, Value>, key: &'static str| -> Result<Option<String>, InscriptionError> {
            match map.get(key) {
                None => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.clone())),
                Some(other) => Err(InscriptionError::InvalidMetadata(format!(
                    "{key} must be a string, got {other}"
                ))),
            }
        };
    let p = string(&map, "p")?.ok_or(InscriptionError::MissingField("p"))?;
    let op_str = string(&map, "op")?.ok_or(InscriptionError::MissingField("op"))?;
    let op = Op::parse(&op_str).ok_or(InscriptionError::UnknownOp(op_str))?;
    let tick = string(&map, "tick")?.ok_or(InscriptionError::MissingField("tick"))?;
    let meta = InscriptionMetadata {
        p,
        op,
        tick,
        amt: string(&map, "amt")?,
        max: string(&map, "max")?,
        lim: string(&map, "lim")?,
    };
    meta.validate()?;
    Ok(meta)
}

/// Every data output of `tx` that parses as BRC20 metadata, with its index.
pub fn extract_inscriptions(tx: &Transaction) -> Vec<(usize, InscriptionMetadata)> {
    tx.outputs
        .iter()
        .enumerate()
        .filter_map(|(i, out)| match &out.script {
            Script::Data(bytes) => decode_payload(bytes).ok().map(|m| (i, m)),
            Script::Address(_) => None,
        })
        .collect()
}
