use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Satoshis per bitcoin.
pub const COIN: u64 = 100_000_000;

/// Total issuance cap, in satoshis.
pub const MAX_MONEY: u64 = 21_000_000 * COIN;

/// An amount of satoshis in `0..=MAX_MONEY`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "u64", into = "u64")]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);
    pub const MAX: Amount = Amount(MAX_MONEY);

    /// Returns `None` above [`MAX_MONEY`].
    pub const fn from_sat(sat: u64) -> Option<Amount> {
        if sat > MAX_MONEY {
            None
        } else {
            Some(Amount(sat))
        }
    }

    /// Panics above [`MAX_MONEY`]; intended for literals.
    pub const fn sat(sat: u64) -> Amount {
        match Amount::from_sat(sat) {
            Some(a) => a,
            None => panic!("amount exceeds MAX_MONEY"),
        }
    }

    pub const fn to_sat(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_add(rhs.0).and_then(Amount::from_sat)
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    /// Sums an iterator of amounts, failing on overflow past [`MAX_MONEY`].
    pub fn checked_sum<I: IntoIterator<Item = Amount>>(iter: I) -> Option<Amount> {
        iter.into_iter()
            .try_fold(Amount::ZERO, |acc, a| acc.checked_add(a))
    }
}

impl TryFrom<u64> for Amount {
    type Error = String;

    fn try_from(sat: u64) -> Result<Self, Self::Error> {
        Amount::from_sat(sat).ok_or_else(|| format!("{sat} sats exceeds the money supply cap"))
    }
}

impl From<Amount> for u64 {
    fn from(a: Amount) -> u64 {
        a.0
    }
}

impl Add for Amount {
    type Output = Amount;

    fn add(self, rhs: Amount) -> Amount {
        self.checked_add(rhs).expect("amount overflow")
    }
}

impl Sub for Amount {
    type Output = Amount;

    fn sub(self, rhs: Amount) -> Amount {
        self.checked_sub(rhs).expect("amount underflow")
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sat", self.0)
    }
}
