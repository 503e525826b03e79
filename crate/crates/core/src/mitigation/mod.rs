//! Defenses against sniping: tiered pre-signed orders, fee bumping and the
//! fee lock.
pub mod bump;
pub mod feelock;
pub mod tiered;

pub use bump::{bump_fee, BumpError};
pub use feelock::{commit_fee, verify_fee_lock, FeeCommitment, FeeLockError, FeeReveal};
pub use tiered::{create_protected_order, OrderState, ProtectError, ProtectedOrder};
