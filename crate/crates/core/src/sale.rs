//! Token sale listings.
//!
//! A seller lists a transfer by signing a zero-amount "sale carrier" output
//! they own in `SalePrefix(k)` mode, committing to the first `k` outputs:
//! their payment, the transfer inscription and, optionally, a fee-lock
//! commitment. Anyone holding that signature can complete the sale by adding
//! funding inputs and a change output. Purchase transactions have the layout
//! `[funding.., carrier] -> [payment, inscription, (lock), change]`.

use thiserror::Error;

use crate::inscription::{InscriptionError, InscriptionMetadata};
use crate::ledger::keys::split_witness;
use crate::ledger::{
    Address, Amount, OutPoint, SecretKey, SigHashMode, Signature, Transaction, TxOutput, UtxoEntry,
    UtxoSet, Verifier,
};
use crate::mitigation::feelock::FeeReveal;
use crate::psbt::{create_psbt, sign_psbt, InputSpec, Psbt, PsbtError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SaleError {
    #[error("no signed sale input found")]
    NotAListing,
    #[error("need {need} but funds hold {have}")]
    InsufficientFunds { need: Amount, have: Amount },
    #[error("no funding inputs")]
    NoFunds,
    #[error(transparent)]
    Psbt(#[from] PsbtError),
    #[error(transparent)]
    Inscription(#[from] InscriptionError),
}

/// Everything a buyer needs from a published listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Listing {
    pub carrier: OutPoint,
    pub carrier_utxo: UtxoEntry,
    pub seller: Address,
    pub sequence: u32,
    /// Outputs covered by the seller's signature.
    pub prefix: Vec<TxOutput>,
    pub seller_signature: Signature,
    /// Witness bytes after the seller's signature (a fee-lock reveal).
    pub seller_extra: Vec<u8>,
}

/// A spendable output paired with its UTXO entry.
pub type Coin = (OutPoint, UtxoEntry);

/// How a purchase relates to the listed carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PurchaseShape {
    /// Spend the carrier with the seller's signature.
    #[default]
    SharedInput,
    /// Copy the prefix outputs but leave the carrier alone.
    DisjointInputs,
}

/// The seller's listing PSBT. With a cosigner coin the PSBT carries that
/// funding input first and stays incomplete until the cosigner signs.
pub fn publish_listing(
    seller: &SecretKey,
    carrier: Coin,
    price: Amount,
    inscription: &InscriptionMetadata,
    cosigner: Option<Coin>,
    fee_lock: Option<FeeReveal>,
) -> Result<Psbt, SaleError> {
    let mut prefix = vec![
        TxOutput::pay(seller.address(), price),
        TxOutput::data(inscription.to_payload()?),
    ];
    if let Some(reveal) = &fee_lock {
        prefix.push(reveal.commitment().to_output());
    }
    let k = prefix.len() as u8;
    let mut inputs: Vec<InputSpec> = cosigner
        .into_iter()
        .map(|(op, utxo)| InputSpec::new(op, utxo))
        .collect();
    inputs.push(InputSpec::new(carrier.0, carrier.1).with_sighash(SigHashMode::SalePrefix(k)));
    let psbt = create_psbt(inputs, prefix)?;
    let (mut signed, _) = sign_psbt(&psbt, seller);
    if let Some(reveal) = fee_lock {
        signed
            .inputs
            .last_mut()
            .expect("carrier input")
            .witness_extra = reveal.to_bytes();
    }
    Ok(signed)
}

impl Listing {
    /// Extracts the listing from a PSBT holding a signed sale input.
    pub fn from_psbt(psbt: &Psbt) -> Result<Listing, SaleError> {
        let skeleton = psbt.skeleton();
        for (index, input) in psbt.inputs.iter().enumerate() {
            let Some(SigHashMode::SalePrefix(k)) = SigHashMode::from_unlock(&input.input.unlock)
            else {
                continue;
            };
            let Some(signature) = psbt.valid_signature(index) else {
                continue;
            };
            return Ok(Listing {
                carrier: input.input.outpoint,
                carrier_utxo: input.utxo.clone(),
                seller: input.required_signer.clone(),
                sequence: input.input.sequence,
                prefix: skeleton.outputs[..k as usize].to_vec(),
                seller_signature: signature,
                seller_extra: input.witness_extra.clone(),
            });
        }
        Err(SaleError::NotAListing)
    }

    /// Extracts the listing from a broadcast purchase, recovering the carrier
    /// context from `utxos`.
    pub fn from_tx(tx: &Transaction, utxos: &UtxoSet) -> Option<Listing> {
        tx.inputs.iter().enumerate().find_map(|(index, input)| {
            let SigHashMode::SalePrefix(k) = SigHashMode::from_unlock(&input.unlock)? else {
                return None;
            };
            let (signature, extra) = split_witness(tx.witness.get(index)?)?;
            let carrier_utxo = utxos.get(&input.outpoint)?.clone();
            Some(Listing {
                carrier: input.outpoint,
                seller: carrier_utxo.address()?.clone(),
                carrier_utxo,
                sequence: input.sequence,
                prefix: tx.outputs.get(..k as usize)?.to_vec(),
                seller_signature: signature,
                seller_extra: extra.to_vec(),
            })
        })
    }

    pub fn price(&self) -> Amount {
        self.prefix[0].amount
    }

    pub fn prefix_total(&self) -> Amount {
        Amount::checked_sum(self.prefix.iter().map(|o| o.amount)).expect("prefix overflow")
    }

    /// A purchase PSBT paying zero change; fix the fee with [`set_fee`].
    /// For `SharedInput` the seller's signature is already attached.
    pub fn purchase(
        &self,
        funds: &[Coin],
        change: &Address,
        shape: PurchaseShape,
        verifier: &dyn Verifier,
    ) -> Result<Psbt, SaleError> {
        if funds.is_empty() {
            return Err(SaleError::NoFunds);
        }
        let mut inputs: Vec<InputSpec> = funds
            .iter()
            .map(|(op, utxo)| InputSpec::new(*op, utxo.clone()))
            .collect();
        if shape == PurchaseShape::SharedInput {
            inputs.push(
                InputSpec::new(self.carrier, self.carrier_utxo.clone())
                    .with_sighash(SigHashMode::SalePrefix(self.prefix.len() as u8)),
            );
        }
        let mut outputs = self.prefix.clone();
        outputs.push(TxOutput::pay(change.clone(), Amount::ZERO));
        let mut psbt = create_psbt(inputs, outputs)?;
        if shape == PurchaseShape::SharedInput {
            let index = psbt.inputs.len() - 1;
            psbt.inputs[index].input.sequence = self.sequence;
            psbt.add_signature(
                index,
                &self.seller,
                self.seller_signature,
                self.seller_extra.clone(),
                verifier,
            )?;
        }
        Ok(psbt)
    }
}

/// Sets the trailing change output so the purchase pays exactly `fee`.
pub fn set_fee(psbt: &mut Psbt, fee: Amount) -> Result<(), SaleError> {
    let have = psbt.total_input();
    let fixed = Amount::checked_sum(
        psbt.outputs[..psbt.outputs.len() - 1]
            .iter()
            .map(|o| o.output.amount),
    )
    .expect("output overflow");
    let need = fixed.checked_add(fee).unwrap_or(Amount::MAX);
    let change = have
        .checked_sub(need)
        .ok_or(SaleError::InsufficientFunds { need, have })?;
    psbt.outputs
        .last_mut()
        .expect("change output")
        .output
        .amount = change;
    Ok(())
}

/// Sets the change output to an explicit amount; the fee is what remains.
pub fn set_change(psbt: &mut Psbt, change: Amount) -> Result<Amount, SaleError> {
    let have = psbt.total_input();
    let fixed = Amount::checked_sum(
        psbt.outputs[..psbt.outputs.len() - 1]
            .iter()
            .map(|o| o.output.amount),
    )
    .expect("output overflow");
    let need = fixed + change;
    let fee = have
        .checked_sub(need)
        .ok_or(SaleError::InsufficientFunds { need, have })?;
    psbt.outputs
        .last_mut()
        .expect("change output")
        .output
        .amount = change;
    Ok(fee)
}

/// A self-payment that creates a zero-amount carrier for a later listing.
/// Outputs: `[carrier, change]`.
pub fn carrier_tx(
    owner: &SecretKey,
    funds: &[Coin],
    fee: Amount,
) -> Result<Transaction, SaleError> {
    if funds.is_empty() {
        return Err(SaleError::NoFunds);
    }
    let inputs = funds
        .iter()
        .map(|(op, utxo)| InputSpec::new(*op, utxo.clone()))
        .collect();
    let outputs = vec![
        TxOutput::pay(owner.address(), Amount::ZERO),
        TxOutput::pay(owner.address(), Amount::ZERO),
    ];
    let mut psbt = create_psbt(inputs, outputs)?;
    set_fee(&mut psbt, fee)?;
    let (signed, _) = sign_psbt(&psbt, owner);
    Ok(crate::psbt::finalize_psbt(&signed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{validate, Chain, KeyRegistry};
    use crate::psbt::{finalize_psbt, is_complete, PsbtError};

    struct World {
        reg: KeyRegistry,
        seller: SecretKey,
        buyer: SecretKey,
        chain: Chain,
    }

    fn world() -> World {
        let mut reg = KeyRegistry::new();
        let seller = SecretKey::from_bytes([1; 32]);
        let buyer = SecretKey::from_bytes([2; 32]);
        let chain = Chain::genesis(
            vec![
                (reg.register(&seller), Amount::ZERO),
                (reg.register(&buyer), Amount::sat(87_985_000)),
            ],
            Amount::ZERO,
        );
        World {
            reg,
            seller,
            buyer,
            chain,
        }
    }

    fn coin(w: &World, k: &SecretKey) -> Coin {
        w.chain.utxos().owned_by(&k.address())[0].clone()
    }

    #[test]
    fn listing_is_incomplete_until_cosigned() {
        let w = world();
        let psbt = publish_listing(
            &w.seller,
            coin(&w, &w.seller),
            Amount::sat(50_000_000),
            &InscriptionMetadata::transfer("ak47", 1000),
            Some(coin(&w, &w.buyer)),
            None,
        )
        .unwrap();
        assert!(!is_complete(&psbt));
        assert_eq!(finalize_psbt(&psbt), Err(PsbtError::Incomplete(vec![0])));
        let listing = Listing::from_psbt(&psbt).unwrap();
        assert_eq!(listing.price(), Amount::sat(50_000_000));
        assert_eq!(listing.seller, w.seller.address());
    }

    #[test]
    fn buyer_completes_the_listed_purchase() {
        let w = world();
        let listing_psbt = publish_listing(
            &w.seller,
            coin(&w, &w.seller),
            Amount::sat(50_000_000),
            &InscriptionMetadata::transfer("ak47", 1000),
            None,
            None,
        )
        .unwrap();
        let listing = Listing::from_psbt(&listing_psbt).unwrap();
        let mut p = listing
            .purchase(
                &[coin(&w, &w.buyer)],
                &w.buyer.address(),
                PurchaseShape::SharedInput,
                &w.reg,
            )
            .unwrap();
        assert_eq!(
            set_change(&mut p, Amount::sat(10_000_000)).unwrap(),
            Amount::sat(27_985_000)
        );
        let (signed, complete) = sign_psbt(&p, &w.buyer);
        assert!(complete);
        let tx = finalize_psbt(&signed).unwrap();
        assert_eq!(signed.estimated_vsize(), tx.vsize());
        assert_eq!(
            validate(&tx, w.chain.utxos(), &w.reg),
            Ok(Amount::sat(27_985_000))
        );
        // a copy recovered from the broadcast tx reproduces the listing
        assert_eq!(Listing::from_tx(&tx, w.chain.utxos()).unwrap(), listing);
    }

    #[test]
    fn fee_targets_and_shortfall() {
        let w = world();
        let psbt = publish_listing(
            &w.seller,
            coin(&w, &w.seller),
            Amount::sat(50_000_000),
            &InscriptionMetadata::transfer("ak47", 1000),
            None,
            None,
        )
        .unwrap();
        let listing = Listing::from_psbt(&psbt).unwrap();
        let mut p = listing
            .purchase(
                &[coin(&w, &w.buyer)],
                &w.buyer.address(),
                PurchaseShape::DisjointInputs,
                &w.reg,
            )
            .unwrap();
        assert_eq!(p.inputs.len(), 1);
        set_fee(&mut p, Amount::sat(1_000)).unwrap();
        assert_eq!(p.fee(), Some(Amount::sat(1_000)));
        assert!(matches!(
            set_fee(&mut p, Amount::sat(40_000_000)),
            Err(SaleError::InsufficientFunds { .. })
        ));
    }
}
