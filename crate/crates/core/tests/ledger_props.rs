mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use sha2::{Digest, Sha256};
use snipesim::ledger::{
    coinbase, compute_fee, deserialize, serialize, validate, Address, Amount, Block, BlockHash,
    Hash256, KeyRegistry, OutPoint, Script, Transaction, TxId, TxInput, TxOutput, UtxoEntry,
    UtxoSet, MAX_MONEY,
};

use common::{key, spend};

/// Serializer written from the wire layout, independent of the library's.
fn oracle_bytes(tx: &Transaction) -> Vec<u8> {
    fn leb(out: &mut Vec<u8>, mut v: u64) {
        while v >= 0x80 {
            out.push((v as u8 & 0x7f) | 0x80);
            v >>= 7;
        }
        out.push(v as u8);
    }
    let mut b = vec![0x00, 0x02];
    leb(&mut b, tx.inputs.len() as u64);
    for i in &tx.inputs {
        b.extend(i.outpoint.txid.0 .0);
        b.extend(i.outpoint.vout.to_be_bytes());
        leb(&mut b, i.unlock.len() as u64);
        b.extend(&i.unlock);
        b.extend(i.sequence.to_be_bytes());
    }
    leb(&mut b, tx.outputs.len() as u64);
    for o in &tx.outputs {
        b.extend(o.amount.to_sat().to_be_bytes());
        let (kind, body) = match &o.script {
            Script::Address(a) => (0u8, a.as_str().as_bytes().to_vec()),
            Script::Data(d) => (1u8, d.clone()),
        };
        b.push(kind);
        leb(&mut b, body.len() as u64);
        b.extend(body);
    }
    leb(&mut b, tx.witness.len() as u64);
    for w in &tx.witness {
        leb(&mut b, w.len() as u64);
        b.extend(w);
    }
    b
}

fn oracle_txid(tx: &Transaction) -> [u8; 32] {
    Sha256::digest(Sha256::digest(oracle_bytes(tx))).into()
}

fn arb_output() -> impl Strategy<Value = TxOutput> {
    prop_oneof![
        // five outputs at most, so the sum stays under the money cap
        ("[a-f0-9]{1,64}", 0u64..=MAX_MONEY / 5)
            .prop_map(|(a, v)| TxOutput::pay(Address::new(a), Amount::sat(v))),
        prop::collection::vec(any::<u8>(), 0..300).prop_map(TxOutput::data),
    ]
}

fn arb_tx() -> impl Strategy<Value = Transaction> {
    let input = (
        any::<[u8; 32]>(),
        any::<u32>(),
        prop::collection::vec(any::<u8>(), 0..4),
        any::<u32>(),
    )
        .prop_map(|(h, vout, unlock, sequence)| TxInput {
            outpoint: OutPoint::new(TxId(Hash256(h)), vout),
            unlock,
            sequence,
        });
    (
        prop::collection::vec(input, 0..5),
        prop::collection::vec(arb_output(), 1..5),
        any::<bool>(),
    )
        .prop_flat_map(|(inputs, outputs, witnessed)| {
            let n = if witnessed { inputs.len() } else { 0 };
            (
                Just(inputs),
                Just(outputs),
                prop::collection::vec(prop::collection::vec(any::<u8>(), 0..200), n),
            )
        })
        .prop_map(|(inputs, outputs, witness)| Transaction {
            inputs,
            outputs,
            witness,
        })
}

#[test]
fn frozen_txid_vector() {
    let tx = Transaction {
        inputs: vec![TxInput {
            outpoint: OutPoint::new(TxId(Hash256([0x11; 32])), 1),
            unlock: vec![0x01],
            sequence: 0xffff_fffd,
        }],
        outputs: vec![
            TxOutput::pay(Address::new("abc"), Amount::sat(1000)),
            TxOutput::data(b"hi".to_vec()),
        ],
        witness: vec![vec![0x22; 32]],
    };
    let hex_bytes = "0002011111111111111111111111111111111111111111111111111111111111111111\
                     000000010101fffffffd0200000000000003e8000361626300000000000000000102686901\
                     202222222222222222222222222222222222222222222222222222222222222222";
    assert_eq!(hex::encode(serialize(&tx)), hex_bytes);
    assert_eq!(tx.vsize(), 105);
    assert_eq!(
        tx.txid().to_string(),
        "79bc4a9d2a3aaab870936f83d91cd937fab35bca5f8ddf02a739dc6b6f0bd86e"
    );
    // the witness is part of the id
    assert_eq!(
        tx.without_witness().txid().to_string(),
        "6acd222b44335cbec4b54f7f12b503e92d508cf72701abc0a2dd5f3fc22d31b2"
    );
}

proptest! {
    #[test]
    fn serialization_round_trips(tx in arb_tx()) {
        let bytes = serialize(&tx);
        prop_assert_eq!(deserialize(&bytes).unwrap(), tx.clone());
        prop_assert_eq!(tx.vsize(), bytes.len() as u64);
    }

    #[test]
    fn txid_matches_independent_serializer(tx in arb_tx()) {
        prop_assert_eq!(oracle_bytes(&tx), serialize(&tx));
        prop_assert_eq!(tx.txid().0 .0, oracle_txid(&tx));
    }

    #[test]
    fn any_single_field_change_moves_the_txid(tx in arb_tx(), pick in any::<prop::sample::Index>(), flip in 1u32..) {
        let before = tx.txid();
        prop_assert_eq!(before, tx.clone().txid());
        let mut m = tx.clone();
        let choices = m.inputs.len() * 3 + m.outputs.len() + m.witness.len();
        let mut k = pick.index(choices);
        if k < m.inputs.len() * 3 {
            let input = &mut m.inputs[k / 3];
            match k % 3 {
                0 => input.outpoint.vout ^= flip,
                1 => input.sequence ^= flip,
                _ => input.unlock.push(flip as u8),
            }
        } else {
            k -= m.inputs.len() * 3;
            if k < m.outputs.len() {
                let o = &mut m.outputs[k];
                o.amount = Amount::sat(o.amount.to_sat() ^ 1);
            } else {
                m.witness[k - m.outputs.len()].push(0);
            }
        }
        prop_assert_ne!(m.txid(), before);
    }

    #[test]
    fn truncated_bytes_never_decode(tx in arb_tx(), cut in any::<prop::sample::Index>()) {
        let bytes = serialize(&tx);
        let n = cut.index(bytes.len());
        prop_assert!(deserialize(&bytes[..n]).is_err());
    }
}

/// Small ledger of `owners` keys holding the given coins.
fn ledger(amounts: &[u64]) -> (KeyRegistry, Vec<snipesim::ledger::SecretKey>, UtxoSet) {
    let mut reg = KeyRegistry::new();
    let keys: Vec<_> = (0..amounts.len()).map(|i| key(i as u8 + 1)).collect();
    let allocs = keys
        .iter()
        .zip(amounts)
        .map(|(k, a)| (reg.register(k), Amount::sat(*a)))
        .collect();
    let block = Block::new(BlockHash::default(), 0, coinbase(0, allocs), vec![]);
    let utxos = UtxoSet::new().apply_block(&block).unwrap();
    (reg, keys, utxos)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fee_is_inputs_minus_outputs(
        amounts in prop::collection::vec(1u64..5_000_000_000, 1..8),
        picks in prop::collection::vec(any::<bool>(), 8),
        cuts in prop::collection::vec(0u64..1000, 1..4),
    ) {
        let (reg, keys, utxos) = ledger(&amounts);
        let mut coins = Vec::new();
        let mut signers = Vec::new();
        for (i, k) in keys.iter().enumerate() {
            if picks[i] || i == 0 {
                coins.extend(utxos.owned_by(&k.address()));
                signers.push(k);
            }
        }
        let total: u64 = coins.iter().map(|(_, e)| e.amount.to_sat()).sum();
        let parts: u64 = cuts.iter().map(|c| c + 1).sum();
        let outputs: Vec<TxOutput> = cuts
            .iter()
            .map(|c| TxOutput::pay(keys[0].address(), Amount::sat(total / (parts + 1) * (c + 1))))
            .collect();
        let out_sum: u64 = outputs.iter().map(|o| o.amount.to_sat()).sum();
        prop_assume!(out_sum <= total);
        let tx = spend(&coins, outputs, &signers);
        let fee = Amount::sat(total - out_sum);
        prop_assert_eq!(compute_fee(&tx, &utxos), Ok(fee));
        prop_assert_eq!(validate(&tx, &utxos, &reg), Ok(fee));
    }
}

/// One generated step: which coins each tx spends and how many outputs it makes.
#[derive(Debug, Clone)]
struct Draft {
    spends: Vec<prop::sample::Index>,
    outs: usize,
}

fn arb_block() -> impl Strategy<Value = Vec<Draft>> {
    prop::collection::vec(
        (
            prop::collection::vec(any::<prop::sample::Index>(), 1..3),
            1usize..3,
        )
            .prop_map(|(spends, outs)| Draft { spends, outs }),
        0..4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// `apply_block` against a brute-force set rewrite, and no outpoint is
    /// ever spent twice along the way.
    #[test]
    fn apply_block_is_the_set_rewrite(
        amounts in prop::collection::vec(1u64..1_000_000, 1..6),
        blocks in prop::collection::vec(arb_block(), 1..6),
    ) {
        let (_, _, mut utxos) = ledger(&amounts);
        let mut model: BTreeMap<OutPoint, UtxoEntry> = utxos.iter().map(|(o, e)| (*o, e.clone())).collect();
        let mut ever_spent: BTreeSet<OutPoint> = BTreeSet::new();
        let owner = Address::new("sink");
        for (height, drafts) in blocks.iter().enumerate() {
            let live: Vec<OutPoint> = model.keys().copied().collect();
            prop_assume!(live.len() <= 20);
            let mut txs = Vec::new();
            for (n, d) in drafts.iter().enumerate() {
                let mut ins: Vec<OutPoint> = d.spends.iter().map(|i| live[i.index(live.len())]).collect();
                ins.dedup();
                let total: u64 = ins.iter().map(|o| model[o].amount.to_sat()).sum();
                let mut outputs: Vec<TxOutput> = (0..d.outs)
                    .map(|_| TxOutput::pay(owner.clone(), Amount::sat(total / d.outs as u64)))
                    .collect();
                // unique outputs per tx so ids never repeat
                outputs.push(TxOutput::data(vec![height as u8, n as u8]));
                txs.push(Transaction {
                    inputs: ins.into_iter().map(TxInput::new).collect(),
                    outputs,
                    witness: vec![],
                });
            }
            let cb = coinbase(height as u64 + 1, vec![(owner.clone(), Amount::sat(1))]);
            let block = Block::new(BlockHash::default(), height as u64 + 1, cb.clone(), txs.clone());

            // brute force: reject iff some outpoint is spent twice, missing or a data output
            let mut seen = BTreeSet::new();
            let mut conflict = false;
            for tx in &txs {
                let mut own = BTreeSet::new();
                for i in &tx.inputs {
                    let unspendable = model.get(&i.outpoint).is_none_or(|e| e.script.data().is_some());
                    if !own.insert(i.outpoint) || seen.contains(&i.outpoint) || unspendable {
                        conflict = true;
                    }
                }
                seen.extend(own);
            }
            let result = utxos.apply_block(&block);
            prop_assert_eq!(result.is_err(), conflict);
            let Ok(next) = result else { continue };

            let mut expect: BTreeMap<OutPoint, UtxoEntry> = model
                .iter()
                .filter(|(o, _)| !seen.contains(o))
                .map(|(o, e)| (*o, e.clone()))
                .collect();
            for tx in std::iter::once(&cb).chain(&txs) {
                for (j, o) in tx.outputs.iter().enumerate() {
                    expect.insert(
                        OutPoint::new(tx.txid(), j as u32),
                        UtxoEntry { amount: o.amount, script: o.script.clone() },
                    );
                }
            }
            let got: BTreeMap<OutPoint, UtxoEntry> = next.iter().map(|(o, e)| (*o, e.clone())).collect();
            prop_assert_eq!(&got, &expect);
            for op in &seen {
                prop_assert!(ever_spent.insert(*op), "outpoint spent twice");
                prop_assert!(!next.contains(op));
            }
            model = expect;
            utxos = next;
        }
    }
}
