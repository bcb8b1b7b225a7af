use std::collections::BTreeMap;

use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sharepass_core::cipher::{sym_decrypt, sym_encrypt, SymKey};
use sharepass_core::group::{generate_params, GroupParams};
use sharepass_core::pedersen::{deal_committed, verify_share, DualShare};
use sharepass_core::protocol::store::RecordStore;
use sharepass_core::protocol::{Body, Message};
use sharepass_core::shamir::{reconstruct_at_zero, SharePoint};

fn params() -> &'static GroupParams {
    static P: std::sync::OnceLock<GroupParams> = std::sync::OnceLock::new();
    P.get_or_init(|| generate_params(96, 64, &mut ChaCha20Rng::seed_from_u64(3)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn honest_dealings_verify_and_reconstruct(seed in any::<u64>(), t in 1usize..5, extra in 0usize..4) {
        let p = params();
        let n = t + extra;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let secret = BigUint::from(seed) % &p.q;
        let d = deal_committed(&secret, t, n, p, &mut rng).unwrap();
        for s in &d.shares {
            prop_assert!(verify_share(s, &d.commitments, p));
        }
        let points: Vec<_> = d.shares.iter().map(|s| SharePoint::new(s.x.clone(), s.s.clone())).collect();
        prop_assert_eq!(reconstruct_at_zero(&points[extra..], t, &p.q).unwrap(), secret);
    }

    #[test]
    fn any_nonzero_tamper_is_caught(seed in any::<u64>(), field in 0usize..3, delta in 1u64..1_000_000) {
        let p = params();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = deal_committed(&BigUint::from(7u32), 3, 5, p, &mut rng).unwrap();
        let mut s: DualShare = d.shares[0].clone();
        let bump = |v: &BigUint| (v + delta) % &p.q;
        match field {
            0 => s.x = bump(&s.x),
            1 => s.s = bump(&s.s),
            _ => s.t_val = bump(&s.t_val),
        }
        prop_assert!(!verify_share(&s, &d.commitments, p));
    }

    #[test]
    fn cipher_round_trips_and_rejects_flips(key in any::<[u8; 32]>(), msg in proptest::collection::vec(any::<u8>(), 0..200), flip in any::<usize>()) {
        let k = SymKey(key);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ct = sym_encrypt(&k, &msg, &mut rng).unwrap();
        prop_assert_eq!(sym_decrypt(&k, &ct).unwrap(), msg);
        let mut bad = ct.clone();
        let i = flip % bad.0.len();
        bad.0[i] ^= 1;
        prop_assert!(sym_decrypt(&k, &bad).is_err());
    }

    #[test]
    fn codec_round_trips(user in "[a-z]{1,12}", sid in "[0-9a-f]{1,24}", x in any::<u128>()) {
        let m = Message::new(sid, user, Body::ReleaseShare { x: BigUint::from(x) });
        let bytes = m.to_canonical_bytes();
        let back = Message::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_canonical_bytes(), bytes);
        prop_assert_eq!(back, m);
    }

    #[test]
    fn store_replays_latest_writes(ops in proptest::collection::vec((0u8..6, proptest::option::of(any::<u32>())), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.store");
        let mut model = BTreeMap::new();
        {
            let store = RecordStore::open(&path).unwrap();
            for (k, v) in &ops {
                let key = format!("k{k}");
                match v {
                    Some(v) => { store.put(&key, v).unwrap(); model.insert(key, *v); }
                    None => { store.remove(&key).unwrap(); model.remove(&key); }
                }
            }
        }
        let store = RecordStore::open(&path).unwrap();
        let loaded: BTreeMap<String, u32> =
            store.keys().into_iter().map(|k| { let v = store.get(&k).unwrap().unwrap(); (k, v) }).collect();
        prop_assert_eq!(loaded, model);
    }
}
