use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warcflow::filters::{bloom_params, payload_key, probe_index, DedupState};

#[test]
fn sizing_values() {
    assert_eq!(bloom_params(1_000_000, 0.01).unwrap(), (9_585_059, 7));
    assert_eq!(bloom_params(10_000, 0.01).unwrap(), (95_851, 7));
    assert_eq!(bloom_params(1_000, 0.001).unwrap(), (14_378, 10));
    assert!(bloom_params(0, 0.01).is_err());
    assert!(bloom_params(10, 1.0).is_err());
    assert!(bloom_params(10, 0.0).is_err());
}

/// Smallest m with m * ln(2)^2 >= -n ln p, found by search rather than by
/// the closed form.
fn least_bits(n: u64, p: f64) -> u64 {
    let need = -(n as f64) * p.ln();
    let per_bit = std::f64::consts::LN_2.powi(2);
    let mut m = (need / per_bit) as u64;
    while (m as f64) * per_bit < need {
        m += 1;
    }
    while m > 0 && ((m - 1) as f64) * per_bit >= need {
        m -= 1;
    }
    m
}

#[test]
fn sizing_agrees_with_search() {
    for n in [1u64, 7, 100, 999, 10_000, 123_457] {
        for p in [0.3, 0.1, 0.01, 0.001, 1e-6] {
            let (m, k) = bloom_params(n, p).unwrap();
            assert_eq!(m, least_bits(n, p), "n={n} p={p}");
            let ideal = m as f64 / n as f64 * std::f64::consts::LN_2;
            assert!((k as f64 - ideal).abs() <= 0.5 || k == 1, "n={n} p={p} k={k} ideal={ideal}");
        }
    }
}

#[test]
fn probe_uses_documented_digest_window() {
    use sha2::{Digest, Sha256};
    let key = payload_key(b"XYZ");
    for i in 0..10u8 {
        let mut input = key.to_vec();
        input.push(i);
        let d = Sha256::digest(&input);
        let at = (8 * i as usize) % 24;
        let word = u64::from_be_bytes(d[at..at + 8].try_into().unwrap());
        assert_eq!(probe_index(&key, i, 95_851), word % 95_851);
    }
}

#[test]
fn monte_carlo_false_positive_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_301);
    let mut state = DedupState::bloom(10_000, 0.01).unwrap();
    let inserted: Vec<[u8; 32]> = (0..10_000).map(|_| rng.random()).collect();
    for k in &inserted {
        state.check_and_insert(k);
    }
    assert!(inserted.iter().all(|k| state.contains(k)), "false negative");

    let trials = 100_000;
    let false_positives = (0..trials)
        .map(|_| rng.random::<[u8; 32]>())
        .filter(|k| state.contains(k))
        .count();
    let fpr = false_positives as f64 / trials as f64;
    assert!(fpr <= 0.02, "measured FPR {fpr}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bloom_has_no_false_negatives(
        payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..32), 1..300),
        capacity in 1u64..500,
    ) {
        let mut state = DedupState::bloom(capacity, 0.05).unwrap();
        for p in &payloads {
            state.check_and_insert(&payload_key(p));
        }
        for p in &payloads {
            prop_assert!(!state.check_and_insert(&payload_key(p)));
        }
    }

    #[test]
    fn exact_mode_reports_each_payload_once(payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..8), 0..200)) {
        let mut state = DedupState::exact();
        let fresh = payloads.iter().filter(|p| state.check_and_insert(&payload_key(p))).count();
        let distinct: std::collections::HashSet<_> = payloads.iter().collect();
        prop_assert_eq!(fresh, distinct.len());
    }
}
