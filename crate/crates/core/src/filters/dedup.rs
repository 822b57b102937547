//! Content-hash deduplication, exact or approximate.

use std::collections::HashSet;

use sha2::{Digest, Sha256};

use super::FilterError;

pub type DedupKey = [u8; 32];

pub const MAX_HASH_COUNT: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupMode {
    Exact,
    Bloom,
}

/// Bloom filter sizing for `n` expected items at false-positive rate `p`:
/// `m = ceil(-n ln p / (ln 2)^2)` bits and `k = max(1, round(m/n * ln 2))`
/// hash functions.
pub fn bloom_params(n: u64, p: f64) -> Result<(u64, u32), FilterError> {
    if n == 0 || !(p > 0.0 && p < 1.0) {
        return Err(FilterError::InvalidParams(format!("n={n}, p={p}")));
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (-(n as f64) * p.ln() / (ln2 * ln2)).ceil();
    let k = ((m / n as f64) * ln2).round().max(1.0);
    Ok((m as u64, k as u32))
}

/// The dedup key of a payload.
pub fn payload_key(payload: &[u8]) -> DedupKey {
    Sha256::digest(payload).into()
}

/// Bit index probed by hash `i`: the big-endian u64 at bytes
/// `[8i mod 24, 8i mod 24 + 8)` of `SHA-256(key ‖ i)`, reduced mod `m`.
pub fn probe_index(key: &DedupKey, i: u8, m: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(key);
    h.update([i]);
    let digest = h.finalize();
    let at = (8 * i as usize) % 24;
    let word = u64::from_be_bytes(digest[at..at + 8].try_into().unwrap());
    word % m
}

#[derive(Debug, Clone)]
pub struct DedupState {
    mode: DedupMode,
    capacity: u64,
    target_fpr: f64,
    bits: u64,
    hash_count: u32,
    bitset: Vec<u64>,
    exact: HashSet<DedupKey>,
    inserted: u64,
}

impl DedupState {
    pub fn exact() -> Self {
        Self {
            mode: DedupMode::Exact,
            capacity: 0,
            target_fpr: 0.0,
            bits: 0,
            hash_count: 0,
            bitset: Vec::new(),
            exact: HashSet::new(),
            inserted: 0,
        }
    }

    pub fn bloom(capacity: u64, target_fpr: f64) -> Result<Self, FilterError> {
        let (bits, hash_count) = bloom_params(capacity, target_fpr)?;
        if hash_count > MAX_HASH_COUNT {
            return Err(FilterError::InvalidParams(format!(
                "p={target_fpr} needs {hash_count} hashes, at most {MAX_HASH_COUNT} supported"
            )));
        }
        Ok(Self {
            mode: DedupMode::Bloom,
            capacity,
            target_fpr,
            bits,
            hash_count,
            bitset: vec![0u64; bits.div_ceil(64) as usize],
            exact: HashSet::new(),
            inserted: 0,
        })
    }

    pub fn mode(&self) -> DedupMode {
        self.mode
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn target_fpr(&self) -> f64 {
        self.target_fpr
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn hash_count(&self) -> u32 {
        self.hash_count
    }

    pub fn inserted_count(&self) -> u64 {
        self.inserted
    }

    /// True if `key` would be reported as seen. Does not record it.
    pub fn contains(&self, key: &DedupKey) -> bool {
        match self.mode {
            DedupMode::Exact => self.exact.contains(key),
            DedupMode::Bloom => (0..self.hash_count).all(|i| {
                let bit = probe_index(key, i as u8, self.bits);
                self.bitset[(bit / 64) as usize] & (1u64 << (bit % 64)) != 0
            }),
        }
    }

    /// True if `key` has not been seen before; records it either way.
    ///
    /// Bloom mode may report a new key as seen (false positive) but never
    /// reports a previously inserted key as new.
    pub fn check_and_insert(&mut self, key: &DedupKey) -> bool {
        match self.mode {
            DedupMode::Exact => {
                let fresh = self.exact.insert(*key);
                if fresh {
                    self.inserted += 1;
                }
                fresh
            }
            DedupMode::Bloom => {
                let mut all_set = true;
                for i in 0..self.hash_count {
                    let bit = probe_index(key, i as u8, self.bits);
                    let (word, mask) = ((bit / 64) as usize, 1u64 << (bit % 64));
                    if self.bitset[word] & mask == 0 {
                        all_set = false;
                        self.bitset[word] |= mask;
                    }
                }
                if !all_set {
                    self.inserted += 1;
                }
                !all_set
            }
        }
    }
}

pub fn dedup_check(state: &mut DedupState, key: &DedupKey) -> bool {
    state.check_and_insert(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_closed_form() {
        assert_eq!(bloom_params(1_000_000, 0.01).unwrap(), (9_585_059, 7));
        assert_eq!(bloom_params(10_000, 0.01).unwrap(), (95_851, 7));
        assert_eq!(bloom_params(1_000, 0.001).unwrap(), (14_378, 10));
        // ceil(1/ln 2) = 2 bits, round(2 ln 2) = 1 hash
        assert_eq!(bloom_params(1, 0.5).unwrap(), (2, 1));
    }

    #[test]
    fn invalid_sizing() {
        assert!(bloom_params(0, 0.01).is_err());
        assert!(bloom_params(10, 0.0).is_err());
        assert!(bloom_params(10, 1.0).is_err());
        assert!(bloom_params(10, f64::NAN).is_err());
    }

    #[test]
    fn exact_mode_second_sighting() {
        let mut s = DedupState::exact();
        let k = payload_key(b"x");
        assert!(dedup_check(&mut s, &k));
        assert!(!dedup_check(&mut s, &k));
        assert_eq!(s.inserted_count(), 1);
    }

    #[test]
    fn empty_bloom_accepts_distinct_keys() {
        let mut s = DedupState::bloom(1000, 0.01).unwrap();
        assert!(dedup_check(&mut s, &payload_key(b"a")));
        assert!(dedup_check(&mut s, &payload_key(b"b")));
        assert!(!dedup_check(&mut s, &payload_key(b"a")));
    }

    #[test]
    fn probe_uses_rotating_digest_window() {
        let key = payload_key(b"");
        for i in [0u8, 1, 2, 3, 5] {
            let mut input = key.to_vec();
            input.push(i);
            let d = Sha256::digest(&input);
            let at = (8 * i as usize) % 24;
            let expect = u64::from_be_bytes(d[at..at + 8].try_into().unwrap()) % 1000;
            assert_eq!(probe_index(&key, i, 1000), expect);
        }
    }

    #[test]
    fn too_many_hashes_rejected() {
        assert!(DedupState::bloom(10, 1e-12).is_err());
    }
}
