//! Plain bit-array bloom filter over 64-bit keys.

use std::f64::consts::LN_2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: u64,
    h: u32,
}

impl BloomFilter {
    pub fn new(m: u64, h: u32) -> Self {
        let m = m.max(64);
        BloomFilter {
            bits: vec![0; m.div_ceil(64) as usize],
            m,
            h: h.max(1),
        }
    }

    /// Standard sizing: `m = -n ln p / (ln 2)^2`, `h = (m / n) ln 2`.
    pub fn with_rate(expected_items: u64, fp_rate: f64) -> Self {
        let (m, h) = geometry(expected_items, fp_rate);
        BloomFilter::new(m, h)
    }

    pub fn from_raw(bits: Vec<u64>, m: u64, h: u32) -> Option<Self> {
        if bits.len() as u64 != m.div_ceil(64) || h == 0 {
            return None;
        }
        Some(BloomFilter { bits, m, h })
    }

    pub fn bit_len(&self) -> u64 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.h
    }

    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    #[inline]
    fn probes(&self, key: u64) -> impl Iterator<Item = u64> {
        let h1 = splitmix64(key);
        let h2 = splitmix64(h1 ^ 0xD6E8_FEB8_6659_FD93) | 1;
        let m = self.m;
        (0..self.h as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
    }

    pub fn insert(&mut self, key: u64) {
        for i in self.probes(key) {
            self.bits[(i / 64) as usize] |= 1 << (i % 64);
        }
    }

    /// Inserts and reports whether every probed bit was already set.
    pub fn check_and_insert(&mut self, key: u64) -> bool {
        let mut present = true;
        for i in self.probes(key) {
            let word = &mut self.bits[(i / 64) as usize];
            let bit = 1 << (i % 64);
            present &= *word & bit != 0;
            *word |= bit;
        }
        present
    }

    pub fn contains(&self, key: u64) -> bool {
        self.probes(key)
            .all(|i| self.bits[(i / 64) as usize] & (1 << (i % 64)) != 0)
    }
}

pub fn geometry(expected_items: u64, fp_rate: f64) -> (u64, u32) {
    let n = expected_items.max(1) as f64;
    let m = (-n * fp_rate.ln() / (LN_2 * LN_2)).ceil().max(64.0);
    let h = ((m / n) * LN_2).round().max(1.0);
    (m as u64, h as u32)
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_matches_formula() {
        let (m, h) = geometry(1000, 0.01);
        assert_eq!(m, 9586);
        assert_eq!(h, 7);
    }

    #[test]
    fn no_false_negatives() {
        let mut bf = BloomFilter::with_rate(5000, 0.01);
        for k in 0..5000u64 {
            bf.insert(k * 7919);
        }
        assert!((0..5000u64).all(|k| bf.contains(k * 7919)));
    }

    #[test]
    fn empirical_fp_near_target() {
        let mut bf = BloomFilter::with_rate(20_000, 0.01);
        for k in 0..20_000u64 {
            bf.insert(k);
        }
        let fp = (1_000_000..1_100_000u64).filter(|&k| bf.contains(k)).count();
        let rate = fp as f64 / 100_000.0;
        assert!(rate < 0.015, "fp rate {rate}");
    }
}
