use crate::bloom::BloomFilter;
use crate::error::{Error, Result};
use crate::kmer::{kmer_codes, ReadSet};

/// Passes k-mers observed more than once across both inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneFilter {
    pub seen_once: BloomFilter,
    pub seen_multi: BloomFilter,
    pub k: u8,
    pub target_fp: f64,
}

impl PruneFilter {
    pub fn contains(&self, canonical_code: u64) -> bool {
        self.seen_multi.contains(canonical_code)
    }
}

pub fn prune(normal: &ReadSet, tumoral: &ReadSet, k: u8, target_fp: f64) -> Result<PruneFilter> {
    if !(target_fp > 0.0 && target_fp < 1.0) {
        return Err(Error::invalid(format!("prune target_fp {target_fp} not in (0,1)")));
    }
    let estimate = normal.window_count(k) + tumoral.window_count(k);
    let mut seen_once = BloomFilter::with_rate(estimate, target_fp);
    let mut seen_multi = BloomFilter::with_rate(estimate, target_fp);
    for read in normal.reads.iter().chain(&tumoral.reads) {
        kmer_codes(&read.bases, k, |code| {
            if seen_once.check_and_insert(code) {
                seen_multi.insert(code);
            }
        });
    }
    Ok(PruneFilter {
        seen_once,
        seen_multi,
        k,
        target_fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmer::{canonical_code, KMer, Origin};

    fn code(s: &str) -> u64 {
        let k = KMer::from_bases(s.as_bytes()).unwrap();
        canonical_code(k.code, k.k)
    }

    #[test]
    fn single_and_repeated() {
        let n = ReadSet::from_sequences(Origin::Normal, ["ACGTACCA"]).unwrap();
        let t = ReadSet::from_sequences(Origin::Tumoral, ["GGGTTT", "GGGTTT", "GGGTTT"]).unwrap();
        let f = prune(&n, &t, 6, 0.01).unwrap();
        assert!(f.contains(code("GGGTTT")));
        assert!(!f.contains(code("ACGTAC")));
    }

    #[test]
    fn rejects_bad_rate() {
        let s = ReadSet::new(Origin::Normal);
        assert!(prune(&s, &s, 5, 0.0).is_err());
        assert!(prune(&s, &s, 5, 1.0).is_err());
    }
}
