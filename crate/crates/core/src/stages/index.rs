use std::collections::{BTreeMap, BTreeSet, HashSet};

use roaring::RoaringBitmap;

use crate::error::{Error, Result};
use crate::kmer::{kmer_codes, KMer, Origin, ReadKey, ReadSet};

use super::count::FrequencyTable;
use super::wire::{Reader, Writer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Thresholds {
    pub tau_t: u32,
    pub tau_n: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { tau_t: 4, tau_n: 1 }
    }
}

impl Thresholds {
    pub fn is_candidate(&self, normal: u32, tumoral: u32) -> bool {
        tumoral >= self.tau_t && normal <= self.tau_n
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Candidate {
    pub normal_count: u32,
    pub tumoral_count: u32,
    pub normal_reads: RoaringBitmap,
    pub tumoral_reads: RoaringBitmap,
}

impl Candidate {
    pub fn reads(&self, origin: Origin) -> &RoaringBitmap {
        match origin {
            Origin::Normal => &self.normal_reads,
            Origin::Tumoral => &self.tumoral_reads,
        }
    }

    fn reads_mut(&mut self, origin: Origin) -> &mut RoaringBitmap {
        match origin {
            Origin::Normal => &mut self.normal_reads,
            Origin::Tumoral => &mut self.tumoral_reads,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredRead {
    pub origin: Origin,
    pub id: u32,
    pub bases: Vec<u8>,
}

/// Imbalanced k-mers with read-membership bitmaps and the reads behind them.
#[derive(Clone, Debug)]
pub struct CandidateIndex {
    pub k: u8,
    candidates: BTreeMap<u64, Candidate>,
    read_store: Vec<StoredRead>,
    stored: HashSet<ReadKey>,
}

impl PartialEq for CandidateIndex {
    fn eq(&self, other: &Self) -> bool {
        self.to_canonical_bytes() == other.to_canonical_bytes()
    }
}

impl CandidateIndex {
    pub fn empty(k: u8) -> Self {
        CandidateIndex {
            k,
            candidates: BTreeMap::new(),
            read_store: Vec::new(),
            stored: HashSet::new(),
        }
    }

    pub fn candidates(&self) -> &BTreeMap<u64, Candidate> {
        &self.candidates
    }

    pub fn candidate(&self, code: u64) -> Option<&Candidate> {
        self.candidates.get(&code)
    }

    pub fn read_store(&self) -> &[StoredRead] {
        &self.read_store
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn kmers(&self) -> impl Iterator<Item = KMer> + '_ {
        let k = self.k;
        self.candidates.keys().map(move |&code| KMer { code, k })
    }

    fn store_read(&mut self, origin: Origin, id: u32, bases: &[u8]) {
        if self.stored.insert((origin, id)) {
            self.read_store.push(StoredRead {
                origin,
                id,
                bases: bases.to_vec(),
            });
        }
    }

    /// Candidate codes grouped per tumoral read, ascending by read id.
    pub fn tumoral_read_candidates(&self) -> BTreeMap<u32, Vec<u64>> {
        let mut per_read: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for (&code, c) in &self.candidates {
            for id in c.tumoral_reads.iter() {
                per_read.entry(id).or_default().push(code);
            }
        }
        per_read
    }

    /// Candidates sorted by code, then the read store sorted by `(origin, id)`.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u8(self.k);
        w.u64(self.candidates.len() as u64);
        for (&code, c) in &self.candidates {
            w.u64(code);
            w.u32(c.normal_count);
            w.u32(c.tumoral_count);
            for bm in [&c.normal_reads, &c.tumoral_reads] {
                w.u32(bm.len() as u32);
                for id in bm.iter() {
                    w.u32(id);
                }
            }
        }
        let mut reads: Vec<&StoredRead> = self.read_store.iter().collect();
        reads.sort_by_key(|r| (r.origin, r.id));
        w.u64(reads.len() as u64);
        for r in reads {
            w.u8(r.origin.as_u8());
            w.u32(r.id);
            w.bytes(&r.bases);
        }
        w.finish()
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let mut index = CandidateIndex::empty(r.u8()?);
        let n = r.u64()?;
        for _ in 0..n {
            let code = r.u64()?;
            let mut c = Candidate {
                normal_count: r.u32()?,
                tumoral_count: r.u32()?,
                ..Default::default()
            };
            for origin in [Origin::Normal, Origin::Tumoral] {
                let len = r.u32()?;
                for _ in 0..len {
                    c.reads_mut(origin).insert(r.u32()?);
                }
            }
            index.candidates.insert(code, c);
        }
        let reads = r.u64()?;
        for _ in 0..reads {
            let origin = Origin::from_u8(r.u8()?).ok_or_else(|| Error::invalid("bad origin tag"))?;
            let id = r.u32()?;
            let bases = r.bytes()?.to_vec();
            index.store_read(origin, id, &bases);
        }
        r.expect_end()?;
        Ok(index)
    }
}

/// Selects imbalanced k-mers and indexes every read containing one.
pub fn filter(
    table: &FrequencyTable,
    normal: &ReadSet,
    tumoral: &ReadSet,
    k: u8,
    thresholds: Thresholds,
) -> CandidateIndex {
    let mut index = CandidateIndex::empty(k);
    for e in table.sorted_entries() {
        if thresholds.is_candidate(e.normal, e.tumoral) {
            index.candidates.insert(
                e.code,
                Candidate {
                    normal_count: e.normal,
                    tumoral_count: e.tumoral,
                    ..Default::default()
                },
            );
        }
    }
    if index.candidates.is_empty() {
        return index;
    }
    for read in normal.reads.iter().chain(&tumoral.reads) {
        let mut hit = false;
        kmer_codes(&read.bases, k, |code| {
            if let Some(c) = index.candidates.get_mut(&code) {
                c.reads_mut(read.origin).insert(read.id);
                hit = true;
            }
        });
        if hit {
            index.store_read(read.origin, read.id, &read.bases);
        }
    }
    index
}

/// Union of two indexes: counts summed and bitmaps OR-ed on shared k-mers.
pub fn merge_indexes(mut a: CandidateIndex, b: CandidateIndex) -> CandidateIndex {
    debug_assert_eq!(a.k, b.k, "merging indexes with different k");
    for (code, cb) in b.candidates {
        match a.candidates.get_mut(&code) {
            Some(ca) => {
                ca.normal_count += cb.normal_count;
                ca.tumoral_count += cb.tumoral_count;
                ca.normal_reads |= cb.normal_reads;
                ca.tumoral_reads |= cb.tumoral_reads;
            }
            None => {
                a.candidates.insert(code, cb);
            }
        }
    }
    for r in b.read_store {
        if a.stored.insert((r.origin, r.id)) {
            a.read_store.push(r);
        }
    }
    a
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupResult {
    pub seed: ReadKey,
    pub members: BTreeSet<ReadKey>,
    pub shared_kmers: Vec<KMer>,
}

/// Seeds are tumoral reads with at least `min_candidates` candidate k-mers.
pub fn group(index: &CandidateIndex, min_candidates: usize) -> Vec<GroupResult> {
    let min_candidates = min_candidates.max(1);
    let mut out = Vec::new();
    for (seed_id, codes) in index.tumoral_read_candidates() {
        if codes.len() < min_candidates {
            continue;
        }
        let mut normal = RoaringBitmap::new();
        let mut tumoral = RoaringBitmap::new();
        for code in &codes {
            let c = &index.candidates[code];
            normal |= &c.normal_reads;
            tumoral |= &c.tumoral_reads;
        }
        let members = normal
            .iter()
            .map(|id| (Origin::Normal, id))
            .chain(tumoral.iter().map(|id| (Origin::Tumoral, id)))
            .collect();
        out.push(GroupResult {
            seed: (Origin::Tumoral, seed_id),
            members,
            shared_kmers: codes
                .into_iter()
                .map(|code| KMer { code, k: index.k })
                .collect(),
        });
    }
    out
}

pub fn groups_to_bytes(groups: &[GroupResult]) -> Vec<u8> {
    let mut w = Writer::default();
    w.u64(groups.len() as u64);
    for g in groups {
        w.u8(g.seed.0.as_u8());
        w.u32(g.seed.1);
        w.u32(g.members.len() as u32);
        for m in &g.members {
            w.u8(m.0.as_u8());
            w.u32(m.1);
        }
        w.u32(g.shared_kmers.len() as u32);
        for km in &g.shared_kmers {
            w.u8(km.k);
            w.u64(km.code);
        }
    }
    w.finish()
}

pub fn groups_from_bytes(bytes: &[u8]) -> Result<Vec<GroupResult>> {
    let mut r = Reader::new(bytes);
    let origin = |v: u8| Origin::from_u8(v).ok_or_else(|| Error::invalid("bad origin tag"));
    let n = r.u64()?;
    let mut out = Vec::new();
    for _ in 0..n {
        let seed = (origin(r.u8()?)?, r.u32()?);
        let mut members = BTreeSet::new();
        for _ in 0..r.u32()? {
            members.insert((origin(r.u8()?)?, r.u32()?));
        }
        let mut shared_kmers = Vec::new();
        for _ in 0..r.u32()? {
            let k = r.u8()?;
            shared_kmers.push(KMer { code: r.u64()?, k });
        }
        out.push(GroupResult {
            seed,
            members,
            shared_kmers,
        });
    }
    r.expect_end()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memext::RunEntry;

    fn table(entries: &[(u64, u32, u32)]) -> FrequencyTable {
        FrequencyTable::from_entries(entries.iter().map(|&(code, normal, tumoral)| RunEntry {
            code,
            normal,
            tumoral,
        }))
    }

    #[test]
    fn predicate_examples() {
        let th = Thresholds::default();
        assert!(th.is_candidate(0, 5));
        assert!(!th.is_candidate(5, 5));
        assert!(th.is_candidate(1, 4));
        assert!(!th.is_candidate(0, 3));
    }

    #[test]
    fn filter_indexes_reads() {
        let normal = ReadSet::from_sequences(Origin::Normal, ["CCCCCC", "AAAAA"]).unwrap();
        let tumoral = ReadSet::from_sequences(Origin::Tumoral, ["AAAA", "GGGG"]).unwrap();
        // AAAA canonical code 0.
        let idx = filter(&table(&[(0, 1, 4), (85, 5, 5)]), &normal, &tumoral, 4, Thresholds::default());
        assert_eq!(idx.len(), 1);
        let c = idx.candidate(0).unwrap();
        assert_eq!(c.normal_reads.iter().collect::<Vec<_>>(), vec![1]);
        assert_eq!(c.tumoral_reads.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(idx.read_store().len(), 2);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let normal = ReadSet::from_sequences(Origin::Normal, ["AAAAA"]).unwrap();
        let tumoral = ReadSet::from_sequences(Origin::Tumoral, ["AAAA"]).unwrap();
        let a = filter(&table(&[(0, 0, 9)]), &normal, &tumoral, 4, Thresholds::default());
        let merged = merge_indexes(CandidateIndex::empty(4), a.clone());
        assert_eq!(merged, a);
        let merged = merge_indexes(a.clone(), CandidateIndex::empty(4));
        assert_eq!(merged, a);
    }

    #[test]
    fn merge_dedups_reads_and_ors_bitmaps() {
        let normal = ReadSet::new(Origin::Normal);
        let tumoral = ReadSet::from_sequences(Origin::Tumoral, ["AAAACCCC", "AAAA"]).unwrap();
        let a = filter(&table(&[(0, 0, 5)]), &normal, &tumoral, 4, Thresholds::default());
        let cccc = KMer::from_bases(b"CCCC").unwrap();
        let cccc = crate::kmer::canonical(cccc).code;
        let b = filter(&table(&[(cccc, 0, 5)]), &normal, &tumoral, 4, Thresholds::default());
        let m = merge_indexes(a, b);
        assert_eq!(m.len(), 2);
        assert_eq!(m.read_store().len(), 2);
    }

    #[test]
    fn one_group_per_seed() {
        let normal = ReadSet::from_sequences(Origin::Normal, ["C", "C", "C", "GAAAA"]).unwrap();
        let tumoral = ReadSet::from_sequences(Origin::Tumoral, ["AAAAT"]).unwrap();
        let idx = filter(&table(&[(0, 1, 4)]), &normal, &tumoral, 4, Thresholds::default());
        let groups = group(&idx, 1);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].seed, (Origin::Tumoral, 0));
        let members: Vec<_> = groups[0].members.iter().copied().collect();
        assert_eq!(members, vec![(Origin::Normal, 3), (Origin::Tumoral, 0)]);
        assert!(group(&idx, 2).is_empty());
    }

    #[test]
    fn canonical_bytes_round_trip() {
        let normal = ReadSet::from_sequences(Origin::Normal, ["AAAAC"]).unwrap();
        let tumoral = ReadSet::from_sequences(Origin::Tumoral, ["AAAAG", "TTTT"]).unwrap();
        let idx = filter(&table(&[(0, 1, 6)]), &normal, &tumoral, 4, Thresholds::default());
        let back = CandidateIndex::from_canonical_bytes(&idx.to_canonical_bytes()).unwrap();
        assert_eq!(back.to_canonical_bytes(), idx.to_canonical_bytes());
        let groups = group(&idx, 1);
        assert_eq!(groups_from_bytes(&groups_to_bytes(&groups)).unwrap(), groups);
    }
}
