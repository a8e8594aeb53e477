//! Brute-force reference implementations built on plain strings.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use smufin_core::kmer::{Origin, ReadKey, ReadSet};
use smufin_core::stages::{CandidateIndex, GroupResult};
use smufin_core::synth::{generate, SynthSpec};

pub fn revcomp(s: &[u8]) -> Vec<u8> {
    s.iter()
        .rev()
        .map(|b| match b {
            b'A' => b'T',
            b'C' => b'G',
            b'G' => b'C',
            b'T' => b'A',
            _ => unreachable!("non-ACGT base"),
        })
        .collect()
}

pub fn canonical(s: &[u8]) -> Vec<u8> {
    let rc = revcomp(s);
    if rc.as_slice() < s {
        rc
    } else {
        s.to_vec()
    }
}

pub fn code(s: &[u8]) -> u64 {
    s.iter().fold(0, |acc, b| {
        let v = match b {
            b'A' => 0,
            b'C' => 1,
            b'G' => 2,
            b'T' => 3,
            _ => unreachable!(),
        };
        acc * 4 + v
    })
}

/// Canonical windows of a read that contain only ACGT.
pub fn windows(bases: &[u8], k: usize) -> Vec<Vec<u8>> {
    if bases.len() < k {
        return Vec::new();
    }
    (0..=bases.len() - k)
        .map(|i| bases[i..i + k].to_ascii_uppercase())
        .filter(|w| w.iter().all(|b| b"ACGT".contains(b)))
        .map(|w| canonical(&w))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleCandidate {
    pub normal: u32,
    pub tumoral: u32,
    pub normal_reads: BTreeSet<u32>,
    pub tumoral_reads: BTreeSet<u32>,
}

/// Exact multiplicity of every canonical k-mer over both inputs.
pub fn multiplicities(normal: &ReadSet, tumoral: &ReadSet, k: usize) -> BTreeMap<Vec<u8>, (u32, u32)> {
    let mut counts: BTreeMap<Vec<u8>, (u32, u32)> = BTreeMap::new();
    for r in normal.reads.iter().chain(&tumoral.reads) {
        for w in windows(&r.bases, k) {
            let c = counts.entry(w).or_default();
            match r.origin {
                Origin::Normal => c.0 += 1,
                Origin::Tumoral => c.1 += 1,
            }
        }
    }
    counts
}

pub fn candidates(
    normal: &ReadSet,
    tumoral: &ReadSet,
    k: usize,
    tau_t: u32,
    tau_n: u32,
) -> BTreeMap<Vec<u8>, OracleCandidate> {
    let mut out: BTreeMap<Vec<u8>, OracleCandidate> = multiplicities(normal, tumoral, k)
        .into_iter()
        .filter(|(_, (n, t))| *t >= tau_t && *n <= tau_n)
        .map(|(w, (n, t))| {
            (
                w,
                OracleCandidate {
                    normal: n,
                    tumoral: t,
                    ..Default::default()
                },
            )
        })
        .collect();
    for r in normal.reads.iter().chain(&tumoral.reads) {
        for w in windows(&r.bases, k) {
            if let Some(c) = out.get_mut(&w) {
                match r.origin {
                    Origin::Normal => c.normal_reads.insert(r.id),
                    Origin::Tumoral => c.tumoral_reads.insert(r.id),
                };
            }
        }
    }
    out
}

/// `(seed, members, sorted shared codes)` per qualifying tumoral read.
pub fn groups(
    cands: &BTreeMap<Vec<u8>, OracleCandidate>,
    tumoral: &ReadSet,
    k: usize,
    min_candidates: usize,
) -> Vec<(ReadKey, BTreeSet<ReadKey>, Vec<u64>)> {
    let mut out = Vec::new();
    let mut reads: Vec<_> = tumoral.reads.iter().collect();
    reads.sort_by_key(|r| r.id);
    for r in reads {
        let shared: BTreeSet<Vec<u8>> = windows(&r.bases, k)
            .into_iter()
            .filter(|w| cands.contains_key(w))
            .collect();
        if shared.is_empty() || shared.len() < min_candidates {
            continue;
        }
        let mut members = BTreeSet::new();
        for w in &shared {
            let c = &cands[w];
            members.extend(c.normal_reads.iter().map(|&id| (Origin::Normal, id)));
            members.extend(c.tumoral_reads.iter().map(|&id| (Origin::Tumoral, id)));
        }
        let mut codes: Vec<u64> = shared.iter().map(|w| code(w)).collect();
        codes.sort_unstable();
        out.push(((Origin::Tumoral, r.id), members, codes));
    }
    out
}

/// Panics with a description of the first mismatch.
#[allow(clippy::too_many_arguments)]
pub fn assert_matches(
    index: &CandidateIndex,
    result_groups: &[GroupResult],
    normal: &ReadSet,
    tumoral: &ReadSet,
    k: usize,
    tau_t: u32,
    tau_n: u32,
    min_candidates: usize,
) {
    let expect = candidates(normal, tumoral, k, tau_t, tau_n);
    let got = index.candidates();
    assert_eq!(
        got.keys().copied().collect::<Vec<_>>(),
        {
            let mut v: Vec<u64> = expect.keys().map(|w| code(w)).collect();
            v.sort_unstable();
            v
        },
        "candidate k-mer sets differ"
    );
    for (w, e) in &expect {
        let c = &got[&code(w)];
        assert_eq!((c.normal_count, c.tumoral_count), (e.normal, e.tumoral), "counts of {}", String::from_utf8_lossy(w));
        assert_eq!(c.normal_reads.iter().collect::<BTreeSet<_>>(), e.normal_reads);
        assert_eq!(c.tumoral_reads.iter().collect::<BTreeSet<_>>(), e.tumoral_reads);
    }
    let mut stored: BTreeSet<ReadKey> = BTreeSet::new();
    for e in expect.values() {
        stored.extend(e.normal_reads.iter().map(|&id| (Origin::Normal, id)));
        stored.extend(e.tumoral_reads.iter().map(|&id| (Origin::Tumoral, id)));
    }
    let got_stored: BTreeSet<ReadKey> = index.read_store().iter().map(|r| (r.origin, r.id)).collect();
    assert_eq!(got_stored, stored, "read store differs");
    for r in index.read_store() {
        let set = if r.origin == Origin::Normal { normal } else { tumoral };
        assert_eq!(set.get(r.id).unwrap().bases, r.bases);
    }
    let expect_groups = groups(&expect, tumoral, k, min_candidates);
    let got_groups: Vec<_> = result_groups
        .iter()
        .map(|g| (g.seed, g.members.clone(), g.shared_kmers.iter().map(|m| m.code).collect::<Vec<_>>()))
        .collect();
    assert_eq!(got_groups, expect_groups, "groups differ");
}

/// A randomized instance with `reads` reads split across both inputs.
pub fn instance(seed: u64, reads: usize) -> (ReadSet, ReadSet) {
    let spec = SynthSpec {
        genome_len: 1_500 + (seed as usize % 5) * 200,
        normal_reads: reads / 2,
        tumoral_reads: reads - reads / 2,
        read_len: (80, 120),
        somatic_mutations: 3 + (seed as usize % 4),
        error_rate: 0.003,
        n_rate: 0.002,
    };
    generate(&spec, seed)
}
