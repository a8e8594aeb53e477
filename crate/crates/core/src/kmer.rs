//! Reads, 2-bit packed k-mers and partition assignment.

use std::fmt;
use std::io::BufRead;

use crate::error::{Error, Result};

pub const DEFAULT_K: u8 = 30;
pub const MAX_K: u8 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Normal,
    Tumoral,
}

impl Origin {
    pub fn as_u8(self) -> u8 {
        match self {
            Origin::Normal => 0,
            Origin::Tumoral => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Origin::Normal),
            1 => Some(Origin::Tumoral),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Origin::Normal => "N",
            Origin::Tumoral => "T",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Address of a read across both inputs.
pub type ReadKey = (Origin, u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Read {
    pub id: u32,
    pub origin: Origin,
    /// Upper-case bases over `ACGTN`.
    pub bases: Vec<u8>,
}

impl Read {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn key(&self) -> ReadKey {
        (self.origin, self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadSet {
    pub origin: Origin,
    pub reads: Vec<Read>,
}

impl ReadSet {
    pub fn new(origin: Origin) -> Self {
        ReadSet {
            origin,
            reads: Vec::new(),
        }
    }

    /// Builds a set from raw sequences, assigning ids in order.
    pub fn from_sequences<I, S>(origin: Origin, seqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut set = ReadSet::new(origin);
        for (idx, seq) in seqs.into_iter().enumerate() {
            let bases = normalize_bases(seq.as_ref()).ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "illegal base character".into(),
            })?;
            if bases.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "empty sequence".into(),
                });
            }
            set.push(bases);
        }
        Ok(set)
    }

    pub fn push(&mut self, bases: Vec<u8>) {
        let id = self.reads.len() as u32;
        self.reads.push(Read {
            id,
            origin: self.origin,
            bases,
        });
    }

    pub fn len(&self) -> usize {
        self.reads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Read> {
        self.reads.get(id as usize)
    }

    /// Total number of k-length windows, N-touching or not.
    pub fn window_count(&self, k: u8) -> u64 {
        self.reads
            .iter()
            .map(|r| (r.len() + 1).saturating_sub(k as usize) as u64)
            .sum()
    }

    pub fn to_fasta(&self) -> String {
        let mut out = String::new();
        for r in &self.reads {
            out.push('>');
            out.push_str(&format!("{}{}\n", r.origin.label().to_lowercase(), r.id));
            out.push_str(std::str::from_utf8(&r.bases).expect("bases are ascii"));
            out.push('\n');
        }
        out
    }
}

fn normalize_bases(raw: &[u8]) -> Option<Vec<u8>> {
    raw.iter()
        .map(|&c| match c.to_ascii_uppercase() {
            b @ (b'A' | b'C' | b'G' | b'T' | b'N') => Some(b),
            _ => None,
        })
        .collect()
}

/// Parses a FASTA-like stream with exactly one sequence line per record.
pub fn parse_reads<R: BufRead>(input: R, origin: Origin) -> Result<ReadSet> {
    let mut set = ReadSet::new(origin);
    let mut pending_header: Option<usize> = None;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if line.starts_with('>') {
            if let Some(h) = pending_header {
                return Err(Error::Parse {
                    line: h,
                    message: "header without sequence".into(),
                });
            }
            pending_header = Some(lineno);
            continue;
        }
        if pending_header.take().is_none() {
            return Err(Error::Parse {
                line: lineno,
                message: "sequence before header".into(),
            });
        }
        let bases = normalize_bases(line.as_bytes()).ok_or_else(|| Error::Parse {
            line: lineno,
            message: "illegal character in sequence".into(),
        })?;
        set.push(bases);
    }
    if let Some(h) = pending_header {
        return Err(Error::Parse {
            line: h,
            message: "header without sequence".into(),
        });
    }
    Ok(set)
}

pub fn parse_reads_str(text: &str, origin: Origin) -> Result<ReadSet> {
    parse_reads(text.as_bytes(), origin)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KMer {
    pub code: u64,
    pub k: u8,
}

impl KMer {
    pub fn from_bases(bases: &[u8]) -> Option<KMer> {
        if bases.is_empty() || bases.len() > MAX_K as usize {
            return None;
        }
        let mut code = 0u64;
        for &b in bases {
            code = (code << 2) | encode_base(b)? as u64;
        }
        Some(KMer {
            code,
            k: bases.len() as u8,
        })
    }

    pub fn to_bases(&self) -> Vec<u8> {
        (0..self.k)
            .map(|i| {
                let shift = 2 * (self.k - 1 - i) as u32;
                b"ACGT"[((self.code >> shift) & 3) as usize]
            })
            .collect()
    }

    pub fn revcomp(&self) -> KMer {
        KMer {
            code: revcomp_code(self.code, self.k),
            k: self.k,
        }
    }
}

impl fmt::Display for KMer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(std::str::from_utf8(&self.to_bases()).expect("ascii"))
    }
}

pub fn encode_base(b: u8) -> Option<u8> {
    match b {
        b'A' | b'a' => Some(0),
        b'C' | b'c' => Some(1),
        b'G' | b'g' => Some(2),
        b'T' | b't' => Some(3),
        _ => None,
    }
}

#[inline]
pub fn kmer_mask(k: u8) -> u64 {
    if k >= 32 {
        u64::MAX
    } else {
        (1u64 << (2 * k as u32)) - 1
    }
}

/// Reverse complement of a packed k-mer.
#[inline]
pub fn revcomp_code(code: u64, k: u8) -> u64 {
    let mut x = !code;
    x = ((x >> 2) & 0x3333_3333_3333_3333) | ((x & 0x3333_3333_3333_3333) << 2);
    x = ((x >> 4) & 0x0F0F_0F0F_0F0F_0F0F) | ((x & 0x0F0F_0F0F_0F0F_0F0F) << 4);
    x = x.swap_bytes();
    x >> (64 - 2 * k as u32)
}

#[inline]
pub fn canonical_code(code: u64, k: u8) -> u64 {
    code.min(revcomp_code(code, k))
}

pub fn canonical(kmer: KMer) -> KMer {
    KMer {
        code: canonical_code(kmer.code, kmer.k),
        k: kmer.k,
    }
}

/// Canonical codes of every N-free window, in read order.
pub fn kmer_codes(bases: &[u8], k: u8, mut emit: impl FnMut(u64)) {
    assert!((1..=MAX_K).contains(&k), "k must be in 1..=32");
    let mask = kmer_mask(k);
    let rc_shift = 2 * (k as u32 - 1);
    let mut fwd = 0u64;
    let mut rev = 0u64;
    let mut valid = 0usize;
    for &b in bases {
        match encode_base(b) {
            Some(v) => {
                let v = v as u64;
                fwd = ((fwd << 2) | v) & mask;
                rev = (rev >> 2) | ((3 - v) << rc_shift);
                valid += 1;
                if valid >= k as usize {
                    emit(fwd.min(rev));
                }
            }
            None => {
                valid = 0;
                fwd = 0;
                rev = 0;
            }
        }
    }
}

pub fn kmers_of(read: &Read, k: u8) -> Vec<KMer> {
    let mut out = Vec::with_capacity((read.len() + 1).saturating_sub(k as usize));
    kmer_codes(&read.bases, k, |code| out.push(KMer { code, k }));
    out
}

const PARTITION_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn partition_of_code(canonical: u64, partitions: u32) -> u32 {
    debug_assert!(partitions >= 1);
    let h = canonical.wrapping_mul(PARTITION_MULTIPLIER) >> 32;
    (h % partitions as u64) as u32
}

pub fn partition_of(kmer: KMer, partitions: u32) -> u32 {
    partition_of_code(canonical_code(kmer.code, kmer.k), partitions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn km(s: &str) -> KMer {
        KMer::from_bases(s.as_bytes()).unwrap()
    }

    #[test]
    fn parses_single_record() {
        let set = parse_reads_str(">r0\nACGT\n", Origin::Normal).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.reads[0].id, 0);
        assert_eq!(set.reads[0].bases, b"ACGT");
    }

    #[test]
    fn folds_case() {
        let set = parse_reads_str(">a\nacgtn\n>b\nTTTT\n", Origin::Tumoral).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.reads[0].bases, b"ACGTN");
        assert_eq!(set.reads[1].id, 1);
        assert_eq!(set.reads[1].origin, Origin::Tumoral);
    }

    #[test]
    fn rejects_illegal_character_with_line() {
        match parse_reads_str(">x\nAC1T\n", Origin::Normal) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_sequence_before_header() {
        match parse_reads_str("ACGT\n>x\nA\n", Origin::Normal) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_dangling_header() {
        assert!(parse_reads_str(">x\nA\n>y\n", Origin::Normal).is_err());
        assert!(parse_reads_str(">x\n>y\nA\n", Origin::Normal).is_err());
    }

    #[test]
    fn accepts_crlf() {
        let set = parse_reads_str(">x\r\nACGT\r\n", Origin::Normal).unwrap();
        assert_eq!(set.reads[0].bases, b"ACGT");
    }

    #[test]
    fn windows_before_canonicalization() {
        let read = Read {
            id: 0,
            origin: Origin::Normal,
            bases: b"ACGTA".to_vec(),
        };
        let got = kmers_of(&read, 4);
        assert_eq!(got, vec![canonical(km("ACGT")), canonical(km("CGTA"))]);
    }

    #[test]
    fn skips_n_windows() {
        let read = Read {
            id: 0,
            origin: Origin::Normal,
            bases: b"ACNGT".to_vec(),
        };
        let got = kmers_of(&read, 2);
        assert_eq!(got, vec![canonical(km("AC")), canonical(km("GT"))]);
    }

    #[test]
    fn short_read_has_no_kmers() {
        let read = Read {
            id: 0,
            origin: Origin::Normal,
            bases: b"ACG".to_vec(),
        };
        assert!(kmers_of(&read, 4).is_empty());
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canonical(km("AA")), km("AA"));
        assert_eq!(km("AA").revcomp(), km("TT"));
        assert_eq!(canonical(km("AT")), km("AT"));
        assert_eq!(canonical(km("TTG")), km("CAA"));
        assert_eq!(km("ACGGT").revcomp(), km("ACCGT"));
    }

    #[test]
    fn revcomp_at_full_width() {
        let s = "ACGTTGCAACGTTGCAACGTTGCAACGTTGCC";
        let rc: String = s
            .bytes()
            .rev()
            .map(|b| match b {
                b'A' => 'T',
                b'C' => 'G',
                b'G' => 'C',
                _ => 'A',
            })
            .collect();
        assert_eq!(km(s).revcomp(), km(&rc));
    }

    #[test]
    fn bases_round_trip() {
        assert_eq!(km("GATTACA").to_bases(), b"GATTACA");
        assert_eq!(km("GATTACA").to_string(), "GATTACA");
    }

    #[test]
    fn single_partition_is_zero() {
        for code in [0u64, 1, 77, 1 << 40] {
            assert_eq!(partition_of(KMer { code, k: 30 }, 1), 0);
        }
    }
}
