//! Deterministic synthetic normal/tumoral read sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kmer::{Origin, ReadSet};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub genome_len: usize,
    pub normal_reads: usize,
    pub tumoral_reads: usize,
    pub read_len: (usize, usize),
    /// Point mutations present only in the tumoral genome.
    pub somatic_mutations: usize,
    /// Per-base substitution error rate.
    pub error_rate: f64,
    /// Per-base probability of an `N`.
    pub n_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            genome_len: 5_000,
            normal_reads: 300,
            tumoral_reads: 300,
            read_len: (80, 120),
            somatic_mutations: 6,
            error_rate: 0.002,
            n_rate: 0.001,
        }
    }
}

const BASES: [u8; 4] = *b"ACGT";

/// Samples reads from a random genome and a mutated copy of it.
pub fn generate(spec: &SynthSpec, seed: u64) -> (ReadSet, ReadSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genome: Vec<u8> = (0..spec.genome_len).map(|_| BASES[rng.gen_range(0..4)]).collect();
    let mut tumor_genome = genome.clone();
    for _ in 0..spec.somatic_mutations {
        let pos = rng.gen_range(0..tumor_genome.len());
        let old = tumor_genome[pos];
        let mut new = old;
        while new == old {
            new = BASES[rng.gen_range(0..4)];
        }
        tumor_genome[pos] = new;
    }
    let normal = sample(&genome, spec.normal_reads, Origin::Normal, spec, &mut rng);
    let tumoral = sample(&tumor_genome, spec.tumoral_reads, Origin::Tumoral, spec, &mut rng);
    (normal, tumoral)
}

fn sample(genome: &[u8], count: usize, origin: Origin, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> ReadSet {
    let mut set = ReadSet::new(origin);
    let (lo, hi) = spec.read_len;
    for _ in 0..count {
        let len = rng.gen_range(lo..=hi).min(genome.len());
        let start = rng.gen_range(0..=genome.len() - len);
        let mut read = genome[start..start + len].to_vec();
        if rng.gen_bool(0.5) {
            read.reverse();
            for b in &mut read {
                *b = match *b {
                    b'A' => b'T',
                    b'C' => b'G',
                    b'G' => b'C',
                    _ => b'A',
                };
            }
        }
        for b in &mut read {
            if rng.gen_bool(spec.n_rate) {
                *b = b'N';
            } else if rng.gen_bool(spec.error_rate) {
                *b = BASES[rng.gen_range(0..4)];
            }
        }
        set.push(read);
    }
    set
}
