use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::fabric::{Attachment, Fabric, FabricTarget, Parent, VirtualDevice};
use crate::kmer::{parse_reads, Origin, ReadSet, DEFAULT_K, MAX_K};
use crate::kv::KvConfig;
use crate::memext::{decode_run, encode_run, BlockTarget, MemoryTarget, SpillStore, DEFAULT_CHUNK_SIZE};
use crate::traceanalysis::IoTrace;
use crate::bloom::BloomFilter;

use super::checkpoint::{CheckpointDir, StageKind};
use super::count::{count, merge_runs_sorted, FrequencyTable};
use super::index::{
    filter, group, groups_from_bytes, groups_to_bytes, merge_indexes, CandidateIndex, GroupResult,
    Thresholds,
};
use super::prune::{prune, PruneFilter};
use super::wire::{Reader, Writer};

#[derive(Clone, Debug, PartialEq)]
pub enum StorageBinding {
    Memory { capacity: u64 },
    Fabric { attachment: Attachment, namespace_size: u64 },
}

impl Default for StorageBinding {
    fn default() -> Self {
        StorageBinding::Memory { capacity: 1 << 40 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub normal_input: Option<PathBuf>,
    pub tumoral_input: Option<PathBuf>,
    pub k: u8,
    pub partitions: u32,
    /// `None` means unbounded tables.
    pub capacity_limit: Option<usize>,
    pub thresholds: Thresholds,
    pub min_candidates: usize,
    /// `None` disables Prune.
    pub prune_fp: Option<f64>,
    pub storage: StorageBinding,
    pub chunk_size: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            normal_input: None,
            tumoral_input: None,
            k: DEFAULT_K,
            partitions: 1,
            capacity_limit: None,
            thresholds: Thresholds::default(),
            min_candidates: 3,
            prune_fp: Some(0.01),
            storage: StorageBinding::default(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            checkpoint_dir: None,
        }
    }
}

pub const PIPELINE_KEYS: &[&str] = &[
    "normal",
    "tumoral",
    "k",
    "partitions",
    "capacity_limit",
    "tau_t",
    "tau_n",
    "min_candidates",
    "prune_fp",
    "device",
    "attachment",
    "namespace_size",
    "chunk_size",
    "checkpoint_dir",
];

impl PipelineConfig {
    /// Parses a pipeline config; relative paths resolve against `base`.
    pub fn from_kv(kv: &KvConfig, base: &Path) -> Result<Self> {
        kv.reject_unknown(PIPELINE_KEYS)?;
        let d = PipelineConfig::default();
        let path = |key: &str| kv.get(key).map(|p| base.join(p));
        let capacity_limit = match kv.get("capacity_limit") {
            None | Some("inf") | Some("none") | Some("unbounded") => None,
            Some(v) => Some(
                v.parse::<usize>()
                    .ok()
                    .filter(|&c| c > 0)
                    .ok_or_else(|| Error::config("capacity_limit", format!("expected positive integer or `inf`, got `{v}`")))?,
            ),
        };
        let prune_fp = match kv.get("prune_fp") {
            None => d.prune_fp,
            Some("off") | Some("none") => None,
            Some(v) => {
                let fp: f64 = v
                    .parse()
                    .map_err(|_| Error::config("prune_fp", format!("cannot parse `{v}`")))?;
                if fp == 0.0 {
                    None
                } else if fp > 0.0 && fp < 1.0 {
                    Some(fp)
                } else {
                    return Err(Error::config("prune_fp", "must be 0 (off) or in (0,1)"));
                }
            }
        };
        let storage = match kv.get("device").unwrap_or("memory") {
            "memory" => StorageBinding::Memory {
                capacity: kv.bytes_or("namespace_size", 1 << 40)?,
            },
            "fabric" | "nvme" => StorageBinding::Fabric {
                attachment: kv
                    .get("attachment")
                    .unwrap_or("fabric")
                    .parse()
                    .map_err(|e: Error| Error::config("attachment", e.to_string()))?,
                namespace_size: kv.bytes_or("namespace_size", 1 << 40)?,
            },
            other => return Err(Error::config("device", format!("expected memory or fabric, got `{other}`"))),
        };
        let cfg = PipelineConfig {
            normal_input: path("normal"),
            tumoral_input: path("tumoral"),
            k: kv.parse_or("k", d.k)?,
            partitions: kv.parse_or("partitions", d.partitions)?,
            capacity_limit,
            thresholds: Thresholds {
                tau_t: kv.parse_or("tau_t", d.thresholds.tau_t)?,
                tau_n: kv.parse_or("tau_n", d.thresholds.tau_n)?,
            },
            min_candidates: kv.parse_or("min_candidates", d.min_candidates)?,
            prune_fp,
            storage,
            chunk_size: kv.bytes_or("chunk_size", d.chunk_size)?,
            checkpoint_dir: path("checkpoint_dir"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_K).contains(&self.k) {
            return Err(Error::config("k", "must be in 1..=32"));
        }
        if self.partitions == 0 {
            return Err(Error::config("partitions", "must be at least 1"));
        }
        if self.capacity_limit == Some(0) {
            return Err(Error::config("capacity_limit", "must be positive"));
        }
        if self.thresholds.tau_t < 1 {
            return Err(Error::config("tau_t", "must be at least 1"));
        }
        if self.prune_fp.is_some() && self.thresholds.tau_t < 2 {
            return Err(Error::config("tau_t", "must be at least 2 when prune is enabled"));
        }
        if self.min_candidates < 1 {
            return Err(Error::config("min_candidates", "must be at least 1"));
        }
        if self.chunk_size == 0 {
            return Err(Error::config("chunk_size", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRun {
    pub stage: StageKind,
    pub partition: Option<u32>,
    pub elapsed: Duration,
}

impl StageRun {
    pub fn label(&self) -> String {
        match self.partition {
            Some(p) => format!("{}[{p}]", self.stage.name()),
            None => self.stage.name().to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub index: CandidateIndex,
    pub groups: Vec<GroupResult>,
    /// Requests issued by stages executed in this invocation.
    pub trace: IoTrace,
    pub executed: Vec<StageRun>,
    pub loaded: Vec<StageRun>,
    pub runs_per_partition: BTreeMap<u32, usize>,
    pub spilled_bytes: u64,
}

impl PipelineResult {
    pub fn executed_labels(&self) -> Vec<String> {
        self.executed.iter().map(StageRun::label).collect()
    }
}

/// Reads both inputs named in the config, then runs the pipeline.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult> {
    let load = |p: &Option<PathBuf>, key: &str, origin: Origin| -> Result<ReadSet> {
        let path = p.as_ref().ok_or_else(|| Error::config(key, "input path is required"))?;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        parse_reads(std::io::BufReader::new(file), origin).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    };
    let normal = load(&config.normal_input, "normal", Origin::Normal)?;
    let tumoral = load(&config.tumoral_input, "tumoral", Origin::Tumoral)?;
    run_pipeline_on(config, &normal, &tumoral)
}

pub fn run_pipeline_on(config: &PipelineConfig, normal: &ReadSet, tumoral: &ReadSet) -> Result<PipelineResult> {
    config.validate()?;
    let checkpoints = config.checkpoint_dir.as_ref().map(CheckpointDir::open).transpose()?;
    let target: Box<dyn BlockTarget> = match &config.storage {
        StorageBinding::Memory { capacity } => Box::new(MemoryTarget::new(*capacity)),
        StorageBinding::Fabric {
            attachment,
            namespace_size,
        } => {
            let mut fabric = Fabric::new(vec![VirtualDevice::new(0)])?;
            let ns = fabric.partition_namespaces(Parent::Device(0), &[*namespace_size], *attachment)?;
            Box::new(FabricTarget::new(fabric, ns[0])?)
        }
    };
    let store = SpillStore::new(target, config.chunk_size, true)?;
    let mut run = Run {
        config,
        normal,
        tumoral,
        checkpoints,
        store,
        prune: None,
        merged: None,
        fingerprints: Fingerprints::new(config, normal, tumoral),
        executed: Vec::new(),
        loaded: Vec::new(),
        runs_per_partition: BTreeMap::new(),
    };
    let groups = run.need_group()?;
    let index = run.need_merge()?;
    Ok(PipelineResult {
        index,
        groups,
        trace: run.store.io_trace(),
        spilled_bytes: run.store.bytes_written(),
        executed: run.executed,
        loaded: run.loaded,
        runs_per_partition: run.runs_per_partition,
    })
}

struct Fingerprints {
    prune: u32,
    count: u32,
    filter: u32,
    group: u32,
}

fn chain(parent: u32, text: &str) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&parent.to_le_bytes());
    h.update(text.as_bytes());
    h.finalize()
}

impl Fingerprints {
    fn new(config: &PipelineConfig, normal: &ReadSet, tumoral: &ReadSet) -> Self {
        let mut h = crc32fast::Hasher::new();
        for set in [normal, tumoral] {
            h.update(&(set.len() as u64).to_le_bytes());
            for r in &set.reads {
                h.update(&(r.len() as u32).to_le_bytes());
                h.update(&r.bases);
            }
        }
        let inputs = h.finalize();
        let prune = chain(inputs, &format!("k={};prune_fp={:?}", config.k, config.prune_fp));
        let count = chain(prune, &format!("partitions={}", config.partitions));
        let filter = chain(
            count,
            &format!("tau_t={};tau_n={}", config.thresholds.tau_t, config.thresholds.tau_n),
        );
        let group = chain(filter, &format!("min_candidates={}", config.min_candidates));
        Fingerprints {
            prune,
            count,
            filter,
            group,
        }
    }

    fn of(&self, stage: StageKind) -> u32 {
        match stage {
            StageKind::Prune => self.prune,
            StageKind::Count => self.count,
            StageKind::Filter | StageKind::Merge => self.filter,
            StageKind::Group => self.group,
        }
    }
}

struct Run<'a> {
    config: &'a PipelineConfig,
    normal: &'a ReadSet,
    tumoral: &'a ReadSet,
    checkpoints: Option<CheckpointDir>,
    store: SpillStore,
    prune: Option<PruneFilter>,
    merged: Option<CandidateIndex>,
    fingerprints: Fingerprints,
    executed: Vec<StageRun>,
    loaded: Vec<StageRun>,
    runs_per_partition: BTreeMap<u32, usize>,
}

impl Run<'_> {
    /// Loads a checkpoint or computes and saves the stage output.
    fn stage<T>(
        &mut self,
        stage: StageKind,
        partition: Option<u32>,
        decode: impl Fn(&[Vec<u8>]) -> Result<T>,
        encode: impl Fn(&T) -> Vec<Vec<u8>>,
        compute: impl FnOnce(&mut Self) -> Result<T>,
    ) -> Result<T> {
        let fp = self.fingerprints.of(stage);
        let started = Instant::now();
        if let Some(ck) = &self.checkpoints {
            if let Some(recs) = ck.load(stage, partition, fp) {
                if let Ok(v) = decode(&recs) {
                    self.loaded.push(StageRun {
                        stage,
                        partition,
                        elapsed: started.elapsed(),
                    });
                    return Ok(v);
                }
            }
        }
        let value = compute(self).map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => e.in_stage(stage.name(), partition),
        })?;
        if let Some(ck) = &self.checkpoints {
            ck.save(stage, partition, fp, &encode(&value))
                .map_err(|e| e.in_stage(stage.name(), partition))?;
        }
        self.executed.push(StageRun {
            stage,
            partition,
            elapsed: started.elapsed(),
        });
        Ok(value)
    }

    fn need_prune(&mut self) -> Result<Option<PruneFilter>> {
        let Some(fp) = self.config.prune_fp else {
            return Ok(None);
        };
        if let Some(p) = &self.prune {
            return Ok(Some(p.clone()));
        }
        let k = self.config.k;
        let filter = self.stage(
            StageKind::Prune,
            None,
            |r| decode_prune(r, k),
            encode_prune,
            |run| prune(run.normal, run.tumoral, k, fp),
        )?;
        self.prune = Some(filter.clone());
        Ok(Some(filter))
    }

    fn need_count(&mut self, p: u32) -> Result<FrequencyTable> {
        self.stage(
            StageKind::Count,
            Some(p),
            |r| {
                let rec = r.first().ok_or_else(|| Error::invalid("missing record"))?;
                Ok(FrequencyTable::from_entries(decode_run(rec, 0)?.0))
            },
            |t: &FrequencyTable| vec![encode_run(&t.sorted_entries())],
            |run| {
                let filter = run.need_prune()?;
                let mut table = FrequencyTable::new(run.config.capacity_limit);
                let runs = count(
                    run.normal,
                    run.tumoral,
                    run.config.k,
                    filter.as_ref(),
                    p,
                    run.config.partitions,
                    &mut table,
                    &mut run.store,
                )?;
                run.runs_per_partition.insert(p, runs.len());
                Ok(FrequencyTable::from_entries(merge_runs_sorted(&runs, &mut run.store)?))
            },
        )
    }

    fn need_filter(&mut self, p: u32) -> Result<CandidateIndex> {
        self.stage(
            StageKind::Filter,
            Some(p),
            decode_index,
            |i: &CandidateIndex| vec![i.to_canonical_bytes()],
            |run| {
                let table = run.need_count(p)?;
                let index = filter(&table, run.normal, run.tumoral, run.config.k, run.config.thresholds);
                if !index.is_empty() {
                    run.store.write_blob(&index.to_canonical_bytes())?;
                }
                Ok(index)
            },
        )
    }

    fn need_merge(&mut self) -> Result<CandidateIndex> {
        if let Some(m) = &self.merged {
            return Ok(m.clone());
        }
        let merged = self.stage(
            StageKind::Merge,
            None,
            decode_index,
            |i: &CandidateIndex| vec![i.to_canonical_bytes()],
            |run| {
                let mut acc = CandidateIndex::empty(run.config.k);
                for p in 0..run.config.partitions {
                    acc = merge_indexes(acc, run.need_filter(p)?);
                }
                Ok(acc)
            },
        )?;
        self.merged = Some(merged.clone());
        Ok(merged)
    }

    fn need_group(&mut self) -> Result<Vec<GroupResult>> {
        self.stage(
            StageKind::Group,
            None,
            |r| groups_from_bytes(r.first().ok_or_else(|| Error::invalid("missing record"))?),
            |g: &Vec<GroupResult>| vec![groups_to_bytes(g)],
            |run| {
                let index = run.need_merge()?;
                Ok(group(&index, run.config.min_candidates))
            },
        )
    }
}

fn decode_index(r: &[Vec<u8>]) -> Result<CandidateIndex> {
    CandidateIndex::from_canonical_bytes(r.first().ok_or_else(|| Error::invalid("missing record"))?)
}

fn encode_prune(p: &PruneFilter) -> Vec<Vec<u8>> {
    let mut meta = Writer::default();
    meta.u8(p.k);
    meta.f64(p.target_fp);
    let mut out = vec![meta.finish()];
    for bf in [&p.seen_once, &p.seen_multi] {
        let mut w = Writer::default();
        w.u64(bf.bit_len());
        w.u32(bf.hash_count());
        for &word in bf.words() {
            w.u64(word);
        }
        out.push(w.finish());
    }
    out
}

fn decode_prune(r: &[Vec<u8>], k: u8) -> Result<PruneFilter> {
    if r.len() != 3 {
        return Err(Error::invalid("prune checkpoint needs 3 records"));
    }
    let mut meta = Reader::new(&r[0]);
    let stored_k = meta.u8()?;
    let target_fp = meta.f64()?;
    if stored_k != k {
        return Err(Error::invalid("prune checkpoint k mismatch"));
    }
    let bloom = |bytes: &[u8]| -> Result<BloomFilter> {
        let mut rd = Reader::new(bytes);
        let m = rd.u64()?;
        let h = rd.u32()?;
        let mut words = Vec::with_capacity(m.div_ceil(64) as usize);
        for _ in 0..m.div_ceil(64) {
            words.push(rd.u64()?);
        }
        rd.expect_end()?;
        BloomFilter::from_raw(words, m, h).ok_or_else(|| Error::invalid("bad bloom geometry"))
    };
    Ok(PruneFilter {
        seen_once: bloom(&r[1])?,
        seen_multi: bloom(&r[2])?,
        k,
        target_fp,
    })
}
