use crate::error::{Error, Result};
use crate::fabric::{Attachment, PoolConfig, POOL_KEYS};
use crate::kv::KvConfig;

use super::compare::DEFAULT_REPEATS;
use super::plan::Strategy;
use super::simulate::FabricSetup;
use super::workload::{HostModel, WorkloadModel};

pub const SCENARIO_KEYS: &[&str] = &[
    "instances",
    "strategy",
    "hosts",
    "host_memory",
    "spill_factor",
    "attachment",
    "seed",
    "repeats",
    "total_output",
    "avg_demand_bw",
    "reference_bw",
    "burst_bw",
    "flush_bytes",
    "chunk_size",
    "working_set",
    "writeback_fraction",
    "pressure_request_size",
    "jitter",
];

/// A simulation scenario read from a key=value file.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub instances: usize,
    pub strategy: Strategy,
    pub hosts: HostModel,
    pub workload: WorkloadModel,
    pub setup: FabricSetup,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            instances: 1,
            strategy: Strategy::SingleShared,
            hosts: HostModel::default(),
            workload: WorkloadModel::default(),
            setup: FabricSetup::new(PoolConfig::default()),
            seed: 0,
            repeats: DEFAULT_REPEATS,
        }
    }
}

fn rate(kv: &KvConfig, key: &str, default: f64) -> Result<f64> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => crate::kv::parse_bytes(v)
            .map(|b| b as f64)
            .or_else(|| v.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::config(key, format!("invalid rate `{v}`"))),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        Scenario::from_kv(&KvConfig::parse(text)?)
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Scenario> {
        let allowed: Vec<&str> = SCENARIO_KEYS.iter().chain(POOL_KEYS).copied().collect();
        kv.reject_unknown(&allowed)?;
        let d = Scenario::default();
        let w = d.workload;
        let workload = WorkloadModel {
            total_output_bytes: kv.bytes_or("total_output", w.total_output_bytes)?,
            avg_demand_bw: rate(kv, "avg_demand_bw", w.avg_demand_bw)?,
            reference_bw: rate(kv, "reference_bw", w.reference_bw)?,
            burst_bw: rate(kv, "burst_bw", w.burst_bw)?,
            flush_bytes: kv.bytes_or("flush_bytes", w.flush_bytes)?,
            chunk_bytes: kv.bytes_or("chunk_size", w.chunk_bytes)?,
            working_set_bytes: kv.bytes_or("working_set", w.working_set_bytes)?,
            writeback_fraction: kv.parse_or("writeback_fraction", w.writeback_fraction)?,
            pressure_request_bytes: kv.bytes_or("pressure_request_size", w.pressure_request_bytes)?,
            jitter: kv.parse_or("jitter", w.jitter)?,
        };
        workload.validate()?;
        let instances: usize = kv.parse_or("instances", d.instances)?;
        if instances == 0 {
            return Err(Error::config("instances", "must be positive"));
        }
        let hosts = HostModel {
            count: kv.parse_or("hosts", instances)?,
            memory_bytes: kv.bytes_or("host_memory", d.hosts.memory_bytes)?,
            spill_factor: kv.parse_or("spill_factor", d.hosts.spill_factor)?,
        };
        if hosts.count == 0 {
            return Err(Error::config("hosts", "must be positive"));
        }
        if !(hosts.spill_factor >= 0.0) {
            return Err(Error::config("spill_factor", "must be non-negative"));
        }
        let strategy = match kv.get("strategy") {
            Some(s) => s.parse().map_err(|e: Error| Error::config("strategy", e.to_string()))?,
            None => d.strategy,
        };
        let attachment: Attachment = match kv.get("attachment") {
            Some(s) => s.parse().map_err(|e: Error| Error::config("attachment", e.to_string()))?,
            None => Attachment::Fabric,
        };
        let repeats: usize = kv.parse_or("repeats", d.repeats)?;
        if repeats == 0 {
            return Err(Error::config("repeats", "must be positive"));
        }
        Ok(Scenario {
            instances,
            strategy,
            hosts,
            workload,
            setup: FabricSetup::new(PoolConfig::from_kv(kv)?).with_attachment(attachment),
            seed: kv.parse_or("seed", d.seed)?,
            repeats,
        })
    }
}
