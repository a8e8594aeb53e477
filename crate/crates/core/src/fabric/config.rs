use crate::error::{Error, Result};
use crate::kv::KvConfig;

use super::device::{
    EfficiencyCurve, VirtualDevice, DEFAULT_BANDWIDTH, DEFAULT_CAPACITY, DEFAULT_FABRIC_LATENCY,
    DEFAULT_STRIPE,
};

/// Homogeneous device pool description.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolConfig {
    pub devices: usize,
    pub bandwidth: f64,
    pub capacity: u64,
    pub efficiency: EfficiencyCurve,
    pub fabric_latency: f64,
    pub stripe_size: u64,
    pub stats_bucket: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            devices: 2,
            bandwidth: DEFAULT_BANDWIDTH,
            capacity: DEFAULT_CAPACITY,
            efficiency: EfficiencyCurve::default(),
            fabric_latency: DEFAULT_FABRIC_LATENCY,
            stripe_size: DEFAULT_STRIPE,
            stats_bucket: 1.0,
        }
    }
}

pub const POOL_KEYS: &[&str] = &[
    "devices",
    "device_bandwidth",
    "device_capacity",
    "efficiency",
    "fabric_latency_us",
    "stripe_size",
    "stats_bucket_s",
];

impl PoolConfig {
    pub fn with_devices(devices: usize) -> Self {
        PoolConfig {
            devices,
            ..PoolConfig::default()
        }
    }

    pub fn build_devices(&self) -> Vec<VirtualDevice> {
        (0..self.devices as u32)
            .map(|id| VirtualDevice {
                id,
                max_seq_write_bw: self.bandwidth,
                capacity: self.capacity,
                efficiency: self.efficiency.clone(),
                fabric_latency: self.fabric_latency,
            })
            .collect()
    }

    /// Reads the pool keys from `kv`; other keys are left to the caller.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = PoolConfig::default();
        let efficiency = match kv.f64_list("efficiency")? {
            Some(v) => EfficiencyCurve::new(v).map_err(|e| Error::config("efficiency", e.to_string()))?,
            None => d.efficiency,
        };
        let cfg = PoolConfig {
            devices: kv.parse_or("devices", d.devices)?,
            bandwidth: kv.parse_or("device_bandwidth", d.bandwidth)?,
            capacity: kv.bytes_or("device_capacity", d.capacity)?,
            efficiency,
            fabric_latency: kv.parse_or("fabric_latency_us", d.fabric_latency * 1e6)? * 1e-6,
            stripe_size: kv.bytes_or("stripe_size", d.stripe_size)?,
            stats_bucket: kv.parse_or("stats_bucket_s", d.stats_bucket)?,
        };
        if cfg.devices == 0 {
            return Err(Error::config("devices", "must be at least 1"));
        }
        if !(cfg.bandwidth > 0.0) {
            return Err(Error::config("device_bandwidth", "must be positive"));
        }
        if cfg.capacity == 0 {
            return Err(Error::config("device_capacity", "must be positive"));
        }
        if !(cfg.fabric_latency >= 0.0) {
            return Err(Error::config("fabric_latency_us", "must be non-negative"));
        }
        if cfg.stripe_size == 0 {
            return Err(Error::config("stripe_size", "must be positive"));
        }
        if !(cfg.stats_bucket > 0.0) {
            return Err(Error::config("stats_bucket_s", "must be positive"));
        }
        Ok(cfg)
    }
}
