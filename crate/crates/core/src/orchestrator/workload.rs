use crate::error::{Error, Result};

/// Burst/flush abstraction of one pipeline instance.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadModel {
    pub total_output_bytes: u64,
    /// Average write demand of a solo instance on one device, bytes/s.
    pub avg_demand_bw: f64,
    /// Device bandwidth the compute interval is derived against, bytes/s.
    pub reference_bw: f64,
    /// Peak rate a single instance can push, bytes/s.
    pub burst_bw: f64,
    pub flush_bytes: u64,
    pub chunk_bytes: u64,
    pub working_set_bytes: u64,
    /// Fraction of a flush that may still be draining when compute resumes.
    pub writeback_fraction: f64,
    /// Request size for memory-pressure spill traffic.
    pub pressure_request_bytes: u64,
    /// Relative compute-interval perturbation, uniform in `[-jitter, jitter]`.
    pub jitter: f64,
}

impl Default for WorkloadModel {
    fn default() -> Self {
        WorkloadModel {
            total_output_bytes: 150_000_000_000,
            avg_demand_bw: 477e6,
            reference_bw: 2e9,
            burst_bw: 4e9,
            flush_bytes: 1_875_000_000,
            chunk_bytes: 8 << 20,
            working_set_bytes: 40_000_000_000,
            writeback_fraction: 0.1,
            pressure_request_bytes: 20 << 10,
            jitter: 0.05,
        }
    }
}

impl WorkloadModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(key, msg));
        if self.total_output_bytes == 0 {
            return bad("total_output_bytes", "must be positive");
        }
        if !(self.avg_demand_bw > 0.0) {
            return bad("avg_demand_bw", "must be positive");
        }
        if !(self.reference_bw > 0.0) {
            return bad("reference_bw", "must be positive");
        }
        if !(self.burst_bw > 0.0) {
            return bad("burst_bw", "must be positive");
        }
        if self.flush_bytes == 0 || self.chunk_bytes == 0 || self.pressure_request_bytes == 0 {
            return bad("flush_bytes", "flush, chunk and pressure request sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.writeback_fraction) {
            return bad("writeback_fraction", "must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad("jitter", "must be in [0, 1)");
        }
        if !(self.compute_interval() > 0.0) {
            return bad("avg_demand_bw", "demand is too high for the reference bandwidth");
        }
        Ok(())
    }

    /// Compute time between flushes, chosen so a solo instance on a
    /// reference device averages `avg_demand_bw`.
    pub fn compute_interval(&self) -> f64 {
        let f = self.flush_bytes as f64;
        let blocking = (1.0 - self.writeback_fraction) * f / self.reference_bw.min(self.burst_bw);
        f / self.avg_demand_bw - blocking
    }

    /// Solo cycle length on the reference device.
    pub fn solo_cycle(&self) -> f64 {
        self.flush_bytes as f64 / self.avg_demand_bw
    }

    pub fn cycles(&self) -> u64 {
        self.total_output_bytes.div_ceil(self.flush_bytes)
    }

    /// Flush payload of each cycle; the last one may be short.
    pub fn cycle_bytes(&self) -> Vec<u64> {
        let n = self.cycles();
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.total_output_bytes - self.flush_bytes * (n - 1)
                } else {
                    self.flush_bytes
                }
            })
            .collect()
    }
}

/// Host memory shared by co-located instances.
#[derive(Clone, Debug, PartialEq)]
pub struct HostModel {
    pub count: usize,
    pub memory_bytes: u64,
    pub spill_factor: f64,
}

impl Default for HostModel {
    fn default() -> Self {
        HostModel {
            count: 8,
            memory_bytes: 100_000_000_000,
            spill_factor: 1.0,
        }
    }
}

impl HostModel {
    pub fn with_count(count: usize) -> Self {
        HostModel {
            count,
            ..HostModel::default()
        }
    }

    /// Written-bytes multiplier for `n` instances sharing one host.
    pub fn spill_multiplier(&self, n: usize, working_set: u64) -> f64 {
        let demand = n as f64 * working_set as f64;
        let mem = self.memory_bytes as f64;
        if demand <= mem {
            1.0
        } else {
            1.0 + self.spill_factor * (demand - mem) / demand
        }
    }

    /// Exact per-instance output in bytes for `n` co-located instances.
    pub fn written_bytes(&self, n: usize, workload: &WorkloadModel) -> u64 {
        let demand = n as u128 * workload.working_set_bytes as u128;
        let mem = self.memory_bytes as u128;
        let total = workload.total_output_bytes;
        if demand <= mem {
            return total;
        }
        let extra = total as f64 * self.spill_factor * ((demand - mem) as f64 / demand as f64);
        total + extra.round() as u64
    }
}
