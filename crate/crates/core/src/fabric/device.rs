use crate::error::{Error, Result};

pub const DEFAULT_BANDWIDTH: f64 = 2e9;
pub const DEFAULT_CAPACITY: u64 = 2_000_000_000_000;
pub const DEFAULT_FABRIC_LATENCY: f64 = 15e-6;
pub const DEFAULT_STRIPE: u64 = 128 << 10;

/// Fraction of peak bandwidth a device delivers with `n` open streams.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyCurve {
    factors: Vec<f64>,
}

impl EfficiencyCurve {
    /// `factors[i]` is the factor for `i + 1` streams; the last entry extends.
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("efficiency curve needs at least one factor"));
        }
        if factors[0] != 1.0 {
            return Err(Error::invalid("efficiency curve must start at 1.0"));
        }
        if factors.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::invalid("efficiency factors must lie in (0, 1]"));
        }
        if factors.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("efficiency curve must be non-increasing"));
        }
        Ok(EfficiencyCurve { factors })
    }

    pub fn flat() -> Self {
        EfficiencyCurve { factors: vec![1.0] }
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn factor(&self, streams: usize) -> f64 {
        if streams == 0 {
            return 1.0;
        }
        self.factors[(streams - 1).min(self.factors.len() - 1)]
    }
}

impl Default for EfficiencyCurve {
    fn default() -> Self {
        EfficiencyCurve {
            factors: vec![1.0, 1.0, 0.97, 0.78, 0.78],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualDevice {
    pub id: u32,
    pub max_seq_write_bw: f64,
    pub capacity: u64,
    pub efficiency: EfficiencyCurve,
    pub fabric_latency: f64,
}

impl VirtualDevice {
    pub fn new(id: u32) -> Self {
        VirtualDevice {
            id,
            max_seq_write_bw: DEFAULT_BANDWIDTH,
            capacity: DEFAULT_CAPACITY,
            efficiency: EfficiencyCurve::default(),
            fabric_latency: DEFAULT_FABRIC_LATENCY,
        }
    }

    pub fn with_capacity(mut self, capacity: u64) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_efficiency(mut self, curve: EfficiencyCurve) -> Self {
        self.efficiency = curve;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_seq_write_bw > 0.0 && self.max_seq_write_bw.is_finite()) {
            return Err(Error::invalid(format!("device {}: bandwidth must be positive", self.id)));
        }
        if self.capacity == 0 {
            return Err(Error::invalid(format!("device {}: capacity must be positive", self.id)));
        }
        if !(self.fabric_latency >= 0.0 && self.fabric_latency.is_finite()) {
            return Err(Error::invalid(format!("device {}: latency must be non-negative", self.id)));
        }
        Ok(())
    }
}

/// One contiguous piece of a striped request on a single member.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Extent {
    pub member: usize,
    pub offset: u64,
    pub length: u64,
}

/// RAID0 composition presenting one flat address space.
#[derive(Clone, Debug, PartialEq)]
pub struct ComposedDevice {
    pub members: Vec<VirtualDevice>,
    pub stripe_size: u64,
}

pub fn compose(devices: Vec<VirtualDevice>, stripe_size: u64) -> Result<ComposedDevice> {
    if devices.len() < 2 {
        return Err(Error::Composition("at least two members are required".into()));
    }
    if stripe_size == 0 {
        return Err(Error::Composition("stripe size must be positive".into()));
    }
    let cap = devices[0].capacity;
    if devices.iter().any(|d| d.capacity != cap) {
        return Err(Error::Composition("member capacities differ".into()));
    }
    if cap < stripe_size {
        return Err(Error::Composition("member capacity is below one stripe".into()));
    }
    Ok(ComposedDevice {
        members: devices,
        stripe_size,
    })
}

impl ComposedDevice {
    /// Whole stripes only; a partial trailing stripe on each member is unused.
    pub fn capacity(&self) -> u64 {
        let per_member = self.members[0].capacity / self.stripe_size * self.stripe_size;
        per_member * self.members.len() as u64
    }

    pub fn aggregate_bw(&self) -> f64 {
        self.members.iter().map(|d| d.max_seq_write_bw).sum()
    }

    /// Member index and member-local offset for a flat address.
    pub fn locate(&self, addr: u64) -> (usize, u64) {
        let m = self.members.len() as u64;
        let stripe = addr / self.stripe_size;
        let member = (stripe % m) as usize;
        let offset = (stripe / m) * self.stripe_size + addr % self.stripe_size;
        (member, offset)
    }

    /// Splits `[start, start+len)` into stripe-bounded extents in address order.
    pub fn extents(&self, start: u64, len: u64) -> Vec<Extent> {
        let mut out = Vec::new();
        let mut pos = start;
        let end = start + len;
        while pos < end {
            let within = pos % self.stripe_size;
            let take = (self.stripe_size - within).min(end - pos);
            let (member, offset) = self.locate(pos);
            out.push(Extent {
                member,
                offset,
                length: take,
            });
            pos += take;
        }
        out
    }

    /// Bytes landing on each member for `[start, start+len)`, in O(members).
    pub fn bytes_per_member(&self, start: u64, len: u64) -> Vec<u64> {
        let m = self.members.len() as u64;
        let s = self.stripe_size;
        // Bytes on member `j` within `[0, a)`.
        let prefix = |a: u64, j: u64| -> u64 {
            let full = a / s;
            let rem = a % s;
            let mut b = (full / m) * s;
            let extra = full % m;
            if j < extra {
                b += s;
            } else if j == extra {
                b += rem;
            }
            b
        };
        (0..m)
            .map(|j| prefix(start + len, j) - prefix(start, j))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn devs(n: u32) -> Vec<VirtualDevice> {
        (0..n).map(VirtualDevice::new).collect()
    }

    #[test]
    fn default_curve_is_valid() {
        let c = EfficiencyCurve::default();
        assert!(EfficiencyCurve::new(c.factors().to_vec()).is_ok());
        assert_eq!(c.factor(1), 1.0);
        assert_eq!(c.factor(2), 1.0);
        assert_eq!(c.factor(40), *c.factors().last().unwrap());
    }

    #[test]
    fn curve_validation() {
        assert!(EfficiencyCurve::new(vec![0.9]).is_err());
        assert!(EfficiencyCurve::new(vec![1.0, 0.8, 0.9]).is_err());
        assert!(EfficiencyCurve::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn aggregate_bandwidth() {
        assert_eq!(compose(devs(2), DEFAULT_STRIPE).unwrap().aggregate_bw(), 4e9);
        assert_eq!(compose(devs(3), DEFAULT_STRIPE).unwrap().aggregate_bw(), 6e9);
    }

    #[test]
    fn rejects_bad_compositions() {
        assert!(compose(devs(1), DEFAULT_STRIPE).is_err());
        let mut d = devs(2);
        d[1].capacity /= 2;
        assert!(matches!(compose(d, DEFAULT_STRIPE), Err(Error::Composition(_))));
    }

    #[test]
    fn striping_arithmetic() {
        let c = compose(devs(2), 128 << 10).unwrap();
        let ext = c.extents(0, 256 << 10);
        assert_eq!(
            ext,
            vec![
                Extent { member: 0, offset: 0, length: 128 << 10 },
                Extent { member: 1, offset: 0, length: 128 << 10 },
            ]
        );
        assert_eq!(c.locate(3 * (128 << 10) + 5), (1, (128 << 10) + 5));
        assert_eq!(c.bytes_per_member(0, 256 << 10), vec![128 << 10, 128 << 10]);
    }

    #[test]
    fn byte_counts_match_extents() {
        let c = compose(devs(3), 4096).unwrap();
        for (start, len) in [(0, 1), (100, 50_000), (4095, 2), (12288, 4096 * 7 + 3)] {
            let mut per = vec![0u64; 3];
            for e in c.extents(start, len) {
                per[e.member] += e.length;
            }
            assert_eq!(per, c.bytes_per_member(start, len));
        }
    }
}
