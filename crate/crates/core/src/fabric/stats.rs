use std::fmt::Write as _;

/// Served bytes accumulated into fixed-width time buckets.
#[derive(Clone, Debug)]
pub struct BucketSeries {
    bucket: f64,
    bytes: Vec<f64>,
}

impl BucketSeries {
    pub fn new(bucket: f64) -> Self {
        BucketSeries {
            bucket,
            bytes: Vec::new(),
        }
    }

    /// Adds `rate` bytes/s over `[t0, t1)`.
    pub fn add(&mut self, t0: f64, t1: f64, rate: f64) {
        if t1 <= t0 || rate == 0.0 {
            return;
        }
        let first = (t0 / self.bucket).floor() as usize;
        let last = (t1 / self.bucket).ceil() as usize;
        if self.bytes.len() < last {
            self.bytes.resize(last, 0.0);
        }
        for b in first..last {
            let lo = (b as f64 * self.bucket).max(t0);
            let hi = ((b + 1) as f64 * self.bucket).min(t1);
            if hi > lo {
                self.bytes[b] += rate * (hi - lo);
            }
        }
    }

    pub fn timeline(&self, device_id: u32, from: f64, to: f64) -> BandwidthTimeline {
        let first = (from / self.bucket).floor().max(0.0) as usize;
        let last = (to / self.bucket).ceil() as usize;
        let points = (first..last)
            .map(|b| {
                let bytes = self.bytes.get(b).copied().unwrap_or(0.0);
                (b as f64 * self.bucket, bytes / self.bucket)
            })
            .collect();
        BandwidthTimeline {
            device_id,
            bucket: self.bucket,
            points,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthTimeline {
    pub device_id: u32,
    pub bucket: f64,
    /// `(bucket_start_s, bytes_per_s)`.
    pub points: Vec<(f64, f64)>,
}

impl BandwidthTimeline {
    pub fn peak(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len() as f64
    }

    pub fn write_csv_rows(&self, out: &mut String) {
        for &(t, bw) in &self.points {
            let _ = writeln!(out, "{},{},{:.0}", (t * 1e6).round() as u64, self.device_id, bw);
        }
    }
}

pub const STATS_CSV_HEADER: &str = "bucket_start_us,device_id,bytes_per_s\n";

pub fn timelines_to_csv(timelines: &[BandwidthTimeline]) -> String {
    let mut out = String::from(STATS_CSV_HEADER);
    for t in timelines {
        t.write_csv_rows(&mut out);
    }
    out
}
