//! Sequential vs random classification of block write traces.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const DEFAULT_OPEN_STREAM_LIMIT: usize = 64;
pub const SECTOR_BYTES: u64 = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IoKind {
    Read,
    Write,
}

impl IoKind {
    pub fn code(self) -> char {
        match self {
            IoKind::Read => 'R',
            IoKind::Write => 'W',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IoRecord {
    pub time_us: u64,
    pub kind: IoKind,
    pub start: u64,
    pub length: u64,
}

impl IoRecord {
    pub fn end(&self) -> u64 {
        self.start + self.length
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IoTrace {
    pub records: Vec<IoRecord>,
}

impl IoTrace {
    pub fn new() -> Self {
        IoTrace::default()
    }

    pub fn push(&mut self, record: IoRecord) {
        debug_assert!(self
            .records
            .last()
            .is_none_or(|r| r.time_us <= record.time_us));
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn writes(&self) -> impl Iterator<Item = &IoRecord> {
        self.records.iter().filter(|r| r.kind == IoKind::Write)
    }

    /// `time_us,kind,start,length` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_us,kind,start,length\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.time_us, r.kind.code(), r.start, r.length);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut trace = IoTrace::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("time")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(idx, "expected 4 fields"));
            }
            let kind = match fields[1] {
                "W" | "w" | "write" => IoKind::Write,
                "R" | "r" | "read" => IoKind::Read,
                other => return Err(parse_err(idx, format!("unknown kind `{other}`"))),
            };
            trace.push_checked(
                idx,
                IoRecord {
                    time_us: parse_u64(idx, fields[0])?,
                    kind,
                    start: parse_u64(idx, fields[2])?,
                    length: parse_u64(idx, fields[3])?,
                },
            )?;
        }
        Ok(trace)
    }

    /// blktrace-like `time,action,start_sector,sectors`, time in seconds.
    pub fn from_blktrace(text: &str) -> Result<Self> {
        let mut trace = IoTrace::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("time")) {
                continue;
            }
            let fields: Vec<&str> = if line.contains(',') {
                line.split(',').map(str::trim).collect()
            } else {
                line.split_whitespace().collect()
            };
            if fields.len() != 4 {
                return Err(parse_err(idx, "expected 4 fields"));
            }
            let secs: f64 = fields[0]
                .parse()
                .map_err(|_| parse_err(idx, format!("bad time `{}`", fields[0])))?;
            if !secs.is_finite() || secs < 0.0 {
                return Err(parse_err(idx, "negative or non-finite time"));
            }
            let kind = if fields[1].contains(['W', 'w']) {
                IoKind::Write
            } else if fields[1].contains(['R', 'r']) {
                IoKind::Read
            } else {
                return Err(parse_err(idx, format!("unknown action `{}`", fields[1])));
            };
            trace.push_checked(
                idx,
                IoRecord {
                    time_us: (secs * 1e6).round() as u64,
                    kind,
                    start: parse_u64(idx, fields[2])? * SECTOR_BYTES,
                    length: parse_u64(idx, fields[3])? * SECTOR_BYTES,
                },
            )?;
        }
        Ok(trace)
    }

    /// Parses either format, picking blktrace when the kind column is not a bare R/W.
    pub fn parse_any(text: &str) -> Result<Self> {
        let first = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'));
        match first {
            Some(l) if l.starts_with("time_us") => IoTrace::from_csv(text),
            Some(l) if l.starts_with("time") => IoTrace::from_blktrace(text),
            _ => IoTrace::from_csv(text).or_else(|_| IoTrace::from_blktrace(text)),
        }
    }

    fn push_checked(&mut self, idx: usize, record: IoRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.time_us < last.time_us {
                return Err(parse_err(idx, "times must be non-decreasing"));
            }
        }
        self.records.push(record);
        Ok(())
    }
}

fn parse_err(idx: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: idx + 1,
        message: msg.into(),
    }
}

fn parse_u64(idx: usize, s: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| parse_err(idx, format!("bad integer `{s}`")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequentialityReport {
    pub total_writes: u64,
    pub naive_sequential: u64,
    pub append_sequential: u64,
    pub sequential_naive: f64,
    pub sequential_append_aware: f64,
    pub open_stream_limit: usize,
}

impl SequentialityReport {
    pub fn to_text(&self) -> String {
        format!(
            "total_writes={}\nsequential_naive={:.6}\nsequential_append_aware={:.6}\nopen_stream_limit={}\n",
            self.total_writes,
            self.sequential_naive,
            self.sequential_append_aware,
            self.open_stream_limit
        )
    }
}

/// Single pass over writes; reads are ignored.
pub fn classify(trace: &IoTrace, open_stream_limit: usize) -> SequentialityReport {
    let limit = open_stream_limit.max(1);
    // Most recently used tail at the back.
    let mut tails: VecDeque<u64> = VecDeque::with_capacity(limit + 1);
    let mut prev_end: Option<u64> = None;
    let (mut total, mut naive, mut aware) = (0u64, 0u64, 0u64);
    for w in trace.writes() {
        total += 1;
        if prev_end == Some(w.start) {
            naive += 1;
        }
        prev_end = Some(w.end());
        if let Some(pos) = tails.iter().rposition(|&t| t == w.start) {
            aware += 1;
            tails.remove(pos);
        } else if tails.len() == limit {
            tails.pop_front();
        }
        tails.push_back(w.end());
    }
    let frac = |x: u64| if total == 0 { 0.0 } else { x as f64 / total as f64 };
    SequentialityReport {
        total_writes: total,
        naive_sequential: naive,
        append_sequential: aware,
        sequential_naive: frac(naive),
        sequential_append_aware: frac(aware),
        open_stream_limit: limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(time_us: u64, start: u64, length: u64) -> IoRecord {
        IoRecord {
            time_us,
            kind: IoKind::Write,
            start,
            length,
        }
    }

    #[test]
    fn empty_trace_reports_zero() {
        let r = classify(&IoTrace::new(), 64);
        assert_eq!(r.total_writes, 0);
        assert_eq!(r.sequential_naive, 0.0);
        assert_eq!(r.sequential_append_aware, 0.0);
    }

    #[test]
    fn single_stream_is_sequential() {
        let mut t = IoTrace::new();
        for i in 0..10 {
            t.push(w(i, i * 4096, 4096));
        }
        let r = classify(&t, 64);
        // The first write of a stream has nothing to follow.
        assert_eq!(r.naive_sequential, 9);
        assert_eq!(r.append_sequential, 9);
    }

    #[test]
    fn interleaved_streams() {
        let mut t = IoTrace::new();
        let b_base = 1 << 30;
        for i in 0..50u64 {
            t.push(w(2 * i, i * 4096, 4096));
            t.push(w(2 * i + 1, b_base + i * 4096, 4096));
        }
        let r = classify(&t, 64);
        assert_eq!(r.naive_sequential, 0);
        assert_eq!(r.append_sequential, 98);
    }

    #[test]
    fn lru_eviction_loses_old_tails() {
        let mut t = IoTrace::new();
        for s in 0..3u64 {
            t.push(w(s, s << 20, 10));
        }
        for s in 0..3u64 {
            t.push(w(10 + s, (s << 20) + 10, 10));
        }
        assert_eq!(classify(&t, 2).append_sequential, 0);
        assert_eq!(classify(&t, 3).append_sequential, 3);
    }

    #[test]
    fn reads_are_ignored() {
        let mut t = IoTrace::new();
        t.push(w(0, 0, 10));
        t.push(IoRecord {
            time_us: 1,
            kind: IoKind::Read,
            start: 500,
            length: 10,
        });
        t.push(w(2, 10, 10));
        let r = classify(&t, 64);
        assert_eq!(r.total_writes, 2);
        assert_eq!(r.naive_sequential, 1);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = IoTrace::new();
        t.push(w(0, 0, 8));
        t.push(IoRecord {
            time_us: 5,
            kind: IoKind::Read,
            start: 0,
            length: 8,
        });
        let back = IoTrace::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn parses_blktrace_sectors() {
        let t = IoTrace::from_blktrace("time,action,start_sector,sectors\n0.5,W,8,16\n0.75,WS,24,8\n").unwrap();
        assert_eq!(t.records[0], w(500_000, 4096, 8192));
        assert_eq!(t.records[1].start, 24 * 512);
        assert_eq!(classify(&t, 64).append_sequential, 1);
    }

    #[test]
    fn rejects_decreasing_time() {
        assert!(IoTrace::from_csv("5,W,0,1\n4,W,1,1\n").is_err());
    }
}
