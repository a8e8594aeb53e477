//! Memory-extension spill store: sorted count runs and opaque blobs appended
//! to a block target in fixed-size sequential requests.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::traceanalysis::{IoKind, IoRecord, IoTrace};

pub const DEFAULT_CHUNK_SIZE: u64 = 8 << 20;
pub const RUN_MAGIC: [u8; 4] = *b"KRUN";
pub const RUN_VERSION: u8 = 1;
pub const RUN_HEADER_LEN: usize = 32;
pub const RUN_RECORD_LEN: usize = 16;

/// Byte-addressable storage behind a spill store.
pub trait BlockTarget {
    fn capacity(&self) -> u64;
    /// Current simulated time in seconds; requests are issued at this instant.
    fn now(&self) -> f64;
    fn write_at(&mut self, offset: u64, data: &[u8]) -> Result<()>;
    fn read_at(&mut self, offset: u64, len: u64) -> Result<Vec<u8>>;
}

const PAGE: u64 = 1 << 20;

/// Sparse page store used as backing data by in-memory and simulated targets.
#[derive(Clone, Debug, Default)]
pub struct SparsePages {
    pages: HashMap<u64, Box<[u8]>>,
}

impl SparsePages {
    pub fn write(&mut self, offset: u64, data: &[u8]) {
        let mut pos = 0usize;
        while pos < data.len() {
            let addr = offset + pos as u64;
            let (page, within) = (addr / PAGE, (addr % PAGE) as usize);
            let take = (PAGE as usize - within).min(data.len() - pos);
            let buf = self
                .pages
                .entry(page)
                .or_insert_with(|| vec![0u8; PAGE as usize].into_boxed_slice());
            buf[within..within + take].copy_from_slice(&data[pos..pos + take]);
            pos += take;
        }
    }

    pub fn read(&self, offset: u64, len: u64) -> Vec<u8> {
        let mut out = vec![0u8; len as usize];
        let mut pos = 0usize;
        while pos < out.len() {
            let addr = offset + pos as u64;
            let (page, within) = (addr / PAGE, (addr % PAGE) as usize);
            let take = (PAGE as usize - within).min(out.len() - pos);
            if let Some(buf) = self.pages.get(&page) {
                out[pos..pos + take].copy_from_slice(&buf[within..within + take]);
            }
            pos += take;
        }
        out
    }
}

/// Plain in-memory target with a nominal bandwidth that drives its clock.
#[derive(Clone, Debug)]
pub struct MemoryTarget {
    capacity: u64,
    bandwidth: f64,
    clock: f64,
    data: SparsePages,
}

impl MemoryTarget {
    pub fn new(capacity: u64) -> Self {
        MemoryTarget::with_bandwidth(capacity, 2e9)
    }

    pub fn with_bandwidth(capacity: u64, bandwidth: f64) -> Self {
        MemoryTarget {
            capacity,
            bandwidth,
            clock: 0.0,
            data: SparsePages::default(),
        }
    }

    fn check(&self, offset: u64, len: u64) -> Result<()> {
        let end = offset.saturating_add(len);
        if end > self.capacity {
            return Err(Error::Bounds {
                start: offset,
                end,
                size: self.capacity,
            });
        }
        Ok(())
    }

    /// Overwrites bytes without advancing the clock, for fault injection.
    pub fn poke(&mut self, offset: u64, data: &[u8]) {
        self.data.write(offset, data);
    }
}

impl BlockTarget for MemoryTarget {
    fn capacity(&self) -> u64 {
        self.capacity
    }

    fn now(&self) -> f64 {
        self.clock
    }

    fn write_at(&mut self, offset: u64, data: &[u8]) -> Result<()> {
        self.check(offset, data.len() as u64)?;
        self.data.write(offset, data);
        self.clock += data.len() as f64 / self.bandwidth;
        Ok(())
    }

    fn read_at(&mut self, offset: u64, len: u64) -> Result<Vec<u8>> {
        self.check(offset, len)?;
        self.clock += len as f64 / self.bandwidth;
        Ok(self.data.read(offset, len))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunEntry {
    pub code: u64,
    pub normal: u32,
    pub tumoral: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RunHandle {
    pub start_address: u64,
    pub length: u64,
    pub entry_count: u64,
    pub checksum: u32,
}

impl RunHandle {
    pub fn end(&self) -> u64 {
        self.start_address + self.length
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlobHandle {
    pub start_address: u64,
    pub length: u64,
    pub checksum: u32,
}

/// Serializes sorted entries into the bit-exact run format.
pub fn encode_run(entries: &[RunEntry]) -> Vec<u8> {
    let payload_len = entries.len() * RUN_RECORD_LEN;
    let mut buf = Vec::with_capacity(RUN_HEADER_LEN + payload_len);
    buf.extend_from_slice(&RUN_MAGIC);
    buf.push(RUN_VERSION);
    buf.extend_from_slice(&[0; 3]);
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(payload_len as u64).to_le_bytes());
    buf.extend_from_slice(&[0; 8]);
    for e in entries {
        buf.extend_from_slice(&e.code.to_le_bytes());
        buf.extend_from_slice(&e.normal.to_le_bytes());
        buf.extend_from_slice(&e.tumoral.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf[RUN_HEADER_LEN..]);
    buf[24..28].copy_from_slice(&crc.to_le_bytes());
    buf
}

/// Parses and verifies a run image, returning entries and the stored checksum.
pub fn decode_run(bytes: &[u8], start: u64) -> Result<(Vec<RunEntry>, u32)> {
    let corrupt = |reason: &str| Error::Corruption {
        start,
        reason: reason.to_string(),
    };
    if bytes.len() < RUN_HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    if bytes[0..4] != RUN_MAGIC {
        return Err(corrupt("bad magic"));
    }
    if bytes[4] != RUN_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let le64 = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let entry_count = le64(8);
    let payload_len = le64(16);
    let checksum = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
    if payload_len != (bytes.len() - RUN_HEADER_LEN) as u64
        || entry_count.checked_mul(RUN_RECORD_LEN as u64) != Some(payload_len)
    {
        return Err(corrupt("length mismatch"));
    }
    let payload = &bytes[RUN_HEADER_LEN..];
    if crc32fast::hash(payload) != checksum {
        return Err(corrupt("checksum mismatch"));
    }
    let entries: Vec<RunEntry> = payload
        .chunks_exact(RUN_RECORD_LEN)
        .map(|r| RunEntry {
            code: u64::from_le_bytes(r[0..8].try_into().unwrap()),
            normal: u32::from_le_bytes(r[8..12].try_into().unwrap()),
            tumoral: u32::from_le_bytes(r[12..16].try_into().unwrap()),
        })
        .collect();
    if entries.windows(2).any(|w| w[0].code >= w[1].code) {
        return Err(corrupt("entries not strictly sorted"));
    }
    Ok((entries, checksum))
}

pub struct SpillStore {
    target: Box<dyn BlockTarget>,
    chunk_size: u64,
    append_cursor: u64,
    runs: Vec<RunHandle>,
    blobs: Vec<BlobHandle>,
    trace: Option<IoTrace>,
}

impl SpillStore {
    pub fn new(target: Box<dyn BlockTarget>, chunk_size: u64, tracing: bool) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::invalid("chunk_size must be positive"));
        }
        Ok(SpillStore {
            target,
            chunk_size,
            append_cursor: 0,
            runs: Vec::new(),
            blobs: Vec::new(),
            trace: tracing.then(IoTrace::new),
        })
    }

    pub fn in_memory(capacity: u64) -> Self {
        SpillStore::new(Box::new(MemoryTarget::new(capacity)), DEFAULT_CHUNK_SIZE, true)
            .expect("default chunk size is valid")
    }

    pub fn chunk_size(&self) -> u64 {
        self.chunk_size
    }

    pub fn append_cursor(&self) -> u64 {
        self.append_cursor
    }

    pub fn runs(&self) -> &[RunHandle] {
        &self.runs
    }

    pub fn blobs(&self) -> &[BlobHandle] {
        &self.blobs
    }

    pub fn target(&self) -> &dyn BlockTarget {
        self.target.as_ref()
    }

    pub fn target_mut(&mut self) -> &mut dyn BlockTarget {
        self.target.as_mut()
    }

    pub fn into_target(self) -> Box<dyn BlockTarget> {
        self.target
    }

    pub fn bytes_written(&self) -> u64 {
        self.append_cursor
    }

    /// Sorted run for the given entries; they need not be sorted on input.
    pub fn flush_entries(&mut self, entries: &mut [RunEntry]) -> Result<RunHandle> {
        if entries.is_empty() {
            return Err(Error::invalid("cannot flush an empty table"));
        }
        entries.sort_unstable_by_key(|e| e.code);
        if entries.windows(2).any(|w| w[0].code == w[1].code) {
            return Err(Error::invalid("duplicate k-mer codes in flushed table"));
        }
        let image = encode_run(entries);
        let start = self.append(&image)?;
        let handle = RunHandle {
            start_address: start,
            length: image.len() as u64,
            entry_count: entries.len() as u64,
            checksum: u32::from_le_bytes(image[24..28].try_into().unwrap()),
        };
        self.runs.push(handle);
        Ok(handle)
    }

    pub fn read_run(&mut self, handle: &RunHandle) -> Result<Vec<RunEntry>> {
        let known = *self
            .runs
            .iter()
            .find(|r| r.start_address == handle.start_address)
            .ok_or(Error::UnknownRun(handle.start_address))?;
        if known != *handle {
            return Err(Error::Corruption {
                start: handle.start_address,
                reason: "handle does not match run directory".into(),
            });
        }
        let bytes = self.read_range(handle.start_address, handle.length)?;
        let (entries, checksum) = decode_run(&bytes, handle.start_address)?;
        if checksum != handle.checksum || entries.len() as u64 != handle.entry_count {
            return Err(Error::Corruption {
                start: handle.start_address,
                reason: "header disagrees with handle".into(),
            });
        }
        Ok(entries)
    }

    pub fn write_blob(&mut self, data: &[u8]) -> Result<BlobHandle> {
        if data.is_empty() {
            return Err(Error::invalid("cannot write an empty blob"));
        }
        let start = self.append(data)?;
        let handle = BlobHandle {
            start_address: start,
            length: data.len() as u64,
            checksum: crc32fast::hash(data),
        };
        self.blobs.push(handle);
        Ok(handle)
    }

    pub fn read_blob(&mut self, handle: &BlobHandle) -> Result<Vec<u8>> {
        if !self.blobs.contains(handle) {
            return Err(Error::UnknownRun(handle.start_address));
        }
        let bytes = self.read_range(handle.start_address, handle.length)?;
        if crc32fast::hash(&bytes) != handle.checksum {
            return Err(Error::Corruption {
                start: handle.start_address,
                reason: "checksum mismatch".into(),
            });
        }
        Ok(bytes)
    }

    pub fn io_trace(&self) -> IoTrace {
        self.trace.clone().unwrap_or_default()
    }

    pub fn tracing(&self) -> bool {
        self.trace.is_some()
    }

    fn append(&mut self, data: &[u8]) -> Result<u64> {
        let len = data.len() as u64;
        let capacity = self.target.capacity();
        let available = capacity.saturating_sub(self.append_cursor);
        if len > available {
            return Err(Error::Capacity {
                requested: len,
                available,
            });
        }
        let start = self.append_cursor;
        for (i, chunk) in data.chunks(self.chunk_size as usize).enumerate() {
            let offset = start + i as u64 * self.chunk_size;
            self.record(IoKind::Write, offset, chunk.len() as u64);
            self.target.write_at(offset, chunk)?;
        }
        self.append_cursor += len;
        Ok(start)
    }

    fn read_range(&mut self, start: u64, len: u64) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(len as usize);
        let mut pos = 0;
        while pos < len {
            let take = self.chunk_size.min(len - pos);
            self.record(IoKind::Read, start + pos, take);
            out.extend_from_slice(&self.target.read_at(start + pos, take)?);
            pos += take;
        }
        Ok(out)
    }

    fn record(&mut self, kind: IoKind, start: u64, length: u64) {
        let now = self.target.now();
        if let Some(trace) = self.trace.as_mut() {
            let time_us = (now * 1e6).round() as u64;
            let time_us = trace.records.last().map_or(time_us, |r| r.time_us.max(time_us));
            trace.push(IoRecord {
                time_us,
                kind,
                start,
                length,
            });
        }
    }
}
