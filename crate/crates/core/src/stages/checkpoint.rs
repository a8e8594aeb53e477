//! Stage checkpoint files: magic, version, stage tag, fingerprint, then
//! length-prefixed records and a trailing crc32.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::wire::{Reader, Writer};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SMCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageKind {
    Prune,
    Count,
    Filter,
    Merge,
    Group,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Prune => "prune",
            StageKind::Count => "count",
            StageKind::Filter => "filter",
            StageKind::Merge => "merge",
            StageKind::Group => "group",
        }
    }

    fn tag(self) -> u8 {
        self as u8 + 1
    }

    pub fn is_partitioned(self) -> bool {
        matches!(self, StageKind::Count | StageKind::Filter)
    }
}

#[derive(Clone, Debug)]
pub struct CheckpointDir {
    root: PathBuf,
}

impl CheckpointDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(CheckpointDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, stage: StageKind, partition: Option<u32>) -> PathBuf {
        match partition {
            Some(p) => self.root.join(format!("{}-p{p:04}.ckpt", stage.name())),
            None => self.root.join(format!("{}.ckpt", stage.name())),
        }
    }

    pub fn save(
        &self,
        stage: StageKind,
        partition: Option<u32>,
        fingerprint: u32,
        records: &[Vec<u8>],
    ) -> Result<()> {
        let path = self.path(stage, partition);
        let bytes = encode(stage, partition, fingerprint, records);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Records of a valid, current checkpoint; `None` if absent or stale.
    pub fn load(
        &self,
        stage: StageKind,
        partition: Option<u32>,
        fingerprint: u32,
    ) -> Option<Vec<Vec<u8>>> {
        let bytes = fs::read(self.path(stage, partition)).ok()?;
        decode(&bytes, stage, partition, fingerprint)
    }

    pub fn remove(&self, stage: StageKind, partition: Option<u32>) -> Result<()> {
        let path = self.path(stage, partition);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

pub fn encode(stage: StageKind, partition: Option<u32>, fingerprint: u32, records: &[Vec<u8>]) -> Vec<u8> {
    let mut w = Writer::default();
    for b in CHECKPOINT_MAGIC {
        w.u8(b);
    }
    w.u8(CHECKPOINT_VERSION);
    w.u8(stage.tag());
    w.u8(0);
    w.u8(0);
    w.u32(partition.unwrap_or(u32::MAX));
    w.u32(fingerprint);
    w.u32(records.len() as u32);
    for r in records {
        w.bytes(r);
    }
    let mut out = w.finish();
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8], stage: StageKind, partition: Option<u32>, fingerprint: u32) -> Option<Vec<Vec<u8>>> {
    let (body, crc) = bytes.split_at_checked(bytes.len().checked_sub(4)?)?;
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().ok()?) {
        return None;
    }
    let mut r = Reader::new(body);
    let magic = [r.u8().ok()?, r.u8().ok()?, r.u8().ok()?, r.u8().ok()?];
    if magic != CHECKPOINT_MAGIC || r.u8().ok()? != CHECKPOINT_VERSION || r.u8().ok()? != stage.tag() {
        return None;
    }
    r.u8().ok()?;
    r.u8().ok()?;
    if r.u32().ok()? != partition.unwrap_or(u32::MAX) || r.u32().ok()? != fingerprint {
        return None;
    }
    let n = r.u32().ok()?;
    let mut records = Vec::with_capacity(n as usize);
    for _ in 0..n {
        records.push(r.bytes().ok()?.to_vec());
    }
    r.expect_end().ok()?;
    Some(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_staleness() {
        let dir = tempfile::tempdir().unwrap();
        let ck = CheckpointDir::open(dir.path()).unwrap();
        let recs = vec![b"abc".to_vec(), vec![], vec![1, 2, 3, 4]];
        ck.save(StageKind::Count, Some(2), 77, &recs).unwrap();
        assert_eq!(ck.load(StageKind::Count, Some(2), 77), Some(recs));
        assert_eq!(ck.load(StageKind::Count, Some(2), 78), None);
        assert_eq!(ck.load(StageKind::Count, Some(1), 77), None);
        assert_eq!(ck.load(StageKind::Filter, Some(2), 77), None);
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = encode(StageKind::Group, None, 5, &[b"payload".to_vec()]);
        assert!(decode(&bytes, StageKind::Group, None, 5).is_some());
        bytes[22] ^= 1;
        assert!(decode(&bytes, StageKind::Group, None, 5).is_none());
        assert!(decode(&[1, 2], StageKind::Group, None, 5).is_none());
    }

    #[test]
    fn header_starts_with_magic() {
        let bytes = encode(StageKind::Prune, None, 0, &[]);
        assert_eq!(&bytes[0..4], b"SMCK");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
    }
}
