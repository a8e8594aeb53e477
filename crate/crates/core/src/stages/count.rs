use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::kmer::{kmer_codes, partition_of_code, Origin, ReadSet};
use crate::memext::{RunEntry, RunHandle, SpillStore};

use super::prune::PruneFilter;

/// Normal/tumoral counters keyed by canonical code, bounded by `capacity_limit`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    entries: HashMap<u64, (u32, u32)>,
    capacity_limit: Option<usize>,
}

impl FrequencyTable {
    pub fn new(capacity_limit: Option<usize>) -> Self {
        FrequencyTable {
            entries: HashMap::new(),
            capacity_limit,
        }
    }

    pub fn unbounded() -> Self {
        FrequencyTable::new(None)
    }

    pub fn from_entries(entries: impl IntoIterator<Item = RunEntry>) -> Self {
        let mut t = FrequencyTable::unbounded();
        for e in entries {
            let slot = t.entries.entry(e.code).or_default();
            slot.0 += e.normal;
            slot.1 += e.tumoral;
        }
        t
    }

    pub fn capacity_limit(&self) -> Option<usize> {
        self.capacity_limit
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.capacity_limit.is_some_and(|c| self.entries.len() >= c)
    }

    pub fn get(&self, code: u64) -> Option<(u32, u32)> {
        self.entries.get(&code).copied()
    }

    pub fn increment(&mut self, code: u64, origin: Origin) {
        let slot = match self.entries.entry(code) {
            Entry::Occupied(o) => o.into_mut(),
            Entry::Vacant(v) => v.insert((0, 0)),
        };
        match origin {
            Origin::Normal => slot.0 += 1,
            Origin::Tumoral => slot.1 += 1,
        }
    }

    pub fn sorted_entries(&self) -> Vec<RunEntry> {
        let mut out: Vec<RunEntry> = self
            .entries
            .iter()
            .map(|(&code, &(normal, tumoral))| RunEntry {
                code,
                normal,
                tumoral,
            })
            .collect();
        out.sort_unstable_by_key(|e| e.code);
        out
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Sorts the table into one run on the store, then clears it.
pub fn flush_table(store: &mut SpillStore, table: &mut FrequencyTable) -> Result<RunHandle> {
    let mut entries = table.sorted_entries();
    let handle = store.flush_entries(&mut entries)?;
    table.clear();
    Ok(handle)
}

/// Counts one partition of both inputs, spilling full tables as runs.
#[allow(clippy::too_many_arguments)]
pub fn count(
    normal: &ReadSet,
    tumoral: &ReadSet,
    k: u8,
    filter: Option<&PruneFilter>,
    partition: u32,
    partitions: u32,
    table: &mut FrequencyTable,
    store: &mut SpillStore,
) -> Result<Vec<RunHandle>> {
    if partitions == 0 || partition >= partitions {
        return Err(Error::invalid(format!("partition {partition} outside 0..{partitions}")));
    }
    if !table.is_empty() {
        return Err(Error::invalid("count requires an empty table"));
    }
    let mut runs = Vec::new();
    let mut failure = None;
    for read in normal.reads.iter().chain(&tumoral.reads) {
        kmer_codes(&read.bases, k, |code| {
            if failure.is_some()
                || partition_of_code(code, partitions) != partition
                || filter.is_some_and(|f| !f.contains(code))
            {
                return;
            }
            table.increment(code, read.origin);
            if table.is_full() {
                match flush_table(store, table) {
                    Ok(h) => runs.push(h),
                    Err(e) => failure = Some(e),
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
    }
    if !table.is_empty() {
        runs.push(flush_table(store, table)?);
    }
    Ok(runs)
}

/// K-way merge of sorted runs, summing counts per code.
pub fn merge_runs(handles: &[RunHandle], store: &mut SpillStore) -> Result<FrequencyTable> {
    Ok(FrequencyTable::from_entries(merge_runs_sorted(handles, store)?))
}

pub fn merge_runs_sorted(handles: &[RunHandle], store: &mut SpillStore) -> Result<Vec<RunEntry>> {
    let mut runs = Vec::with_capacity(handles.len());
    for h in handles {
        runs.push(store.read_run(h)?);
    }
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.first().map(|e| Reverse((e.code, i))))
        .collect();
    let mut pos = vec![0usize; runs.len()];
    let mut out: Vec<RunEntry> = Vec::new();
    while let Some(Reverse((code, i))) = heap.pop() {
        let e = runs[i][pos[i]];
        match out.last_mut() {
            Some(last) if last.code == code => {
                last.normal += e.normal;
                last.tumoral += e.tumoral;
            }
            _ => out.push(e),
        }
        pos[i] += 1;
        if let Some(next) = runs[i].get(pos[i]) {
            heap.push(Reverse((next.code, i)));
        }
    }
    Ok(out)
}
