//! Discrete-event bandwidth arbitration over a pool of virtual devices.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::memext::SparsePages;
use crate::traceanalysis::IoKind;

use super::device::{compose, ComposedDevice, VirtualDevice};
use super::stats::{BandwidthTimeline, BucketSeries};

pub type RequestId = u64;

/// Residual bytes below which a request part counts as served.
const DONE_EPS: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NamespaceId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parent {
    Device(usize),
    Composition(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Attachment {
    Local,
    Fabric,
}

impl std::str::FromStr for Attachment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" | "das" => Ok(Attachment::Local),
            "fabric" | "nvmeof" | "remote" => Ok(Attachment::Fabric),
            other => Err(Error::invalid(format!("unknown attachment `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Namespace {
    pub id: NamespaceId,
    pub parent: Parent,
    pub offset: u64,
    pub size: u64,
    pub attachment: Attachment,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IoRequest {
    pub namespace: NamespaceId,
    pub kind: IoKind,
    pub start: u64,
    pub length: u64,
    pub issue_time: f64,
    pub stream: Option<StreamId>,
    /// Upper bound on the request's aggregate service rate, bytes/s.
    pub rate_cap: Option<f64>,
}

impl IoRequest {
    pub fn write(namespace: NamespaceId, start: u64, length: u64, issue_time: f64) -> Self {
        IoRequest {
            namespace,
            kind: IoKind::Write,
            start,
            length,
            issue_time,
            stream: None,
            rate_cap: None,
        }
    }

    pub fn read(namespace: NamespaceId, start: u64, length: u64, issue_time: f64) -> Self {
        IoRequest {
            kind: IoKind::Read,
            ..IoRequest::write(namespace, start, length, issue_time)
        }
    }

    pub fn on_stream(mut self, stream: StreamId) -> Self {
        self.stream = Some(stream);
        self
    }

    pub fn capped(mut self, rate: f64) -> Self {
        self.rate_cap = Some(rate);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IoCompletion {
    pub id: RequestId,
    pub namespace: NamespaceId,
    pub kind: IoKind,
    pub start: u64,
    pub length: u64,
    pub issue_time: f64,
    /// Issue time plus attachment latency.
    pub arrival_time: f64,
    pub finish_time: f64,
    /// Integral of the served rate over the request's lifetime.
    pub served_bytes: f64,
}

impl IoCompletion {
    pub fn served_bw(&self) -> f64 {
        self.length as f64 / (self.finish_time - self.issue_time)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum StreamKey {
    Named(u64),
    Anonymous(RequestId),
}

#[derive(Debug)]
struct ActivePart {
    req: RequestId,
    remaining: f64,
    cap: f64,
    rate: f64,
    stream: StreamKey,
}

#[derive(Debug)]
struct DeviceState {
    spec: VirtualDevice,
    active: Vec<ActivePart>,
    open_streams: Vec<(u64, u32)>,
    version: u64,
    last: f64,
    served_total: f64,
    stats: Option<BucketSeries>,
    /// Direct namespaces or composition membership claim the device.
    claimed_by: Option<Parent>,
}

impl DeviceState {
    fn stream_count(&self) -> usize {
        let mut keys: Vec<StreamKey> = self
            .open_streams
            .iter()
            .map(|&(s, _)| StreamKey::Named(s))
            .chain(self.active.iter().map(|p| p.stream))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }

    fn capacity_now(&self) -> f64 {
        self.spec.efficiency.factor(self.stream_count()) * self.spec.max_seq_write_bw
    }

    /// Max-min fair shares with per-part caps.
    fn allocate(&mut self) {
        let total = self.capacity_now();
        let mut order: Vec<usize> = (0..self.active.len()).collect();
        order.sort_by(|&a, &b| self.active[a].cap.total_cmp(&self.active[b].cap));
        let mut left = total;
        let mut n = order.len();
        for i in order {
            let share = left / n as f64;
            let r = self.active[i].cap.min(share);
            self.active[i].rate = r;
            left -= r;
            n -= 1;
        }
    }

    fn aggregate_rate(&self) -> f64 {
        self.active.iter().map(|p| p.rate).sum()
    }

    fn next_completion(&self) -> Option<f64> {
        self.active
            .iter()
            .map(|p| self.last + p.remaining.max(0.0) / p.rate)
            .min_by(f64::total_cmp)
    }
}

#[derive(Debug)]
struct Pending {
    req: IoRequest,
    arrival: f64,
    parts: Vec<(usize, f64)>,
    parts_left: usize,
    served: f64,
}

#[derive(Clone, Copy, Debug)]
enum EventKind {
    Check { device: usize, version: u64 },
    Arrival(RequestId),
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    rank: u8,
    key: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.rank.cmp(&other.rank))
            .then(self.key.cmp(&other.key))
    }
}

#[derive(Clone, Debug)]
struct Composition {
    layout: ComposedDevice,
    members: Vec<usize>,
}

#[derive(Clone, Debug)]
struct StreamInfo {
    devices: Vec<usize>,
    open: bool,
}

/// Device pool with namespaces, compositions and the arbitration engine.
pub struct Fabric {
    devices: Vec<DeviceState>,
    compositions: Vec<Composition>,
    namespaces: Vec<Namespace>,
    allocated: HashMap<Parent, u64>,
    streams: Vec<StreamInfo>,
    pending: HashMap<RequestId, Pending>,
    next_request: RequestId,
    heap: BinaryHeap<Reverse<Event>>,
    now: f64,
    stats_bucket: Option<f64>,
    data: Option<HashMap<Parent, SparsePages>>,
    finished: Vec<IoCompletion>,
}

impl Fabric {
    pub fn new(devices: Vec<VirtualDevice>) -> Result<Self> {
        for d in &devices {
            d.validate()?;
        }
        Ok(Fabric {
            devices: devices
                .into_iter()
                .map(|spec| DeviceState {
                    spec,
                    active: Vec::new(),
                    open_streams: Vec::new(),
                    version: 0,
                    last: 0.0,
                    served_total: 0.0,
                    stats: None,
                    claimed_by: None,
                })
                .collect(),
            compositions: Vec::new(),
            namespaces: Vec::new(),
            allocated: HashMap::new(),
            streams: Vec::new(),
            pending: HashMap::new(),
            next_request: 0,
            heap: BinaryHeap::new(),
            now: 0.0,
            stats_bucket: None,
            data: None,
            finished: Vec::new(),
        })
    }

    /// Records per-device served bytes in buckets of `bucket` seconds.
    pub fn enable_stats(&mut self, bucket: f64) -> Result<()> {
        if !(bucket > 0.0 && bucket.is_finite()) {
            return Err(Error::invalid("stats bucket must be positive"));
        }
        if self.now > 0.0 {
            return Err(Error::invalid("stats must be enabled before simulation starts"));
        }
        self.stats_bucket = Some(bucket);
        for d in &mut self.devices {
            d.stats = Some(BucketSeries::new(bucket));
        }
        Ok(())
    }

    /// Keeps written bytes so they can be read back.
    pub fn enable_data(&mut self) {
        self.data.get_or_insert_with(HashMap::new);
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn device(&self, idx: usize) -> &VirtualDevice {
        &self.devices[idx].spec
    }

    pub fn namespace(&self, id: NamespaceId) -> Result<&Namespace> {
        self.namespaces
            .get(id.0)
            .ok_or_else(|| Error::invalid(format!("unknown namespace {}", id.0)))
    }

    pub fn namespaces(&self) -> &[Namespace] {
        &self.namespaces
    }

    pub fn composition(&self, idx: usize) -> Option<&ComposedDevice> {
        self.compositions.get(idx).map(|c| &c.layout)
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    pub fn device_bytes_served(&self, idx: usize) -> f64 {
        self.devices[idx].served_total
    }

    /// Open streams plus in-flight anonymous requests on a device.
    pub fn device_stream_count(&self, idx: usize) -> usize {
        self.devices[idx].stream_count()
    }

    pub fn device_rate(&self, idx: usize) -> f64 {
        self.devices[idx].aggregate_rate()
    }

    pub fn compose(&mut self, members: &[usize], stripe_size: u64) -> Result<Parent> {
        let mut seen = members.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != members.len() {
            return Err(Error::Composition("duplicate member".into()));
        }
        for &m in members {
            let d = self
                .devices
                .get(m)
                .ok_or_else(|| Error::Composition(format!("unknown device {m}")))?;
            if d.claimed_by.is_some() {
                return Err(Error::Composition(format!("device {m} is already in use")));
            }
        }
        let layout = compose(
            members.iter().map(|&m| self.devices[m].spec.clone()).collect(),
            stripe_size,
        )?;
        let parent = Parent::Composition(self.compositions.len());
        for &m in members {
            self.devices[m].claimed_by = Some(parent);
        }
        self.compositions.push(Composition {
            layout,
            members: members.to_vec(),
        });
        Ok(parent)
    }

    pub fn parent_capacity(&self, parent: Parent) -> Result<u64> {
        match parent {
            Parent::Device(d) => self
                .devices
                .get(d)
                .map(|s| s.spec.capacity)
                .ok_or_else(|| Error::invalid(format!("unknown device {d}"))),
            Parent::Composition(c) => self
                .compositions
                .get(c)
                .map(|c| c.layout.capacity())
                .ok_or_else(|| Error::invalid(format!("unknown composition {c}"))),
        }
    }

    /// Carves consecutive disjoint namespaces from the parent's free space.
    pub fn partition_namespaces(
        &mut self,
        parent: Parent,
        sizes: &[u64],
        attachment: Attachment,
    ) -> Result<Vec<NamespaceId>> {
        let capacity = self.parent_capacity(parent)?;
        if let Parent::Device(d) = parent {
            if let Some(owner) = self.devices[d].claimed_by {
                if owner != parent {
                    return Err(Error::invalid(format!("device {d} is a composition member")));
                }
            }
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("namespace size must be positive"));
        }
        let used = self.allocated.get(&parent).copied().unwrap_or(0);
        let requested = sizes.iter().try_fold(0u64, |a, &s| a.checked_add(s)).unwrap_or(u64::MAX);
        let available = capacity - used;
        if requested > available {
            return Err(Error::Capacity {
                requested,
                available,
            });
        }
        if let Parent::Device(d) = parent {
            self.devices[d].claimed_by = Some(parent);
        }
        let mut offset = used;
        let mut ids = Vec::with_capacity(sizes.len());
        for &size in sizes {
            let id = NamespaceId(self.namespaces.len());
            self.namespaces.push(Namespace {
                id,
                parent,
                offset,
                size,
                attachment,
            });
            offset += size;
            ids.push(id);
        }
        self.allocated.insert(parent, offset);
        Ok(ids)
    }

    fn parent_devices(&self, parent: Parent) -> Vec<usize> {
        match parent {
            Parent::Device(d) => vec![d],
            Parent::Composition(c) => self.compositions[c].members.clone(),
        }
    }

    fn check_bounds(&self, ns: &Namespace, start: u64, length: u64) -> Result<()> {
        let end = start.saturating_add(length);
        if end > ns.size {
            return Err(Error::Bounds {
                start,
                end,
                size: ns.size,
            });
        }
        Ok(())
    }

    /// Parent-level address of a namespace-relative offset.
    pub fn translate(&self, ns: NamespaceId, offset: u64) -> Result<(Parent, u64)> {
        let n = *self.namespace(ns)?;
        self.check_bounds(&n, offset, 0)?;
        Ok((n.parent, n.offset + offset))
    }

    /// Physical (device, device offset) of a namespace-relative address.
    pub fn physical_address(&self, ns: NamespaceId, offset: u64) -> Result<(usize, u64)> {
        let (parent, addr) = self.translate(ns, offset)?;
        Ok(match parent {
            Parent::Device(d) => (d, addr),
            Parent::Composition(c) => {
                let comp = &self.compositions[c];
                let (m, off) = comp.layout.locate(addr);
                (comp.members[m], off)
            }
        })
    }

    pub fn open_stream(&mut self, ns: NamespaceId) -> Result<StreamId> {
        let parent = self.namespace(ns)?.parent;
        let devices = self.parent_devices(parent);
        let id = StreamId(self.streams.len() as u64);
        self.streams.push(StreamInfo {
            devices: devices.clone(),
            open: true,
        });
        for d in devices {
            self.sync_device(d, self.now);
            let dev = &mut self.devices[d];
            match dev.open_streams.iter_mut().find(|(s, _)| *s == id.0) {
                Some(e) => e.1 += 1,
                None => dev.open_streams.push((id.0, 1)),
            }
            self.reschedule(d);
        }
        Ok(id)
    }

    pub fn close_stream(&mut self, stream: StreamId) -> Result<()> {
        let info = self
            .streams
            .get_mut(stream.0 as usize)
            .ok_or_else(|| Error::invalid(format!("unknown stream {}", stream.0)))?;
        if !info.open {
            return Err(Error::invalid(format!("stream {} already closed", stream.0)));
        }
        info.open = false;
        let devices = info.devices.clone();
        for d in devices {
            self.sync_device(d, self.now);
            self.devices[d].open_streams.retain(|&(s, _)| s != stream.0);
            self.reschedule(d);
        }
        Ok(())
    }

    pub fn submit(&mut self, req: IoRequest) -> Result<RequestId> {
        let ns = *self.namespace(req.namespace)?;
        if req.length == 0 {
            return Err(Error::invalid("zero-length request"));
        }
        self.check_bounds(&ns, req.start, req.length)?;
        if !(req.issue_time >= self.now) {
            return Err(Error::invalid(format!(
                "request issued at {} before current time {}",
                req.issue_time, self.now
            )));
        }
        if let Some(cap) = req.rate_cap {
            if !(cap > 0.0) {
                return Err(Error::invalid("rate cap must be positive"));
            }
        }
        if let Some(s) = req.stream {
            if self.streams.get(s.0 as usize).is_none() {
                return Err(Error::invalid(format!("unknown stream {}", s.0)));
            }
        }
        let addr = ns.offset + req.start;
        let parts: Vec<(usize, f64)> = match ns.parent {
            Parent::Device(d) => vec![(d, req.length as f64)],
            Parent::Composition(c) => {
                let comp = &self.compositions[c];
                comp.layout
                    .bytes_per_member(addr, req.length)
                    .into_iter()
                    .zip(&comp.members)
                    .filter(|(b, _)| *b > 0)
                    .map(|(b, &d)| (d, b as f64))
                    .collect()
            }
        };
        let latency = match ns.attachment {
            Attachment::Local => 0.0,
            Attachment::Fabric => parts
                .iter()
                .map(|&(d, _)| self.devices[d].spec.fabric_latency)
                .fold(0.0, f64::max),
        };
        let id = self.next_request;
        self.next_request += 1;
        let arrival = req.issue_time + latency;
        self.pending.insert(
            id,
            Pending {
                req,
                arrival,
                parts_left: parts.len(),
                parts,
                served: 0.0,
            },
        );
        self.heap.push(Reverse(Event {
            time: arrival,
            rank: 1,
            key: id,
            kind: EventKind::Arrival(id),
        }));
        Ok(id)
    }

    /// Submits and runs the engine until that request finishes.
    pub fn submit_and_wait(&mut self, req: IoRequest) -> Result<IoCompletion> {
        let id = self.submit(req)?;
        Ok(self.run_until_complete(id))
    }

    pub fn write_data(&mut self, ns: NamespaceId, offset: u64, bytes: &[u8]) -> Result<()> {
        let n = *self.namespace(ns)?;
        self.check_bounds(&n, offset, bytes.len() as u64)?;
        if let Some(data) = self.data.as_mut() {
            data.entry(n.parent).or_default().write(n.offset + offset, bytes);
        }
        Ok(())
    }

    pub fn read_data(&self, ns: NamespaceId, offset: u64, len: u64) -> Result<Vec<u8>> {
        let n = *self.namespace(ns)?;
        self.check_bounds(&n, offset, len)?;
        let data = self
            .data
            .as_ref()
            .ok_or_else(|| Error::invalid("data backing is not enabled"))?;
        Ok(data
            .get(&n.parent)
            .map(|p| p.read(n.offset + offset, len))
            .unwrap_or_else(|| vec![0; len as usize]))
    }

    pub fn next_event_time(&mut self) -> Option<f64> {
        while let Some(Reverse(ev)) = self.heap.peek() {
            if let EventKind::Check { device, version } = ev.kind {
                if self.devices[device].version != version {
                    self.heap.pop();
                    continue;
                }
            }
            return Some(ev.time);
        }
        None
    }

    /// Processes every event at or before `t`, then moves the clock to `t`.
    pub fn advance_to(&mut self, t: f64) -> Vec<IoCompletion> {
        let mut done = std::mem::take(&mut self.finished);
        while let Some(time) = self.next_event_time() {
            if time > t {
                break;
            }
            let Reverse(ev) = self.heap.pop().expect("peeked");
            self.now = self.now.max(ev.time);
            self.handle(ev, &mut done);
        }
        if t > self.now {
            self.now = t;
        }
        done
    }

    pub fn run_until_idle(&mut self) -> Vec<IoCompletion> {
        let mut done = std::mem::take(&mut self.finished);
        while self.next_event_time().is_some() {
            let Reverse(ev) = self.heap.pop().expect("peeked");
            self.now = self.now.max(ev.time);
            self.handle(ev, &mut done);
        }
        done
    }

    /// Runs until `id` completes; other completions are kept for the next drain.
    pub fn run_until_complete(&mut self, id: RequestId) -> IoCompletion {
        if let Some(pos) = self.finished.iter().position(|c| c.id == id) {
            return self.finished.remove(pos);
        }
        let mut done = Vec::new();
        loop {
            assert!(self.next_event_time().is_some(), "request {id} is not in flight");
            let Reverse(ev) = self.heap.pop().expect("peeked");
            self.now = self.now.max(ev.time);
            self.handle(ev, &mut done);
            if let Some(pos) = done.iter().position(|c| c.id == id) {
                let c = done.remove(pos);
                self.finished.extend(done);
                return c;
            }
        }
    }

    pub fn drain_completions(&mut self) -> Vec<IoCompletion> {
        std::mem::take(&mut self.finished)
    }

    fn handle(&mut self, ev: Event, done: &mut Vec<IoCompletion>) {
        match ev.kind {
            EventKind::Arrival(id) => {
                let (parts, stream, cap, length) = {
                    let p = &self.pending[&id];
                    (p.parts.clone(), p.req.stream, p.req.rate_cap, p.req.length as f64)
                };
                let key = match stream {
                    Some(s) => StreamKey::Named(s.0),
                    None => StreamKey::Anonymous(id),
                };
                for (d, bytes) in parts {
                    self.sync_device(d, ev.time);
                    self.devices[d].active.push(ActivePart {
                        req: id,
                        remaining: bytes,
                        cap: cap.map_or(f64::INFINITY, |c| c * bytes / length),
                        rate: 0.0,
                        stream: key,
                    });
                    self.reschedule(d);
                }
            }
            EventKind::Check { device, version } => {
                if self.devices[device].version != version {
                    return;
                }
                self.sync_device(device, ev.time);
                let dev = &mut self.devices[device];
                let last = dev.last;
                let mut finished_parts = Vec::new();
                dev.active.retain(|p| {
                    let done = p.remaining <= DONE_EPS || last + p.remaining / p.rate <= last;
                    if done {
                        finished_parts.push(p.req);
                    }
                    !done
                });
                for req in finished_parts {
                    let p = self.pending.get_mut(&req).expect("pending part");
                    p.parts_left -= 1;
                    if p.parts_left == 0 {
                        let p = self.pending.remove(&req).expect("pending");
                        done.push(IoCompletion {
                            id: req,
                            namespace: p.req.namespace,
                            kind: p.req.kind,
                            start: p.req.start,
                            length: p.req.length,
                            issue_time: p.req.issue_time,
                            arrival_time: p.arrival,
                            finish_time: ev.time,
                            served_bytes: p.served,
                        });
                    }
                }
                self.reschedule(device);
            }
        }
    }

    /// Applies constant rates from the device's last update up to `t`.
    fn sync_device(&mut self, d: usize, t: f64) {
        let dev = &mut self.devices[d];
        let dt = t - dev.last;
        if dt <= 0.0 {
            return;
        }
        if !dev.active.is_empty() {
            let mut total = 0.0;
            for p in &mut dev.active {
                let s = p.rate * dt;
                p.remaining -= s;
                total += s;
                if let Some(req) = self.pending.get_mut(&p.req) {
                    req.served += s;
                }
            }
            dev.served_total += total;
            if let Some(stats) = dev.stats.as_mut() {
                stats.add(dev.last, t, total / dt);
            }
        }
        dev.last = t;
    }

    fn reschedule(&mut self, d: usize) {
        let dev = &mut self.devices[d];
        dev.version += 1;
        dev.allocate();
        if let Some(t) = dev.next_completion() {
            self.heap.push(Reverse(Event {
                time: t,
                rank: 0,
                key: d as u64,
                kind: EventKind::Check {
                    device: d,
                    version: dev.version,
                },
            }));
        }
    }

    /// Served-bandwidth timeline for a device over `[from, to)`.
    pub fn device_stats(&mut self, device: usize, from: f64, to: f64) -> Result<BandwidthTimeline> {
        if device >= self.devices.len() {
            return Err(Error::invalid(format!("unknown device {device}")));
        }
        let now = self.now;
        self.sync_device(device, now);
        let dev = &self.devices[device];
        let series = dev
            .stats
            .as_ref()
            .ok_or_else(|| Error::invalid("stats were not enabled"))?;
        Ok(series.timeline(dev.spec.id, from, to))
    }
}
