use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fabric::{
    Attachment, BandwidthTimeline, Fabric, IoCompletion, IoRequest, NamespaceId, Parent, PoolConfig,
    RequestId, StreamId,
};

use super::plan::{AllocationPlan, TargetSpec};
use super::workload::WorkloadModel;

/// Fabric-side parameters of a simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct FabricSetup {
    pub pool: PoolConfig,
    pub attachment: Attachment,
    pub stats: bool,
}

impl FabricSetup {
    pub fn new(pool: PoolConfig) -> Self {
        FabricSetup {
            pool,
            attachment: Attachment::Fabric,
            stats: false,
        }
    }

    pub fn with_attachment(mut self, attachment: Attachment) -> Self {
        self.attachment = attachment;
        self
    }

    pub fn with_stats(mut self) -> Self {
        self.stats = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceResult {
    pub instance: usize,
    pub host: usize,
    pub target: usize,
    pub launch_s: f64,
    /// Elapsed from the instance's own launch.
    pub completion_s: f64,
    pub written_bytes: u64,
    pub requests: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        assert!(!values.is_empty(), "summary of no values");
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Summary {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub strategy: String,
    pub seed: u64,
    pub instances: Vec<InstanceResult>,
    pub timelines: Vec<BandwidthTimeline>,
    pub summary: Summary,
    /// Largest |integrated served bytes - length| over all requests.
    pub max_conservation_error: f64,
    pub makespan_s: f64,
}

impl SimResult {
    pub fn completions(&self) -> Vec<f64> {
        self.instances.iter().map(|i| i.completion_s).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(INSTANCE_CSV_HEADER);
        for i in &self.instances {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{},{}",
                self.strategy, i.instance, i.host, i.target, i.launch_s, i.completion_s, i.written_bytes, i.requests
            )
            .unwrap();
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        format!(
            "strategy={}\nseed={}\ninstances={}\nmean_s={:.6}\nmin_s={:.6}\nq1_s={:.6}\nmedian_s={:.6}\nq3_s={:.6}\nmax_s={:.6}\nmakespan_s={:.6}\nmax_conservation_error_bytes={:.6}\n",
            self.strategy,
            self.seed,
            self.instances.len(),
            s.mean,
            s.min,
            s.q1,
            s.median,
            s.q3,
            s.max,
            self.makespan_s,
            self.max_conservation_error
        )
    }
}

pub const INSTANCE_CSV_HEADER: &str = "strategy,instance,host,target,launch_s,completion_s,written_bytes,requests\n";

#[derive(Clone, Copy, Debug)]
struct Timer {
    time: f64,
    instance: usize,
}

impl PartialEq for Timer {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timer {}

impl PartialOrd for Timer {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timer {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.instance.cmp(&other.instance))
    }
}

struct Segment {
    left: u64,
    piece: u64,
}

enum Phase {
    Waiting,
    Computing,
    Blocked { threshold: u64 },
    Done,
}

struct Instance {
    ns: NamespaceId,
    ns_size: u64,
    stream: Option<StreamId>,
    launch: f64,
    cursor: u64,
    /// `(pressure bytes, flush bytes)` per cycle.
    cycles: Vec<(u64, u64)>,
    next_cycle: usize,
    queue: VecDeque<Segment>,
    in_flight: bool,
    pending: u64,
    phase: Phase,
    finish: f64,
    rng: ChaCha8Rng,
    written: u64,
    requests: u64,
}

fn instance_rng(seed: u64, instance: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (instance as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Splits `extra` across cycles in proportion to their flush bytes, exactly.
fn spread_extra(flushes: &[u64], extra: u64) -> Vec<(u64, u64)> {
    let total: u128 = flushes.iter().map(|&f| f as u128).sum();
    let mut cum = 0u128;
    let mut given = 0u64;
    flushes
        .iter()
        .map(|&f| {
            cum += f as u128;
            let upto = (extra as u128 * cum / total) as u64;
            let e = upto - given;
            given = upto;
            (e, f)
        })
        .collect()
}

struct Sim<'a> {
    workload: &'a WorkloadModel,
    fabric: Fabric,
    instances: Vec<Instance>,
    timers: BinaryHeap<Reverse<Timer>>,
    owner: HashMap<RequestId, usize>,
    compute: f64,
    max_err: f64,
}

impl Sim<'_> {
    fn compute_time(&mut self, i: usize) -> f64 {
        let j = self.workload.jitter;
        let u: f64 = self.instances[i].rng.gen();
        self.compute * (1.0 + j * (2.0 * u - 1.0))
    }

    fn on_timer(&mut self, i: usize, t: f64) -> Result<()> {
        match self.instances[i].phase {
            Phase::Waiting => {
                let ns = self.instances[i].ns;
                self.instances[i].stream = Some(self.fabric.open_stream(ns)?);
                self.instances[i].phase = Phase::Computing;
                let c = self.compute_time(i);
                self.timers.push(Reverse(Timer { time: t + c, instance: i }));
            }
            Phase::Computing => {
                let inst = &mut self.instances[i];
                let (extra, flush) = inst.cycles[inst.next_cycle];
                inst.next_cycle += 1;
                if extra > 0 {
                    inst.queue.push_back(Segment {
                        left: extra,
                        piece: self.workload.pressure_request_bytes,
                    });
                }
                inst.queue.push_back(Segment {
                    left: flush,
                    piece: self.workload.chunk_bytes,
                });
                inst.pending += extra + flush;
                let threshold = if inst.next_cycle == inst.cycles.len() {
                    0
                } else {
                    ((extra + flush) as f64 * self.workload.writeback_fraction).floor() as u64
                };
                inst.phase = Phase::Blocked { threshold };
                self.issue(i, t)?;
                self.check_unblock(i, t)?;
            }
            Phase::Blocked { .. } | Phase::Done => unreachable!("timer in a non-timed phase"),
        }
        Ok(())
    }

    fn on_completion(&mut self, c: &IoCompletion) -> Result<()> {
        let i = self.owner.remove(&c.id).expect("request owner");
        self.max_err = self.max_err.max((c.served_bytes - c.length as f64).abs());
        let inst = &mut self.instances[i];
        inst.in_flight = false;
        inst.pending -= c.length;
        inst.written += c.length;
        let t = self.fabric.now().max(c.finish_time);
        self.issue(i, t)?;
        self.check_unblock(i, t)
    }

    fn check_unblock(&mut self, i: usize, t: f64) -> Result<()> {
        let inst = &mut self.instances[i];
        let Phase::Blocked { threshold } = inst.phase else {
            return Ok(());
        };
        if inst.pending > threshold {
            return Ok(());
        }
        if inst.next_cycle == inst.cycles.len() {
            inst.phase = Phase::Done;
            inst.finish = t;
            if let Some(s) = inst.stream.take() {
                self.fabric.close_stream(s)?;
            }
        } else {
            inst.phase = Phase::Computing;
            let c = self.compute_time(i);
            self.timers.push(Reverse(Timer { time: t + c, instance: i }));
        }
        Ok(())
    }

    fn issue(&mut self, i: usize, t: f64) -> Result<()> {
        let inst = &mut self.instances[i];
        if inst.in_flight {
            return Ok(());
        }
        let Some(seg) = inst.queue.front_mut() else {
            return Ok(());
        };
        let len = seg.piece.min(seg.left);
        if inst.cursor + len > inst.ns_size {
            return Err(Error::Simulation {
                instance: i,
                message: format!(
                    "namespace capacity exceeded: {} of {} bytes used, {len} more requested",
                    inst.cursor, inst.ns_size
                ),
            });
        }
        let mut req = IoRequest::write(inst.ns, inst.cursor, len, t).capped(self.workload.burst_bw);
        if let Some(s) = inst.stream {
            req = req.on_stream(s);
        }
        inst.cursor += len;
        inst.requests += 1;
        seg.left -= len;
        if seg.left == 0 {
            inst.queue.pop_front();
        }
        inst.in_flight = true;
        let id = self.fabric.submit(req)?;
        self.owner.insert(id, i);
        Ok(())
    }
}

/// Runs every instance of the plan to completion on a fresh fabric.
pub fn simulate(plan: &AllocationPlan, workload: &WorkloadModel, setup: &FabricSetup, seed: u64) -> Result<SimResult> {
    workload.validate()?;
    let mut fabric = Fabric::new(setup.pool.build_devices())?;
    if setup.stats {
        fabric.enable_stats(setup.pool.stats_bucket)?;
    }
    let mut slots: Vec<Vec<(NamespaceId, u64)>> = Vec::new();
    for (t, spec) in plan.targets.iter().enumerate() {
        let parent = match spec {
            TargetSpec::Device(d) => Parent::Device(*d),
            TargetSpec::Composition(members) => fabric.compose(members, setup.pool.stripe_size)?,
        };
        let n = plan.slots_per_target[t].max(1);
        let size = fabric.parent_capacity(parent)? / n as u64;
        let ids = fabric.partition_namespaces(parent, &vec![size; n], setup.attachment)?;
        slots.push(ids.into_iter().map(|id| (id, size)).collect());
    }
    let flushes = workload.cycle_bytes();
    let instances = plan
        .assignments
        .iter()
        .map(|a| {
            let co_located = plan.instances_on_host(a.host);
            let written = plan.hosts.written_bytes(co_located, workload);
            let (ns, ns_size) = slots[a.target][a.slot];
            let mut rng = instance_rng(seed, a.instance);
            let launch = rng.gen::<f64>() * workload.solo_cycle();
            Instance {
                ns,
                ns_size,
                stream: None,
                launch,
                cursor: 0,
                cycles: spread_extra(&flushes, written - workload.total_output_bytes),
                next_cycle: 0,
                queue: VecDeque::new(),
                in_flight: false,
                pending: 0,
                phase: Phase::Waiting,
                finish: f64::NAN,
                rng,
                written: 0,
                requests: 0,
            }
        })
        .collect::<Vec<_>>();
    let timers = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| Reverse(Timer { time: inst.launch, instance: i }))
        .collect();
    let mut sim = Sim {
        workload,
        fabric,
        instances,
        timers,
        owner: HashMap::new(),
        compute: workload.compute_interval(),
        max_err: 0.0,
    };
    loop {
        let tf = sim.fabric.next_event_time();
        let ti = sim.timers.peek().map(|Reverse(t)| t.time);
        match (tf, ti) {
            (None, None) => break,
            (Some(f), t) if t.is_none_or(|t| f <= t) => {
                for c in sim.fabric.advance_to(f) {
                    sim.on_completion(&c)?;
                }
            }
            (_, Some(t)) => {
                for c in sim.fabric.advance_to(t) {
                    sim.on_completion(&c)?;
                }
                let Reverse(timer) = sim.timers.pop().expect("peeked");
                sim.on_timer(timer.instance, timer.time)?;
            }
            (Some(_), None) => unreachable!(),
        }
    }
    let makespan = sim.fabric.now();
    let mut timelines = Vec::new();
    if setup.stats {
        for d in 0..sim.fabric.device_count() {
            timelines.push(sim.fabric.device_stats(d, 0.0, makespan)?);
        }
    }
    let results: Vec<InstanceResult> = sim
        .instances
        .iter()
        .zip(&plan.assignments)
        .map(|(inst, a)| InstanceResult {
            instance: a.instance,
            host: a.host,
            target: a.target,
            launch_s: inst.launch,
            completion_s: inst.finish - inst.launch,
            written_bytes: inst.written,
            requests: inst.requests,
        })
        .collect();
    let summary = Summary::of(&results.iter().map(|r| r.completion_s).collect::<Vec<_>>());
    Ok(SimResult {
        strategy: plan.strategy.to_string(),
        seed,
        instances: results,
        timelines,
        summary,
        max_conservation_error: sim.max_err,
        makespan_s: makespan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::plan::{plan, Strategy};
    use crate::orchestrator::workload::HostModel;

    fn small() -> WorkloadModel {
        WorkloadModel {
            total_output_bytes: 4_000_000_000,
            flush_bytes: 500_000_000,
            ..WorkloadModel::default()
        }
    }

    #[test]
    fn spread_is_exact() {
        let parts = spread_extra(&[4, 4, 2], 7);
        assert_eq!(parts.iter().map(|p| p.0).sum::<u64>(), 7);
        assert_eq!(spread_extra(&[5, 5], 0), vec![(0, 5), (0, 5)]);
    }

    #[test]
    fn solo_matches_closed_form() {
        let w = WorkloadModel {
            jitter: 0.0,
            chunk_bytes: 50_000_000,
            ..small()
        };
        let p = plan(Strategy::SingleShared, 1, &PoolConfig::with_devices(1), &HostModel::with_count(1)).unwrap();
        let setup = FabricSetup::new(PoolConfig::with_devices(1)).with_attachment(Attachment::Local);
        let r = simulate(&p, &w, &setup, 1).unwrap();
        // The last tenth of each flush drains under the next compute.
        let f = w.flush_bytes as f64;
        let expect = w.cycles() as f64 * w.compute_interval() + (w.cycles() - 1) as f64 * 0.9 * f / 2e9 + f / 2e9;
        assert!((r.instances[0].completion_s - expect).abs() < 1e-6, "{} vs {expect}", r.instances[0].completion_s);
        assert_eq!(r.instances[0].written_bytes, w.total_output_bytes);
        assert!(r.max_conservation_error <= 1.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let p = plan(Strategy::SingleShared, 3, &PoolConfig::with_devices(1), &HostModel::with_count(3)).unwrap();
        let setup = FabricSetup::new(PoolConfig::with_devices(1)).with_stats();
        let a = simulate(&p, &small(), &setup, 42).unwrap();
        let b = simulate(&p, &small(), &setup, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p, &small(), &setup, 43).unwrap();
        assert_ne!(a.completions(), c.completions());
    }

    #[test]
    fn capacity_exhaustion_names_instance() {
        let pool = PoolConfig {
            capacity: 5_000_000_000,
            devices: 1,
            ..PoolConfig::default()
        };
        let p = plan(Strategy::SingleShared, 2, &pool, &HostModel::with_count(2)).unwrap();
        match simulate(&p, &small(), &FabricSetup::new(pool), 0) {
            Err(Error::Simulation { instance, .. }) => assert!(instance < 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.mean, 3.0);
    }
}
