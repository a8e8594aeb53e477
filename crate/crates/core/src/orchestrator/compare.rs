use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::plan::{plan, Strategy};
use super::simulate::{simulate, FabricSetup, SimResult, Summary};
use super::workload::{HostModel, WorkloadModel};

pub const DEFAULT_REPEATS: usize = 6;
/// Relative band inside which the dedicated instance counts as not improved.
pub const DEDICATED_TOLERANCE: f64 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyRuns {
    pub strategy: Strategy,
    pub runs: Vec<SimResult>,
}

impl StrategyRuns {
    /// Per-seed mean completion across instances.
    pub fn run_means(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.summary.mean).collect()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.run_means())
    }

    pub fn instance_mean(&self, instance: usize) -> f64 {
        mean(&self.runs.iter().map(|r| r.instances[instance].completion_s).collect::<Vec<_>>())
    }

    /// Summary over every instance completion of every seed.
    pub fn summary(&self) -> Summary {
        let all: Vec<f64> = self.runs.iter().flat_map(|r| r.completions()).collect();
        Summary::of(&all)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub instances: usize,
    pub seeds: Vec<u64>,
    pub strategies: Vec<StrategyRuns>,
    pub verdicts: Vec<Verdict>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl ComparisonReport {
    pub fn strategy(&self, s: Strategy) -> Option<&StrategyRuns> {
        self.strategies.iter().find(|r| r.strategy == s)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,instance,seed,completion_s\n");
        for s in &self.strategies {
            for r in &s.runs {
                for i in &r.instances {
                    writeln!(out, "{},{},{},{:.6}", s.strategy, i.instance, r.seed, i.completion_s).unwrap();
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "instances={}", self.instances).unwrap();
        writeln!(out, "repeats={}", self.seeds.len()).unwrap();
        for s in &self.strategies {
            let m = s.summary();
            writeln!(
                out,
                "{}: mean={:.3} min={:.3} q1={:.3} median={:.3} q3={:.3} max={:.3}",
                s.strategy, s.mean(), m.min, m.q1, m.median, m.q3, m.max
            )
            .unwrap();
        }
        for v in &self.verdicts {
            writeln!(out, "{}={:.4} {}", v.name, v.value, if v.pass { "PASS" } else { "FAIL" }).unwrap();
        }
        out
    }
}

/// Runs `strategy` with `n` instances for each seed.
pub fn run_strategy(
    strategy: Strategy,
    n: usize,
    hosts: &HostModel,
    workload: &WorkloadModel,
    setup: &FabricSetup,
    seeds: &[u64],
) -> Result<StrategyRuns> {
    let p = plan(strategy, n, &setup.pool, hosts)?;
    let runs = seeds
        .iter()
        .map(|&s| simulate(&p, workload, setup, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategyRuns { strategy, runs })
}

/// Compares single-shared, two-device composition and dedicated-plus-shared
/// over identical seeds.
pub fn compare_strategies(
    n: usize,
    hosts: &HostModel,
    workload: &WorkloadModel,
    setup: &FabricSetup,
    repeats: usize,
    seed_base: u64,
) -> Result<ComparisonReport> {
    if repeats < 3 {
        return Err(Error::config("repeats", "comparison needs at least 3 repeats"));
    }
    if setup.pool.devices < 2 {
        return Err(Error::Plan("comparison needs a pool of at least 2 devices".into()));
    }
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| seed_base.wrapping_add(r)).collect();
    let strategies = [Strategy::SingleShared, Strategy::ComposedShared(2), Strategy::DedicatedPlusShared]
        .into_iter()
        .map(|s| run_strategy(s, n, hosts, workload, setup, &seeds))
        .collect::<Result<Vec<_>>>()?;
    let (a, b, c) = (&strategies[0], &strategies[1], &strategies[2]);
    let speed = b.mean() / a.mean();
    let dedicated = c.instance_mean(0) / b.instance_mean(0);
    let verdicts = vec![
        Verdict {
            name: "composed_vs_single",
            value: speed,
            pass: speed < 1.0,
        },
        Verdict {
            name: "dedicated_vs_composed",
            value: dedicated,
            pass: (dedicated - 1.0).abs() <= DEDICATED_TOLERANCE,
        },
    ];
    Ok(ComparisonReport {
        instances: n,
        seeds,
        strategies,
        verdicts,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub instances: usize,
    pub mean: f64,
    /// Mean relative to the one-instance mean of the same strategy.
    pub slowdown: f64,
}

/// Mean completion per instance count, one host per instance.
pub fn sweep(
    strategy: Strategy,
    counts: &[usize],
    hosts: &HostModel,
    workload: &WorkloadModel,
    setup: &FabricSetup,
    seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    let one_host_each = |n: usize| HostModel {
        count: n,
        ..hosts.clone()
    };
    let base = run_strategy(strategy, 1, &one_host_each(1), workload, setup, seeds)?.mean();
    counts
        .iter()
        .map(|&n| {
            let m = run_strategy(strategy, n, &one_host_each(n), workload, setup, seeds)?.mean();
            Ok(SweepPoint {
                instances: n,
                mean: m,
                slowdown: m / base,
            })
        })
        .collect()
}

/// Smallest swept count whose slowdown exceeds `threshold`.
pub fn saturation_point(points: &[SweepPoint], threshold: f64) -> Option<usize> {
    points.iter().find(|p| p.slowdown > 1.0 + threshold).map(|p| p.instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::PoolConfig;

    fn tiny() -> WorkloadModel {
        WorkloadModel {
            total_output_bytes: 2_000_000_000,
            flush_bytes: 500_000_000,
            ..WorkloadModel::default()
        }
    }

    #[test]
    fn single_instance_strategies_agree() {
        let setup = FabricSetup::new(PoolConfig::default());
        let hosts = HostModel::with_count(1);
        let a = run_strategy(Strategy::SingleShared, 1, &hosts, &tiny(), &setup, &[5]).unwrap();
        let c = run_strategy(Strategy::DedicatedPlusShared, 1, &hosts, &tiny(), &setup, &[5]).unwrap();
        assert_eq!(a.runs[0].completions(), c.runs[0].completions());
    }

    #[test]
    fn report_shapes() {
        let setup = FabricSetup::new(PoolConfig::default());
        let r = compare_strategies(2, &HostModel::with_count(2), &tiny(), &setup, 3, 9).unwrap();
        assert_eq!(r.seeds, vec![9, 10, 11]);
        let csv = r.to_csv();
        assert!(csv.starts_with("strategy,instance,seed,completion_s\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 3 * 2);
        assert!(compare_strategies(2, &HostModel::with_count(2), &tiny(), &setup, 2, 9).is_err());
        assert!(r.to_text().contains("dedicated_vs_composed="));
        assert!(r.verdict("composed_vs_single").is_some());
    }

    #[test]
    fn saturation_lookup() {
        let pts = [
            SweepPoint { instances: 2, mean: 1.0, slowdown: 1.01 },
            SweepPoint { instances: 3, mean: 1.0, slowdown: 1.2 },
        ];
        assert_eq!(saturation_point(&pts, 0.05), Some(3));
        assert_eq!(saturation_point(&pts, 0.5), None);
    }
}
