use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fabric::PoolConfig;

use super::workload::HostModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    SingleShared,
    ComposedShared(usize),
    DedicatedPlusShared,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::SingleShared => f.write_str("single_shared"),
            Strategy::ComposedShared(m) => write!(f, "composed_shared({m})"),
            Strategy::DedicatedPlusShared => f.write_str("dedicated_plus_shared"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "single_shared" => return Ok(Strategy::SingleShared),
            "dedicated_plus_shared" => return Ok(Strategy::DedicatedPlusShared),
            _ => {}
        }
        let m = s
            .strip_prefix("composed_shared")
            .map(|rest| rest.trim_start_matches(['(', ':']).trim_end_matches(')'))
            .and_then(|m| m.parse::<usize>().ok())
            .ok_or_else(|| Error::invalid(format!("unknown strategy `{s}`")))?;
        if m < 2 {
            return Err(Error::invalid("composed_shared needs at least 2 devices"));
        }
        Ok(Strategy::ComposedShared(m))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetSpec {
    Device(usize),
    Composition(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub instance: usize,
    pub host: usize,
    /// Index into `AllocationPlan::targets`.
    pub target: usize,
    /// Namespace slot within the target.
    pub slot: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationPlan {
    pub strategy: Strategy,
    pub targets: Vec<TargetSpec>,
    /// Equal-size namespaces carved per target.
    pub slots_per_target: Vec<usize>,
    pub assignments: Vec<Assignment>,
    pub hosts: HostModel,
}

impl AllocationPlan {
    pub fn instances_on_host(&self, host: usize) -> usize {
        self.assignments.iter().filter(|a| a.host == host).count()
    }

    pub fn assignment(&self, instance: usize) -> &Assignment {
        &self.assignments[instance]
    }
}

pub fn plan(strategy: Strategy, n: usize, pool: &PoolConfig, hosts: &HostModel) -> Result<AllocationPlan> {
    if n == 0 {
        return Err(Error::Plan("at least one instance is required".into()));
    }
    if hosts.count == 0 {
        return Err(Error::Plan("at least one host is required".into()));
    }
    let need = match strategy {
        Strategy::SingleShared => 1,
        Strategy::ComposedShared(m) => m,
        Strategy::DedicatedPlusShared => 2,
    };
    if pool.devices < need {
        return Err(Error::Plan(format!(
            "{strategy} needs {need} devices, pool has {}",
            pool.devices
        )));
    }
    let (targets, placement): (Vec<TargetSpec>, Vec<(usize, usize)>) = match strategy {
        Strategy::SingleShared => (vec![TargetSpec::Device(0)], (0..n).map(|i| (0, i)).collect()),
        Strategy::ComposedShared(m) => (
            vec![TargetSpec::Composition((0..m).collect())],
            (0..n).map(|i| (0, i)).collect(),
        ),
        Strategy::DedicatedPlusShared => {
            let mut targets = vec![TargetSpec::Device(0)];
            if n > 1 {
                targets.push(TargetSpec::Device(1));
            }
            let placement = (0..n).map(|i| if i == 0 { (0, 0) } else { (1, i - 1) }).collect();
            (targets, placement)
        }
    };
    let mut slots_per_target = vec![0; targets.len()];
    for &(t, _) in &placement {
        slots_per_target[t] += 1;
    }
    let assignments = placement
        .into_iter()
        .enumerate()
        .map(|(instance, (target, slot))| Assignment {
            instance,
            host: instance % hosts.count,
            target,
            slot,
        })
        .collect();
    Ok(AllocationPlan {
        strategy,
        targets,
        slots_per_target,
        assignments,
        hosts: hosts.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_strategies() {
        assert_eq!("single_shared".parse::<Strategy>().unwrap(), Strategy::SingleShared);
        assert_eq!("composed_shared(3)".parse::<Strategy>().unwrap(), Strategy::ComposedShared(3));
        assert_eq!("composed_shared:2".parse::<Strategy>().unwrap(), Strategy::ComposedShared(2));
        assert!("composed_shared(1)".parse::<Strategy>().is_err());
        assert!("round_robin".parse::<Strategy>().is_err());
        assert_eq!(Strategy::ComposedShared(2).to_string(), "composed_shared(2)");
    }

    #[test]
    fn single_shared_three() {
        let p = plan(Strategy::SingleShared, 3, &PoolConfig::with_devices(1), &HostModel::with_count(3)).unwrap();
        assert_eq!(p.targets, vec![TargetSpec::Device(0)]);
        assert_eq!(p.slots_per_target, vec![3]);
        assert_eq!(p.assignments.iter().map(|a| a.host).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn dedicated_plus_shared_five() {
        let p = plan(Strategy::DedicatedPlusShared, 5, &PoolConfig::with_devices(2), &HostModel::with_count(5)).unwrap();
        assert_eq!(p.targets, vec![TargetSpec::Device(0), TargetSpec::Device(1)]);
        assert_eq!(p.slots_per_target, vec![1, 4]);
        assert_eq!(p.assignment(0).target, 0);
        assert!(p.assignments[1..].iter().all(|a| a.target == 1));
    }

    #[test]
    fn composed_single_instance() {
        let p = plan(Strategy::ComposedShared(2), 1, &PoolConfig::with_devices(2), &HostModel::with_count(1)).unwrap();
        assert_eq!(p.targets, vec![TargetSpec::Composition(vec![0, 1])]);
        assert_eq!(p.slots_per_target, vec![1]);
    }

    #[test]
    fn co_locates_beyond_host_count() {
        let p = plan(Strategy::SingleShared, 5, &PoolConfig::with_devices(1), &HostModel::with_count(2)).unwrap();
        assert_eq!(p.instances_on_host(0), 3);
        assert_eq!(p.instances_on_host(1), 2);
    }

    #[test]
    fn insufficient_devices() {
        assert!(matches!(
            plan(Strategy::ComposedShared(3), 2, &PoolConfig::with_devices(2), &HostModel::default()),
            Err(Error::Plan(_))
        ));
        assert!(plan(Strategy::DedicatedPlusShared, 2, &PoolConfig::with_devices(1), &HostModel::default()).is_err());
    }
}
