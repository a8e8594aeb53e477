use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use smufin_core::kmer::{parse_reads_str, Origin, ReadSet};

fn smufin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smufin")).args(args).output().unwrap()
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn toy_config() -> String {
    repo().join("data/toy/run.conf").display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn load(name: &str, origin: Origin) -> ReadSet {
    parse_reads_str(&fs::read_to_string(repo().join("data/toy").join(name)).unwrap(), origin).unwrap()
}

fn revcomp(s: &[u8]) -> Vec<u8> {
    s.iter()
        .rev()
        .map(|b| match b {
            b'A' => b'T',
            b'C' => b'G',
            b'G' => b'C',
            _ => b'A',
        })
        .collect()
}

/// Canonical k-mer strings passing the thresholds, by plain substring counting.
fn oracle_candidates(k: usize, tau_t: u32, tau_n: u32) -> Vec<String> {
    let mut counts: BTreeMap<Vec<u8>, (u32, u32)> = BTreeMap::new();
    for set in [load("normal.fa", Origin::Normal), load("tumoral.fa", Origin::Tumoral)] {
        for r in &set.reads {
            for w in r.bases.windows(k).filter(|w| !w.contains(&b'N')) {
                let rc = revcomp(w);
                let c = counts.entry(w.min(&rc[..]).to_vec()).or_default();
                match set.origin {
                    Origin::Normal => c.0 += 1,
                    Origin::Tumoral => c.1 += 1,
                }
            }
        }
    }
    counts
        .into_iter()
        .filter(|(_, (n, t))| *t >= tau_t && *n <= tau_n)
        .map(|(w, _)| String::from_utf8(w).unwrap())
        .collect()
}

#[test]
fn toy_run_matches_oracle_and_reruns_from_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let outs = out.display().to_string();
    let first = smufin(&["run", "-c", &toy_config(), "-o", &outs]);
    assert!(first.status.success(), "{}", stderr(&first));
    for stage in ["prune", "count[0]", "count[1]", "filter[0]", "filter[1]", "merge", "group"] {
        assert!(stdout(&first).contains(stage), "missing {stage}");
    }
    let csv = fs::read_to_string(out.join("candidates.csv")).unwrap();
    let mut got: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    got.sort();
    let expect = oracle_candidates(25, 3, 1);
    assert!(!expect.is_empty());
    assert_eq!(got, expect);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("time_us,kind,start,length\n"));

    let index = fs::read(out.join("index.bin")).unwrap();
    let groups = fs::read(out.join("groups.bin")).unwrap();
    let again = smufin(&["run", "-c", &toy_config(), "-o", &outs]);
    assert!(again.status.success());
    assert!(!stdout(&again).contains(" ms"), "nothing should execute:\n{}", stdout(&again));
    assert_eq!(fs::read(out.join("index.bin")).unwrap(), index);
    assert_eq!(fs::read(out.join("groups.bin")).unwrap(), groups);

    fs::remove_file(out.join("checkpoints/group.ckpt")).unwrap();
    let third = smufin(&["run", "-c", &toy_config(), "-o", &outs]);
    let text = stdout(&third);
    let executed: Vec<&str> = text
        .lines()
        .filter(|l| l.ends_with(" ms"))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(executed, vec!["group"]);
    assert_eq!(fs::read(out.join("groups.bin")).unwrap(), groups);
}

#[test]
fn pipeline_trace_is_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(smufin(&["run", "-c", &toy_config(), "-o", &out.display().to_string()]).status.success());
    let r = smufin(&["trace", "-i", &out.join("trace.csv").display().to_string()]);
    assert!(r.status.success());
    let aware: f64 = stdout(&r)
        .lines()
        .find_map(|l| l.strip_prefix("sequential_append_aware="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(aware >= 0.85, "{aware}");
}

#[test]
fn missing_input_exits_two_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "normal = nope.fa\ntumoral = nope.fa\n").unwrap();
    let r = smufin(&["run", "-c", &cfg.display().to_string(), "-o", &dir.path().join("o").display().to_string()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("nope.fa"), "{}", stderr(&r));
}

#[test]
fn config_errors_exit_two_with_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.conf");
    fs::write(&cfg, "instances = 2\nwarp_factor = 9\n").unwrap();
    let r = smufin(&["simulate", "-c", &cfg.display().to_string(), "-o", &dir.path().display().to_string()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("warp_factor"));
    fs::write(&cfg, "instances = 2\nstrategy = composed_shared(3)\ndevices = 2\n").unwrap();
    let r = smufin(&["simulate", "-c", &cfg.display().to_string(), "-o", &dir.path().display().to_string()]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(smufin(&["simulate"]).status.code(), Some(2));
}

#[test]
fn capacity_exhaustion_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.conf");
    fs::write(&cfg, "instances = 2\ndevices = 1\ndevice_capacity = 100GB\n").unwrap();
    let r = smufin(&["simulate", "-c", &cfg.display().to_string(), "-o", &dir.path().display().to_string()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("instance"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo().join("configs/simulate.conf").display().to_string();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let r = smufin(&["simulate", "-c", &cfg, "-o", &out.display().to_string(), "-s", seed]);
        assert!(r.status.success(), "{}", stderr(&r));
        (
            fs::read(out.join("instances.csv")).unwrap(),
            fs::read(out.join("bandwidth.csv")).unwrap(),
        )
    };
    let a = run("a", "4");
    assert_eq!(a, run("b", "4"));
    assert_ne!(a.0, run("c", "5").0);
}

#[test]
fn compare_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo().join("configs/compare.conf").display().to_string();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = smufin(&["compare", "-c", &cfg, "-o", &out.display().to_string()]);
        assert!(r.status.success(), "{}", stderr(&r));
        (fs::read_to_string(out.join("completions.csv")).unwrap(), fs::read_to_string(out.join("report.txt")).unwrap())
    };
    let (csv, report) = run("a");
    assert!(csv.starts_with("strategy,instance,seed,completion_s\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 5 * 6);
    assert!(report.contains("composed_vs_single="));
    assert!(report.lines().any(|l| l.starts_with("composed_vs_single=") && l.ends_with("PASS")), "{report}");
    assert!(report.lines().any(|l| l.starts_with("dedicated_vs_composed=") && l.ends_with("PASS")), "{report}");
    assert_eq!(run("b"), (csv, report));
}

#[test]
fn trace_accepts_blktrace_text() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blk.txt");
    fs::write(&path, "0.000001 W 0 8\n0.000002 W 8 8\n0.000003 W 1000 8\n0.000004 W 16 8\n").unwrap();
    let r = smufin(&["trace", "-i", &path.display().to_string(), "--open-streams", "4"]);
    assert!(r.status.success(), "{}", stderr(&r));
    assert!(stdout(&r).contains("total_writes=4"));
    assert!(stdout(&r).contains("sequential_append_aware=0.500000"));
}
