use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smufin_core::fabric::timelines_to_csv;
use smufin_core::kv::KvConfig;
use smufin_core::orchestrator::{compare_strategies, plan, simulate, Scenario};
use smufin_core::stages::{groups_to_bytes, run_pipeline, PipelineConfig, PipelineResult};
use smufin_core::traceanalysis::{classify, IoTrace, DEFAULT_OPEN_STREAM_LIMIT};
use smufin_core::Error;

#[derive(Parser)]
#[command(name = "smufin", version, about = "Somatic k-mer pipeline and disaggregated storage simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the k-mer pipeline on a normal/tumoral pair.
    Run(Common),
    /// Simulate one placement strategy.
    Simulate(Common),
    /// Compare the three placement strategies over repeated seeds.
    Compare(Common),
    /// Classify the sequentiality of a block trace.
    Trace(TraceArgs),
}

#[derive(Args)]
struct Common {
    /// key = value config file.
    #[arg(short, long)]
    config: PathBuf,
    /// Directory for output artifacts.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(short, long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TraceArgs {
    /// Trace file (CSV or blktrace-like text).
    #[arg(short, long, required_unless_present = "config")]
    input: Option<PathBuf>,
    /// Config file with `input` and `open_stream_limit`.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    open_streams: Option<usize>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    /// Config, parse and input-file problems are usage errors.
    fn setup(e: Error) -> Failure {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: Error) -> Failure {
        match e {
            Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } | Error::Plan(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Trace(a) => cmd_trace(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn read_kv(path: &Path) -> Result<KvConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::setup(Error::Io { path: path.into(), source: e }))?;
    KvConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> CliResult {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn join_ids(ids: impl IntoIterator<Item = u32>) -> String {
    ids.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

fn candidates_csv(r: &PipelineResult) -> String {
    let mut out = String::from("kmer,normal_count,tumoral_count,normal_reads,tumoral_reads\n");
    for (kmer, c) in r.index.kmers().zip(r.index.candidates().values()) {
        writeln!(
            out,
            "{kmer},{},{},{},{}",
            c.normal_count,
            c.tumoral_count,
            join_ids(&c.normal_reads),
            join_ids(&c.tumoral_reads)
        )
        .unwrap();
    }
    out
}

fn groups_csv(r: &PipelineResult) -> String {
    let mut out = String::from("seed,members,shared_kmers\n");
    for g in &r.groups {
        let members: Vec<String> = g.members.iter().map(|(o, id)| format!("{}{id}", o.label())).collect();
        let kmers: Vec<String> = g.shared_kmers.iter().map(|k| k.to_string()).collect();
        writeln!(out, "{}{},{},{}", g.seed.0.label(), g.seed.1, members.join(";"), kmers.join(";")).unwrap();
    }
    out
}

fn cmd_run(a: &Common) -> CliResult {
    let kv = read_kv(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let mut cfg = PipelineConfig::from_kv(&kv, base).map_err(Failure::setup)?;
    if cfg.checkpoint_dir.is_none() {
        cfg.checkpoint_dir = Some(a.out.join("checkpoints"));
    }
    out_dir(&a.out)?;
    let r = run_pipeline(&cfg).map_err(Failure::runtime)?;
    for s in &r.executed {
        println!("{:<12} {:>10.3} ms", s.label(), s.elapsed.as_secs_f64() * 1e3);
    }
    for s in &r.loaded {
        println!("{:<12} {:>13}", s.label(), "checkpoint");
    }
    println!("candidates={} groups={} spilled_bytes={}", r.index.len(), r.groups.len(), r.spilled_bytes);
    write(&a.out, "candidates.csv", candidates_csv(&r))?;
    write(&a.out, "groups.csv", groups_csv(&r))?;
    write(&a.out, "index.bin", r.index.to_canonical_bytes())?;
    write(&a.out, "groups.bin", groups_to_bytes(&r.groups))?;
    write(&a.out, "trace.csv", r.trace.to_csv())
}

fn scenario(a: &Common) -> Result<Scenario, Failure> {
    let mut s = Scenario::from_kv(&read_kv(&a.config)?).map_err(Failure::setup)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn cmd_simulate(a: &Common) -> CliResult {
    let s = scenario(a)?;
    let p = plan(s.strategy, s.instances, &s.setup.pool, &s.hosts).map_err(Failure::runtime)?;
    let r = simulate(&p, &s.workload, &s.setup.clone().with_stats(), s.seed).map_err(Failure::runtime)?;
    out_dir(&a.out)?;
    write(&a.out, "instances.csv", r.to_csv())?;
    write(&a.out, "bandwidth.csv", timelines_to_csv(&r.timelines))?;
    let summary = r.summary_text();
    print!("{summary}");
    write(&a.out, "summary.txt", summary)
}

fn cmd_compare(a: &Common) -> CliResult {
    let s = scenario(a)?;
    let r = compare_strategies(s.instances, &s.hosts, &s.workload, &s.setup, s.repeats, s.seed)
        .map_err(Failure::runtime)?;
    out_dir(&a.out)?;
    write(&a.out, "completions.csv", r.to_csv())?;
    let text = r.to_text();
    print!("{text}");
    write(&a.out, "report.txt", text)
}

fn cmd_trace(a: &TraceArgs) -> CliResult {
    let (mut input, mut limit) = (a.input.clone(), DEFAULT_OPEN_STREAM_LIMIT);
    if let Some(path) = &a.config {
        let kv = read_kv(path)?;
        kv.reject_unknown(&["input", "open_stream_limit"]).map_err(Failure::setup)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if input.is_none() {
            input = kv.get("input").map(|p| base.join(p));
        }
        limit = kv.parse_or("open_stream_limit", limit).map_err(Failure::setup)?;
    }
    if let Some(l) = a.open_streams {
        limit = l;
    }
    if limit == 0 {
        return Err(Failure::Usage("config error in `open_stream_limit`: must be positive".into()));
    }
    let input = input.ok_or_else(|| Failure::Usage("config error in `input`: trace path is required".into()))?;
    let text = fs::read_to_string(&input).map_err(|e| Failure::setup(Error::Io { path: input.clone(), source: e }))?;
    let trace = IoTrace::parse_any(&text).map_err(|e| Failure::Usage(format!("{}: {e}", input.display())))?;
    let report = classify(&trace, limit).to_text();
    print!("{report}");
    if let Some(out) = &a.out {
        out_dir(out)?;
        write(out, "sequentiality.txt", report)?;
    }
    Ok(())
}
