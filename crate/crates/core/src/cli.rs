//! Command-line front end. `main` returns the process exit code:
//! 2 for configuration errors, 1 for a failed check, 0 otherwise.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::env::{self, ConfigError, DeltaPolicy, Distribution, FeedbackMode, InstanceConfig};
use crate::harness::{self, RunConfig, RunError, StepRow, SweepRow, TraceLevel};
use crate::protocol::codec;
use crate::schedule;
use crate::stats;

pub const RESULTS_HEADER: [&str; 7] = [
    "horizon",
    "seed",
    "cumulative_regret",
    "good_event",
    "phase1_steps",
    "partition_epochs",
    "final_assignment",
];

#[derive(Parser, Debug)]
#[command(name = "mmab-sax", version, about = "Multi-player bandit simulator with shareable arms")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// JSON instance file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    /// A number in (0, 1/2) or `theorem_default`.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long, value_enum)]
    feedback_mode: Option<ModeArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    HardSax,
    AggregateSoft,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one episode; writes <out>.csv and <out>.json.
    Run {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Event trace, JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Per-step trace, CSV.
        #[arg(long)]
        trace_steps: Option<PathBuf>,
    },
    /// Episodes over horizons × seeds; writes the results table.
    Sweep {
        #[command(flatten)]
        o: Overrides,
        /// Comma-separated horizons; overrides `horizons` in the config.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<u64>>,
        /// Number of seeds, starting at the base seed.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        #[arg(long, env = "MMAB_SAX_JOBS")]
        jobs: Option<usize>,
    },
    /// Run the built-in property suites.
    Check {
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Pretty-print a stored event trace.
    TraceReplay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Flip one decoded bit in the codec suite.
    Codec,
}

/// Sweep-only keys that may sit next to the instance fields.
#[derive(Deserialize, Default)]
struct SweepKeys {
    horizons: Option<Vec<u64>>,
    seeds: Option<u64>,
}

fn load_value(path: &Path) -> Result<serde_json::Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn build_instance(o: &Overrides, mut value: serde_json::Value) -> Result<(InstanceConfig, SweepKeys), ConfigError> {
    let mut keys = SweepKeys::default();
    if let Some(obj) = value.as_object_mut() {
        keys.horizons = obj
            .remove("horizons")
            .map(serde_json::from_value)
            .transpose()?;
        keys.seeds = obj.remove("seeds").map(serde_json::from_value).transpose()?;
        if obj.get("horizon").is_none() {
            if let Some(h) = keys.horizons.as_ref().and_then(|h| h.first()) {
                obj.insert("horizon".into(), (*h).into());
            }
        }
    }
    let mut inst: InstanceConfig = serde_json::from_value(value)?;
    if let Some(s) = o.seed {
        inst.seed = s;
    }
    if let Some(h) = o.horizon {
        inst.horizon = h;
    }
    if let Some(d) = &o.delta {
        inst.delta = if d == "theorem_default" {
            DeltaPolicy::TheoremDefault
        } else {
            DeltaPolicy::Explicit(
                d.parse()
                    .map_err(|_| ConfigError::Invalid(format!("bad --delta `{d}`")))?,
            )
        };
    }
    if let Some(m) = o.feedback_mode {
        inst.feedback_mode = match m {
            ModeArg::HardSax => FeedbackMode::HardSax,
            ModeArg::AggregateSoft => FeedbackMode::AggregateSoft,
        };
    }
    inst.validate()?;
    Ok((inst, keys))
}

fn instance_from(o: &Overrides) -> Result<(InstanceConfig, SweepKeys), ConfigError> {
    let path = o
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    build_instance(o, load_value(path)?)
}

enum Failure {
    Config(String),
    Check(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Check(other.to_string()),
        }
    }
}

pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let res = match cli.cmd {
        Command::Run {
            o,
            out,
            trace,
            trace_steps,
        } => cmd_run(&o, &out, trace.as_deref(), trace_steps.as_deref()),
        Command::Sweep {
            o,
            horizons,
            seeds,
            out,
            jobs,
        } => cmd_sweep(&o, horizons, seeds, &out, jobs),
        Command::Check { inject_fault } => cmd_check(inject_fault),
        Command::TraceReplay { trace } => cmd_replay(&trace),
    };
    match res {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            1
        }
        Err(Failure::Io(msg)) => {
            eprintln!("io error: {msg}");
            1
        }
    }
}

fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.horizon.to_string(),
            r.seed.to_string(),
            format!("{}", r.cumulative_regret),
            r.good_event.to_string(),
            r.phase1_steps.to_string(),
            r.partition_epochs.to_string(),
            r.final_assignment.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_run(o: &Overrides, out: &Path, trace: Option<&Path>, steps: Option<&Path>) -> Result<(), Failure> {
    let (inst, _) = instance_from(o)?;
    let mut cfg = RunConfig::new(inst);
    cfg.trace = match (trace, steps) {
        (_, Some(_)) => TraceLevel::Steps,
        (Some(_), None) => TraceLevel::Events,
        _ => TraceLevel::Off,
    };
    let mut step_writer = match steps {
        // the header comes from StepRow's field names
        Some(p) => Some(csv::Writer::from_path(p)?),
        None => None,
    };
    let mut step_err = None;
    let mut on_step = |row: StepRow| {
        if let Some(w) = step_writer.as_mut() {
            if let Err(e) = w.serialize(&row) {
                step_err.get_or_insert(e);
            }
        }
    };
    let result = harness::run_episode_with(&cfg, &mut on_step)?;
    if let Some(e) = step_err {
        return Err(e.into());
    }
    if let Some(mut w) = step_writer {
        w.flush()?;
    }
    if let Some(p) = trace {
        let mut w = BufWriter::new(File::create(p)?);
        for e in &result.timeline {
            serde_json::to_writer(&mut w, e).map_err(|e| Failure::Io(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    write_rows(&with_ext(out, "csv"), &[SweepRow::from_result(&result)])?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(with_ext(out, "json"), json)?;
    println!(
        "regret {:.3} after {} steps; assignment {}; complete {}",
        result.ledger.cumulative,
        result.steps,
        harness::pack_assignment(&result.final_assignment),
        result.complete
    );
    Ok(())
}

fn cmd_sweep(
    o: &Overrides,
    horizons: Option<Vec<u64>>,
    seeds: Option<u64>,
    out: &Path,
    jobs: Option<usize>,
) -> Result<(), Failure> {
    let (inst, keys) = instance_from(o)?;
    let horizons = horizons
        .or(keys.horizons)
        .unwrap_or_else(|| vec![inst.horizon]);
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Failure::Config("horizons must be positive".into()));
    }
    let n = seeds.or(keys.seeds).unwrap_or(1).max(1);
    let seed_list: Vec<u64> = (0..n).map(|i| inst.seed + i).collect();
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = harness::sweep(&RunConfig::new(inst), &horizons, &seed_list, jobs)?;
    write_rows(out, &rows)?;
    let summary = harness::summarize(&rows);
    println!("horizon,runs,mean_regret,sd_regret");
    for s in &summary {
        println!("{},{},{:.3},{:.3}", s.horizon, s.runs, s.mean, s.sd);
    }
    Ok(())
}

fn cmd_replay(path: &Path) -> Result<(), Failure> {
    let f = File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut out = std::io::stdout().lock();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Failure::Config(format!("line {}: {e}", i + 1)))?;
        let t = v.get("t").and_then(|x| x.as_u64()).unwrap_or(0);
        let p = v.get("player").and_then(|x| x.as_u64()).unwrap_or(0);
        let kind = v.get("event").and_then(|x| x.as_str()).unwrap_or("?");
        let mut rest = v.clone();
        if let Some(obj) = rest.as_object_mut() {
            obj.remove("t");
            obj.remove("player");
            obj.remove("event");
        }
        let detail = match rest.as_object() {
            Some(o) if !o.is_empty() => rest.to_string(),
            _ => String::new(),
        };
        if writeln!(out, "{t:>12}  p{p:<3} {kind:<16} {detail}").is_err() {
            // reader went away (e.g. piped into head)
            return Ok(());
        }
    }
    Ok(())
}

// ---- property suites ----

type Suite = (&'static str, fn(Option<Fault>) -> Result<(), String>);

pub fn suites() -> Vec<(&'static str, fn(Option<Fault>) -> Result<(), String>)> {
    let s: Vec<Suite> = vec![
        ("oracle equals brute force", check_oracle),
        ("codec round trip", check_codec),
        ("grouped coverage", check_coverage),
        ("round robin collision free", check_collision_free),
        ("zero test minimal", check_zero_test),
        ("unique power of nine", check_unique_power),
        ("simple round robin ledger", check_ledger),
        ("point-mass end to end", check_end_to_end),
    ];
    s
}

fn cmd_check(fault: Option<Fault>) -> Result<(), Failure> {
    let mut failed = 0;
    for (name, f) in suites() {
        match f(fault) {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        Err(Failure::Check(format!("{failed} suite(s) failed")))
    } else {
        Ok(())
    }
}

/// Best expected reward over every profile, by enumeration.
pub fn brute_force_value(inst: &InstanceConfig) -> f64 {
    let k = inst.k();
    let m = inst.players;
    let mut best = f64::NEG_INFINITY;
    let mut profile = vec![0; m];
    loop {
        best = best.max(env::profile_value(inst, &profile));
        let mut i = 0;
        while i < m {
            profile[i] += 1;
            if profile[i] < k {
                break;
            }
            profile[i] = 0;
            i += 1;
        }
        if i == m {
            return best;
        }
    }
}

fn check_oracle(_: Option<Fault>) -> Result<(), String> {
    let means = [0.91, 0.73, 0.55, 0.38, 0.12];
    for k in 1..=5 {
        for m in 1..=k.min(4) {
            for caps_code in 0..3usize.pow(k as u32) {
                let caps: Vec<usize> = (0..k).map(|i| caps_code / 3usize.pow(i as u32) % 3 + 1).collect();
                if caps.iter().sum::<usize>() < m {
                    continue;
                }
                let inst = InstanceConfig::uniform(&means[..k], &caps, Distribution::PointMass, m, 10, 0.01);
                let greedy = env::optimal_allocation(&inst).map_err(|e| e.to_string())?;
                let brute = brute_force_value(&inst);
                if (greedy.value - brute).abs() > 1e-9 {
                    return Err(format!("caps {caps:?} m={m}: {} vs {brute}", greedy.value));
                }
            }
        }
    }
    Ok(())
}

fn check_codec(fault: Option<Fault>) -> Result<(), String> {
    for k in 3..=6 {
        let means: Vec<f64> = (0..k).map(|i| 0.9 - 0.1 * i as f64).collect();
        let mut caps = vec![1; k];
        caps[0] = 2;
        let inst = InstanceConfig::uniform(&means, &caps, Distribution::PointMass, 3, 10, 0.01);
        for mask in 0..(1u32 << k) {
            let set: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
            let frame = codec::encode_arms(&set, k);
            let heard = harness::transmit_frame(&inst, 0, 1, &frame.bits, 0).map_err(|e| e.to_string())?;
            for (p, bits) in heard.iter().enumerate().skip(1) {
                let mut bits = bits.clone();
                if fault == Some(Fault::Codec) {
                    bits[0] = !bits[0];
                }
                if codec::decode_arms(&bits) != set {
                    return Err(format!("K={k} player {p} decoded {:?} for {set:?}", codec::decode_arms(&bits)));
                }
            }
        }
    }
    Ok(())
}

fn check_coverage(_: Option<Fault>) -> Result<(), String> {
    for m in 1..=12 {
        let players: Vec<usize> = (0..m).collect();
        for psi in 1..=m {
            let mut full = vec![false; m];
            for pass in 1..=2 {
                let plan = schedule::grouped_rr_plan(psi, pass, &players).map_err(|e| e.to_string())?;
                for (g, members) in plan.groups.iter().enumerate() {
                    if plan.is_full(g) {
                        for &p in members {
                            full[p] = true;
                        }
                    }
                }
            }
            if let Some(p) = full.iter().position(|f| !f) {
                return Err(format!("m={m} psi={psi}: player {p} never in a full group"));
            }
        }
    }
    Ok(())
}

fn check_collision_free(_: Option<Fault>) -> Result<(), String> {
    for k in 1..=8 {
        for m in 1..=k {
            let players: Vec<usize> = (0..m).collect();
            let arms: Vec<usize> = (0..k).collect();
            for session in 0..m as u64 {
                let pulls: Vec<_> = players
                    .iter()
                    .map(|&p| schedule::session_pulls(&players, &arms, session, p))
                    .collect();
                for step in 0..pulls[0].len() {
                    let mut occ = vec![0; k];
                    for p in &pulls {
                        occ[p[step].arm] += 1;
                    }
                    let psi = pulls[0][step].psi;
                    if occ.iter().any(|&o| o > psi) {
                        return Err(format!("K={k} m={m} step {step}: occupancy {occ:?}"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn check_zero_test(_: Option<Fault>) -> Result<(), String> {
    for i in 1..20 {
        for j in 1..20 {
            let mu = i as f64 / 20.0;
            let dp = j as f64 / 40.0;
            let n = stats::zero_test_samples(mu, dp).map_err(|e| e.to_string())?;
            let q = 1.0 - mu;
            if q.powi(n as i32) > dp || (n > 1 && q.powi(n as i32 - 1) <= dp) {
                return Err(format!("mu={mu} delta'={dp}: n={n}"));
            }
        }
    }
    Ok(())
}

fn check_unique_power(_: Option<Fault>) -> Result<(), String> {
    for i in 1..=10_000 {
        let mu = i as f64 / 10_000.0;
        let (lo, hi) = (32.0 / (mu * mu), 288.0 / (mu * mu));
        let hits = (0..40).filter(|&a| (lo..hi).contains(&9f64.powi(a))).count();
        if hits != 1 {
            return Err(format!("mu={mu}: {hits} powers in range"));
        }
    }
    Ok(())
}

fn check_ledger(_: Option<Fault>) -> Result<(), String> {
    let inst = InstanceConfig::uniform(&[0.9, 0.8, 0.3, 0.2, 0.1], &[1; 5], Distribution::Bernoulli, 3, 50, 0.01);
    let per_round = harness::simple_rr_round_regret(&inst).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(inst);
    cfg.policy = harness::Policy::SimpleRoundRobin;
    let r = harness::run_episode(&cfg).map_err(|e| e.to_string())?;
    let want = 10.0 * per_round;
    if (r.ledger.cumulative - want).abs() > 1e-9 * want.abs().max(1.0) {
        return Err(format!("{} vs {want}", r.ledger.cumulative));
    }
    Ok(())
}

fn check_end_to_end(_: Option<Fault>) -> Result<(), String> {
    let inst = InstanceConfig::uniform(
        &[0.95, 0.9, 0.3, 0.2],
        &[2, 1, 1, 1],
        Distribution::PointMass,
        3,
        5_000_000,
        0.1,
    );
    let opt = env::optimal_allocation(&inst).map_err(|e| e.to_string())?;
    let r = harness::run_episode(&RunConfig::new(inst)).map_err(|e| e.to_string())?;
    let mut counts = vec![0; opt.counts.len()];
    for a in r.final_assignment.iter() {
        match a {
            Some(a) => counts[*a] += 1,
            None => return Err("run did not settle".into()),
        }
    }
    if counts != opt.counts {
        return Err(format!("assignment {counts:?}, oracle {:?}", opt.counts));
    }
    Ok(())
}

