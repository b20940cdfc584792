// SPDX-License-Identifier: Apache-2.0

//! Command line: `simulate`, `campaign` and `gen`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ofmon_core::sim::SimOptions;
use ofmon_core::{ControllerConfig, Method, Mode, Rate, SamplingConfig, Simulation};
use serde::Serialize;

use crate::campaign::{default_workers, run_campaign, CampaignError};
use crate::config::{CampaignConfig, ConfigError};
use crate::export::{write_records, Format};
use crate::synth::{generate_trace, randomize_trace, GapDist, KeyMode, SizeDist, SyntheticSpec};
use crate::trace::{open_trace, read_csv_trace, totals, write_csv_trace, TraceError};
use crate::units::{format_rate, parse_duration_ns, parse_rate};

#[derive(Debug, Parser)]
#[command(name = "ofmon", version, about = "OpenFlow flow-monitoring and sampling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay one trace with one sampling configuration and export records.
    Simulate(SimulateArgs),
    /// Run the experiments described by a TOML config file.
    Campaign(CampaignArgs),
    /// Write a synthetic or key-randomized trace.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Packet trace (CSV, optionally .gz).
    #[arg(long)]
    trace: PathBuf,
    /// ip, port or hash.
    #[arg(long)]
    method: Method,
    /// source or pair.
    #[arg(long, default_value = "source")]
    mode: Mode,
    /// Target sampling rate as a fraction, e.g. 1/64.
    #[arg(long, value_parser = parse_rate, default_value = "1")]
    rate: Rate,
    #[arg(long, value_parser = parse_duration_ns, default_value = "15s")]
    idle: u64,
    /// Hard timeout, 0 for none.
    #[arg(long, value_parser = parse_duration_ns, default_value = "0s")]
    hard: u64,
    /// Delay between the first packet of a flow and its entry installation.
    #[arg(long, value_parser = parse_duration_ns, default_value = "0s")]
    delay: u64,
    /// Redraw the sampling rules at this interval.
    #[arg(long, value_parser = parse_duration_ns)]
    rotate: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record output file; records go to stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Record format; guessed from the output extension by default.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write the run summary as JSON to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    /// Campaign config (TOML).
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Override the record export format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (default from OFMON_WORKERS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Randomize the flow keys of this trace instead of generating one.
    #[arg(long, value_name = "TRACE")]
    randomize: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    flows: u64,
    /// geometric:P, pareto:ALPHA[:MIN] or fixed:K.
    #[arg(long, default_value = "geometric:0.5")]
    sizes: SizeDist,
    /// uniform or zipf:S.
    #[arg(long, default_value = "uniform")]
    ips: KeyMode,
    /// uniform or zipf:S.
    #[arg(long, default_value = "uniform")]
    ports: KeyMode,
    /// Fraction of TCP flows.
    #[arg(long, default_value_t = 0.8)]
    tcp: f64,
    /// Probability that a flow reuses the typical size of its Zipf host or port.
    #[arg(long, default_value_t = 0.0)]
    size_coupling: f64,
    /// exp:MEAN or fixed:GAP.
    #[arg(long, default_value = "exp:50ms")]
    gaps: GapDist,
    /// Window over which flows start.
    #[arg(long, value_parser = parse_duration_ns, default_value = "60s")]
    duration: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trace; `.gz` compresses.
    #[arg(long, short)]
    out: PathBuf,
    /// Only csv is supported for traces.
    #[arg(long, value_parser = ["csv"], default_value = "csv")]
    format: String,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::NotFound(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Trace(t) => t.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(what: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", what.display()))
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Campaign(a) => campaign(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Runtime(msg)) = &f;
            eprintln!("ofmon: {msg}");
            f.code()
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    packets: u64,
    bytes: u64,
    flows_seen: u64,
    flows_sampled: usize,
    records: usize,
    entries_installed: u64,
    packet_ins: u64,
    peak_flow_record_entries: usize,
    sampling_entries: usize,
    rule_rotations: u64,
    target_rate: String,
    effective_rate: String,
    rate_exact: bool,
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    if !a.trace.exists() {
        return Err(Failure::Usage(format!("trace not found: {}", a.trace.display())));
    }
    let controller = ControllerConfig {
        install_delay_ns: a.delay,
        idle_timeout_ns: a.idle,
        hard_timeout_ns: a.hard,
    };
    controller.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if a.rotate == Some(0) {
        return Err(Failure::Usage("--rotate must be positive".into()));
    }
    let sampling =
        SamplingConfig::for_rate(a.method, a.mode, a.rate, a.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let rules = sampling.generate().map_err(|e| Failure::Usage(e.to_string()))?;
    let effective = rules.theoretical_rate;
    let options = SimOptions {
        controller,
        rotation_interval_ns: a.rotate,
    };
    let mut sim = Simulation::new(rules, options).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut keys = std::collections::HashSet::new();
    for p in open_trace(&a.trace)? {
        let p = p?;
        keys.insert(p.flow_key());
        sim.feed(&p).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let output = sim.finish().map_err(|e| Failure::Runtime(e.to_string()))?;
    let s = &output.summary;

    let format = a
        .format
        .unwrap_or_else(|| a.out.as_deref().map_or(Format::Jsonl, Format::from_path));
    match &a.out {
        Some(path) => {
            let file = File::create(path).map_err(io_failure(path))?;
            write_records(file, &output.records, format).map_err(io_failure(path))?;
        }
        None => {
            write_records(io::stdout().lock(), &output.records, format)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }

    let summary = SimulateSummary {
        packets: s.packets,
        bytes: s.bytes,
        flows_seen: keys.len() as u64,
        flows_sampled: s.flows_sampled,
        records: s.records,
        entries_installed: s.flow_mods,
        packet_ins: s.packet_ins,
        peak_flow_record_entries: s.peak_flow_record_entries,
        sampling_entries: s.sampling_entries,
        rule_rotations: s.rotations,
        target_rate: format_rate(&a.rate),
        effective_rate: format_rate(&effective),
        rate_exact: effective == a.rate,
    };
    let text = summary_text(&summary, a.method, a.mode);
    if a.out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    if let Some(path) = &a.summary {
        let mut f = File::create(path).map_err(io_failure(path))?;
        serde_json::to_writer_pretty(&mut f, &summary)
            .map_err(io::Error::from)
            .and_then(|_| f.write_all(b"\n"))
            .map_err(io_failure(path))?;
    }
    Ok(())
}

fn summary_text(s: &SimulateSummary, method: Method, mode: Mode) -> String {
    let mut t = String::new();
    let mut line = |k: &str, v: String| t.push_str(&format!("{k:<26}{v}\n"));
    line("method", format!("{method} {mode}"));
    line("target rate", s.target_rate.clone());
    let note = if s.rate_exact { "" } else { " (nearest representable)" };
    line("effective rate", format!("{}{note}", s.effective_rate));
    line("packets", s.packets.to_string());
    line("bytes", s.bytes.to_string());
    line("flows seen", s.flows_seen.to_string());
    line("flows sampled", s.flows_sampled.to_string());
    line("records", s.records.to_string());
    line("entries installed", s.entries_installed.to_string());
    line("packet-ins", s.packet_ins.to_string());
    line("peak record entries", s.peak_flow_record_entries.to_string());
    line("sampling entries", s.sampling_entries.to_string());
    if s.rule_rotations > 0 {
        line("rule rotations", s.rule_rotations.to_string());
    }
    t
}

fn campaign(a: CampaignArgs) -> Result<(), Failure> {
    let mut config = CampaignConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(out) = a.out {
        config.output_dir = out;
    }
    if let Some(f) = a.format {
        config.export_format = f;
    }
    let workers = match a.workers {
        Some(0) => return Err(Failure::Usage("--workers must be positive".into())),
        Some(n) => n,
        None => default_workers(),
    };
    let report = run_campaign(&config, workers, &mut |msg| eprintln!("{msg}"))?;
    println!("{} trials, {} files written to {}", report.trials, report.files.len(), config.output_dir.display());
    for f in &report.files {
        println!("  {}", f.display());
    }
    Ok(())
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let trace = match &a.randomize {
        Some(input) => randomize_trace(&read_csv_trace(input)?, a.seed),
        None => {
            let spec = SyntheticSpec {
                flows: a.flows,
                sizes: a.sizes,
                ips: a.ips,
                ports: a.ports,
                tcp_fraction: a.tcp,
                size_coupling: a.size_coupling,
                gaps: a.gaps,
                duration_ns: a.duration,
                seed: a.seed,
            };
            generate_trace(&spec).map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    write_csv_trace(&a.out, &trace).map_err(io_failure(&a.out))?;
    let t = totals(&trace);
    println!("flows {}  packets {}  bytes {}", t.flows, t.packets, t.bytes);
    Ok(())
}
