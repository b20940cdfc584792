// SPDX-License-Identifier: Apache-2.0

//! Runs the experiment matrix of a [`CampaignConfig`] and writes results.
//!
//! Output files (in the configured output directory):
//!
//! | file | one row per |
//! |------|-------------|
//! | `rate.csv`, `rate.json` | method, mode, rate, trial |
//! | `rate_summary.csv` | method, mode, rate |
//! | `wmrd.csv`, `wmrd.json` | method, mode, rate, trial |
//! | `wmrd_summary.csv` | method, mode, rate |
//! | `overhead.csv`, `overhead.json` | delay, protocol |
//! | `records/<method>_<mode>_<p>-<q>.<fmt>` | exported flow record |
//!
//! Trials run on a worker pool; rows are always written in matrix order,
//! so output is identical for any worker count.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ofmon_core::eval::{
    overhead_at, summarize_rate, summarize_wmrd, EvalError, Experiment, OverheadPoint, TrialOutcome,
};
use ofmon_core::hash::derive_seed;
use ofmon_core::{replay, Method, Mode, PacketRecord, Rate, SamplingConfig, SimError};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CampaignConfig, TraceSource};
use crate::export::{write_records_file, write_rows, Format};
use crate::synth::{generate_trace, randomize_trace};
use crate::trace::{read_csv_trace, TraceError};
use crate::units::format_rate;

/// Environment variable read for the default worker count.
pub const WORKERS_ENV: &str = "OFMON_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("synthetic trace: {0}")]
    Spec(#[from] crate::synth::SpecError),
    #[error("{method} {mode} rate {rate} trial {trial}: {source}")]
    Trial {
        method: Method,
        mode: Mode,
        rate: String,
        trial: u32,
        source: EvalError,
    },
    #[error("overhead at delay {delay_ns} ns: {source}")]
    Overhead { delay_ns: u64, source: EvalError },
    #[error("export {method} {mode} rate {rate}: {source}")]
    Export {
        method: Method,
        mode: Mode,
        rate: String,
        source: SimError,
    },
    #[error("writing {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn load_trace(config: &CampaignConfig) -> Result<Vec<PacketRecord>, CampaignError> {
    let trace = match &config.trace {
        TraceSource::CsvFile(path) => read_csv_trace(path)?,
        TraceSource::Synthetic(spec) => generate_trace(spec)?,
    };
    Ok(match config.randomize_seed {
        Some(seed) => randomize_trace(&trace, seed),
        None => trace,
    })
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    method: Method,
    mode: Mode,
    rate: Rate,
}

#[derive(Debug, Serialize)]
struct RateRow {
    method: &'static str,
    mode: &'static str,
    target_rate: String,
    effective_rate: String,
    trial: u32,
    seed: u64,
    total_flows: u64,
    sampled_flows: u64,
    theoretical_count: f64,
}

#[derive(Debug, Serialize)]
struct RateSummaryRow {
    method: &'static str,
    mode: &'static str,
    target_rate: String,
    effective_rate: String,
    trials: u32,
    theoretical_count: f64,
    median: f64,
    p5: f64,
    p95: f64,
}

#[derive(Debug, Serialize)]
struct WmrdRow {
    method: &'static str,
    mode: &'static str,
    target_rate: String,
    effective_rate: String,
    trial: u32,
    seed: u64,
    sampled_flows: u64,
    wmrd: f64,
    sampled_empty: bool,
}

#[derive(Debug, Serialize)]
struct WmrdSummaryRow {
    method: &'static str,
    mode: &'static str,
    target_rate: String,
    effective_rate: String,
    trials: u32,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

#[derive(Debug, Serialize)]
struct OverheadRow {
    delay_ns: u64,
    protocol: &'static str,
    flows: u64,
    redundant_packets: u64,
    redundant_bytes: u64,
    total_bytes: u64,
    mean_redundant_packets: f64,
    redundant_byte_pct: f64,
}

impl From<&OverheadPoint> for OverheadRow {
    fn from(p: &OverheadPoint) -> Self {
        OverheadRow {
            delay_ns: p.delay_ns,
            protocol: p.protocol.as_str(),
            flows: p.flows,
            redundant_packets: p.redundant_packets,
            redundant_bytes: p.redundant_bytes,
            total_bytes: p.total_bytes,
            mean_redundant_packets: p.mean_redundant_packets,
            redundant_byte_pct: p.redundant_byte_pct,
        }
    }
}

/// What a campaign wrote.
#[derive(Debug, Default)]
pub struct CampaignReport {
    pub files: Vec<PathBuf>,
    pub trials: usize,
}

struct Output<'a> {
    dir: &'a Path,
    report: CampaignReport,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write<T: Serialize>(&mut self, name: &str, rows: &[T], format: Format) -> Result<(), CampaignError> {
        let path = self.path(name);
        let wrap = |source| CampaignError::Write {
            path: path.clone(),
            source,
        };
        let file = File::create(&path).map_err(wrap)?;
        write_rows(file, rows, format).map_err(wrap)?;
        self.report.files.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CampaignError> {
        let path = self.path(name);
        let wrap = |source| CampaignError::Write {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(wrap)?);
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| wrap(e.into()))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(wrap)?;
        self.report.files.push(path);
        Ok(())
    }
}

/// Runs every selected experiment. `progress` receives one line per step.
pub fn run_campaign(
    config: &CampaignConfig,
    workers: usize,
    progress: &mut dyn FnMut(&str),
) -> Result<CampaignReport, CampaignError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let trace = load_trace(config)?;
    progress(&format!("trace: {} packets", trace.len()));
    fs::create_dir_all(&config.output_dir).map_err(|source| CampaignError::Write {
        path: config.output_dir.clone(),
        source,
    })?;
    let mut out = Output {
        dir: &config.output_dir,
        report: CampaignReport::default(),
    };

    let cells: Vec<Cell> = config
        .sampling
        .iter()
        .flat_map(|s| {
            s.modes.iter().flat_map(move |&mode| {
                s.rates.iter().map(move |&rate| Cell {
                    method: s.method,
                    mode,
                    rate,
                })
            })
        })
        .collect();

    let exp = Experiment::new(&trace, config.controller);
    let total_flows = exp.total_flows();
    progress(&format!("trace: {total_flows} flows"));

    if config.experiments.rate || config.experiments.wmrd {
        let jobs: Vec<(usize, u32)> = cells
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (0..Experiment::effective_trials(c.method, config.trials)).map(move |t| (i, t)))
            .collect();
        progress(&format!("running {} trials on {} workers", jobs.len(), workers.max(1)));
        let outcomes: Vec<TrialOutcome> = pool.install(|| {
            jobs.par_iter()
                .map(|&(i, trial)| {
                    let c = cells[i];
                    exp.run_trial(c.method, c.mode, c.rate, config.seed, trial)
                        .map_err(|source| CampaignError::Trial {
                            method: c.method,
                            mode: c.mode,
                            rate: format_rate(&c.rate),
                            trial,
                            source,
                        })
                })
                .collect::<Result<_, _>>()
        })?;
        out.report.trials = outcomes.len();

        let mut by_cell: Vec<Vec<TrialOutcome>> = vec![Vec::new(); cells.len()];
        for (&(i, _), o) in jobs.iter().zip(outcomes) {
            by_cell[i].push(o);
        }
        if config.experiments.rate {
            write_rate(&mut out, &cells, &by_cell, total_flows)?;
        }
        if config.experiments.wmrd {
            write_wmrd(&mut out, &cells, &by_cell)?;
        }
        progress("rate/wmrd results written");
    }

    if let (true, Some(o)) = (config.experiments.overhead, &config.overhead) {
        let sampling = o.sampling(config.seed).map_err(|e| CampaignError::Overhead {
            delay_ns: 0,
            source: e.into(),
        })?;
        let rules = sampling.generate().map_err(|e| CampaignError::Overhead {
            delay_ns: 0,
            source: e.into(),
        })?;
        let points: Vec<[OverheadPoint; 2]> = pool.install(|| {
            o.delays_ns
                .par_iter()
                .map(|&d| {
                    overhead_at(&trace, d, &rules, config.controller)
                        .map_err(|source| CampaignError::Overhead { delay_ns: d, source })
                })
                .collect::<Result<_, _>>()
        })?;
        let rows: Vec<OverheadRow> = points.iter().flatten().map(OverheadRow::from).collect();
        out.write("overhead.csv", &rows, Format::Csv)?;
        out.write_json("overhead.json", &rows)?;
        progress(&format!("overhead: {} delays written", o.delays_ns.len()));
    }

    if config.experiments.export {
        let dir = out.path("records");
        fs::create_dir_all(&dir).map_err(|source| CampaignError::Write {
            path: dir.clone(),
            source,
        })?;
        let records: Vec<_> = pool.install(|| {
            cells
                .par_iter()
                .map(|c| export_cell(&trace, c, config))
                .collect::<Result<Vec<_>, _>>()
        })?;
        for (c, recs) in cells.iter().zip(&records) {
            let name = format!(
                "{}_{}_{}-{}.{}",
                c.method,
                c.mode,
                c.rate.numer(),
                c.rate.denom(),
                config.export_format.extension()
            );
            let path = dir.join(name);
            write_records_file(&path, recs, config.export_format).map_err(|source| CampaignError::Write {
                path: path.clone(),
                source,
            })?;
            out.report.files.push(path);
        }
        progress(&format!("export: {} record files written", cells.len()));
    }
    Ok(out.report)
}

/// Records of a single replay with the trial-0 rules of a cell.
fn export_cell(
    trace: &[PacketRecord],
    c: &Cell,
    config: &CampaignConfig,
) -> Result<Vec<ofmon_core::FlowRecord>, CampaignError> {
    let err = |source| CampaignError::Export {
        method: c.method,
        mode: c.mode,
        rate: format_rate(&c.rate),
        source,
    };
    let rules = SamplingConfig::for_rate(c.method, c.mode, c.rate, derive_seed(config.seed, 0))
        .and_then(|s| s.generate())
        .map_err(|e| err(SimError::Sampling(e)))?;
    Ok(replay(trace, &rules, config.controller).map_err(err)?.records)
}

fn write_rate(
    out: &mut Output<'_>,
    cells: &[Cell],
    by_cell: &[Vec<TrialOutcome>],
    total_flows: u64,
) -> Result<(), CampaignError> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (c, outcomes) in cells.iter().zip(by_cell) {
        let s = summarize_rate(c.method, c.mode, c.rate, total_flows, outcomes);
        for o in outcomes {
            rows.push(RateRow {
                method: c.method.as_str(),
                mode: c.mode.as_str(),
                target_rate: format_rate(&c.rate),
                effective_rate: format_rate(&o.effective_rate),
                trial: o.trial,
                seed: o.seed,
                total_flows,
                sampled_flows: o.sampled_flows,
                theoretical_count: s.theoretical_count,
            });
        }
        summaries.push(RateSummaryRow {
            method: c.method.as_str(),
            mode: c.mode.as_str(),
            target_rate: format_rate(&c.rate),
            effective_rate: format_rate(&s.effective_rate),
            trials: s.trials,
            theoretical_count: s.theoretical_count,
            median: s.median,
            p5: s.p5,
            p95: s.p95,
        });
    }
    out.write("rate.csv", &rows, Format::Csv)?;
    out.write("rate_summary.csv", &summaries, Format::Csv)?;
    out.write_json(
        "rate.json",
        &serde_json::json!({ "trials": rows, "summary": summaries }),
    )
}

fn write_wmrd(out: &mut Output<'_>, cells: &[Cell], by_cell: &[Vec<TrialOutcome>]) -> Result<(), CampaignError> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (c, outcomes) in cells.iter().zip(by_cell) {
        let s = summarize_wmrd(c.method, c.mode, c.rate, outcomes);
        for o in outcomes {
            rows.push(WmrdRow {
                method: c.method.as_str(),
                mode: c.mode.as_str(),
                target_rate: format_rate(&c.rate),
                effective_rate: format_rate(&o.effective_rate),
                trial: o.trial,
                seed: o.seed,
                sampled_flows: o.sampled_flows,
                wmrd: o.wmrd,
                sampled_empty: o.sampled_empty,
            });
        }
        let q = s.quantiles;
        summaries.push(WmrdSummaryRow {
            method: c.method.as_str(),
            mode: c.mode.as_str(),
            target_rate: format_rate(&c.rate),
            effective_rate: format_rate(&s.effective_rate),
            trials: s.values.len() as u32,
            min: q.min,
            q1: q.q1,
            median: q.median,
            q3: q.q3,
            max: q.max,
        });
    }
    out.write("wmrd.csv", &rows, Format::Csv)?;
    out.write("wmrd_summary.csv", &summaries, Format::Csv)?;
    out.write_json(
        "wmrd.json",
        &serde_json::json!({ "trials": rows, "summary": summaries }),
    )
}
