// SPDX-License-Identifier: Apache-2.0

//! Accuracy and overhead experiments.
//!
//! * Rate accuracy: repeat a method with freshly drawn rules and count the
//!   distinct flows that end up with a record.
//! * Randomness: compare the flow size distribution (FSD) of the sampled
//!   flows with the original one using the weighted mean relative
//!   difference, `sum |f_i - g_i| / sum (f_i + g_i) / 2` over normalized
//!   FSDs `f` and `g`.
//! * Overhead: packets and bytes a sampled flow sends to the controller
//!   before its record entry is installed, as a function of install delay.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::controller::ControllerConfig;
use crate::hash::derive_seed;
use crate::sampling::{rate_to_f64, Method, Mode, Rate, RuleSet, SamplingConfig};
use crate::sim::{replay, SimError};
use crate::types::{FlowKey, FlowRecord, PacketRecord, Protocol};
use crate::FxHashMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("original flow size distribution is empty")]
    EmptyOriginal,
    #[error("at least one trial is required")]
    NoTrials,
    #[error("at least one install delay is required")]
    NoDelays,
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<crate::sampling::SamplingError> for EvalError {
    fn from(e: crate::sampling::SamplingError) -> Self {
        EvalError::Sim(SimError::Sampling(e))
    }
}

/// Flow size distribution: flow size in packets -> number of flows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fsd {
    histogram: BTreeMap<u64, u64>,
}

impl Fsd {
    pub fn from_sizes<I: IntoIterator<Item = u64>>(sizes: I) -> Self {
        let mut histogram = BTreeMap::new();
        for s in sizes {
            *histogram.entry(s).or_insert(0) += 1;
        }
        Fsd { histogram }
    }

    /// FSD of a packet trace, grouping packets by 5-tuple.
    pub fn of_trace(trace: &[PacketRecord]) -> Self {
        Fsd::from_sizes(flow_sizes(trace).into_values())
    }

    /// FSD of monitored flows. Records sharing a key (timeout splits) are
    /// summed so each flow contributes its full merged size.
    pub fn of_records(records: &[FlowRecord]) -> Self {
        let mut sizes: FxHashMap<FlowKey, u64> = FxHashMap::default();
        for r in records {
            *sizes.entry(r.key).or_insert(0) += r.packet_count;
        }
        Fsd::from_sizes(sizes.into_values())
    }

    pub fn total_flows(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.histogram.is_empty()
    }

    pub fn count(&self, size: u64) -> u64 {
        self.histogram.get(&size).copied().unwrap_or(0)
    }

    /// `(size, flows)` pairs in increasing size order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.histogram.iter().map(|(s, c)| (*s, *c))
    }

    pub fn mean_size(&self) -> f64 {
        let flows = self.total_flows();
        if flows == 0 {
            return 0.0;
        }
        let packets: u64 = self.iter().map(|(s, c)| s * c).sum();
        packets as f64 / flows as f64
    }
}

/// Packets per flow key.
pub fn flow_sizes(trace: &[PacketRecord]) -> FxHashMap<FlowKey, u64> {
    let mut sizes: FxHashMap<FlowKey, u64> = FxHashMap::default();
    for p in trace {
        *sizes.entry(p.flow_key()).or_insert(0) += 1;
    }
    sizes
}

/// Weighted mean relative difference between two FSDs, in `[0, 2]`.
///
/// An empty `sampled` distribution is defined as maximally different (2).
pub fn wmrd(original: &Fsd, sampled: &Fsd) -> Result<f64, EvalError> {
    if original.is_empty() {
        return Err(EvalError::EmptyOriginal);
    }
    if sampled.is_empty() {
        return Ok(2.0);
    }
    let total_f = original.total_flows() as f64;
    let total_g = sampled.total_flows() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut a = original.iter().peekable();
    let mut b = sampled.iter().peekable();
    loop {
        let (f, g) = match (a.peek().copied(), b.peek().copied()) {
            (None, None) => break,
            (Some((sa, ca)), Some((sb, cb))) if sa == sb => {
                a.next();
                b.next();
                (ca as f64 / total_f, cb as f64 / total_g)
            }
            (Some((sa, ca)), Some((sb, _))) if sa < sb => {
                a.next();
                (ca as f64 / total_f, 0.0)
            }
            (Some((_, ca)), None) => {
                a.next();
                (ca as f64 / total_f, 0.0)
            }
            (_, Some((_, cb))) => {
                b.next();
                (0.0, cb as f64 / total_g)
            }
        };
        num += (f - g).abs();
        den += (f + g) / 2.0;
    }
    Ok(num / den)
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Five-number summary for boxplots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Quantiles {
            min: quantile(&v, 0.0),
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: quantile(&v, 1.0),
        }
    }
}

/// Result of one randomized replay.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: u32,
    pub seed: u64,
    pub effective_rate: Rate,
    pub sampled_flows: u64,
    pub wmrd: f64,
    /// No flow was sampled; `wmrd` is then 2 by definition.
    pub sampled_empty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTrialSummary {
    pub method: Method,
    pub mode: Mode,
    pub target_rate: Rate,
    /// Nearest rate the method can express.
    pub effective_rate: Rate,
    pub total_flows: u64,
    pub trials: u32,
    pub sampled_flow_counts: Vec<u64>,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub theoretical_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmrdSummary {
    pub method: Method,
    pub mode: Mode,
    pub target_rate: Rate,
    pub effective_rate: Rate,
    pub values: Vec<f64>,
    pub quantiles: Quantiles,
}

/// A trace prepared for repeated replays: its FSD and flow count are
/// computed once.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    trace: &'a [PacketRecord],
    original: Fsd,
    controller: ControllerConfig,
}

impl<'a> Experiment<'a> {
    pub fn new(trace: &'a [PacketRecord], controller: ControllerConfig) -> Self {
        Experiment {
            trace,
            original: Fsd::of_trace(trace),
            controller,
        }
    }

    pub fn trace(&self) -> &'a [PacketRecord] {
        self.trace
    }

    pub fn original_fsd(&self) -> &Fsd {
        &self.original
    }

    pub fn total_flows(&self) -> u64 {
        self.original.total_flows()
    }

    /// Trials actually run: the hash method is deterministic, so one.
    pub fn effective_trials(method: Method, trials: u32) -> u32 {
        match method {
            Method::HashBased => trials.min(1),
            _ => trials,
        }
    }

    /// Sampling configuration of trial `trial` under `master_seed`.
    pub fn trial_config(
        method: Method,
        mode: Mode,
        rate: Rate,
        master_seed: u64,
        trial: u32,
    ) -> Result<SamplingConfig, EvalError> {
        Ok(SamplingConfig::for_rate(
            method,
            mode,
            rate,
            derive_seed(master_seed, u64::from(trial)),
        )?)
    }

    /// One replay with rules drawn for `trial`.
    pub fn run_trial(
        &self,
        method: Method,
        mode: Mode,
        rate: Rate,
        master_seed: u64,
        trial: u32,
    ) -> Result<TrialOutcome, EvalError> {
        let cfg = Self::trial_config(method, mode, rate, master_seed, trial)?;
        let rules = cfg.generate()?;
        let out = replay(self.trace, &rules, self.controller)?;
        let sampled = Fsd::of_records(&out.records);
        Ok(TrialOutcome {
            trial,
            seed: cfg.seed,
            effective_rate: rules.theoretical_rate,
            sampled_flows: sampled.total_flows(),
            wmrd: wmrd(&self.original, &sampled)?,
            sampled_empty: sampled.is_empty(),
        })
    }

    pub fn run_trials(
        &self,
        method: Method,
        mode: Mode,
        rate: Rate,
        trials: u32,
        master_seed: u64,
    ) -> Result<Vec<TrialOutcome>, EvalError> {
        if trials == 0 {
            return Err(EvalError::NoTrials);
        }
        (0..Self::effective_trials(method, trials))
            .map(|t| self.run_trial(method, mode, rate, master_seed, t))
            .collect()
    }
}

/// Aggregates trial outcomes into median and 5th/95th percentiles of the
/// sampled flow count.
pub fn summarize_rate(
    method: Method,
    mode: Mode,
    target_rate: Rate,
    total_flows: u64,
    outcomes: &[TrialOutcome],
) -> RateTrialSummary {
    let counts: Vec<u64> = outcomes.iter().map(|o| o.sampled_flows).collect();
    let mut sorted: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let effective_rate = outcomes
        .first()
        .map_or(target_rate, |o| o.effective_rate);
    RateTrialSummary {
        method,
        mode,
        target_rate,
        effective_rate,
        total_flows,
        trials: outcomes.len() as u32,
        sampled_flow_counts: counts,
        median: quantile(&sorted, 0.5),
        p5: quantile(&sorted, 0.05),
        p95: quantile(&sorted, 0.95),
        theoretical_count: total_flows as f64 * rate_to_f64(&effective_rate),
    }
}

pub fn summarize_wmrd(
    method: Method,
    mode: Mode,
    target_rate: Rate,
    outcomes: &[TrialOutcome],
) -> WmrdSummary {
    let values: Vec<f64> = outcomes.iter().map(|o| o.wmrd).collect();
    WmrdSummary {
        method,
        mode,
        target_rate,
        effective_rate: outcomes
            .first()
            .map_or(target_rate, |o| o.effective_rate),
        quantiles: Quantiles::of(&values),
        values,
    }
}

/// Sampled-flow counts over `trials` random rule draws.
pub fn run_rate_experiment(
    trace: &[PacketRecord],
    method: Method,
    mode: Mode,
    target_rate: Rate,
    trials: u32,
    seed: u64,
) -> Result<RateTrialSummary, EvalError> {
    let exp = Experiment::new(trace, ControllerConfig::default());
    let outcomes = exp.run_trials(method, mode, target_rate, trials, seed)?;
    Ok(summarize_rate(method, mode, target_rate, exp.total_flows(), &outcomes))
}

/// WMRD distribution per rate.
pub fn run_wmrd_experiment(
    trace: &[PacketRecord],
    method: Method,
    mode: Mode,
    rates: &[Rate],
    trials: u32,
    seed: u64,
) -> Result<Vec<WmrdSummary>, EvalError> {
    let exp = Experiment::new(trace, ControllerConfig::default());
    rates
        .iter()
        .map(|&rate| {
            let outcomes = exp.run_trials(method, mode, rate, trials, seed)?;
            Ok(summarize_wmrd(method, mode, rate, &outcomes))
        })
        .collect()
}

/// Overhead for one protocol at one install delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadPoint {
    pub delay_ns: u64,
    pub protocol: Protocol,
    pub flows: u64,
    pub redundant_packets: u64,
    pub redundant_bytes: u64,
    pub total_bytes: u64,
    pub mean_redundant_packets: f64,
    /// Redundant bytes as a percentage of all bytes of the monitored flows.
    pub redundant_byte_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverheadCurve {
    /// Ordered by delay, then TCP before UDP.
    pub points: Vec<OverheadPoint>,
}

impl OverheadCurve {
    pub fn delays_ns(&self) -> Vec<u64> {
        let mut d: Vec<u64> = self.points.iter().map(|p| p.delay_ns).collect();
        d.dedup();
        d
    }

    pub fn series(&self, protocol: Protocol) -> impl Iterator<Item = &OverheadPoint> {
        self.points.iter().filter(move |p| p.protocol == protocol)
    }
}

/// Per-protocol overhead from the records of one replay.
pub fn overhead_points(delay_ns: u64, records: &[FlowRecord]) -> [OverheadPoint; 2] {
    Protocol::ALL.map(|protocol| {
        let mut p = OverheadPoint {
            delay_ns,
            protocol,
            flows: 0,
            redundant_packets: 0,
            redundant_bytes: 0,
            total_bytes: 0,
            mean_redundant_packets: 0.0,
            redundant_byte_pct: 0.0,
        };
        for r in records.iter().filter(|r| r.key.protocol == protocol) {
            p.flows += 1;
            p.redundant_packets += r.redundant_packets();
            p.redundant_bytes += r.redundant_byte_count;
            p.total_bytes += r.byte_count;
        }
        if p.flows > 0 {
            p.mean_redundant_packets = p.redundant_packets as f64 / p.flows as f64;
        }
        if p.total_bytes > 0 {
            p.redundant_byte_pct = 100.0 * p.redundant_bytes as f64 / p.total_bytes as f64;
        }
        p
    })
}

/// Replays the trace once per delay.
pub fn overhead_at(
    trace: &[PacketRecord],
    delay_ns: u64,
    rules: &RuleSet,
    base: ControllerConfig,
) -> Result<[OverheadPoint; 2], EvalError> {
    let out = replay(trace, rules, base.with_delay(delay_ns))?;
    Ok(overhead_points(delay_ns, &out.records))
}

/// Redundant packets and bytes across install delays. `sampling` selects
/// the monitored flows; [`SamplingConfig::all_flows`] monitors everything.
pub fn run_overhead_experiment(
    trace: &[PacketRecord],
    delays: &[u64],
    sampling: &SamplingConfig,
) -> Result<OverheadCurve, EvalError> {
    if delays.is_empty() {
        return Err(EvalError::NoDelays);
    }
    let rules = sampling.generate()?;
    let mut points = Vec::with_capacity(delays.len() * 2);
    for &d in delays {
        points.extend(overhead_at(trace, d, &rules, ControllerConfig::default())?);
    }
    Ok(OverheadCurve { points })
}
