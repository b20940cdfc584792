// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Each test writes one line
//! `ACCEPT <n> PASS|FAIL <name>: <detail>` straight to stderr, so the
//! verdicts show up even when test output is captured.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use ofmon::campaign::run_campaign;
use ofmon::config::CampaignConfig;
use ofmon::synth::{generate_trace, randomize_trace, GapDist, KeyMode, SizeDist, SyntheticSpec};
use ofmon_core::controller::NS_PER_MS;
use ofmon_core::eval::{
    run_overhead_experiment, summarize_rate, summarize_wmrd, Experiment,
};
use ofmon_core::sampling::{gen_port_rules, theoretical_rate, PORT_SPACE};
use ofmon_core::switch::{priority, select_bucket, IpMatch};
use ofmon_core::{
    Action, ControllerConfig, EntryId, FlowEntry, FlowKey, FlowRecord, MatchFields, Method, Mode,
    PacketRecord, Protocol, Rate, RemovalReason, SamplingConfig, Simulation, Switch, SwitchEvent,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

const SWEEP_RATES: [(u128, u128); 5] = [(1, 64), (1, 128), (1, 256), (1, 512), (1, 1024)];

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    let line = format!("ACCEPT {n} {} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn uniform_trace(flows: u64, seed: u64) -> Vec<PacketRecord> {
    let mut spec = SyntheticSpec::new(flows, seed);
    spec.sizes = SizeDist::Geometric(0.5);
    generate_trace(&spec).unwrap()
}

fn zipf_trace(flows: u64, seed: u64, coupling: f64) -> Vec<PacketRecord> {
    let mut spec = SyntheticSpec::new(flows, seed);
    spec.sizes = SizeDist::Geometric(0.5);
    spec.ips = KeyMode::ZipfSkewed(1.1);
    spec.ports = KeyMode::ZipfSkewed(1.1);
    spec.size_coupling = coupling;
    generate_trace(&spec).unwrap()
}

fn flow_sizes(trace: &[PacketRecord]) -> HashMap<FlowKey, (u64, u64)> {
    let mut m: HashMap<FlowKey, (u64, u64)> = HashMap::new();
    for p in trace {
        let e = m.entry(p.flow_key()).or_default();
        e.0 += 1;
        e.1 += u64::from(p.length_bytes);
    }
    m
}

#[test]
fn criterion_1_port_entry_arithmetic() {
    let rate = Rate::new(1, 200);
    let source = gen_port_rules(&SamplingConfig::for_rate(Method::PortBased, Mode::SourceOnly, rate, 1).unwrap()).unwrap();
    let pair = gen_port_rules(&SamplingConfig::for_rate(Method::PortBased, Mode::Pair, rate, 1).unwrap()).unwrap();

    // Independent count: distinct source (and destination) ports the TCP
    // rules match.
    let ports_matched = |rules: &ofmon_core::RuleSet| -> usize {
        let mut src = BTreeSet::new();
        let mut dst = BTreeSet::new();
        for e in rules.flow_entries.iter().filter(|e| e.match_fields.protocol == Some(Protocol::Tcp)) {
            let m = &e.match_fields;
            src.extend(m.src_port);
            dst.extend(m.dst_port);
            if let Some(s) = &m.src_port_set {
                src.extend(s.iter());
            }
            if let Some(s) = &m.dst_port_set {
                dst.extend(s.iter());
            }
        }
        src.len() + dst.len()
    };
    let s = source.entries_per_protocol();
    let p = pair.entries_per_protocol();
    let ok = s.abs_diff(328) <= 1
        && p.abs_diff(9268) <= 1
        && ports_matched(&source) == s
        && ports_matched(&pair) == p
        && source.entry_count() == 2 * s
        && pair.entry_count() == 2 * p;
    verdict(
        1,
        "port-entry arithmetic",
        ok,
        &format!("source-only {s} entries/protocol (expected 328), pair {p} entries/protocol (expected 9268)"),
    );
}

#[test]
fn criterion_2_rate_formulas() {
    #[derive(Debug, Clone)]
    enum Case {
        Ip(Mode, u32, u32),
        Port(Mode, u32, u32),
        Hash(u32, u32),
    }
    let strategy = prop_oneof![
        (0u32..=32).prop_map(|m| Case::Ip(Mode::SourceOnly, m, 0)),
        (0u32..=32, 0u32..=32).prop_map(|(m, n)| Case::Ip(Mode::Pair, m, n)),
        (1u32..=PORT_SPACE).prop_map(|m| Case::Port(Mode::SourceOnly, m, 0)),
        (1u32..=PORT_SPACE, 1u32..=PORT_SPACE).prop_map(|(m, n)| Case::Port(Mode::Pair, m, n)),
        (1u32..=10_000, 0u32..=1_000_000).prop_map(|(s, d)| Case::Hash(s, d)),
    ];
    let space = u128::from(PORT_SPACE);
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&(strategy, any::<u64>()), |(case, seed)| {
        let (cfg, expected) = match case {
            // 1 / 2^(m+n)
            Case::Ip(mode, m, n) => (
                SamplingConfig::ip_suffix(mode, m, n, seed),
                Rate::new(1, 1u128 << (m + n)),
            ),
            // m / 65535 and m*n / 65535^2
            Case::Port(Mode::SourceOnly, m, _) => {
                (SamplingConfig::ports(Mode::SourceOnly, m, 0, seed), Rate::new(u128::from(m), space))
            }
            Case::Port(mode, m, n) => (
                SamplingConfig::ports(mode, m, n, seed),
                Rate::new(u128::from(m) * u128::from(n), space * space),
            ),
            Case::Hash(s, d) => (
                SamplingConfig::hash(s, d, seed),
                Rate::new(u128::from(s), u128::from(s) + u128::from(d)),
            ),
        };
        let rules = cfg.generate().map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(theoretical_rate(&rules), expected);
        prop_assert_eq!(rules.theoretical_rate, expected);
        Ok(())
    });
    verdict(
        2,
        "rate formulas",
        result.is_ok(),
        &match result {
            Ok(()) => "1000 random configurations match the closed forms exactly".to_owned(),
            Err(e) => e.to_string(),
        },
    );
}

#[test]
fn criterion_3_hash_accuracy() {
    let trace = uniform_trace(100_000, 3);
    let exp = Experiment::new(&trace, ControllerConfig::default());
    let n = exp.total_flows() as f64;
    let mut ok = n == 100_000.0;
    let mut details = Vec::new();
    for (p, q) in SWEEP_RATES {
        let rate = Rate::new(p, q);
        let outcomes = exp.run_trials(Method::HashBased, Mode::SourceOnly, rate, 500, 1).unwrap();
        let s = summarize_rate(Method::HashBased, Mode::SourceOnly, rate, exp.total_flows(), &outcomes);
        let r = p as f64 / q as f64;
        let sigma = (n * r * (1.0 - r)).sqrt();
        let z = (s.median - n * r) / sigma;
        ok &= s.trials == 1 && s.p5 == s.p95 && z.abs() <= 3.0;
        details.push(format!("{p}/{q}: {} vs {:.1} (z={z:+.2})", s.median, n * r));
    }
    verdict(3, "hash-based accuracy", ok, &details.join(", "));
}

#[test]
fn criterion_4_ip_port_accuracy_on_randomized_traces() {
    let zipf = zipf_trace(100_000, 11, 0.0);
    let randomized = randomize_trace(&zipf, 5);
    let skewed = Experiment::new(&zipf, ControllerConfig::default());
    let uniform = Experiment::new(&randomized, ControllerConfig::default());
    let mut ok = true;
    let mut worst_err: f64 = 0.0;
    let mut worst_spread_ratio: f64 = 0.0;
    let mut failures = Vec::new();
    for method in [Method::IpSuffix, Method::PortBased] {
        for mode in [Mode::SourceOnly, Mode::Pair] {
            for (p, q) in SWEEP_RATES {
                let rate = Rate::new(p, q);
                let summary = |exp: &Experiment| {
                    let o = exp.run_trials(method, mode, rate, 100, 7).unwrap();
                    summarize_rate(method, mode, rate, exp.total_flows(), &o)
                };
                let u = summary(&uniform);
                let z = summary(&skewed);
                let err = (u.median - u.theoretical_count).abs() / u.theoretical_count;
                let ratio = (u.p95 - u.p5) / (z.p95 - z.p5);
                worst_err = worst_err.max(err);
                worst_spread_ratio = worst_spread_ratio.max(ratio);
                if err > 0.10 || ratio >= 1.0 || u.trials != 100 {
                    ok = false;
                    failures.push(format!("{method}/{mode} {p}/{q}: err {err:.3} spread ratio {ratio:.2}"));
                }
            }
        }
    }
    verdict(
        4,
        "ip/port accuracy on randomized traces",
        ok,
        &format!(
            "20 cells x 100 trials, worst median error {:.1}% (limit 10%), widest randomized/zipf p5-p95 ratio {:.2} (limit <1){}",
            100.0 * worst_err,
            worst_spread_ratio,
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    );
}

#[test]
fn criterion_5_wmrd_ordering() {
    // Flows of a heavy host or port share a typical size half of the time.
    let trace = zipf_trace(100_000, 11, 0.5);
    let exp = Experiment::new(&trace, ControllerConfig::default());
    let rate = Rate::new(1, 256);
    let median = |method, mode| {
        let o = exp.run_trials(method, mode, rate, 100, 1).unwrap();
        summarize_wmrd(method, mode, rate, &o).quantiles.median
    };
    let hash = median(Method::HashBased, Mode::SourceOnly);
    let others = [
        ("ip/source", median(Method::IpSuffix, Mode::SourceOnly)),
        ("ip/pair", median(Method::IpSuffix, Mode::Pair)),
        ("port/source", median(Method::PortBased, Mode::SourceOnly)),
        ("port/pair", median(Method::PortBased, Mode::Pair)),
    ];
    let all = exp.run_trial(Method::HashBased, Mode::SourceOnly, Rate::new(1, 1), 1, 0).unwrap();
    let ok = others.iter().all(|&(_, m)| hash <= m) && all.wmrd == 0.0;
    let listed: Vec<String> = others.iter().map(|(n, m)| format!("{n} {m:.4}")).collect();
    verdict(
        5,
        "wmrd ordering",
        ok,
        &format!(
            "median WMRD at 1/256: hash {hash:.4} <= {}; rate 1 WMRD {}",
            listed.join(", "),
            all.wmrd
        ),
    );
}

#[test]
fn criterion_6_overhead_model() {
    let mut spec = SyntheticSpec::new(20_000, 6);
    spec.sizes = SizeDist::Geometric(0.2);
    spec.gaps = GapDist::Exponential { mean_ns: 50 * NS_PER_MS };
    let trace = generate_trace(&spec).unwrap();
    let delays: Vec<u64> = [0, 1, 5, 10, 20, 50, 100].iter().map(|d| d * NS_PER_MS).collect();
    let curve = run_overhead_experiment(&trace, &delays, &SamplingConfig::all_flows(0)).unwrap();

    let mut ok = true;
    let mut tcp_at_100 = f64::NAN;
    let mut tcp_curve = Vec::new();
    for proto in Protocol::ALL {
        let pts: Vec<_> = curve.series(proto).collect();
        ok &= pts.len() == delays.len();
        ok &= pts[0].redundant_packets == 0 && pts[0].redundant_bytes == 0 && pts[0].redundant_byte_pct == 0.0;
        for w in pts.windows(2) {
            ok &= w[0].mean_redundant_packets <= w[1].mean_redundant_packets;
            ok &= w[0].redundant_byte_pct <= w[1].redundant_byte_pct;
        }
        if proto == Protocol::Tcp {
            tcp_at_100 = pts.last().unwrap().mean_redundant_packets;
            tcp_curve = pts.iter().map(|p| format!("{:.3}", p.mean_redundant_packets)).collect();
        }
    }
    ok &= (0.1..=10.0).contains(&tcp_at_100);
    verdict(
        6,
        "overhead model",
        ok,
        &format!(
            "TCP mean redundant packets over 0,1,5,10,20,50,100 ms: [{}]; 100 ms value {tcp_at_100:.3} (reference ~1.2, band 0.1-10)",
            tcp_curve.join(", ")
        ),
    );
}

/// Random traces with short timeouts so idle and hard expiry both occur.
fn pipeline_case() -> impl Strategy<Value = (SyntheticSpec, SamplingConfig, ControllerConfig)> {
    let spec = (1u64..120, any::<u64>(), 1u64..20, prop_oneof![Just(0.2), Just(0.5), Just(1.0)], 0.0..=1.0f64)
        .prop_map(|(flows, seed, gap_ms, p, tcp)| {
            let mut s = SyntheticSpec::new(flows, seed);
            s.sizes = SizeDist::Geometric(p);
            s.gaps = GapDist::Exponential { mean_ns: gap_ms * NS_PER_MS };
            s.duration_ns = 200 * NS_PER_MS;
            s.tcp_fraction = tcp;
            s
        });
    let sampling = (0usize..5, 0u32..4, any::<u64>()).prop_map(|(kind, k, seed)| match kind {
        0 => SamplingConfig::ip_suffix(Mode::SourceOnly, k, 0, seed),
        1 => SamplingConfig::ip_suffix(Mode::Pair, k, k / 2, seed),
        2 => SamplingConfig::ports(Mode::SourceOnly, 65535 >> k, 0, seed),
        3 => SamplingConfig::ports(Mode::Pair, 65535 >> k, 40000, seed),
        _ => SamplingConfig::hash(1, k, seed),
    });
    let controller = (0u64..30, 1u64..40, prop_oneof![Just(0u64), 40u64..100]).prop_map(|(d, idle, hard)| {
        ControllerConfig {
            install_delay_ns: d * NS_PER_MS,
            idle_timeout_ns: idle * NS_PER_MS,
            hard_timeout_ns: hard * NS_PER_MS,
        }
    });
    (spec, sampling, controller)
}

fn merged_by_key(records: &[FlowRecord]) -> HashMap<FlowKey, (u64, u64)> {
    let mut m: HashMap<FlowKey, (u64, u64)> = HashMap::new();
    for r in records {
        let e = m.entry(r.key).or_default();
        e.0 += r.packet_count;
        e.1 += r.byte_count;
    }
    m
}

fn check_pipeline(spec: &SyntheticSpec, sampling: &SamplingConfig, controller: ControllerConfig) -> Result<(), TestCaseError> {
    let trace = generate_trace(spec).unwrap();
    let rules = sampling.generate().unwrap();
    let mut sim = Simulation::new(rules.clone(), controller).unwrap();
    for p in &trace {
        let o = sim.feed(p).map_err(|e| TestCaseError::fail(e.to_string()))?;
        // transparency
        prop_assert_eq!(o.forwarded, 1);
    }
    let fwd = sim.switch().forward_counters();
    prop_assert_eq!(fwd.packet_count, trace.len() as u64);
    prop_assert_eq!(fwd.byte_count, trace.iter().map(|p| u64::from(p.length_bytes)).sum::<u64>());
    let out = sim.finish().map_err(|e| TestCaseError::fail(e.to_string()))?;

    let sizes = flow_sizes(&trace);
    let merged = merged_by_key(&out.records);
    for r in &out.records {
        // accounting identity: entry count + controller-seen = merged total
        prop_assert_eq!(r.switch_packets() + r.controller_packet_count, r.packet_count);
        prop_assert!(r.controller_packet_count >= 1);
        prop_assert!(r.first_seen_ns <= r.last_seen_ns);
    }
    // counter conservation and flow coherence: a monitored flow is
    // accounted for completely, an unmonitored one not at all
    for (key, (pkts, bytes)) in &merged {
        prop_assert_eq!(sizes.get(key), Some(&(*pkts, *bytes)));
    }
    let controller_seen: u64 = out.records.iter().map(|r| r.controller_packet_count).sum();
    prop_assert_eq!(controller_seen, out.summary.packet_ins);
    // records of one key do not overlap in time
    let mut by_key: HashMap<FlowKey, Vec<&FlowRecord>> = HashMap::new();
    for r in &out.records {
        by_key.entry(r.key).or_default().push(r);
    }
    for recs in by_key.values_mut() {
        recs.sort_by_key(|r| r.first_seen_ns);
        for w in recs.windows(2) {
            prop_assert!(w[0].last_seen_ns < w[1].first_seen_ns);
        }
    }
    // the sampled set is exactly the set of keys the rules select
    let selected: BTreeSet<FlowKey> = sizes
        .keys()
        .filter(|k| rule_selects(&rules, k))
        .copied()
        .collect();
    let sampled: BTreeSet<FlowKey> = merged.keys().copied().collect();
    prop_assert_eq!(selected, sampled);
    Ok(())
}

/// Brute-force evaluation of a rule set for one key.
fn rule_selects(rules: &ofmon_core::RuleSet, key: &FlowKey) -> bool {
    let probe = PacketRecord {
        timestamp_ns: 0,
        src_ip: key.src_ip,
        dst_ip: key.dst_ip,
        src_port: key.src_port,
        dst_port: key.dst_port,
        protocol: key.protocol,
        length_bytes: 0,
    };
    rules.flow_entries.iter().any(|e| {
        e.match_fields.matches(&probe)
            && e.actions.iter().any(|a| match a {
                Action::OutputToController => true,
                Action::Group(g) => {
                    let group = rules.groups.iter().find(|x| x.group_id == *g).unwrap();
                    group.buckets[select_bucket(group, key, group.hash_basis)]
                        .actions
                        .contains(&Action::OutputToController)
                }
                _ => false,
            })
    })
}

fn check_priority(entries: &[(MatchFields, u16)], packets: &[(u32, u32, u16, u16, bool)]) -> Result<(), TestCaseError> {
    let mut sw = Switch::with_default_entry();
    let mut installed: Vec<(EntryId, MatchFields, u16)> = Vec::new();
    for (m, prio) in entries {
        let id = sw.install_flow_entry(FlowEntry::new(m.clone(), *prio, vec![Action::GotoTable(1)]), 0);
        installed.retain(|(i, _, _)| *i != id);
        installed.push((id, m.clone(), *prio));
    }
    for (i, &(s, d, sp, dp, tcp)) in packets.iter().enumerate() {
        let p = PacketRecord {
            timestamp_ns: i as u64,
            src_ip: s,
            dst_ip: d,
            src_port: sp,
            dst_port: dp,
            protocol: if tcp { Protocol::Tcp } else { Protocol::Udp },
            length_bytes: 64,
        };
        let best = installed
            .iter()
            .filter(|(_, m, _)| m.matches(&p))
            .map(|(_, _, prio)| *prio)
            .max()
            .unwrap_or(priority::DEFAULT);
        let (o, _) = sw.process_packet(&p).unwrap();
        prop_assert_eq!(sw.entry(o.entry_id).unwrap().priority, best);
        prop_assert_eq!(o.forwarded, 1);
    }
    Ok(())
}

/// One exact entry, packets of its flow at the given offsets; the oracle
/// tracks the last match and predicts each expiry instant.
fn check_eviction(idle_ns: u64, hard_ns: u64, offsets: &[u64]) -> Result<(), TestCaseError> {
    let key = FlowKey {
        src_ip: 1,
        dst_ip: 2,
        src_port: 3,
        dst_port: 4,
        protocol: Protocol::Udp,
    };
    let install = 1_000;
    let mut sw = Switch::with_default_entry();
    let entry = FlowEntry::new(MatchFields::exact(&key), priority::FLOW_RECORD, vec![Action::GotoTable(1)])
        .idle_timeout(idle_ns)
        .hard_timeout(hard_ns)
        .notify_removal();
    let id = sw.install_flow_entry(entry, install);

    let expiry = |last: u64| -> (u64, RemovalReason) {
        let idle = (idle_ns > 0).then_some(last + idle_ns);
        let hard = (hard_ns > 0).then_some(install + hard_ns);
        match (idle, hard) {
            (Some(i), Some(h)) if i < h => (i, RemovalReason::Idle),
            (_, Some(h)) => (h, RemovalReason::Hard),
            (Some(i), None) => (i, RemovalReason::Idle),
            (None, None) => (u64::MAX, RemovalReason::Delete),
        }
    };
    let mut last = install;
    let mut alive = true;
    let mut expected: Option<(u64, RemovalReason, u64)> = None;
    let mut matched = 0;
    let mut events = Vec::new();
    let mut t = install;
    for off in offsets {
        t += off;
        let p = PacketRecord {
            timestamp_ns: t,
            src_ip: 1,
            dst_ip: 2,
            src_port: 3,
            dst_port: 4,
            protocol: Protocol::Udp,
            length_bytes: 10,
        };
        if alive {
            let (at, reason) = expiry(last);
            if at < t {
                alive = false;
                expected = Some((at, reason, matched));
            }
        }
        let (o, ev) = sw.process_packet(&p).unwrap();
        events.extend(ev);
        prop_assert_eq!(o.entry_id == id, alive);
        if alive {
            last = t;
            matched += 1;
        }
    }
    if alive && (idle_ns > 0 || hard_ns > 0) {
        let (at, reason) = expiry(last);
        expected = Some((at, reason, matched));
    }
    events.extend(sw.advance_clock(u64::MAX / 2).unwrap());
    let removed: Vec<(u64, RemovalReason, u64)> = events
        .iter()
        .filter_map(|e| match e {
            SwitchEvent::FlowRemoved {
                entry_id,
                entry,
                reason,
                removal_time_ns,
            } if *entry_id == id => Some((*removal_time_ns, *reason, entry.packet_count)),
            _ => None,
        })
        .collect();
    prop_assert_eq!(removed, expected.into_iter().collect::<Vec<_>>());
    Ok(())
}

fn match_strategy() -> impl Strategy<Value = (MatchFields, u16)> {
    (
        prop::option::of((0u32..8, 0u32..8)),
        prop::option::of((0u32..8, 0u32..8)),
        prop::option::of(0u16..4),
        prop::option::of(0u16..4),
        prop::option::of(any::<bool>()),
        prop_oneof![Just(priority::SAMPLING), Just(priority::FLOW_RECORD), 1u16..5],
    )
        .prop_map(|(s, d, sp, dp, proto, prio)| {
            let mut m = MatchFields::any();
            if let Some((v, bits)) = s {
                m = m.with_src_ip(IpMatch::suffix(v, bits.min(3)));
            }
            if let Some((v, bits)) = d {
                m = m.with_dst_ip(IpMatch::suffix(v, bits.min(3)));
            }
            if let Some(p) = sp {
                m = m.with_src_port(p);
            }
            if let Some(p) = dp {
                m = m.with_dst_port(p);
            }
            if let Some(tcp) = proto {
                m = m.with_protocol(if tcp { Protocol::Tcp } else { Protocol::Udp });
            }
            (m, prio)
        })
}

#[test]
fn criterion_7_pipeline_semantics() {
    let config = |cases| Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let pipeline = TestRunner::new(config(300)).run(&pipeline_case(), |(spec, sampling, controller)| {
        check_pipeline(&spec, &sampling, controller)
    });
    let packet = (0u32..8, 0u32..8, 0u16..4, 0u16..4, any::<bool>());
    let prio = TestRunner::new(config(300)).run(
        &(prop::collection::vec(match_strategy(), 0..12), prop::collection::vec(packet, 1..40)),
        |(entries, packets)| check_priority(&entries, &packets),
    );
    let evict = TestRunner::new(config(500)).run(
        &(0u64..50, prop_oneof![Just(0u64), 1u64..200], prop::collection::vec(0u64..80, 0..20)),
        |(idle, hard, offsets)| check_eviction(idle, hard, &offsets),
    );
    let results = [
        ("pipeline", pipeline.map_err(|e| e.to_string())),
        ("priority", prio.map_err(|e| e.to_string())),
        ("eviction", evict.map_err(|e| e.to_string())),
    ];
    let ok = results.iter().all(|(_, r)| r.is_ok());
    let detail = results
        .iter()
        .map(|(n, r)| match r {
            Ok(()) => format!("{n} ok"),
            Err(e) => format!("{n} FAILED {e}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        7,
        "pipeline semantics",
        ok,
        &format!("{detail} (300 random traces: transparency, conservation, accounting identity, coherence; 300 priority cases; 500 eviction cases)"),
    );
}

#[test]
fn criterion_8_oracle_equivalence() {
    let mut ok = true;
    let mut sizes = Vec::new();
    for (seed, (p, q)) in [(1u64, (1u128, 4u128)), (2, (1, 16)), (3, (1, 64)), (4, (3, 10))] {
        let trace = uniform_trace(10_000, seed);
        let rules = SamplingConfig::for_rate(Method::HashBased, Mode::SourceOnly, Rate::new(p, q), seed * 31)
            .unwrap()
            .generate()
            .unwrap();
        let out = ofmon_core::replay(&trace, &rules, ControllerConfig::default()).unwrap();
        let pipeline: BTreeSet<FlowKey> = out.records.iter().map(|r| r.key).collect();
        let group = &rules.groups[0];
        let sample_bucket = group
            .buckets
            .iter()
            .position(|b| b.actions.contains(&Action::OutputToController))
            .unwrap();
        let keys: BTreeSet<FlowKey> = trace.iter().map(PacketRecord::flow_key).collect();
        let oracle: BTreeSet<FlowKey> = keys
            .into_iter()
            .filter(|k| select_bucket(group, k, group.hash_basis) == sample_bucket)
            .collect();
        ok &= pipeline == oracle;
        sizes.push(format!("{p}/{q}: {}", pipeline.len()));
    }
    verdict(
        8,
        "oracle equivalence",
        ok,
        &format!("pipeline and select_bucket sets identical on 10^4-flow traces ({})", sizes.join(", ")),
    );
}

#[test]
fn criterion_9_campaign_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = r#"
seed = 99
trials = 4
experiments = ["rate", "wmrd", "overhead", "export"]
[trace.synthetic]
flows = 5000
sizes = "geometric:0.3"
ips = "zipf:1.1"
seed = 4
[[sampling]]
method = "ip"
modes = ["source", "pair"]
rates = ["1/16", "1/64"]
[[sampling]]
method = "port"
modes = ["source", "pair"]
rates = ["1/32"]
[[sampling]]
method = "hash"
rates = ["1/16", "1/64"]
[overhead]
delays = ["0ms", "1ms", "20ms", "100ms"]
"#;
    let run = |sub: &str, workers: usize| {
        let mut cfg = CampaignConfig::parse(config_text, dir.path()).unwrap();
        cfg.output_dir = dir.path().join(sub);
        run_campaign(&cfg, workers, &mut |_| {}).unwrap();
        let mut files = std::collections::BTreeMap::new();
        for entry in walk(&cfg.output_dir) {
            let rel = entry.strip_prefix(&cfg.output_dir).unwrap().to_owned();
            files.insert(rel, std::fs::read(&entry).unwrap());
        }
        files
    };
    let a = run("a", 1);
    let b = run("b", 1);
    let c = run("c", 3);
    let ok = !a.is_empty() && a == b && a == c;
    verdict(
        9,
        "campaign determinism",
        ok,
        &format!("{} output files byte-identical across two runs and across 1 vs 3 workers", a.len()),
    );
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
