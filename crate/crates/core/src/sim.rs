// SPDX-License-Identifier: Apache-2.0

//! Trace-driven simulation loop tying the switch and the controller
//! together in virtual time.
//!
//! Flow-mods are applied at exactly `first packet + install delay`. When a
//! flow-mod and a packet share an instant the flow-mod goes first.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::mem;

use crate::controller::{Controller, ControllerConfig, ControllerError, ControllerStats, FlowMod};
use crate::hash::derive_seed;
use crate::sampling::{Rate, RuleSet, SamplingError};
use crate::switch::{EntryId, PacketOutcome, Switch, SwitchError, SwitchEvent};
use crate::types::{FlowRecord, PacketRecord};
use crate::FxHashSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("packet at {timestamp_ns} ns arrives before previous packet at {previous_ns} ns")]
    OutOfOrder { previous_ns: u64, timestamp_ns: u64 },
    #[error("packet at {timestamp_ns} ns reached the forwarding table {forwarded} times")]
    Transparency { timestamp_ns: u64, forwarded: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub controller: ControllerConfig,
    /// Replace the sampling rules with a fresh random draw this often.
    pub rotation_interval_ns: Option<u64>,
}

impl From<ControllerConfig> for SimOptions {
    fn from(controller: ControllerConfig) -> Self {
        SimOptions {
            controller,
            rotation_interval_ns: None,
        }
    }
}

/// Totals for one replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub packets: u64,
    pub bytes: u64,
    pub forwarded_packets: u64,
    pub records: usize,
    pub flows_sampled: usize,
    pub flow_mods: u64,
    pub packet_ins: u64,
    pub peak_flow_record_entries: usize,
    pub sampling_entries: usize,
    pub theoretical_rate: Rate,
    pub rotations: u64,
    pub end_time_ns: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Records in export order.
    pub records: Vec<FlowRecord>,
    pub summary: RunSummary,
    pub controller: ControllerStats,
}

#[derive(Debug)]
pub struct Simulation {
    switch: Switch,
    controller: Controller,
    rules: RuleSet,
    sampling_entries: Vec<EntryId>,
    scheduled: VecDeque<FlowMod>,
    events: Vec<SwitchEvent>,
    rotation_interval_ns: Option<u64>,
    next_rotation_ns: u64,
    rotations: u64,
    last_ts: Option<u64>,
    packets: u64,
    bytes: u64,
}

impl Simulation {
    pub fn new(rules: RuleSet, options: impl Into<SimOptions>) -> Result<Self, SimError> {
        let options = options.into();
        let controller = Controller::new(options.controller)?;
        let mut sim = Simulation {
            switch: Switch::with_default_entry(),
            controller,
            rules,
            sampling_entries: Vec::new(),
            scheduled: VecDeque::new(),
            events: Vec::new(),
            rotation_interval_ns: options.rotation_interval_ns.filter(|&i| i > 0),
            next_rotation_ns: options.rotation_interval_ns.unwrap_or(0),
            rotations: 0,
            last_ts: None,
            packets: 0,
            bytes: 0,
        };
        sim.install_rules(0)?;
        Ok(sim)
    }

    pub fn switch(&self) -> &Switch {
        &self.switch
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    /// Feeds one packet. Timestamps must be non-decreasing.
    pub fn feed(&mut self, packet: &PacketRecord) -> Result<PacketOutcome, SimError> {
        let ts = packet.timestamp_ns;
        if let Some(prev) = self.last_ts {
            if ts < prev {
                return Err(SimError::OutOfOrder {
                    previous_ns: prev,
                    timestamp_ns: ts,
                });
            }
        }
        self.last_ts = Some(ts);
        self.apply_due(ts)?;
        self.rotate_due(ts)?;

        let mut events = mem::take(&mut self.events);
        let outcome = self.switch.process_packet_into(packet, &mut events);
        let handled = outcome
            .as_ref()
            .map_err(|e| SimError::from(e.clone()))
            .and_then(|_| self.dispatch(&events));
        events.clear();
        self.events = events;
        let outcome = outcome?;
        handled?;

        if outcome.forwarded != 1 {
            return Err(SimError::Transparency {
                timestamp_ns: ts,
                forwarded: outcome.forwarded,
            });
        }
        self.packets += 1;
        self.bytes += u64::from(packet.length_bytes);
        Ok(outcome)
    }

    /// Applies outstanding flow-mods, drains every per-flow entry and returns
    /// the exported records.
    pub fn finish(mut self) -> Result<SimOutput, SimError> {
        while let Some(fm) = self.scheduled.pop_front() {
            self.apply(fm)?;
        }
        let end = self.switch.clock_ns().max(self.last_ts.unwrap_or(0));
        let events = self.switch.flush_all(end)?;
        self.dispatch(&events)?;

        let forwarded = self.switch.forward_counters().packet_count;
        let stats = self.controller.stats();
        let peak = self.switch.peak_flow_record_entries();
        let records = self.controller.into_sorted_records();
        let flows_sampled = records
            .iter()
            .map(|r| r.key)
            .collect::<FxHashSet<_>>()
            .len();
        let summary = RunSummary {
            packets: self.packets,
            bytes: self.bytes,
            forwarded_packets: forwarded,
            records: records.len(),
            flows_sampled,
            flow_mods: stats.flow_mods,
            packet_ins: stats.packet_ins,
            peak_flow_record_entries: peak,
            sampling_entries: self.rules.entry_count(),
            theoretical_rate: self.rules.theoretical_rate,
            rotations: self.rotations,
            end_time_ns: end,
        };
        Ok(SimOutput {
            records,
            summary,
            controller: stats,
        })
    }

    fn apply_due(&mut self, now: u64) -> Result<(), SimError> {
        while self.scheduled.front().is_some_and(|fm| fm.execute_at_ns <= now) {
            let fm = self.scheduled.pop_front().expect("front checked");
            self.apply(fm)?;
        }
        Ok(())
    }

    fn apply(&mut self, fm: FlowMod) -> Result<(), SimError> {
        let events = self.switch.advance_clock(fm.execute_at_ns)?;
        self.dispatch(&events)?;
        let id = self.switch.install_flow_entry(fm.entry, fm.execute_at_ns);
        self.controller.on_installed(fm.key, id)?;
        Ok(())
    }

    fn dispatch(&mut self, events: &[SwitchEvent]) -> Result<(), SimError> {
        for ev in events {
            match ev {
                SwitchEvent::PacketIn { packet, table_id } => {
                    if let Some(fm) = self.controller.on_packet_in(packet, *table_id)? {
                        debug_assert!(self
                            .scheduled
                            .back()
                            .is_none_or(|b| b.execute_at_ns <= fm.execute_at_ns));
                        self.scheduled.push_back(fm);
                    }
                }
                SwitchEvent::FlowRemoved {
                    entry_id,
                    entry,
                    reason,
                    ..
                } => {
                    self.controller.on_flow_removed(*entry_id, entry, *reason)?;
                }
            }
        }
        Ok(())
    }

    fn install_rules(&mut self, at: u64) -> Result<(), SimError> {
        for group in &self.rules.groups {
            self.switch.install_group(group.clone())?;
        }
        self.sampling_entries = self
            .rules
            .flow_entries
            .iter()
            .map(|e| self.switch.install_flow_entry(e.clone(), at))
            .collect();
        Ok(())
    }

    fn rotate_due(&mut self, now: u64) -> Result<(), SimError> {
        let Some(interval) = self.rotation_interval_ns else {
            return Ok(());
        };
        while self.next_rotation_ns <= now {
            let at = self.next_rotation_ns;
            let events = self.switch.advance_clock(at)?;
            self.dispatch(&events)?;
            for id in mem::take(&mut self.sampling_entries) {
                let _ = self.switch.delete_entry(id, at);
            }
            for group in &self.rules.groups {
                self.switch.remove_group(group.group_id);
            }
            self.rotations += 1;
            let cfg = self
                .rules
                .config
                .reseeded(derive_seed(self.rules.config.seed, self.rotations));
            self.rules = cfg.generate()?;
            self.install_rules(at)?;
            self.next_rotation_ns = at + interval;
        }
        Ok(())
    }
}

/// Replays a whole trace through a fresh switch and controller.
pub fn replay(
    trace: &[PacketRecord],
    rules: &RuleSet,
    options: impl Into<SimOptions>,
) -> Result<SimOutput, SimError> {
    let mut sim = Simulation::new(rules.clone(), options)?;
    for p in trace {
        sim.feed(p)?;
    }
    sim.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::NS_PER_MS;
    use crate::sampling::{Mode, SamplingConfig};
    use crate::types::{ExpiryReason, Protocol};
    use alloc::vec;

    fn pkt(ts: u64, sport: u16, len: u32) -> PacketRecord {
        PacketRecord {
            timestamp_ns: ts,
            src_ip: 0x0a00_0001,
            dst_ip: 0x0a00_0002,
            src_port: sport,
            dst_port: 443,
            protocol: Protocol::Tcp,
            length_bytes: len,
        }
    }

    fn all_flows() -> RuleSet {
        SamplingConfig::all_flows(1).generate().unwrap()
    }

    #[test]
    fn ten_packet_flow_accounting() {
        // packets every 10 ms, install after 25 ms: t=0 first, t=10,20 redundant
        let trace: Vec<_> = (0..10).map(|i| pkt(i * 10 * NS_PER_MS, 1, 100)).collect();
        let cfg = ControllerConfig::default().with_delay(25 * NS_PER_MS);
        let out = replay(&trace, &all_flows(), cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.redundant_packets(), 2);
        assert_eq!(r.controller_packet_count, 3);
        assert_eq!(r.switch_packets(), 7);
        assert_eq!(r.packet_count, 10);
        assert_eq!(r.byte_count, 1000);
        assert_eq!(r.redundant_byte_count, 200);
        assert_eq!((r.first_seen_ns, r.last_seen_ns), (0, 90 * NS_PER_MS));
        assert_eq!(r.expiry_reason, ExpiryReason::EndOfTrace);
    }

    #[test]
    fn flow_mod_applies_before_packet_at_same_instant() {
        let trace = vec![pkt(0, 1, 100), pkt(25 * NS_PER_MS, 1, 100)];
        let cfg = ControllerConfig::default().with_delay(25 * NS_PER_MS);
        let out = replay(&trace, &all_flows(), cfg).unwrap();
        assert_eq!(out.records[0].redundant_packets(), 0);
        assert_eq!(out.records[0].switch_packets(), 1);
    }

    #[test]
    fn zero_delay_means_no_redundancy() {
        let trace: Vec<_> = (0..5).map(|i| pkt(i, 1, 100)).collect();
        let out = replay(&trace, &all_flows(), ControllerConfig::default()).unwrap();
        assert_eq!(out.records[0].redundant_packets(), 0);
        assert_eq!(out.records[0].packet_count, 5);
    }

    #[test]
    fn single_packet_flow_expires_idle() {
        let s = 1_000_000_000;
        let trace = vec![pkt(0, 53, 70), pkt(20 * s, 9, 70)];
        let out = replay(&trace, &all_flows(), ControllerConfig::default()).unwrap();
        let dns = out.records.iter().find(|r| r.key.src_port == 53).unwrap();
        assert_eq!(dns.expiry_reason, ExpiryReason::IdleTimeout);
        assert_eq!(dns.switch_packets(), 0);
        assert_eq!(dns.packet_count, 1);
    }

    #[test]
    fn hard_timeout_splits_records() {
        let s = 1_000_000_000;
        let cfg = ControllerConfig {
            install_delay_ns: 0,
            idle_timeout_ns: 10 * s,
            hard_timeout_ns: 30 * s,
        };
        let trace: Vec<_> = (0..50).map(|i| pkt(i * s, 1, 100)).collect();
        let out = replay(&trace, &all_flows(), cfg).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].expiry_reason, ExpiryReason::HardTimeout);
        assert_eq!(out.records[0].packet_count, 31);
        assert!(out.records[0].last_seen_ns < out.records[1].first_seen_ns);
        assert_eq!(out.records[1].packet_count, 19);
        assert_eq!(out.summary.flows_sampled, 1);
    }

    #[test]
    fn out_of_order_trace_is_rejected() {
        let trace = vec![pkt(10, 1, 100), pkt(5, 1, 100)];
        assert!(matches!(
            replay(&trace, &all_flows(), ControllerConfig::default()),
            Err(SimError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn unsampled_flows_produce_nothing() {
        // suffix 4 bits on source; pick a config whose suffix differs from our IP.
        let rules = (0..)
            .map(|seed| SamplingConfig::ip_suffix(Mode::SourceOnly, 4, 0, seed).generate().unwrap())
            .find(|r| !r.flow_entries[0].match_fields.src_ip.unwrap().matches(0x0a00_0001))
            .unwrap();
        let trace: Vec<_> = (0..10).map(|i| pkt(i, 1, 100)).collect();
        let out = replay(&trace, &rules, ControllerConfig::default()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary.packet_ins, 0);
        assert_eq!(out.summary.forwarded_packets, 10);
    }

    #[test]
    fn rotation_redraws_rules() {
        let rules = SamplingConfig::ip_suffix(Mode::SourceOnly, 8, 0, 3).generate().unwrap();
        let options = SimOptions {
            controller: ControllerConfig::default(),
            rotation_interval_ns: Some(100),
        };
        let mut sim = Simulation::new(rules.clone(), options).unwrap();
        for t in [0, 50, 150, 420] {
            sim.feed(&pkt(t, 1, 100)).unwrap();
        }
        assert_ne!(sim.rules().flow_entries, rules.flow_entries);
        assert_eq!(sim.switch().entries_at_priority(crate::switch::priority::SAMPLING).len(), 1);
        let out = sim.finish().unwrap();
        assert_eq!(out.summary.rotations, 4);
    }
}
