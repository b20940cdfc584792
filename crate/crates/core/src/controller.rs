// SPDX-License-Identifier: Apache-2.0

//! Monitoring application running on the controller.
//!
//! A `PacketIn` from table 0 for a flow without a record entry schedules a
//! flow-mod installing an exact 5-tuple entry. Until that entry is active,
//! further packets of the flow keep arriving at the controller; they are
//! counted as redundant and merged into the record when the switch pushes
//! the entry's counters back with `FlowRemoved`.

use alloc::vec;
use alloc::vec::Vec;

use crate::switch::{priority, Action, EntryId, FlowEntry, MatchFields, RemovalReason, FORWARD_TABLE, MONITOR_TABLE};
use crate::types::{ExpiryReason, FlowKey, FlowRecord, PacketRecord};
use crate::FxHashMap;

pub const NS_PER_MS: u64 = 1_000_000;
pub const NS_PER_S: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerConfig {
    /// Time from the first `PacketIn` of a flow until its entry is active in
    /// the switch (control-channel RTT plus controller processing).
    pub install_delay_ns: u64,
    pub idle_timeout_ns: u64,
    /// Zero disables the hard timeout.
    pub hard_timeout_ns: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            install_delay_ns: 0,
            idle_timeout_ns: 15 * NS_PER_S,
            hard_timeout_ns: 0,
        }
    }
}

impl ControllerConfig {
    pub fn with_delay(mut self, install_delay_ns: u64) -> Self {
        self.install_delay_ns = install_delay_ns;
        self
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.idle_timeout_ns == 0 {
            return Err(ControllerError::InvalidConfig("idle timeout must be positive"));
        }
        if self.hard_timeout_ns != 0 && self.hard_timeout_ns < self.idle_timeout_ns {
            return Err(ControllerError::InvalidConfig(
                "hard timeout must not be shorter than the idle timeout",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControllerError {
    #[error("packet-in for {0} while its record entry is active")]
    PacketInForActiveFlow(FlowKey),
    #[error("flow-removed for entry {0:?} that this controller did not install")]
    UnknownEntry(EntryId),
    #[error("install confirmation for {0} without a pending flow-mod")]
    NotPending(FlowKey),
    #[error("invalid controller config: {0}")]
    InvalidConfig(&'static str),
}

/// Controller-side state of a flow between its first `PacketIn` and the
/// removal of its record entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingInstall {
    pub key: FlowKey,
    pub first_packet_ns: u64,
    pub first_packet_bytes: u64,
    pub last_packet_ns: u64,
    pub redundant_packets: u64,
    pub redundant_bytes: u64,
}

/// Flow-mod to apply to the switch at `execute_at_ns`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowMod {
    pub execute_at_ns: u64,
    pub key: FlowKey,
    pub entry: FlowEntry,
}

#[derive(Debug, Clone)]
enum FlowState {
    Pending(PendingInstall),
    Active(EntryId, PendingInstall),
}

/// Receives completed flow records.
pub trait RecordSink {
    type Error;

    fn write_record(&mut self, record: &FlowRecord) -> Result<(), Self::Error>;
}

impl RecordSink for Vec<FlowRecord> {
    type Error = core::convert::Infallible;

    fn write_record(&mut self, record: &FlowRecord) -> Result<(), Self::Error> {
        self.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ControllerStats {
    pub packet_ins: u64,
    pub ignored_packet_ins: u64,
    pub flow_mods: u64,
    pub flow_removed: u64,
}

#[derive(Debug, Default)]
pub struct Controller {
    config: ControllerConfig,
    flows: FxHashMap<FlowKey, FlowState>,
    by_entry: FxHashMap<EntryId, FlowKey>,
    completed: Vec<FlowRecord>,
    stats: ControllerStats,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Result<Self, ControllerError> {
        config.validate()?;
        Ok(Controller {
            config,
            ..Default::default()
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn stats(&self) -> ControllerStats {
        self.stats
    }

    pub fn pending(&self, key: &FlowKey) -> Option<&PendingInstall> {
        match self.flows.get(key)? {
            FlowState::Pending(p) => Some(p),
            FlowState::Active(..) => None,
        }
    }

    pub fn is_active(&self, key: &FlowKey) -> bool {
        matches!(self.flows.get(key), Some(FlowState::Active(..)))
    }

    /// Flows awaiting or holding a record entry.
    pub fn tracked_flows(&self) -> usize {
        self.flows.len()
    }

    /// Handles a `PacketIn`. Returns the flow-mod to schedule for the first
    /// packet of a flow, `None` otherwise. Packets from tables other than the
    /// monitoring table belong to other applications and are ignored.
    pub fn on_packet_in(
        &mut self,
        packet: &PacketRecord,
        table_id: u8,
    ) -> Result<Option<FlowMod>, ControllerError> {
        if table_id != MONITOR_TABLE {
            self.stats.ignored_packet_ins += 1;
            return Ok(None);
        }
        self.stats.packet_ins += 1;
        let key = packet.flow_key();
        match self.flows.get_mut(&key) {
            Some(FlowState::Pending(p)) => {
                p.redundant_packets += 1;
                p.redundant_bytes += u64::from(packet.length_bytes);
                p.last_packet_ns = packet.timestamp_ns;
                Ok(None)
            }
            Some(FlowState::Active(..)) => Err(ControllerError::PacketInForActiveFlow(key)),
            None => {
                self.flows.insert(
                    key,
                    FlowState::Pending(PendingInstall {
                        key,
                        first_packet_ns: packet.timestamp_ns,
                        first_packet_bytes: u64::from(packet.length_bytes),
                        last_packet_ns: packet.timestamp_ns,
                        redundant_packets: 0,
                        redundant_bytes: 0,
                    }),
                );
                self.stats.flow_mods += 1;
                let mut entry = FlowEntry::new(
                    MatchFields::exact(&key),
                    priority::FLOW_RECORD,
                    vec![Action::GotoTable(FORWARD_TABLE)],
                )
                .idle_timeout(self.config.idle_timeout_ns)
                .hard_timeout(self.config.hard_timeout_ns)
                .notify_removal();
                entry.install_time_ns = packet.timestamp_ns + self.config.install_delay_ns;
                Ok(Some(FlowMod {
                    execute_at_ns: entry.install_time_ns,
                    key,
                    entry,
                }))
            }
        }
    }

    /// Confirms that the flow-mod for `key` is now active as `entry_id`.
    pub fn on_installed(&mut self, key: FlowKey, entry_id: EntryId) -> Result<(), ControllerError> {
        let state = self
            .flows
            .get_mut(&key)
            .ok_or(ControllerError::NotPending(key))?;
        let FlowState::Pending(p) = state else {
            return Err(ControllerError::NotPending(key));
        };
        *state = FlowState::Active(entry_id, p.clone());
        self.by_entry.insert(entry_id, key);
        Ok(())
    }

    /// Turns a `FlowRemoved` for one of our entries into a flow record.
    pub fn on_flow_removed(
        &mut self,
        entry_id: EntryId,
        entry: &FlowEntry,
        reason: RemovalReason,
    ) -> Result<FlowRecord, ControllerError> {
        let key = self
            .by_entry
            .remove(&entry_id)
            .ok_or(ControllerError::UnknownEntry(entry_id))?;
        let p = match self.flows.remove(&key) {
            Some(FlowState::Active(id, p)) if id == entry_id => p,
            _ => return Err(ControllerError::UnknownEntry(entry_id)),
        };
        self.stats.flow_removed += 1;
        let controller_packets = 1 + p.redundant_packets;
        let controller_bytes = p.first_packet_bytes + p.redundant_bytes;
        let last_seen_ns = if entry.packet_count > 0 {
            entry.last_match_time_ns.max(p.last_packet_ns)
        } else {
            p.last_packet_ns
        };
        let record = FlowRecord {
            key,
            first_seen_ns: p.first_packet_ns,
            last_seen_ns,
            packet_count: entry.packet_count + controller_packets,
            byte_count: entry.byte_count + controller_bytes,
            controller_packet_count: controller_packets,
            controller_byte_count: controller_bytes,
            redundant_byte_count: p.redundant_bytes,
            expiry_reason: match reason {
                RemovalReason::Idle => ExpiryReason::IdleTimeout,
                RemovalReason::Hard => ExpiryReason::HardTimeout,
                RemovalReason::Delete => ExpiryReason::EndOfTrace,
            },
        };
        self.completed.push(record.clone());
        Ok(record)
    }

    /// Records completed so far, in completion order.
    pub fn completed(&self) -> &[FlowRecord] {
        &self.completed
    }

    /// Completed records sorted by first-seen time, ties by flow key.
    pub fn sorted_records(&self) -> Vec<FlowRecord> {
        let mut records = self.completed.clone();
        sort_records(&mut records);
        records
    }

    pub fn into_sorted_records(mut self) -> Vec<FlowRecord> {
        sort_records(&mut self.completed);
        self.completed
    }

    /// Writes all completed records to `sink` in export order.
    pub fn export_records<S: RecordSink>(&self, sink: &mut S) -> Result<usize, S::Error> {
        let records = self.sorted_records();
        for r in &records {
            sink.write_record(r)?;
        }
        Ok(records.len())
    }
}

pub fn sort_records(records: &mut [FlowRecord]) {
    records.sort_by(|a, b| (a.first_seen_ns, a.key).cmp(&(b.first_seen_ns, b.key)));
}
