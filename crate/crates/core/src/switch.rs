// SPDX-License-Identifier: Apache-2.0

//! OpenFlow switch model: a monitoring table (0), a pass-through forwarding
//! table (1) and select groups.
//!
//! Table 0 lookups use tuple-space search: entries are bucketed by the shape
//! of their match (which fields are present and which IP mask bits are set),
//! and each bucket is a hash map keyed on the masked packet header. Entries
//! matching on port *sets* are kept in a short list and tested one by one.
//!
//! Timeouts are evaluated lazily against a min-heap of expiry instants.
//! Heap keys may be stale (an idle entry that matched again expires later
//! than its key), so a popped key is re-pushed at the entry's real expiry
//! until the two agree. This keeps eviction in expiry order and reports the
//! exact instant at which an entry timed out.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use crate::hash::{flow_hash, scale_to_range};
use crate::types::{PacketRecord, Protocol};
use crate::FxHashMap;

/// Monitoring table, where all table-0 entries live.
pub const MONITOR_TABLE: u8 = 0;
/// Forwarding stub. Every packet must reach it exactly once.
pub const FORWARD_TABLE: u8 = 1;

/// Priority bands of table 0.
pub mod priority {
    /// Per-flow record entries installed reactively by the controller.
    pub const FLOW_RECORD: u16 = 3000;
    /// Sampling rules.
    pub const SAMPLING: u16 = 2000;
    /// Catch-all pass entry.
    pub const DEFAULT: u16 = 0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SwitchError {
    #[error("no table-0 entry matched packet at {timestamp_ns} ns; default entry missing")]
    NoMatch { timestamp_ns: u64 },
    #[error("group {0} already installed")]
    DuplicateGroup(GroupId),
    #[error("group {0} is not installed")]
    UnknownGroup(GroupId),
    #[error("group {0} has no bucket with positive weight")]
    EmptyGroup(GroupId),
    #[error("goto-table {0} does not name an existing later table")]
    UnknownTable(u8),
    #[error("group {0} chains into another group")]
    NestedGroup(GroupId),
    #[error("clock moved backwards from {current_ns} ns to {requested_ns} ns")]
    ClockWentBackwards { current_ns: u64, requested_ns: u64 },
}

/// Value/mask pair on an IPv4 address. The value is stored pre-masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IpMatch {
    value: u32,
    mask: u32,
}

impl IpMatch {
    pub fn new(value: u32, mask: u32) -> Self {
        IpMatch { value: value & mask, mask }
    }

    pub fn exact(addr: u32) -> Self {
        IpMatch::new(addr, u32::MAX)
    }

    /// Matches addresses whose low `bits` bits equal those of `suffix`.
    pub fn suffix(suffix: u32, bits: u32) -> Self {
        IpMatch::new(suffix, suffix_mask(bits))
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    #[inline]
    pub fn matches(&self, addr: u32) -> bool {
        addr & self.mask == self.value
    }
}

/// Mask with the low `bits` bits set.
pub fn suffix_mask(bits: u32) -> u32 {
    match bits {
        0 => 0,
        32.. => u32::MAX,
        b => (1u32 << b) - 1,
    }
}

/// A set of 16-bit port numbers stored as a bitmap.
///
/// Used for the folded two-stage port check: one entry stands in for the
/// source-port table plus the destination-port table it chains to.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PortSet {
    bits: Arc<[u64; 1024]>,
    len: u32,
}

impl PortSet {
    pub fn from_ports<I: IntoIterator<Item = u16>>(ports: I) -> Self {
        let mut bits = [0u64; 1024];
        for p in ports {
            bits[usize::from(p >> 6)] |= 1 << (p & 63);
        }
        let len = bits.iter().map(|w| w.count_ones()).sum();
        PortSet { bits: Arc::new(bits), len }
    }

    #[inline]
    pub fn contains(&self, port: u16) -> bool {
        self.bits[usize::from(port >> 6)] & (1 << (port & 63)) != 0
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u16> + '_ {
        (0..=u16::MAX).filter(move |&p| self.contains(p))
    }
}

impl fmt::Debug for PortSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PortSet").field("len", &self.len).finish()
    }
}

/// Match part of a flow entry. Absent fields are wildcards.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MatchFields {
    pub src_ip: Option<IpMatch>,
    pub dst_ip: Option<IpMatch>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub protocol: Option<Protocol>,
    pub src_port_set: Option<PortSet>,
    pub dst_port_set: Option<PortSet>,
}

impl MatchFields {
    /// Matches every packet.
    pub fn any() -> Self {
        MatchFields::default()
    }

    /// Exact 5-tuple match.
    pub fn exact(key: &crate::types::FlowKey) -> Self {
        MatchFields {
            src_ip: Some(IpMatch::exact(key.src_ip)),
            dst_ip: Some(IpMatch::exact(key.dst_ip)),
            src_port: Some(key.src_port),
            dst_port: Some(key.dst_port),
            protocol: Some(key.protocol),
            ..Default::default()
        }
    }

    pub fn with_src_ip(mut self, m: IpMatch) -> Self {
        self.src_ip = Some(m);
        self
    }

    pub fn with_dst_ip(mut self, m: IpMatch) -> Self {
        self.dst_ip = Some(m);
        self
    }

    pub fn with_src_port(mut self, port: u16) -> Self {
        self.src_port = Some(port);
        self
    }

    pub fn with_dst_port(mut self, port: u16) -> Self {
        self.dst_port = Some(port);
        self
    }

    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = Some(protocol);
        self
    }

    pub fn with_src_port_set(mut self, ports: PortSet) -> Self {
        self.src_port_set = Some(ports);
        self
    }

    pub fn with_dst_port_set(mut self, ports: PortSet) -> Self {
        self.dst_port_set = Some(ports);
        self
    }

    pub fn matches(&self, p: &PacketRecord) -> bool {
        self.src_ip.is_none_or(|m| m.matches(p.src_ip))
            && self.dst_ip.is_none_or(|m| m.matches(p.dst_ip))
            && self.src_port.is_none_or(|v| v == p.src_port)
            && self.dst_port.is_none_or(|v| v == p.dst_port)
            && self.protocol.is_none_or(|v| v == p.protocol)
            && self.src_port_set.as_ref().is_none_or(|s| s.contains(p.src_port))
            && self.dst_port_set.as_ref().is_none_or(|s| s.contains(p.dst_port))
    }

    fn shape(&self) -> Option<Shape> {
        if self.src_port_set.is_some() || self.dst_port_set.is_some() {
            return None;
        }
        Some(Shape {
            src_mask: self.src_ip.map_or(0, |m| m.mask),
            dst_mask: self.dst_ip.map_or(0, |m| m.mask),
            src_port: self.src_port.is_some(),
            dst_port: self.dst_port.is_some(),
            protocol: self.protocol.is_some(),
        })
    }

    fn masked_key(&self) -> MaskedKey {
        MaskedKey {
            src: self.src_ip.map_or(0, |m| m.value),
            dst: self.dst_ip.map_or(0, |m| m.value),
            src_port: self.src_port.unwrap_or(0),
            dst_port: self.dst_port.unwrap_or(0),
            protocol: self.protocol.map_or(0, Protocol::number),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    GotoTable(u8),
    OutputToController,
    Group(GroupId),
    Drop,
}

/// A table-0 rule together with its counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowEntry {
    pub match_fields: MatchFields,
    pub priority: u16,
    pub actions: Vec<Action>,
    /// Zero disables the idle timeout.
    pub idle_timeout_ns: u64,
    /// Zero disables the hard timeout.
    pub hard_timeout_ns: u64,
    pub send_flow_removed: bool,
    pub install_time_ns: u64,
    pub last_match_time_ns: u64,
    pub packet_count: u64,
    pub byte_count: u64,
}

impl FlowEntry {
    pub fn new(match_fields: MatchFields, priority: u16, actions: Vec<Action>) -> Self {
        FlowEntry {
            match_fields,
            priority,
            actions,
            idle_timeout_ns: 0,
            hard_timeout_ns: 0,
            send_flow_removed: false,
            install_time_ns: 0,
            last_match_time_ns: 0,
            packet_count: 0,
            byte_count: 0,
        }
    }

    pub fn idle_timeout(mut self, ns: u64) -> Self {
        self.idle_timeout_ns = ns;
        self
    }

    pub fn hard_timeout(mut self, ns: u64) -> Self {
        self.hard_timeout_ns = ns;
        self
    }

    pub fn notify_removal(mut self) -> Self {
        self.send_flow_removed = true;
        self
    }

    /// Instant at which the entry times out and why. When both timeouts land
    /// on the same instant the hard timeout wins.
    pub fn expiry(&self) -> Option<(u64, RemovalReason)> {
        let idle = (self.idle_timeout_ns > 0)
            .then(|| self.last_match_time_ns.saturating_add(self.idle_timeout_ns));
        let hard = (self.hard_timeout_ns > 0)
            .then(|| self.install_time_ns.saturating_add(self.hard_timeout_ns));
        match (idle, hard) {
            (Some(i), Some(h)) if i < h => Some((i, RemovalReason::Idle)),
            (_, Some(h)) => Some((h, RemovalReason::Hard)),
            (Some(i), None) => Some((i, RemovalReason::Idle)),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub weight: u32,
    pub actions: Vec<Action>,
}

/// Select group: each packet takes exactly one bucket, chosen by a keyed
/// hash of its 5-tuple with `hash_basis` as the key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupEntry {
    pub group_id: GroupId,
    pub buckets: Vec<Bucket>,
    pub hash_basis: u64,
}

impl GroupEntry {
    pub fn total_weight(&self) -> u64 {
        self.buckets.iter().map(|b| u64::from(b.weight)).sum()
    }
}

/// Picks the bucket for `key`: the hash is scaled onto
/// `[0, total_weight)` and the bucket owning that sub-range wins.
pub fn select_bucket(group: &GroupEntry, key: &crate::types::FlowKey, seed: u64) -> usize {
    let total = group.total_weight();
    if group.buckets.len() <= 1 || total == 0 {
        return 0;
    }
    let mut point = scale_to_range(flow_hash(key, seed), total);
    for (i, b) in group.buckets.iter().enumerate() {
        let w = u64::from(b.weight);
        if point < w {
            return i;
        }
        point -= w;
    }
    unreachable!("point is below the total weight")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalReason {
    Idle,
    Hard,
    /// Explicit deletion, e.g. the end-of-trace drain.
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SwitchEvent {
    PacketIn {
        packet: PacketRecord,
        table_id: u8,
    },
    FlowRemoved {
        entry_id: EntryId,
        entry: FlowEntry,
        reason: RemovalReason,
        removal_time_ns: u64,
    },
}

/// What happened to one packet inside the switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketOutcome {
    /// Table-0 entry that matched.
    pub entry_id: EntryId,
    /// Times the packet was handed to the forwarding table.
    pub forwarded: u32,
    /// Copies sent to the controller.
    pub to_controller: u32,
}

/// Per-entry counters as returned by a statistics poll.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryStats {
    pub entry_id: EntryId,
    pub priority: u16,
    pub packet_count: u64,
    pub byte_count: u64,
    pub duration_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Shape {
    src_mask: u32,
    dst_mask: u32,
    src_port: bool,
    dst_port: bool,
    protocol: bool,
}

impl Shape {
    #[inline]
    fn key_of(&self, p: &PacketRecord) -> MaskedKey {
        MaskedKey {
            src: p.src_ip & self.src_mask,
            dst: p.dst_ip & self.dst_mask,
            src_port: if self.src_port { p.src_port } else { 0 },
            dst_port: if self.dst_port { p.dst_port } else { 0 },
            protocol: if self.protocol { p.protocol.number() } else { 0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct MaskedKey {
    src: u32,
    dst: u32,
    src_port: u16,
    dst_port: u16,
    protocol: u8,
}

#[derive(Debug)]
struct ShapeIndex {
    shape: Shape,
    max_priority: u16,
    slots: FxHashMap<MaskedKey, Vec<EntryId>>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ForwardCounters {
    pub packet_count: u64,
    pub byte_count: u64,
}

/// Simulated switch state. Single owner; driven in virtual time by packet
/// timestamps.
#[derive(Debug, Default)]
pub struct Switch {
    entries: FxHashMap<EntryId, FlowEntry>,
    shapes: Vec<ShapeIndex>,
    set_entries: Vec<EntryId>,
    expiry: BinaryHeap<Reverse<(u64, EntryId)>>,
    groups: BTreeMap<GroupId, GroupEntry>,
    clock_ns: u64,
    next_id: u64,
    forward: ForwardCounters,
    flow_record_entries: usize,
    peak_flow_record_entries: usize,
}

impl Switch {
    pub fn new() -> Self {
        Switch::default()
    }

    /// Switch with the default pass entry already installed at t = 0.
    pub fn with_default_entry() -> Self {
        let mut sw = Switch::new();
        sw.install_flow_entry(default_entry(), 0);
        sw
    }

    pub fn clock_ns(&self) -> u64 {
        self.clock_ns
    }

    pub fn entry(&self, id: EntryId) -> Option<&FlowEntry> {
        self.entries.get(&id)
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn group(&self, id: GroupId) -> Option<&GroupEntry> {
        self.groups.get(&id)
    }

    pub fn forward_counters(&self) -> ForwardCounters {
        self.forward
    }

    /// Number of per-flow record entries currently installed.
    pub fn flow_record_entries(&self) -> usize {
        self.flow_record_entries
    }

    pub fn peak_flow_record_entries(&self) -> usize {
        self.peak_flow_record_entries
    }

    /// Installs `entry`, active for packets at or after `install_time_ns`.
    ///
    /// An entry with the same match and priority as an installed one replaces
    /// it in place: the id is kept and the counters start over.
    pub fn install_flow_entry(&mut self, mut entry: FlowEntry, install_time_ns: u64) -> EntryId {
        entry.install_time_ns = install_time_ns;
        entry.last_match_time_ns = install_time_ns;
        entry.packet_count = 0;
        entry.byte_count = 0;
        let expiry = entry.expiry();

        let id = match self.find_duplicate(&entry) {
            Some(existing) => {
                self.entries.insert(existing, entry);
                existing
            }
            None => {
                let id = EntryId(self.next_id);
                self.next_id += 1;
                self.index_insert(id, &entry);
                if entry.priority == priority::FLOW_RECORD {
                    self.flow_record_entries += 1;
                    self.peak_flow_record_entries =
                        self.peak_flow_record_entries.max(self.flow_record_entries);
                }
                self.entries.insert(id, entry);
                id
            }
        };
        if let Some((at, _)) = expiry {
            self.expiry.push(Reverse((at, id)));
        }
        id
    }

    pub fn install_group(&mut self, group: GroupEntry) -> Result<GroupId, SwitchError> {
        let id = group.group_id;
        if self.groups.contains_key(&id) {
            return Err(SwitchError::DuplicateGroup(id));
        }
        if group.total_weight() == 0 {
            return Err(SwitchError::EmptyGroup(id));
        }
        self.groups.insert(id, group);
        Ok(id)
    }

    pub fn remove_group(&mut self, id: GroupId) -> Option<GroupEntry> {
        self.groups.remove(&id)
    }

    /// Deletes one entry. Emits `FlowRemoved` with reason `Delete` when the
    /// entry asked for removal notifications.
    pub fn delete_entry(&mut self, id: EntryId, now_ns: u64) -> Option<SwitchEvent> {
        let entry = self.remove(id)?;
        entry.send_flow_removed.then_some(SwitchEvent::FlowRemoved {
            entry_id: id,
            entry,
            reason: RemovalReason::Delete,
            removal_time_ns: now_ns,
        })
    }

    /// Ids of the installed entries at `priority`, in install order.
    pub fn entries_at_priority(&self, prio: u16) -> Vec<EntryId> {
        let mut ids: Vec<EntryId> = self
            .entries
            .iter()
            .filter(|(_, e)| e.priority == prio)
            .map(|(id, _)| *id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Moves the clock to `now_ns`, evicting every entry whose timeout
    /// elapsed strictly before it.
    pub fn advance_clock(&mut self, now_ns: u64) -> Result<Vec<SwitchEvent>, SwitchError> {
        let mut out = Vec::new();
        self.advance_clock_into(now_ns, &mut out)?;
        Ok(out)
    }

    pub fn advance_clock_into(
        &mut self,
        now_ns: u64,
        out: &mut Vec<SwitchEvent>,
    ) -> Result<(), SwitchError> {
        if now_ns < self.clock_ns {
            return Err(SwitchError::ClockWentBackwards {
                current_ns: self.clock_ns,
                requested_ns: now_ns,
            });
        }
        while let Some(&Reverse((at, id))) = self.expiry.peek() {
            if at >= now_ns {
                break;
            }
            self.expiry.pop();
            let Some((real_at, reason)) = self.entries.get(&id).and_then(FlowEntry::expiry) else {
                continue;
            };
            if real_at != at {
                self.expiry.push(Reverse((real_at, id)));
                continue;
            }
            let entry = self.remove(id).expect("entry present");
            if entry.send_flow_removed {
                out.push(SwitchEvent::FlowRemoved {
                    entry_id: id,
                    entry,
                    reason,
                    removal_time_ns: at,
                });
            }
        }
        self.clock_ns = now_ns;
        Ok(())
    }

    /// Runs one packet through the pipeline.
    pub fn process_packet(
        &mut self,
        packet: &PacketRecord,
    ) -> Result<(PacketOutcome, Vec<SwitchEvent>), SwitchError> {
        let mut out = Vec::new();
        let outcome = self.process_packet_into(packet, &mut out)?;
        Ok((outcome, out))
    }

    /// Like [`Switch::process_packet`] but appends events to `out`. Expiry
    /// notifications come first, then any `PacketIn`.
    pub fn process_packet_into(
        &mut self,
        packet: &PacketRecord,
        out: &mut Vec<SwitchEvent>,
    ) -> Result<PacketOutcome, SwitchError> {
        self.advance_clock_into(packet.timestamp_ns, out)?;
        let entry_id = self.lookup(packet).ok_or(SwitchError::NoMatch {
            timestamp_ns: packet.timestamp_ns,
        })?;

        let Switch {
            entries,
            groups,
            forward,
            ..
        } = self;
        let entry = entries.get_mut(&entry_id).expect("indexed entry exists");
        entry.packet_count += 1;
        entry.byte_count += u64::from(packet.length_bytes);
        entry.last_match_time_ns = packet.timestamp_ns;

        let mut outcome = PacketOutcome {
            entry_id,
            forwarded: 0,
            to_controller: 0,
        };
        for action in &entry.actions {
            match *action {
                Action::GotoTable(t) => {
                    goto(t, packet, forward, &mut outcome)?;
                    break;
                }
                Action::OutputToController => {
                    outcome.to_controller += 1;
                    out.push(SwitchEvent::PacketIn {
                        packet: *packet,
                        table_id: MONITOR_TABLE,
                    });
                }
                Action::Group(gid) => {
                    let group = groups.get(&gid).ok_or(SwitchError::UnknownGroup(gid))?;
                    let bucket =
                        &group.buckets[select_bucket(group, &packet.flow_key(), group.hash_basis)];
                    for action in &bucket.actions {
                        match *action {
                            Action::OutputToController => {
                                outcome.to_controller += 1;
                                out.push(SwitchEvent::PacketIn {
                                    packet: *packet,
                                    table_id: MONITOR_TABLE,
                                });
                            }
                            Action::GotoTable(t) => {
                                goto(t, packet, forward, &mut outcome)?;
                                break;
                            }
                            Action::Drop => break,
                            Action::Group(_) => return Err(SwitchError::NestedGroup(gid)),
                        }
                    }
                }
                Action::Drop => break,
            }
        }
        Ok(outcome)
    }

    /// Removes every per-flow record entry at `now_ns`. Entries that already
    /// timed out are reported with their timeout reason first; the rest are
    /// reported as deleted, in install order. Other blocks are untouched.
    pub fn flush_all(&mut self, now_ns: u64) -> Result<Vec<SwitchEvent>, SwitchError> {
        let mut out = Vec::new();
        self.advance_clock_into(now_ns, &mut out)?;
        for id in self.entries_at_priority(priority::FLOW_RECORD) {
            if let Some(ev) = self.delete_entry(id, now_ns) {
                out.push(ev);
            }
        }
        Ok(out)
    }

    /// Counters of every installed entry, ordered by id. Read-only poll.
    pub fn poll_stats(&self) -> Vec<EntryStats> {
        let mut stats: Vec<EntryStats> = self
            .entries
            .iter()
            .map(|(id, e)| EntryStats {
                entry_id: *id,
                priority: e.priority,
                packet_count: e.packet_count,
                byte_count: e.byte_count,
                duration_ns: self.clock_ns.saturating_sub(e.install_time_ns),
            })
            .collect();
        stats.sort_unstable_by_key(|s| s.entry_id);
        stats
    }

    fn lookup(&self, packet: &PacketRecord) -> Option<EntryId> {
        let mut best: Option<(u16, u64, EntryId)> = None;
        for idx in &self.shapes {
            if best.is_some_and(|(p, _, _)| idx.max_priority < p) {
                break;
            }
            if let Some(ids) = idx.slots.get(&idx.shape.key_of(packet)) {
                for id in ids {
                    consider(&mut best, *id, &self.entries[id]);
                }
            }
        }
        for id in &self.set_entries {
            let e = &self.entries[id];
            if best.is_some_and(|(p, _, _)| e.priority < p) {
                continue;
            }
            if e.match_fields.matches(packet) {
                consider(&mut best, *id, e);
            }
        }
        best.map(|(_, _, id)| id)
    }

    fn find_duplicate(&self, entry: &FlowEntry) -> Option<EntryId> {
        let same = |id: &&EntryId| {
            let e = &self.entries[*id];
            e.priority == entry.priority && e.match_fields == entry.match_fields
        };
        match entry.match_fields.shape() {
            Some(shape) => {
                let idx = self.shapes.iter().find(|s| s.shape == shape)?;
                let ids = idx.slots.get(&entry.match_fields.masked_key())?;
                ids.iter().find(same).copied()
            }
            None => self.set_entries.iter().find(same).copied(),
        }
    }

    fn index_insert(&mut self, id: EntryId, entry: &FlowEntry) {
        let Some(shape) = entry.match_fields.shape() else {
            self.set_entries.push(id);
            return;
        };
        let pos = match self.shapes.iter().position(|s| s.shape == shape) {
            Some(pos) => pos,
            None => {
                self.shapes.push(ShapeIndex {
                    shape,
                    max_priority: entry.priority,
                    slots: FxHashMap::default(),
                });
                self.shapes.len() - 1
            }
        };
        let idx = &mut self.shapes[pos];
        idx.slots
            .entry(entry.match_fields.masked_key())
            .or_default()
            .push(id);
        idx.max_priority = idx.max_priority.max(entry.priority);
        // Highest-priority shapes first so lookups can stop early.
        self.shapes
            .sort_by(|a, b| b.max_priority.cmp(&a.max_priority));
    }

    fn remove(&mut self, id: EntryId) -> Option<FlowEntry> {
        let entry = self.entries.remove(&id)?;
        match entry.match_fields.shape() {
            Some(shape) => {
                let idx = self
                    .shapes
                    .iter_mut()
                    .find(|s| s.shape == shape)
                    .expect("shape indexed");
                let key = entry.match_fields.masked_key();
                let ids = idx.slots.get_mut(&key).expect("slot indexed");
                ids.retain(|x| *x != id);
                if ids.is_empty() {
                    idx.slots.remove(&key);
                }
            }
            None => self.set_entries.retain(|x| *x != id),
        }
        if entry.priority == priority::FLOW_RECORD {
            self.flow_record_entries -= 1;
        }
        Some(entry)
    }
}

/// Keeps the better of `best` and `id`: higher priority, then earlier
/// install, then lower id.
#[inline]
fn consider(best: &mut Option<(u16, u64, EntryId)>, id: EntryId, e: &FlowEntry) {
    let better = match *best {
        None => true,
        Some((p, t, bid)) => e.priority > p || (e.priority == p && (e.install_time_ns, id) < (t, bid)),
    };
    if better {
        *best = Some((e.priority, e.install_time_ns, id));
    }
}

#[inline]
fn goto(
    table: u8,
    packet: &PacketRecord,
    forward: &mut ForwardCounters,
    outcome: &mut PacketOutcome,
) -> Result<(), SwitchError> {
    if table != FORWARD_TABLE {
        return Err(SwitchError::UnknownTable(table));
    }
    forward.packet_count += 1;
    forward.byte_count += u64::from(packet.length_bytes);
    outcome.forwarded += 1;
    Ok(())
}

/// Lowest-priority catch-all: send everything on to the forwarding table.
pub fn default_entry() -> FlowEntry {
    FlowEntry::new(
        MatchFields::any(),
        priority::DEFAULT,
        alloc::vec![Action::GotoTable(FORWARD_TABLE)],
    )
}
