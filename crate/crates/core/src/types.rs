// SPDX-License-Identifier: Apache-2.0

//! Packet, flow key and flow record types.

use core::fmt;
use core::net::Ipv4Addr;
use core::str::FromStr;

/// Transport protocol. Traces are restricted to TCP and UDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Tcp,
    Udp,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Tcp, Protocol::Udp];

    /// IANA protocol number.
    pub const fn number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Protocol::Tcp => "TCP",
            Protocol::Udp => "UDP",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported protocol `{0}`")]
pub struct UnsupportedProtocol(pub alloc::string::String);

impl FromStr for Protocol {
    type Err = UnsupportedProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TCP" | "tcp" | "6" => Ok(Protocol::Tcp),
            "UDP" | "udp" | "17" => Ok(Protocol::Udp),
            other => Err(UnsupportedProtocol(other.into())),
        }
    }
}

/// A single packet of a trace.
///
/// Addresses are IPv4 in host byte order. `length_bytes` is the IP total
/// length and is at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PacketRecord {
    pub timestamp_ns: u64,
    pub src_ip: u32,
    pub dst_ip: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub length_bytes: u32,
}

impl PacketRecord {
    pub fn new(
        timestamp_ns: u64,
        src: Ipv4Addr,
        dst: Ipv4Addr,
        src_port: u16,
        dst_port: u16,
        protocol: Protocol,
        length_bytes: u32,
    ) -> Self {
        PacketRecord {
            timestamp_ns,
            src_ip: src.into(),
            dst_ip: dst.into(),
            src_port,
            dst_port,
            protocol,
            length_bytes,
        }
    }

    /// The unidirectional 5-tuple of this packet.
    #[inline]
    pub fn flow_key(&self) -> FlowKey {
        flow_key_of(self)
    }

    /// Same packet with its 5-tuple replaced.
    pub fn with_key(mut self, key: FlowKey) -> Self {
        self.src_ip = key.src_ip;
        self.dst_ip = key.dst_ip;
        self.src_port = key.src_port;
        self.dst_port = key.dst_port;
        self.protocol = key.protocol;
        self
    }
}

/// Projects a packet onto its 5-tuple.
#[inline]
pub fn flow_key_of(packet: &PacketRecord) -> FlowKey {
    FlowKey {
        src_ip: packet.src_ip,
        dst_ip: packet.dst_ip,
        src_port: packet.src_port,
        dst_port: packet.dst_port,
        protocol: packet.protocol,
    }
}

/// IP 5-tuple identifying a unidirectional flow.
///
/// The derived ordering is lexicographic over
/// `(src_ip, dst_ip, src_port, dst_port, protocol)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
}

impl FlowKey {
    pub fn src_addr(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.src_ip)
    }

    pub fn dst_addr(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.dst_ip)
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} -> {}:{} {}",
            self.src_addr(),
            self.src_port,
            self.dst_addr(),
            self.dst_port,
            self.protocol
        )
    }
}

/// Why a flow record was closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpiryReason {
    IdleTimeout,
    HardTimeout,
    EndOfTrace,
}

impl ExpiryReason {
    /// Token used by the record exporters.
    pub const fn as_str(self) -> &'static str {
        match self {
            ExpiryReason::IdleTimeout => "idle",
            ExpiryReason::HardTimeout => "hard",
            ExpiryReason::EndOfTrace => "eot",
        }
    }
}

/// NetFlow-style statistics for one monitored flow.
///
/// `packet_count` and `byte_count` are merged totals: the per-flow entry
/// counters retrieved from the switch plus the packets the controller
/// received before that entry was installed. The controller-side share is
/// kept separately so either view can be recovered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub first_seen_ns: u64,
    pub last_seen_ns: u64,
    pub packet_count: u64,
    pub byte_count: u64,
    /// Packets that reached the controller, including the first one.
    pub controller_packet_count: u64,
    pub controller_byte_count: u64,
    /// Bytes of controller packets after the first one.
    pub redundant_byte_count: u64,
    pub expiry_reason: ExpiryReason,
}

impl FlowRecord {
    /// Packets counted by the switch entry alone.
    pub fn switch_packets(&self) -> u64 {
        self.packet_count - self.controller_packet_count
    }

    pub fn switch_bytes(&self) -> u64 {
        self.byte_count - self.controller_byte_count
    }

    /// Controller packets beyond the first one of the flow.
    pub fn redundant_packets(&self) -> u64 {
        self.controller_packet_count.saturating_sub(1)
    }

    pub fn duration_ns(&self) -> u64 {
        self.last_seen_ns - self.first_seen_ns
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(ts: u64, src: [u8; 4], dst: [u8; 4], sp: u16, dp: u16, len: u32) -> PacketRecord {
        PacketRecord::new(ts, src.into(), dst.into(), sp, dp, Protocol::Tcp, len)
    }

    #[test]
    fn key_is_field_projection() {
        let p = pkt(0, [10, 0, 0, 1], [10, 0, 0, 2], 1234, 80, 60);
        let k = flow_key_of(&p);
        assert_eq!(k.src_addr(), Ipv4Addr::new(10, 0, 0, 1));
        assert_eq!(k.dst_addr(), Ipv4Addr::new(10, 0, 0, 2));
        assert_eq!((k.src_port, k.dst_port, k.protocol), (1234, 80, Protocol::Tcp));
    }

    #[test]
    fn key_ignores_length() {
        let a = pkt(0, [10, 0, 0, 1], [10, 0, 0, 2], 1234, 80, 60);
        let b = pkt(5, [10, 0, 0, 1], [10, 0, 0, 2], 1234, 80, 1500);
        assert_eq!(a.flow_key(), b.flow_key());
    }

    #[test]
    fn key_is_direction_sensitive() {
        let a = pkt(0, [10, 0, 0, 1], [10, 0, 0, 2], 1234, 80, 60);
        let b = pkt(0, [10, 0, 0, 2], [10, 0, 0, 1], 80, 1234, 60);
        assert_ne!(a.flow_key(), b.flow_key());
    }

    #[test]
    fn protocol_tokens() {
        assert_eq!("TCP".parse::<Protocol>(), Ok(Protocol::Tcp));
        assert_eq!("udp".parse::<Protocol>(), Ok(Protocol::Udp));
        let err = "ICMP".parse::<Protocol>().unwrap_err();
        assert_eq!(std::format!("{err}"), "unsupported protocol `ICMP`");
    }
}
