// SPDX-License-Identifier: Apache-2.0

//! Flow record export as JSON lines or CSV with identical columns.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use ofmon_core::FlowRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }

    /// Guesses from a file name, defaulting to JSON lines.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(format!("unknown format `{s}` (expected csv or jsonl)")),
        }
    }
}

/// One exported record. Packet and byte counts are merged totals: entry
/// counters plus packets seen by the controller before installation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordRow {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: String,
    pub first_seen_ns: u64,
    pub last_seen_ns: u64,
    pub packets: u64,
    pub bytes: u64,
    pub controller_packets: u64,
    pub expiry: String,
}

impl From<&FlowRecord> for RecordRow {
    fn from(r: &FlowRecord) -> Self {
        RecordRow {
            src_ip: r.key.src_addr(),
            dst_ip: r.key.dst_addr(),
            src_port: r.key.src_port,
            dst_port: r.key.dst_port,
            protocol: r.key.protocol.as_str().to_owned(),
            first_seen_ns: r.first_seen_ns,
            last_seen_ns: r.last_seen_ns,
            packets: r.packet_count,
            bytes: r.byte_count,
            controller_packets: r.controller_packet_count,
            expiry: r.expiry_reason.as_str().to_owned(),
        }
    }
}

/// Writes records in the given order and returns how many were written.
pub fn write_records<W: Write>(writer: W, records: &[FlowRecord], format: Format) -> io::Result<usize> {
    write_rows(writer, records.iter().map(RecordRow::from), format)
}

pub fn write_records_file(path: &Path, records: &[FlowRecord], format: Format) -> io::Result<usize> {
    write_records(File::create(path)?, records, format)
}

/// Serializes any rows as CSV (with header) or JSON lines.
pub fn write_rows<W: Write, T: Serialize>(
    writer: W,
    rows: impl IntoIterator<Item = T>,
    format: Format,
) -> io::Result<usize> {
    let mut n = 0;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for row in rows {
                w.serialize(row).map_err(io::Error::other)?;
                n += 1;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(writer);
            for row in rows {
                serde_json::to_writer(&mut w, &row)?;
                w.write_all(b"\n")?;
                n += 1;
            }
            w.flush()?;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ofmon_core::{ExpiryReason, FlowKey, Protocol};

    fn record() -> FlowRecord {
        FlowRecord {
            key: FlowKey {
                src_ip: 0x0a00_0001,
                dst_ip: 0x0a00_0002,
                src_port: 1234,
                dst_port: 80,
                protocol: Protocol::Tcp,
            },
            first_seen_ns: 5,
            last_seen_ns: 9,
            packet_count: 3,
            byte_count: 180,
            controller_packet_count: 1,
            controller_byte_count: 60,
            redundant_byte_count: 0,
            expiry_reason: ExpiryReason::IdleTimeout,
        }
    }

    #[test]
    fn jsonl_fields() {
        let mut out = Vec::new();
        assert_eq!(write_records(&mut out, &[record()], Format::Jsonl).unwrap(), 1);
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"src_ip\":\"10.0.0.1\",\"dst_ip\":\"10.0.0.2\",\"src_port\":1234,\"dst_port\":80,\
             \"protocol\":\"TCP\",\"first_seen_ns\":5,\"last_seen_ns\":9,\"packets\":3,\"bytes\":180,\
             \"controller_packets\":1,\"expiry\":\"idle\"}\n"
        );
    }

    #[test]
    fn csv_matches_jsonl_columns() {
        let mut out = Vec::new();
        write_records(&mut out, &[record()], Format::Csv).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "src_ip,dst_ip,src_port,dst_port,protocol,first_seen_ns,last_seen_ns,packets,bytes,controller_packets,expiry"
        );
        assert_eq!(lines.next().unwrap(), "10.0.0.1,10.0.0.2,1234,80,TCP,5,9,3,180,1,idle");
        let mut empty = Vec::new();
        assert_eq!(write_records(&mut empty, &[], Format::Jsonl).unwrap(), 0);
        assert!(empty.is_empty());
    }
}
