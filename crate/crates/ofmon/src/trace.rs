// SPDX-License-Identifier: Apache-2.0

//! CSV packet traces, optionally gzip-compressed.
//!
//! ```text
//! ts_ns,src_ip,dst_ip,src_port,dst_port,proto,len
//! 0,10.0.0.1,10.0.0.2,1234,80,TCP,60
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ofmon_core::{PacketRecord, Protocol};

pub const HEADER: [&str; 7] = ["ts_ns", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "len"];

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("line {line}: expected header `{}`", HEADER.join(","))]
    BadHeader { line: u64 },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: unsupported protocol `{token}`")]
    UnsupportedProtocol { line: u64, token: String },
    #[error("line {line}: timestamp {ts_ns} is earlier than previous {prev_ns}")]
    OutOfOrder { line: u64, ts_ns: u64, prev_ns: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TraceError {
    pub fn line(&self) -> Option<u64> {
        match self {
            TraceError::BadHeader { line }
            | TraceError::Malformed { line, .. }
            | TraceError::UnsupportedProtocol { line, .. }
            | TraceError::OutOfOrder { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

/// Opens a trace file, transparently decompressing `.gz`.
pub fn open_trace(path: &Path) -> Result<TraceReader<Box<dyn Read>>, TraceError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => TraceError::NotFound(path.to_owned()),
        _ => TraceError::Io(e),
    })?;
    let inner: Box<dyn Read> = if is_gz(path) {
        Box::new(MultiGzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(file)
    };
    TraceReader::new(inner)
}

/// Reads and validates a whole trace.
pub fn read_csv_trace(path: impl AsRef<Path>) -> Result<Vec<PacketRecord>, TraceError> {
    open_trace(path.as_ref())?.collect()
}

/// Streaming reader over trace rows. Yields an error and stops at the first
/// bad row.
pub struct TraceReader<R: Read> {
    rows: csv::Reader<R>,
    record: csv::StringRecord,
    prev_ns: u64,
    failed: bool,
}

impl<R: Read> TraceReader<R> {
    pub fn new(reader: R) -> Result<Self, TraceError> {
        let mut rows = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut record = csv::StringRecord::new();
        let ok = rows.read_record(&mut record).map_err(|e| csv_error(e, 1))?;
        if !ok || record.iter().map(str::trim).ne(HEADER) {
            return Err(TraceError::BadHeader { line: 1 });
        }
        Ok(TraceReader {
            rows,
            record,
            prev_ns: 0,
            failed: false,
        })
    }

    fn next_packet(&mut self) -> Result<Option<PacketRecord>, TraceError> {
        let line = self.rows.position().line();
        if !self.rows.read_record(&mut self.record).map_err(|e| csv_error(e, line))? {
            return Ok(None);
        }
        let line = self.record.position().map_or(line, |p| p.line());
        let p = parse_row(&self.record, line)?;
        if p.timestamp_ns < self.prev_ns {
            return Err(TraceError::OutOfOrder {
                line,
                ts_ns: p.timestamp_ns,
                prev_ns: self.prev_ns,
            });
        }
        self.prev_ns = p.timestamp_ns;
        Ok(Some(p))
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<PacketRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let r = self.next_packet().transpose();
        if matches!(r, Some(Err(_))) {
            self.failed = true;
        }
        r
    }
}

fn csv_error(e: csv::Error, line: u64) -> TraceError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => TraceError::Io(io),
            _ => unreachable!(),
        }
    } else {
        TraceError::Malformed {
            line,
            message: e.to_string(),
        }
    }
}

fn parse_row(row: &csv::StringRecord, line: u64) -> Result<PacketRecord, TraceError> {
    if row.len() != HEADER.len() {
        return Err(TraceError::Malformed {
            line,
            message: format!("expected {} fields, found {}", HEADER.len(), row.len()),
        });
    }
    fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, line: u64) -> Result<T, TraceError> {
        let raw = row[i].trim();
        raw.parse().map_err(|_| TraceError::Malformed {
            line,
            message: format!("invalid {} `{raw}`", HEADER[i]),
        })
    }
    let token = row[5].trim();
    let protocol: Protocol = token.parse().map_err(|_| TraceError::UnsupportedProtocol {
        line,
        token: token.to_owned(),
    })?;
    Ok(PacketRecord::new(
        field(row, 0, line)?,
        field::<Ipv4Addr>(row, 1, line)?,
        field::<Ipv4Addr>(row, 2, line)?,
        field(row, 3, line)?,
        field(row, 4, line)?,
        protocol,
        field(row, 6, line)?,
    ))
}

/// Writes rows in the trace format.
pub fn write_trace_to<W: Write>(writer: W, trace: &[PacketRecord]) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{}", HEADER.join(","))?;
    for p in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.timestamp_ns,
            Ipv4Addr::from(p.src_ip),
            Ipv4Addr::from(p.dst_ip),
            p.src_port,
            p.dst_port,
            p.protocol,
            p.length_bytes
        )?;
    }
    w.flush()
}

/// Writes a trace file, gzip-compressed when the name ends in `.gz`.
pub fn write_csv_trace(path: impl AsRef<Path>, trace: &[PacketRecord]) -> io::Result<()> {
    let path = path.as_ref();
    let file = File::create(path)?;
    if is_gz(path) {
        let mut gz = GzEncoder::new(file, Compression::default());
        write_trace_to(&mut gz, trace)?;
        gz.finish()?.sync_all()
    } else {
        write_trace_to(file, trace)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceTotals {
    pub flows: u64,
    pub packets: u64,
    pub bytes: u64,
}

pub fn totals(trace: &[PacketRecord]) -> TraceTotals {
    let flows: std::collections::HashSet<_> = trace.iter().map(PacketRecord::flow_key).collect();
    TraceTotals {
        flows: flows.len() as u64,
        packets: trace.len() as u64,
        bytes: trace.iter().map(|p| u64::from(p.length_bytes)).sum(),
    }
}
