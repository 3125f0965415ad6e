//! Trace files: CSV text and a fixed-width binary variant.
//!
//! CSV: optional header `cycle,op,addr,core`, then one `cycle,R|W,0xADDR,core`
//! record per line. Binary: `DCTR`, a little-endian u16 version, then 16-byte
//! records (u64 cycle, u8 op, u8 core, 48-bit address).

use std::io::{BufRead, Read, Write};

use crate::controller::{Op, Request};
use crate::error::{Result, SimError};
use crate::geometry::ADDRESS_BITS;

pub const CSV_HEADER: &str = "cycle,op,addr,core";
pub const BINARY_MAGIC: &[u8; 4] = b"DCTR";
pub const BINARY_VERSION: u16 = 1;
const RECORD_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub cycle: u64,
    pub op: Op,
    pub addr: u64,
    pub core: u32,
}

impl TraceRecord {
    pub fn request(&self) -> Request {
        Request {
            arrival_cycle: self.cycle,
            op: self.op,
            addr: self.addr,
            origin: self.core,
        }
    }
}

fn op_char(op: Op) -> char {
    match op {
        Op::Read => 'R',
        Op::Write => 'W',
    }
}

fn trace_err(line: u64, message: impl Into<String>) -> SimError {
    SimError::Trace {
        line,
        message: message.into(),
    }
}

/// Parses one CSV record (no header handling).
pub fn parse_line(text: &str, line: u64) -> Result<TraceRecord> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(trace_err(
            line,
            format!("expected 4 fields, found {}", fields.len()),
        ));
    }
    let cycle = fields[0]
        .parse::<u64>()
        .map_err(|e| trace_err(line, format!("bad cycle `{}`: {e}", fields[0])))?;
    let op = match fields[1] {
        "R" | "r" => Op::Read,
        "W" | "w" => Op::Write,
        other => {
            return Err(trace_err(
                line,
                format!("bad op `{other}` (expected R or W)"),
            ))
        }
    };
    let hex = fields[2]
        .strip_prefix("0x")
        .or_else(|| fields[2].strip_prefix("0X"))
        .ok_or_else(|| trace_err(line, format!("address `{}` is not 0x-prefixed", fields[2])))?;
    let addr = u64::from_str_radix(hex, 16)
        .map_err(|e| trace_err(line, format!("bad address `{}`: {e}", fields[2])))?;
    if addr >> ADDRESS_BITS != 0 {
        return Err(trace_err(
            line,
            format!("address {:#x} exceeds {ADDRESS_BITS} bits", addr),
        ));
    }
    let core = fields[3]
        .parse::<u32>()
        .map_err(|e| trace_err(line, format!("bad core `{}`: {e}", fields[3])))?;
    Ok(TraceRecord {
        cycle,
        op,
        addr,
        core,
    })
}

/// Streaming CSV reader. Blank lines are skipped; the header is optional.
pub struct CsvReader<R> {
    input: R,
    buf: String,
    line: u64,
    last_cycle: u64,
    failed: bool,
}

impl<R: BufRead> CsvReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            input,
            buf: String::new(),
            line: 0,
            last_cycle: 0,
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for CsvReader<R> {
    type Item = Result<TraceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() || (self.line == 1 && text == CSV_HEADER) {
                continue;
            }
            let rec = parse_line(text, self.line).and_then(|r| {
                if r.cycle < self.last_cycle {
                    Err(trace_err(
                        self.line,
                        format!(
                            "cycle {} goes backwards (previous {})",
                            r.cycle, self.last_cycle
                        ),
                    ))
                } else {
                    Ok(r)
                }
            });
            match &rec {
                Ok(r) => self.last_cycle = r.cycle,
                Err(_) => self.failed = true,
            }
            return Some(rec);
        }
    }
}

pub fn write_csv<W: Write>(
    out: &mut W,
    records: impl IntoIterator<Item = TraceRecord>,
) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{:#x},{}",
            r.cycle,
            op_char(r.op),
            r.addr,
            r.core
        )?;
    }
    Ok(())
}

/// Streaming reader for the binary format. Expects the magic and version.
pub struct BinaryReader<R> {
    input: R,
    index: u64,
    last_cycle: u64,
    failed: bool,
}

impl<R: Read> BinaryReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut head = [0u8; 6];
        input.read_exact(&mut head)?;
        if &head[..4] != BINARY_MAGIC {
            return Err(trace_err(0, "missing DCTR magic"));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != BINARY_VERSION {
            return Err(trace_err(
                0,
                format!("unsupported binary trace version {version}"),
            ));
        }
        Ok(Self {
            input,
            index: 0,
            last_cycle: 0,
            failed: false,
        })
    }
}

fn decode(buf: &[u8; RECORD_BYTES], index: u64) -> Result<TraceRecord> {
    let cycle = u64::from_le_bytes(buf[..8].try_into().unwrap());
    let op = match buf[8] {
        0 => Op::Read,
        1 => Op::Write,
        other => return Err(trace_err(index, format!("bad op byte {other}"))),
    };
    let core = buf[9] as u32;
    let mut addr = [0u8; 8];
    addr[..6].copy_from_slice(&buf[10..16]);
    Ok(TraceRecord {
        cycle,
        op,
        addr: u64::from_le_bytes(addr),
        core,
    })
}

impl<R: Read> Iterator for BinaryReader<R> {
    type Item = Result<TraceRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let mut buf = [0u8; RECORD_BYTES];
        let mut filled = 0;
        while filled < RECORD_BYTES {
            match self.input.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
        }
        if filled == 0 {
            return None;
        }
        // records are numbered from 1, like CSV lines
        self.index += 1;
        let rec = if filled < RECORD_BYTES {
            Err(trace_err(self.index, "truncated record"))
        } else {
            decode(&buf, self.index).and_then(|r| {
                if r.cycle < self.last_cycle {
                    Err(trace_err(
                        self.index,
                        format!("cycle {} goes backwards", r.cycle),
                    ))
                } else {
                    Ok(r)
                }
            })
        };
        match &rec {
            Ok(r) => self.last_cycle = r.cycle,
            Err(_) => self.failed = true,
        }
        Some(rec)
    }
}

pub fn write_binary<W: Write>(
    out: &mut W,
    records: impl IntoIterator<Item = TraceRecord>,
) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    for r in records {
        if r.addr >> ADDRESS_BITS != 0 {
            return Err(SimError::Workload(format!(
                "address {:#x} does not fit in 48 bits",
                r.addr
            )));
        }
        if r.core > u8::MAX as u32 {
            return Err(SimError::Workload(format!(
                "core {} does not fit in a byte",
                r.core
            )));
        }
        let mut buf = [0u8; RECORD_BYTES];
        buf[..8].copy_from_slice(&r.cycle.to_le_bytes());
        buf[8] = matches!(r.op, Op::Write) as u8;
        buf[9] = r.core as u8;
        buf[10..].copy_from_slice(&r.addr.to_le_bytes()[..6]);
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Opens a trace file of either format, sniffing the binary magic.
pub fn open_trace(
    path: &std::path::Path,
) -> Result<Box<dyn Iterator<Item = Result<TraceRecord>> + Send>> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    let head = reader.fill_buf()?;
    if head.starts_with(BINARY_MAGIC) {
        Ok(Box::new(BinaryReader::new(reader)?))
    } else {
        Ok(Box::new(CsvReader::new(reader)))
    }
}
