//! Canonical trace record types and the line-based text format (v1).
//!
//! A trace file carries two record streams: memory access samples (loads and
//! stores) and allocation events (map/unmap). The text grammar, one record
//! per line with space-separated fields:
//!
//! ```text
//! RHOTRACE 1
//! # comment
//! A <ts> <base_hex> <size> <frame>[;<frame>...]     map
//! F <ts> <base_hex>                                 unmap
//! L <ts> <tid> <addr_hex> <level> <latency> <tlb>   load
//! S <ts> <tid> <addr_hex> <tlb>                     store
//! ```
//!
//! where `<frame>` is `<symbol>+0x<offset>`, `<level>` is one of
//! `L1 LFB L2 L3 DRAM`, and `<tlb>` is `<level>:H`, `<level>:M` or `-`.
//! Hex fields carry a `0x` prefix; timestamps, sizes and latencies are
//! decimal. Timestamps are nanoseconds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Trace format version understood by this parser.
pub const TRACE_VERSION: u32 = 1;

const TRACE_MAGIC: &str = "RHOTRACE";

/// Memory hierarchy level a load was served from (stores are always L1).
///
/// The derived ordering `L1 < LFB < L2 < L3 < DRAM` is total; only DRAM
/// counts as external access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemoryLevel {
    L1,
    Lfb,
    L2,
    L3,
    Dram,
}

impl MemoryLevel {
    /// All levels in hierarchy order.
    pub const ALL: [MemoryLevel; 5] = [
        MemoryLevel::L1,
        MemoryLevel::Lfb,
        MemoryLevel::L2,
        MemoryLevel::L3,
        MemoryLevel::Dram,
    ];

    /// Dense index, usable with [`PerLevel`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether an access at this level leaves the cache hierarchy.
    pub fn is_external(self) -> bool {
        self == MemoryLevel::Dram
    }
}

impl fmt::Display for MemoryLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MemoryLevel::L1 => "L1",
            MemoryLevel::Lfb => "LFB",
            MemoryLevel::L2 => "L2",
            MemoryLevel::L3 => "L3",
            MemoryLevel::Dram => "DRAM",
        };
        f.write_str(s)
    }
}

impl FromStr for MemoryLevel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L1" => Ok(MemoryLevel::L1),
            "LFB" => Ok(MemoryLevel::Lfb),
            "L2" => Ok(MemoryLevel::L2),
            "L3" => Ok(MemoryLevel::L3),
            "DRAM" => Ok(MemoryLevel::Dram),
            _ => Err(()),
        }
    }
}

/// One value per [`MemoryLevel`], indexable by level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerLevel<T>(pub [T; 5]);

impl<T> std::ops::Index<MemoryLevel> for PerLevel<T> {
    type Output = T;

    fn index(&self, level: MemoryLevel) -> &T {
        &self.0[level.index()]
    }
}

impl<T> std::ops::IndexMut<MemoryLevel> for PerLevel<T> {
    fn index_mut(&mut self, level: MemoryLevel) -> &mut T {
        &mut self.0[level.index()]
    }
}

impl<T: Copy + std::iter::Sum> PerLevel<T> {
    pub fn total(&self) -> T {
        self.0.iter().copied().sum()
    }
}

/// TLB lookup outcome attached to a sample: the level at which the
/// translation was resolved plus hit/miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlbOutcome {
    pub level: MemoryLevel,
    pub hit: bool,
}

impl fmt::Display for TlbOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level, if self.hit { "H" } else { "M" })
    }
}

/// Load or store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleKind {
    Load,
    Store,
}

/// One sampled memory access event.
///
/// Invariants: stores are always at level L1 and carry no latency; loads
/// carry a latency of at least one cycle. Use the [`MemorySample::load`] and
/// [`MemorySample::store`] constructors to uphold them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySample {
    pub kind: SampleKind,
    /// Nanoseconds.
    pub timestamp: u64,
    pub thread_id: u32,
    /// Virtual byte address.
    pub address: u64,
    pub level: MemoryLevel,
    /// Cycles; present on loads only.
    pub latency: Option<u64>,
    /// Present on loads; optional on stores.
    pub tlb: Option<TlbOutcome>,
}

impl MemorySample {
    pub fn load(
        timestamp: u64,
        thread_id: u32,
        address: u64,
        level: MemoryLevel,
        latency: u64,
        tlb: Option<TlbOutcome>,
    ) -> Self {
        debug_assert!(latency >= 1);
        MemorySample {
            kind: SampleKind::Load,
            timestamp,
            thread_id,
            address,
            level,
            latency: Some(latency),
            tlb,
        }
    }

    pub fn store(timestamp: u64, thread_id: u32, address: u64, tlb: Option<TlbOutcome>) -> Self {
        MemorySample {
            kind: SampleKind::Store,
            timestamp,
            thread_id,
            address,
            level: MemoryLevel::L1,
            latency: None,
            tlb,
        }
    }

    pub fn is_load(&self) -> bool {
        self.kind == SampleKind::Load
    }

    pub fn is_store(&self) -> bool {
        self.kind == SampleKind::Store
    }
}

/// One call-stack frame: symbol name plus byte offset.
///
/// Symbols must be non-empty and must not contain whitespace or `;`, which
/// the text format cannot represent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    pub symbol: String,
    pub offset: u64,
}

impl Frame {
    pub fn new(symbol: impl Into<String>, offset: u64) -> Self {
        Frame {
            symbol: symbol.into(),
            offset,
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+0x{:x}", self.symbol, self.offset)
    }
}

impl FromStr for Frame {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (symbol, offset_hex) = s.rsplit_once("+0x").ok_or(())?;
        if symbol.is_empty() {
            return Err(());
        }
        let offset = u64::from_str_radix(offset_hex, 16).map_err(|_| ())?;
        Ok(Frame::new(symbol, offset))
    }
}

/// Allocation-lifecycle event. Map events carry the size and the call stack
/// (innermost frame first); unmap events carry only the base address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationEvent {
    Map {
        timestamp: u64,
        base: u64,
        size: u64,
        call_stack: Vec<Frame>,
    },
    Unmap {
        timestamp: u64,
        base: u64,
    },
}

impl AllocationEvent {
    pub fn timestamp(&self) -> u64 {
        match self {
            AllocationEvent::Map { timestamp, .. } => *timestamp,
            AllocationEvent::Unmap { timestamp, .. } => *timestamp,
        }
    }
}

/// A parsed trace: samples and allocation events, each stream non-strictly
/// ordered by timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceFile {
    pub version: u32,
    pub samples: Vec<MemorySample>,
    pub alloc_events: Vec<AllocationEvent>,
}

impl TraceFile {
    pub fn new() -> Self {
        TraceFile {
            version: TRACE_VERSION,
            samples: Vec::new(),
            alloc_events: Vec::new(),
        }
    }

    /// Largest timestamp across both record streams.
    pub fn max_timestamp(&self) -> Option<u64> {
        let events = self.alloc_events.iter().map(|e| e.timestamp()).max();
        let samples = self.samples.iter().map(|s| s.timestamp).max();
        events.into_iter().chain(samples).max()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("unsupported trace version {0}")]
    UnsupportedVersion(u32),
}

fn malformed(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_hex(line: usize, field: &str, what: &str) -> Result<u64, TraceError> {
    let digits = field
        .strip_prefix("0x")
        .ok_or_else(|| malformed(line, format!("{what} must carry a 0x prefix")))?;
    u64::from_str_radix(digits, 16).map_err(|_| malformed(line, format!("invalid hex {what}")))
}

fn parse_dec<T: FromStr>(line: usize, field: &str, what: &str) -> Result<T, TraceError> {
    field
        .parse()
        .map_err(|_| malformed(line, format!("invalid {what}")))
}

fn parse_tlb(line: usize, field: &str) -> Result<Option<TlbOutcome>, TraceError> {
    if field == "-" {
        return Ok(None);
    }
    let (level, outcome) = field
        .split_once(':')
        .ok_or_else(|| malformed(line, "tlb field must be <level>:H, <level>:M or -"))?;
    let level: MemoryLevel = level
        .parse()
        .map_err(|_| malformed(line, "invalid tlb level"))?;
    let hit = match outcome {
        "H" => true,
        "M" => false,
        _ => return Err(malformed(line, "tlb outcome must be H or M")),
    };
    Ok(Some(TlbOutcome { level, hit }))
}

/// Parses trace text. Every well-formed line yields exactly one record;
/// blank lines and `#` comments are skipped; record order is preserved.
pub fn parse_trace(input: &str) -> Result<TraceFile, TraceError> {
    let mut trace = TraceFile::new();
    let mut header_seen = false;

    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();

        if !header_seen {
            if fields.len() != 2 || fields[0] != TRACE_MAGIC {
                return Err(malformed(line_no, "expected `RHOTRACE <version>` header"));
            }
            let version: u32 = parse_dec(line_no, fields[1], "version")?;
            if version != TRACE_VERSION {
                return Err(TraceError::UnsupportedVersion(version));
            }
            trace.version = version;
            header_seen = true;
            continue;
        }

        match fields[0] {
            "L" => {
                if fields.len() != 7 {
                    return Err(malformed(line_no, "expected 7 fields"));
                }
                let timestamp = parse_dec(line_no, fields[1], "timestamp")?;
                let thread_id = parse_dec(line_no, fields[2], "thread id")?;
                let address = parse_hex(line_no, fields[3], "address")?;
                let level: MemoryLevel = fields[4]
                    .parse()
                    .map_err(|_| malformed(line_no, "invalid memory level"))?;
                let latency: u64 = parse_dec(line_no, fields[5], "latency")?;
                if latency < 1 {
                    return Err(malformed(line_no, "load latency must be >= 1"));
                }
                let tlb = parse_tlb(line_no, fields[6])?;
                trace
                    .samples
                    .push(MemorySample::load(timestamp, thread_id, address, level, latency, tlb));
            }
            "S" => {
                if fields.len() != 5 {
                    return Err(malformed(line_no, "expected 5 fields"));
                }
                let timestamp = parse_dec(line_no, fields[1], "timestamp")?;
                let thread_id = parse_dec(line_no, fields[2], "thread id")?;
                let address = parse_hex(line_no, fields[3], "address")?;
                let tlb = parse_tlb(line_no, fields[4])?;
                trace
                    .samples
                    .push(MemorySample::store(timestamp, thread_id, address, tlb));
            }
            "A" => {
                if fields.len() != 5 {
                    return Err(malformed(line_no, "expected 5 fields"));
                }
                let timestamp = parse_dec(line_no, fields[1], "timestamp")?;
                let base = parse_hex(line_no, fields[2], "base address")?;
                let size: u64 = parse_dec(line_no, fields[3], "size")?;
                if size == 0 {
                    return Err(malformed(line_no, "map size must be > 0"));
                }
                let mut call_stack = Vec::new();
                for frame in fields[4].split(';') {
                    let frame: Frame = frame
                        .parse()
                        .map_err(|_| malformed(line_no, "invalid frame, expected <symbol>+0x<offset>"))?;
                    call_stack.push(frame);
                }
                trace.alloc_events.push(AllocationEvent::Map {
                    timestamp,
                    base,
                    size,
                    call_stack,
                });
            }
            "F" => {
                if fields.len() != 3 {
                    return Err(malformed(line_no, "expected 3 fields"));
                }
                let timestamp = parse_dec(line_no, fields[1], "timestamp")?;
                let base = parse_hex(line_no, fields[2], "base address")?;
                trace.alloc_events.push(AllocationEvent::Unmap { timestamp, base });
            }
            other => {
                return Err(malformed(line_no, format!("unknown record type `{other}`")));
            }
        }
    }

    if !header_seen {
        return Err(malformed(1, "missing RHOTRACE header"));
    }
    Ok(trace)
}

/// Serializes a trace so that `parse_trace(write_trace(t)) == t`. Records
/// are emitted in stored order (allocation events first, then samples); the
/// writer does not sort.
pub fn write_trace(trace: &TraceFile) -> String {
    let mut out = String::new();
    out.push_str(&format!("{TRACE_MAGIC} {}\n", trace.version));

    for event in &trace.alloc_events {
        match event {
            AllocationEvent::Map {
                timestamp,
                base,
                size,
                call_stack,
            } => {
                let frames: Vec<String> = call_stack.iter().map(|f| f.to_string()).collect();
                out.push_str(&format!(
                    "A {timestamp} 0x{base:x} {size} {}\n",
                    frames.join(";")
                ));
            }
            AllocationEvent::Unmap { timestamp, base } => {
                out.push_str(&format!("F {timestamp} 0x{base:x}\n"));
            }
        }
    }

    for sample in &trace.samples {
        let tlb = sample.tlb.map_or_else(|| "-".to_string(), |t| t.to_string());
        match sample.kind {
            SampleKind::Load => {
                out.push_str(&format!(
                    "L {} {} 0x{:x} {} {} {}\n",
                    sample.timestamp,
                    sample.thread_id,
                    sample.address,
                    sample.level,
                    sample.latency.unwrap_or(1),
                    tlb
                ));
            }
            SampleKind::Store => {
                out.push_str(&format!(
                    "S {} {} 0x{:x} {}\n",
                    sample.timestamp, sample.thread_id, sample.address, tlb
                ));
            }
        }
    }
    out
}
