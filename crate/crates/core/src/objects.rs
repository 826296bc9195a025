//! Allocation-site tracking: turns map/unmap events into logical objects
//! keyed by a call-site hash signature.
//!
//! Two map events with the same (size, stack height, frames) signature are
//! the same logical object even when they live at different addresses or
//! times; their statistics are aggregated.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{AllocationEvent, Frame, TraceFile};

/// 64-bit FNV-1a over raw bytes. Stable across runs and platforms; used for
/// object signatures and report digests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET_BASIS;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Identity of an allocation site: FNV-1a 64 over the canonical string
/// `<size>|<stack height>|<frame>;<frame>;...` with frames rendered as
/// `symbol+0x<offset>`, innermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectSignature(pub u64);

impl fmt::Display for ObjectSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:016x}", self.0)
    }
}

impl FromStr for ObjectSignature {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix("0x").ok_or(())?;
        u64::from_str_radix(digits, 16).map(ObjectSignature).map_err(|_| ())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrackError {
    #[error("map event carries an empty call stack")]
    EmptyCallStack,
}

/// Computes the signature for a map event's (size, call stack).
pub fn compute_signature(size: u64, call_stack: &[Frame]) -> Result<ObjectSignature, TrackError> {
    if call_stack.is_empty() {
        return Err(TrackError::EmptyCallStack);
    }
    let frames: Vec<String> = call_stack.iter().map(|f| f.to_string()).collect();
    let canonical = format!("{size}|{}|{}", call_stack.len(), frames.join(";"));
    Ok(ObjectSignature(fnv1a64(canonical.as_bytes())))
}

/// One address-range lifetime of an object. `t_end` is exclusive: the range
/// [base, base+size) is live for timestamps in [t_start, t_end).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveInterval {
    pub base: u64,
    pub size: u64,
    pub t_start: u64,
    pub t_end: u64,
}

impl LiveInterval {
    pub fn contains(&self, address: u64, timestamp: u64) -> bool {
        address >= self.base
            && address - self.base < self.size
            && timestamp >= self.t_start
            && timestamp < self.t_end
    }
}

/// A logical object: all allocations sharing one signature, with their live
/// intervals and the peak of summed live bytes over time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub signature: ObjectSignature,
    /// Innermost frame of the allocating call stack, rendered verbatim.
    pub label: String,
    pub intervals: Vec<LiveInterval>,
    pub peak_footprint: u64,
}

/// Counters reported alongside the tracked objects.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerDiagnostics {
    pub unmatched_unmaps: u64,
    pub closed_at_end: u64,
    pub distinct_signatures: usize,
}

/// Builds tracked objects from a trace's allocation events.
///
/// Each map opens a live interval; an unmap closes the most recently opened
/// interval at the same base address (any signature). Unmaps with no open
/// interval are counted and ignored. Intervals still open at the end of the
/// trace are closed just past the maximum timestamp observed in either
/// record stream, so samples at the final timestamp still fall inside them.
/// Objects are returned in order of first appearance.
pub fn build_objects(trace: &TraceFile) -> Result<(Vec<TrackedObject>, TrackerDiagnostics), TrackError> {
    let end_exclusive = trace.max_timestamp().map_or(0, |t| t + 1);

    let mut objects: Vec<TrackedObject> = Vec::new();
    let mut by_signature: HashMap<ObjectSignature, usize> = HashMap::new();
    // base -> stack of (object index, interval index) still open
    let mut open: HashMap<u64, Vec<(usize, usize)>> = HashMap::new();
    let mut diagnostics = TrackerDiagnostics::default();

    for event in &trace.alloc_events {
        match event {
            AllocationEvent::Map {
                timestamp,
                base,
                size,
                call_stack,
            } => {
                let signature = compute_signature(*size, call_stack)?;
                let obj_idx = *by_signature.entry(signature).or_insert_with(|| {
                    objects.push(TrackedObject {
                        signature,
                        label: call_stack[0].to_string(),
                        intervals: Vec::new(),
                        peak_footprint: 0,
                    });
                    objects.len() - 1
                });
                let interval_idx = objects[obj_idx].intervals.len();
                objects[obj_idx].intervals.push(LiveInterval {
                    base: *base,
                    size: *size,
                    t_start: *timestamp,
                    t_end: u64::MAX,
                });
                open.entry(*base).or_default().push((obj_idx, interval_idx));
            }
            AllocationEvent::Unmap { timestamp, base } => {
                match open.get_mut(base).and_then(|stack| stack.pop()) {
                    Some((obj_idx, interval_idx)) => {
                        objects[obj_idx].intervals[interval_idx].t_end = *timestamp;
                    }
                    None => diagnostics.unmatched_unmaps += 1,
                }
            }
        }
    }

    for stack in open.values() {
        for &(obj_idx, interval_idx) in stack {
            objects[obj_idx].intervals[interval_idx].t_end = end_exclusive;
            diagnostics.closed_at_end += 1;
        }
    }

    for obj in &mut objects {
        obj.peak_footprint = peak_footprint(&obj.intervals);
    }
    diagnostics.distinct_signatures = objects.len();
    Ok((objects, diagnostics))
}

/// Peak of summed live sizes over a set of intervals, by sweeping their
/// endpoints. Interval ends release bytes before coincident starts acquire
/// them, matching the half-open [t_start, t_end) semantics.
pub fn peak_footprint(intervals: &[LiveInterval]) -> u64 {
    let mut edges: Vec<(u64, bool, u64)> = Vec::with_capacity(intervals.len() * 2);
    for iv in intervals {
        edges.push((iv.t_start, true, iv.size));
        edges.push((iv.t_end, false, iv.size));
    }
    // false (end) sorts before true (start) at equal timestamps
    edges.sort();

    let mut live = 0u64;
    let mut peak = 0u64;
    for (_, is_start, size) in edges {
        if is_start {
            live += size;
            peak = peak.max(live);
        } else {
            live -= size;
        }
    }
    peak
}

/// Application peak: max over time of live bytes summed across all objects.
pub fn app_peak_footprint(objects: &[TrackedObject]) -> u64 {
    let all: Vec<LiveInterval> = objects.iter().flat_map(|o| o.intervals.iter().copied()).collect();
    peak_footprint(&all)
}
