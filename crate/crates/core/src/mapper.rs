//! Attributes memory samples to tracked objects and accumulates per-object
//! and application-level counters.
//!
//! A sample belongs to an object when one of the object's live intervals
//! contains both the sample's address and its timestamp. Samples matching no
//! interval still count toward the application totals, so object shares are
//! fractions of the whole application.

use serde::Serialize;

use crate::objects::{ObjectSignature, TrackedObject};
use crate::trace::{MemorySample, PerLevel, SampleKind};

/// Raw access counters shared by object- and application-level statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AccessCounters {
    pub loads: PerLevel<u64>,
    /// Summed load latency (cycles) per reporting level.
    pub latency_sum: PerLevel<u64>,
    pub tlb_hits: PerLevel<u64>,
    pub tlb_misses: PerLevel<u64>,
    pub stores: u64,
}

impl AccessCounters {
    pub fn record(&mut self, sample: &MemorySample) {
        match sample.kind {
            SampleKind::Load => {
                self.loads[sample.level] += 1;
                self.latency_sum[sample.level] += sample.latency.unwrap_or(0);
            }
            SampleKind::Store => self.stores += 1,
        }
        if let Some(tlb) = sample.tlb {
            if tlb.hit {
                self.tlb_hits[tlb.level] += 1;
            } else {
                self.tlb_misses[tlb.level] += 1;
            }
        }
    }

    pub fn total_loads(&self) -> u64 {
        self.loads.total()
    }

    /// Loads plus stores.
    pub fn total_ops(&self) -> u64 {
        self.total_loads() + self.stores
    }

    pub fn total_latency(&self) -> u64 {
        self.latency_sum.total()
    }

    /// Count of samples that carried a TLB outcome.
    pub fn total_tlb(&self) -> u64 {
        self.tlb_hits.total() + self.tlb_misses.total()
    }

    /// Component-wise subtraction; saturates at zero defensively although
    /// app counters always dominate object sums.
    pub fn minus(&self, other: &AccessCounters) -> AccessCounters {
        let mut out = *self;
        for level in crate::trace::MemoryLevel::ALL {
            out.loads[level] = out.loads[level].saturating_sub(other.loads[level]);
            out.latency_sum[level] = out.latency_sum[level].saturating_sub(other.latency_sum[level]);
            out.tlb_hits[level] = out.tlb_hits[level].saturating_sub(other.tlb_hits[level]);
            out.tlb_misses[level] = out.tlb_misses[level].saturating_sub(other.tlb_misses[level]);
        }
        out.stores = out.stores.saturating_sub(other.stores);
        out
    }
}

/// Counters for the samples attributed to one object.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ObjectStats {
    pub counters: AccessCounters,
    pub mapped_samples: u64,
}

/// Totals over every sample in the trace, mapped or not.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AppStats {
    pub counters: AccessCounters,
    pub unmapped_samples: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MappingDiagnostics {
    /// Samples contained by live intervals of two different signatures.
    pub ambiguous_samples: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MappingOutcome {
    /// Parallel to the input object list.
    pub object_stats: Vec<ObjectStats>,
    pub app: AppStats,
    pub diagnostics: MappingDiagnostics,
}

struct IndexEntry {
    base: u64,
    size: u64,
    t_start: u64,
    t_end: u64,
    object: usize,
    signature: ObjectSignature,
}

/// Interval lookup over (address, timestamp), built once per object set.
///
/// Entries are sorted by base address with a running maximum of interval end
/// addresses, so a query scans only the prefix that can still contain it.
pub struct IntervalIndex {
    entries: Vec<IndexEntry>,
    prefix_max_end: Vec<u64>,
}

impl IntervalIndex {
    pub fn build(objects: &[TrackedObject]) -> Self {
        let mut entries: Vec<IndexEntry> = objects
            .iter()
            .enumerate()
            .flat_map(|(object, obj)| {
                obj.intervals.iter().map(move |iv| IndexEntry {
                    base: iv.base,
                    size: iv.size,
                    t_start: iv.t_start,
                    t_end: iv.t_end,
                    object,
                    signature: obj.signature,
                })
            })
            .collect();
        entries.sort_by_key(|e| (e.base, e.t_start, e.signature));

        let mut prefix_max_end = Vec::with_capacity(entries.len());
        let mut max_end = 0u64;
        for e in &entries {
            max_end = max_end.max(e.base.saturating_add(e.size));
            prefix_max_end.push(max_end);
        }
        IntervalIndex { entries, prefix_max_end }
    }

    /// Finds the owning object for a sample, applying the tie-break for
    /// address reuse: when intervals of different signatures both contain
    /// the sample, the one with the later `t_start` wins (then the smaller
    /// signature). Returns the object index and whether the cross-signature
    /// ambiguity was observed.
    pub fn locate(&self, address: u64, timestamp: u64) -> (Option<usize>, bool) {
        let mut cursor = self.entries.partition_point(|e| e.base <= address);
        let mut best: Option<&IndexEntry> = None;
        let mut ambiguous = false;

        while cursor > 0 {
            cursor -= 1;
            if self.prefix_max_end[cursor] <= address {
                break;
            }
            let entry = &self.entries[cursor];
            if address < entry.base
                || address - entry.base >= entry.size
                || timestamp < entry.t_start
                || timestamp >= entry.t_end
            {
                continue;
            }
            match best {
                None => best = Some(entry),
                Some(current) => {
                    if current.signature != entry.signature {
                        ambiguous = true;
                    }
                    if entry.t_start > current.t_start
                        || (entry.t_start == current.t_start && entry.signature < current.signature)
                    {
                        best = Some(entry);
                    }
                }
            }
        }
        (best.map(|e| e.object), ambiguous)
    }
}

/// Maps every sample to at most one object and accumulates counters.
/// Deterministic: counters are order-independent sums.
pub fn map_samples(samples: &[MemorySample], objects: &[TrackedObject]) -> MappingOutcome {
    let index = IntervalIndex::build(objects);
    let mut outcome = MappingOutcome {
        object_stats: vec![ObjectStats::default(); objects.len()],
        ..Default::default()
    };

    for sample in samples {
        outcome.app.counters.record(sample);
        let (hit, ambiguous) = index.locate(sample.address, sample.timestamp);
        if ambiguous {
            outcome.diagnostics.ambiguous_samples += 1;
        }
        match hit {
            Some(object) => {
                let stats = &mut outcome.object_stats[object];
                stats.counters.record(sample);
                stats.mapped_samples += 1;
            }
            None => outcome.app.unmapped_samples += 1,
        }
    }
    outcome
}

/// Per-object raw counter dump, one CSV row per object.
pub fn stats_csv(objects: &[TrackedObject], stats: &[ObjectStats]) -> String {
    let mut out = String::from("object_id,label");
    for prefix in ["loads", "latency", "tlb_hit", "tlb_miss"] {
        for level in ["l1", "lfb", "l2", "l3", "dram"] {
            out.push_str(&format!(",{prefix}_{level}"));
        }
    }
    out.push_str(",stores,mapped_samples\n");

    for (obj, st) in objects.iter().zip(stats) {
        out.push_str(&format!("{},{}", obj.signature, obj.label.replace(',', "_")));
        for counts in [&st.counters.loads, &st.counters.latency_sum, &st.counters.tlb_hits, &st.counters.tlb_misses] {
            for v in counts.0 {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push_str(&format!(",{},{}\n", st.counters.stores, st.mapped_samples));
    }
    out
}

/// Reference O(objects × samples) mapper used to pin the indexed
/// implementation's behavior. Kept separate from the index on purpose.
pub fn map_samples_brute_force(samples: &[MemorySample], objects: &[TrackedObject]) -> MappingOutcome {
    let mut outcome = MappingOutcome {
        object_stats: vec![ObjectStats::default(); objects.len()],
        ..Default::default()
    };

    for sample in samples {
        outcome.app.counters.record(sample);

        let mut best: Option<(usize, u64, ObjectSignature)> = None;
        let mut signatures_seen: Option<ObjectSignature> = None;
        let mut ambiguous = false;
        for (idx, obj) in objects.iter().enumerate() {
            for iv in &obj.intervals {
                if !iv.contains(sample.address, sample.timestamp) {
                    continue;
                }
                match signatures_seen {
                    None => signatures_seen = Some(obj.signature),
                    Some(sig) if sig != obj.signature => ambiguous = true,
                    _ => {}
                }
                let candidate = (idx, iv.t_start, obj.signature);
                best = Some(match best {
                    None => candidate,
                    Some(current) => {
                        let (_, cur_start, cur_sig) = current;
                        if iv.t_start > cur_start || (iv.t_start == cur_start && obj.signature < cur_sig) {
                            candidate
                        } else {
                            current
                        }
                    }
                });
            }
        }
        if ambiguous {
            outcome.diagnostics.ambiguous_samples += 1;
        }
        match best {
            Some((idx, _, _)) => {
                outcome.object_stats[idx].counters.record(sample);
                outcome.object_stats[idx].mapped_samples += 1;
            }
            None => outcome.app.unmapped_samples += 1,
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::build_objects;
    use crate::trace::{parse_trace, MemoryLevel, TlbOutcome};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn one_object_trace() -> (Vec<TrackedObject>, Vec<MemorySample>) {
        let trace = parse_trace("RHOTRACE 1\nA 0 0x1000 256 x+0x1\nF 50 0x1000\n").unwrap();
        let (objects, _) = build_objects(&trace).unwrap();
        (objects, Vec::new())
    }

    #[test]
    fn maps_sample_inside_interval() {
        let (objects, _) = one_object_trace();
        let samples = vec![MemorySample::load(5, 0, 0x1010, MemoryLevel::Dram, 300, None)];
        let out = map_samples(&samples, &objects);
        assert_eq!(out.object_stats[0].mapped_samples, 1);
        assert_eq!(out.object_stats[0].counters.loads[MemoryLevel::Dram], 1);
        assert_eq!(out.object_stats[0].counters.latency_sum[MemoryLevel::Dram], 300);
        assert_eq!(out.app.unmapped_samples, 0);
    }

    #[test]
    fn lifetime_excludes_late_samples() {
        let (objects, _) = one_object_trace();
        let samples = vec![MemorySample::load(60, 0, 0x1010, MemoryLevel::Dram, 300, None)];
        let out = map_samples(&samples, &objects);
        assert_eq!(out.object_stats[0].mapped_samples, 0);
        assert_eq!(out.app.unmapped_samples, 1);
        // the sample still counts toward the app totals
        assert_eq!(out.app.counters.loads[MemoryLevel::Dram], 1);
    }

    #[test]
    fn address_reuse_attributes_to_later_interval() {
        let text = "RHOTRACE 1\nA 0 0x1000 256 x+0x1\nA 10 0x1000 256 y+0x2\nF 100 0x1000\nF 100 0x1000\n";
        let trace = parse_trace(text).unwrap();
        let (objects, _) = build_objects(&trace).unwrap();
        let samples = vec![MemorySample::store(20, 0, 0x1010, None)];
        let out = map_samples(&samples, &objects);
        assert_eq!(out.diagnostics.ambiguous_samples, 1);
        // object y opened later and owns the overlap
        assert_eq!(out.object_stats[1].mapped_samples, 1);
        assert_eq!(out.object_stats[0].mapped_samples, 0);
    }

    #[test]
    fn conservation_of_samples() {
        let (objects, _) = one_object_trace();
        let samples = vec![
            MemorySample::load(5, 0, 0x1010, MemoryLevel::L1, 4, None),
            MemorySample::load(5, 0, 0x9999, MemoryLevel::L1, 4, None),
            MemorySample::store(8, 0, 0x1020, None),
        ];
        let out = map_samples(&samples, &objects);
        let mapped: u64 = out.object_stats.iter().map(|s| s.mapped_samples).sum();
        assert_eq!(mapped + out.app.unmapped_samples, samples.len() as u64);
    }

    #[test]
    fn tlb_outcomes_accumulate_per_level() {
        let (objects, _) = one_object_trace();
        let hit = TlbOutcome { level: MemoryLevel::L1, hit: true };
        let miss = TlbOutcome { level: MemoryLevel::Dram, hit: false };
        let samples = vec![
            MemorySample::load(1, 0, 0x1000, MemoryLevel::L2, 14, Some(hit)),
            MemorySample::store(2, 0, 0x1008, Some(miss)),
        ];
        let out = map_samples(&samples, &objects);
        let c = &out.object_stats[0].counters;
        assert_eq!(c.tlb_hits[MemoryLevel::L1], 1);
        assert_eq!(c.tlb_misses[MemoryLevel::Dram], 1);
        assert_eq!(c.stores, 1);
    }

    fn random_fixture(rng: &mut ChaCha8Rng) -> (Vec<TrackedObject>, Vec<MemorySample>) {
        let n_objects = rng.random_range(1..=20);
        let mut text = String::from("RHOTRACE 1\n");
        for i in 0..n_objects {
            let base = 0x1000u64 + rng.random_range(0..40) * 0x100;
            let size = rng.random_range(1..=0x200u64);
            let t0 = rng.random_range(0..500u64);
            text.push_str(&format!("A {t0} 0x{base:x} {size} f{i}+0x{i:x}\n"));
            if rng.random_bool(0.7) {
                let t1 = t0 + rng.random_range(1..500u64);
                text.push_str(&format!("F {t1} 0x{base:x}\n"));
            }
        }
        let trace = parse_trace(&text).unwrap();
        // events must be time-ordered for the tracker
        let mut trace = trace;
        trace.alloc_events.sort_by_key(|e| e.timestamp());
        let (objects, _) = build_objects(&trace).unwrap();

        let n_samples = rng.random_range(0..2_000);
        let samples: Vec<MemorySample> = (0..n_samples)
            .map(|_| {
                let ts = rng.random_range(0..1_100u64);
                let addr = 0x1000u64 + rng.random_range(0..0x3000u64);
                let tlb = if rng.random_bool(0.5) {
                    Some(TlbOutcome {
                        level: *MemoryLevel::ALL.choose(rng).unwrap(),
                        hit: rng.random_bool(0.5),
                    })
                } else {
                    None
                };
                if rng.random_bool(0.6) {
                    let level = *MemoryLevel::ALL.choose(rng).unwrap();
                    MemorySample::load(ts, 0, addr, level, rng.random_range(1..400), tlb)
                } else {
                    MemorySample::store(ts, 0, addr, tlb)
                }
            })
            .collect();
        (objects, samples)
    }

    #[test]
    fn matches_brute_force_oracle_on_random_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..50 {
            let (objects, samples) = random_fixture(&mut rng);
            let fast = map_samples(&samples, &objects);
            let slow = map_samples_brute_force(&samples, &objects);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn app_totals_dominate_object_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (objects, samples) = random_fixture(&mut rng);
        let out = map_samples(&samples, &objects);
        let mut summed = AccessCounters::default();
        for st in &out.object_stats {
            for level in MemoryLevel::ALL {
                summed.loads[level] += st.counters.loads[level];
                summed.latency_sum[level] += st.counters.latency_sum[level];
                summed.tlb_hits[level] += st.counters.tlb_hits[level];
                summed.tlb_misses[level] += st.counters.tlb_misses[level];
            }
            summed.stores += st.counters.stores;
        }
        for level in MemoryLevel::ALL {
            assert!(out.app.counters.loads[level] >= summed.loads[level]);
            assert!(out.app.counters.latency_sum[level] >= summed.latency_sum[level]);
            assert!(out.app.counters.tlb_hits[level] >= summed.tlb_hits[level]);
            assert!(out.app.counters.tlb_misses[level] >= summed.tlb_misses[level]);
        }
        assert!(out.app.counters.stores >= summed.stores);
    }

    #[test]
    fn stats_csv_has_one_row_per_object() {
        let (objects, _) = one_object_trace();
        let out = map_samples(&[], &objects);
        let csv = stats_csv(&objects, &out.object_stats);
        assert_eq!(csv.lines().count(), 1 + objects.len());
        assert!(csv.starts_with("object_id,label,loads_l1"));
    }
}
