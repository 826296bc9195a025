//! Offline toolkit for ranking application objects by their impact on
//! hybrid-memory (DRAM/PMEM) placement.
//!
//! The pipeline stages map onto the modules below:
//!
//! 1. [`trace`] — canonical text format for access samples and allocation events
//! 2. [`objects`] — allocation-site tracking via call-stack hash signatures
//! 3. [`mapper`] — attribution of samples to tracked objects
//! 4. [`features`] — per-object feature rows with binary rank labels
//! 5. [`ranker`] — gradient-boosted listwise ranker with lambda gradients
//! 6. [`metrics`] — Top-1 accuracy, MRR, performance loss, NDCG
//! 7. [`sim`] — hybrid-memory cost model, ground-truth labeling and the
//!    synthetic workload generator
//! 8. [`pipeline`] — glue that turns traces into datasets and reports

pub mod features;
pub mod mapper;
pub mod metrics;
pub mod objects;
pub mod pipeline;
pub mod ranker;
pub mod report;
pub mod sim;
pub mod trace;

pub use mapper::{map_samples, AppStats, MappingOutcome, ObjectStats};
pub use objects::{build_objects, ObjectSignature, TrackedObject};
pub use trace::{parse_trace, write_trace, MemoryLevel, MemorySample, TraceFile};
