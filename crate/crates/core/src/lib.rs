//! Training-free KV-cache compression over dumped key tensors.
//!
//! The engine scores each cached position by its cosine anomaly against
//! three time-scale summaries of the key stream (a global stable anchor,
//! per-block episodic anchors, and sliding-window current anchors), blends
//! the three channels per head by their reliability gaps, routes tokens with
//! high cross-scale disagreement toward the strongest single channel, and
//! retains the top-scoring positions under a per-head or layer-wide budget.
//!
//! Everything is deterministic: fixed constants, seeded generators, ordered
//! reductions. Identical inputs produce identical outputs at any worker
//! count.

pub mod allocator;
pub mod baselines;
pub mod config;
pub mod continuum;
pub mod error;
pub mod opcount;
pub mod router;
pub mod scoring;
pub mod synthbench;
pub mod tensor;

pub use allocator::{compress, compress_layer, BudgetPlan};
pub use baselines::Method;
pub use config::{AllocConfig, BlockSchedule, EngineConfig, ScoringConfig, SINK_SENTINEL};
pub use error::{Error, Result};
pub use router::{nestedkv_score, nestedkv_trace};
pub use tensor::{CacheManifest, KeyStream, RetainedSet};
