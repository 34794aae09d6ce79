//! Paged object-store simulator with two dynamic object clustering engines.
//!
//! * [`store`]: pages, placement, buffer pool, exact I/O accounting.
//! * [`stats`]: per-object and per-page usage statistics.
//! * [`dro`]: frequency-driven clustering over the reference graph.
//! * [`dstc`]: a co-usage observation baseline.
//! * [`workload`]: synthetic databases and traversal workloads.
//! * [`experiment`]: the before/after benchmark pipeline and its reports.

pub mod config;
pub mod dro;
pub mod dstc;
mod error;
pub mod experiment;
pub mod stats;
pub mod store;
pub mod workload;

pub use error::{Error, Result};
