//! Concentration analytics for benchmark ecosystems.
//!
//! The crate has two halves. The empirical half ([`ingest`], [`metrics`],
//! [`graph`], [`analytics`]) turns registry snapshot files into authority
//! tables, concentration indices, tripartite-graph centralities and yearly
//! indicator PCA. The simulation half ([`abm`], [`sweep`]) evolves an
//! agent-based model of evaluative attention (superlinear preferential
//! attachment, over-fit debt, benchmark entry) and maps its steady-state
//! HHI over the penalty/entry-rate plane.
//!
//! Everything is deterministic: identical inputs and seeds give bit-identical
//! outputs regardless of thread count.

pub mod abm;
pub mod analytics;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod sweep;

pub use error::{Error, Result};
