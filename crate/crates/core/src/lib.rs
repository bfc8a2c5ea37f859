//! Mapping of large application graphs onto the processing elements of a
//! hierarchically organized machine.
//!
//! The machine is a tree described bottom-up by children counts `H` and
//! per-level communication costs `D`. Every processing element (PE) gets a
//! bit-label encoding its ancestry so that the distance between two PEs is a
//! single `xor` plus a leading-zero count. Graph vertices are mapped to PEs by
//! a multilevel scheme: size-constrained label propagation coarsens the graph,
//! a hierarchy-aware recursive bisection partitions the coarsest level and the
//! solution is refined back up with a label propagation whose gain is the
//! communication cost (`Coco`) instead of the edge cut.
//!
//! The distributed algorithm runs on `V` virtual workers inside one process.
//! Each worker owns a contiguous vertex range, caches the labels of its ghost
//! vertices and exchanges label updates at phase boundaries with a delay of
//! exactly one phase.

pub mod cli;
pub mod distribution;
pub mod error;
pub mod gen;
pub mod graphio;
pub mod initpart;
pub mod lpa;
pub mod metrics;
pub mod pipeline;
pub mod topology;

mod seed;

pub use error::{Error, Result};
pub use graphio::{Graph, Mapping};
pub use pipeline::{map_graph, Objective, PipelineConfig, RunReport};
pub use topology::{HierarchySpec, Topology};
