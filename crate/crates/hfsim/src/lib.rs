//! Desk-scale, deterministic model of a CPU-mediated allreduce stack.
//!
//! The crate simulates the full path a gradient takes through a PCIe
//! training node: device-to-host transfers, CPU reduction, double-binary-
//! tree inter-node allreduce over RDMA-style links, and the return trip to
//! the GPUs, all executed on an exact-arithmetic fluid fabric simulator.
//! Around that core sit the supporting tools such a system needs: fat-tree
//! network planning with zone partitioning and static-route dispersion, an
//! analytical performance model (memory-operation multipliers, PCIe
//! bandwidth units, theoretical throughput caps), request-to-send incast
//! control, and an indexed tensor checkpoint format.
//!
//! Every run is bit-deterministic: reductions use a fixed accumulation
//! order, simulated time is rational arithmetic, and all randomness flows
//! from explicit seeds. That makes the headline claims in this domain
//! (bandwidth caps, memory-traffic multiples, switch counts) testable as
//! exact properties.
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `hfsim` binary for the command-line front end.

pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod error;
pub mod incast;
pub mod perf;
pub mod planner;
pub mod reduce;
pub mod report;
pub mod sim;
pub mod topology;
pub mod tree;
pub mod types;

pub use error::{Error, Result};
