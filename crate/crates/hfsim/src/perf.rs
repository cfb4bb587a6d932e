//! Closed-form performance model: per-node memory-operation accounting,
//! the theoretical throughput cap it implies, and PCIe bandwidth-unit
//! comparison between ring and host-staged allreduce.

use num_rational::Rational64;

use crate::error::{Error, Result};

/// How reduced data returns to the GPUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum H2dMode {
    /// CPU reads once per NUMA domain and fans out from cache.
    Gdrcopy,
    /// Separate host-memory read per GPU.
    Memcpy,
}

impl std::str::FromStr for H2dMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gdrcopy" | "gdr" => Ok(H2dMode::Gdrcopy),
            "memcpy" => Ok(H2dMode::Memcpy),
            other => Err(Error::invalid(format!("unknown h2d mode `{other}`"))),
        }
    }
}

/// Itemized per-node host-memory operations for one unit of per-GPU data
/// moving through a host-staged allreduce, in multiples of that unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemOpBreakdown {
    pub d2h_writes: u64,
    pub reduce_reads: u64,
    pub reduce_writes: u64,
    pub ib_send_reads: u64,
    pub ib_recv_writes: u64,
    pub ib_recv_reduce_reads: u64,
    pub h2d_reads: u64,
}

impl MemOpBreakdown {
    pub fn total(&self) -> u64 {
        self.d2h_writes
            + self.reduce_reads
            + self.reduce_writes
            + self.ib_send_reads
            + self.ib_recv_writes
            + self.ib_recv_reduce_reads
            + self.h2d_reads
    }
}

/// Breakdown for a node with `gpus` GPUs: every GPU's data is written to
/// host (D2H), all copies are read and one reduced copy written, the NIC
/// reads twice for sends and writes twice for receives plus one read for
/// the receive-side reduce add, and H2D costs two reads with cache fan-out
/// or one read per GPU with plain copies.
pub fn memory_ops_breakdown(gpus: u64, h2d_mode: H2dMode) -> MemOpBreakdown {
    let numa_domains = if gpus > 1 { 2 } else { 1 };
    MemOpBreakdown {
        d2h_writes: gpus,
        reduce_reads: gpus,
        reduce_writes: 1,
        ib_send_reads: 2,
        ib_recv_writes: 2,
        ib_recv_reduce_reads: 1,
        h2d_reads: match h2d_mode {
            H2dMode::Gdrcopy => numa_domains,
            H2dMode::Memcpy => gpus,
        },
    }
}

/// Total memory-operation multiple of the per-GPU data size for the default
/// 8-GPU node: 24 with GDRCopy, 30 with plain copies.
pub fn memory_ops_multiplier(h2d_mode: H2dMode) -> u64 {
    memory_ops_breakdown(8, h2d_mode).total()
}

/// Peak achievable allreduce bandwidth when host memory is the bottleneck:
/// `memory_bw / multiplier`.
pub fn theoretical_peak_bw(memory_bw: f64, multiplier: u64) -> Result<f64> {
    if multiplier == 0 {
        return Err(Error::invalid("multiplier must be positive"));
    }
    Ok(memory_bw / multiplier as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllreduceAlgorithm {
    Ring,
    HfReduce,
}

/// PCIe bidirectional bandwidth units consumed per unit of data: a ring
/// over `n` GPUs moves each unit 2n-1 times for (2n-1)/n units, while the
/// host-staged path needs exactly one D2H plus one H2D, one unit total.
pub fn pcie_bandwidth_units(algorithm: AllreduceAlgorithm, n: u64) -> Result<Rational64> {
    if n == 0 {
        return Err(Error::invalid("GPU count must be positive"));
    }
    Ok(match algorithm {
        AllreduceAlgorithm::Ring => Rational64::new(2 * n as i64 - 1, n as i64),
        AllreduceAlgorithm::HfReduce => Rational64::from_integer(1),
    })
}
