//! Node and cluster hardware model: memory channels, PCIe links, root
//! complex ports, NVLink pairs, and NICs, each with a bandwidth cap.
//!
//! Defaults follow a PCIe training node: 8 GPUs at 27 GB/s PCIe 4.0 x16,
//! 37.5 GB/s per root complex port (one port optionally shared by GPUs 5
//! and 6), 320 GB/s practical host memory bandwidth, one 200 Gbps NIC, and
//! optional 600 GB/s NVLink between GPU pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MEMORY_BW: f64 = 320e9;
pub const DEFAULT_PCIE_LINK_BW: f64 = 27e9;
pub const DEFAULT_ROOT_PORT_CAP: f64 = 37.5e9;
pub const DEFAULT_NVLINK_BW: f64 = 600e9;
pub const DEFAULT_NIC_BW: f64 = 25e9;
pub const DEFAULT_LINK_LATENCY_US: f64 = 2.0;
/// D2H transfers at or below this size take the low-latency copy path and
/// skip the async-copy launch latency.
pub const DEFAULT_GDRCOPY_D2H_THRESHOLD: u64 = 64 << 10;

/// Hardware parameters of one node. Bandwidths are bytes per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTopology {
    #[serde(default = "default_gpus")]
    pub gpus: u32,
    #[serde(default = "default_memory_bw")]
    pub memory_bw: f64,
    #[serde(default = "default_pcie_link_bw")]
    pub pcie_link_bw: f64,
    #[serde(default = "default_root_port_cap")]
    pub root_port_cap: f64,
    /// When set, GPUs 5 and 6 contend for a single root complex port.
    #[serde(default)]
    pub shared_root_port: bool,
    /// NVLink bandwidth per GPU pair, if bridges are installed.
    #[serde(default)]
    pub nvlink_bw: Option<f64>,
    #[serde(default = "default_nic_bw")]
    pub nic_bw: f64,
}

fn default_gpus() -> u32 {
    8
}
fn default_memory_bw() -> f64 {
    DEFAULT_MEMORY_BW
}
fn default_pcie_link_bw() -> f64 {
    DEFAULT_PCIE_LINK_BW
}
fn default_root_port_cap() -> f64 {
    DEFAULT_ROOT_PORT_CAP
}
fn default_nic_bw() -> f64 {
    DEFAULT_NIC_BW
}

impl Default for NodeTopology {
    fn default() -> Self {
        NodeTopology {
            gpus: 8,
            memory_bw: DEFAULT_MEMORY_BW,
            pcie_link_bw: DEFAULT_PCIE_LINK_BW,
            root_port_cap: DEFAULT_ROOT_PORT_CAP,
            shared_root_port: false,
            nvlink_bw: None,
            nic_bw: DEFAULT_NIC_BW,
        }
    }
}

impl NodeTopology {
    /// Root port used by a GPU. With the shared-port flag, GPUs 5 and 6
    /// collapse onto port 5; otherwise every GPU has its own port.
    pub fn root_port_of_gpu(&self, gpu: u32) -> u32 {
        if self.shared_root_port && gpu == 6 {
            5
        } else {
            gpu
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gpus == 0 {
            return Err(Error::invalid("node needs at least one GPU"));
        }
        for (name, v) in [
            ("memory_bw", self.memory_bw),
            ("pcie_link_bw", self.pcie_link_bw),
            ("root_port_cap", self.root_port_cap),
            ("nic_bw", self.nic_bw),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(nv) = self.nvlink_bw {
            if !(nv > 0.0) || !nv.is_finite() {
                return Err(Error::invalid(format!("nvlink_bw must be positive, got {nv}")));
            }
        }
        Ok(())
    }
}

/// The simulator's world model: the nodes plus the fabric between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTopology {
    pub nodes: Vec<NodeTopology>,
    /// NIC-to-NIC capacity between any node pair (full-bisection fabric).
    #[serde(default = "default_nic_bw")]
    pub inter_node_link_bw: f64,
    #[serde(default = "default_latency_us")]
    pub link_latency_us: f64,
    /// Effective fraction of a root port's capacity when traffic flows in
    /// both directions at once. Sweeping 0.8..1.0 brackets the observed
    /// degradation; 1.0 means no penalty.
    #[serde(default = "default_bidir")]
    pub bidir_efficiency: f64,
    #[serde(default = "default_gdr_threshold")]
    pub gdrcopy_d2h_threshold: u64,
    /// Launch latency (microseconds) of an async copy above the threshold.
    #[serde(default = "default_copy_latency_us")]
    pub copy_launch_latency_us: f64,
}

fn default_latency_us() -> f64 {
    DEFAULT_LINK_LATENCY_US
}
fn default_bidir() -> f64 {
    1.0
}
fn default_gdr_threshold() -> u64 {
    DEFAULT_GDRCOPY_D2H_THRESHOLD
}
fn default_copy_latency_us() -> f64 {
    2.0
}

impl ClusterTopology {
    /// Uniform cluster of `n` identical nodes.
    pub fn uniform(n: u32, node: NodeTopology) -> Self {
        ClusterTopology {
            inter_node_link_bw: node.nic_bw,
            nodes: vec![node; n as usize],
            link_latency_us: DEFAULT_LINK_LATENCY_US,
            bidir_efficiency: 1.0,
            gdrcopy_d2h_threshold: DEFAULT_GDRCOPY_D2H_THRESHOLD,
            copy_launch_latency_us: 2.0,
        }
    }

    pub fn node_count(&self) -> u32 {
        self.nodes.len() as u32
    }

    pub fn node(&self, id: u32) -> &NodeTopology {
        &self.nodes[id as usize]
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("cluster needs at least one node"));
        }
        for n in &self.nodes {
            n.validate()?;
        }
        if !(self.inter_node_link_bw > 0.0) || !self.inter_node_link_bw.is_finite() {
            return Err(Error::invalid("inter_node_link_bw must be positive"));
        }
        if !(self.bidir_efficiency > 0.0) || self.bidir_efficiency > 1.0 {
            return Err(Error::invalid(format!(
                "bidir_efficiency must be in (0, 1], got {}",
                self.bidir_efficiency
            )));
        }
        if self.link_latency_us < 0.0 || self.copy_launch_latency_us < 0.0 {
            return Err(Error::invalid("latencies must be non-negative"));
        }
        Ok(())
    }
}

/// Transfer direction relative to host memory; root ports degrade when both
/// directions are active at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Device to host (D2H).
    Up,
    /// Host to device (H2D).
    Down,
}

/// An exclusive-capacity resource in the fluid model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    HostMemory { node: u32 },
    PcieLink { node: u32, gpu: u32, up: bool },
    RootPort { node: u32, port: u32 },
    NvLink { node: u32, pair: u32 },
    NicSend { node: u32 },
    NicRecv { node: u32 },
    InterLink { src: u32, dst: u32 },
}

impl Resource {
    /// Nominal capacity in bytes/s (before any bidirectional penalty).
    pub fn capacity(&self, topo: &ClusterTopology) -> f64 {
        match *self {
            Resource::HostMemory { node } => topo.node(node).memory_bw,
            Resource::PcieLink { node, .. } => topo.node(node).pcie_link_bw,
            Resource::RootPort { node, .. } => topo.node(node).root_port_cap,
            Resource::NvLink { node, .. } => topo
                .node(node)
                .nvlink_bw
                .expect("NvLink resource on a node without NVLink"),
            Resource::NicSend { node } | Resource::NicRecv { node } => topo.node(node).nic_bw,
            Resource::InterLink { .. } => topo.inter_node_link_bw,
        }
    }

    /// Root ports pool their capacity across directions and lose
    /// `bidir_efficiency` of it when both directions are active.
    pub fn bidir_sensitive(&self) -> bool {
        matches!(self, Resource::RootPort { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_port_mapping() {
        let mut n = NodeTopology::default();
        assert_eq!(n.root_port_of_gpu(5), 5);
        assert_eq!(n.root_port_of_gpu(6), 6);
        n.shared_root_port = true;
        assert_eq!(n.root_port_of_gpu(5), 5);
        assert_eq!(n.root_port_of_gpu(6), 5);
        assert_eq!(n.root_port_of_gpu(4), 4);
    }

    #[test]
    fn validation_rejects_bad_capacities() {
        let mut topo = ClusterTopology::uniform(2, NodeTopology::default());
        assert!(topo.validate().is_ok());
        topo.nodes[0].memory_bw = 0.0;
        assert!(topo.validate().is_err());
        topo.nodes[0].memory_bw = 320e9;
        topo.bidir_efficiency = 0.0;
        assert!(topo.validate().is_err());
    }
}
