//! JSON configuration files for the CLI: cluster descriptions, allreduce
//! job specifications, and incast scenarios. All randomness derives from
//! the job seed, so a (config, seed) pair pins every output byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{AllreduceJob, Mode};
use crate::error::{Error, Result};
use crate::perf::H2dMode;
use crate::topology::{ClusterTopology, NodeTopology};
use crate::types::{buffer_fill_pattern, Buffer, DType, DeviceRef, DEFAULT_CHUNK_SIZE};

/// Uniform-cluster shorthand for [`ClusterTopology`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub nodes: u32,
    #[serde(default)]
    pub node: NodeTopology,
    /// Defaults to the node NIC bandwidth.
    #[serde(default)]
    pub inter_node_link_bw: Option<f64>,
    #[serde(default = "default_latency_us")]
    pub link_latency_us: f64,
    #[serde(default = "default_bidir")]
    pub bidir_efficiency: f64,
    #[serde(default = "default_gdr_threshold")]
    pub gdrcopy_d2h_threshold: u64,
    #[serde(default = "default_copy_latency_us")]
    pub copy_launch_latency_us: f64,
}

fn default_latency_us() -> f64 {
    crate::topology::DEFAULT_LINK_LATENCY_US
}
fn default_bidir() -> f64 {
    1.0
}
fn default_gdr_threshold() -> u64 {
    crate::topology::DEFAULT_GDRCOPY_D2H_THRESHOLD
}
fn default_copy_latency_us() -> f64 {
    2.0
}

impl ClusterConfig {
    pub fn to_topology(&self) -> Result<ClusterTopology> {
        if self.nodes == 0 {
            return Err(Error::invalid("cluster needs at least one node"));
        }
        let topo = ClusterTopology {
            nodes: vec![self.node.clone(); self.nodes as usize],
            inter_node_link_bw: self.inter_node_link_bw.unwrap_or(self.node.nic_bw),
            link_latency_us: self.link_latency_us,
            bidir_efficiency: self.bidir_efficiency,
            gdrcopy_d2h_threshold: self.gdrcopy_d2h_threshold,
            copy_launch_latency_us: self.copy_launch_latency_us,
        };
        topo.validate()?;
        Ok(topo)
    }
}

/// An allreduce job: which cluster file to use and what to reduce.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobConfig {
    /// Path to the cluster JSON, relative to this file.
    pub cluster: String,
    pub dtype: DType,
    pub element_count: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_chunk")]
    pub chunk_size_bytes: u64,
    #[serde(default = "default_h2d")]
    pub h2d_mode: H2dMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub root: Option<u32>,
}

fn default_mode() -> Mode {
    Mode::HfReduce
}
fn default_chunk() -> u64 {
    DEFAULT_CHUNK_SIZE
}
fn default_h2d() -> H2dMode {
    H2dMode::Gdrcopy
}

pub fn load_cluster_config(path: &Path) -> Result<ClusterTopology> {
    let text = std::fs::read_to_string(path)?;
    let config: ClusterConfig = serde_json::from_str(&text)?;
    config.to_topology()
}

pub fn load_job(path: &Path) -> Result<(JobConfig, AllreduceJob)> {
    let text = std::fs::read_to_string(path)?;
    let config: JobConfig = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let cluster = load_cluster_config(&base.join(&config.cluster))?;
    let job = build_job(&config, cluster)?;
    Ok((config, job))
}

/// Generates the per-GPU input buffers for a job from its seed.
pub fn build_job(config: &JobConfig, cluster: ClusterTopology) -> Result<AllreduceJob> {
    let inputs = seeded_inputs(
        &cluster,
        config.dtype,
        config.element_count,
        config.seed,
    );
    Ok(AllreduceJob {
        cluster,
        inputs,
        chunk_size_bytes: config.chunk_size_bytes,
        mode: config.mode,
        h2d_mode: config.h2d_mode,
        root: config.root,
    })
}

/// Distinct deterministic stream per (seed, node, gpu).
pub fn input_seed(seed: u64, node: u32, gpu: u32) -> u64 {
    seed ^ (node as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (gpu as u64).wrapping_mul(0xd1b5_4a32_d192_ed03)
}

pub fn seeded_inputs(
    cluster: &ClusterTopology,
    dtype: DType,
    element_count: usize,
    seed: u64,
) -> Vec<Vec<Buffer>> {
    (0..cluster.node_count())
        .map(|i| {
            (0..cluster.node(i).gpus)
                .map(|g| {
                    let mut b = buffer_fill_pattern(dtype, element_count, input_seed(seed, i, g));
                    b.set_owner(DeviceRef::gpu(i, g));
                    b
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_config_defaults() {
        let config: ClusterConfig = serde_json::from_str(r#"{"nodes": 4}"#).unwrap();
        let topo = config.to_topology().unwrap();
        assert_eq!(topo.node_count(), 4);
        assert_eq!(topo.node(0).gpus, 8);
        assert_eq!(topo.inter_node_link_bw, 25e9);
    }

    #[test]
    fn job_inputs_deterministic() {
        let topo = ClusterConfig {
            nodes: 2,
            node: NodeTopology::default(),
            inter_node_link_bw: None,
            link_latency_us: 2.0,
            bidir_efficiency: 1.0,
            gdrcopy_d2h_threshold: 64 << 10,
            copy_launch_latency_us: 2.0,
        }
        .to_topology()
        .unwrap();
        let a = seeded_inputs(&topo, DType::Fp16, 32, 9);
        let b = seeded_inputs(&topo, DType::Fp16, 32, 9);
        assert_eq!(a[1][3].payload(), b[1][3].payload());
        // Distinct GPUs see distinct data.
        assert_ne!(a[0][0].payload(), a[0][1].payload());
    }

    #[test]
    fn zero_nodes_rejected() {
        let config: ClusterConfig = serde_json::from_str(r#"{"nodes": 0}"#).unwrap();
        assert!(config.to_topology().is_err());
    }
}
