//! Relative cost arithmetic across cluster architectures. All ratios and
//! totals are computed from stored inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::fat_tree::{plan_three_layer, plan_two_layer, FatTreePlan};

/// Cost and performance figures for one architecture, in relative units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchCost {
    pub name: String,
    pub gemm_tf32_tflops: f64,
    pub gemm_fp16_tflops: f64,
    /// Relative performance versus the reference architecture (1.0).
    pub relative_performance: f64,
    /// Node price relative to the reference architecture (1.0).
    pub node_relative_price: f64,
    pub power_watts: f64,
    pub switch_count: u32,
    pub network_price: f64,
    pub server_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub architectures: Vec<ArchCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub name: String,
    pub relative_performance: f64,
    pub node_relative_price: f64,
    /// relative_performance / node_relative_price.
    pub cost_performance_ratio: f64,
    pub switch_count: u32,
    pub network_price: f64,
    pub server_price: f64,
    /// network_price + server_price.
    pub total_price: f64,
    pub power_watts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

/// Computes ratios and totals per architecture.
pub fn cost_compare(model: &CostModel) -> Result<CostReport> {
    if model.architectures.is_empty() {
        return Err(Error::invalid("cost model has no architectures"));
    }
    let mut rows = Vec::with_capacity(model.architectures.len());
    for a in &model.architectures {
        if a.node_relative_price == 0.0 {
            return Err(Error::invalid(format!(
                "architecture `{}` has zero node price",
                a.name
            )));
        }
        rows.push(CostRow {
            name: a.name.clone(),
            relative_performance: a.relative_performance,
            node_relative_price: a.node_relative_price,
            cost_performance_ratio: a.relative_performance / a.node_relative_price,
            switch_count: a.switch_count,
            network_price: a.network_price,
            server_price: a.server_price,
            total_price: a.network_price + a.server_price,
            power_watts: a.power_watts,
        });
    }
    Ok(CostReport { rows })
}

/// Switch count of a deployed two-zone cluster: the fabric switches of both
/// zones plus interzone/management switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SwitchDecomposition {
    pub fabric_switches: u32,
    pub interzone_and_management: u32,
}

impl SwitchDecomposition {
    pub fn total(&self) -> u32 {
        self.fabric_switches + self.interzone_and_management
    }
}

pub fn deployed_switch_count(zones: &[&FatTreePlan], extra_switches: u32) -> SwitchDecomposition {
    SwitchDecomposition {
        fabric_switches: zones.iter().map(|z| z.total_switches()).sum(),
        interzone_and_management: extra_switches,
    }
}

/// Reference cost model: a two-zone PCIe cluster, the same nodes behind a
/// single three-layer fat-tree, and an SXM cluster with a per-GPU rail
/// network. Switch counts come from the planner, not constants.
pub fn table_defaults() -> Result<CostModel> {
    let zone = plan_two_layer(800, 40)?;
    let two_zone = deployed_switch_count(&[&zone, &zone], 2);
    let three_layer = plan_three_layer(1600, 40)?;
    let sxm_fabric = plan_three_layer(10000, 40)?;

    Ok(CostModel {
        architectures: vec![
            ArchCost {
                name: "pcie-two-zone".into(),
                gemm_tf32_tflops: 107.0,
                gemm_fp16_tflops: 220.0,
                relative_performance: 0.83,
                node_relative_price: 0.60,
                power_watts: 2500.0,
                switch_count: two_zone.total(),
                network_price: 350.0,
                server_price: 11250.0,
            },
            ArchCost {
                name: "pcie-three-layer".into(),
                gemm_tf32_tflops: 107.0,
                gemm_fp16_tflops: 220.0,
                relative_performance: 0.83,
                node_relative_price: 0.60,
                power_watts: 2500.0,
                switch_count: three_layer.total_switches(),
                network_price: 600.0,
                server_price: 11250.0,
            },
            ArchCost {
                name: "sxm-reference".into(),
                gemm_tf32_tflops: 131.0,
                gemm_fp16_tflops: 263.0,
                relative_performance: 1.0,
                node_relative_price: 1.0,
                power_watts: 4200.0,
                switch_count: sxm_fabric.total_switches(),
                network_price: 4000.0,
                server_price: 19000.0,
            },
        ],
    })
}
