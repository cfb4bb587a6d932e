//! Two-zone layouts: a pair of fat-tree zones joined by a limited set of
//! interzone links, with storage dual-homed so every compute node in either
//! zone reaches every storage node without crossing zones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{cross_zone_edge_count, DoubleBinaryTree};

use super::fat_tree::FatTreePlan;

/// One dual-homed storage node: a leaf attachment in each zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageAttachment {
    pub storage_id: u32,
    pub zone_a_leaf: u32,
    pub zone_b_leaf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLayout {
    /// Zone plans sized for compute plus storage attachments.
    pub zone_a: FatTreePlan,
    pub zone_b: FatTreePlan,
    pub compute_a: u32,
    pub compute_b: u32,
    /// Zone of each global compute endpoint: zone A endpoints first.
    pub zone_of_endpoint: Vec<u32>,
    pub storage: Vec<StorageAttachment>,
    /// Interzone link endpoints as (zone A spine, zone B spine) pairs.
    pub interzone_links: Vec<(u32, u32)>,
}

impl ZoneLayout {
    pub fn compute_endpoints(&self) -> u32 {
        self.compute_a + self.compute_b
    }

    /// Cross-zone jobs need at least one interzone link.
    pub fn cross_zone_feasible(&self) -> bool {
        !self.interzone_links.is_empty()
    }
}

/// Joins two zone plans, dual-homing `storage_nodes` into leaf ports of
/// both zones (expanding each zone's leaf layer as needed, up to its port
/// capacity) and recording `interzone_links` spine-to-spine links.
pub fn make_zones(
    plan_a: &FatTreePlan,
    plan_b: &FatTreePlan,
    storage_nodes: u32,
    interzone_links: u32,
) -> Result<ZoneLayout> {
    // Re-plan each zone sized for compute plus storage attachments; compute
    // endpoints keep the low indices, storage takes the tail ports.
    let expand = |name: &str, plan: &FatTreePlan| -> Result<FatTreePlan> {
        let capacity = super::fat_tree::two_layer_capacity(plan.radix);
        let need = plan.endpoint_count as u64 + storage_nodes as u64;
        if need > capacity {
            return Err(Error::capacity(format!(
                "{name} has {} spare leaf ports for {} storage nodes",
                capacity - plan.endpoint_count as u64,
                storage_nodes
            )));
        }
        super::fat_tree::plan_two_layer(need as u32, plan.radix)
    };
    let compute_a = plan_a.endpoint_count;
    let compute_b = plan_b.endpoint_count;
    let expanded_a = expand("zone A", plan_a)?;
    let expanded_b = expand("zone B", plan_b)?;

    // Storage slots are the tail attachment indices of each expanded plan.
    let storage = (0..storage_nodes)
        .map(|s| StorageAttachment {
            storage_id: s,
            zone_a_leaf: expanded_a.endpoint_leaf[(compute_a + s) as usize],
            zone_b_leaf: expanded_b.endpoint_leaf[(compute_b + s) as usize],
        })
        .collect();
    let (plan_a, plan_b) = (&expanded_a, &expanded_b);

    let zone_of_endpoint = (0..compute_a)
        .map(|_| 0)
        .chain((0..compute_b).map(|_| 1))
        .collect();

    let pick_spine = |plan: &FatTreePlan, i: u32| {
        if plan.spine_count == 0 {
            0
        } else {
            i % plan.spine_count
        }
    };
    let interzone_links = (0..interzone_links)
        .map(|i| (pick_spine(plan_a, i), pick_spine(plan_b, i)))
        .collect();

    Ok(ZoneLayout {
        zone_a: plan_a.clone(),
        zone_b: plan_b.clone(),
        compute_a,
        compute_b,
        zone_of_endpoint,
        storage,
        interzone_links,
    })
}

/// Where each rank landed and what it cost in cross-zone tree edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankPlacement {
    /// Rotation applied to the contiguous per-zone assignment.
    pub rotation: u32,
    pub zone_of_rank: Vec<u32>,
    pub cross_edges_a: u32,
    pub cross_edges_b: u32,
}

impl RankPlacement {
    pub fn total_cross_edges(&self) -> u32 {
        self.cross_edges_a + self.cross_edges_b
    }
}

/// Assigns ranks contiguously per zone (split proportional to zone size),
/// then picks the rotation that minimizes cross-zone tree edges. Returns
/// the achieved minimum rather than asserting any particular count.
pub fn place_ranks_for_crosszone(layout: &ZoneLayout, tree: &DoubleBinaryTree) -> Result<RankPlacement> {
    let n = tree.n;
    let total = layout.compute_endpoints();
    if n > total {
        return Err(Error::invalid(format!(
            "{n} ranks exceed {total} compute endpoints"
        )));
    }
    if total == 0 {
        return Err(Error::invalid("layout has no compute endpoints"));
    }
    // Ranks in zone A, proportional to its share of endpoints.
    let in_a = ((n as u64 * layout.compute_a as u64) / total as u64) as u32;
    let base: Vec<u32> = (0..n).map(|r| if r < in_a { 0 } else { 1 }).collect();

    let mut best: Option<RankPlacement> = None;
    for rotation in 0..n {
        let zone_of_rank: Vec<u32> = (0..n)
            .map(|r| base[((r + rotation) % n) as usize])
            .collect();
        let (a, b) = cross_zone_edge_count(tree, &zone_of_rank);
        let candidate = RankPlacement {
            rotation,
            zone_of_rank,
            cross_edges_a: a,
            cross_edges_b: b,
        };
        let better = match &best {
            None => true,
            Some(cur) => candidate.total_cross_edges() < cur.total_cross_edges(),
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("n >= 1"))
}
