//! Static-route dispersion: pin each flow to one leaf-to-spine uplink so
//! that per-uplink load stays balanced without adaptive routing.
//!
//! Flows from one leaf are sorted by destination and dealt round-robin over
//! that leaf's uplinks, which keeps max-min load difference at most one.
//! Flows carrying different traffic-class labels are tracked separately in
//! the report; distinct classes never share a simulated queue even when
//! they share an uplink.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::fat_tree::FatTreePlan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub src: u32,
    pub dst: u32,
    /// Traffic class label (service-level tag), if any.
    #[serde(default)]
    pub class: Option<String>,
}

impl Flow {
    pub fn new(src: u32, dst: u32) -> Self {
        Flow {
            src,
            dst,
            class: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RouteEntry {
    pub flow_index: usize,
    pub src: u32,
    pub dst: u32,
    pub src_leaf: u32,
    pub dst_leaf: u32,
    /// Uplink slot on the source leaf; None for intra-leaf flows.
    pub uplink: Option<u32>,
    pub spine: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UplinkLoad {
    pub leaf: u32,
    pub uplink: u32,
    pub spine: u32,
    pub flows: u32,
    pub class_counts: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DispersionReport {
    pub routes: Vec<RouteEntry>,
    pub uplink_loads: Vec<UplinkLoad>,
    pub intra_leaf_flows: u32,
}

impl DispersionReport {
    /// (max, min) routed-flow count over a leaf's uplinks.
    pub fn leaf_load_spread(&self, leaf: u32) -> Option<(u32, u32)> {
        let loads: Vec<u32> = self
            .uplink_loads
            .iter()
            .filter(|u| u.leaf == leaf)
            .map(|u| u.flows)
            .collect();
        if loads.is_empty() {
            return None;
        }
        Some((
            *loads.iter().max().unwrap(),
            *loads.iter().min().unwrap(),
        ))
    }
}

/// Routes every flow onto one uplink of its source leaf.
pub fn disperse_static_routes(plan: &FatTreePlan, flows: &[Flow]) -> Result<DispersionReport> {
    // Validate endpoints up front.
    for f in flows {
        plan.leaf_of(f.src)?;
        plan.leaf_of(f.dst)?;
    }

    // Group flow indices by source leaf, ordered by destination so the
    // round-robin deal is deterministic.
    let mut by_leaf: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, f) in flows.iter().enumerate() {
        by_leaf.entry(plan.leaf_of(f.src)?).or_default().push(i);
    }

    let mut routes: Vec<Option<RouteEntry>> = vec![None; flows.len()];
    let mut loads: BTreeMap<(u32, u32), (u32, BTreeMap<String, u32>)> = BTreeMap::new();
    let mut intra = 0u32;

    for (leaf, mut members) in by_leaf {
        members.sort_by_key(|&i| (flows[i].dst, flows[i].src, i));
        let uplinks = &plan.leaf_uplinks[leaf as usize];
        let mut next = 0u32;
        for i in members {
            let f = &flows[i];
            let dst_leaf = plan.leaf_of(f.dst)?;
            if dst_leaf == leaf || uplinks.is_empty() {
                intra += 1;
                routes[i] = Some(RouteEntry {
                    flow_index: i,
                    src: f.src,
                    dst: f.dst,
                    src_leaf: leaf,
                    dst_leaf,
                    uplink: None,
                    spine: None,
                });
                continue;
            }
            let slot = next % uplinks.len() as u32;
            next += 1;
            let spine = uplinks[slot as usize];
            let entry = loads.entry((leaf, slot)).or_default();
            entry.0 += 1;
            if let Some(class) = &f.class {
                *entry.1.entry(class.clone()).or_default() += 1;
            }
            routes[i] = Some(RouteEntry {
                flow_index: i,
                src: f.src,
                dst: f.dst,
                src_leaf: leaf,
                dst_leaf,
                uplink: Some(slot),
                spine: Some(spine),
            });
        }
    }

    // Report every uplink of leaves that routed at least one flow, so
    // zero-load slots show up in the spread.
    let mut uplink_loads = Vec::new();
    let active_leaves: Vec<u32> = {
        let mut l: Vec<u32> = loads.keys().map(|&(leaf, _)| leaf).collect();
        l.sort_unstable();
        l.dedup();
        l
    };
    for leaf in active_leaves {
        let uplinks = &plan.leaf_uplinks[leaf as usize];
        for (slot, &spine) in uplinks.iter().enumerate() {
            let (flows, class_counts) = loads
                .get(&(leaf, slot as u32))
                .cloned()
                .unwrap_or_default();
            uplink_loads.push(UplinkLoad {
                leaf,
                uplink: slot as u32,
                spine,
                flows,
                class_counts,
            });
        }
    }

    Ok(DispersionReport {
        routes: routes.into_iter().map(|r| r.expect("all flows routed")).collect(),
        uplink_loads,
        intra_leaf_flows: intra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::fat_tree::plan_two_layer;

    #[test]
    fn exact_balance_twenty_flows() {
        let plan = plan_two_layer(800, 40).unwrap();
        // 20 flows from leaf 0 (endpoints 0..20) to distinct remote leaves.
        let flows: Vec<Flow> = (0..20).map(|i| Flow::new(i, 100 + i * 20)).collect();
        let report = disperse_static_routes(&plan, &flows).unwrap();
        let (max, min) = report.leaf_load_spread(0).unwrap();
        assert_eq!((max, min), (1, 1));
    }

    #[test]
    fn pigeonhole_twenty_one_flows() {
        let plan = plan_two_layer(800, 40).unwrap();
        let flows: Vec<Flow> = (0..21).map(|i| Flow::new(i % 20, 100 + i * 7)).collect();
        let report = disperse_static_routes(&plan, &flows).unwrap();
        let (max, min) = report.leaf_load_spread(0).unwrap();
        assert_eq!((max, min), (2, 1));
    }

    #[test]
    fn unknown_endpoint_rejected() {
        let plan = plan_two_layer(100, 40).unwrap();
        assert!(disperse_static_routes(&plan, &[Flow::new(0, 5000)]).is_err());
    }

    #[test]
    fn intra_leaf_flows_stay_local() {
        let plan = plan_two_layer(800, 40).unwrap();
        let report = disperse_static_routes(&plan, &[Flow::new(0, 1)]).unwrap();
        assert_eq!(report.intra_leaf_flows, 1);
        assert!(report.routes[0].uplink.is_none());
    }

    #[test]
    fn class_labels_tracked_per_uplink() {
        let plan = plan_two_layer(800, 40).unwrap();
        let mut flows = Vec::new();
        for i in 0..4 {
            let mut f = Flow::new(0, 100 + i);
            f.class = Some(if i % 2 == 0 { "storage" } else { "allreduce" }.into());
            flows.push(f);
        }
        let report = disperse_static_routes(&plan, &flows).unwrap();
        let total_classes: u32 = report
            .uplink_loads
            .iter()
            .flat_map(|u| u.class_counts.values())
            .sum();
        assert_eq!(total_classes, 4);
    }

    #[test]
    fn spread_at_most_one_for_any_single_leaf_set() {
        let plan = plan_two_layer(800, 40).unwrap();
        // Arbitrary destinations, including duplicates.
        let flows: Vec<Flow> = (0..57)
            .map(|i| Flow::new(i % 20, 40 + (i * 13) % 700))
            .collect();
        let report = disperse_static_routes(&plan, &flows).unwrap();
        let (max, min) = report.leaf_load_spread(0).unwrap();
        assert!(max - min <= 1, "spread {max}-{min}");
    }
}
