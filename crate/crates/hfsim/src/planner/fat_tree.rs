//! Fat-tree plans: leaf/spine for two layers, pod-based leaf/spine/core for
//! three.
//!
//! A radix-`r` switch splits its ports evenly between downlinks and uplinks
//! (full bisection), so a two-layer tree tops out at `r²/2` endpoints and a
//! pod of a three-layer tree at `(r/2)²`. Core sizing for three layers
//! defaults to provisioning for the pod count rounded up to a power of two,
//! which matches deployed-practice switch counts; exact textbook sizing is
//! available as an option.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the three-layer core layer is sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreSizing {
    /// Provision cores for the pod count rounded up to a power of two.
    PowerOfTwoPods,
    /// Provision cores for exactly the pods in use.
    Exact,
}

impl std::str::FromStr for CoreSizing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pow2" | "power_of_two" | "power_of_two_pods" => Ok(CoreSizing::PowerOfTwoPods),
            "exact" => Ok(CoreSizing::Exact),
            other => Err(Error::invalid(format!("unknown core sizing `{other}`"))),
        }
    }
}

/// A planned fat-tree: switch counts plus full adjacency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FatTreePlan {
    pub radix: u32,
    pub layers: u32,
    pub endpoint_count: u32,
    pub leaf_count: u32,
    pub spine_count: u32,
    pub core_count: u32,
    pub pods: u32,
    /// Leaf switch of each endpoint.
    pub endpoint_leaf: Vec<u32>,
    /// Per leaf, the spine targeted by each uplink port (radix/2 entries,
    /// empty for the single-switch degenerate plan).
    pub leaf_uplinks: Vec<Vec<u32>>,
    /// Per spine, the core targeted by each uplink port (three layers only).
    pub spine_uplinks: Vec<Vec<u32>>,
}

impl FatTreePlan {
    pub fn total_switches(&self) -> u32 {
        self.leaf_count + self.spine_count + self.core_count
    }

    pub fn downlinks_per_leaf(&self) -> u32 {
        self.radix / 2
    }

    /// Endpoints attached to a leaf.
    pub fn leaf_of(&self, endpoint: u32) -> Result<u32> {
        self.endpoint_leaf
            .get(endpoint as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown endpoint {endpoint}")))
    }

    /// Spare endpoint ports across all leaves (for dual-homed storage).
    pub fn spare_leaf_ports(&self) -> u32 {
        self.leaf_count * self.downlinks_per_leaf() - self.endpoint_count
    }
}

fn check_radix(radix: u32) -> Result<u32> {
    if radix < 2 || radix % 2 != 0 {
        return Err(Error::invalid(format!(
            "radix must be an even number >= 2, got {radix}"
        )));
    }
    Ok(radix / 2)
}

/// Endpoint capacity of a two-layer plan: radix²/2.
pub fn two_layer_capacity(radix: u32) -> u64 {
    radix as u64 * radix as u64 / 2
}

/// Plans a leaf/spine tree. Every leaf devotes half its ports down and half
/// up; every leaf connects to every spine.
pub fn plan_two_layer(endpoints: u32, radix: u32) -> Result<FatTreePlan> {
    let half = check_radix(radix)?;
    if endpoints == 0 {
        return Err(Error::invalid("endpoint count must be positive"));
    }
    if endpoints as u64 > two_layer_capacity(radix) {
        return Err(Error::capacity(format!(
            "{endpoints} endpoints exceed two-layer capacity {} at radix {radix}",
            two_layer_capacity(radix)
        )));
    }
    let leaf_count = endpoints.div_ceil(half);
    // A single switch needs no spine layer.
    let spine_count = if leaf_count == 1 {
        0
    } else {
        (leaf_count * half).div_ceil(radix)
    };
    let endpoint_leaf = (0..endpoints).map(|e| e / half).collect();
    let leaf_uplinks = (0..leaf_count)
        .map(|_| {
            if spine_count == 0 {
                Vec::new()
            } else {
                (0..half).map(|j| j % spine_count).collect()
            }
        })
        .collect();
    Ok(FatTreePlan {
        radix,
        layers: 2,
        endpoint_count: endpoints,
        leaf_count,
        spine_count,
        core_count: 0,
        pods: 1,
        endpoint_leaf,
        leaf_uplinks,
        spine_uplinks: Vec::new(),
    })
}

/// Plans a pod-based three-layer tree with the default core sizing.
pub fn plan_three_layer(endpoints: u32, radix: u32) -> Result<FatTreePlan> {
    plan_three_layer_with(endpoints, radix, CoreSizing::PowerOfTwoPods)
}

pub fn plan_three_layer_with(
    endpoints: u32,
    radix: u32,
    core_sizing: CoreSizing,
) -> Result<FatTreePlan> {
    let half = check_radix(radix)?;
    if endpoints == 0 {
        return Err(Error::invalid("endpoint count must be positive"));
    }
    let capacity = radix as u64 * radix as u64 * radix as u64 / 4;
    if endpoints as u64 > capacity {
        return Err(Error::capacity(format!(
            "{endpoints} endpoints exceed three-layer capacity {capacity} at radix {radix}"
        )));
    }

    let pod_capacity = half * half;
    let pods = endpoints.div_ceil(pod_capacity);
    let leaf_count = endpoints.div_ceil(half);
    let spine_count = pods * half;
    let provisioned_pods = match core_sizing {
        CoreSizing::Exact => pods,
        CoreSizing::PowerOfTwoPods => pods.next_power_of_two(),
    };
    // Each pod's spines carry half*half uplinks; cores have `radix` ports.
    let core_count = (provisioned_pods * half * half).div_ceil(radix);

    let endpoint_leaf = (0..endpoints).map(|e| e / half).collect();
    let leaf_uplinks = (0..leaf_count)
        .map(|_| (0..half).map(|j| j % half).collect())
        .collect();
    // Spine k of each pod serves core group k.
    let spine_uplinks = (0..spine_count)
        .map(|s| {
            let k = s % half;
            (0..half).map(|j| (k * half + j) % core_count).collect()
        })
        .collect();

    Ok(FatTreePlan {
        radix,
        layers: 3,
        endpoint_count: endpoints,
        leaf_count,
        spine_count,
        core_count,
        pods,
        endpoint_leaf,
        leaf_uplinks,
        spine_uplinks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_layer_reference_config() {
        // 800 endpoints at radix 40: 40 leaves, 20 spines, 60 switches.
        let plan = plan_two_layer(800, 40).unwrap();
        assert_eq!(plan.leaf_count, 40);
        assert_eq!(plan.spine_count, 20);
        assert_eq!(plan.total_switches(), 60);
    }

    #[test]
    fn two_layer_single_switch_degenerate() {
        let plan = plan_two_layer(20, 40).unwrap();
        assert_eq!(plan.leaf_count, 1);
        assert_eq!(plan.spine_count, 0);
        assert_eq!(plan.total_switches(), 1);
    }

    #[test]
    fn two_layer_capacity_exceeded() {
        assert!(matches!(
            plan_two_layer(1600, 40),
            Err(Error::CapacityExceeded(_))
        ));
    }

    #[test]
    fn two_layer_full_bisection() {
        for endpoints in [40u32, 100, 321, 800] {
            let plan = plan_two_layer(endpoints, 40).unwrap();
            if plan.spine_count > 0 {
                for ups in &plan.leaf_uplinks {
                    assert_eq!(ups.len() as u32, plan.downlinks_per_leaf());
                    // Every leaf reaches every spine.
                    let mut spines: Vec<u32> = ups.clone();
                    spines.sort_unstable();
                    spines.dedup();
                    assert_eq!(spines.len() as u32, plan.spine_count);
                }
            }
        }
    }

    #[test]
    fn three_layer_1600_totals_200() {
        let plan = plan_three_layer(1600, 40).unwrap();
        assert_eq!(plan.pods, 4);
        assert_eq!(plan.leaf_count, 80);
        assert_eq!(plan.spine_count, 80);
        assert_eq!(plan.core_count, 40);
        assert_eq!(plan.total_switches(), 200);
    }

    #[test]
    fn three_layer_10000_totals_1320() {
        let plan = plan_three_layer(10000, 40).unwrap();
        assert_eq!(plan.leaf_count, 500);
        assert_eq!(plan.spine_count, 500);
        assert_eq!(plan.core_count, 320);
        assert_eq!(plan.total_switches(), 1320);
    }

    #[test]
    fn three_layer_exact_core_sizing() {
        let plan = plan_three_layer_with(10000, 40, CoreSizing::Exact).unwrap();
        // Textbook sizing: 25 pods * 20 spines * 20 uplinks / 40 ports.
        assert_eq!(plan.core_count, 250);
    }

    #[test]
    fn three_layer_two_layer_sized_input() {
        let plan = plan_three_layer(800, 40).unwrap();
        assert!(plan.total_switches() > 0);
    }

    #[test]
    fn bad_radix_rejected() {
        assert!(plan_two_layer(10, 0).is_err());
        assert!(plan_two_layer(10, 7).is_err());
        assert!(plan_three_layer(10, 3).is_err());
    }
}
