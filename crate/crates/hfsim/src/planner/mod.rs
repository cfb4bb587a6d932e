//! Network planning: fat-tree construction, two-zone partitioning with
//! dual-homed storage, static-route dispersion, cross-zone rank placement,
//! and relative cost arithmetic.

mod cost;
mod fat_tree;
mod routing;
mod zones;

pub use cost::{
    cost_compare, deployed_switch_count, table_defaults, ArchCost, CostModel, CostReport,
    CostRow, SwitchDecomposition,
};
pub use fat_tree::{
    plan_three_layer, plan_three_layer_with, plan_two_layer, two_layer_capacity, CoreSizing,
    FatTreePlan,
};
pub use routing::{disperse_static_routes, DispersionReport, Flow, RouteEntry, UplinkLoad};
pub use zones::{
    make_zones, place_ranks_for_crosszone, RankPlacement, StorageAttachment, ZoneLayout,
};
