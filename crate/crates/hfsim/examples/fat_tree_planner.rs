//! Fat-tree planning: switch counts, two-zone layout with dual-homed
//! storage, cross-zone rank placement, and the architecture cost table.
//!
//! ```bash
//! cargo run --example fat_tree_planner
//! ```

use hfsim::planner::{
    cost_compare, deployed_switch_count, make_zones, place_ranks_for_crosszone, plan_three_layer,
    plan_two_layer, table_defaults,
};
use hfsim::tree::build_double_binary_tree;

fn main() {
    // A 40-port switch builds an 800-endpoint two-layer tree.
    let zone = plan_two_layer(800, 40).expect("within capacity");
    println!(
        "two-layer, 800 endpoints @ radix 40: {} leaves + {} spines = {} switches",
        zone.leaf_count,
        zone.spine_count,
        zone.total_switches()
    );

    for endpoints in [1600u32, 10000] {
        let plan = plan_three_layer(endpoints, 40).expect("within capacity");
        println!(
            "three-layer, {endpoints} endpoints: {} leaves + {} spines + {} cores = {} switches ({} pods)",
            plan.leaf_count, plan.spine_count, plan.core_count, plan.total_switches(), plan.pods
        );
    }

    // Two zones with 600 compute nodes each and 180 dual-homed storage
    // nodes; the deployed switch total adds interzone/management switches.
    let compute = plan_two_layer(600, 40).expect("within capacity");
    let layout = make_zones(&compute, &compute, 180, 2).expect("storage fits");
    let deployed = deployed_switch_count(&[&plan_two_layer(800, 40).unwrap(); 2], 2);
    println!(
        "\ntwo zones of 600 compute + 180 dual-homed storage nodes, {} interzone links",
        layout.interzone_links.len()
    );
    println!(
        "deployed switch count: {} fabric + {} interzone/management = {}",
        deployed.fabric_switches,
        deployed.interzone_and_management,
        deployed.total()
    );

    // Place a 64-rank job across the zones: the double binary tree needs
    // very few cross-zone edges under the best rotation.
    let tree = build_double_binary_tree(64).unwrap();
    let placement = place_ranks_for_crosszone(&layout, &tree).expect("ranks fit");
    println!(
        "64 ranks across zones: cross-zone edges tree A {}, tree B {} (rotation {})",
        placement.cross_edges_a, placement.cross_edges_b, placement.rotation
    );

    println!("\nrelative cost comparison:");
    let report = cost_compare(&table_defaults().unwrap()).unwrap();
    println!(
        "  {:<18} {:>8} {:>9} {:>7} {:>9}",
        "architecture", "switches", "total", "perf", "perf/cost"
    );
    for row in &report.rows {
        println!(
            "  {:<18} {:>8} {:>9} {:>6.0}% {:>9.3}",
            row.name,
            row.switch_count,
            row.total_price,
            100.0 * row.relative_performance,
            row.cost_performance_ratio
        );
    }
}
