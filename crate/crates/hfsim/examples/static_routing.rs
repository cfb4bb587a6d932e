//! Static-route dispersion over leaf-to-spine uplinks.
//!
//! Flows are pinned to uplinks (no adaptive routing); the round-robin deal
//! keeps every leaf's uplinks within one flow of each other, and traffic
//! classes are tracked per uplink so distinct classes never share a queue.
//!
//! ```bash
//! cargo run --example static_routing
//! ```

use hfsim::planner::{disperse_static_routes, plan_two_layer, Flow};

fn main() {
    let plan = plan_two_layer(800, 40).expect("within capacity");

    // Storage and allreduce flows leaving leaf 0 for scattered targets.
    let mut flows = Vec::new();
    for i in 0..37u32 {
        let mut f = Flow::new(i % 20, 40 + (i * 37) % 760);
        f.class = Some(if i % 3 == 0 { "storage" } else { "allreduce" }.to_string());
        flows.push(f);
    }

    let report = disperse_static_routes(&plan, &flows).expect("endpoints valid");

    println!("routed {} flows ({} stayed intra-leaf)", flows.len(), report.intra_leaf_flows);
    let (max, min) = report.leaf_load_spread(0).expect("leaf 0 routed flows");
    println!("leaf 0 uplink load: max {max}, min {min} (spread <= 1 by construction)\n");

    println!("leaf 0 uplinks with traffic:");
    for load in report.uplink_loads.iter().filter(|u| u.leaf == 0 && u.flows > 0).take(10) {
        let classes: Vec<String> = load
            .class_counts
            .iter()
            .map(|(c, n)| format!("{c} x{n}"))
            .collect();
        println!(
            "  uplink {:>2} -> spine {:>2}: {} flows [{}]",
            load.uplink,
            load.spine,
            load.flows,
            classes.join(", ")
        );
    }

    println!("\nsample routes:");
    for r in report.routes.iter().take(5) {
        match (r.uplink, r.spine) {
            (Some(u), Some(s)) => println!(
                "  {} -> {}: leaf {} uplink {} via spine {} to leaf {}",
                r.src, r.dst, r.src_leaf, u, s, r.dst_leaf
            ),
            _ => println!("  {} -> {}: stays on leaf {}", r.src, r.dst, r.src_leaf),
        }
    }
}
