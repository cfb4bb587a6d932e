//! Root-complex-port contention, straight on the fluid simulator.
//!
//! Two GPUs sharing one root port cannot exceed its pooled bandwidth even
//! though each PCIe link could individually run faster, and simultaneous
//! bidirectional traffic degrades the pool further.
//!
//! ```bash
//! cargo run --example fabric_contention
//! ```

use hfsim::sim::{run, Endpoint, EventKind, EventPhase, EventSpec, Program, Task};
use hfsim::topology::{ClusterTopology, Direction, NodeTopology, Resource};

fn stream(gpu: u32, up: bool, bytes: u64) -> Task {
    Task {
        deps: vec![],
        ready_offset: hfsim::sim::time_zero(),
        work: bytes,
        resources: vec![
            Resource::PcieLink { node: 0, gpu, up },
            Resource::RootPort { node: 0, port: 5 },
        ],
        direction: Some(if up { Direction::Up } else { Direction::Down }),
        events: vec![EventSpec {
            kind: if up { EventKind::D2hWrite } else { EventKind::H2d },
            phase: if up { EventPhase::D2h } else { EventPhase::H2d },
            src: Endpoint::Gpu { node: 0, index: gpu },
            dst: Endpoint::Host { node: 0 },
            bytes,
            node: 0,
            chunk: None,
        }],
    }
}

fn main() {
    let gib = 1u64 << 30;
    let mut topo = ClusterTopology::uniform(
        1,
        NodeTopology {
            shared_root_port: true,
            ..NodeTopology::default()
        },
    );

    // One stream: PCIe-limited at 27 GB/s.
    let mut p = Program::new();
    p.push(stream(5, true, gib));
    let solo = run(&topo, &p).expect("runs");
    println!(
        "one D2H stream:  {:.2} GB/s (PCIe link limit)",
        gib as f64 / hfsim::report::time_as_f64(&solo.makespan) / 1e9
    );

    // Two same-direction streams: the 37.5 GB/s port pool is the limit.
    let mut p = Program::new();
    p.push(stream(5, true, gib));
    p.push(stream(6, true, gib));
    let paired = run(&topo, &p).expect("runs");
    println!(
        "two D2H streams: {:.2} GB/s aggregate (root-port pool)",
        2.0 * gib as f64 / hfsim::report::time_as_f64(&paired.makespan) / 1e9
    );

    // Opposite directions with a bidirectional penalty.
    for eff in [1.0, 0.9, 0.8] {
        topo.bidir_efficiency = eff;
        let mut p = Program::new();
        p.push(stream(5, true, gib));
        p.push(stream(6, false, gib));
        let bidir = run(&topo, &p).expect("runs");
        println!(
            "bidirectional @ efficiency {eff}: {:.2} GB/s aggregate",
            2.0 * gib as f64 / hfsim::report::time_as_f64(&bidir.makespan) / 1e9
        );
    }
}
