//! Chunked host-staged allreduce across four 8-GPU nodes.
//!
//! Shows the full pipeline: D2H staging, CPU reduction, two-pass tree
//! allreduce over the fabric, and the H2D return trip, with the resulting
//! bandwidth and the per-node memory-operation ledger.
//!
//! ```bash
//! cargo run --example allreduce_pipeline
//! ```

use hfsim::config::seeded_inputs;
use hfsim::engine::{run_job, AllreduceJob, Mode};
use hfsim::perf::{memory_ops_multiplier, theoretical_peak_bw, H2dMode};
use hfsim::report::time_as_f64;
use hfsim::topology::{ClusterTopology, NodeTopology};
use hfsim::types::DType;

fn main() {
    let node = NodeTopology {
        shared_root_port: true,
        ..NodeTopology::default()
    };
    let cluster = ClusterTopology::uniform(4, node);

    // 16 MiB of fp32 gradients per GPU, 1 MiB pipeline chunks.
    let elements = (16 << 20) / 4;
    let inputs = seeded_inputs(&cluster, DType::Fp32, elements, 42);
    let job = AllreduceJob {
        cluster,
        inputs,
        chunk_size_bytes: 1 << 20,
        mode: Mode::HfReduce,
        h2d_mode: H2dMode::Gdrcopy,
        root: None,
    };

    let per_gpu_bytes = job.inputs[0][0].len_bytes();
    let outcome = run_job(&job).expect("job runs");

    let multiplier = memory_ops_multiplier(H2dMode::Gdrcopy);
    let cap = theoretical_peak_bw(job.cluster.node(0).memory_bw, multiplier).unwrap();
    println!(
        "allreduce of {} MiB/GPU over {} nodes in {} chunks",
        per_gpu_bytes >> 20,
        job.cluster.node_count(),
        outcome.chunk_plan.chunk_count()
    );
    println!(
        "makespan {:.3} ms, achieved {:.3} GB/s per node (theoretical cap {:.3} GB/s)",
        1e3 * time_as_f64(&outcome.makespan),
        outcome.achieved_bandwidth(per_gpu_bytes) / 1e9,
        cap / 1e9
    );

    println!("\nper-node memory traffic (multiplier {multiplier}):");
    for (i, ledger) in outcome.ledger.per_node.iter().enumerate() {
        println!(
            "  node {i}: reads {:>4} MiB  writes {:>4} MiB  total {:>4} MiB  ({}x per-GPU data)",
            ledger.reads.total() >> 20,
            ledger.writes.total() >> 20,
            ledger.total() >> 20,
            ledger.total() / per_gpu_bytes
        );
    }

    println!("\nfirst few timeline events:");
    for e in outcome.timeline.events.iter().take(6) {
        println!(
            "  {:<11} chunk {:?} {} -> {} ({} bytes)",
            e.kind.name(),
            e.chunk.unwrap_or(0),
            e.src,
            e.dst,
            e.bytes
        );
    }

    // The outputs are the global sum on every GPU; spot-check one element.
    let sample = outcome.outputs[0][0].to_f32()[0];
    println!("\nsample reduced element: {sample}");
}
