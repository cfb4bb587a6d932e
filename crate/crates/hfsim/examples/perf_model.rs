//! The closed-form performance model, no simulation involved.
//!
//! ```bash
//! cargo run --example perf_model
//! ```

use hfsim::perf::{
    memory_ops_breakdown, memory_ops_multiplier, pcie_bandwidth_units, theoretical_peak_bw,
    AllreduceAlgorithm, H2dMode,
};

fn main() {
    // Per-node memory operations for one unit of per-GPU data.
    for h2d in [H2dMode::Gdrcopy, H2dMode::Memcpy] {
        let b = memory_ops_breakdown(8, h2d);
        println!(
            "{h2d:?}: D2H {}w + reduce {}r/{}w + IB send {}r + IB recv {}w/{}r + H2D {}r = {}x",
            b.d2h_writes,
            b.reduce_reads,
            b.reduce_writes,
            b.ib_send_reads,
            b.ib_recv_writes,
            b.ib_recv_reduce_reads,
            b.h2d_reads,
            b.total()
        );
    }

    // What those multiples mean against a real memory system.
    let memory_bw = 320e9;
    for h2d in [H2dMode::Gdrcopy, H2dMode::Memcpy] {
        let m = memory_ops_multiplier(h2d);
        let peak = theoretical_peak_bw(memory_bw, m).unwrap();
        println!(
            "at {} GB/s host memory, {h2d:?} caps allreduce at {:.2} GB/s",
            memory_bw / 1e9,
            peak / 1e9
        );
    }

    // PCIe units: ring allreduce versus one D2H + one H2D.
    println!("\nPCIe bidirectional bandwidth units per unit of data:");
    println!("  {:>5} {:>10} {:>12}", "GPUs", "ring", "host-staged");
    for n in [2u64, 4, 8, 16, 64] {
        let ring = pcie_bandwidth_units(AllreduceAlgorithm::Ring, n).unwrap();
        let host = pcie_bandwidth_units(AllreduceAlgorithm::HfReduce, n).unwrap();
        println!(
            "  {n:>5} {:>10} {:>12}",
            format!("{}/{}", ring.numer(), ring.denom()),
            host.to_integer()
        );
    }
}
