//! Request-to-send incast control: many senders, one receiver.
//!
//! Without admission control every sender fires at once and the receiver
//! queue grows with the sender count. With RTS the receiver grants a few
//! transfers at a time: the queue stays bounded while goodput still
//! approaches link capacity once the grant pipeline fills.
//!
//! ```bash
//! cargo run --example incast_rts
//! ```

use hfsim::incast::{incast_rts, IncastParams};
use hfsim::report::time_as_f64;

fn main() {
    let senders = 64;
    let base = IncastParams {
        senders,
        concurrency_limit: senders, // no control
        link_bw: 25e9,
        per_request_bytes: 4 << 20,
        latency_us: 2.0,
    };

    println!(
        "{senders} senders, {} MiB per request, {} GB/s receiver link\n",
        base.per_request_bytes >> 20,
        base.link_bw / 1e9
    );
    println!(
        "{:>6} {:>12} {:>14} {:>10}",
        "limit", "peak queue", "queue bytes", "goodput"
    );
    for limit in [senders, 16, 4, 1] {
        let outcome = incast_rts(&IncastParams {
            concurrency_limit: limit,
            ..base.clone()
        })
        .expect("params valid");
        println!(
            "{:>6} {:>12} {:>11} MiB {:>9.1}%",
            limit,
            outcome.peak_queue_depth,
            outcome.peak_queue_bytes >> 20,
            100.0 * outcome.goodput / base.link_bw
        );
    }

    let controlled = incast_rts(&IncastParams {
        concurrency_limit: 4,
        ..base
    })
    .unwrap();
    println!(
        "\nwith limit 4: whole burst finished in {:.2} ms, queue never above 4 requests",
        1e3 * time_as_f64(&controlled.makespan)
    );
}
