//! Request-to-send admission control for many-to-one (incast) traffic.
//!
//! Senders holding data ask the receiver for permission before transmitting;
//! the receiver grants at most `concurrency_limit` transfers at a time, in
//! request order. That bounds the receiver-side queue at the cost of
//! handshake latency. Setting the limit to the sender count reproduces the
//! uncontrolled case where every sender fires at once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{
    self, time_from_us, Endpoint, EventKind, EventPhase, EventSpec, Program, Task, TaskId,
    Timeline,
};
use crate::topology::{ClusterTopology, NodeTopology, Resource};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncastParams {
    pub senders: u32,
    /// Maximum concurrent granted transfers. `senders` disables control.
    pub concurrency_limit: u32,
    /// Receiver link capacity, bytes/s.
    #[serde(default = "default_link_bw")]
    pub link_bw: f64,
    pub per_request_bytes: u64,
    #[serde(default = "default_latency_us")]
    pub latency_us: f64,
}

fn default_link_bw() -> f64 {
    crate::topology::DEFAULT_NIC_BW
}
fn default_latency_us() -> f64 {
    crate::topology::DEFAULT_LINK_LATENCY_US
}

pub struct IncastOutcome {
    pub timeline: Timeline,
    pub makespan: sim::Time,
    /// Total payload bytes over the makespan, bytes/s.
    pub goodput: f64,
    /// Peak number of granted-and-unfinished transfers at the receiver.
    pub peak_queue_depth: u32,
    pub peak_queue_bytes: u64,
}

/// Runs the incast scenario. The receiver is node 0; senders are nodes
/// `1..=senders`. Admission is FIFO by request arrival, which the DAG
/// encodes as: grant k waits for transfer k-limit to finish.
pub fn incast_rts(params: &IncastParams) -> Result<IncastOutcome> {
    if params.senders == 0 {
        return Err(Error::invalid("need at least one sender"));
    }
    if params.concurrency_limit == 0 {
        return Err(Error::invalid("concurrency limit must be positive"));
    }
    if !(params.link_bw > 0.0) {
        return Err(Error::invalid("link bandwidth must be positive"));
    }

    let receiver = 0u32;
    let node = NodeTopology {
        nic_bw: params.link_bw,
        ..NodeTopology::default()
    };
    let mut topo = ClusterTopology::uniform(params.senders + 1, node);
    topo.inter_node_link_bw = params.link_bw;
    topo.link_latency_us = params.latency_us;

    if params.per_request_bytes == 0 {
        // Nothing to move: zero goodput, empty timeline.
        return Ok(IncastOutcome {
            timeline: Timeline { events: Vec::new() },
            makespan: sim::time_zero(),
            goodput: 0.0,
            peak_queue_depth: 0,
            peak_queue_bytes: 0,
        });
    }

    let mut program = Program::new();
    let latency = time_from_us(params.latency_us);
    let mut transfer_ids: Vec<TaskId> = Vec::with_capacity(params.senders as usize);

    for k in 0..params.senders {
        let sender = k + 1;
        // Request-to-send reaches the receiver one hop later.
        let mut request = Task::marker(vec![]);
        request.ready_offset = latency.clone();
        request.events.push(EventSpec {
            kind: EventKind::NicSend,
            phase: EventPhase::Request,
            src: Endpoint::Nic { node: sender },
            dst: Endpoint::Nic { node: receiver },
            bytes: 0,
            node: sender,
            chunk: None,
        });
        let request_id = program.push(request);

        // FIFO admission: the k-th grant additionally waits for transfer
        // k - limit to complete.
        let mut grant_deps = vec![request_id];
        if k >= params.concurrency_limit {
            grant_deps.push(transfer_ids[(k - params.concurrency_limit) as usize]);
        }
        let mut grant = Task::marker(grant_deps);
        grant.ready_offset = latency.clone();
        grant.events.push(EventSpec {
            kind: EventKind::NicSend,
            phase: EventPhase::Grant,
            src: Endpoint::Nic { node: receiver },
            dst: Endpoint::Nic { node: sender },
            bytes: 0,
            node: receiver,
            chunk: None,
        });
        let grant_id = program.push(grant);

        let transfer = Task {
            deps: vec![grant_id],
            ready_offset: latency.clone(),
            work: params.per_request_bytes,
            resources: vec![
                Resource::NicSend { node: sender },
                Resource::InterLink { src: sender, dst: receiver },
                Resource::NicRecv { node: receiver },
            ],
            direction: None,
            events: vec![EventSpec {
                kind: EventKind::NicRecv,
                phase: EventPhase::Transfer,
                src: Endpoint::Nic { node: sender },
                dst: Endpoint::Nic { node: receiver },
                bytes: params.per_request_bytes,
                node: receiver,
                chunk: None,
            }],
        };
        transfer_ids.push(program.push(transfer));
    }

    let outcome = sim::run(&topo, &program)?;
    let peak = outcome
        .timeline
        .peak_concurrency(|e| e.phase == EventPhase::Transfer) as u32;
    let total_bytes = params.senders as u64 * params.per_request_bytes;
    let makespan_s = sim::time_to_f64(&outcome.makespan);
    let goodput = if makespan_s > 0.0 {
        total_bytes as f64 / makespan_s
    } else {
        0.0
    };
    Ok(IncastOutcome {
        timeline: outcome.timeline,
        makespan: outcome.makespan,
        goodput,
        peak_queue_depth: peak,
        peak_queue_bytes: peak as u64 * params.per_request_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_byte_requests_empty_timeline() {
        let out = incast_rts(&IncastParams {
            senders: 8,
            concurrency_limit: 2,
            link_bw: 25e9,
            per_request_bytes: 0,
            latency_us: 2.0,
        })
        .unwrap();
        assert!(out.timeline.events.is_empty());
        assert_eq!(out.goodput, 0.0);
    }

    #[test]
    fn single_sender_depth_one() {
        let out = incast_rts(&IncastParams {
            senders: 1,
            concurrency_limit: 1,
            link_bw: 1e9,
            per_request_bytes: 1 << 20,
            latency_us: 2.0,
        })
        .unwrap();
        assert_eq!(out.peak_queue_depth, 1);
        // Goodput equals link_bw scaled by transfer/total time.
        let transfer_s = (1u64 << 20) as f64 / 1e9;
        let total_s = sim::time_to_f64(&out.makespan);
        assert!(total_s > transfer_s);
        let expect = 1e9 * (transfer_s / total_s);
        assert!((out.goodput - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn limit_bounds_queue_depth() {
        let limited = incast_rts(&IncastParams {
            senders: 16,
            concurrency_limit: 4,
            link_bw: 25e9,
            per_request_bytes: 1 << 20,
            latency_us: 2.0,
        })
        .unwrap();
        assert_eq!(limited.peak_queue_depth, 4);

        let unlimited = incast_rts(&IncastParams {
            senders: 16,
            concurrency_limit: 16,
            link_bw: 25e9,
            per_request_bytes: 1 << 20,
            latency_us: 2.0,
        })
        .unwrap();
        assert_eq!(unlimited.peak_queue_depth, 16);
    }

    #[test]
    fn pipelined_goodput_near_link_capacity() {
        let out = incast_rts(&IncastParams {
            senders: 32,
            concurrency_limit: 4,
            link_bw: 25e9,
            per_request_bytes: 4 << 20,
            latency_us: 2.0,
        })
        .unwrap();
        assert!(out.goodput > 0.95 * 25e9, "goodput {}", out.goodput);
    }

    #[test]
    fn invalid_params_rejected() {
        let base = IncastParams {
            senders: 4,
            concurrency_limit: 2,
            link_bw: 25e9,
            per_request_bytes: 1024,
            latency_us: 2.0,
        };
        assert!(incast_rts(&IncastParams { senders: 0, ..base.clone() }).is_err());
        assert!(incast_rts(&IncastParams { concurrency_limit: 0, ..base.clone() }).is_err());
        assert!(incast_rts(&IncastParams { link_bw: 0.0, ..base }).is_err());
    }
}
