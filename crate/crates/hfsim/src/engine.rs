//! The allreduce state machine.
//!
//! A job runs in three stages: every GPU's data is staged to host memory in
//! pipeline chunks (D2H), each node folds its local copies on the CPU, and
//! the per-node partials are combined across nodes over a double binary
//! tree (reduce up, gather down) before returning to the GPUs (H2D). The
//! NVLink variant pre-reduces GPU pairs over NVLink first, halving the
//! host-write volume, and finishes with a split H2D plus an NVLink
//! allgather. One-shot reduce and broadcast reuse the same machinery with
//! a single rotated tree.
//!
//! Values and timing are computed together but independently: buffer math
//! uses a fixed accumulation order (ascending GPU index within a node,
//! left-then-right child order up the tree), while the task DAG handed to
//! the fluid simulator determines logical timestamps, contention, and the
//! memory-operation ledger. Even-indexed chunks ride tree A, odd chunks
//! tree B.
//!
//! Ledger accounting for allreduce follows the steady-state per-node model:
//! each node is charged two send reads, two receive writes, and one
//! receive-side reduce read per chunk, uniformly, regardless of its tree
//! position. Network events, in contrast, follow the actual tree edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perf::H2dMode;
use crate::reduce::{reduce_add, reduce_many, ReduceOrder};
use crate::sim::{
    self, time_from_us, time_zero, Endpoint, EventKind, EventPhase, EventSpec, Program, Task,
    TaskId, Time,
};
use crate::topology::{ClusterTopology, Direction, Resource};
use crate::tree::{build_double_binary_tree, DoubleBinaryTree, TreeLinks};
use crate::types::{make_chunk_plan, numa_domain_of_gpu, Buffer, ChunkPlan, DeviceRef};

/// Collective flavor executed by a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HfReduce,
    HfReduceNvlink,
    ReduceOnly,
    Broadcast,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hfreduce" => Ok(Mode::HfReduce),
            "hfreduce_nvlink" | "nvlink" => Ok(Mode::HfReduceNvlink),
            "reduce_only" | "reduce" => Ok(Mode::ReduceOnly),
            "broadcast" => Ok(Mode::Broadcast),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// A fully specified collective: topology, per-GPU inputs, and knobs.
#[derive(Debug, Clone)]
pub struct AllreduceJob {
    pub cluster: ClusterTopology,
    /// `inputs[node][gpu]`, identical dtype and element count everywhere.
    pub inputs: Vec<Vec<Buffer>>,
    pub chunk_size_bytes: u64,
    pub mode: Mode,
    pub h2d_mode: H2dMode,
    /// Designated root for reduce-only / broadcast. Reduce-only without a
    /// root keeps the trees' own roots (per-chunk).
    pub root: Option<u32>,
}

/// Pipeline stage of one chunk. Stages only ever advance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChunkPhase {
    D2h,
    IntraReduce,
    InterPass1,
    InterPass2,
    H2d,
    Done,
}

/// Per-chunk bookkeeping: stage, per-node partials (the locally reduced
/// data), and data received from remote nodes during pass 1.
#[derive(Debug, Clone)]
pub struct ChunkState {
    pub chunk: u32,
    pub phase: ChunkPhase,
    pub partials: Vec<Option<Buffer>>,
    pub received: Vec<Vec<Buffer>>,
}

impl ChunkState {
    pub fn new(chunk: u32, nodes: usize) -> Self {
        ChunkState {
            chunk,
            phase: ChunkPhase::D2h,
            partials: vec![None; nodes],
            received: vec![Vec::new(); nodes],
        }
    }

    /// Moves to `next`, which must not be an earlier stage.
    pub fn advance(&mut self, next: ChunkPhase) -> Result<()> {
        if next < self.phase {
            return Err(Error::protocol(format!(
                "chunk {} phase may not regress from {:?} to {:?}",
                self.chunk, self.phase, next
            )));
        }
        self.phase = next;
        Ok(())
    }
}

/// Result of executing a job: output buffers plus the simulated record.
pub struct HfOutcome {
    pub outputs: Vec<Vec<Buffer>>,
    pub timeline: sim::Timeline,
    pub ledger: sim::MemOpLedger,
    pub makespan: Time,
    pub tree: DoubleBinaryTree,
    pub chunk_plan: ChunkPlan,
    pub rate_trace: Vec<sim::RateSegment>,
}

impl HfOutcome {
    /// Per-node achieved allreduce bandwidth: per-GPU bytes over makespan.
    pub fn achieved_bandwidth(&self, per_gpu_bytes: u64) -> f64 {
        let t = sim::time_to_f64(&self.makespan);
        if t == 0.0 {
            return 0.0;
        }
        per_gpu_bytes as f64 / t
    }
}

fn validate_job(job: &AllreduceJob) -> Result<(usize, usize)> {
    job.cluster.validate()?;
    let nodes = job.cluster.node_count() as usize;
    if job.inputs.len() != nodes {
        return Err(Error::invalid(format!(
            "job has {} input nodes for a {}-node cluster",
            job.inputs.len(),
            nodes
        )));
    }
    let gpus = job.cluster.node(0).gpus as usize;
    let first = job
        .inputs
        .first()
        .and_then(|n| n.first())
        .ok_or_else(|| Error::invalid("job has no input buffers"))?;
    for (i, node_inputs) in job.inputs.iter().enumerate() {
        if node_inputs.len() != gpus {
            return Err(Error::invalid(format!(
                "node {} has {} buffers, expected {}",
                i,
                node_inputs.len(),
                gpus
            )));
        }
        for b in node_inputs {
            if b.dtype() != first.dtype() || b.element_count() != first.element_count() {
                return Err(Error::invalid(
                    "all input buffers must share dtype and element count",
                ));
            }
        }
    }
    if job.chunk_size_bytes == 0 {
        return Err(Error::invalid("chunk size must be positive"));
    }
    if job.mode == Mode::HfReduceNvlink {
        if gpus % 2 != 0 {
            return Err(Error::invalid("NVLink mode needs an even GPU count"));
        }
        for (i, n) in job.cluster.nodes.iter().enumerate() {
            if n.nvlink_bw.is_none() {
                return Err(Error::invalid(format!(
                    "NVLink mode requires NVLink links on every node (missing on node {i})"
                )));
            }
        }
    }
    if job.mode == Mode::Broadcast && job.root.is_none() {
        return Err(Error::invalid("broadcast needs a designated root"));
    }
    if let Some(r) = job.root {
        if r as usize >= nodes {
            return Err(Error::invalid(format!("root {r} out of range")));
        }
    }
    Ok((nodes, gpus))
}

/// Rotates every rank of a tree by `shift` (mod n).
fn rotate_tree(t: &TreeLinks, shift: u32, n: u32) -> TreeLinks {
    let map = |r: u32| (r + shift) % n;
    let mut out = TreeLinks {
        root: map(t.root),
        parent: vec![None; n as usize],
        left: vec![None; n as usize],
        right: vec![None; n as usize],
    };
    for r in 0..n {
        let nr = map(r) as usize;
        out.parent[nr] = t.parent[r as usize].map(map);
        out.left[nr] = t.left[r as usize].map(map);
        out.right[nr] = t.right[r as usize].map(map);
    }
    out
}

/// Tree carrying a given chunk: even chunks ride tree A, odd chunks tree B.
fn tree_for_chunk(tree: &DoubleBinaryTree, chunk: u32) -> &TreeLinks {
    if chunk % 2 == 0 {
        &tree.tree_a
    } else {
        &tree.tree_b
    }
}

/// Folds `acc += subtree(child)` bottom-up, left child before right. This
/// is the declared inter-node accumulation order.
fn fold_up(tree: &TreeLinks, rank: u32, vals: &mut [Option<Buffer>]) -> Result<()> {
    let children: Vec<u32> = tree.children(rank).collect();
    for c in children {
        fold_up(tree, c, vals)?;
        let child_val = vals[c as usize]
            .clone()
            .ok_or_else(|| Error::protocol(format!("rank {c} has no partial")))?;
        let acc = vals[rank as usize]
            .take()
            .ok_or_else(|| Error::protocol(format!("rank {rank} has no partial")))?;
        vals[rank as usize] = Some(reduce_add(&acc, &child_val)?);
    }
    Ok(())
}

/// Fold of staged host slices in ascending order; a missing slice is a
/// protocol violation (its D2H never completed).
pub fn fold_host_slices(slices: &[Option<Buffer>]) -> Result<Buffer> {
    let mut bufs = Vec::with_capacity(slices.len());
    for (g, s) in slices.iter().enumerate() {
        match s {
            Some(b) => bufs.push(b.clone()),
            None => {
                return Err(Error::protocol(format!(
                    "GPU {g} slice missing from host staging"
                )))
            }
        }
    }
    reduce_many(&bufs, &ReduceOrder::ascending(bufs.len()))
}

/// Intra-node reduction of one chunk: the in-order fold of every GPU's
/// chunk slice after staging to host memory.
pub fn intra_node_reduce(job: &AllreduceJob, node: u32, chunk: u32) -> Result<Buffer> {
    let (_, _) = validate_job(job)?;
    let first = &job.inputs[0][0];
    let plan = make_chunk_plan(first.len_bytes(), job.chunk_size_bytes)?;
    let range = *plan
        .chunks
        .get(chunk as usize)
        .ok_or_else(|| Error::invalid(format!("chunk {chunk} out of range")))?;
    let staged: Vec<Option<Buffer>> = job.inputs[node as usize]
        .iter()
        .map(|b| b.sub_buffer(range.offset, range.length).ok())
        .collect();
    let mut out = fold_host_slices(&staged)?;
    out.set_owner(DeviceRef::cpu(node));
    Ok(out)
}

/// Inter-node allreduce of one chunk's per-node partials: pass 1 reduces up
/// the chunk's tree, pass 2 hands the root's total back down. Every node
/// ends holding the identical global sum.
pub fn inter_node_allreduce(job: &AllreduceJob, chunk: u32) -> Result<Vec<Buffer>> {
    let (nodes, _) = validate_job(job)?;
    let tree = build_double_binary_tree(nodes as u32)?;
    let links = tree_for_chunk(&tree, chunk);
    let mut vals: Vec<Option<Buffer>> = (0..nodes as u32)
        .map(|i| intra_node_reduce(job, i, chunk).map(Some))
        .collect::<Result<_>>()?;
    fold_up(links, links.root, &mut vals)?;
    let global = vals[links.root as usize]
        .clone()
        .ok_or_else(|| Error::protocol("root has no reduced value"))?;
    Ok(vec![global; nodes])
}

/// Builds the event program a job would execute, without running it. The
/// program can be handed to [`sim::run`] directly.
pub fn build_event_program(job: &AllreduceJob) -> Result<Program> {
    let (nodes, gpus) = validate_job(job)?;
    let first = &job.inputs[0][0];
    let plan = make_chunk_plan(first.len_bytes(), job.chunk_size_bytes)?;
    let mut tree = build_double_binary_tree(nodes as u32)?;
    if let Some(root) = job.root {
        if matches!(job.mode, Mode::ReduceOnly | Mode::Broadcast) {
            let n = nodes as u32;
            tree.tree_a = rotate_tree(&tree.tree_a, (root + n - tree.tree_a.root) % n, n);
            tree.tree_b = rotate_tree(&tree.tree_b, (root + n - tree.tree_b.root) % n, n);
        }
    }
    build_program(job, &plan, &tree, nodes, gpus)
}

/// Executes a job in any mode.
pub fn run_job(job: &AllreduceJob) -> Result<HfOutcome> {
    run_job_with_options(job, &sim::RunOptions::default())
}

pub fn run_job_with_options(job: &AllreduceJob, options: &sim::RunOptions) -> Result<HfOutcome> {
    let (nodes, gpus) = validate_job(job)?;
    let first = &job.inputs[0][0];
    let plan = make_chunk_plan(first.len_bytes(), job.chunk_size_bytes)?;
    let mut tree = build_double_binary_tree(nodes as u32)?;
    if let Some(root) = job.root {
        if matches!(job.mode, Mode::ReduceOnly | Mode::Broadcast) {
            let n = nodes as u32;
            tree.tree_a = rotate_tree(&tree.tree_a, (root + n - tree.tree_a.root) % n, n);
            tree.tree_b = rotate_tree(&tree.tree_b, (root + n - tree.tree_b.root) % n, n);
        }
    }

    let outputs = compute_values(job, &plan, &tree, nodes, gpus)?;
    let program = build_program(job, &plan, &tree, nodes, gpus)?;
    let outcome = sim::run_with_options(&job.cluster, &program, options)?;
    Ok(HfOutcome {
        outputs,
        timeline: outcome.timeline,
        ledger: outcome.ledger,
        makespan: outcome.makespan,
        tree,
        chunk_plan: plan,
        rate_trace: outcome.rate_trace,
    })
}

/// Plain host-staged allreduce.
pub fn hfreduce(job: &AllreduceJob) -> Result<HfOutcome> {
    if job.mode != Mode::HfReduce {
        return Err(Error::invalid("hfreduce requires mode hf_reduce"));
    }
    run_job(job)
}

/// NVLink variant: pair pre-reduce, half-volume staging, split return plus
/// NVLink allgather.
pub fn hfreduce_nvlink(job: &AllreduceJob) -> Result<HfOutcome> {
    if job.mode != Mode::HfReduceNvlink {
        return Err(Error::invalid("hfreduce_nvlink requires mode hf_reduce_nvlink"));
    }
    run_job(job)
}

/// General reduce (pass 1 only) or broadcast (pass 2 only).
pub fn reduce_or_broadcast(job: &AllreduceJob) -> Result<HfOutcome> {
    if !matches!(job.mode, Mode::ReduceOnly | Mode::Broadcast) {
        return Err(Error::invalid(
            "reduce_or_broadcast requires mode reduce_only or broadcast",
        ));
    }
    run_job(job)
}

/// Buffer math for every mode, chunk by chunk, through the chunk state
/// machine. Returns `outputs[node][gpu]`.
fn compute_values(
    job: &AllreduceJob,
    plan: &ChunkPlan,
    tree: &DoubleBinaryTree,
    nodes: usize,
    gpus: usize,
) -> Result<Vec<Vec<Buffer>>> {
    let mut outputs: Vec<Vec<Buffer>> = job
        .inputs
        .iter()
        .enumerate()
        .map(|(i, bufs)| {
            bufs.iter()
                .enumerate()
                .map(|(g, b)| {
                    let mut out = b.clone();
                    out.set_owner(DeviceRef::gpu(i as u32, g as u32));
                    out
                })
                .collect()
        })
        .collect();

    for (c, range) in plan.chunks.iter().enumerate() {
        let chunk = c as u32;
        let mut state = ChunkState::new(chunk, nodes);
        let links = tree_for_chunk(tree, chunk);

        if job.mode == Mode::Broadcast {
            let root = job.root.expect("validated") as usize;
            let data = job.inputs[root][0].sub_buffer(range.offset, range.length)?;
            state.advance(ChunkPhase::InterPass2)?;
            state.advance(ChunkPhase::H2d)?;
            for (i, node_out) in outputs.iter_mut().enumerate() {
                let _ = i;
                for out in node_out.iter_mut() {
                    out.write_bytes(range.offset, data.payload())?;
                }
            }
            state.advance(ChunkPhase::Done)?;
            continue;
        }

        // D2H staging + intra-node fold.
        state.advance(ChunkPhase::IntraReduce)?;
        for i in 0..nodes {
            let partial = if job.mode == Mode::HfReduceNvlink {
                let mut pair_sums = Vec::with_capacity(gpus / 2);
                for k in 0..gpus / 2 {
                    let a = job.inputs[i][2 * k].sub_buffer(range.offset, range.length)?;
                    let b = job.inputs[i][2 * k + 1].sub_buffer(range.offset, range.length)?;
                    pair_sums.push(reduce_add(&a, &b)?);
                }
                let mut v = reduce_many(&pair_sums, &ReduceOrder::ascending(pair_sums.len()))?;
                v.set_owner(DeviceRef::cpu(i as u32));
                v
            } else {
                let staged: Vec<Option<Buffer>> = job.inputs[i]
                    .iter()
                    .map(|b| b.sub_buffer(range.offset, range.length).ok())
                    .collect();
                let mut v = fold_host_slices(&staged)?;
                v.set_owner(DeviceRef::cpu(i as u32));
                v
            };
            state.partials[i] = Some(partial);
        }

        // Pass 1: reduce up the tree.
        if nodes > 1 {
            state.advance(ChunkPhase::InterPass1)?;
            for i in 0..nodes {
                for c in links.children(i as u32) {
                    let v = state.partials[c as usize]
                        .clone()
                        .ok_or_else(|| Error::protocol("missing child partial"))?;
                    state.received[i].push(v);
                }
            }
            fold_up(links, links.root, &mut state.partials)?;
        }
        let root_val = state.partials[links.root as usize]
            .clone()
            .ok_or_else(|| Error::protocol("root has no value"))?;

        if job.mode == Mode::ReduceOnly {
            state.advance(ChunkPhase::H2d)?;
            // The root's GPUs receive the sum; everyone else keeps inputs.
            for out in outputs[links.root as usize].iter_mut() {
                out.write_bytes(range.offset, root_val.payload())?;
            }
            state.advance(ChunkPhase::Done)?;
            continue;
        }

        // Pass 2: every node receives the root's total.
        if nodes > 1 {
            state.advance(ChunkPhase::InterPass2)?;
        }
        state.advance(ChunkPhase::H2d)?;
        for node_out in outputs.iter_mut() {
            for out in node_out.iter_mut() {
                out.write_bytes(range.offset, root_val.payload())?;
            }
        }
        state.advance(ChunkPhase::Done)?;
    }
    Ok(outputs)
}

/// Per-(node, chunk) task handles while building the DAG.
struct BuildCtx {
    program: Program,
    latency: Time,
    copy_latency: Time,
    gdr_threshold: u64,
    last_d2h: Vec<Vec<Option<TaskId>>>,
    last_h2d: Vec<Vec<Option<TaskId>>>,
    // Pre-reduce and allgather keep separate per-pair queues so later
    // chunks' pre-reduces never wait on earlier chunks' allgathers.
    last_nvlink: Vec<Vec<[Option<TaskId>; 2]>>,
}

impl BuildCtx {
    fn new(topo: &ClusterTopology, nodes: usize, gpus: usize) -> Self {
        BuildCtx {
            program: Program::new(),
            latency: time_from_us(topo.link_latency_us),
            copy_latency: time_from_us(topo.copy_launch_latency_us),
            gdr_threshold: topo.gdrcopy_d2h_threshold,
            last_d2h: vec![vec![None; gpus]; nodes],
            last_h2d: vec![vec![None; gpus]; nodes],
            last_nvlink: vec![vec![[None; 2]; gpus / 2 + 1]; nodes],
        }
    }

    fn d2h(&mut self, topo: &ClusterTopology, node: u32, gpu: u32, bytes: u64, chunk: u32, extra_deps: Vec<TaskId>) -> TaskId {
        let mut deps = extra_deps;
        if let Some(prev) = self.last_d2h[node as usize][gpu as usize] {
            deps.push(prev);
        }
        let port = topo.node(node).root_port_of_gpu(gpu);
        let offset = if bytes > self.gdr_threshold {
            self.copy_latency.clone()
        } else {
            time_zero()
        };
        let id = self.program.push(Task {
            deps,
            ready_offset: offset,
            work: bytes,
            resources: vec![
                Resource::PcieLink { node, gpu, up: true },
                Resource::RootPort { node, port },
                Resource::HostMemory { node },
            ],
            direction: Some(Direction::Up),
            events: vec![EventSpec {
                kind: EventKind::D2hWrite,
                phase: EventPhase::D2h,
                src: Endpoint::Gpu { node, index: gpu },
                dst: Endpoint::Host { node },
                bytes,
                node,
                chunk: Some(chunk),
            }],
        });
        self.last_d2h[node as usize][gpu as usize] = Some(id);
        id
    }

    /// CPU fold: reads every staged copy, writes one reduced copy.
    fn reduce(&mut self, node: u32, copies: u64, bytes: u64, chunk: u32, deps: Vec<TaskId>) -> TaskId {
        let host = Endpoint::Host { node };
        self.program.push(Task {
            deps,
            ready_offset: time_zero(),
            work: (copies + 1) * bytes,
            resources: vec![Resource::HostMemory { node }],
            direction: None,
            events: vec![
                EventSpec {
                    kind: EventKind::HostRead,
                    phase: EventPhase::Reduce,
                    src: host,
                    dst: host,
                    bytes: copies * bytes,
                    node,
                    chunk: Some(chunk),
                },
                EventSpec {
                    kind: EventKind::HostWrite,
                    phase: EventPhase::Reduce,
                    src: host,
                    dst: host,
                    bytes,
                    node,
                    chunk: Some(chunk),
                },
            ],
        })
    }

    fn host_mem(&mut self, node: u32, kind: EventKind, phase: EventPhase, bytes: u64, work: u64, chunk: u32, deps: Vec<TaskId>) -> TaskId {
        let host = Endpoint::Host { node };
        self.program.push(Task {
            deps,
            ready_offset: time_zero(),
            work,
            resources: vec![Resource::HostMemory { node }],
            direction: None,
            events: vec![EventSpec {
                kind,
                phase,
                src: host,
                dst: host,
                bytes,
                node,
                chunk: Some(chunk),
            }],
        })
    }

    /// NIC-to-NIC transfer along a tree edge.
    fn net(&mut self, src: u32, dst: u32, bytes: u64, phase: EventPhase, chunk: u32, deps: Vec<TaskId>) -> TaskId {
        self.program.push(Task {
            deps,
            ready_offset: self.latency.clone(),
            work: bytes,
            resources: vec![
                Resource::NicSend { node: src },
                Resource::InterLink { src, dst },
                Resource::NicRecv { node: dst },
            ],
            direction: None,
            events: vec![
                EventSpec {
                    kind: EventKind::NicSend,
                    phase,
                    src: Endpoint::Nic { node: src },
                    dst: Endpoint::Nic { node: dst },
                    bytes,
                    node: src,
                    chunk: Some(chunk),
                },
                EventSpec {
                    kind: EventKind::NicRecv,
                    phase,
                    src: Endpoint::Nic { node: src },
                    dst: Endpoint::Nic { node: dst },
                    bytes,
                    node: dst,
                    chunk: Some(chunk),
                },
            ],
        })
    }

    fn h2d(&mut self, topo: &ClusterTopology, node: u32, gpu: u32, bytes: u64, with_memory: bool, chunk: u32, extra_deps: Vec<TaskId>) -> TaskId {
        let mut deps = extra_deps;
        if let Some(prev) = self.last_h2d[node as usize][gpu as usize] {
            deps.push(prev);
        }
        let port = topo.node(node).root_port_of_gpu(gpu);
        let mut resources = vec![
            Resource::PcieLink { node, gpu, up: false },
            Resource::RootPort { node, port },
        ];
        let mut events = vec![EventSpec {
            kind: EventKind::H2d,
            phase: EventPhase::H2d,
            src: Endpoint::Host { node },
            dst: Endpoint::Gpu { node, index: gpu },
            bytes,
            node,
            chunk: Some(chunk),
        }];
        if with_memory {
            resources.push(Resource::HostMemory { node });
            events.push(EventSpec {
                kind: EventKind::HostRead,
                phase: EventPhase::H2d,
                src: Endpoint::Host { node },
                dst: Endpoint::Gpu { node, index: gpu },
                bytes,
                node,
                chunk: Some(chunk),
            });
        }
        let id = self.program.push(Task {
            deps,
            ready_offset: time_zero(),
            work: bytes,
            resources,
            direction: Some(Direction::Down),
            events,
        });
        self.last_h2d[node as usize][gpu as usize] = Some(id);
        id
    }

    fn nvlink(&mut self, node: u32, pair: u32, src_gpu: u32, dst_gpu: u32, bytes: u64, phase: EventPhase, chunk: u32, extra_deps: Vec<TaskId>) -> TaskId {
        let queue = if phase == EventPhase::AllGather { 1 } else { 0 };
        let mut deps = extra_deps;
        if let Some(prev) = self.last_nvlink[node as usize][pair as usize][queue] {
            deps.push(prev);
        }
        let id = self.program.push(Task {
            deps,
            ready_offset: time_zero(),
            work: bytes,
            resources: vec![Resource::NvLink { node, pair }],
            direction: None,
            events: vec![EventSpec {
                kind: EventKind::NvlinkXfer,
                phase,
                src: Endpoint::Gpu { node, index: src_gpu },
                dst: Endpoint::Gpu { node, index: dst_gpu },
                bytes,
                node,
                chunk: Some(chunk),
            }],
        });
        self.last_nvlink[node as usize][pair as usize][queue] = Some(id);
        id
    }

    fn gpu_compute(&mut self, node: u32, gpu: u32, bytes: u64, phase: EventPhase, chunk: u32, deps: Vec<TaskId>) -> TaskId {
        let mut t = Task::marker(deps);
        t.events.push(EventSpec {
            kind: EventKind::GpuCompute,
            phase,
            src: Endpoint::Gpu { node, index: gpu },
            dst: Endpoint::Gpu { node, index: gpu },
            bytes,
            node,
            chunk: Some(chunk),
        });
        self.program.push(t)
    }
}

/// Splits a chunk's bytes into the two element-aligned halves handed to a
/// GPU pair in NVLink mode.
fn pair_halves(bytes: u64, width: u64) -> (u64, u64) {
    let elems = bytes / width;
    let first = elems.div_ceil(2) * width;
    (first, bytes - first)
}

fn build_program(
    job: &AllreduceJob,
    plan: &ChunkPlan,
    tree: &DoubleBinaryTree,
    nodes: usize,
    gpus: usize,
) -> Result<Program> {
    let topo = &job.cluster;
    let mut ctx = BuildCtx::new(topo, nodes, gpus);
    let width = job.inputs[0][0].dtype().width_bytes() as u64;

    for (c, range) in plan.chunks.iter().enumerate() {
        let chunk = c as u32;
        let bytes = range.length;
        let links = tree_for_chunk(tree, chunk);

        match job.mode {
            Mode::Broadcast => {
                build_broadcast_chunk(&mut ctx, job, links, chunk, bytes, nodes, gpus)?;
            }
            Mode::ReduceOnly => {
                build_reduce_only_chunk(&mut ctx, job, links, chunk, bytes, nodes, gpus)?;
            }
            Mode::HfReduce | Mode::HfReduceNvlink => {
                build_allreduce_chunk(&mut ctx, job, links, chunk, bytes, width, nodes, gpus)?;
            }
        }
    }
    Ok(ctx.program)
}

#[allow(clippy::too_many_arguments)]
fn build_allreduce_chunk(
    ctx: &mut BuildCtx,
    job: &AllreduceJob,
    links: &TreeLinks,
    chunk: u32,
    bytes: u64,
    width: u64,
    nodes: usize,
    gpus: usize,
) -> Result<()> {
    let topo = &job.cluster;
    let nvlink = job.mode == Mode::HfReduceNvlink;
    let mut reduce_done = vec![0usize; nodes];
    let mut h2d_gate = vec![0usize; nodes];

    for i in 0..nodes as u32 {
        // Stage to host: all GPUs in plain mode, one per pair after the
        // NVLink pre-reduce in the variant.
        let d2h_ids: Vec<TaskId> = if nvlink {
            (0..gpus as u32 / 2)
                .map(|k| {
                    let xfer = ctx.nvlink(i, k, 2 * k + 1, 2 * k, bytes, EventPhase::PreReduce, chunk, vec![]);
                    let add = ctx.gpu_compute(i, 2 * k, bytes, EventPhase::PreReduce, chunk, vec![xfer]);
                    ctx.d2h(topo, i, 2 * k, bytes, chunk, vec![add])
                })
                .collect()
        } else {
            (0..gpus as u32)
                .map(|g| ctx.d2h(topo, i, g, bytes, chunk, vec![]))
                .collect()
        };
        let copies = d2h_ids.len() as u64;
        reduce_done[i as usize] = ctx.reduce(i, copies, bytes, chunk, d2h_ids);
    }

    if nodes > 1 {
        // Steady-state per-node memory charges for the inter-node phase:
        // two send reads, two receive writes, one receive-side reduce read.
        let mem_send: Vec<TaskId> = (0..nodes as u32)
            .map(|i| {
                ctx.host_mem(
                    i,
                    EventKind::HostRead,
                    EventPhase::IbSend,
                    2 * bytes,
                    2 * bytes,
                    chunk,
                    vec![reduce_done[i as usize]],
                )
            })
            .collect();

        // Pass 1 up-sends, built leaves-first so child tasks exist before
        // their parent consumes them.
        let mut up: Vec<Option<TaskId>> = vec![None; nodes];
        let mut order = links.preorder();
        order.reverse();
        for &r in &order {
            if r == links.root {
                continue;
            }
            let parent = links.parent[r as usize].expect("non-root has a parent");
            let mut deps = vec![reduce_done[r as usize], mem_send[r as usize]];
            for child in links.children(r) {
                deps.push(up[child as usize].expect("children built first"));
            }
            up[r as usize] = Some(ctx.net(r, parent, bytes, EventPhase::Pass1, chunk, deps));
        }
        let mut root_deps = vec![reduce_done[links.root as usize], mem_send[links.root as usize]];
        for child in links.children(links.root) {
            root_deps.push(up[child as usize].expect("root children built"));
        }
        let root_done = ctx.program.push(Task::marker(root_deps));

        // Pass 2 down-forwards, root outward.
        let mut down: Vec<Option<TaskId>> = vec![None; nodes];
        for &r in links.preorder().iter() {
            if r == links.root {
                continue;
            }
            let parent = links.parent[r as usize].expect("non-root has a parent");
            let dep = if parent == links.root {
                root_done
            } else {
                down[parent as usize].expect("parent built first")
            };
            down[r as usize] = Some(ctx.net(parent, r, bytes, EventPhase::Pass2, chunk, vec![dep]));
        }

        for i in 0..nodes as u32 {
            let arrival = if i == links.root {
                root_done
            } else {
                down[i as usize].expect("every non-root receives")
            };
            let host = Endpoint::Host { node: i };
            h2d_gate[i as usize] = ctx.program.push(Task {
                deps: vec![arrival],
                ready_offset: time_zero(),
                work: 3 * bytes,
                resources: vec![Resource::HostMemory { node: i }],
                direction: None,
                events: vec![
                    EventSpec {
                        kind: EventKind::HostWrite,
                        phase: EventPhase::IbRecv,
                        src: host,
                        dst: host,
                        bytes: 2 * bytes,
                        node: i,
                        chunk: Some(chunk),
                    },
                    EventSpec {
                        kind: EventKind::HostRead,
                        phase: EventPhase::IbRecv,
                        src: host,
                        dst: host,
                        bytes,
                        node: i,
                        chunk: Some(chunk),
                    },
                ],
            });
        }
    } else {
        h2d_gate.copy_from_slice(&reduce_done);
    }

    // Return trip.
    for i in 0..nodes as u32 {
        let gate = h2d_gate[i as usize];
        if nvlink {
            let (half_a, half_b) = pair_halves(bytes, width);
            let reads = build_h2d_reads(ctx, job, i, bytes, chunk, gate, gpus);
            for k in 0..gpus as u32 / 2 {
                let (g0, g1) = (2 * k, 2 * k + 1);
                let memcpy = job.h2d_mode == H2dMode::Memcpy;
                let dep0 = h2d_read_dep(&reads, memcpy, g0);
                let dep1 = h2d_read_dep(&reads, memcpy, g1);
                let t0 = ctx.h2d(topo, i, g0, half_a, memcpy, chunk, dep0);
                let mut pair_deps = vec![t0];
                if half_b > 0 {
                    pair_deps.push(ctx.h2d(topo, i, g1, half_b, memcpy, chunk, dep1));
                }
                let ag = ctx.nvlink(i, k, g0, g1, bytes, EventPhase::AllGather, chunk, pair_deps);
                ctx.gpu_compute(i, g0, bytes, EventPhase::AllGather, chunk, vec![ag]);
                ctx.gpu_compute(i, g1, bytes, EventPhase::AllGather, chunk, vec![ag]);
            }
        } else {
            let reads = build_h2d_reads(ctx, job, i, bytes, chunk, gate, gpus);
            let memcpy = job.h2d_mode == H2dMode::Memcpy;
            for g in 0..gpus as u32 {
                let deps = h2d_read_dep(&reads, memcpy, g);
                ctx.h2d(topo, i, g, bytes, memcpy, chunk, deps);
            }
        }
    }
    Ok(())
}

/// GDRCopy H2D charges one host read per NUMA domain; plain copies charge
/// per GPU, attached to the transfer task itself.
fn build_h2d_reads(
    ctx: &mut BuildCtx,
    job: &AllreduceJob,
    node: u32,
    bytes: u64,
    chunk: u32,
    gate: TaskId,
    gpus: usize,
) -> Vec<TaskId> {
    match job.h2d_mode {
        H2dMode::Memcpy => vec![gate],
        H2dMode::Gdrcopy => {
            let domains: Vec<u8> = {
                let mut d: Vec<u8> = (0..gpus as u32).map(numa_domain_of_gpu).collect();
                d.dedup();
                d
            };
            domains
                .iter()
                .map(|_| {
                    ctx.host_mem(
                        node,
                        EventKind::HostRead,
                        EventPhase::H2d,
                        bytes,
                        bytes,
                        chunk,
                        vec![gate],
                    )
                })
                .collect()
        }
    }
}

fn h2d_read_dep(reads: &[TaskId], memcpy: bool, gpu: u32) -> Vec<TaskId> {
    if memcpy {
        vec![reads[0]]
    } else {
        let domain = numa_domain_of_gpu(gpu) as usize;
        vec![reads[domain.min(reads.len() - 1)]]
    }
}

/// Pass 1 only, with literal per-edge memory charges.
fn build_reduce_only_chunk(
    ctx: &mut BuildCtx,
    job: &AllreduceJob,
    links: &TreeLinks,
    chunk: u32,
    bytes: u64,
    nodes: usize,
    gpus: usize,
) -> Result<()> {
    let topo = &job.cluster;
    let mut reduce_done = vec![0usize; nodes];
    for i in 0..nodes as u32 {
        let d2h: Vec<TaskId> = (0..gpus as u32)
            .map(|g| ctx.d2h(topo, i, g, bytes, chunk, vec![]))
            .collect();
        reduce_done[i as usize] = ctx.reduce(i, gpus as u64, bytes, chunk, d2h);
    }

    let mut up: Vec<Option<TaskId>> = vec![None; nodes];
    let mut order = links.preorder();
    order.reverse();
    let mut last_merge: Vec<TaskId> = reduce_done.clone();
    for &r in &order {
        if r == links.root {
            continue;
        }
        let parent = links.parent[r as usize].expect("non-root has a parent");
        let mut deps = vec![reduce_done[r as usize]];
        for child in links.children(r) {
            deps.push(up[child as usize].expect("children built first"));
        }
        let send_read = ctx.host_mem(r, EventKind::HostRead, EventPhase::IbSend, bytes, bytes, chunk, deps.clone());
        deps.push(send_read);
        let net = ctx.net(r, parent, bytes, EventPhase::Pass1, chunk, deps);
        // Receive-side write plus reduce-add read at the parent.
        let recv = ctx.host_mem(parent, EventKind::HostWrite, EventPhase::IbRecv, bytes, bytes, chunk, vec![net]);
        let merge = ctx.host_mem(parent, EventKind::HostRead, EventPhase::IbRecv, bytes, bytes, chunk, vec![recv, last_merge[parent as usize]]);
        last_merge[parent as usize] = merge;
        up[r as usize] = Some(merge);
    }

    // The root's GPUs receive the result.
    let gate = last_merge[links.root as usize];
    let memcpy = job.h2d_mode == H2dMode::Memcpy;
    let reads = build_h2d_reads(ctx, job, links.root, bytes, chunk, gate, gpus);
    for g in 0..gpus as u32 {
        let deps = h2d_read_dep(&reads, memcpy, g);
        ctx.h2d(topo, links.root, g, bytes, memcpy, chunk, deps);
    }
    Ok(())
}

/// Pass 2 only from the designated root's data.
fn build_broadcast_chunk(
    ctx: &mut BuildCtx,
    job: &AllreduceJob,
    links: &TreeLinks,
    chunk: u32,
    bytes: u64,
    nodes: usize,
    gpus: usize,
) -> Result<()> {
    let topo = &job.cluster;
    let root = links.root;
    let staged = ctx.d2h(topo, root, 0, bytes, chunk, vec![]);

    let mut down: Vec<Option<TaskId>> = vec![None; nodes];
    for &r in links.preorder().iter() {
        if r == root {
            continue;
        }
        let parent = links.parent[r as usize].expect("non-root has a parent");
        let dep = if parent == root {
            ctx.host_mem(parent, EventKind::HostRead, EventPhase::IbSend, bytes, bytes, chunk, vec![staged])
        } else {
            let upstream = down[parent as usize].expect("parent built first");
            ctx.host_mem(parent, EventKind::HostRead, EventPhase::IbSend, bytes, bytes, chunk, vec![upstream])
        };
        let net = ctx.net(parent, r, bytes, EventPhase::Pass2, chunk, vec![dep]);
        let recv = ctx.host_mem(r, EventKind::HostWrite, EventPhase::IbRecv, bytes, bytes, chunk, vec![net]);
        down[r as usize] = Some(recv);
    }

    let memcpy = job.h2d_mode == H2dMode::Memcpy;
    for i in 0..nodes as u32 {
        let gate = if i == root {
            staged
        } else {
            down[i as usize].expect("every non-root receives")
        };
        let reads = build_h2d_reads(ctx, job, i, bytes, chunk, gate, gpus);
        for g in 0..gpus as u32 {
            let deps = h2d_read_dep(&reads, memcpy, g);
            ctx.h2d(topo, i, g, bytes, memcpy, chunk, deps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeTopology;
    use crate::types::{buffer_fill_pattern, DType};

    fn test_cluster(nodes: u32, nvlink: bool) -> ClusterTopology {
        let mut node = NodeTopology::default();
        if nvlink {
            node.nvlink_bw = Some(600e9);
        }
        ClusterTopology::uniform(nodes, node)
    }

    fn constant_job(nodes: u32, value: f32, mode: Mode) -> AllreduceJob {
        let cluster = test_cluster(nodes, mode == Mode::HfReduceNvlink);
        let inputs = (0..nodes)
            .map(|i| {
                (0..8)
                    .map(|g| {
                        Buffer::from_f32(DType::Fp32, &[value], DeviceRef::gpu(i, g))
                    })
                    .collect()
            })
            .collect();
        AllreduceJob {
            cluster,
            inputs,
            chunk_size_bytes: 1 << 20,
            mode,
            h2d_mode: H2dMode::Gdrcopy,
            root: None,
        }
    }

    #[test]
    fn intra_node_reduce_eight_ones() {
        let job = constant_job(1, 1.0, Mode::HfReduce);
        let out = intra_node_reduce(&job, 0, 0).unwrap();
        assert_eq!(out.to_f32(), vec![8.0]);
    }

    #[test]
    fn intra_node_reduce_single_gpu_identity() {
        let mut job = constant_job(1, 3.5, Mode::HfReduce);
        job.cluster.nodes[0].gpus = 1;
        job.inputs[0].truncate(1);
        let out = intra_node_reduce(&job, 0, 0).unwrap();
        assert_eq!(out.payload(), job.inputs[0][0].payload());
    }

    #[test]
    fn fold_missing_slice_is_protocol_violation() {
        let a = Buffer::from_f32(DType::Fp32, &[1.0], DeviceRef::cpu(0));
        let staged = vec![Some(a), None];
        assert!(matches!(
            fold_host_slices(&staged),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn inter_node_two_nodes() {
        let mut job = constant_job(2, 0.0, Mode::HfReduce);
        for g in 0..8 {
            job.inputs[0][g] = Buffer::from_f32(DType::Fp32, &[1.0], DeviceRef::gpu(0, g as u32));
            job.inputs[1][g] = Buffer::from_f32(DType::Fp32, &[2.0], DeviceRef::gpu(1, g as u32));
        }
        let out = inter_node_allreduce(&job, 0).unwrap();
        // 8*1 + 8*2 = 24 on every node.
        assert_eq!(out.len(), 2);
        for b in out {
            assert_eq!(b.to_f32(), vec![24.0]);
        }
    }

    #[test]
    fn inter_node_single_node_identity() {
        let job = constant_job(1, 1.25, Mode::HfReduce);
        let out = inter_node_allreduce(&job, 0).unwrap();
        assert_eq!(out[0].to_f32(), vec![10.0]);
    }

    #[test]
    fn hfreduce_two_nodes_all_ones() {
        let job = constant_job(2, 1.0, Mode::HfReduce);
        let out = hfreduce(&job).unwrap();
        for node in &out.outputs {
            for gpu in node {
                assert_eq!(gpu.to_f32(), vec![16.0]);
            }
        }
    }

    #[test]
    fn hfreduce_single_node_equals_intra_broadcast() {
        let mut job = constant_job(1, 0.0, Mode::HfReduce);
        for (g, b) in job.inputs[0].iter_mut().enumerate() {
            *b = buffer_fill_pattern(DType::Fp32, 16, g as u64);
        }
        let expect = intra_node_reduce(&job, 0, 0).unwrap();
        let out = hfreduce(&job).unwrap();
        for gpu in &out.outputs[0] {
            assert_eq!(gpu.payload(), expect.payload());
        }
        // Degenerate network: no NIC events at all.
        assert!(out
            .timeline
            .events
            .iter()
            .all(|e| !matches!(e.kind, EventKind::NicSend | EventKind::NicRecv)));
    }

    #[test]
    fn no_gpu_compute_in_plain_mode() {
        let job = constant_job(4, 1.0, Mode::HfReduce);
        let out = hfreduce(&job).unwrap();
        assert!(out
            .timeline
            .events
            .iter()
            .all(|e| e.kind != EventKind::GpuCompute));
    }

    #[test]
    fn nvlink_matches_plain_for_exact_integers() {
        let mut plain = constant_job(2, 0.0, Mode::HfReduce);
        for node in plain.inputs.iter_mut() {
            for (g, b) in node.iter_mut().enumerate() {
                *b = Buffer::from_f32(DType::Fp32, &[g as f32 + 1.0, 2.0], b.owner());
            }
        }
        let mut nv = plain.clone();
        nv.mode = Mode::HfReduceNvlink;
        for n in nv.cluster.nodes.iter_mut() {
            n.nvlink_bw = Some(600e9);
        }
        let plain_out = hfreduce(&plain).unwrap();
        let nv_out = hfreduce_nvlink(&nv).unwrap();
        for (a, b) in plain_out.outputs.iter().flatten().zip(nv_out.outputs.iter().flatten()) {
            assert_eq!(a.payload(), b.payload());
        }
    }

    #[test]
    fn nvlink_halves_d2h_writes() {
        let plain = constant_job(2, 1.0, Mode::HfReduce);
        let mut nv = plain.clone();
        nv.mode = Mode::HfReduceNvlink;
        for n in nv.cluster.nodes.iter_mut() {
            n.nvlink_bw = Some(600e9);
        }
        let p = hfreduce(&plain).unwrap();
        let v = hfreduce_nvlink(&nv).unwrap();
        let d2h = |o: &HfOutcome| {
            o.ledger
                .per_node
                .iter()
                .map(|n| n.writes.d2h)
                .sum::<u64>()
        };
        assert_eq!(d2h(&v) * 2, d2h(&p));
    }

    #[test]
    fn nvlink_pair_prereduce_reaches_host() {
        let mut job = constant_job(1, 0.0, Mode::HfReduceNvlink);
        job.inputs[0][0] = Buffer::from_f32(DType::Fp32, &[1.0], DeviceRef::gpu(0, 0));
        job.inputs[0][1] = Buffer::from_f32(DType::Fp32, &[2.0], DeviceRef::gpu(0, 1));
        for g in 2..8 {
            job.inputs[0][g] = Buffer::from_f32(DType::Fp32, &[0.0], DeviceRef::gpu(0, g as u32));
        }
        // Host-side partial for the node is (1+2) + 0 + 0 + 0.
        let out = inter_node_allreduce(&job, 0).unwrap();
        assert_eq!(out[0].to_f32(), vec![3.0]);
    }

    #[test]
    fn nvlink_requires_links() {
        let mut job = constant_job(2, 1.0, Mode::HfReduceNvlink);
        for n in job.cluster.nodes.iter_mut() {
            n.nvlink_bw = None;
        }
        assert!(matches!(
            hfreduce_nvlink(&job),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn broadcast_from_root() {
        let mut job = constant_job(4, 0.0, Mode::Broadcast);
        job.root = Some(0);
        for g in 0..8 {
            job.inputs[0][g] = Buffer::from_f32(DType::Fp32, &[7.0], DeviceRef::gpu(0, g as u32));
        }
        let out = reduce_or_broadcast(&job).unwrap();
        for node in &out.outputs {
            for gpu in node {
                assert_eq!(gpu.to_f32(), vec![7.0]);
            }
        }
    }

    #[test]
    fn broadcast_requires_root() {
        let job = constant_job(4, 1.0, Mode::Broadcast);
        assert!(matches!(
            reduce_or_broadcast(&job),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn reduce_only_root_holds_sum() {
        let mut job = constant_job(2, 0.0, Mode::ReduceOnly);
        for g in 0..8 {
            job.inputs[0][g] = Buffer::from_f32(DType::Fp32, &[1.0], DeviceRef::gpu(0, g as u32));
            job.inputs[1][g] = Buffer::from_f32(DType::Fp32, &[2.0], DeviceRef::gpu(1, g as u32));
        }
        let out = reduce_or_broadcast(&job).unwrap();
        // Chunk 0 rides tree A, whose root for n=2 is rank 1.
        let root = out.tree.tree_a.root as usize;
        let other = 1 - root;
        for gpu in &out.outputs[root] {
            assert_eq!(gpu.to_f32(), vec![24.0]);
        }
        for (g, gpu) in out.outputs[other].iter().enumerate() {
            assert_eq!(gpu.payload(), job.inputs[other][g].payload());
        }
    }

    #[test]
    fn chunk_phase_monotonicity_enforced() {
        let mut st = ChunkState::new(0, 2);
        st.advance(ChunkPhase::IntraReduce).unwrap();
        st.advance(ChunkPhase::InterPass2).unwrap();
        assert!(st.advance(ChunkPhase::InterPass1).is_err());
        st.advance(ChunkPhase::Done).unwrap();
    }

    #[test]
    fn mixed_dtypes_rejected() {
        let mut job = constant_job(2, 1.0, Mode::HfReduce);
        job.inputs[1][3] = Buffer::from_f32(DType::Fp16, &[1.0], DeviceRef::gpu(1, 3));
        assert!(matches!(hfreduce(&job), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn pipelining_overlap_across_chunks() {
        let mut job = constant_job(2, 1.0, Mode::HfReduce);
        // Four chunks of 256 KiB.
        let elements = 4 * (256 << 10) / 4;
        for (i, node) in job.inputs.iter_mut().enumerate() {
            for (g, b) in node.iter_mut().enumerate() {
                *b = buffer_fill_pattern(DType::Fp32, elements, (i * 8 + g) as u64);
                b.set_owner(DeviceRef::gpu(i as u32, g as u32));
            }
        }
        job.chunk_size_bytes = 256 << 10;
        let out = hfreduce(&job).unwrap();
        assert_eq!(out.chunk_plan.chunk_count(), 4);
        // Some network event of chunk k overlaps a D2H or reduce event of
        // chunk k+1.
        let overlap = out.timeline.events.iter().any(|net| {
            matches!(net.kind, EventKind::NicSend | EventKind::NicRecv)
                && net.chunk.is_some()
                && out.timeline.events.iter().any(|e| {
                    e.chunk == Some(net.chunk.unwrap() + 1)
                        && (e.kind == EventKind::D2hWrite
                            || (e.kind == EventKind::HostRead
                                && e.phase == EventPhase::Reduce))
                        && e.t_start < net.t_end
                        && net.t_start < e.t_end
                })
        });
        assert!(overlap, "later-chunk work should overlap earlier-chunk network time");
    }
}
