//! Deterministic fluid discrete-event simulator.
//!
//! A program is a DAG of tasks. Each task moves `work` bytes through a set
//! of capacity-limited resources; every resource splits its bandwidth
//! equally among the tasks currently using it, and a task progresses at the
//! minimum of its per-resource shares. Logical time is exact rational
//! arithmetic, so event ordering is platform independent and identical
//! inputs always produce identical timelines.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::topology::{ClusterTopology, Direction, Resource};

/// Logical time in seconds.
pub type Time = BigRational;

pub fn time_zero() -> Time {
    BigRational::zero()
}

/// Exact conversion of a microsecond count to seconds.
pub fn time_from_us(us: f64) -> Time {
    BigRational::from_f64(us).expect("finite latency") / BigRational::from_integer(BigInt::from(1_000_000))
}

pub fn ratio_from_f64(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite value")
}

pub fn time_to_f64(t: &Time) -> f64 {
    t.to_f64().unwrap_or(f64::NAN)
}

/// What a timeline row records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    D2hWrite,
    HostRead,
    HostWrite,
    NicSend,
    NicRecv,
    H2d,
    NvlinkXfer,
    GpuCompute,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::D2hWrite => "d2h_write",
            EventKind::HostRead => "host_read",
            EventKind::HostWrite => "host_write",
            EventKind::NicSend => "nic_send",
            EventKind::NicRecv => "nic_recv",
            EventKind::H2d => "h2d",
            EventKind::NvlinkXfer => "nvlink_xfer",
            EventKind::GpuCompute => "gpu_compute",
        }
    }
}

/// Which protocol phase an event belongs to. The first five label host
/// memory operations and drive the ledger; the rest label transfers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPhase {
    D2h,
    Reduce,
    IbSend,
    IbRecv,
    H2d,
    Pass1,
    Pass2,
    PreReduce,
    AllGather,
    Request,
    Grant,
    Transfer,
}

impl EventPhase {
    pub fn name(self) -> &'static str {
        match self {
            EventPhase::D2h => "d2h",
            EventPhase::Reduce => "reduce",
            EventPhase::IbSend => "ib_send",
            EventPhase::IbRecv => "ib_recv",
            EventPhase::H2d => "h2d",
            EventPhase::Pass1 => "pass1",
            EventPhase::Pass2 => "pass2",
            EventPhase::PreReduce => "pre_reduce",
            EventPhase::AllGather => "all_gather",
            EventPhase::Request => "request",
            EventPhase::Grant => "grant",
            EventPhase::Transfer => "transfer",
        }
    }
}

/// One end of a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Gpu { node: u32, index: u32 },
    Host { node: u32 },
    Nic { node: u32 },
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Endpoint::Gpu { node, index } => write!(f, "n{node}.gpu{index}"),
            Endpoint::Host { node } => write!(f, "n{node}.host"),
            Endpoint::Nic { node } => write!(f, "n{node}.nic"),
        }
    }
}

/// Template for the timeline rows a task emits once it completes.
#[derive(Debug, Clone)]
pub struct EventSpec {
    pub kind: EventKind,
    pub phase: EventPhase,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub bytes: u64,
    /// Node whose ledger this event charges.
    pub node: u32,
    pub chunk: Option<u32>,
}

/// A completed transfer or memory operation with its logical time span.
#[derive(Debug, Clone)]
pub struct FabricEvent {
    pub kind: EventKind,
    pub phase: EventPhase,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub bytes: u64,
    pub node: u32,
    pub chunk: Option<u32>,
    pub t_start: Time,
    pub t_end: Time,
}

/// One unit of simulated activity.
#[derive(Debug, Clone)]
pub struct Task {
    pub deps: Vec<TaskId>,
    /// Extra delay after the last dependency completes (latency).
    pub ready_offset: Time,
    /// Bytes that must flow before the task completes. Zero-work tasks
    /// complete instantly and need no resources.
    pub work: u64,
    pub resources: Vec<Resource>,
    pub direction: Option<Direction>,
    pub events: Vec<EventSpec>,
}

impl Task {
    pub fn marker(deps: Vec<TaskId>) -> Task {
        Task {
            deps,
            ready_offset: time_zero(),
            work: 0,
            resources: Vec::new(),
            direction: None,
            events: Vec::new(),
        }
    }
}

pub type TaskId = usize;

/// A full event program: the DAG executed by [`run`].
#[derive(Debug, Default, Clone)]
pub struct Program {
    pub tasks: Vec<Task>,
}

impl Program {
    pub fn new() -> Self {
        Program { tasks: Vec::new() }
    }

    pub fn push(&mut self, task: Task) -> TaskId {
        self.tasks.push(task);
        self.tasks.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Host memory bytes split by protocol phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseBytes {
    pub d2h: u64,
    pub reduce: u64,
    pub ib_send: u64,
    pub ib_recv: u64,
    pub h2d: u64,
}

impl PhaseBytes {
    pub fn total(&self) -> u64 {
        self.d2h + self.reduce + self.ib_send + self.ib_recv + self.h2d
    }

    fn add(&mut self, phase: EventPhase, bytes: u64) {
        match phase {
            EventPhase::D2h => self.d2h += bytes,
            EventPhase::Reduce => self.reduce += bytes,
            EventPhase::IbSend => self.ib_send += bytes,
            EventPhase::IbRecv => self.ib_recv += bytes,
            EventPhase::H2d => self.h2d += bytes,
            _ => debug_assert!(false, "non-memory phase {phase:?} charged to ledger"),
        }
    }
}

/// Per-node host memory reads and writes, derived from the timeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NodeLedger {
    pub reads: PhaseBytes,
    pub writes: PhaseBytes,
}

impl NodeLedger {
    pub fn total(&self) -> u64 {
        self.reads.total() + self.writes.total()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MemOpLedger {
    pub per_node: Vec<NodeLedger>,
}

impl MemOpLedger {
    pub fn total_bytes(&self) -> u64 {
        self.per_node.iter().map(|n| n.total()).sum()
    }

    pub fn node(&self, id: u32) -> &NodeLedger {
        &self.per_node[id as usize]
    }
}

/// Builds the ledger from timeline events. `nodes` sizes the per-node table.
pub fn ledger_from_events(events: &[FabricEvent], nodes: u32) -> MemOpLedger {
    let mut ledger = MemOpLedger {
        per_node: vec![NodeLedger::default(); nodes as usize],
    };
    for ev in events {
        let entry = &mut ledger.per_node[ev.node as usize];
        match ev.kind {
            EventKind::D2hWrite => entry.writes.add(EventPhase::D2h, ev.bytes),
            EventKind::HostRead => entry.reads.add(ev.phase, ev.bytes),
            EventKind::HostWrite => entry.writes.add(ev.phase, ev.bytes),
            _ => {}
        }
    }
    ledger
}

#[derive(Debug, Clone)]
pub struct Timeline {
    pub events: Vec<FabricEvent>,
}

impl Timeline {
    pub fn makespan(&self) -> Time {
        self.events
            .iter()
            .map(|e| e.t_end.clone())
            .max()
            .unwrap_or_else(time_zero)
    }

    /// Largest number of events of `kind` simultaneously in flight.
    pub fn peak_concurrency(&self, mut pred: impl FnMut(&FabricEvent) -> bool) -> usize {
        let mut edges: Vec<(Time, i32)> = Vec::new();
        for e in self.events.iter().filter(|e| pred(e)) {
            if e.t_start == e.t_end {
                continue;
            }
            edges.push((e.t_start.clone(), 1));
            edges.push((e.t_end.clone(), -1));
        }
        // Ends sort before starts at the same instant.
        edges.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut cur = 0i32;
        let mut peak = 0i32;
        for (_, d) in edges {
            cur += d;
            peak = peak.max(cur);
        }
        peak as usize
    }
}

/// A span during which a task ran at a constant rate (bytes/s).
#[derive(Debug, Clone)]
pub struct RateSegment {
    pub task: TaskId,
    pub t_start: Time,
    pub t_end: Time,
    pub rate: BigRational,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record per-task constant-rate segments for capacity audits.
    pub record_rate_trace: bool,
}

pub struct SimOutcome {
    pub timeline: Timeline,
    pub ledger: MemOpLedger,
    pub makespan: Time,
    pub rate_trace: Vec<RateSegment>,
}

#[derive(Debug, Clone)]
enum TaskState {
    Waiting { unmet: usize, latest_dep: Time },
    Active(ActiveState),
    Done,
}

#[derive(Debug, Clone)]
struct ActiveState {
    remaining: BigRational,
    rate: BigRational,
    touched: Time,
    started: Time,
    epoch: u64,
}

/// Executes the program against the topology's capacities.
pub fn run(topo: &ClusterTopology, program: &Program) -> Result<SimOutcome> {
    run_with_options(topo, program, &RunOptions::default())
}

pub fn run_with_options(
    topo: &ClusterTopology,
    program: &Program,
    options: &RunOptions,
) -> Result<SimOutcome> {
    topo.validate()?;
    let n = program.tasks.len();
    for (id, t) in program.tasks.iter().enumerate() {
        if t.work > 0 && t.resources.is_empty() {
            return Err(Error::invalid(format!(
                "task {id} has work but no resources"
            )));
        }
        for r in &t.resources {
            if !(r.capacity(topo) > 0.0) {
                return Err(Error::invalid(format!("resource {r:?} has no capacity")));
            }
        }
        for &d in &t.deps {
            if d >= n {
                return Err(Error::invalid(format!("task {id} depends on unknown {d}")));
            }
        }
    }

    let mut caps: BTreeMap<Resource, BigRational> = BTreeMap::new();
    for t in &program.tasks {
        for r in &t.resources {
            caps.entry(*r).or_insert_with(|| ratio_from_f64(r.capacity(topo)));
        }
    }
    let eff = ratio_from_f64(topo.bidir_efficiency);

    let mut states: Vec<TaskState> = program
        .tasks
        .iter()
        .map(|t| TaskState::Waiting {
            unmet: t.deps.len(),
            latest_dep: time_zero(),
        })
        .collect();
    let mut dependents: Vec<Vec<TaskId>> = vec![Vec::new(); n];
    for (id, t) in program.tasks.iter().enumerate() {
        for &d in &t.deps {
            dependents[d].push(id);
        }
    }

    // Min-heaps keyed by (time, task id); epoch guards stale completions.
    let mut ready: BinaryHeap<Reverse<(Time, TaskId)>> = BinaryHeap::new();
    let mut completions: BinaryHeap<Reverse<(Time, TaskId, u64)>> = BinaryHeap::new();
    let mut users: BTreeMap<Resource, BTreeSet<TaskId>> = BTreeMap::new();
    let mut events_out: Vec<(Time, Time, TaskId)> = Vec::new();
    let mut trace: Vec<RateSegment> = Vec::new();

    for (id, t) in program.tasks.iter().enumerate() {
        if t.deps.is_empty() {
            ready.push(Reverse((t.ready_offset.clone(), id)));
        }
    }

    let effective_cap = |users: &BTreeMap<Resource, BTreeSet<TaskId>>,
                         caps: &BTreeMap<Resource, BigRational>,
                         r: &Resource|
     -> BigRational {
        let cap = caps[r].clone();
        if !r.bidir_sensitive() {
            return cap;
        }
        let set = match users.get(r) {
            Some(s) => s,
            None => return cap,
        };
        let mut up = false;
        let mut down = false;
        for &t in set {
            match program.tasks[t].direction {
                Some(Direction::Up) => up = true,
                Some(Direction::Down) => down = true,
                None => {}
            }
        }
        if up && down {
            cap * eff.clone()
        } else {
            cap
        }
    };

    let mut now;
    loop {
        // Next boundary: earliest ready activation or valid completion.
        let next_ready = ready.peek().map(|Reverse((t, _))| t.clone());
        let next_done = loop {
            match completions.peek() {
                None => break None,
                Some(Reverse((t, id, epoch))) => {
                    let valid = matches!(&states[*id], TaskState::Active(a) if a.epoch == *epoch);
                    if valid {
                        break Some(t.clone());
                    }
                    completions.pop();
                }
            }
        };
        let boundary = match (next_ready, next_done) {
            (None, None) => break,
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (Some(a), Some(b)) => a.min(b),
        };
        now = boundary;

        let mut changed: BTreeSet<Resource> = BTreeSet::new();
        // Process every completion and activation that lands on this
        // boundary, including instant tasks that cascade at the same time.
        loop {
            let mut progressed = false;

            while let Some(Reverse((t, id, epoch))) = completions.peek().cloned() {
                if t > now {
                    break;
                }
                completions.pop();
                let valid = matches!(&states[id], TaskState::Active(a) if a.epoch == epoch);
                if !valid {
                    continue;
                }
                progressed = true;
                let active = match std::mem::replace(&mut states[id], TaskState::Done) {
                    TaskState::Active(a) => a,
                    _ => unreachable!(),
                };
                if options.record_rate_trace && !active.rate.is_zero() && active.touched < now {
                    trace.push(RateSegment {
                        task: id,
                        t_start: active.touched.clone(),
                        t_end: now.clone(),
                        rate: active.rate.clone(),
                    });
                }
                events_out.push((active.started.clone(), now.clone(), id));
                for r in &program.tasks[id].resources {
                    if let Some(set) = users.get_mut(r) {
                        set.remove(&id);
                    }
                    changed.insert(*r);
                }
                for &dep in &dependents[id] {
                    if let TaskState::Waiting { unmet, latest_dep } = &mut states[dep] {
                        *unmet -= 1;
                        if *latest_dep < now {
                            *latest_dep = now.clone();
                        }
                        if *unmet == 0 {
                            let at = latest_dep.clone() + program.tasks[dep].ready_offset.clone();
                            ready.push(Reverse((at, dep)));
                        }
                    }
                }
            }

            while let Some(Reverse((t, id))) = ready.peek().cloned() {
                if t > now {
                    break;
                }
                ready.pop();
                progressed = true;
                let task = &program.tasks[id];
                if task.work == 0 {
                    // Instant marker: complete in place.
                    states[id] = TaskState::Done;
                    events_out.push((now.clone(), now.clone(), id));
                    for &dep in &dependents[id] {
                        if let TaskState::Waiting { unmet, latest_dep } = &mut states[dep] {
                            *unmet -= 1;
                            if *latest_dep < now {
                                *latest_dep = now.clone();
                            }
                            if *unmet == 0 {
                                let at = latest_dep.clone() + program.tasks[dep].ready_offset.clone();
                                ready.push(Reverse((at, dep)));
                            }
                        }
                    }
                    continue;
                }
                states[id] = TaskState::Active(ActiveState {
                    remaining: BigRational::from_integer(BigInt::from(task.work)),
                    rate: BigRational::zero(),
                    touched: now.clone(),
                    started: now.clone(),
                    epoch: 0,
                });
                for r in &task.resources {
                    users.entry(*r).or_default().insert(id);
                    changed.insert(*r);
                }
            }

            if !progressed {
                break;
            }
        }

        // Re-rate every active task touching a changed resource.
        if !changed.is_empty() {
            let mut affected: BTreeSet<TaskId> = BTreeSet::new();
            for r in &changed {
                if let Some(set) = users.get(r) {
                    affected.extend(set.iter().copied());
                }
            }
            let mut new_caps: BTreeMap<Resource, BigRational> = BTreeMap::new();
            for id in affected {
                // Materialize progress at the old rate, then re-rate.
                let task = &program.tasks[id];
                let state = match &mut states[id] {
                    TaskState::Active(a) => a,
                    _ => continue,
                };
                if state.touched < now {
                    let elapsed = now.clone() - state.touched.clone();
                    let progressed_work = state.rate.clone() * elapsed;
                    if options.record_rate_trace && !state.rate.is_zero() {
                        trace.push(RateSegment {
                            task: id,
                            t_start: state.touched.clone(),
                            t_end: now.clone(),
                            rate: state.rate.clone(),
                        });
                    }
                    state.remaining -= progressed_work;
                    debug_assert!(!state.remaining.is_negative());
                }
                state.touched = now.clone();
                let mut rate: Option<BigRational> = None;
                for r in &task.resources {
                    let cap = new_caps
                        .entry(*r)
                        .or_insert_with(|| effective_cap(&users, &caps, r))
                        .clone();
                    let share = cap / BigRational::from_integer(BigInt::from(users[r].len()));
                    rate = Some(match rate {
                        None => share,
                        Some(prev) => prev.min(share),
                    });
                }
                let rate = rate.expect("active task has resources");
                state.rate = rate.clone();
                state.epoch += 1;
                let eta = now.clone() + state.remaining.clone() / rate;
                completions.push(Reverse((eta, id, state.epoch)));
            }
        }
    }

    for (id, s) in states.iter().enumerate() {
        if !matches!(s, TaskState::Done) {
            return Err(Error::protocol(format!(
                "task {id} never completed (dependency cycle?)"
            )));
        }
    }

    // Emit rows sorted by start time, then insertion order.
    let mut rows: Vec<FabricEvent> = Vec::new();
    events_out.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.cmp(&b.2)));
    for (t_start, t_end, id) in events_out {
        for spec in &program.tasks[id].events {
            rows.push(FabricEvent {
                kind: spec.kind,
                phase: spec.phase,
                src: spec.src,
                dst: spec.dst,
                bytes: spec.bytes,
                node: spec.node,
                chunk: spec.chunk,
                t_start: t_start.clone(),
                t_end: t_end.clone(),
            });
        }
    }
    let timeline = Timeline { events: rows };
    let ledger = ledger_from_events(&timeline.events, topo.node_count());
    let makespan = timeline.makespan();
    Ok(SimOutcome {
        timeline,
        ledger,
        makespan,
        rate_trace: trace,
    })
}

/// Audits a rate trace against every resource capacity; returns the list of
/// violations (empty when the run respected all caps).
pub fn audit_capacity(
    topo: &ClusterTopology,
    program: &Program,
    trace: &[RateSegment],
) -> Vec<String> {
    // Collect the boundary instants, then check aggregate rates per
    // resource inside each interval.
    let mut cuts: Vec<Time> = Vec::new();
    for seg in trace {
        cuts.push(seg.t_start.clone());
        cuts.push(seg.t_end.clone());
    }
    cuts.sort();
    cuts.dedup();
    let eff = ratio_from_f64(topo.bidir_efficiency);
    let mut violations = Vec::new();
    for window in cuts.windows(2) {
        let (lo, hi) = (&window[0], &window[1]);
        let mut per_resource: BTreeMap<Resource, BigRational> = BTreeMap::new();
        let mut dirs: BTreeMap<Resource, (bool, bool)> = BTreeMap::new();
        for seg in trace {
            if seg.t_start <= *lo && seg.t_end >= *hi {
                let task = &program.tasks[seg.task];
                for r in &task.resources {
                    *per_resource.entry(*r).or_insert_with(BigRational::zero) +=
                        seg.rate.clone();
                    let d = dirs.entry(*r).or_insert((false, false));
                    match task.direction {
                        Some(Direction::Up) => d.0 = true,
                        Some(Direction::Down) => d.1 = true,
                        None => {}
                    }
                }
            }
        }
        for (r, total) in per_resource {
            let mut cap = ratio_from_f64(r.capacity(topo));
            if r.bidir_sensitive() {
                let (up, down) = dirs[&r];
                if up && down {
                    cap *= eff.clone();
                }
            }
            if total > cap {
                violations.push(format!(
                    "resource {:?} over capacity in [{}, {}]: {} > {}",
                    r,
                    time_to_f64(lo),
                    time_to_f64(hi),
                    total.to_f64().unwrap_or(f64::NAN),
                    cap.to_f64().unwrap_or(f64::NAN),
                ));
            }
        }
    }
    violations
}
