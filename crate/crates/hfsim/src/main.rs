//! Command-line front end: run simulations, planners, perf-model queries,
//! and checkpoint tools. Exit codes: 0 success, 2 usage/config error,
//! 3 domain error. All outputs are reproducible from (config, seed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hfsim::checkpoint::{
    load_tensor, parse_checkpoint, save_checkpoint, SavePolicy, TensorEntry,
};
use hfsim::config::{load_job, JobConfig};
use hfsim::engine::{run_job, AllreduceJob, Mode};
use hfsim::error::Error;
use hfsim::incast::{incast_rts, IncastParams};
use hfsim::perf::{
    memory_ops_multiplier, pcie_bandwidth_units, theoretical_peak_bw, AllreduceAlgorithm, H2dMode,
};
use hfsim::planner::{
    cost_compare, disperse_static_routes, make_zones, place_ranks_for_crosszone, plan_three_layer_with,
    plan_two_layer, table_defaults, CoreSizing, Flow,
};
use hfsim::report::{ledger_to_csv, time_as_f64, timeline_to_csv, to_json_pretty};
use hfsim::sim::MemOpLedger;
use hfsim::tree::{build_double_binary_tree, cross_zone_edge_count, dump_tree, validate_tree};
use hfsim::types::{buffer_fill_pattern, DType};

#[derive(Parser)]
#[command(
    name = "hfsim",
    version,
    about = "Deterministic allreduce-stack simulator, fabric planner, and checkpoint tool"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an allreduce job described by a JSON file.
    Allreduce(AllreduceArgs),
    /// Plan a fat-tree (and optionally compare architecture costs).
    Plan(PlanArgs),
    /// Analytic performance-model queries.
    Perf(PerfArgs),
    /// Simulate request-to-send incast control.
    Incast(IncastArgs),
    /// Save, load, or inspect tensor checkpoints.
    Checkpoint(CheckpointArgs),
    /// Dump the double binary tree over n ranks as JSON.
    TreeDump(TreeDumpArgs),
}

#[derive(Args)]
struct AllreduceArgs {
    /// Job JSON (see docs/schemas/job.schema.json).
    #[arg(long)]
    job: PathBuf,
    /// Output directory for summary.json, timeline.csv, ledger.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    endpoints: u32,
    #[arg(long)]
    radix: u32,
    #[arg(long, default_value_t = 2)]
    layers: u32,
    /// Core sizing for three layers: pow2 or exact.
    #[arg(long, default_value = "pow2")]
    core_sizing: String,
    /// Also print the architecture cost comparison.
    #[arg(long)]
    cost: bool,
    /// Optional JSON output path for the plan.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dual-home this many storage nodes across two zones of the planned
    /// size and report the layout.
    #[arg(long)]
    storage: Option<u32>,
    #[arg(long, default_value_t = 2)]
    interzone_links: u32,
    /// Route this many synthetic flows and report uplink balance.
    #[arg(long)]
    flows: Option<u32>,
}

#[derive(Args)]
struct PerfArgs {
    /// PCIe bandwidth units of a ring allreduce over n GPUs.
    #[arg(long)]
    ring: bool,
    /// PCIe bandwidth units of host-staged allreduce.
    #[arg(long)]
    hfreduce: bool,
    #[arg(short = 'n', long, default_value_t = 8)]
    gpus: u64,
    /// Theoretical peak bandwidth for --mem-bw and the current multiplier.
    #[arg(long)]
    peak: bool,
    #[arg(long, default_value_t = 320e9)]
    mem_bw: f64,
    /// Memory-operation multiplier for the chosen H2D mode.
    #[arg(long)]
    multiplier: bool,
    #[arg(long, default_value = "gdrcopy")]
    h2d: String,
}

#[derive(Args)]
struct IncastArgs {
    /// Incast JSON config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    senders: Option<u32>,
    #[arg(long)]
    limit: Option<u32>,
    #[arg(long)]
    link_bw: Option<f64>,
    #[arg(long)]
    request_bytes: Option<u64>,
    #[arg(long)]
    latency_us: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(subcommand)]
    action: CheckpointAction,
}

#[derive(Subcommand)]
enum CheckpointAction {
    /// Build a checkpoint from a tensor spec JSON.
    Save {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract one tensor's raw bytes.
    Load {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the index, sorted by offset.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Steps lost when failing at a step under a save interval.
    LossBound {
        #[arg(long)]
        interval: u64,
        #[arg(long)]
        failure_step: u64,
    },
}

#[derive(Args)]
struct TreeDumpArgs {
    #[arg(short, long)]
    n: u32,
    /// Optional "a,b" rank split across two zones; reports cross-zone edge
    /// counts under the best rotation.
    #[arg(long)]
    zones: Option<String>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::NotFound(_)
        | Error::FormatError(_)
        | Error::CapacityExceeded(_)
        | Error::ProtocolViolation(_) => 3,
    }
}

fn run(cli: Cli) -> hfsim::Result<()> {
    match cli.command {
        Command::Allreduce(args) => cmd_allreduce(&args),
        Command::Plan(args) => cmd_plan(&args),
        Command::Perf(args) => cmd_perf(&args),
        Command::Incast(args) => cmd_incast(&args),
        Command::Checkpoint(args) => cmd_checkpoint(&args),
        Command::TreeDump(args) => cmd_tree_dump(&args),
    }
}

#[derive(Serialize)]
struct AllreduceSummary {
    mode: Mode,
    dtype: DType,
    element_count: usize,
    per_gpu_bytes: u64,
    nodes: u32,
    gpus_per_node: u32,
    chunk_size_bytes: u64,
    chunk_count: usize,
    h2d_mode: H2dMode,
    seed: u64,
    makespan_seconds: f64,
    achieved_bw_per_node: f64,
    multiplier: u64,
    theoretical_peak_bw: f64,
    within_theoretical_cap: bool,
    ledger_total_bytes: u64,
    ledger_per_node_bytes: Vec<u64>,
}

fn write_run_outputs(
    out_dir: &Path,
    summary_json: String,
    timeline_csv: String,
    ledger: Option<&MemOpLedger>,
) -> hfsim::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("summary.json"), summary_json)?;
    std::fs::write(out_dir.join("timeline.csv"), timeline_csv)?;
    if let Some(ledger) = ledger {
        std::fs::write(out_dir.join("ledger.csv"), ledger_to_csv(ledger))?;
    }
    Ok(())
}

fn cmd_allreduce(args: &AllreduceArgs) -> hfsim::Result<()> {
    let (config, job): (JobConfig, AllreduceJob) = load_job(&args.job)?;
    let per_gpu_bytes = job.inputs[0][0].len_bytes();
    let outcome = run_job(&job)?;

    let multiplier = memory_ops_multiplier(config.h2d_mode);
    let peak = theoretical_peak_bw(job.cluster.node(0).memory_bw, multiplier)?;
    let achieved = outcome.achieved_bandwidth(per_gpu_bytes);
    let summary = AllreduceSummary {
        mode: config.mode,
        dtype: config.dtype,
        element_count: config.element_count,
        per_gpu_bytes,
        nodes: job.cluster.node_count(),
        gpus_per_node: job.cluster.node(0).gpus,
        chunk_size_bytes: config.chunk_size_bytes,
        chunk_count: outcome.chunk_plan.chunk_count(),
        h2d_mode: config.h2d_mode,
        seed: config.seed,
        makespan_seconds: time_as_f64(&outcome.makespan),
        achieved_bw_per_node: achieved,
        multiplier,
        theoretical_peak_bw: peak,
        within_theoretical_cap: achieved <= peak,
        ledger_total_bytes: outcome.ledger.total_bytes(),
        ledger_per_node_bytes: outcome.ledger.per_node.iter().map(|n| n.total()).collect(),
    };
    write_run_outputs(
        &args.out,
        to_json_pretty(&summary)?,
        timeline_to_csv(&outcome.timeline),
        Some(&outcome.ledger),
    )?;
    println!(
        "allreduce: {} nodes, {} bytes/GPU, achieved {:.3} GB/s (cap {:.3} GB/s)",
        summary.nodes,
        per_gpu_bytes,
        achieved / 1e9,
        peak / 1e9
    );
    Ok(())
}

#[derive(Serialize)]
struct PlanOutput {
    endpoints: u32,
    radix: u32,
    layers: u32,
    leaves: u32,
    spines: u32,
    cores: u32,
    switches: u32,
}

fn cmd_plan(args: &PlanArgs) -> hfsim::Result<()> {
    let plan = match args.layers {
        2 => plan_two_layer(args.endpoints, args.radix)?,
        3 => {
            let sizing: CoreSizing = args.core_sizing.parse()?;
            plan_three_layer_with(args.endpoints, args.radix, sizing)?
        }
        other => return Err(Error::invalid(format!("layers must be 2 or 3, got {other}"))),
    };
    let output = PlanOutput {
        endpoints: plan.endpoint_count,
        radix: plan.radix,
        layers: plan.layers,
        leaves: plan.leaf_count,
        spines: plan.spine_count,
        cores: plan.core_count,
        switches: plan.total_switches(),
    };
    println!("leaves: {}", output.leaves);
    println!("spines: {}", output.spines);
    println!("cores: {}", output.cores);
    println!("switches: {}", output.switches);

    if let Some(storage) = args.storage {
        let layout = make_zones(&plan, &plan, storage, args.interzone_links)?;
        println!(
            "zones: 2 x {} compute endpoints, {} dual-homed storage, {} interzone links",
            layout.compute_a,
            layout.storage.len(),
            layout.interzone_links.len()
        );
        let ranks = layout.compute_endpoints().min(64);
        let tree = build_double_binary_tree(ranks)?;
        let placement = place_ranks_for_crosszone(&layout, &tree)?;
        println!(
            "cross-zone edges over {} ranks: tree_a {}, tree_b {} (rotation {})",
            ranks, placement.cross_edges_a, placement.cross_edges_b, placement.rotation
        );
    }

    if let Some(n_flows) = args.flows {
        let flows: Vec<Flow> = (0..n_flows)
            .map(|i| {
                Flow::new(
                    i % plan.endpoint_count,
                    (i * 7 + plan.endpoint_count / 2) % plan.endpoint_count,
                )
            })
            .collect();
        let report = disperse_static_routes(&plan, &flows)?;
        let loads: Vec<u32> = report.uplink_loads.iter().map(|u| u.flows).collect();
        if !loads.is_empty() {
            println!(
                "routed {} flows, uplink load max {} min {}",
                n_flows,
                loads.iter().max().unwrap(),
                loads.iter().min().unwrap()
            );
        }
    }

    if args.cost {
        let report = cost_compare(&table_defaults()?)?;
        for row in &report.rows {
            println!(
                "cost {}: switches {}, total price {}, cost-performance {:.3}",
                row.name, row.switch_count, row.total_price, row.cost_performance_ratio
            );
        }
    }

    if let Some(path) = &args.out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, to_json_pretty(&plan)?)?;
    }
    Ok(())
}

fn cmd_perf(args: &PerfArgs) -> hfsim::Result<()> {
    let h2d: H2dMode = args.h2d.parse()?;
    let mut printed = false;
    if args.ring {
        let units = pcie_bandwidth_units(AllreduceAlgorithm::Ring, args.gpus)?;
        println!("pcie_units={}", ratio_to_string(units));
        printed = true;
    }
    if args.hfreduce {
        let units = pcie_bandwidth_units(AllreduceAlgorithm::HfReduce, args.gpus)?;
        println!("pcie_units={}", ratio_to_string(units));
        printed = true;
    }
    if args.multiplier {
        println!("multiplier={}", memory_ops_multiplier(h2d));
        printed = true;
    }
    if args.peak {
        let m = memory_ops_multiplier(h2d);
        println!("peak_bw={}", theoretical_peak_bw(args.mem_bw, m)?);
        printed = true;
    }
    if !printed {
        return Err(Error::invalid(
            "nothing to compute: pass --ring, --hfreduce, --multiplier, or --peak",
        ));
    }
    Ok(())
}

fn ratio_to_string(r: num_rational::Rational64) -> String {
    let value = *r.numer() as f64 / *r.denom() as f64;
    format!("{value}")
}

#[derive(Serialize)]
struct IncastSummary {
    senders: u32,
    concurrency_limit: u32,
    link_bw: f64,
    per_request_bytes: u64,
    latency_us: f64,
    makespan_seconds: f64,
    goodput: f64,
    goodput_fraction_of_link: f64,
    peak_queue_depth: u32,
    peak_queue_bytes: u64,
}

fn cmd_incast(args: &IncastArgs) -> hfsim::Result<()> {
    let mut params = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<IncastParams>(&text)?
        }
        None => IncastParams {
            senders: 0,
            concurrency_limit: 0,
            link_bw: hfsim::topology::DEFAULT_NIC_BW,
            per_request_bytes: 1 << 20,
            latency_us: hfsim::topology::DEFAULT_LINK_LATENCY_US,
        },
    };
    if let Some(v) = args.senders {
        params.senders = v;
    }
    if let Some(v) = args.limit {
        params.concurrency_limit = v;
    }
    if let Some(v) = args.link_bw {
        params.link_bw = v;
    }
    if let Some(v) = args.request_bytes {
        params.per_request_bytes = v;
    }
    if let Some(v) = args.latency_us {
        params.latency_us = v;
    }

    let outcome = incast_rts(&params)?;
    let summary = IncastSummary {
        senders: params.senders,
        concurrency_limit: params.concurrency_limit,
        link_bw: params.link_bw,
        per_request_bytes: params.per_request_bytes,
        latency_us: params.latency_us,
        makespan_seconds: time_as_f64(&outcome.makespan),
        goodput: outcome.goodput,
        goodput_fraction_of_link: outcome.goodput / params.link_bw,
        peak_queue_depth: outcome.peak_queue_depth,
        peak_queue_bytes: outcome.peak_queue_bytes,
    };
    write_run_outputs(
        &args.out,
        to_json_pretty(&summary)?,
        timeline_to_csv(&outcome.timeline),
        None,
    )?;
    println!(
        "incast: {} senders, limit {}, peak queue {} requests, goodput {:.1}% of link",
        params.senders,
        params.concurrency_limit,
        outcome.peak_queue_depth,
        100.0 * summary.goodput_fraction_of_link
    );
    Ok(())
}

/// Tensor spec for `checkpoint save`: deterministic contents from seeds.
#[derive(Deserialize)]
struct CheckpointSpec {
    #[serde(default)]
    step: u64,
    #[serde(default = "default_chunk_size")]
    chunk_size_bytes: u64,
    tensors: Vec<TensorSpec>,
}

fn default_chunk_size() -> u64 {
    hfsim::types::DEFAULT_CHUNK_SIZE
}

#[derive(Deserialize)]
struct TensorSpec {
    id: String,
    dtype: DType,
    shape: Vec<u64>,
    #[serde(default)]
    seed: u64,
}

fn cmd_checkpoint(args: &CheckpointArgs) -> hfsim::Result<()> {
    match &args.action {
        CheckpointAction::Save { spec, out } => {
            let text = std::fs::read_to_string(spec)?;
            let spec: CheckpointSpec = serde_json::from_str(&text)?;
            let tensors: Vec<TensorEntry> = spec
                .tensors
                .iter()
                .map(|t| {
                    let elems: u64 = t.shape.iter().product();
                    TensorEntry {
                        id: t.id.clone(),
                        shape: t.shape.clone(),
                        buffer: buffer_fill_pattern(t.dtype, elems as usize, t.seed),
                    }
                })
                .collect();
            let blob = save_checkpoint(&tensors, spec.chunk_size_bytes, spec.step)?;
            std::fs::write(out, &blob.bytes)?;
            println!(
                "saved {} tensors, {} bytes, {} batch writes",
                blob.index.entries.len(),
                blob.bytes.len(),
                blob.write_batches.chunk_count()
            );
            Ok(())
        }
        CheckpointAction::Load { ckpt, id, out } => {
            let blob = std::fs::read(ckpt)?;
            let (index, _) = parse_checkpoint(&blob)?;
            let tensor = load_tensor(&blob, &index, id)?;
            std::fs::write(out, tensor.payload())?;
            println!("loaded `{id}`: {} bytes", tensor.len_bytes());
            Ok(())
        }
        CheckpointAction::Inspect { ckpt } => {
            let blob = std::fs::read(ckpt)?;
            let (index, _) = parse_checkpoint(&blob)?;
            print!("{}", to_json_pretty(&index)?);
            Ok(())
        }
        CheckpointAction::LossBound {
            interval,
            failure_step,
        } => {
            let policy = SavePolicy::new(*interval, 1)?;
            println!(
                "lost_steps={}",
                hfsim::checkpoint::recovery_loss_bound(&policy, *failure_step)
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct TreeDumpOutput {
    dump: hfsim::tree::TreeDump,
    all_checks_passed: bool,
    cross_zone_edges: Option<(u32, u32)>,
}

fn cmd_tree_dump(args: &TreeDumpArgs) -> hfsim::Result<()> {
    let tree = build_double_binary_tree(args.n)?;
    let report = validate_tree(&tree);
    let cross = match &args.zones {
        None => None,
        Some(split) => {
            let parts: Vec<&str> = split.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::invalid("zones must be \"a,b\""));
            }
            let a: u32 = parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::invalid("zones must be \"a,b\""))?;
            let b: u32 = parts[1]
                .trim()
                .parse()
                .map_err(|_| Error::invalid("zones must be \"a,b\""))?;
            if a + b != args.n {
                return Err(Error::invalid(format!(
                    "zone split {a}+{b} does not cover {} ranks",
                    args.n
                )));
            }
            let zones: Vec<u32> = (0..args.n).map(|r| if r < a { 0 } else { 1 }).collect();
            Some(cross_zone_edge_count(&tree, &zones))
        }
    };
    let output = TreeDumpOutput {
        dump: dump_tree(&tree),
        all_checks_passed: report.all_passed(),
        cross_zone_edges: cross,
    };
    let json = to_json_pretty(&output)?;
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, json)?;
        }
        None => print!("{json}"),
    }
    Ok(())
}
