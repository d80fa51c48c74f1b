//! `cachenet` command-line frontend.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cachenet::exact::DEFAULT_ENUMERATION_CAP;
use cachenet::experiment::{
    run_experiment, run_trace_experiment, write_csv, Evaluation, ExperimentSpec, InstanceSource, SweepVariable,
    TraceExperimentSpec,
};
use cachenet::sim::{simulate, Horizon, QueueAccounting, SimConfig, SimPolicy, Workload};
use cachenet::special::tu::TU_MAX_ROWS;
use cachenet::special::{find_bad_cycles, relaxation_gap_with, tu_check_with, ConstraintMatrix, Cycle};
use cachenet::workload::{
    gen_instance, load_trace, save_trace, synthetic_trace, Architecture, GenParams, LayoutParams,
    SyntheticTraceParams, DEFAULT_SEGMENT_SIZE,
};
use cachenet::{solve, Algorithm, Execution, ProblemInstance, SolveOptions, SolveOutput};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Exit status for results that are infeasible or unstable.
pub const EXIT_UNSTABLE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "cachenet", version, about = "Joint caching and routing for hybrid cache networks")]
struct Cli {
    /// Largest number of placements brute force may enumerate.
    #[arg(long, global = true, default_value_t = DEFAULT_ENUMERATION_CAP as u64, env = "CACHENET_MAX_ENUM")]
    max_enum: u64,
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance (JSON) or a synthetic trace (CSV).
    Gen(GenCommand),
    /// Solve an instance and print placement, routing and delay as JSON.
    Solve(SolveArgs),
    /// Simulate a policy on an instance and print the report as JSON.
    Simulate(SimulateArgs),
    /// Sweep a parameter and write a CSV of mean delays.
    Experiment(ExperimentArgs),
    /// Total-unimodularity, cycle and relaxation-gap analyses.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchArg {
    Single,
    Multi,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Single => Architecture::Single,
            ArchArg::Multi => Architecture::Multi,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct LayoutArgs {
    #[arg(long, value_enum, default_value = "single")]
    architecture: ArchArg,
    /// Cache communication radius (architecture default if omitted).
    #[arg(long)]
    radius: Option<f64>,
    /// Hit delay at the edge of the radius (architecture default if omitted).
    #[arg(long)]
    max_hit_delay: Option<f64>,
}

impl LayoutArgs {
    fn params(&self) -> LayoutParams {
        LayoutParams {
            radius: self.radius,
            max_hit_delay: self.max_hit_delay,
            ..LayoutParams::new(self.architecture.into())
        }
    }
}

#[derive(Args, Debug, Clone)]
struct GenArgs {
    #[command(flatten)]
    layout: LayoutArgs,
    #[arg(long, default_value_t = 5)]
    users: usize,
    #[arg(long, default_value_t = 15)]
    files: usize,
    #[arg(long, default_value_t = 0.6)]
    zipf: f64,
    /// Per-user random popularity ranking.
    #[arg(long)]
    heterogeneous: bool,
    /// Aggregate request rate.
    #[arg(long, default_value_t = 5.0)]
    rate: f64,
    /// Service rate as a multiple of the aggregate rate.
    #[arg(long, default_value_t = 0.2, conflicts_with = "constant_delay")]
    service_ratio: f64,
    /// Constant-delay uncached path instead of the M/M/1 queue.
    #[arg(long)]
    constant_delay: bool,
    /// Total cache slots, split evenly across caches.
    #[arg(long, default_value_t = 5)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenCommand {
    #[command(flatten)]
    generator: GenArgs,
    /// Write a synthetic trace of this many requests instead of an instance.
    #[arg(long)]
    trace: Option<usize>,
}

impl GenArgs {
    fn params(&self) -> GenParams {
        GenParams {
            layout: self.layout.params(),
            num_users: self.users,
            num_files: self.files,
            zipf_skew: self.zipf,
            heterogeneous: self.heterogeneous,
            total_rate: self.rate,
            service_ratio: (!self.constant_delay).then_some(self.service_ratio),
            cache_budget: self.budget,
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value = "greedy")]
    algorithm: String,
    /// Include the greedy step trace.
    #[arg(long)]
    explain: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    instance: PathBuf,
    /// Output of `solve` whose policy is replayed.
    #[arg(long, conflicts_with = "plru")]
    policy_file: Option<PathBuf>,
    /// p-LRU with this routing probability.
    #[arg(long)]
    plru: Option<f64>,
    /// Replay this trace instead of Poisson arrivals.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000, conflicts_with = "time")]
    requests: usize,
    /// Stop at this simulated time instead of a request count.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    warmup: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Route cache-miss fetches through the back-end queue.
    #[arg(long)]
    include_miss_fetch: bool,
    /// Report per-file hit counts.
    #[arg(long)]
    file_stats: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepArg {
    CacheBudget,
    ServiceRate,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Fixed instance; otherwise instances come from the generator flags.
    #[arg(long, conflicts_with = "trace")]
    instance: Option<PathBuf>,
    /// Trace-driven mode: learn on one segment, replay the next.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    generator: GenArgs,
    #[arg(long, value_delimiter = ',', default_value = "greedy,plru")]
    algorithms: Vec<String>,
    #[arg(long, value_enum, value_name = "VARIABLE", default_value = "cache-budget")]
    sweep: SweepArg,
    /// Sweep values, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    /// Evaluate by Poisson simulation of this many requests.
    #[arg(long)]
    simulate: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEGMENT_SIZE)]
    segment_size: usize,
    /// Learn/test segment pairs in trace mode.
    #[arg(long, default_value_t = 1)]
    pairs: usize,
}

#[derive(Args, Debug)]
struct CheckArgs {
    instance: PathBuf,
    /// Only the total-unimodularity test.
    #[arg(long)]
    tu: bool,
    /// Only the 4k+2 cycle search.
    #[arg(long)]
    cycles: bool,
    /// Only the relaxation gap.
    #[arg(long)]
    gap: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct CheckReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tu: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bad_cycles: Option<Vec<Cycle>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ilp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<cachenet::Error>() {
        Some(cachenet::Error::NonIntegralRelaxation { .. } | cachenet::Error::Lp(_)) => EXIT_UNSTABLE,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let options = SolveOptions {
        enumeration_cap: u128::from(cli.max_enum),
        exec,
    };
    match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args, options),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args, exec),
        Command::Check(args) => cmd_check(args, options),
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let instance = ProblemInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    instance.ensure_valid().with_context(|| format!("validating {}", path.display()))?;
    Ok(instance)
}

fn cmd_gen(cmd: &GenCommand) -> Result<i32> {
    let args = &cmd.generator;
    if let Some(requests) = cmd.trace {
        let params = SyntheticTraceParams {
            num_users: args.users,
            num_files: args.files,
            zipf_skew: args.zipf,
            total_rate: args.rate,
            num_requests: requests,
        };
        let trace = synthetic_trace(&params, args.seed)?;
        match &args.output {
            Some(path) => save_trace(path, &trace)?,
            None => cachenet::workload::write_trace(io::stdout().lock(), &trace)?,
        }
        return Ok(0);
    }
    let instance = gen_instance(&args.params(), args.seed)?;
    emit(args.output.as_deref(), &instance.to_json())?;
    Ok(0)
}

fn cmd_solve(args: &SolveArgs, options: SolveOptions) -> Result<i32> {
    let instance = read_instance(&args.instance)?;
    let algorithm: Algorithm = args.algorithm.parse()?;
    let mut out = solve(&instance, algorithm, options)?;
    if !args.explain {
        out.trace = None;
    }
    emit(args.output.as_deref(), &serde_json::to_string_pretty(&out)?)?;
    Ok(if out.stable { 0 } else { EXIT_UNSTABLE })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let instance = read_instance(&args.instance)?;
    let policy = match (&args.policy_file, args.plru) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let out: SolveOutput =
                serde_json::from_str(&text).with_context(|| format!("parsing policy file {}", path.display()))?;
            out.policy
        }
        (None, Some(probability)) => SimPolicy::PLru { probability },
        (None, None) => bail!("give a policy with --policy-file or --plru"),
    };
    let horizon = match args.time {
        Some(t) => Horizon::Time(t),
        None => Horizon::Requests(args.requests),
    };
    let mut config = SimConfig::new(policy, horizon, args.seed);
    config.warmup_fraction = args.warmup;
    config.record_file_stats = args.file_stats;
    if args.include_miss_fetch {
        config.queue_accounting = QueueAccounting::IncludeMissFetch;
    }
    let trace = args.trace.as_deref().map(load_trace).transpose()?;
    let workload = match &trace {
        Some(t) => Workload::Trace(t),
        None => Workload::Poisson,
    };
    let report = simulate(&instance, workload, &config)?;
    emit(args.output.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    Ok(if report.unstable { EXIT_UNSTABLE } else { 0 })
}

fn parse_algorithms(names: &[String]) -> Result<Vec<Algorithm>> {
    Ok(names.iter().map(|s| s.trim().parse()).collect::<cachenet::Result<_>>()?)
}

fn cmd_experiment(args: &ExperimentArgs, exec: Execution) -> Result<i32> {
    let algorithms = parse_algorithms(&args.algorithms)?;
    let rows = if let Some(path) = &args.trace {
        if !matches!(args.sweep, SweepArg::CacheBudget) {
            bail!("trace experiments sweep the cache budget");
        }
        let trace = load_trace(path).with_context(|| format!("loading {}", path.display()))?;
        let budgets = args
            .values
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    bail!("cache budget {v} is not a positive integer")
                }
            })
            .collect::<Result<_>>()?;
        let g = &args.generator;
        let spec = TraceExperimentSpec {
            layout: g.layout.params(),
            algorithms,
            budgets,
            service_ratio: (!g.constant_delay).then_some(g.service_ratio),
            segment_size: args.segment_size,
            pairs: args.pairs,
            seed: g.seed,
            warmup_fraction: 0.1,
        };
        run_trace_experiment(&trace, &spec, exec)?
    } else {
        let source = match &args.instance {
            Some(path) => InstanceSource::Fixed(read_instance(path)?),
            None => InstanceSource::Generated(args.generator.params()),
        };
        let spec = ExperimentSpec {
            source,
            algorithms,
            sweep: match args.sweep {
                SweepArg::CacheBudget => SweepVariable::CacheBudget,
                SweepArg::ServiceRate => SweepVariable::ServiceRate,
            },
            values: args.values.clone(),
            replications: args.replications,
            seed: args.generator.seed,
            evaluation: match args.simulate {
                Some(requests) => Evaluation::Simulated { requests },
                None => Evaluation::Analytical,
            },
        };
        run_experiment(&spec, exec)?
    };
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows)?;
    emit(args.generator.output.as_deref(), &String::from_utf8(buf)?)?;
    Ok(if rows.iter().all(|r| r.mean_delay.is_finite()) {
        0
    } else {
        EXIT_UNSTABLE
    })
}

fn cmd_check(args: &CheckArgs, options: SolveOptions) -> Result<i32> {
    let instance = read_instance(&args.instance)?;
    let all = !(args.tu || args.cycles || args.gap);
    let mut report = CheckReport::default();
    if all || args.tu {
        let matrix = ConstraintMatrix::for_instance(&instance);
        if matrix.num_rows() <= TU_MAX_ROWS {
            let tu = tu_check_with(&matrix, options.exec)?;
            report.tu = Some(tu.totally_unimodular);
            report.witness = tu.witness;
        } else if args.tu {
            bail!(
                "constraint matrix has {} rows; the total-unimodularity test handles at most {TU_MAX_ROWS}",
                matrix.num_rows()
            );
        } else {
            report.notes.push(format!(
                "tu skipped: {} rows exceed the limit of {TU_MAX_ROWS}",
                matrix.num_rows()
            ));
        }
    }
    if all || args.cycles {
        report.bad_cycles = Some(find_bad_cycles(&instance)?);
    }
    if all || args.gap {
        if instance.uncached_model.is_congestion_sensitive() {
            if args.gap {
                bail!("the relaxation gap is defined for the constant-delay model");
            }
            report.notes.push("gap skipped: congestion-sensitive instance".into());
        } else {
            let g = relaxation_gap_with(&instance, options.enumeration_cap, options.exec)?;
            report.ilp = Some(g.ilp);
            report.lp = Some(g.lp);
            report.gap = Some(g.gap);
        }
    }
    emit(args.output.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    Ok(0)
}
