//! `gridcast` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, invalid
//! parameters, unknown solver ids), 2 for runtime failures (I/O, oversized
//! oracle instances).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use gridcast::baselines::{broadcast_solve, unicast_solve};
use gridcast::experiment::{
    run_bench, run_solver, run_sweep, BenchRow, BenchSpec, ResultRow, SolverConfig, SolverId,
    SweepSpec,
};
use gridcast::oracle::{exact_solve_capped, OracleResult, DEFAULT_ENUMERATION_CAP};
use gridcast::scenario::{fig1_instance, generate, GenParams, Scene};
use gridcast::solvers::{accelerated_greedy, refined_greedy};
use gridcast::ProblemInstance;

#[derive(Debug, Parser)]
#[command(name = "gridcast", version, about = "Interest-aware multicast scheduling of BEV grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene and its problem instance.
    Gen(GenArgs),
    /// Solve an instance and print the result as JSON.
    Solve(SolveArgs),
    /// Run a parameter sweep and write one CSV row per (solver, value, seed).
    Sweep(SweepArgs),
    /// Time both greedy solvers across user and grid counts.
    Bench(BenchArgs),
    /// Exact optimum of a small instance, with an on-disk cache.
    Oracle(OracleArgs),
    /// Write the four-user example instance and report scheme utilities.
    Fig1(Fig1Args),
}

/// Scene parameter overrides, applied on top of `--params` or the defaults.
#[derive(Debug, Args)]
struct ParamFlags {
    /// JSON file with generation parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    n_occluders: Option<usize>,
    /// Latency budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Bandwidth in Hz.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Bytes per grid.
    #[arg(long)]
    grid_bytes: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
}

impl ParamFlags {
    fn resolve(&self) -> Result<GenParams, Failure> {
        let mut p: GenParams = match &self.params {
            Some(path) => read_json(path).map_err(Failure::Usage)?,
            None => GenParams::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { p.$field = v; })*
            };
        }
        set!(seed => seed, n_users => n_users, height => height, width => width,
             n_occluders => n_occluders, budget => budget_s, bandwidth => bandwidth_hz,
             grid_bytes => grid_bytes, eta => eta, window => window);
        p.validate().map_err(|e| Failure::Usage(e.into()))?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    params: ParamFlags,
    /// Output directory for `instance.json` and `scene.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Instance JSON file.
    instance: PathBuf,
    #[arg(long, default_value = "greedy_accel")]
    solver: String,
    /// JSON file with solver configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    oracle_cap: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Sweep specification JSON file.
    spec: PathBuf,
    /// Output CSV; the summary goes next to it as `<stem>.summary.json`.
    #[arg(long)]
    out: PathBuf,
    /// Concurrent sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    params: ParamFlags,
    /// Comma-separated user counts.
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 12, 16, 20, 24])]
    users: Vec<usize>,
    /// Comma-separated grid counts (multiples of the map height).
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 150, 200, 250])]
    grids: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Instance JSON file.
    instance: PathBuf,
    /// Cache directory; results are stored as `<sha256 of instance>.json`.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u64,
}

#[derive(Debug, Args)]
struct Fig1Args {
    /// Where to write the instance JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_instance(path: &Path) -> Result<ProblemInstance, Failure> {
    // unreadable files are runtime failures, malformed ones usage errors
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Runtime)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing instance {}", path.display()))
        .map_err(Failure::Usage)
}

fn parse_solver(id: &str) -> Result<SolverId, Failure> {
    id.parse().map_err(|e: gridcast::experiment::UnknownSolver| Failure::Usage(e.into()))
}

#[derive(Serialize)]
struct Provenance<'a> {
    generator: &'static str,
    version: &'static str,
    seed: u64,
    params: &'a GenParams,
}

#[derive(Serialize)]
struct SceneFile<'a> {
    provenance: Provenance<'a>,
    scene: &'a Scene,
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let params = args.params.resolve()?;
    let (scene, inst) = generate(&params).map_err(|e| Failure::Usage(e.into()))?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join("instance.json"), &inst)?;
    write_json(
        &args.out.join("scene.json"),
        &SceneFile {
            provenance: Provenance {
                generator: "gridcast",
                version: gridcast::VERSION,
                seed: params.seed,
                params: &params,
            },
            scene: &scene,
        },
    )?;
    info!("wrote {} users, {} grids to {}", inst.n_users(), inst.n_grids(), args.out.display());
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let id = parse_solver(&args.solver)?;
    let inst = load_instance(&args.instance)?;
    let mut cfg: SolverConfig = match &args.config {
        Some(p) => read_json(p).map_err(Failure::Usage)?,
        None => SolverConfig::default(),
    };
    if let Some(cap) = args.oracle_cap {
        cfg.oracle_cap = cap;
    }
    cfg.baseline
        .validate()
        .map_err(|e| Failure::Usage(e.into()))?;
    let result = run_solver(id, &inst, &cfg).map_err(|e| Failure::Runtime(e.into()))?;
    print_json(&result)?;
    Ok(())
}

fn summary_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    csv.with_file_name(format!("{stem}.summary.json"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut spec: SweepSpec = read_json(&args.spec).map_err(Failure::Usage)?;
    if let Some(r) = args.repetitions {
        spec.repetitions = r;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| Failure::Usage(e.into()))?;
    let out = run_sweep(&spec, args.jobs).map_err(|e| Failure::Runtime(e.into()))?;
    write_csv::<ResultRow>(&args.out, &out.rows)?;
    write_json(&summary_path(&args.out), &out.summary)?;
    let failed = out.rows.iter().filter(|r| !r.error.is_empty()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see the error column", out.rows.len());
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let params = args.params.resolve()?;
    let spec = BenchSpec {
        n_users: args.users.clone(),
        n_grids: args.grids.clone(),
        seed: params.seed,
        params,
        repetitions: args.repetitions,
    };
    let rows = run_bench(&spec).map_err(|e| Failure::Usage(e.into()))?;
    write_csv::<BenchRow>(&args.out, &rows)?;
    Ok(())
}

/// Cache key: SHA-256 of the instance's JSON form.
fn instance_key(inst: &ProblemInstance) -> anyhow::Result<String> {
    let bytes = serde_json::to_vec(inst)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), Failure> {
    let inst = load_instance(&args.instance)?;
    let cached = match &args.cache {
        Some(dir) => {
            let path = dir.join(format!("{}.json", instance_key(&inst)?));
            if path.exists() {
                info!("cache hit {}", path.display());
                Some(read_json::<OracleResult>(&path)?)
            } else {
                None
            }
        }
        None => None,
    };
    let result = match cached {
        Some(r) => r,
        None => {
            let r = exact_solve_capped(&inst, args.cap).map_err(|e| Failure::Runtime(e.into()))?;
            if let Some(dir) = &args.cache {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(format!("{}.json", instance_key(&inst)?));
                write_json(&path, &r)?;
                info!("cached {}", path.display());
            }
            r
        }
    };
    print_json(&result)?;
    Ok(())
}

fn cmd_fig1(args: &Fig1Args) -> Result<(), Failure> {
    let inst = fig1_instance().map_err(|e| Failure::Runtime(e.into()))?;
    match &args.out {
        Some(p) => write_json(p, &inst)?,
        None => print_json(&inst)?,
    }
    let opt = exact_solve_capped(&inst, DEFAULT_ENUMERATION_CAP)
        .map_err(|e| Failure::Runtime(e.into()))?
        .opt_utility;
    eprintln!("oracle        {opt}");
    eprintln!("greedy        {}", refined_greedy(&inst).utility);
    eprintln!("greedy_accel  {}", accelerated_greedy(&inst).utility);
    eprintln!("broadcast     {}", broadcast_solve(&inst).utility);
    eprintln!("unicast       {}", unicast_solve(&inst).utility);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Fig1(a) => cmd_fig1(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
