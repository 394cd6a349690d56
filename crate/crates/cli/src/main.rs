use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use proxline::problems::{parse_libsvm, LogisticProblem};
use proxline::SolverKind;
use proxline_bench::config::{bicycle_config, parse_list};
use proxline_bench::matrix::{run_mpc_matrix, LAMBDA_GRID, MEMORY_LOGISTIC, MEMORY_MPC, MEMORY_SYNTHETIC};
use proxline_bench::profile::write_profile_csv;
use proxline_bench::record::{emit_records, load_records, write_records, Format};
use proxline_bench::{default_seed, performance_profile, run_matrix, BenchProblem, KeyValues, Metric, MpcStart, RunRecord, RunSettings};

#[derive(Parser)]
#[command(name = "proxline", version, about = "Run and compare the proxline solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem with one solver and print its record.
    Solve(SolveArgs),
    /// Run a solver/problem matrix.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Performance profile of a record file.
    Profile(ProfileArgs),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// l1-regularized logistic regression over a λ grid.
    Logistic(LogisticArgs),
    /// Closed-loop bicycle MPC solved by ALM.
    Mpc(MpcArgs),
    /// Random synthetic instances.
    Synthetic(SyntheticArgs),
}

/// Flags shared by every run; each also accepted as a config key with `_`
/// for `-`.
#[derive(Args, Clone, Default)]
struct Common {
    /// key = value file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated solvers (panoc++, zerofpr, panoc, pg).
    #[arg(long)]
    solvers: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// L-BFGS memory.
    #[arg(long)]
    memory: Option<usize>,
    /// Parallel runs; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json; defaults to the output file extension.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    /// logistic, lasso, boxqp or mpc.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    /// LIBSVM file for logistic problems.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lambda_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct LogisticArgs {
    /// LIBSVM file; a synthetic 500×100 instance when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated multiples of λ_max.
    #[arg(long)]
    lambda_ratio: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MpcArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, conflicts_with = "cold")]
    warm: bool,
    #[arg(long)]
    cold: bool,
    /// Primal and dual ALM tolerance.
    #[arg(long)]
    alm_tol: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SyntheticArgs {
    /// logistic, lasso or boxqp.
    #[arg(long)]
    kind: Option<String>,
    /// Number of variables.
    #[arg(long)]
    n: Option<usize>,
    /// Number of samples (logistic, lasso); defaults to 3n/2.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_ratio: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ProfileArgs {
    /// evals_f_plus_grad, matvec, iterations or time.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<KeyValues> {
    Ok(match path {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    })
}

/// Settings, solver list, job bound and output target from flags and config.
struct Resolved {
    settings: RunSettings,
    solvers: Vec<SolverKind>,
    jobs: usize,
    out: Option<PathBuf>,
    format: Format,
}

fn resolve_common(c: Common, kv: &mut KeyValues, memory: usize) -> anyhow::Result<Resolved> {
    let defaults = RunSettings::default();
    let solvers = match kv.pick(c.solvers, "solvers")? {
        Some(list) => parse_list(&list)?,
        None => SolverKind::ALL.to_vec(),
    };
    let settings = RunSettings {
        tol: kv.pick(c.tol, "tol")?.unwrap_or(defaults.tol),
        max_iter: kv.pick(c.max_iter, "max_iter")?.unwrap_or(defaults.max_iter),
        memory: kv.pick(c.memory, "memory")?.unwrap_or(memory),
        alm_tol: defaults.alm_tol,
    };
    let out: Option<PathBuf> = kv.pick(c.out, "out")?;
    let format = match kv.pick::<String>(c.format, "format")? {
        Some(f) => f.parse()?,
        None => out.as_deref().map_or(Format::Csv, Format::from_path),
    };
    Ok(Resolved {
        settings,
        solvers,
        jobs: kv.pick(c.jobs, "jobs")?.unwrap_or(0),
        out,
        format,
    })
}

fn seed(flag: Option<u64>, kv: &mut KeyValues) -> anyhow::Result<u64> {
    match kv.pick(flag, "seed")? {
        Some(s) => Ok(s),
        None => Ok(default_seed()?),
    }
}

fn load_logistic(path: &Path) -> anyhow::Result<LogisticProblem> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (a, b) = parse_libsvm(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    LogisticProblem::new(a, b, 0.0).with_context(|| path.display().to_string())
}

fn logistic_at(base: &LogisticProblem, stem: &str, ratio: f64) -> BenchProblem {
    let mut problem = base.clone();
    problem.lambda = ratio * problem.lambda_max();
    BenchProblem::Logistic {
        id: format!("{stem}@{ratio}"),
        problem,
    }
}

fn emit(records: &[RunRecord], r: &Resolved) -> anyhow::Result<()> {
    match &r.out {
        Some(path) => emit_records(path, records, r.format)?,
        None => write_records(io::stdout().lock(), records, r.format, Path::new("<stdout>"))?,
    }
    let converged = records.iter().filter(|x| x.status.converged()).count();
    eprintln!("{} runs, {converged} converged", records.len());
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<()> {
    let mut kv = load_config(&a.common.config)?;
    let kind: String = kv.pick(a.problem, "problem")?.unwrap_or_else(|| "logistic".into());
    let solver: SolverKind = match kv.pick::<String>(a.solver, "solver")? {
        Some(s) => s.parse()?,
        None => SolverKind::PanocPlus,
    };
    let data: Option<PathBuf> = kv.pick(a.data, "data")?;
    let n = kv.pick(a.n, "n")?;
    let m = kv.pick(a.m, "m")?;
    let ratio = kv.pick(a.lambda_ratio, "lambda_ratio")?;
    let seed = seed(a.seed, &mut kv)?;
    let problem = match kind.as_str() {
        "logistic" => match &data {
            Some(path) => logistic_at(&load_logistic(path)?, &file_stem(path), ratio.unwrap_or(0.05)),
            None => {
                let n = n.unwrap_or(100);
                BenchProblem::synthetic_logistic(m.unwrap_or(5 * n), n, ratio.unwrap_or(0.05), seed)?
            }
        },
        "lasso" => {
            let n = n.unwrap_or(20);
            BenchProblem::lasso(m.unwrap_or(n + n / 2), n, ratio.unwrap_or(0.1), seed)?
        }
        "boxqp" => BenchProblem::box_qp(n.unwrap_or(20), seed)?,
        "mpc" => BenchProblem::Mpc {
            id: "bicycle".into(),
            config: bicycle_config(&mut kv)?,
            u0: None,
        },
        other => bail!("unknown problem {other:?} (logistic, lasso, boxqp, mpc)"),
    };
    let memory = if kind == "mpc" { MEMORY_MPC } else { MEMORY_LOGISTIC };
    let mut common = a.common;
    common.solvers = Some(solver.name().into());
    let r = resolve_common(common, &mut kv, memory)?;
    kv.finish()?;
    let records = run_matrix(&[problem], &r.solvers, &r.settings, 1)?;
    emit(&records, &r)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_logistic(a: LogisticArgs) -> anyhow::Result<()> {
    let mut kv = load_config(&a.common.config)?;
    let data: Option<PathBuf> = kv.pick(a.data, "data")?;
    let ratios = match kv.pick::<String>(a.lambda_ratio, "lambda_ratio")? {
        Some(list) => parse_list(&list)?,
        None => LAMBDA_GRID.to_vec(),
    };
    let seed = seed(a.seed, &mut kv)?;
    let r = resolve_common(a.common, &mut kv, MEMORY_LOGISTIC)?;
    kv.finish()?;
    let (base, stem) = match &data {
        Some(path) => (load_logistic(path)?, file_stem(path)),
        None => match BenchProblem::synthetic_logistic(500, 100, 0.0, seed)? {
            BenchProblem::Logistic { problem, .. } => (problem, format!("synthetic-500x100-s{seed}")),
            _ => unreachable!("synthetic_logistic builds a logistic problem"),
        },
    };
    let problems: Vec<BenchProblem> = ratios.iter().map(|&q| logistic_at(&base, &stem, q)).collect();
    let records = run_matrix(&problems, &r.solvers, &r.settings, r.jobs)?;
    emit(&records, &r)
}

fn cmd_mpc(a: MpcArgs) -> anyhow::Result<()> {
    let mut kv = load_config(&a.common.config)?;
    let steps = kv.pick(a.steps, "steps")?.unwrap_or(10);
    let flag = match (a.warm, a.cold) {
        (true, _) => Some("warm".to_string()),
        (_, true) => Some("cold".to_string()),
        _ => None,
    };
    let start = match kv.pick(flag, "start")?.as_deref() {
        None | Some("warm") => MpcStart::Warm,
        Some("cold") => MpcStart::Cold,
        Some(other) => bail!("start = {other:?}: expected warm or cold"),
    };
    let alm_tol = kv.pick(a.alm_tol, "alm_tol")?;
    let bike = bicycle_config(&mut kv)?;
    let mut r = resolve_common(a.common, &mut kv, MEMORY_MPC)?;
    kv.finish()?;
    if let Some(t) = alm_tol {
        r.settings.alm_tol = t;
    }
    let id = match start {
        MpcStart::Warm => "bicycle-warm",
        MpcStart::Cold => "bicycle-cold",
    };
    let records = run_mpc_matrix(id, &bike, &r.solvers, &r.settings, steps, start, r.jobs)?;
    emit(&records, &r)
}

fn cmd_synthetic(a: SyntheticArgs) -> anyhow::Result<()> {
    let mut kv = load_config(&a.common.config)?;
    let kind: String = kv.pick(a.kind, "kind")?.unwrap_or_else(|| "logistic".into());
    let n = kv.pick(a.n, "n")?.unwrap_or(200);
    let m = kv.pick(a.m, "m")?.unwrap_or(n + n / 2);
    let instances = kv.pick(a.instances, "instances")?.unwrap_or(20);
    let ratio = kv.pick(a.lambda_ratio, "lambda_ratio")?;
    let seed = seed(a.seed, &mut kv)?;
    let r = resolve_common(a.common, &mut kv, MEMORY_SYNTHETIC)?;
    kv.finish()?;
    if n == 0 || instances == 0 {
        bail!("--n and --instances must be positive");
    }
    let problems = (0..instances as u64)
        .map(|i| match kind.as_str() {
            "logistic" => Ok(BenchProblem::synthetic_logistic(m, n, ratio.unwrap_or(0.01), seed + i)?),
            "lasso" => Ok(BenchProblem::lasso(m, n, ratio.unwrap_or(0.1), seed + i)?),
            "boxqp" => Ok(BenchProblem::box_qp(n, seed + i)?),
            other => bail!("unknown kind {other:?} (logistic, lasso, boxqp)"),
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let records = run_matrix(&problems, &r.solvers, &r.settings, r.jobs)?;
    emit(&records, &r)
}

fn cmd_profile(a: ProfileArgs) -> anyhow::Result<()> {
    let mut kv = load_config(&a.config)?;
    let metric: Metric = match kv.pick::<String>(a.metric, "metric")? {
        Some(m) => m.parse()?,
        None => Metric::EvalsFPlusGrad,
    };
    let Some(input) = kv.pick::<PathBuf>(a.input, "in")? else {
        bail!("--in is required");
    };
    let out: Option<PathBuf> = kv.pick(a.out, "out")?;
    kv.finish()?;
    let records = load_records(&input)?;
    let curves = performance_profile(&records, metric)?;
    match &out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_profile_csv(file, &curves).with_context(|| path.display().to_string())?;
        }
        None => write_profile_csv(io::stdout().lock(), &curves)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(BenchCommand::Logistic(a)) => cmd_logistic(a),
        Command::Bench(BenchCommand::Mpc(a)) => cmd_mpc(a),
        Command::Bench(BenchCommand::Synthetic(a)) => cmd_synthetic(a),
        Command::Profile(a) => cmd_profile(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
