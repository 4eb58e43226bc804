use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use tailopt::experiment::{read_results, read_solution, report, run_batch, BatchPlan, Starts, TrialSettings};
use tailopt::model::{build_uniform_model, load_model_file, PhysicalParams};
use tailopt::morphometrics::{compare_groups, read_series_csv};
use tailopt::multistart::InitStrategy;
use tailopt::simulate::validate;
use tailopt::trajgen::{gen_batch, read_targets_csv, write_targets_csv};
use tailopt::transcription::{Grid, Mode};

#[derive(Parser)]
#[command(name = "tailopt", version, about = "Trajectory optimization for articulated inertial tails")]
struct Cli {
    /// Model configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a batch of torso targets.
    GenTargets {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize tails of fixed, equal link lengths.
    Optimize(OptimizeArgs),
    /// Optimize link lengths together with the trajectory, warm-started
    /// from the equal-length solutions.
    OptimizeLengths(OptimizeArgs),
    /// Re-simulate a stored solution and write the rollout.
    Simulate {
        #[arg(long)]
        solution: PathBuf,
        /// Output CSV of the simulated states; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a results table.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Directory for summary and plot-data tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare vertebral length patterns between groups.
    Morpho {
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Uniform,
    Variable,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartsArg {
    /// Zeros, straight line and three seeded random starts.
    All,
    Zeros,
    StraightLine,
    Random,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Targets CSV; sampled from `--seed` and `--count` when omitted.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Link counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    links: Vec<usize>,
    /// Overrides the subcommand's default mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, env = "TAILOPT_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Optimality tolerance of the solver.
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Collocation step, s.
    #[arg(long, default_value_t = 0.004)]
    dt: f64,
    #[arg(long, value_enum, default_value = "all")]
    starts: StartsArg,
}

fn params(config: Option<&Path>) -> Result<PhysicalParams> {
    Ok(match config {
        Some(p) => load_model_file(p).with_context(|| format!("loading {}", p.display()))?.params(),
        None => PhysicalParams::default(),
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn optimize(cli_config: Option<&Path>, args: &OptimizeArgs, default_mode: Mode) -> Result<ExitCode> {
    let targets = match &args.targets {
        Some(p) => read_targets_csv(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
        None => gen_batch(args.seed, args.count)?,
    };
    let mut settings = TrialSettings::new(params(cli_config)?, args.seed);
    settings.grid = Grid::new(0.5, args.dt)?;
    if let Some(tol) = args.solver_tol {
        settings.solver.optimality_tol = tol;
    }
    if let Some(n) = args.max_iterations {
        settings.solver.max_iterations = n;
    }
    settings.starts = match args.starts {
        StartsArg::All => Starts::All,
        StartsArg::Zeros => Starts::Only(InitStrategy::Zeros),
        StartsArg::StraightLine => Starts::Only(InitStrategy::StraightLine),
        StartsArg::Random => Starts::Only(InitStrategy::Random(0)),
    };
    let mode = match args.mode {
        Some(ModeArg::Uniform) => Mode::Uniform,
        Some(ModeArg::Variable) => Mode::Variable,
        None => default_mode,
    };
    let plan = BatchPlan { settings, targets, links: args.links.clone(), mode, out_dir: args.out.clone(), jobs: args.jobs };
    let summary = run_batch(&plan)?;
    info!("{} computed, {} resumed, {} failed", summary.computed, summary.resumed, summary.failed);
    println!("{} trials: {} computed, {} resumed, {} failed; results in {}", summary.rows.len(), summary.computed, summary.resumed, summary.failed, plan.results_path().display());
    Ok(if summary.all_failed() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn simulate(config: Option<&Path>, solution: &Path, out: Option<&Path>) -> Result<()> {
    let sol = read_solution(solution)?;
    let model = build_uniform_model(sol.n_links, &params(config)?)?;
    let v = validate(&sol, &model)?;
    let mut w = csv::Writer::from_writer(output(out)?);
    let n_q = sol.n_q();
    let mut header = vec!["t".to_string()];
    header.extend((0..n_q).map(|i| format!("q{i}")));
    header.extend((0..n_q).map(|i| format!("qdot{i}")));
    header.push("work_j".into());
    w.write_record(&header)?;
    for ((t, x), work) in v.trajectory.t.iter().zip(&v.trajectory.x).zip(&v.trajectory.work) {
        let mut r = vec![t.to_string()];
        r.extend(x.iter().map(|v| v.to_string()));
        r.push(work.to_string());
        w.write_record(&r)?;
    }
    w.flush()?;
    eprintln!(
        "torso RMS deviation {:.3e} rad, full state {:.3e} rad: {}",
        v.torso_rms,
        v.full_rms,
        if v.passed() { "validated" } else { "not validated" }
    );
    Ok(())
}

fn morpho(path: &Path) -> Result<()> {
    let series = read_series_csv(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
    let c = compare_groups(&series)?;
    for s in &c.excluded {
        warn!("{s}: single vertebra, excluded");
    }
    println!("species,group,max_neighbor_diff");
    for (s, g, d) in &c.per_species {
        println!("{s},{g},{d}");
    }
    println!("mean inertial_maneuvering: {:.4}", c.mean_im);
    println!("mean nonspecialist: {:.4}", c.mean_nonspecialist);
    println!("Welch t = {:.4}, df = {:.2}, p = {:.3e}", c.test.t, c.test.df, c.test.p);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = cli.config.as_deref();
    match &cli.cmd {
        Command::GenTargets { seed, count, out } => {
            let targets = gen_batch(*seed, *count as usize)?;
            let mut w = output(out.as_deref())?;
            write_targets_csv(&targets, &mut w)?;
            w.flush()?;
        }
        Command::Optimize(args) => return optimize(config, args, Mode::Uniform),
        Command::OptimizeLengths(args) => return optimize(config, args, Mode::Variable),
        Command::Simulate { solution, out } => simulate(config, solution, out.as_deref())?,
        Command::Report { results, out } => {
            let rows = read_results(fs::File::open(results).with_context(|| format!("opening {}", results.display()))?)?;
            let r = report(&rows)?;
            if let Some(dir) = out {
                r.write(dir)?;
            }
            print!("{}", r.table());
        }
        Command::Morpho { csv } => morpho(csv)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
