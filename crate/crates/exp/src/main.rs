use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use oligopoly::analytic::solve_open_loop_bounded;
use oligopoly::{
    check_second_order, rollout, solve_feedback_ne, solve_open_loop_ne, verify_profile, Algorithm,
    Information, LearnedProfile, VerifyOptions,
};
use oligopoly_exp::figures::emit_strategy_plot;
use oligopoly_exp::profile_io::load_profile;
use oligopoly_exp::sweep::{cell_dir, results_path};
use oligopoly_exp::{emit_figures, read_results, run_sweep, ExpError, ExperimentConfig, ResultRow, SweepSpec};

#[derive(Parser)]
#[command(name = "oligopoly", version, about = "Dynamic oligopoly experiments: simulate, solve, train, verify, sweep, plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play a profile (the analytic equilibrium by default) and write the trajectory CSV
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trained network file (.json) or equilibrium table (.csv)
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Sample from the trained policies with this seed instead of playing their mode
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the no-dropout analytic equilibrium and write it as CSV
    SolveAnalytic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train all firms by self-play and write the profile file and training log
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "ppo")]
        algo: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/train")]
        out: PathBuf,
    },
    /// Brute-force best-response verification of a deterministic profile
    Verify {
        #[arg(long)]
        profile: PathBuf,
        /// Market of an equilibrium table; network files carry their own
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        k: usize,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run (or resume) a cost sweep
    Sweep {
        /// Sweep spec (TOML); the full 1,200-cell design when absent
        #[arg(long)]
        config: Option<PathBuf>,
        /// Keep only this many evenly spread cost points
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
    },
    /// Figures from a results table, or the price paths of one run
    Plot {
        #[arg(long)]
        results: Option<PathBuf>,
        /// Strategy plot for one cell, e.g. `c0=0.51,algo=ppo,information=partial,seed=0`
        #[arg(long)]
        cell: Option<String>,
        /// Strategy plot of a trajectory CSV
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value = "out/figures")]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, name: &str, body: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(ExpError::from)?;
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(ExpError::from)?;
            println!("{}", path.display());
        }
        None => std::io::stdout().write_all(body)?,
    }
    Ok(())
}

fn simulate(config: &Path, profile: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let (profile, market) = match profile {
        Some(p) if seed.is_some() => {
            let learned = LearnedProfile::<f32>::load(p).map_err(ExpError::from)?;
            (learned.sampling_profile(), learned.config)
        }
        Some(p) => load_profile(p, Some(&cfg.market))?,
        None => {
            let base = cfg.market.clone().with_dropouts(false);
            (oligopoly::analytic_baseline(&base).map_err(ExpError::from)?, cfg.market.clone())
        }
    };
    let traj = rollout(&profile, &market, seed).map_err(ExpError::from)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(ExpError::from)?;
    write_or_print(out, "trajectory.csv", &buf)
}

fn solve_analytic(config: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let market = cfg.market.clone().with_dropouts(false);
    if cfg.market.dropouts {
        eprintln!("note: solving the game without dropouts");
    }
    let mut buf = Vec::new();
    match market.information {
        Information::PartiallyObservable => {
            let eq = match solve_open_loop_ne(&market) {
                Err(oligopoly::Error::ConstraintViolated(why)) => {
                    eprintln!("note: interior solution infeasible ({why}); solving with price bounds");
                    solve_open_loop_bounded(&market)
                }
                other => other,
            }
            .map_err(ExpError::from)?;
            eprintln!("residual {:e} after {} iterations", eq.residual_norm, eq.iterations);
            for r in check_second_order(&market, &eq.prices) {
                eprintln!("agent {} hessian eigenvalues {:?}", r.agent, r.eigenvalues);
            }
            eq.write_csv(&mut buf).map_err(ExpError::from)?;
        }
        Information::FullyObservable => {
            solve_feedback_ne(&market).map_err(ExpError::from)?.write_csv(&mut buf).map_err(ExpError::from)?;
        }
    }
    write_or_print(out, "equilibrium.csv", &buf)
}

fn train(config: &Path, algo: Algorithm, seed: u64, out: &Path) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let tc = cfg.train.resolve(algo, seed);
    let every = (tc.iterations / 20).max(1);
    let learned = oligopoly::learn::train_selfplay_with::<f32, _>(&cfg.market, algo, &tc, |it, u| {
        if it % every == 0 || it + 1 == tc.iterations {
            let u: Vec<String> = u.iter().map(|v| format!("{v:.5}")).collect();
            eprintln!("iteration {it}: mean utility [{}]", u.join(", "));
        }
    })
    .map_err(ExpError::from)?;
    std::fs::create_dir_all(out).map_err(ExpError::from)?;
    let profile = out.join("profile.json");
    learned.save(&profile).map_err(ExpError::from)?;
    learned
        .write_log_csv(std::fs::File::create(out.join("log.csv")).map_err(ExpError::from)?)
        .map_err(ExpError::from)?;
    cfg.save(&out.join("config.toml"))?;
    let played = rollout(&learned.profile(), &cfg.market, None).map_err(ExpError::from)?;
    for i in 0..cfg.market.n_agents {
        let last = played.exit_stage(i).unwrap_or(cfg.market.horizon);
        let path: Vec<String> = played.prices_of(i)[..last].iter().map(|p| format!("{p:.6}")).collect();
        eprintln!("agent {i} on-path prices [{}]", path.join(", "));
    }
    println!("{}", profile.display());
    Ok(())
}

fn verify(profile: &Path, config: Option<&Path>, k: usize, workers: Option<usize>, out: Option<&Path>) -> anyhow::Result<()> {
    if k < 2 {
        return Err(ExpError::InvalidConfig("--k must be at least 2".into()).into());
    }
    let cfg = config.map(ExperimentConfig::load).transpose()?;
    let (profile, market) = load_profile(profile, cfg.as_ref().map(|c| &c.market))?;
    let mut options = VerifyOptions::with_k(k);
    if let Some(c) = &cfg {
        options.denominator_threshold = c.verify.denominator_threshold;
    }
    let run = || verify_profile(&profile, &options, &market);
    let report = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .context("thread pool")?
            .install(run),
        None => run(),
    }
    .map_err(ExpError::from)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(ExpError::from)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(ExpError::from)?;
        std::fs::write(dir.join("report.json"), report.summary_json()).map_err(ExpError::from)?;
    }
    eprintln!("epsilon {:e}", report.epsilon);
    write_or_print(out, "report.csv", &buf)
}

fn sweep(config: Option<&Path>, thin: Option<usize>, workers: usize, out: &Path) -> anyhow::Result<bool> {
    let mut spec = match config {
        Some(p) => SweepSpec::load(p)?,
        None => SweepSpec::default(),
    };
    if let Some(n) = thin {
        spec = spec.thinned(n);
    }
    let summary = run_sweep(&spec, workers, out, true)?;
    eprintln!(
        "{} cells: {} done earlier, {} completed, {} failed",
        summary.cells, summary.skipped, summary.completed, summary.failed
    );
    println!("{}", results_path(out).display());
    if summary.failed > 0 {
        eprintln!("error: cell_failures: {} of {} cells failed, rerun to retry them", summary.failed, summary.cells);
    }
    Ok(summary.failed == 0)
}

/// Parses `key=value` pairs and returns the matching row closest in cost.
fn select_cell<'a>(rows: &'a [ResultRow], selector: &str) -> anyhow::Result<&'a ResultRow> {
    let mut c0 = None;
    let mut candidates: Vec<&ResultRow> = rows.iter().filter(|r| r.is_ok()).collect();
    for pair in selector.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| ExpError::InvalidConfig(format!("cell selector '{pair}' is not key=value")))?;
        let value = value.trim();
        match key.trim() {
            "c0" => c0 = Some(value.parse::<f64>().map_err(|_| ExpError::InvalidConfig(format!("bad c0 '{value}'")))?),
            "algo" => candidates.retain(|r| r.algo.as_str() == value),
            "information" => candidates.retain(|r| r.information.to_string() == value),
            "seed" => candidates.retain(|r| r.seed.to_string() == value),
            "key" => candidates.retain(|r| r.cell_key.starts_with(value)),
            other => bail!(ExpError::InvalidConfig(format!("unknown cell selector key '{other}'"))),
        }
    }
    let target = c0.unwrap_or(f64::NAN);
    candidates
        .into_iter()
        .min_by(|a, b| {
            let da = (a.c0 - target).abs();
            let db = (b.c0 - target).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or_else(|| ExpError::NoSuchCell(selector.to_string()).into())
}

fn plot(results: Option<&Path>, cell: Option<&str>, trajectory: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    if results.is_none() && trajectory.is_none() {
        return Err(ExpError::InvalidConfig("plot needs --results or --trajectory".into()).into());
    }
    if let Some(path) = results {
        let rows = read_results(path)?;
        for f in emit_figures(&rows, out)? {
            println!("{}", f.display());
        }
        if let Some(sel) = cell {
            let row = select_cell(&rows, sel)?;
            let dir = path.parent().unwrap_or(Path::new("."));
            let traj = cell_dir(dir, &row.cell_key).join("trajectory.csv");
            let title = format!("{} {} information, c0 = {:.4}, seed {}", row.algo, row.information, row.c0, row.seed);
            let file = out.join("strategy.svg");
            emit_strategy_plot(&traj, &title, &file)?;
            println!("{}", file.display());
        }
    } else if cell.is_some() {
        return Err(ExpError::InvalidConfig("--cell needs --results".into()).into());
    }
    if let Some(traj) = trajectory {
        let file = out.join("strategy.svg");
        emit_strategy_plot(traj, &traj.display().to_string(), &file)?;
        println!("{}", file.display());
    }
    Ok(())
}

/// One line: `error: <code>: <message>`.
fn report(err: &anyhow::Error) -> ExitCode {
    let (code, invocation) = match err.downcast_ref::<ExpError>() {
        Some(e) => (e.code(), e.is_invocation_error()),
        None => match err.downcast_ref::<oligopoly::Error>() {
            Some(e) => (e.code(), matches!(e, oligopoly::Error::InvalidConfig(_))),
            None => ("internal", false),
        },
    };
    let message = format!("{err:#}").split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error: {code}: {message}");
    ExitCode::from(if invocation { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, profile, seed, out } => simulate(config, profile.as_deref(), *seed, out.as_deref()),
        Command::SolveAnalytic { config, out } => solve_analytic(config, out.as_deref()),
        Command::Train { config, algo, seed, out } => train(config, *algo, *seed, out),
        Command::Verify { profile, config, k, workers, out } => {
            verify(profile, config.as_deref(), *k, *workers, out.as_deref())
        }
        Command::Sweep { config, thin, workers, out } => match sweep(config.as_deref(), *thin, *workers, out) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Plot { results, cell, trajectory, out } => {
            plot(results.as_deref(), cell.as_deref(), trajectory.as_deref(), out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
