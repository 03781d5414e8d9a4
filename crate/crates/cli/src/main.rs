use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridrl_core::environment::{load_snapshot_dir, EnvConfig};
use gridrl_core::grid_model::read_case;
use gridrl_core::harness::{
    evaluate, execute_run, generate_snapshots, load_config, periodic_retrain, run_campaign, CampaignConfig,
    EvaluationReport, RetrainOptions, RunConfig, SnapshotGenSpec,
};
use gridrl_core::{audit_violations, solve_newton_raphson, Checkpoint, Error, SolverOptions};

#[derive(Parser)]
#[command(name = "gridrl", version, about = "Loss-minimising voltage control with soft actor-critic")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the power flow of a case file and audit its limits.
    Solve {
        case: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 20)]
        max_iterations: usize,
    },
    /// Write perturbed, solvable snapshots of a base case.
    GenerateSnapshots { spec: PathBuf },
    /// Train and evaluate a single run.
    Train { config: PathBuf },
    /// Train several runs and register the best.
    Campaign { config: PathBuf },
    /// Evaluate a checkpoint on every snapshot in a directory.
    Evaluate {
        checkpoint: PathBuf,
        snapshot_dir: PathBuf,
        /// Write the full report as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Warm-start the registered best model on new snapshots.
    Retrain {
        registry: PathBuf,
        snapshot_dir: PathBuf,
        /// TOML file with retraining options.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        max_episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn print_report(report: &EvaluationReport) {
    println!("snapshots evaluated   {}/{}", report.n_evaluated, report.n_snapshots);
    println!("solved fraction       {:.4}", report.solved_fraction);
    println!("non-degrading         {:.4}", report.non_degrading_fraction);
    println!("mean loss reduction   {:.4} %", report.mean_loss_reduction_pct);
    println!("mean episode reward   {:.4}", report.mean_episode_reward);
    println!("mean steps            {:.3}", report.mean_steps);
    println!(
        "violations            {} resolved, {} mitigated of {}",
        report.violations_resolved, report.violations_mitigated, report.violation_snapshots
    );
    println!("diverged episodes     {}", report.diverged_episodes);
    println!(
        "latency ms            mean {:.4}, p95 {:.4}, max {:.4}",
        report.latency_mean_ms, report.latency_p95_ms, report.latency_max_ms
    );
}

fn solve(case: &Path, tolerance: f64, max_iterations: usize) -> Result<(), Error> {
    let case = read_case(case)?;
    let options = SolverOptions {
        tolerance,
        max_iterations,
        ..SolverOptions::default()
    };
    let sol = solve_newton_raphson(&case, None, &options)?;
    if !sol.converged {
        return Err(Error::Numerical(format!(
            "no convergence after {} iterations (mismatch {:.3e})",
            sol.iterations, sol.mismatch_inf_norm
        )));
    }
    println!("converged in {} iterations, mismatch {:.3e}", sol.iterations, sol.mismatch_inf_norm);
    println!("total generation {:.6} p.u., losses {:.6} p.u.", sol.total_generation(), sol.p_loss_total);
    if !sol.q_limit_switches.is_empty() {
        println!("generators at reactive limit (bus now PQ): {:?}", sol.q_limit_switches);
    }
    println!("{:>6} {:>10} {:>10}", "bus", "v_mag", "v_ang_deg");
    for (i, bus) in case.buses.iter().enumerate() {
        println!("{:>6} {:>10.6} {:>10.4}", bus.id, sol.v_mag[i], sol.v_ang[i].to_degrees());
    }
    let report = audit_violations(&case, &sol);
    if report.has_violations() {
        for v in &report.voltage_violations {
            println!("voltage violation at bus {}: {:.5} outside [{}, {}]", v.bus, v.v, v.v_min, v.v_max);
        }
        for t in &report.thermal_violations {
            println!("thermal violation on branch {}: {:.5} > {}", t.branch, t.s, t.s_max);
        }
    } else {
        println!("no limit violations");
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Solve {
            case,
            tolerance,
            max_iterations,
        } => solve(&case, tolerance, max_iterations),
        Command::GenerateSnapshots { spec } => {
            let mut s: SnapshotGenSpec = load_config(&spec)?;
            s.resolve_paths(&config_dir(&spec));
            let report = generate_snapshots(&s)?;
            println!(
                "wrote {} snapshots to {} ({} candidates discarded)",
                report.paths.len(),
                s.output_dir.display(),
                report.discarded
            );
            Ok(())
        }
        Command::Train { config } => {
            let mut c: RunConfig = load_config(&config)?;
            c.resolve_paths(&config_dir(&config));
            let outcome = execute_run(&c)?;
            println!(
                "run {}: {} episodes, {} updates",
                outcome.run_id,
                outcome.summary.metrics.len(),
                outcome.summary.updates
            );
            println!("checkpoint {}", outcome.checkpoint.display());
            print_report(&outcome.test_report);
            Ok(())
        }
        Command::Campaign { config } => {
            let mut c: CampaignConfig = load_config(&config)?;
            c.resolve_paths(&config_dir(&config));
            let outcome = run_campaign(&c)?;
            for r in &outcome.runs {
                println!(
                    "run {:<16} solved {:.4}  reduction {:.4} %  reward {:.3}",
                    r.run_id,
                    r.test_report.solved_fraction,
                    r.test_report.mean_loss_reduction_pct,
                    r.test_report.mean_episode_reward
                );
            }
            for (id, err) in &outcome.failures {
                println!("run {id:<16} failed: {err}");
            }
            println!("best {}", outcome.best.run_id);
            println!("registry {}", outcome.registry_path.display());
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            snapshot_dir,
            output,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cases: Vec<_> = load_snapshot_dir(&snapshot_dir)?.into_iter().map(|(_, c)| c).collect();
            let env = EnvConfig {
                max_steps: ck.config.max_episode_steps,
                ..EnvConfig::default()
            };
            let report = evaluate(&ck, &cases, &env)?;
            print_report(&report);
            if let Some(path) = output {
                std::fs::write(&path, report.to_json()).map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(())
        }
        Command::Retrain {
            registry,
            snapshot_dir,
            config,
            run_id,
            max_episodes,
            seed,
        } => {
            let mut opts: RetrainOptions = match &config {
                Some(p) => load_config(p)?,
                None => RetrainOptions::default(),
            };
            opts.run_id = run_id.or(opts.run_id);
            opts.max_episodes = max_episodes.or(opts.max_episodes);
            if let Some(s) = seed {
                opts.seed = s;
            }
            let outcome = periodic_retrain(&registry, &snapshot_dir, &opts)?;
            match (&outcome.candidate, &outcome.incumbent_report) {
                (Some(c), Some(inc)) => {
                    println!(
                        "candidate {}: solved {:.4} vs incumbent {:.4}",
                        c.run_id, c.report.solved_fraction, inc.solved_fraction
                    );
                    println!("{}", if outcome.promoted { "promoted" } else { "kept incumbent" });
                }
                _ => println!("nothing to train; registry unchanged"),
            }
            println!("best {}", outcome.registry.best.as_deref().unwrap_or("-"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
            ExitCode::from(code)
        }
    }
}
