use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hybridnet::environment::AgentId;
use hybridnet::harness::{
    run_episode_with_agents, run_monte_carlo, write_episode, write_episode_csv, write_summary,
    write_summary_csv, Algorithm, ExperimentConfig,
};
use hybridnet::Error;

#[derive(Parser, Debug)]
#[command(name = "hybridnet", version, about = "Multi-agent RF/VLC power allocation simulator")]
struct Cli {
    /// Flat key = value configuration file; unset keys use the defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,

    /// Episode seed (`run`) or master seed (`montecarlo`)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of Monte Carlo experiments
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Output CSV path; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Fixed per-user target rates in Mbps, e.g. `20,12`
    #[arg(long, global = true, value_delimiter = ',')]
    targets: Option<Vec<f64>>,

    /// Hold shadowing and fading at their means
    #[arg(long, global = true)]
    frozen_channel: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single episode and emit its per-iteration CSV
    Run {
        /// Write each agent's Q-table or network weights into this directory
        #[arg(long)]
        dump_agents: Option<PathBuf>,
    },
    /// Run a batch of episodes and emit the per-run summary CSV
    Montecarlo,
    /// Print the resolved configuration
    DumpConfig,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(a) = cli.algorithm {
        cfg.algorithm = a;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.runs {
        cfg.monte_carlo_runs = r;
    }
    if let Some(t) = &cli.targets {
        cfg = cfg.with_preset_targets(t);
    }
    if cli.frozen_channel {
        cfg.frozen_channel = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::DumpConfig => {
            print!("{}", cfg.to_toml());
        }
        Command::Run { dump_agents } => {
            let run = run_episode_with_agents(&cfg, cfg.seed)?;
            let record = &run.record;
            match &cli.out {
                Some(path) => write_episode_csv(record, path)?,
                None => write_episode(record, std::io::stdout().lock()).map_err(|source| Error::Csv {
                    path: "<stdout>".into(),
                    source,
                })?,
            }
            if let Some(dir) = dump_agents {
                std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                    path: dir.clone(),
                    source,
                })?;
                let kind = match cfg.algorithm {
                    Algorithm::Ql => "qtable",
                    Algorithm::Dqn => "weights",
                };
                for (id, agent) in &run.agents {
                    let name = match id {
                        AgentId::Vlc(l) => format!("{kind}_vlc{l}.csv"),
                        AgentId::Rf => format!("{kind}_rf.csv"),
                    };
                    agent.dump(&dir.join(name))?;
                }
            }
            let mut err = std::io::stderr().lock();
            let _ = match record.convergence_iteration {
                Some(c) => writeln!(
                    err,
                    "{} seed {}: converged at iteration {c} ({} iterations, {:.2?})",
                    cfg.algorithm,
                    cfg.seed,
                    record.iterations(),
                    record.wall_time
                ),
                None => writeln!(
                    err,
                    "{} seed {}: no convergence within {} iterations ({:.2?})",
                    cfg.algorithm,
                    cfg.seed,
                    record.iterations(),
                    record.wall_time
                ),
            };
        }
        Command::Montecarlo => {
            let summary = run_monte_carlo(&cfg, cfg.monte_carlo_runs)?;
            match &cli.out {
                Some(path) => write_summary_csv(&summary, path)?,
                None => write_summary(&summary, std::io::stdout().lock()).map_err(|source| Error::Csv {
                    path: "<stdout>".into(),
                    source,
                })?,
            }
            let median = summary
                .median
                .map_or_else(|| "n/a".to_string(), |m| format!("{m}"));
            let gap = summary
                .mean_steady_state_gap
                .map_or_else(|| "n/a".to_string(), |g| format!("{g:.3} Mbps"));
            let _ = writeln!(
                std::io::stderr().lock(),
                "{}: {} runs, convergence rate {:.1}%, median convergence iteration {median}, mean steady-state gap {gap}",
                cfg.algorithm,
                summary.runs.len(),
                100.0 * summary.convergence_rate
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // `hybridnet run | head` closing the pipe early is not a failure
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(e: &Error) -> bool {
    let io = match e {
        Error::Io { source, .. } => Some(source),
        Error::Csv { source, .. } => match source.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        },
        _ => None,
    };
    io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}
