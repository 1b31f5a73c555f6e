use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cacheprobe::experiment::{
    load_config, report, run_sweep, run_train, ExperimentConfig, Mode, SweepOptions, SweepSummary,
    PRESET_NAMES,
};
use cacheprobe::oracle::{self, AttackPlan, OracleError};

#[derive(Parser)]
#[command(name = "cacheprobe", version, about = "Explore cache timing attacks with PPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Experiment TOML file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration, no1..no17.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => {
                load_config(path).with_context(|| format!("loading {}", path.display()))
            }
            (None, Some(name)) => from_preset(name),
            (None, None) => bail!("give --config <file> or --preset <name>"),
        }
    }
}

fn from_preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_preset(name).with_context(|| {
        format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", "))
    })
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and write per-epoch metrics, a summary and plans.
    Train {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "proposal")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; defaults to <output_dir>/<config>/<mode>/seed<k>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the epoch limit.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Also write a per-step trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Train every config under both modes over seeds 0..repeats.
    Sweep {
        /// Experiment TOML files.
        #[arg(long = "config")]
        configs: Vec<PathBuf>,
        /// Built-in configurations; `all` selects no1..no17.
        #[arg(long = "preset")]
        presets: Vec<String>,
        /// Seeds per config and mode; defaults to the config's `repeats`.
        #[arg(long)]
        repeats: Option<usize>,
        /// Sweep directory; defaults to <output_dir>/sweep.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the epoch limit.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Concurrent runs; 0 uses every CPU.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Search exhaustively for the shortest fixed attack and replay it.
    Oracle {
        /// Preset name (same as --preset).
        name: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        /// Plan file to write; defaults to <output_dir>/<config>/oracle_plan.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay plan files against a configuration and print the accuracy.
    Replay {
        #[command(flatten)]
        source: Source,
        /// Plan files, read together as branches of one attack.
        #[arg(required = true)]
        plans: Vec<PathBuf>,
    },
    /// Recompute and print the summary of a sweep directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            source,
            mode,
            seed,
            out,
            max_epochs,
            trace,
        } => {
            let mut cfg = source.load()?;
            if let Some(n) = max_epochs {
                cfg.hyper.max_epochs = n;
            }
            let out = out.unwrap_or_else(|| {
                cfg.output_dir
                    .join(&cfg.name)
                    .join(mode.name())
                    .join(format!("seed{seed}"))
            });
            let report = run_train(&cfg, mode, seed, &out, trace)?;
            println!(
                "{} {mode} seed {seed}: converged={} epochs={} total_actions={} useless_ratio_pct={:.2} wall_time_s={:.3}",
                cfg.name,
                report.converged,
                report.epochs_run,
                report.total_actions,
                100.0 * report.useless_ratio,
                report.wall_time
            );
            println!("plan replay accuracy: {}", report.plan_accuracy);
            println!("artifacts: {}", out.display());
        }
        Command::Sweep {
            configs,
            presets,
            repeats,
            out,
            max_epochs,
            jobs,
        } => {
            let mut cfgs = Vec::new();
            for path in &configs {
                cfgs.push(load_config(path).with_context(|| format!("loading {}", path.display()))?);
            }
            for name in &presets {
                if name == "all" {
                    for n in PRESET_NAMES {
                        cfgs.push(from_preset(n)?);
                    }
                } else {
                    cfgs.push(from_preset(name)?);
                }
            }
            if cfgs.is_empty() {
                bail!("give at least one --config or --preset");
            }
            if let Some(n) = max_epochs {
                for cfg in &mut cfgs {
                    cfg.hyper.max_epochs = n;
                }
            }
            let repeats = repeats.unwrap_or(cfgs[0].repeats);
            let out = out.unwrap_or_else(|| cfgs[0].output_dir.join("sweep"));
            let summary = run_sweep(&cfgs, &SweepOptions { repeats, jobs }, &out)?;
            print_summary(&summary);
            println!("artifacts: {}", out.display());
            if summary.runs.iter().any(|r| r.error.is_some()) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Oracle {
            name,
            config,
            preset,
            max_len,
            out,
        } => {
            let source = Source {
                config,
                preset: preset.or(name),
            };
            let cfg = source.load()?;
            return oracle_cmd(&cfg, max_len, out.as_deref());
        }
        Command::Replay { source, plans } => {
            let cfg = source.load()?;
            let mut parsed = Vec::new();
            for path in &plans {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parsed.push(
                    AttackPlan::parse(&text).with_context(|| format!("parsing {}", path.display()))?,
                );
            }
            let accuracy = oracle::replay_branches(&parsed, &cfg.env)?;
            println!("replay accuracy: {accuracy}");
        }
        Command::Report { out } => {
            let summary = report(&out)?;
            print_summary(&summary);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_cmd(cfg: &ExperimentConfig, max_len: usize, out: Option<&Path>) -> Result<ExitCode> {
    let plan = match oracle::search(&cfg.env, max_len) {
        Ok(Some(plan)) => plan,
        Ok(None) => {
            println!("no plan found for {} within {max_len} actions", cfg.name);
            return Ok(ExitCode::from(1));
        }
        Err(e @ OracleError::BudgetExceeded { .. }) => {
            println!("refusing to search {}: {e}", cfg.name);
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(e.into()),
    };
    let accuracy = oracle::replay(&plan, &cfg.env)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join(&cfg.name).join("oracle_plan.txt"));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, plan.to_text())?;
    print!("{plan}");
    println!("plan length: {}", plan.prefix.len());
    println!("replay accuracy: {accuracy}");
    println!("plan file: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(s: &SweepSummary) {
    println!(
        "{:<8} {:<9} {:>9} {:>8} {:>14} {:>8} {:>10}",
        "config", "mode", "converged", "epochs", "total_actions", "useless%", "wall_s"
    );
    for r in &s.rows {
        println!(
            "{:<8} {:<9} {:>9} {:>8.1} {:>14.1} {:>8.2} {:>10.3}",
            r.config,
            r.mode.name(),
            r.converged,
            r.mean_epochs,
            r.mean_total_actions,
            r.useless_ratio_pct,
            r.mean_wall_time_s
        );
    }
    for d in &s.derived {
        match (d.delta_pts, d.time_ratio) {
            (Some(delta), Some(ratio)) => {
                println!("{}: delta {delta:+.2} pts, time ratio {ratio:.4}", d.config)
            }
            _ => println!("{}: not convergent in both modes", d.config),
        }
    }
    match s.geomean_time_ratio {
        Some(g) => println!("geometric mean time ratio: {g:.4}"),
        None => println!("geometric mean time ratio: n/a"),
    }
    for r in s.runs.iter().filter(|r| r.error.is_some()) {
        println!(
            "failed: {} {} seed {}: {}",
            r.config,
            r.mode,
            r.seed,
            r.error.as_deref().unwrap_or_default()
        );
    }
}
