use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use mvsk_core::harness::{self, ExperimentConfig, OutputFormat, Report, TableRow};
use mvsk_core::Error;

#[derive(Parser)]
#[command(name = "mvsk", version, about = "Small-mass limit experiments for kinetic McKean-Vlasov systems with common noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config (nested or dotted keys). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "MVSK_THREADS")]
    threads: Option<usize>,

    /// Output directory, overriding the config (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the model assumptions by sampling.
    Validate,
    /// Run one kinetic system and write binned local mass and momentum.
    Simulate,
    /// Small-mass convergence study against the three limit variants.
    Converge,
    /// Paired comparison with the noise-induced drift removed.
    Ablate,
    /// Moment bound, Hölder and frozen-velocity checks.
    Lemmas,
    /// Window-averaged momentum pairing diagnostic.
    Momentum,
}

fn load_config(cli: &Cli) -> mvsk_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(f) = cli.format {
        cfg.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write<R: TableRow, S: serde::Serialize>(report: &Report<R, S>, cfg: &ExperimentConfig) -> mvsk_core::Result<()> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    for path in report.write(&dir, cfg.format)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> mvsk_core::Result<()> {
    let cfg = load_config(cli)?;
    let started = Instant::now();
    match cli.command {
        Command::Validate => {
            let out = harness::run_validation(&cfg)?;
            write(&out, &cfg)?;
            if !out.summary.report.all_passed {
                let failed: Vec<&str> = out
                    .summary
                    .report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.assumption.as_str())
                    .collect();
                return Err(Error::Config(format!(
                    "model '{}' fails assumption(s) {}",
                    out.summary.report.model,
                    failed.join(", ")
                )));
            }
        }
        Command::Simulate => write(&harness::run_simulation(&cfg)?, &cfg)?,
        Command::Converge => {
            let rep = harness::run_convergence(&cfg)?;
            let v = &rep.summary.verdict;
            eprintln!(
                "closest limit at smallest eps: {} (W2 {:.4} vs {:.4})",
                v.winner.label(),
                v.winner_final_w2,
                v.runner_up_final_w2
            );
            write(&rep, &cfg)?;
        }
        Command::Ablate => write(&harness::run_ablation(&cfg)?, &cfg)?,
        Command::Lemmas => write(&harness::run_lemma_checks(&cfg)?, &cfg)?,
        Command::Momentum => write(&harness::run_momentum_diagnostic(&cfg)?, &cfg)?,
    }
    eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("mvsk: {err}");
            ExitCode::from(match err {
                Error::Numerical(_) => 2,
                _ => 1,
            })
        }
    }
}
