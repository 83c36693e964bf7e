use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cfrl::commands;
use cfrl::{HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "cfrl", about = "Counterfactual-augmentation experiment harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AugmentFlag {
    On,
    Off,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed, overriding the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Force augmentation on or off, overriding the config.
    #[arg(long, value_enum)]
    augment: Option<AugmentFlag>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and freeze the pretrained policy per seed.
    Pretrain(CommonArgs),
    /// Train the counterfactual synthesis policy against a frozen policy.
    TrainCsp(CommonArgs),
    /// Train the configured agent, with or without augmentation.
    Train(CommonArgs),
    /// Greedy-evaluate a trained agent checkpoint.
    Eval(CommonArgs),
    /// Baseline-vs-augmented comparison over all agent kinds.
    Compare(CommonArgs),
    /// Hidden-size sweep of CSP training.
    Sweep(CommonArgs),
}

fn resolve(args: &CommonArgs) -> Result<RunConfig, HarnessError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(flag) = args.augment {
        config.augment.enabled = matches!(flag, AugmentFlag::On);
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Pretrain(args) => {
            for s in commands::cmd_pretrain(&resolve(&args)?)? {
                println!(
                    "pretrain seed={} avg_reward={} ctr={} checkpoint={}",
                    s.seed,
                    s.final_avg_reward,
                    s.final_ctr,
                    s.checkpoint.display()
                );
            }
        }
        Command::TrainCsp(args) => {
            for s in commands::cmd_train_csp(&resolve(&args)?)? {
                println!(
                    "train-csp seed={} episodes={} first_decile_abs_dr={} last_decile_abs_dr={} checkpoint={}",
                    s.seed,
                    s.episodes,
                    s.first_decile_abs_dr,
                    s.last_decile_abs_dr,
                    s.checkpoint.display()
                );
            }
        }
        Command::Train(args) => {
            for s in commands::cmd_train(&resolve(&args)?)? {
                println!(
                    "train seed={} kind={} augmented={} env_steps={} cf_pushes={} avg_reward={} ctr={}",
                    s.seed,
                    s.kind,
                    s.augmented,
                    s.env_steps,
                    s.counterfactual_pushes,
                    s.final_avg_reward,
                    s.final_ctr
                );
            }
        }
        Command::Eval(args) => {
            for s in commands::cmd_eval(&resolve(&args)?)? {
                println!(
                    "eval seed={} kind={} augmented={} avg_reward={} ctr={}",
                    s.seed, s.kind, s.augmented, s.avg_reward, s.avg_ctr
                );
            }
        }
        Command::Compare(args) => {
            let report = commands::cmd_compare(&resolve(&args)?)?;
            print!("{}", report.table());
        }
        Command::Sweep(args) => {
            let report = commands::cmd_sweep(&resolve(&args)?)?;
            for row in &report.rows {
                println!(
                    "sweep hidden={} seed={} last_decile_abs_dr={}",
                    row.hidden, row.seed, row.last_decile_abs_dr
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
