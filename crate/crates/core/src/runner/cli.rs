//! Argument parsing and dispatch for the `myoexo` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::commands::{cmd_distill, cmd_eval, cmd_replay, cmd_synergy, cmd_train, Condition, ReplaySource};
use super::config::{Overrides, Profile, RunConfig};
use super::verify::{verify_run, GradientHooks};
use super::RunError;

#[derive(Debug, Parser)]
#[command(name = "myoexo", version, about = "Hip-exoskeleton assistance learning workflow")]
pub struct Cli {
    /// Run configuration (TOML); omitted keys take profile defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "MYOEXO_SEED")]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, env = "MYOEXO_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Continue an interrupted training run from its latest checkpoint.
    #[arg(long, global = true)]
    pub resume: bool,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the synergy basis to stage-0 activations.
    Synergy,
    /// Train stage 1, then stage 2 under one condition.
    Train {
        #[arg(long, value_enum, default_value = "exo")]
        condition: Condition,
    },
    /// Distil the gyroscope-only student from the teacher.
    Distill {
        /// Teacher checkpoint or stage directory.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Evaluate assisted and baseline policies over the condition grid.
    Eval {
        /// Assisted run (checkpoint or stage directory).
        assisted: Option<PathBuf>,
        /// Baseline run (checkpoint or stage directory).
        baseline: Option<PathBuf>,
    },
    /// Re-hash run artifacts and run the invariant suite.
    Verify {
        /// Run directory; defaults to the configured output.
        dir: Option<PathBuf>,
    },
    /// Re-run one rollout and write its log.
    Replay {
        #[arg(long, value_enum, default_value = "assisted")]
        source: ReplaySource,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        slope: i32,
        #[arg(long, default_value_t = 1.2)]
        speed: f64,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
    },
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides { profile: self.profile, seed: self.seed, out: self.out.clone(), workers: self.workers }
    }
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli, hooks: &GradientHooks) -> Result<(), RunError> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    match &cli.command {
        Command::Synergy => {
            let r = cmd_synergy(&cfg)?;
            println!("basis rank {} VAF {:.4} from {} strides", r.rank, r.vaf, r.strides);
        }
        Command::Train { condition } => {
            let r = cmd_train(&cfg, *condition, cli.resume)?;
            println!("final checkpoint {}", r.final_checkpoint.display());
        }
        Command::Distill { teacher } => {
            let (r, losses) = cmd_distill(&cfg, teacher.as_deref())?;
            for l in &losses {
                println!("epoch {}: train {:.5} val {:.5}", l.epoch, l.train, l.val);
            }
            println!("held-out R2 {:.4} over {} samples", r.val_r2, r.val_samples);
        }
        Command::Eval { assisted, baseline } => {
            let r = cmd_eval(&cfg, assisted.as_deref(), baseline.as_deref())?;
            if let Some(e) = &r.effect {
                println!(
                    "{} conditions: activation reduction {:.2}%, power reduction {:.2}%",
                    e.rows.len(),
                    e.mean_activation_reduction,
                    e.mean_power_reduction
                );
            }
            if let Some(r) = r.mean_r {
                println!("teacher vs student torque r {r:.3}");
            }
        }
        Command::Verify { dir } => {
            let dir = dir.clone().unwrap_or_else(|| cfg.out.clone());
            for c in verify_run(&dir, hooks)? {
                println!("{}: ok ({})", c.name, c.detail);
            }
        }
        Command::Replay { source, slope, speed, duration } => {
            let (path, log) = cmd_replay(&cfg, *source, *slope, *speed, *duration)?;
            println!("{} samples written to {}{}", log.len(), path.display(), if log.fell { " (fell)" } else { "" });
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_cli_with(args, &GradientHooks::default())
}

pub fn run_cli_with<I, T>(args: I, hooks: &GradientHooks) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, hooks) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
