use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gancd_cli::{cmd_dis_study, cmd_divlab, cmd_eval, cmd_expand, cmd_infer, cmd_synth, cmd_train, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gancd", version, about = "GAN-based unsupervised change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Apply the reduced desk-scale profile.
    #[arg(long, global = true)]
    smoke: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image pair with its truth map.
    Synth,
    /// Write a grid of expanded training images.
    Expand {
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        pair: Option<Vec<PathBuf>>,
    },
    /// Train the generator and discriminator.
    Train {
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        pair: Option<Vec<PathBuf>>,
        /// Continue from the run directory's checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Produce change maps from a checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score an intensity map against a truth map.
    Eval {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Check divergence properties on random discrete instances.
    Divlab {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Compare discriminator clip sizes.
    DisStudy {
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        pair: Option<Vec<PathBuf>>,
    },
}

#[derive(Serialize)]
struct Failure<'a> {
    error: &'a str,
    message: String,
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let body = serde_json::to_string(&Failure { error: kind, message }).expect("serializable");
    eprintln!("{body}");
    ExitCode::from(code)
}

fn emit<S: Serialize>(r: gancd::Result<S>) -> gancd::Result<()> {
    let text = serde_json::to_string_pretty(&r?)?;
    // A closed stdout is not an error for the run itself.
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn run(cli: Cli) -> gancd::Result<()> {
    let path = cli.config.ok_or_else(|| gancd::Error::InvalidArgument("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if cli.smoke {
        cfg.apply_smoke();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = cli.out {
        cfg.io.run_dir = o;
    }
    cfg.resolve_seeds();
    cfg.validate()?;
    let pair_of = |p: &Option<Vec<PathBuf>>| p.as_ref().map(|v| (v[0].clone(), v[1].clone()));
    match &cli.command {
        Command::Synth => emit(cmd_synth(&cfg)),
        Command::Expand { pair } => {
            let p = pair_of(pair);
            emit(cmd_expand(&cfg, p.as_ref().map(|(a, b)| (a.as_path(), b.as_path()))))
        }
        Command::Train { pair, resume } => {
            let p = pair_of(pair);
            emit(cmd_train(&cfg, p.as_ref().map(|(a, b)| (a.as_path(), b.as_path())), *resume))
        }
        Command::Infer { checkpoint } => emit(cmd_infer(&cfg, checkpoint.as_deref())),
        Command::Eval { map, truth } => emit(cmd_eval(&cfg, map, truth)),
        Command::Divlab { count } => emit(cmd_divlab(&cfg, *count)),
        Command::DisStudy { pair } => {
            let p = pair_of(pair);
            emit(cmd_dis_study(&cfg, p.as_ref().map(|(a, b)| (a.as_path(), b.as_path()))))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
