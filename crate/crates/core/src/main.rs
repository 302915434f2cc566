use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmem_core::harness::{self, Checkpoint, RunConfig};
use gmem_core::{GmemError, MemoryMode, Result};

#[derive(Parser)]
#[command(name = "gmem", about = "Gated latent memory bank on a frozen toy transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default config with a comment per key.
    Defaults,
    /// Generate the configured synthetic dataset.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the memory modules; writes metrics.csv and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// on | off | overwrite-baseline
        #[arg(long, default_value = "on")]
        memory: String,
        #[arg(long, default_value = "test")]
        split: String,
        /// Write the CSV report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on the smallest config.
    Gradcheck {
        /// Perturb one analytic gradient before comparing.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Train one model per slot count and report accuracy.
    AblateSlots {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        slots: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Defaults => print!("{}", RunConfig::defaults_text()),
        Command::Generate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let data = harness::generate(&cfg, &out)?;
            eprintln!("wrote {} examples to {}", data.examples.len(), out.display());
        }
        Command::Train {
            config,
            data,
            out,
            resume,
        } => {
            let cfg = RunConfig::load(&config)?;
            let data = harness::read_dataset(&data)?;
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            let done = harness::train(&cfg, &data, &out, resume.as_deref())?;
            eprintln!("trained to step {}; checkpoint {}", done.final_step, done.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            data,
            memory,
            split,
            out,
        } => {
            let mode: MemoryMode = memory.parse()?;
            let ck = Checkpoint::load(&checkpoint)?;
            let (_, model) = harness::model_from_checkpoint(&ck)?;
            let data = harness::read_dataset(&data)?;
            let report = harness::evaluate(&model, &data, &split, mode)?;
            write_or_print(out.as_deref(), &report.to_csv())?;
            eprintln!("{}", report.summary());
        }
        Command::Gradcheck { corrupt_gradient } => {
            let rows = harness::gradcheck(&harness::gradcheck_config(), corrupt_gradient)?;
            println!("tensor,max_error,status");
            for r in &rows {
                println!("{},{:.3e},{}", r.name, r.max_error, if r.passed { "ok" } else { "FAIL" });
            }
            if rows.iter().any(|r| !r.passed) {
                return Ok(1);
            }
        }
        Command::AblateSlots {
            config,
            data,
            slots,
            seeds,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let data = harness::read_dataset(&data)?;
            let rows = harness::ablate_slots(&cfg, &data, &slots, &seeds)?;
            write_or_print(out.as_deref(), &harness::ablation_csv(&rows))?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &GmemError) -> u8 {
    e.exit_code() as u8
}
