//! `foa-enhance` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod scenes;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{dump_mask, enhance, eval, simulate, train};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "foa-enhance", version, about = "Mask-based FOA speech enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene (or a seeded scene set) to WAV stems, oracle mask and
    /// manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enhance a 4-channel FOA mixture.
    Enhance(enhance::EnhanceArgs),
    /// Train the mask network on simulated scenes.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from `last.ckpt` in the output directory.
        #[arg(long)]
        resume: bool,
        /// Overrides `train.max_epochs`.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Overrides `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every system on a set of scenes.
    Eval(eval::EvalArgs),
    /// Render a mask as an image and a matrix file.
    DumpMask(dump_mask::DumpMaskArgs),
}

/// Runs one command and returns the text to print.
pub fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::Simulate { config, seed, out } => {
            let mut cfg: config::SimulateConfig = config::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let dirs = simulate::run(&cfg)?;
            Ok(format!("wrote {} scene(s) to {}", dirs.len(), cfg.out_dir.display()))
        }
        Command::Enhance(a) => {
            let r = enhance::run(&a)?;
            let mut s = format!("wrote {} ({} samples)", a.out.display(), r.samples);
            if let Some((before, after)) = r.si_sdr_db {
                s.push_str(&format!(
                    "\nSI-SDR mixture {before:.2} dB, enhanced {after:.2} dB, improvement {:.2} dB",
                    after - before
                ));
            }
            Ok(s)
        }
        Command::Train {
            config,
            resume,
            max_epochs,
            out,
        } => {
            let mut cfg: config::TrainConfig = config::load(&config)?;
            if let Some(n) = max_epochs {
                if n == 0 {
                    return Err(CliError::Config("--max-epochs must be positive".into()));
                }
                cfg.train.max_epochs = Some(n);
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let r = train::run(&cfg, resume)?;
            Ok(format!(
                "{} epoch(s); best validation loss {:.6} at epoch {}; checkpoints in {}",
                r.log.len(),
                r.best_val,
                r.best_epoch,
                r.out_dir.display()
            ))
        }
        Command::Eval(a) => Ok(eval::run(&a)?.to_string()),
        Command::DumpMask(a) => {
            let m = dump_mask::run(&a)?;
            Ok(format!("{}x{} mask written to {}.{{pgm,mask}}", m.frames(), m.bins(), a.out.display()))
        }
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            println!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
