//! The `odlae` command-line runner.
//!
//! * `odlae run` streams one dataset through one model and writes a JSON
//!   summary, optional CSV traces and an optional checkpoint.
//! * `odlae sweep` repeats `run` over a grid of depths and widths.
//! * `odlae checkpoint info` prints what a checkpoint contains.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for data
//! errors, 1 for anything else.

pub mod args;
pub mod config_file;
pub mod error;
pub mod run;
pub mod sweep;

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;
use serde::Serialize;

use odlae_core::checkpoint;

use crate::args::{CheckpointCommand, Cli, Command};
use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct CheckpointInfo {
    version: u16,
    variant: String,
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    hidden_layers: usize,
    attention_dim: usize,
    model_steps: u64,
    examples_seen: Option<u64>,
    parameters: usize,
    config: Option<serde_json::Value>,
}

fn checkpoint_info(path: &Path) -> CliResult<String> {
    let ck = checkpoint::load(path)?;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let h = checkpoint::decode_header(&bytes)?;
    use odlae_core::ParamSet;
    let info = CheckpointInfo {
        version: h.version,
        variant: h.variant.to_string(),
        input_dim: h.input_dim,
        hidden_dim: h.hidden_dim,
        output_dim: h.output_dim,
        hidden_layers: if h.hidden_dim == 0 { 0 } else { h.last_hidden_index + 1 },
        attention_dim: h.attention_dim,
        model_steps: ck.model.steps(),
        examples_seen: ck.evaluator.as_ref().map(|e| e.seen),
        parameters: ck.model.parameter_count(),
        config: serde_json::from_str(&ck.metadata).ok(),
    };
    Ok(serde_json::to_string_pretty(&info)? + "\n")
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Sweep(a) => sweep::cmd_sweep(a),
        Command::Checkpoint(CheckpointCommand::Info { path }) => {
            print!("{}", checkpoint_info(path)?);
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with(args: Vec<OsString>) -> i32 {
    let args = match config_file::expand(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
