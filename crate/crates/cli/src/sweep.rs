//! The `sweep` command: independent runs over a (hidden layers, hidden
//! units) grid, executed in parallel.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::args::{RunArgs, SweepArgs};
use crate::error::{CliError, CliResult};
use crate::run::{execute, resolve, ConfigRecord};

/// Spacing between the model seeds of consecutive cells. Cell 0 uses the
/// base seed, so a one-cell sweep reproduces a plain run.
pub const CELL_SEED_STRIDE: u64 = 1_000_003;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub hamming_loss: Option<f64>,
    /// Set when the cell failed; the sweep carries on.
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestCell {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub config: ConfigRecord,
    pub two_phase: bool,
    pub cells: Vec<CellResult>,
    pub best: Option<BestCell>,
}

fn cell_args(base: &RunArgs, layers: usize, hidden: usize, index: usize) -> RunArgs {
    let mut a = base.clone();
    a.layers = layers;
    a.hidden_units = hidden;
    a.seed = base.seed.wrapping_add(CELL_SEED_STRIDE.wrapping_mul(index as u64));
    a.data_seed = Some(base.data_seed.unwrap_or(base.seed));
    a.out = None;
    a.window_csv = None;
    a.trace_csv = None;
    a.checkpoint_out = None;
    a.resume = None;
    a
}

fn run_cells(base: &RunArgs, cells: &[(usize, usize, usize)]) -> Vec<CellResult> {
    cells
        .par_iter()
        .map(|&(layers, hidden, index)| {
            let args = cell_args(base, layers, hidden, index);
            let start = Instant::now();
            let outcome = execute(&args);
            let wall_time_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok(s) => CellResult {
                    hidden_layers: layers,
                    hidden_units: hidden,
                    seed: args.seed,
                    accuracy: Some(s.metrics.accuracy),
                    macro_f1: Some(s.metrics.macro_f1),
                    hamming_loss: Some(s.metrics.hamming_loss),
                    error: None,
                    wall_time_s,
                },
                Err(e) => CellResult {
                    hidden_layers: layers,
                    hidden_units: hidden,
                    seed: args.seed,
                    accuracy: None,
                    macro_f1: None,
                    hamming_loss: None,
                    error: Some(e.to_string()),
                    wall_time_s,
                },
            }
        })
        .collect()
}

/// Highest accuracy; ties go to the smaller (layers, units).
fn best(cells: &[CellResult]) -> Option<BestCell> {
    let mut best: Option<BestCell> = None;
    for c in cells {
        if let Some(acc) = c.accuracy {
            if best.as_ref().is_none_or(|b| acc > b.accuracy) {
                best = Some(BestCell {
                    hidden_layers: c.hidden_layers,
                    hidden_units: c.hidden_units,
                    accuracy: acc,
                });
            }
        }
    }
    best
}

pub fn sweep(args: &SweepArgs) -> CliResult<SweepSummary> {
    if args.grid_layers.is_empty() || args.grid_hidden.is_empty() {
        return Err(CliError::Usage("the sweep grid is empty".into()));
    }
    if args.two_phase && args.phase2_hidden.is_empty() {
        return Err(CliError::Usage("--phase2-hidden is empty".into()));
    }
    let config = resolve(&args.run)?.record;

    let mut planned: Vec<(usize, usize, usize)> = Vec::new();
    let mut seen = BTreeSet::new();
    let first_hidden: Vec<usize> = if args.two_phase {
        vec![args.grid_hidden[0]]
    } else {
        args.grid_hidden.clone()
    };
    for &l in &args.grid_layers {
        for &h in &first_hidden {
            if seen.insert((l, h)) {
                planned.push((l, h, planned.len()));
            }
        }
    }
    let mut cells = run_cells(&args.run, &planned);

    if args.two_phase {
        let mut phase2 = Vec::new();
        if let Some(b) = best(&sortable(&cells)) {
            for &h in &args.phase2_hidden {
                if seen.insert((b.hidden_layers, h)) {
                    phase2.push((b.hidden_layers, h, planned.len() + phase2.len()));
                }
            }
        }
        cells.extend(run_cells(&args.run, &phase2));
    }

    let cells = sortable(&cells);
    let best = best(&cells);
    Ok(SweepSummary {
        config,
        two_phase: args.two_phase,
        cells,
        best,
    })
}

fn sortable(cells: &[CellResult]) -> Vec<CellResult> {
    let mut c = cells.to_vec();
    c.sort_by_key(|c| (c.hidden_layers, c.hidden_units));
    c
}

pub fn grid_csv(summary: &SweepSummary) -> String {
    let mut out = String::from("hidden_layers,hidden_units,accuracy,macro_f1,hamming_loss,wall_time_s,status\n");
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &summary.cells {
        let status = match &c.error {
            None => "ok".to_string(),
            Some(e) => format!("\"error: {}\"", e.replace('"', "'")),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3},{}",
            c.hidden_layers,
            c.hidden_units,
            num(c.accuracy),
            num(c.macro_f1),
            num(c.hamming_loss),
            c.wall_time_s,
            status
        );
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let summary = sweep(args)?;
    let csv = grid_csv(&summary);
    match &args.run.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| CliError::io(p, e))?,
        None => print!("{csv}"),
    }
    match &args.summary_out {
        Some(p) => {
            let json = serde_json::to_string_pretty(&summary)? + "\n";
            std::fs::write(p, json).map_err(|e| CliError::io(p, e))?;
        }
        None => {
            if let Some(b) = &summary.best {
                eprintln!(
                    "best cell: {} hidden layers x {} units, accuracy {:.4}",
                    b.hidden_layers, b.hidden_units, b.accuracy
                );
            }
        }
    }
    Ok(())
}
