//! The `run` command: resolve flags, stream the data through a model, write
//! the summary and optional traces or checkpoint.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use odlae_core::checkpoint;
use odlae_core::evaluate::{MetricsReport, PrequentialEvaluator};
use odlae_core::model::{build_model, Model, StepRecord, Variant};
use odlae_core::stream::{
    CsvSource, Drift, DriftTransform, LabelColumn, Scaling, Source, StreamInfo, StreamSpec,
    SyntheticSpec,
};
use odlae_core::{
    Activation, CorruptionPolicy, ModelDims, ModelSettings, OptimizerKind, TradeoffState,
};

use crate::args::{DriftArg, OptimizerArg, RunArgs};
use crate::error::{CliError, CliResult};

/// Every setting that influences results, with defaults filled in. Output
/// paths and run-control flags are left out so that a resumed run and an
/// unbroken one produce the same summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigRecord {
    pub variant: Variant,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub attention_dim: usize,
    pub output_activation: Activation,
    pub optimizer: &'static str,
    pub lr: f64,
    pub theta0: f64,
    pub beta_floor: f64,
    pub beta_re: f64,
    pub beta_pre: f64,
    pub a_re: f64,
    pub a_pre: f64,
    pub adaptive_tradeoff: bool,
    /// Training corruption; `none` for the non-denoising variants.
    pub noise: String,
    pub data: DataRecord,
    pub drift: Option<DriftRecord>,
    pub eval_noise: String,
    pub seed: u64,
    pub data_seed: u64,
    pub window: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataRecord {
    Csv {
        path: String,
        label_col: String,
        has_header: bool,
        delimiter: String,
        scaling: String,
        limit: Option<usize>,
    },
    Synthetic {
        classes: usize,
        features: usize,
        sigma: f64,
        length: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftRecord {
    pub kind: &'static str,
    pub at_step: usize,
    pub permutation: Option<Vec<usize>>,
}

/// Flags validated and turned into library types.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub variant: Variant,
    pub dims: ModelDims,
    pub settings: ModelSettings,
    pub stream: StreamSpec,
    pub info: StreamInfo,
    pub seed: u64,
    pub window: u64,
    pub record: ConfigRecord,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_perm(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad permutation entry `{t}`")))
        })
        .collect()
}

pub fn resolve(a: &RunArgs) -> CliResult<Resolved> {
    let variant: Variant = a.variant.parse()?;
    let output_activation: Activation = a.output_activation.parse()?;
    let noise: CorruptionPolicy = a.noise.parse()?;
    let eval_noise: CorruptionPolicy = a.eval_noise.parse()?;
    let optimizer = match a.optimizer {
        OptimizerArg::Adam => OptimizerKind::adam(a.lr),
        OptimizerArg::Sgd => OptimizerKind::sgd(a.lr),
    };
    let tradeoff = TradeoffState::new(a.a_re, a.beta_re, a.beta_pre, !a.fixed_tradeoff)?;
    let corruption = if variant.is_denoising() {
        noise
    } else {
        CorruptionPolicy::None
    };
    let settings = ModelSettings {
        output_activation,
        optimizer,
        theta0: a.theta0,
        beta_floor: a.beta_floor,
        tradeoff,
        corruption,
    };
    settings.validate()?;
    if a.window == 0 {
        return Err(usage("--window must be at least 1"));
    }
    if a.layers == 0 {
        return Err(usage("--layers must be at least 1"));
    }

    let data_seed = a.data_seed.unwrap_or(a.seed);
    let (source, data) = if a.dataset == "synthetic" {
        let spec = SyntheticSpec::spread(a.classes, a.features, a.sigma, a.length, data_seed);
        spec.validate()?;
        (
            Source::Synthetic(spec),
            DataRecord::Synthetic {
                classes: a.classes,
                features: a.features,
                sigma: a.sigma,
                length: a.length,
            },
        )
    } else {
        let path = PathBuf::from(&a.dataset);
        if !path.is_file() {
            return Err(usage(format!("dataset `{}` does not exist", a.dataset)));
        }
        if !a.delimiter.is_ascii() {
            return Err(usage("--delimiter must be a single ASCII character"));
        }
        let scaling: Scaling = a.scaling.parse()?;
        let label_column: LabelColumn = a.label_col.parse()?;
        let mut src = CsvSource::new(path, label_column);
        src.scaling = scaling;
        src.has_header = a.has_header;
        src.delimiter = a.delimiter as u8;
        src.limit = a.limit;
        (
            Source::Csv(src),
            DataRecord::Csv {
                path: a.dataset.clone(),
                label_col: a.label_col.clone(),
                has_header: a.has_header,
                delimiter: a.delimiter.to_string(),
                scaling: scaling.to_string(),
                limit: a.limit,
            },
        )
    };

    let mut stream = StreamSpec::new(source);
    let info = stream.info()?;
    let drift = match a.drift {
        DriftArg::None => None,
        DriftArg::LabelSwap => {
            let permutation = match &a.drift_perm {
                Some(p) => parse_perm(p)?,
                None => (0..info.classes).rev().collect(),
            };
            Some(DriftTransform::LabelSwap { permutation })
        }
        DriftArg::PermuteFeatures => Some(DriftTransform::PermuteFeatures { seed: data_seed }),
        DriftArg::Rotate => Some(DriftTransform::Rotate { seed: data_seed }),
    };
    let drift_record = drift.as_ref().map(|t| DriftRecord {
        kind: match t {
            DriftTransform::LabelSwap { .. } => "label_swap",
            DriftTransform::PermuteFeatures { .. } => "permute_features",
            DriftTransform::Rotate { .. } => "rotate",
        },
        at_step: a.drift_at,
        permutation: match t {
            DriftTransform::LabelSwap { permutation } => Some(permutation.clone()),
            _ => None,
        },
    });
    stream.drift = drift.map(|transform| Drift {
        transform,
        at_step: a.drift_at,
    });
    stream.eval_noise = eval_noise;
    stream.noise_seed = data_seed;

    let dims = ModelDims::new(
        info.input_dim,
        a.hidden_units,
        info.classes,
        a.layers,
        a.attention_dim,
    )?;

    let record = ConfigRecord {
        variant,
        hidden_layers: a.layers,
        hidden_units: a.hidden_units,
        attention_dim: a.attention_dim,
        output_activation,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => "adam",
            OptimizerArg::Sgd => "sgd",
        },
        lr: a.lr,
        theta0: a.theta0,
        beta_floor: a.beta_floor,
        beta_re: a.beta_re,
        beta_pre: a.beta_pre,
        a_re: tradeoff.a_re,
        a_pre: tradeoff.a_pre,
        adaptive_tradeoff: tradeoff.adaptive,
        noise: corruption.to_string(),
        data,
        drift: drift_record,
        eval_noise: eval_noise.to_string(),
        seed: a.seed,
        data_seed,
        window: a.window,
    };

    Ok(Resolved {
        variant,
        dims,
        settings,
        stream,
        info,
        seed: a.seed,
        window: a.window,
        record,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamRecord {
    pub input_dim: usize,
    pub classes: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinalState {
    pub steps: u64,
    pub a_re: f64,
    pub a_pre: f64,
    /// Hedge weights (hedge variants only).
    pub beta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ConfigRecord,
    pub stream: StreamRecord,
    /// Examples evaluated so far, across resumptions.
    pub examples_seen: u64,
    /// True once the whole stream has been consumed.
    pub complete: bool,
    pub metrics: MetricsReport,
    pub final_state: FinalState,
}

impl Summary {
    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn final_state(model: &Model) -> FinalState {
    match model {
        Model::Hedge(m) => FinalState {
            steps: m.steps,
            a_re: m.tradeoff.a_re,
            a_pre: m.tradeoff.a_pre,
            beta: Some(m.hedge.beta.to_vec()),
        },
        Model::Attention(m) => FinalState {
            steps: m.steps,
            a_re: m.tradeoff.a_re,
            a_pre: m.tradeoff.a_pre,
            beta: None,
        },
        Model::Linear(m) => FinalState {
            steps: m.steps,
            a_re: 0.0,
            a_pre: 1.0,
            beta: None,
        },
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn trace_header(rec: &StepRecord) -> String {
    let mut h = String::from(
        "t,true_class,predicted_class,reconstruction_loss,prediction_loss,total_loss,a_re,a_pre",
    );
    if let Some(b) = &rec.beta {
        for l in 0..b.len() {
            h.push_str(&format!(",beta_{l}"));
        }
    }
    if let Some(a) = &rec.attention {
        for l in 0..a.len() {
            h.push_str(&format!(",attention_{l}"));
        }
    }
    h
}

fn trace_row(rec: &StepRecord) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{}",
        rec.t,
        rec.true_class,
        rec.predicted_class,
        rec.reconstruction_loss,
        rec.prediction_loss,
        rec.total_loss,
        rec.a_re,
        rec.a_pre
    );
    for v in rec.beta.iter().chain(rec.attention.iter()).flatten() {
        row.push_str(&format!(",{v}"));
    }
    row
}

/// Runs the experiment described by `args`, writing the trace, window CSV
/// and checkpoint when requested. The summary is returned, not written.
pub fn execute(args: &RunArgs) -> CliResult<Summary> {
    let r = resolve(args)?;
    let meta = serde_json::to_string(&r.record)?;

    let (mut model, mut eval) = match &args.resume {
        Some(path) => {
            let ck = checkpoint::load(path)?;
            if ck.metadata != meta {
                return Err(usage(format!(
                    "checkpoint {} was written with a different configuration",
                    path.display()
                )));
            }
            let eval = ck.evaluator.ok_or_else(|| {
                usage(format!("checkpoint {} has no evaluation state", path.display()))
            })?;
            (ck.model, eval)
        }
        None => (
            build_model(r.variant, r.dims, &r.settings, r.seed)?,
            PrequentialEvaluator::new(r.info.classes, r.window)?,
        ),
    };

    let mut stream = r.stream.open()?;
    for _ in 0..eval.seen {
        match stream.next() {
            Some(item) => {
                item?;
            }
            None => break,
        }
    }

    let mut trace = match &args.trace_csv {
        Some(p) => Some(create(p)?),
        None => None,
    };
    let mut wrote_header = false;
    eval.run(&mut model, &mut stream, args.max_steps, |rec| {
        if let Some(w) = trace.as_mut() {
            if !wrote_header {
                writeln!(w, "{}", trace_header(rec))?;
                wrote_header = true;
            }
            writeln!(w, "{}", trace_row(rec))?;
        }
        Ok(())
    })?;
    if let (Some(w), Some(p)) = (trace.as_mut(), &args.trace_csv) {
        w.flush().map_err(|e| CliError::io(p, e))?;
    }
    let complete = stream.next().is_none();

    if let Some(path) = &args.checkpoint_out {
        checkpoint::save(path, r.variant, &model, Some(&eval), &meta)?;
    }

    let metrics = eval.report()?;
    if let Some(path) = &args.window_csv {
        let mut w = create(path)?;
        let mut body = String::from("window_end_t,accuracy\n");
        for p in &metrics.windowed_accuracy {
            body.push_str(&format!("{},{}\n", p.window_end_t, p.accuracy));
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))?;
    }

    Ok(Summary {
        tool: "odlae",
        version: env!("CARGO_PKG_VERSION"),
        config: r.record,
        stream: StreamRecord {
            input_dim: r.info.input_dim,
            classes: r.info.classes,
            length: r.info.len,
        },
        examples_seen: eval.seen,
        complete,
        metrics,
        final_state: final_state(&model),
    })
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let summary = execute(args)?;
    let json = summary.to_json()?;
    match &args.out {
        Some(path) => std::fs::write(path, json).map_err(|e| CliError::io(path, e))?,
        None => print!("{json}"),
    }
    Ok(())
}
