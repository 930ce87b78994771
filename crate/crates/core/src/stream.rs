//! Example streams: CSV files, synthetic Gaussian classes, drift transforms
//! and evaluation-time noise.
//!
//! Every stream is a sequential iterator of `Result<Example>` and is a pure
//! function of its spec, so replaying a spec reproduces the stream bit for bit.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::PathBuf;
use std::str::FromStr;

use flate2::read::MultiGzDecoder;

use crate::denoise::{CorruptionPolicy, Corruptor};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Features in `[0, 1]`.
    pub x: Vector,
    pub y: usize,
}

pub type Stream = Box<dyn Iterator<Item = Result<Example>> + Send>;

pub fn from_examples(examples: Vec<Example>) -> Stream {
    Box::new(examples.into_iter().map(Ok))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl FromStr for LabelColumn {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("label column must not be empty".into()));
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// Running min/max over the examples seen so far.
    MinMax,
    /// Min/max over the whole file, computed before streaming.
    Prescan,
    /// Features must already lie in `[0, 1]`.
    None,
}

impl FromStr for Scaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minmax" | "online" => Ok(Scaling::MinMax),
            "prescan" | "offline" => Ok(Scaling::Prescan),
            "none" => Ok(Scaling::None),
            other => Err(Error::Config(format!("unknown scaling `{other}`"))),
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::MinMax => "minmax",
            Scaling::Prescan => "prescan",
            Scaling::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSource {
    /// Plain or gzip-compressed (`.gz`) CSV.
    pub path: PathBuf,
    pub label_column: LabelColumn,
    pub scaling: Scaling,
    pub has_header: bool,
    pub delimiter: u8,
    /// Read at most this many rows.
    pub limit: Option<usize>,
}

impl CsvSource {
    pub fn new(path: impl Into<PathBuf>, label_column: LabelColumn) -> Self {
        CsvSource {
            path: path.into(),
            label_column,
            scaling: Scaling::MinMax,
            has_header: false,
            delimiter: b',',
            limit: None,
        }
    }
}

/// `K` isotropic Gaussian classes, drawn uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub means: Vec<Vector>,
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Class means on a circle of radius 0.2 around the centre of the unit
    /// cube (in the first two coordinates), so two classes sit 0.4 apart.
    /// With one feature the means are spread evenly over `[0.3, 0.7]`.
    pub fn spread(classes: usize, dim: usize, sigma: f64, n: usize, seed: u64) -> Self {
        let means = (0..classes)
            .map(|k| {
                let mut m = vec![0.5; dim];
                if dim >= 2 {
                    let a = 2.0 * PI * k as f64 / classes as f64;
                    m[0] = 0.5 + 0.2 * a.cos();
                    m[1] = 0.5 + 0.2 * a.sin();
                } else if dim == 1 && classes > 1 {
                    m[0] = 0.3 + 0.4 * k as f64 / (classes - 1) as f64;
                }
                Vector::from_vec(m)
            })
            .collect();
        SyntheticSpec { means, sigma, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.means.first().map_or(0, |m| m.dim());
        if dim == 0 {
            return Err(Error::Config("synthetic stream needs at least one class and feature".into()));
        }
        if self.means.iter().any(|m| m.dim() != dim || !m.is_finite()) {
            return Err(Error::Config("class means must share one finite dimension".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.n == 0 {
            return Err(Error::Config("stream length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DriftTransform {
    /// One rotation by an angle drawn from `(−π, π]`. Two features are
    /// treated as a point rotated about `(0.5, 0.5)`; `s²` features as an
    /// `s×s` image.
    Rotate { seed: u64 },
    /// One fixed random reordering of the features.
    PermuteFeatures { seed: u64 },
    /// Label `k` becomes `permutation[k]`.
    LabelSwap { permutation: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Drift {
    pub transform: DriftTransform,
    /// First example (0-based) that is transformed.
    pub at_step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Csv(CsvSource),
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSpec {
    pub source: Source,
    pub drift: Option<Drift>,
    /// Corruption applied to the features the learner sees.
    pub eval_noise: CorruptionPolicy,
    pub noise_seed: u64,
}

/// Shape of a stream, known before it is consumed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamInfo {
    pub input_dim: usize,
    pub classes: usize,
    pub len: usize,
}

impl StreamSpec {
    pub fn new(source: Source) -> Self {
        StreamSpec {
            source,
            drift: None,
            eval_noise: CorruptionPolicy::None,
            noise_seed: 0,
        }
    }

    pub fn info(&self) -> Result<StreamInfo> {
        match &self.source {
            Source::Csv(src) => {
                let scan = scan_csv(src)?;
                Ok(StreamInfo {
                    input_dim: scan.input_dim,
                    classes: scan.labels.len(),
                    len: scan.rows,
                })
            }
            Source::Synthetic(spec) => {
                spec.validate()?;
                Ok(StreamInfo {
                    input_dim: spec.means[0].dim(),
                    classes: spec.means.len(),
                    len: spec.n,
                })
            }
        }
    }

    pub fn open(&self) -> Result<Stream> {
        let mut stream = match &self.source {
            Source::Csv(src) => load_csv(src)?,
            Source::Synthetic(spec) => synthetic_gaussians(spec)?,
        };
        if let Some(drift) = &self.drift {
            let info = self.info()?;
            stream = apply_drift(stream, drift, &info)?;
        }
        if !self.eval_noise.is_none() {
            stream = inject_noise(
                stream,
                Corruptor::new(self.eval_noise, Rng::with_stream(self.noise_seed, 2))?,
            );
        }
        Ok(stream)
    }
}

fn open_reader(src: &CsvSource) -> Result<csv::Reader<Box<dyn Read + Send>>> {
    let file = File::open(&src.path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", src.path.display()),
        ))
    })?;
    let inner: Box<dyn Read + Send> = if src.path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    Ok(csv::ReaderBuilder::new()
        .has_headers(src.has_header)
        .delimiter(src.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(inner))
}

/// Raw CSV rows: `(line, features, label text)`.
struct RawRows {
    reader: csv::Reader<Box<dyn Read + Send>>,
    record: csv::StringRecord,
    label: LabelColumn,
    label_idx: Option<usize>,
    arity: Option<usize>,
    remaining: Option<usize>,
    failed: bool,
}

impl RawRows {
    fn open(src: &CsvSource) -> Result<Self> {
        let mut reader = open_reader(src)?;
        let label_idx = match &src.label_column {
            LabelColumn::Name(name) => {
                if !src.has_header {
                    return Err(Error::Config(format!(
                        "label column `{name}` given by name but the file has no header"
                    )));
                }
                let headers = reader
                    .headers()
                    .map_err(|e| csv_error(e, Some(1)))?;
                let idx = headers.iter().position(|h| h == name).ok_or_else(|| {
                    Error::data_at_line(1, format!("label column `{name}` not found in header"))
                })?;
                Some(idx)
            }
            LabelColumn::Index(i) => Some(*i),
        };
        let arity = if src.has_header {
            Some(reader.headers().map_err(|e| csv_error(e, Some(1)))?.len())
        } else {
            None
        };
        Ok(RawRows {
            reader,
            record: csv::StringRecord::new(),
            label: src.label_column.clone(),
            label_idx,
            arity,
            remaining: src.limit,
            failed: false,
        })
    }

    fn next_row(&mut self) -> Result<Option<(u64, Vec<f64>, String)>> {
        if self.failed || self.remaining == Some(0) {
            return Ok(None);
        }
        let more = self
            .reader
            .read_record(&mut self.record)
            .map_err(|e| csv_error(e, None))?;
        if !more {
            return Ok(None);
        }
        if let Some(r) = self.remaining.as_mut() {
            *r -= 1;
        }
        let line = self.record.position().map_or(0, |p| p.line());
        let arity = *self.arity.get_or_insert(self.record.len());
        if self.record.len() != arity {
            return Err(Error::data_at_line(
                line,
                format!("expected {arity} fields, found {}", self.record.len()),
            ));
        }
        let label_idx = self.label_idx.unwrap_or(0);
        if label_idx >= arity || arity < 2 {
            return Err(Error::data_at_line(
                line,
                format!(
                    "label column `{}` is out of range for rows with {arity} fields",
                    self.label
                ),
            ));
        }
        let mut features = Vec::with_capacity(arity - 1);
        for (j, field) in self.record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                Error::data_at_line(line, format!("non-numeric value `{field}` in column {j}"))
            })?;
            if !v.is_finite() {
                return Err(Error::data_at_line(line, format!("non-finite value in column {j}")));
            }
            features.push(v);
        }
        let label = self.record[label_idx].to_string();
        if label.is_empty() {
            return Err(Error::data_at_line(line, "empty label"));
        }
        Ok(Some((line, features, label)))
    }
}

fn csv_error(e: csv::Error, line: Option<u64>) -> Error {
    let line = e.position().map(|p| p.line()).or(line);
    match line {
        Some(l) => Error::data_at_line(l, e.to_string()),
        None => Error::Data {
            record: None,
            line: None,
            message: e.to_string(),
        },
    }
}

struct CsvScan {
    rows: usize,
    input_dim: usize,
    labels: Vec<String>,
    min: Vec<f64>,
    max: Vec<f64>,
}

fn scan_csv(src: &CsvSource) -> Result<CsvScan> {
    let mut rows = RawRows::open(src)?;
    let mut scan = CsvScan {
        rows: 0,
        input_dim: 0,
        labels: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
    };
    let mut seen: HashMap<String, usize> = HashMap::new();
    while let Some((_, x, label)) = rows.next_row()? {
        if scan.rows == 0 {
            scan.input_dim = x.len();
            scan.min = x.clone();
            scan.max = x.clone();
        }
        for ((lo, hi), v) in scan.min.iter_mut().zip(scan.max.iter_mut()).zip(&x) {
            *lo = lo.min(*v);
            *hi = hi.max(*v);
        }
        if !seen.contains_key(&label) {
            seen.insert(label.clone(), scan.labels.len());
            scan.labels.push(label);
        }
        scan.rows += 1;
    }
    if scan.rows == 0 {
        return Err(Error::Data {
            record: None,
            line: None,
            message: format!("{} contains no data rows", src.path.display()),
        });
    }
    Ok(scan)
}

enum Scaler {
    Online {
        min: Vec<f64>,
        max: Vec<f64>,
        started: bool,
    },
    Fixed {
        min: Vec<f64>,
        max: Vec<f64>,
    },
    Identity,
}

fn unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl Scaler {
    fn scale(&mut self, x: &mut [f64], line: u64) -> Result<()> {
        match self {
            Scaler::Online { min, max, started } => {
                if !*started {
                    *min = x.to_vec();
                    *max = x.to_vec();
                    *started = true;
                    for v in x.iter_mut() {
                        *v = v.clamp(0.0, 1.0);
                    }
                } else {
                    for (j, v) in x.iter_mut().enumerate() {
                        let raw = *v;
                        *v = unit(raw, min[j], max[j]);
                        min[j] = min[j].min(raw);
                        max[j] = max[j].max(raw);
                    }
                }
            }
            Scaler::Fixed { min, max } => {
                for (j, v) in x.iter_mut().enumerate() {
                    *v = unit(*v, min[j], max[j]);
                }
            }
            Scaler::Identity => {
                if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::data_at_line(
                        line,
                        format!("feature value {v} outside [0, 1] with scaling `none`"),
                    ));
                }
            }
        }
        Ok(())
    }
}

struct CsvStream {
    rows: RawRows,
    scaler: Scaler,
    labels: HashMap<String, usize>,
    input_dim: Option<usize>,
}

impl Iterator for CsvStream {
    type Item = Result<Example>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, mut x, label) = match self.rows.next_row() {
            Ok(Some(row)) => row,
            Ok(None) => return None,
            Err(e) => {
                self.rows.failed = true;
                return Some(Err(e));
            }
        };
        if *self.input_dim.get_or_insert(x.len()) != x.len() {
            self.rows.failed = true;
            return Some(Err(Error::data_at_line(line, "inconsistent feature count")));
        }
        if let Err(e) = self.scaler.scale(&mut x, line) {
            self.rows.failed = true;
            return Some(Err(e));
        }
        let next = self.labels.len();
        let y = *self.labels.entry(label).or_insert(next);
        Some(Ok(Example {
            x: Vector::from_vec(x),
            y,
        }))
    }
}

/// Streams a CSV file in row order. Labels are numbered densely in order of
/// first appearance.
pub fn load_csv(src: &CsvSource) -> Result<Stream> {
    let scaler = match src.scaling {
        Scaling::MinMax => Scaler::Online {
            min: Vec::new(),
            max: Vec::new(),
            started: false,
        },
        Scaling::Prescan => {
            let scan = scan_csv(src)?;
            Scaler::Fixed {
                min: scan.min,
                max: scan.max,
            }
        }
        Scaling::None => Scaler::Identity,
    };
    Ok(Box::new(CsvStream {
        rows: RawRows::open(src)?,
        scaler,
        labels: HashMap::new(),
        input_dim: None,
    }))
}

struct SyntheticStream {
    spec: SyntheticSpec,
    rng: Rng,
    emitted: usize,
}

impl Iterator for SyntheticStream {
    type Item = Result<Example>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.emitted == self.spec.n {
            return None;
        }
        self.emitted += 1;
        let y = self.rng.below(self.spec.means.len());
        let sigma = self.spec.sigma;
        let x = self.spec.means[y]
            .iter()
            .map(|&m| (m + sigma * self.rng.normal()).clamp(0.0, 1.0))
            .collect();
        Some(Ok(Example {
            x: Vector::from_vec(x),
            y,
        }))
    }
}

pub fn synthetic_gaussians(spec: &SyntheticSpec) -> Result<Stream> {
    spec.validate()?;
    Ok(Box::new(SyntheticStream {
        spec: spec.clone(),
        rng: Rng::with_stream(spec.seed, 0),
        emitted: 0,
    }))
}

/// `out[i] = x[perm[i]]`
pub fn permute_features(x: &[f64], perm: &[usize]) -> Vector {
    Vector::from_vec(perm.iter().map(|&j| x[j]).collect())
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn check_bijection(perm: &[usize], n: usize, what: &str) -> Result<()> {
    let mut hit = vec![false; n];
    if perm.len() != n {
        return Err(Error::Config(format!(
            "{what} permutation has {} entries, expected {n}",
            perm.len()
        )));
    }
    for &p in perm {
        if p >= n || hit[p] {
            return Err(Error::Config(format!("{what} permutation is not a bijection on 0..{n}")));
        }
        hit[p] = true;
    }
    Ok(())
}

/// Rotation in the plane. Images use bilinear taps precomputed once.
#[derive(Clone, Debug)]
pub enum Rotation {
    Point { cos: f64, sin: f64 },
    Image { taps: Vec<Vec<(usize, f64)>> },
}

impl Rotation {
    pub fn new(dim: usize, angle: f64) -> Result<Self> {
        let (sin, cos) = angle.sin_cos();
        if dim == 2 {
            return Ok(Rotation::Point { cos, sin });
        }
        let side = (dim as f64).sqrt().round() as usize;
        if side * side != dim {
            return Err(Error::Config(format!(
                "rotation needs 2 features or a square image, got {dim} features"
            )));
        }
        let c = (side as f64 - 1.0) / 2.0;
        let mut taps = Vec::with_capacity(dim);
        for r in 0..side {
            for col in 0..side {
                // Sample the source at the inverse-rotated location.
                let (dy, dx) = (r as f64 - c, col as f64 - c);
                let sy = c + cos * dy - sin * dx;
                let sx = c + sin * dy + cos * dx;
                let (y0, x0) = (sy.floor(), sx.floor());
                let (fy, fx) = (sy - y0, sx - x0);
                let mut t = Vec::with_capacity(4);
                for (yy, wy) in [(y0, 1.0 - fy), (y0 + 1.0, fy)] {
                    for (xx, wx) in [(x0, 1.0 - fx), (x0 + 1.0, fx)] {
                        let w = wy * wx;
                        if w > 0.0 && yy >= 0.0 && xx >= 0.0 && yy < side as f64 && xx < side as f64 {
                            t.push((yy as usize * side + xx as usize, w));
                        }
                    }
                }
                taps.push(t);
            }
        }
        Ok(Rotation::Image { taps })
    }

    pub fn apply(&self, x: &[f64]) -> Vector {
        match self {
            Rotation::Point { cos, sin } => {
                let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
                Vector::from_vec(vec![
                    (0.5 + cos * dx - sin * dy).clamp(0.0, 1.0),
                    (0.5 + sin * dx + cos * dy).clamp(0.0, 1.0),
                ])
            }
            Rotation::Image { taps } => Vector::from_vec(
                taps.iter()
                    .map(|t| t.iter().map(|&(j, w)| w * x[j]).sum::<f64>().clamp(0.0, 1.0))
                    .collect(),
            ),
        }
    }
}

/// Angle drawn uniformly from `(−π, π]`.
pub fn rotation_angle(seed: u64) -> f64 {
    PI - 2.0 * PI * Rng::with_stream(seed, 3).uniform()
}

enum Prepared {
    Features(Vec<usize>),
    Rotate(Rotation),
    Labels(Vec<usize>),
}

struct DriftStream {
    inner: Stream,
    prepared: Prepared,
    at_step: usize,
    t: usize,
}

impl Iterator for DriftStream {
    type Item = Result<Example>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        let t = self.t;
        self.t += 1;
        if t < self.at_step {
            return Some(item);
        }
        Some(item.map(|ex| match &self.prepared {
            Prepared::Features(p) => Example {
                x: permute_features(&ex.x, p),
                y: ex.y,
            },
            Prepared::Rotate(r) => Example {
                x: r.apply(&ex.x),
                y: ex.y,
            },
            Prepared::Labels(p) => Example {
                x: ex.x,
                y: p.get(ex.y).copied().unwrap_or(ex.y),
            },
        }))
    }
}

/// Leaves examples before `drift.at_step` untouched and transforms the rest.
pub fn apply_drift(stream: Stream, drift: &Drift, info: &StreamInfo) -> Result<Stream> {
    if drift.at_step > info.len {
        return Err(Error::Config(format!(
            "drift step {} is beyond the stream length {}",
            drift.at_step, info.len
        )));
    }
    let prepared = match &drift.transform {
        DriftTransform::PermuteFeatures { seed } => {
            Prepared::Features(Rng::with_stream(*seed, 3).permutation(info.input_dim))
        }
        DriftTransform::Rotate { seed } => {
            Prepared::Rotate(Rotation::new(info.input_dim, rotation_angle(*seed))?)
        }
        DriftTransform::LabelSwap { permutation } => {
            check_bijection(permutation, info.classes, "label")?;
            Prepared::Labels(permutation.clone())
        }
    };
    Ok(Box::new(DriftStream {
        inner: stream,
        prepared,
        at_step: drift.at_step,
        t: 0,
    }))
}

/// Corrupts every example's features; labels pass through.
pub fn inject_noise(stream: Stream, mut corruptor: Corruptor) -> Stream {
    Box::new(stream.map(move |item| {
        item.map(|ex| Example {
            x: corruptor.apply(&ex.x),
            y: ex.y,
        })
    }))
}
