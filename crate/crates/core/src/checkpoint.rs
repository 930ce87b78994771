//! Binary checkpoints of a model, its optimizer and (optionally) the running
//! evaluation, so an interrupted run can resume exactly.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header   "ODLA"  u16 version  u8 variant  u32×5 (D_X, D_X′, D_Y, L, d_a)
//! tensors  u32 count, then per tensor: u32 rows, u32 cols, f64×(rows·cols)
//! state    variant-specific scalars, optimizer moments, u64 model steps
//! eval     u8 present [+ evaluator state]
//! meta     u32 length + UTF-8 text
//! ```
//!
//! See [`encode`] for the exact field order of the state section.

use std::fs;
use std::path::Path;

use crate::attention::AttentionModel;
use crate::autoencoder::ModelDims;
use crate::balance::TradeoffState;
use crate::baseline::LinearOgd;
use crate::denoise::{CorruptionPolicy, Corruptor};
use crate::error::{Error, Result};
use crate::evaluate::{ConfusionMatrix, PrequentialEvaluator, WindowPoint};
use crate::hedge::HedgeModel;
use crate::model::{Model, Variant};
use crate::numerics::{Activation, Rng, RngState, Vector};
use crate::optim::{Optimizer, OptimizerKind};
use crate::params::ParamSet;
use crate::settings::ModelSettings;

pub const MAGIC: &[u8; 4] = b"ODLA";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub variant: Variant,
    pub model: Model,
    pub evaluator: Option<PrequentialEvaluator>,
    /// Free-form text; the CLI stores the resolved run config here.
    pub metadata: String,
}

/// Header fields, readable without decoding the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub version: u16,
    pub variant: Variant,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub last_hidden_index: usize,
    pub attention_dim: usize,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats(&mut self, v: &[f64]) -> Result<()> {
        self.u32(v.len())?;
        for &x in v {
            self.f64(x);
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.arr()?))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.arr()?) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.arr()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.arr()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.arr()?))
    }
    fn floats_into(&mut self, out: &mut [f64]) -> Result<()> {
        let n = self.u32()?;
        if n != out.len() {
            return Err(Error::Format(format!("expected {} values, found {n}", out.len())));
        }
        for v in out.iter_mut() {
            *v = self.f64()?;
        }
        Ok(())
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("invalid flag byte {b}"))),
        }
    }
}

fn header_dims(model: &Model) -> [usize; 5] {
    let d = match model {
        Model::Hedge(m) => m.dims(),
        Model::Attention(m) => m.dims(),
        Model::Linear(m) => {
            return [m.weight.cols(), 0, m.weight.rows(), 0, 0];
        }
    };
    [
        d.input_dim,
        d.hidden_dim,
        d.output_dim,
        d.last_hidden_index,
        d.attention_dim,
    ]
}

fn write_tradeoff(w: &mut Writer, t: &TradeoffState) {
    w.f64(t.a_re);
    w.f64(t.a_pre);
    w.f64(t.beta_re);
    w.f64(t.beta_pre);
    w.u8(t.adaptive as u8);
}

fn read_tradeoff(r: &mut Reader) -> Result<TradeoffState> {
    Ok(TradeoffState {
        a_re: r.f64()?,
        a_pre: r.f64()?,
        beta_re: r.f64()?,
        beta_pre: r.f64()?,
        adaptive: r.flag()?,
    })
}

fn write_corruptor(w: &mut Writer, c: &Corruptor) {
    let (code, param) = c.policy.encode();
    w.u8(code);
    w.f64(param);
    let s = c.rng_state();
    w.u64(s.seed);
    w.u64(s.stream);
    w.u128(s.word_pos);
}

fn read_corruptor(r: &mut Reader) -> Result<Corruptor> {
    let code = r.u8()?;
    let param = r.f64()?;
    let policy = CorruptionPolicy::decode(code, param)?;
    let state = RngState {
        seed: r.u64()?,
        stream: r.u64()?,
        word_pos: r.u128()?,
    };
    Corruptor::new(policy, Rng::from_state(state))
}

fn write_optimizer(w: &mut Writer, o: &Optimizer) -> Result<()> {
    match o.kind {
        OptimizerKind::Sgd { lr } => {
            w.u8(0);
            w.f64(lr);
            w.f64(0.0);
            w.f64(0.0);
            w.f64(0.0);
        }
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            w.u8(1);
            w.f64(lr);
            w.f64(beta1);
            w.f64(beta2);
            w.f64(eps);
        }
    }
    w.u64(o.step);
    w.u32(o.first_moment.len())?;
    for m in o.first_moment.iter().chain(&o.second_moment) {
        w.floats(m)?;
    }
    Ok(())
}

fn read_optimizer(r: &mut Reader, shapes: &[(usize, usize)]) -> Result<Optimizer> {
    let code = r.u8()?;
    let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let kind = match code {
        0 => OptimizerKind::Sgd { lr },
        1 => OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        },
        other => return Err(Error::Format(format!("unknown optimizer code {other}"))),
    };
    kind.validate().map_err(|e| Error::Format(e.to_string()))?;
    let mut opt = Optimizer::new(kind, shapes);
    opt.step = r.u64()?;
    let n = r.u32()?;
    if n != opt.first_moment.len() {
        return Err(Error::Format(format!(
            "expected {} moment tensors, found {n}",
            opt.first_moment.len()
        )));
    }
    for m in opt.first_moment.iter_mut().chain(opt.second_moment.iter_mut()) {
        r.floats_into(m)?;
    }
    Ok(opt)
}

fn write_evaluator(w: &mut Writer, e: &PrequentialEvaluator) -> Result<()> {
    w.u32(e.confusion.classes())?;
    for &c in e.confusion.as_slice() {
        w.u64(c);
    }
    w.u64(e.window);
    w.u64(e.window_correct);
    w.u64(e.window_seen);
    w.u64(e.seen);
    w.u32(e.series.len())?;
    for p in &e.series {
        w.u64(p.window_end_t);
        w.f64(p.accuracy);
    }
    Ok(())
}

fn read_evaluator(r: &mut Reader) -> Result<PrequentialEvaluator> {
    let k = r.u32()?;
    let mut rows = vec![vec![0u64; k]; k];
    for row in rows.iter_mut() {
        for c in row.iter_mut() {
            *c = r.u64()?;
        }
    }
    let confusion = ConfusionMatrix::from_counts(&rows)?;
    let window = r.u64()?;
    let window_correct = r.u64()?;
    let window_seen = r.u64()?;
    let seen = r.u64()?;
    let n = r.u32()?;
    let mut series = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        series.push(WindowPoint {
            window_end_t: r.u64()?,
            accuracy: r.f64()?,
        });
    }
    Ok(PrequentialEvaluator {
        confusion,
        window,
        window_correct,
        window_seen,
        series,
        seen,
    })
}

pub fn encode(
    variant: Variant,
    model: &Model,
    evaluator: Option<&PrequentialEvaluator>,
    metadata: &str,
) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u8(variant.tag());
    for d in header_dims(model) {
        w.u32(d)?;
    }

    let shapes = model.shapes();
    w.u32(shapes.len())?;
    for ((r, c), t) in shapes.iter().zip(model.tensors()) {
        w.u32(*r)?;
        w.u32(*c)?;
        for &v in t {
            w.f64(v);
        }
    }

    match model {
        Model::Hedge(m) => {
            w.u8(m.autoencoder.output_activation.code());
            w.floats(&m.hedge.beta)?;
            w.f64(m.hedge.discount);
            w.f64(m.hedge.floor);
            write_tradeoff(&mut w, &m.tradeoff);
            write_corruptor(&mut w, &m.corruptor);
            write_optimizer(&mut w, &m.optimizer)?;
        }
        Model::Attention(m) => {
            w.u8(m.autoencoder.output_activation.code());
            write_tradeoff(&mut w, &m.tradeoff);
            write_corruptor(&mut w, &m.corruptor);
            write_optimizer(&mut w, &m.optimizer)?;
        }
        Model::Linear(m) => write_optimizer(&mut w, &m.optimizer)?,
    }
    w.u64(model_steps(model));

    match evaluator {
        Some(e) => {
            w.u8(1);
            write_evaluator(&mut w, e)?;
        }
        None => w.u8(0),
    }
    w.u32(metadata.len())?;
    w.0.extend_from_slice(metadata.as_bytes());
    Ok(w.0)
}

fn model_steps(model: &Model) -> u64 {
    model.steps()
}

fn read_header(r: &mut Reader) -> Result<CheckpointHeader> {
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic bytes)".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            supported: VERSION,
        });
    }
    let tag = r.u8()?;
    let variant =
        Variant::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown variant tag {tag}")))?;
    Ok(CheckpointHeader {
        version,
        variant,
        input_dim: r.u32()?,
        hidden_dim: r.u32()?,
        output_dim: r.u32()?,
        last_hidden_index: r.u32()?,
        attention_dim: r.u32()?,
    })
}

pub fn decode_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    read_header(&mut Reader { buf: bytes, pos: 0 })
}

fn read_tensors(r: &mut Reader, model: &mut Model) -> Result<()> {
    let shapes = model.shapes();
    let n = r.u32()?;
    if n != shapes.len() {
        return Err(Error::Format(format!(
            "expected {} tensors, found {n}",
            shapes.len()
        )));
    }
    for (t, &(rows, cols)) in model.tensors_mut().into_iter().zip(&shapes) {
        let (fr, fc) = (r.u32()?, r.u32()?);
        if (fr, fc) != (rows, cols) {
            return Err(Error::Format(format!(
                "tensor shape {fr}×{fc} does not match expected {rows}×{cols}"
            )));
        }
        for v in t.iter_mut() {
            *v = r.f64()?;
        }
    }
    Ok(())
}

fn read_activation(r: &mut Reader) -> Result<Activation> {
    let code = r.u8()?;
    Activation::from_code(code).ok_or_else(|| Error::Format(format!("unknown activation code {code}")))
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let h = read_header(&mut r)?;

    let mut model = if h.variant == Variant::LinearOgdBaseline {
        Model::Linear(LinearOgd::new(h.input_dim, h.output_dim, 0.0)?)
    } else {
        let dims = ModelDims {
            input_dim: h.input_dim,
            hidden_dim: h.hidden_dim,
            output_dim: h.output_dim,
            last_hidden_index: h.last_hidden_index,
            attention_dim: h.attention_dim,
        };
        dims.validate().map_err(|e| Error::Format(e.to_string()))?;
        let settings = ModelSettings::default();
        if h.variant.uses_hedge() {
            Model::Hedge(HedgeModel::new(dims, &settings, 0)?)
        } else {
            Model::Attention(AttentionModel::new(dims, &settings, 0)?)
        }
    };
    read_tensors(&mut r, &mut model)?;
    let shapes = model.shapes();

    match &mut model {
        Model::Hedge(m) => {
            m.autoencoder.output_activation = read_activation(&mut r)?;
            let mut beta = Vector::zeros(m.hedge.beta.dim());
            r.floats_into(&mut beta)?;
            m.hedge.beta = beta;
            m.hedge.discount = r.f64()?;
            m.hedge.floor = r.f64()?;
            m.tradeoff = read_tradeoff(&mut r)?;
            m.corruptor = read_corruptor(&mut r)?;
            m.optimizer = read_optimizer(&mut r, &shapes)?;
            m.steps = r.u64()?;
        }
        Model::Attention(m) => {
            m.autoencoder.output_activation = read_activation(&mut r)?;
            m.tradeoff = read_tradeoff(&mut r)?;
            m.corruptor = read_corruptor(&mut r)?;
            m.optimizer = read_optimizer(&mut r, &shapes)?;
            m.steps = r.u64()?;
        }
        Model::Linear(m) => {
            m.optimizer = read_optimizer(&mut r, &shapes)?;
            m.steps = r.u64()?;
        }
    }

    let evaluator = if r.flag()? {
        Some(read_evaluator(&mut r)?)
    } else {
        None
    };
    let len = r.u32()?;
    let metadata = String::from_utf8(r.take(len)?.to_vec())
        .map_err(|_| Error::Format("metadata is not valid UTF-8".into()))?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        variant: h.variant,
        model,
        evaluator,
        metadata,
    })
}

/// Writes to a sibling temporary file first, then renames it into place.
pub fn save(
    path: &Path,
    variant: Variant,
    model: &Model,
    evaluator: Option<&PrequentialEvaluator>,
    metadata: &str,
) -> Result<()> {
    let bytes = encode(variant, model, evaluator, metadata)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, OnlineClassifier};
    use crate::stream::{synthetic_gaussians, SyntheticSpec};

    fn trained(variant: Variant, steps: usize) -> (Model, PrequentialEvaluator) {
        let dims = ModelDims::new(3, 4, 2, 2, 5).unwrap();
        let settings = ModelSettings {
            corruption: CorruptionPolicy::Masking { rate: 0.2 },
            ..Default::default()
        };
        let mut model = build_model(variant, dims, &settings, 11).unwrap();
        let mut ev = PrequentialEvaluator::new(2, 7).unwrap();
        let stream = synthetic_gaussians(&SyntheticSpec::spread(2, 3, 0.1, steps, 5)).unwrap();
        ev.run(&mut model, stream, None, |_| Ok(())).unwrap();
        (model, ev)
    }

    fn bits(m: &Model) -> Vec<u64> {
        m.tensors().iter().flat_map(|t| t.iter().map(|v| v.to_bits())).collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        for v in [
            Variant::Odlae1,
            Variant::Odlae2,
            Variant::Odldae1,
            Variant::Odldae2,
            Variant::LinearOgdBaseline,
        ] {
            let (model, ev) = trained(v, 30);
            let bytes = encode(v, &model, Some(&ev), "meta").unwrap();
            let ck = decode(&bytes).unwrap();
            assert_eq!(ck.variant, v);
            assert_eq!(bits(&ck.model), bits(&model));
            assert_eq!(ck.evaluator.as_ref(), Some(&ev));
            assert_eq!(ck.metadata, "meta");
            assert_eq!(ck.model.steps(), 30);
            assert_eq!(encode(v, &ck.model, ck.evaluator.as_ref(), "meta").unwrap(), bytes);
        }
    }

    #[test]
    fn resumed_model_continues_identically() {
        for v in [Variant::Odldae1, Variant::Odlae2] {
            let (mut a, _) = trained(v, 20);
            let mut b = decode(&encode(v, &a, None, "").unwrap()).unwrap().model;
            for i in 0..10 {
                let x = [0.1 * i as f64 % 1.0, 0.5, 0.9];
                let ra = a.step(&x, i % 2).unwrap();
                let rb = b.step(&x, i % 2).unwrap();
                assert_eq!(ra, rb);
            }
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn rejects_bad_files() {
        let (model, _) = trained(Variant::Odlae1, 3);
        let mut bytes = encode(Variant::Odlae1, &model, None, "").unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        let mut old = bytes.clone();
        old[4] = 9;
        assert!(matches!(decode(&old), Err(Error::Version { found: 9, supported: 1 })));
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (model, ev) = trained(Variant::Odlae2, 5);
        save(&path, Variant::Odlae2, &model, Some(&ev), "{}").unwrap();
        let ck = load(&path).unwrap();
        assert_eq!(bits(&ck.model), bits(&model));
        let h = decode_header(&fs::read(&path).unwrap()).unwrap();
        assert_eq!((h.variant, h.input_dim, h.hidden_dim, h.last_hidden_index), (Variant::Odlae2, 3, 4, 1));
    }
}
