//! Fully connected encoder/decoder stacks.
//!
//! ```text
//! h_0 = s(W_0 x + b_0)            h_l = s(W_l h_{l-1} + b_l),  l = 1..L
//! ĥ_L = h_L                       ĥ_{l-1} = s(Ŵ_l ĥ_l + b̂_l),  l = L..1
//! x̂ = s_out(Ŵ_0 ĥ_0 + b̂_0)
//! ```
//!
//! All hidden layers share one width. Gradients are derived by hand; see
//! [`Autoencoder::backward`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean_squared_error, Activation, Matrix, Rng, Vector};
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// `D_X`
    pub input_dim: usize,
    /// `D_X′`, shared by every hidden layer.
    pub hidden_dim: usize,
    /// `D_Y`, the number of classes.
    pub output_dim: usize,
    /// `L`; the encoder has `L + 1` hidden layers.
    pub last_hidden_index: usize,
    /// `d_a`, width of the attention scoring layer.
    pub attention_dim: usize,
}

impl ModelDims {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        hidden_layers: usize,
        attention_dim: usize,
    ) -> Result<Self> {
        if hidden_layers == 0 {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        let dims = ModelDims {
            input_dim,
            hidden_dim,
            output_dim,
            last_hidden_index: hidden_layers - 1,
            attention_dim,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
            ("attention_dim", self.attention_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// `L + 1`
    pub fn hidden_layers(&self) -> usize {
        self.last_hidden_index + 1
    }
}

/// Glorot-uniform matrix: entries in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.uniform_range(-limit, limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches")
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// `W_0` is `D_X′×D_X`; `W_l` for `l ≥ 1` is `D_X′×D_X′`.
    pub weights: Vec<Matrix>,
    /// `b_0..b_L`
    pub biases: Vec<Vector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    /// `Ŵ_1..Ŵ_L` (index `l − 1`), each `D_X′×D_X′`.
    pub weights: Vec<Matrix>,
    /// `b̂_1..b̂_L` (index `l − 1`).
    pub biases: Vec<Vector>,
    /// `Ŵ_0`, `D_X×D_X′`.
    pub out_weight: Matrix,
    /// `b̂_0`, length `D_X`.
    pub out_bias: Vector,
}

/// Encoder and decoder tensors. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl AutoencoderParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        let (dx, dh, layers) = (dims.input_dim, dims.hidden_dim, dims.hidden_layers());
        let mut enc_w = vec![Matrix::zeros(dh, dx)];
        enc_w.extend((1..layers).map(|_| Matrix::zeros(dh, dh)));
        AutoencoderParams {
            encoder: EncoderParams {
                weights: enc_w,
                biases: (0..layers).map(|_| Vector::zeros(dh)).collect(),
            },
            decoder: DecoderParams {
                weights: (1..layers).map(|_| Matrix::zeros(dh, dh)).collect(),
                biases: (1..layers).map(|_| Vector::zeros(dh)).collect(),
                out_weight: Matrix::zeros(dx, dh),
                out_bias: Vector::zeros(dx),
            },
        }
    }

    /// Glorot-uniform weights, zero biases. Draw order: `W_0..W_L`, then
    /// `Ŵ_1..Ŵ_L`, then `Ŵ_0`.
    pub fn init(dims: &ModelDims, rng: &mut Rng) -> Self {
        let mut p = AutoencoderParams::zeros(dims);
        for w in p.encoder.weights.iter_mut() {
            *w = glorot_uniform(w.rows(), w.cols(), rng);
        }
        for w in p.decoder.weights.iter_mut() {
            *w = glorot_uniform(w.rows(), w.cols(), rng);
        }
        let (r, c) = p.decoder.out_weight.shape();
        p.decoder.out_weight = glorot_uniform(r, c, rng);
        p
    }
}

impl ParamSet for AutoencoderParams {
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = Vec::new();
        for (w, b) in self.encoder.weights.iter().zip(&self.encoder.biases) {
            s.push(w.shape());
            s.push((b.dim(), 1));
        }
        for (w, b) in self.decoder.weights.iter().zip(&self.decoder.biases) {
            s.push(w.shape());
            s.push((b.dim(), 1));
        }
        s.push(self.decoder.out_weight.shape());
        s.push((self.decoder.out_bias.dim(), 1));
        s
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = Vec::new();
        for (w, b) in self.encoder.weights.iter().zip(&self.encoder.biases) {
            t.push(w.as_slice());
            t.push(b.as_slice());
        }
        for (w, b) in self.decoder.weights.iter().zip(&self.decoder.biases) {
            t.push(w.as_slice());
            t.push(b.as_slice());
        }
        t.push(self.decoder.out_weight.as_slice());
        t.push(self.decoder.out_bias.as_slice());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self
            .encoder
            .weights
            .iter_mut()
            .zip(self.encoder.biases.iter_mut())
        {
            t.push(w.as_mut_slice());
            t.push(b.as_mut_slice());
        }
        for (w, b) in self
            .decoder
            .weights
            .iter_mut()
            .zip(self.decoder.biases.iter_mut())
        {
            t.push(w.as_mut_slice());
            t.push(b.as_mut_slice());
        }
        t.push(self.decoder.out_weight.as_mut_slice());
        t.push(self.decoder.out_bias.as_mut_slice());
        t
    }
}

/// `(W_0, b_0, …), (Ŵ_1, b̂_1, …, Ŵ_0, b̂_0)` drawn from `rng`.
pub fn init_params(dims: &ModelDims, rng: &mut Rng) -> (EncoderParams, DecoderParams) {
    let p = AutoencoderParams::init(dims, rng);
    (p.encoder, p.decoder)
}

fn layer(w: &Matrix, b: &Vector, input: &[f64]) -> Result<Vector> {
    let mut z = w.matvec(input)?;
    for (zi, bi) in z.iter_mut().zip(b.iter()) {
        *zi += bi;
    }
    Ok(z)
}

/// Hidden representations `h_0..h_L` of `x`.
pub fn encode(x: &[f64], enc: &EncoderParams, activation: Activation) -> Result<Vec<Vector>> {
    let mut hidden: Vec<Vector> = Vec::with_capacity(enc.weights.len());
    for (l, (w, b)) in enc.weights.iter().zip(&enc.biases).enumerate() {
        let input: &[f64] = if l == 0 { x } else { &hidden[l - 1] };
        let z = layer(w, b, input)?;
        hidden.push(activation.apply_vec(&z));
    }
    Ok(hidden)
}

/// Decoder pass from `h_L`. Returns `ĥ_0..ĥ_L` (with `ĥ_L = h_L`) and `x̂`.
pub fn decode(
    h_last: &[f64],
    dec: &DecoderParams,
    hidden_activation: Activation,
    output_activation: Activation,
) -> Result<(Vec<Vector>, Vector)> {
    let layers = dec.weights.len() + 1;
    let mut dec_hidden = vec![Vector::default(); layers];
    dec_hidden[layers - 1] = Vector::from_vec(h_last.to_vec());
    for l in (1..layers).rev() {
        let z = layer(&dec.weights[l - 1], &dec.biases[l - 1], &dec_hidden[l])?;
        dec_hidden[l - 1] = hidden_activation.apply_vec(&z);
    }
    let z = layer(&dec.out_weight, &dec.out_bias, &dec_hidden[0])?;
    Ok((dec_hidden, output_activation.apply_vec(&z)))
}

/// Mean squared reconstruction error.
pub fn reconstruction_loss(x: &[f64], xhat: &[f64]) -> Result<f64> {
    mean_squared_error(x, xhat)
}

/// Everything produced by one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// What the encoder consumed (the corrupted input in denoising mode).
    pub input: Vector,
    /// What the reconstruction is scored against.
    pub target: Vector,
    /// Encoder pre-activations `z_0..z_L`.
    pub enc_pre: Vec<Vector>,
    /// `h_0..h_L`
    pub hidden: Vec<Vector>,
    /// Decoder pre-activations `ẑ_1..ẑ_L` (index `l − 1`).
    pub dec_pre: Vec<Vector>,
    /// `ĥ_0..ĥ_L`
    pub dec_hidden: Vec<Vector>,
    /// Pre-activation of the output layer.
    pub out_pre: Vector,
    /// `x̂`
    pub recon: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub dims: ModelDims,
    pub params: AutoencoderParams,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Autoencoder {
    pub fn new(dims: ModelDims, output_activation: Activation, rng: &mut Rng) -> Self {
        Autoencoder {
            dims,
            params: AutoencoderParams::init(&dims, rng),
            hidden_activation: Activation::Relu,
            output_activation,
        }
    }

    /// Encodes `input` and reconstructs it; the loss is later scored
    /// against `target`.
    pub fn forward(&self, input: &[f64], target: &[f64]) -> Result<ForwardTrace> {
        let d = &self.dims;
        if input.len() != d.input_dim {
            return Err(Error::shape("Autoencoder::forward", d.input_dim, input.len()));
        }
        if target.len() != d.input_dim {
            return Err(Error::shape("Autoencoder::forward target", d.input_dim, target.len()));
        }
        let enc = &self.params.encoder;
        let dec = &self.params.decoder;
        let layers = d.hidden_layers();

        let mut enc_pre = Vec::with_capacity(layers);
        let mut hidden: Vec<Vector> = Vec::with_capacity(layers);
        for l in 0..layers {
            let src: &[f64] = if l == 0 { input } else { &hidden[l - 1] };
            let z = layer(&enc.weights[l], &enc.biases[l], src)?;
            hidden.push(self.hidden_activation.apply_vec(&z));
            enc_pre.push(z);
        }

        let mut dec_pre = vec![Vector::default(); layers - 1];
        let mut dec_hidden = vec![Vector::default(); layers];
        dec_hidden[layers - 1] = hidden[layers - 1].clone();
        for l in (1..layers).rev() {
            let z = layer(&dec.weights[l - 1], &dec.biases[l - 1], &dec_hidden[l])?;
            dec_hidden[l - 1] = self.hidden_activation.apply_vec(&z);
            dec_pre[l - 1] = z;
        }
        let out_pre = layer(&dec.out_weight, &dec.out_bias, &dec_hidden[0])?;
        let recon = self.output_activation.apply_vec(&out_pre);

        Ok(ForwardTrace {
            input: Vector::from_vec(input.to_vec()),
            target: Vector::from_vec(target.to_vec()),
            enc_pre,
            hidden,
            dec_pre,
            dec_hidden,
            out_pre,
            recon,
        })
    }

    pub fn reconstruction_loss(&self, trace: &ForwardTrace) -> Result<f64> {
        reconstruction_loss(&trace.target, &trace.recon)
    }

    /// Gradients of `recon_weight · L_re + Σ_l ⟨upstream[l], h_l⟩` with
    /// respect to every encoder and decoder tensor.
    ///
    /// `upstream[l]` is the gradient a fusion head sends back into `h_l`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: &[Vector],
        recon_weight: f64,
    ) -> Result<AutoencoderParams> {
        let d = &self.dims;
        let layers = d.hidden_layers();
        if upstream.len() != layers {
            return Err(Error::shape("Autoencoder::backward", layers, upstream.len()));
        }
        if let Some(bad) = upstream.iter().find(|g| g.dim() != d.hidden_dim) {
            return Err(Error::shape("Autoencoder::backward upstream", d.hidden_dim, bad.dim()));
        }
        if trace.hidden.len() != layers || trace.recon.dim() != d.input_dim {
            return Err(Error::shape(
                "Autoencoder::backward trace",
                format!("{layers} layers"),
                trace.hidden.len(),
            ));
        }
        let enc = &self.params.encoder;
        let dec = &self.params.decoder;
        let mut grads = AutoencoderParams::zeros(d);
        let hact = self.hidden_activation;

        // dL_re/dx̂ = 2 (x̂ − x) / D_X, pulled through the output activation.
        let scale = recon_weight * 2.0 / d.input_dim as f64;
        let g_out: Vec<f64> = (0..d.input_dim)
            .map(|i| {
                let a = trace.recon[i];
                scale
                    * (a - trace.target[i])
                    * self.output_activation.derivative(trace.out_pre[i], a)
            })
            .collect();
        grads
            .decoder
            .out_weight
            .add_outer(1.0, &g_out, &trace.dec_hidden[0])?;
        grads.decoder.out_bias.copy_from_slice(&g_out);
        let mut g_dec = dec.out_weight.matvec_t(&g_out)?;

        // Walk the decoder back up from ĥ_0 to ĥ_L.
        for l in 1..layers {
            let z = &trace.dec_pre[l - 1];
            let a = &trace.dec_hidden[l - 1];
            let gz: Vec<f64> = (0..d.hidden_dim)
                .map(|i| g_dec[i] * hact.derivative(z[i], a[i]))
                .collect();
            grads.decoder.weights[l - 1].add_outer(1.0, &gz, &trace.dec_hidden[l])?;
            grads.decoder.biases[l - 1].copy_from_slice(&gz);
            g_dec = dec.weights[l - 1].matvec_t(&gz)?;
        }

        // ĥ_L is h_L, so the decoder's gradient joins the encoder's top layer.
        let mut g_h = g_dec;
        for l in (0..layers).rev() {
            for (g, u) in g_h.iter_mut().zip(upstream[l].iter()) {
                *g += u;
            }
            let z = &trace.enc_pre[l];
            let a = &trace.hidden[l];
            let gz: Vec<f64> = (0..d.hidden_dim)
                .map(|i| g_h[i] * hact.derivative(z[i], a[i]))
                .collect();
            let src: &[f64] = if l == 0 {
                &trace.input
            } else {
                &trace.hidden[l - 1]
            };
            grads.encoder.weights[l].add_outer(1.0, &gz, src)?;
            grads.encoder.biases[l].copy_from_slice(&gz);
            if l > 0 {
                g_h = enc.weights[l].matvec_t(&gz)?;
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(dx: usize, dh: usize, layers: usize) -> ModelDims {
        ModelDims::new(dx, dh, 3, layers, 5).unwrap()
    }

    fn random_params(d: &ModelDims, seed: u64) -> AutoencoderParams {
        let mut rng = Rng::new(seed);
        let mut p = AutoencoderParams::init(d, &mut rng);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v += 0.1 * rng.normal();
            }
        }
        p
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let d = dims(6, 4, 3);
        let a = AutoencoderParams::init(&d, &mut Rng::new(42));
        let b = AutoencoderParams::init(&d, &mut Rng::new(42));
        assert_eq!(a, b);
        assert!(a.encoder.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(a.decoder.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(a.decoder.out_bias.iter().all(|&v| v == 0.0));
        let limit = (6.0f64 / 10.0).sqrt();
        assert!(a.encoder.weights[0].as_slice().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn init_weights_are_centred() {
        // 10⁴ draws from U(−c, c): sd of the mean is c/√3/100.
        let d = ModelDims::new(100, 100, 2, 1, 1).unwrap();
        let p = AutoencoderParams::init(&d, &mut Rng::new(7));
        let w = p.encoder.weights[0].as_slice();
        assert_eq!(w.len(), 10_000);
        let c = (6.0f64 / 200.0).sqrt();
        let se = c / 3f64.sqrt() / 100.0;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn shapes_follow_dims() {
        let d = dims(6, 4, 3);
        let ae = Autoencoder::new(d, Activation::Sigmoid, &mut Rng::new(1));
        let p = &ae.params;
        assert_eq!(p.encoder.weights[0].shape(), (4, 6));
        assert_eq!(p.encoder.weights[2].shape(), (4, 4));
        assert_eq!(p.decoder.weights.len(), 2);
        assert_eq!(p.decoder.out_weight.shape(), (6, 4));
        let t = ae.forward(&[0.5; 6], &[0.5; 6]).unwrap();
        assert_eq!(t.hidden.len(), 3);
        assert_eq!(t.enc_pre.len(), 3);
        assert_eq!(t.dec_pre.len(), 2);
        assert_eq!(t.dec_hidden.len(), 3);
        assert!(t.hidden.iter().all(|h| h.dim() == 4));
        assert!(t.dec_hidden.iter().all(|h| h.dim() == 4));
        assert_eq!(t.recon.dim(), 6);
        assert_eq!(t.out_pre.dim(), 6);
        assert!(ae.forward(&[0.5; 5], &[0.5; 5]).is_err());
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let d = dims(5, 3, 3);
        let p = AutoencoderParams::zeros(&d);
        let h = encode(&[0.3, 0.1, 0.9, 0.2, 0.5], &p.encoder, Activation::Relu).unwrap();
        assert!(h.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn identity_chain_round_trips() {
        let d = ModelDims::new(4, 4, 2, 3, 1).unwrap();
        let mut p = AutoencoderParams::zeros(&d);
        for w in p.encoder.weights.iter_mut().chain(p.decoder.weights.iter_mut()) {
            *w = Matrix::identity(4);
        }
        p.decoder.out_weight = Matrix::identity(4);
        let x = [0.1, -0.7, 2.0, 0.0];
        let h = encode(&x, &p.encoder, Activation::Identity).unwrap();
        for hl in &h {
            assert_eq!(hl.as_slice(), &x);
        }
        let (_, xhat) = decode(&h[2], &p.decoder, Activation::Identity, Activation::Identity).unwrap();
        assert_eq!(xhat.as_slice(), &x);
    }

    #[test]
    fn zero_decoder_outputs() {
        let d = dims(3, 2, 2);
        let p = AutoencoderParams::zeros(&d);
        let (_, xs) = decode(&[1.0, 2.0], &p.decoder, Activation::Relu, Activation::Sigmoid).unwrap();
        assert_eq!(xs.as_slice(), &[0.5; 3]);
        let (_, xi) = decode(&[1.0, 2.0], &p.decoder, Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(xi.as_slice(), &[0.0; 3]);
        assert!(decode(&[1.0], &p.decoder, Activation::Relu, Activation::Identity).is_err());
    }

    /// Layer-by-layer scalar loops, independent of the matvec kernels.
    fn naive_forward(p: &AutoencoderParams, x: &[f64], out_act: Activation) -> (Vec<Vec<f64>>, Vec<f64>) {
        let relu = |v: f64| if v > 0.0 { v } else { 0.0 };
        let mut hidden: Vec<Vec<f64>> = Vec::new();
        for l in 0..p.encoder.weights.len() {
            let w = &p.encoder.weights[l];
            let src = if l == 0 { x.to_vec() } else { hidden[l - 1].clone() };
            let mut h = vec![0.0; w.rows()];
            for i in 0..w.rows() {
                let mut s = p.encoder.biases[l][i];
                for j in 0..w.cols() {
                    s += w.get(i, j) * src[j];
                }
                h[i] = relu(s);
            }
            hidden.push(h);
        }
        let mut cur = hidden.last().unwrap().clone();
        for l in (1..p.encoder.weights.len()).rev() {
            let w = &p.decoder.weights[l - 1];
            let mut next = vec![0.0; w.rows()];
            for i in 0..w.rows() {
                let mut s = p.decoder.biases[l - 1][i];
                for j in 0..w.cols() {
                    s += w.get(i, j) * cur[j];
                }
                next[i] = relu(s);
            }
            cur = next;
        }
        let w = &p.decoder.out_weight;
        let mut xhat = vec![0.0; w.rows()];
        for i in 0..w.rows() {
            let mut s = p.decoder.out_bias[i];
            for j in 0..w.cols() {
                s += w.get(i, j) * cur[j];
            }
            xhat[i] = out_act.apply(s);
        }
        (hidden, xhat)
    }

    #[test]
    fn forward_matches_naive_loops() {
        let d = dims(6, 4, 2);
        let ae = Autoencoder {
            dims: d,
            params: random_params(&d, 3),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        };
        let x = [0.1, 0.9, 0.4, 0.6, 0.0, 1.0];
        let (hidden, xhat) = naive_forward(&ae.params, &x, Activation::Sigmoid);
        let t = ae.forward(&x, &x).unwrap();
        for (a, b) in t.hidden.iter().zip(&hidden) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-14);
            }
        }
        for (u, v) in t.recon.iter().zip(&xhat) {
            assert!((u - v).abs() < 1e-14);
        }
        let h = encode(&x, &ae.params.encoder, Activation::Relu).unwrap();
        assert_eq!(h, t.hidden);
        let (dh, xr) = decode(&h[1], &ae.params.decoder, Activation::Relu, Activation::Sigmoid).unwrap();
        assert_eq!(dh, t.dec_hidden);
        assert_eq!(xr, t.recon);
    }

    #[test]
    fn reconstruction_loss_examples() {
        assert_eq!(reconstruction_loss(&[0.2, 0.7], &[0.2, 0.7]).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&[1.0; 8], &[0.0; 8]).unwrap(), 1.0);
        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let x: Vec<f64> = (0..7).map(|_| rng.uniform()).collect();
            let y: Vec<f64> = (0..7).map(|_| rng.uniform()).collect();
            let l = reconstruction_loss(&x, &y).unwrap();
            let oracle = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 7.0;
            assert!((l - oracle).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&l));
        }
    }

    #[test]
    fn no_signal_means_zero_gradient() {
        let d = dims(4, 3, 2);
        let ae = Autoencoder::new(d, Activation::Sigmoid, &mut Rng::new(2));
        let x = [0.2, 0.4, 0.6, 0.8];
        let t = ae.forward(&x, &x).unwrap();
        let zero_up = vec![Vector::zeros(3); 2];
        let g = ae.backward(&t, &zero_up, 0.0).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));

        // Perfect reconstruction: target equals x̂.
        let t2 = ae.forward(&x, &t.recon).unwrap();
        let g = ae.backward(&t2, &zero_up, 1.0).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    fn objective(ae: &Autoencoder, x: &[f64], up: &[Vector], w: f64) -> f64 {
        let t = ae.forward(x, x).unwrap();
        let mut v = w * ae.reconstruction_loss(&t).unwrap();
        for (h, u) in t.hidden.iter().zip(up) {
            v += h.iter().zip(u.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        v
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = ModelDims::new(6, 4, 3, 3, 2).unwrap();
        for seed in 0..5u64 {
            let mut rng = Rng::new(100 + seed);
            let mut ae = Autoencoder {
                dims: d,
                params: random_params(&d, seed),
                hidden_activation: Activation::Relu,
                output_activation: Activation::Sigmoid,
            };
            let x: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
            let up: Vec<Vector> = (0..3)
                .map(|_| Vector::from_vec((0..4).map(|_| rng.normal()).collect()))
                .collect();
            let t = ae.forward(&x, &x).unwrap();
            let g = ae.backward(&t, &up, 0.7).unwrap();
            let analytic: Vec<Vec<f64>> = g.tensors().iter().map(|t| t.to_vec()).collect();
            let eps = 1e-4;
            for (ti, grad_t) in analytic.iter().enumerate() {
                for k in 0..grad_t.len() {
                    let orig = ae.params.tensors()[ti][k];
                    ae.params.tensors_mut()[ti][k] = orig + eps;
                    let fp = objective(&ae, &x, &up, 0.7);
                    ae.params.tensors_mut()[ti][k] = orig - eps;
                    let fm = objective(&ae, &x, &up, 0.7);
                    ae.params.tensors_mut()[ti][k] = orig;
                    let numeric = (fp - fm) / (2.0 * eps);
                    let a = grad_t[k];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                    assert!(rel < 1e-4, "seed {seed} tensor {ti} entry {k}: {a} vs {numeric}");
                }
            }
        }
    }

    #[test]
    fn backward_rejects_bad_upstream() {
        let d = dims(4, 3, 2);
        let ae = Autoencoder::new(d, Activation::Sigmoid, &mut Rng::new(2));
        let t = ae.forward(&[0.1; 4], &[0.1; 4]).unwrap();
        assert!(ae.backward(&t, &[Vector::zeros(3)], 1.0).is_err());
        assert!(ae.backward(&t, &[Vector::zeros(3), Vector::zeros(2)], 1.0).is_err());
    }
}
