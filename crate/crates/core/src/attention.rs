//! Representation-level fusion: a small self-attention scorer weights the
//! hidden layers, and one softmax head classifies the weighted context.
//!
//! ```text
//! u_l = tanh(W_s1 h_l)      e_l = w_s2·u_l      A = softmax(e)
//! C = Σ_l A_l h_l           ŷ = softmax(W_fᵀ C + b_f)
//! ```

use crate::autoencoder::{glorot_uniform, Autoencoder, AutoencoderParams, ForwardTrace, ModelDims};
use crate::balance::TradeoffState;
use crate::denoise::Corruptor;
use crate::error::{Error, Result};
use crate::model::{check_input, check_label, no_pending, OnlineClassifier, StepRecord};
use crate::numerics::{
    cross_entropy_class, dot, softmax, softmax_backward, softmax_cross_entropy_grad, Matrix, Rng,
    Vector,
};
use crate::optim::Optimizer;
use crate::params::ParamSet;
use crate::settings::ModelSettings;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    /// `W_s1`, `d_a×D_X′`.
    pub score_weight: Matrix,
    /// `w_s2`, length `d_a`.
    pub score_vector: Vector,
}

impl AttentionParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        AttentionParams {
            score_weight: Matrix::zeros(dims.attention_dim, dims.hidden_dim),
            score_vector: Vector::zeros(dims.attention_dim),
        }
    }

    pub fn init(dims: &ModelDims, rng: &mut Rng) -> Self {
        let score_weight = glorot_uniform(dims.attention_dim, dims.hidden_dim, rng);
        let score_vector = Vector::from_vec(glorot_uniform(dims.attention_dim, 1, rng).as_slice().to_vec());
        AttentionParams {
            score_weight,
            score_vector,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputHead {
    /// `W_f`, `D_X′×D_Y`.
    pub weight: Matrix,
    /// `b_f`
    pub bias: Vector,
}

impl OutputHead {
    pub fn zeros(dims: &ModelDims) -> Self {
        OutputHead {
            weight: Matrix::zeros(dims.hidden_dim, dims.output_dim),
            bias: Vector::zeros(dims.output_dim),
        }
    }
}

/// Hidden states as rows: `(L + 1)×D_X′`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStack(pub Matrix);

pub fn stack_hidden(hidden: &[Vector]) -> Result<HiddenStack> {
    if hidden.is_empty() {
        return Err(Error::InvalidInput("no hidden layers to stack".into()));
    }
    let rows: Vec<Vec<f64>> = hidden.iter().map(|h| h.as_slice().to_vec()).collect();
    Ok(HiddenStack(Matrix::from_rows(&rows)?))
}

/// Attention weights together with the `tanh` activations they came from.
fn score(stack: &HiddenStack, att: &AttentionParams) -> Result<(Vector, Vec<Vector>)> {
    let h = &stack.0;
    let mut logits = Vec::with_capacity(h.rows());
    let mut acts = Vec::with_capacity(h.rows());
    for l in 0..h.rows() {
        let mut u = att.score_weight.matvec(h.row(l))?;
        for v in u.iter_mut() {
            *v = v.tanh();
        }
        logits.push(dot(&att.score_vector, &u)?);
        acts.push(u);
    }
    Ok((softmax(&logits)?, acts))
}

/// `A ∈ Δ^L`, one weight per hidden layer.
pub fn attention_weights(stack: &HiddenStack, att: &AttentionParams) -> Result<Vector> {
    Ok(score(stack, att)?.0)
}

/// `C = Σ_l A_l h_l`
pub fn context_fuse(weights: &[f64], stack: &HiddenStack) -> Result<Vector> {
    stack.0.matvec_t(weights)
}

/// `softmax(W_fᵀ C + b_f)`
pub fn head_predict(context: &[f64], head: &OutputHead) -> Result<Vector> {
    let mut logits = head.weight.matvec_t(context)?;
    if head.bias.dim() != logits.dim() {
        return Err(Error::shape("head_predict bias", logits.dim(), head.bias.dim()));
    }
    for (z, b) in logits.iter_mut().zip(head.bias.iter()) {
        *z += b;
    }
    softmax(&logits)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGrads {
    pub autoencoder: AutoencoderParams,
    pub attention: AttentionParams,
    pub head: OutputHead,
}

fn fusion_shapes(att: &AttentionParams, head: &OutputHead) -> Vec<(usize, usize)> {
    vec![
        att.score_weight.shape(),
        (att.score_vector.dim(), 1),
        head.weight.shape(),
        (head.bias.dim(), 1),
    ]
}

fn trainable<'a>(
    ae: &'a AutoencoderParams,
    att: &'a AttentionParams,
    head: &'a OutputHead,
) -> Vec<&'a [f64]> {
    let mut t = ae.tensors();
    t.extend([
        att.score_weight.as_slice(),
        att.score_vector.as_slice(),
        head.weight.as_slice(),
        head.bias.as_slice(),
    ]);
    t
}

fn trainable_mut<'a>(
    ae: &'a mut AutoencoderParams,
    att: &'a mut AttentionParams,
    head: &'a mut OutputHead,
) -> Vec<&'a mut [f64]> {
    let mut t = ae.tensors_mut();
    t.extend([
        att.score_weight.as_mut_slice(),
        att.score_vector.as_mut_slice(),
        head.weight.as_mut_slice(),
        head.bias.as_mut_slice(),
    ]);
    t
}

impl ParamSet for AttentionGrads {
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = self.autoencoder.shapes();
        s.extend(fusion_shapes(&self.attention, &self.head));
        s
    }

    fn tensors(&self) -> Vec<&[f64]> {
        trainable(&self.autoencoder, &self.attention, &self.head)
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        trainable_mut(&mut self.autoencoder, &mut self.attention, &mut self.head)
    }
}

/// Forward quantities of the fusion head.
#[derive(Clone, Debug)]
pub struct FusionTrace {
    pub stack: HiddenStack,
    pub scores: Vec<Vector>,
    pub weights: Vector,
    pub context: Vector,
    pub yhat: Vector,
}

#[derive(Clone, Debug)]
pub struct AttentionModel {
    pub autoencoder: Autoencoder,
    pub attention: AttentionParams,
    pub head: OutputHead,
    pub tradeoff: TradeoffState,
    pub optimizer: Optimizer,
    pub corruptor: Corruptor,
    pub steps: u64,
    pending: Option<(ForwardTrace, FusionTrace)>,
}

impl AttentionModel {
    /// Parameters come from stream 0 of `seed`, corruption noise from stream 1.
    pub fn new(dims: ModelDims, settings: &ModelSettings, seed: u64) -> Result<Self> {
        dims.validate()?;
        settings.validate()?;
        let mut rng = Rng::with_stream(seed, 0);
        let autoencoder = Autoencoder::new(dims, settings.output_activation, &mut rng);
        let attention = AttentionParams::init(&dims, &mut rng);
        let head = OutputHead {
            weight: glorot_uniform(dims.hidden_dim, dims.output_dim, &mut rng),
            bias: Vector::zeros(dims.output_dim),
        };
        let optimizer = Optimizer::new(
            settings.optimizer,
            &[autoencoder.params.shapes(), fusion_shapes(&attention, &head)].concat(),
        );
        Ok(AttentionModel {
            autoencoder,
            attention,
            head,
            tradeoff: settings.tradeoff,
            optimizer,
            corruptor: Corruptor::new(settings.corruption, Rng::with_stream(seed, 1))?,
            steps: 0,
            pending: None,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.autoencoder.dims
    }

    pub fn forward(&self, input: &[f64], target: &[f64]) -> Result<(ForwardTrace, FusionTrace)> {
        let trace = self.autoencoder.forward(input, target)?;
        let stack = stack_hidden(&trace.hidden)?;
        let (weights, scores) = score(&stack, &self.attention)?;
        let context = context_fuse(&weights, &stack)?;
        let yhat = head_predict(&context, &self.head)?;
        Ok((
            trace,
            FusionTrace {
                stack,
                scores,
                weights,
                context,
                yhat,
            },
        ))
    }

    /// `a_re·L_re + a_pre·CE(y, ŷ)`. Used by gradient checks.
    pub fn objective(&self, input: &[f64], target: &[f64], y: usize, tradeoff: &TradeoffState) -> Result<f64> {
        let (trace, fusion) = self.forward(input, target)?;
        let l_re = self.autoencoder.reconstruction_loss(&trace)?;
        let l_pre = cross_entropy_class(y, &fusion.yhat)?;
        tradeoff.total_loss(l_re, l_pre)
    }

    /// Gradient of [`objective`](Self::objective). Each `h_l` receives a
    /// share through the context and a share through its attention score.
    pub fn gradients(
        &self,
        trace: &ForwardTrace,
        fusion: &FusionTrace,
        y: usize,
        tradeoff: &TradeoffState,
    ) -> Result<AttentionGrads> {
        let dims = self.dims();
        let h = &fusion.stack.0;
        let layers = h.rows();

        let mut g_out = softmax_cross_entropy_grad(y, &fusion.yhat);
        for g in g_out.iter_mut() {
            *g *= tradeoff.a_pre;
        }

        let mut head = OutputHead::zeros(dims);
        head.weight.add_outer(1.0, &fusion.context, &g_out)?;
        head.bias.copy_from_slice(&g_out);
        let g_ctx = self.head.weight.matvec(&g_out)?;

        let mut upstream: Vec<Vector> = Vec::with_capacity(layers);
        let mut g_weights = Vec::with_capacity(layers);
        for l in 0..layers {
            g_weights.push(dot(&g_ctx, h.row(l))?);
            let a = fusion.weights[l];
            upstream.push(Vector::from_vec(g_ctx.iter().map(|g| a * g).collect()));
        }
        let g_logits = softmax_backward(&fusion.weights, &g_weights);

        let mut attention = AttentionParams::zeros(dims);
        for l in 0..layers {
            let u = &fusion.scores[l];
            let gl = g_logits[l];
            for (g, ui) in attention.score_vector.iter_mut().zip(u.iter()) {
                *g += gl * ui;
            }
            let g_pre: Vec<f64> = u
                .iter()
                .zip(self.attention.score_vector.iter())
                .map(|(ui, w)| gl * w * (1.0 - ui * ui))
                .collect();
            attention.score_weight.add_outer(1.0, &g_pre, h.row(l))?;
            let back = self.attention.score_weight.matvec_t(&g_pre)?;
            for (g, b) in upstream[l].iter_mut().zip(back.iter()) {
                *g += b;
            }
        }

        let autoencoder = self.autoencoder.backward(trace, &upstream, tradeoff.a_re)?;
        Ok(AttentionGrads {
            autoencoder,
            attention,
            head,
        })
    }
}

impl ParamSet for AttentionModel {
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = self.autoencoder.params.shapes();
        s.extend(fusion_shapes(&self.attention, &self.head));
        s
    }

    fn tensors(&self) -> Vec<&[f64]> {
        trainable(&self.autoencoder.params, &self.attention, &self.head)
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        trainable_mut(&mut self.autoencoder.params, &mut self.attention, &mut self.head)
    }
}

impl OnlineClassifier for AttentionModel {
    fn input_dim(&self) -> usize {
        self.dims().input_dim
    }

    fn num_classes(&self) -> usize {
        self.dims().output_dim
    }

    fn predict(&mut self, x: &[f64]) -> Result<Vector> {
        check_input(x, self.input_dim())?;
        let input = self.corruptor.apply(x);
        let (trace, fusion) = self.forward(&input, x)?;
        let yhat = fusion.yhat.clone();
        self.pending = Some((trace, fusion));
        Ok(yhat)
    }

    fn learn(&mut self, y: usize) -> Result<StepRecord> {
        check_label(y, self.num_classes())?;
        let (trace, fusion) = self.pending.take().ok_or_else(no_pending)?;

        let l_re = self.autoencoder.reconstruction_loss(&trace)?;
        let l_pre = cross_entropy_class(y, &fusion.yhat)?;
        self.tradeoff.observe(l_re, l_pre)?;
        let total = self.tradeoff.total_loss(l_re, l_pre)?;

        let grads = self.gradients(&trace, &fusion, y, &self.tradeoff)?;
        self.optimizer.apply(
            trainable_mut(&mut self.autoencoder.params, &mut self.attention, &mut self.head),
            grads.tensors(),
        )?;
        if !self.all_finite() {
            return Err(Error::Numeric(format!(
                "parameters became non-finite at step {}",
                self.steps + 1
            )));
        }
        self.steps += 1;

        Ok(StepRecord {
            t: self.steps,
            predicted_class: fusion.yhat.argmax(),
            prediction: fusion.yhat,
            true_class: y,
            reconstruction_loss: l_re,
            prediction_loss: l_pre,
            total_loss: total,
            a_re: self.tradeoff.a_re,
            a_pre: self.tradeoff.a_pre,
            layer_losses: None,
            beta: None,
            attention: Some(fusion.weights.into_vec()),
        })
    }
}
