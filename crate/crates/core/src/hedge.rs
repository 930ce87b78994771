//! Output-level fusion: one softmax classifier per hidden layer, combined by
//! hedge weights that are discounted multiplicatively by each classifier's
//! loss.

use crate::autoencoder::{Autoencoder, AutoencoderParams, ForwardTrace, ModelDims};
use crate::autoencoder::glorot_uniform;
use crate::balance::TradeoffState;
use crate::denoise::Corruptor;
use crate::error::{Error, Result};
use crate::model::{check_input, check_label, no_pending, OnlineClassifier, StepRecord};
use crate::numerics::{
    cross_entropy_class, log_softmax, softmax, softmax_cross_entropy_grad, Matrix, Rng, Vector,
};
use crate::optim::Optimizer;
use crate::params::ParamSet;
use crate::settings::ModelSettings;

/// `f_l = softmax(c_l h_l + b_cl)`
#[derive(Clone, Debug, PartialEq)]
pub struct LayerClassifier {
    /// `c_l`, `D_Y×D_X′`.
    pub weight: Matrix,
    /// `b_cl`
    pub bias: Vector,
}

impl LayerClassifier {
    pub fn zeros(dims: &ModelDims) -> Self {
        LayerClassifier {
            weight: Matrix::zeros(dims.output_dim, dims.hidden_dim),
            bias: Vector::zeros(dims.output_dim),
        }
    }
}

pub fn layer_classify(h: &[f64], clf: &LayerClassifier) -> Result<Vector> {
    let mut logits = clf.weight.matvec(h)?;
    if clf.bias.dim() != logits.dim() {
        return Err(Error::shape("layer_classify bias", logits.dim(), clf.bias.dim()));
    }
    for (z, b) in logits.iter_mut().zip(clf.bias.iter()) {
        *z += b;
    }
    softmax(&logits)
}

/// Ensemble weights over the `L + 1` layer classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct HedgeState {
    pub beta: Vector,
    /// `θ0 ∈ (0, 1)`
    pub discount: f64,
    /// `ε_β`; every weight is kept at or above `ε_β / (L + 1)`.
    pub floor: f64,
}

impl HedgeState {
    /// Uniform weights `1 / (L + 1)`.
    pub fn new(layers: usize, discount: f64, floor: f64) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("hedge needs at least one layer".into()));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::Config(format!("theta0 must lie in (0, 1), got {discount}")));
        }
        if !(0.0..=1.0).contains(&floor) {
            return Err(Error::Config(format!("beta floor must lie in [0, 1], got {floor}")));
        }
        Ok(HedgeState {
            beta: Vector::filled(layers, 1.0 / layers as f64),
            discount,
            floor,
        })
    }

    pub fn min_weight(&self) -> f64 {
        self.floor / self.beta.dim() as f64
    }

    pub fn update(&mut self, losses: &[f64]) -> Result<()> {
        *self = hedge_update(self, losses)?;
        Ok(())
    }
}

/// `ŷ = Σ_l β_l f_l`
pub fn ensemble_predict(probs: &[Vector], hedge: &HedgeState) -> Result<Vector> {
    if probs.len() != hedge.beta.dim() {
        return Err(Error::shape("ensemble_predict", hedge.beta.dim(), probs.len()));
    }
    let k = probs[0].dim();
    let mut out = Vector::zeros(k);
    for (f, &b) in probs.iter().zip(hedge.beta.iter()) {
        if f.dim() != k {
            return Err(Error::shape("ensemble_predict member", k, f.dim()));
        }
        for (o, p) in out.iter_mut().zip(f.iter()) {
            *o += b * p;
        }
    }
    Ok(out)
}

/// `β_l ← β_l·θ0^{loss_l}`, renormalized, then floored at `ε_β/(L+1)`.
pub fn hedge_update(hedge: &HedgeState, losses: &[f64]) -> Result<HedgeState> {
    if losses.len() != hedge.beta.dim() {
        return Err(Error::shape("hedge_update", hedge.beta.dim(), losses.len()));
    }
    if let Some(bad) = losses.iter().find(|l| !l.is_finite() || **l < 0.0) {
        return Err(Error::InvalidInput(format!("hedge loss must be finite and >= 0, got {bad}")));
    }
    let raw: Vec<f64> = hedge
        .beta
        .iter()
        .zip(losses)
        .map(|(b, l)| b * hedge.discount.powf(*l))
        .collect();
    let total: f64 = raw.iter().sum();
    let mut beta: Vec<f64> = if total > 0.0 && total.is_finite() {
        raw.iter().map(|r| r / total).collect()
    } else {
        // Every weight underflowed; fall back to the prior.
        vec![1.0 / raw.len() as f64; raw.len()]
    };
    apply_floor(&mut beta, hedge.min_weight());
    Ok(HedgeState {
        beta: Vector::from_vec(beta),
        ..hedge.clone()
    })
}

/// Raises entries below `min` to exactly `min` and rescales the rest so the
/// total stays 1. Repeats until no rescaled entry drops under `min`.
fn apply_floor(beta: &mut [f64], min: f64) {
    if min <= 0.0 {
        return;
    }
    let n = beta.len();
    let mut clamped = vec![false; n];
    loop {
        let mut changed = false;
        for (b, c) in beta.iter_mut().zip(clamped.iter_mut()) {
            if !*c && *b < min {
                *c = true;
                *b = min;
                changed = true;
            }
        }
        if !changed {
            return;
        }
        let k = clamped.iter().filter(|c| **c).count();
        if k == n {
            beta.fill(1.0 / n as f64);
            return;
        }
        let free = 1.0 - k as f64 * min;
        let rest: f64 = beta
            .iter()
            .zip(&clamped)
            .filter(|(_, c)| !**c)
            .map(|(b, _)| b)
            .sum();
        for (b, c) in beta.iter_mut().zip(&clamped) {
            if !*c {
                *b *= free / rest;
            }
        }
    }
}

/// Gradient container matching [`HedgeModel`]'s trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct HedgeGrads {
    pub autoencoder: AutoencoderParams,
    pub classifiers: Vec<LayerClassifier>,
}

fn classifier_shapes(cls: &[LayerClassifier]) -> Vec<(usize, usize)> {
    cls.iter()
        .flat_map(|c| [c.weight.shape(), (c.bias.dim(), 1)])
        .collect()
}

fn trainable<'a>(ae: &'a AutoencoderParams, cls: &'a [LayerClassifier]) -> Vec<&'a [f64]> {
    let mut t = ae.tensors();
    for c in cls {
        t.push(c.weight.as_slice());
        t.push(c.bias.as_slice());
    }
    t
}

fn trainable_mut<'a>(
    ae: &'a mut AutoencoderParams,
    cls: &'a mut [LayerClassifier],
) -> Vec<&'a mut [f64]> {
    let mut t = ae.tensors_mut();
    for c in cls {
        t.push(c.weight.as_mut_slice());
        t.push(c.bias.as_mut_slice());
    }
    t
}

impl ParamSet for HedgeGrads {
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = self.autoencoder.shapes();
        s.extend(classifier_shapes(&self.classifiers));
        s
    }

    fn tensors(&self) -> Vec<&[f64]> {
        trainable(&self.autoencoder, &self.classifiers)
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        trainable_mut(&mut self.autoencoder, &mut self.classifiers)
    }
}

#[derive(Clone, Debug)]
struct Pending {
    trace: ForwardTrace,
    probs: Vec<Vector>,
    yhat: Vector,
}

/// Autoencoder backbone with hedge-fused per-layer classifiers.
#[derive(Clone, Debug)]
pub struct HedgeModel {
    pub autoencoder: Autoencoder,
    pub classifiers: Vec<LayerClassifier>,
    pub hedge: HedgeState,
    pub tradeoff: TradeoffState,
    pub optimizer: Optimizer,
    pub corruptor: Corruptor,
    pub steps: u64,
    pending: Option<Pending>,
}

impl HedgeModel {
    /// Parameters come from stream 0 of `seed`, corruption noise from stream 1.
    pub fn new(dims: ModelDims, settings: &ModelSettings, seed: u64) -> Result<Self> {
        dims.validate()?;
        settings.validate()?;
        let mut rng = Rng::with_stream(seed, 0);
        let autoencoder = Autoencoder::new(dims, settings.output_activation, &mut rng);
        let classifiers: Vec<LayerClassifier> = (0..dims.hidden_layers())
            .map(|_| LayerClassifier {
                weight: glorot_uniform(dims.output_dim, dims.hidden_dim, &mut rng),
                bias: Vector::zeros(dims.output_dim),
            })
            .collect();
        let hedge = HedgeState::new(dims.hidden_layers(), settings.theta0, settings.beta_floor)?;
        let optimizer = Optimizer::new(
            settings.optimizer,
            &[
                autoencoder.params.shapes(),
                classifier_shapes(&classifiers),
            ]
            .concat(),
        );
        Ok(HedgeModel {
            autoencoder,
            classifiers,
            hedge,
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

    /// Forward pass on `input`, per-layer distributions and `ŷ` under `beta`.
    pub fn forward(&self, input: &[f64], target: &[f64], beta: &HedgeState) -> Result<(ForwardTrace, Vec<Vector>, Vector)> {
        let trace = self.autoencoder.forward(input, target)?;
        let probs = trace
            .hidden
            .iter()
            .zip(&self.classifiers)
            .map(|(h, c)| layer_classify(h, c))
            .collect::<Result<Vec<_>>>()?;
        let yhat = ensemble_predict(&probs, beta)?;
        Ok((trace, probs, yhat))
    }

    /// `a_re·L_re(target, x̂) + a_pre·CE(y, ŷ)` with `β` held fixed. Used by
    /// gradient checks.
    pub fn objective(
        &self,
        input: &[f64],
        target: &[f64],
        y: usize,
        beta: &HedgeState,
        tradeoff: &TradeoffState,
    ) -> Result<f64> {
        let (trace, _, yhat) = self.forward(input, target, beta)?;
        let l_re = self.autoencoder.reconstruction_loss(&trace)?;
        let l_pre = cross_entropy_class(y, &yhat)?;
        tradeoff.total_loss(l_re, l_pre)
    }

    /// Gradient of [`objective`](Self::objective) for every trainable tensor.
    /// `L_pre` is differentiated through `ŷ = Σ β_l f_l`, so classifier `l`
    /// receives a `β_l`-scaled share.
    pub fn gradients(
        &self,
        trace: &ForwardTrace,
        probs: &[Vector],
        yhat: &Vector,
        y: usize,
        beta: &HedgeState,
        tradeoff: &TradeoffState,
    ) -> Result<HedgeGrads> {
        let dims = self.dims();
        if yhat.dim() != dims.output_dim {
            return Err(Error::shape("HedgeModel::gradients", dims.output_dim, yhat.dim()));
        }
        let share = self.responsibilities(trace, y, beta)?;
        let mut classifiers = Vec::with_capacity(probs.len());
        let mut upstream = Vec::with_capacity(probs.len());
        for (l, f) in probs.iter().enumerate() {
            let scale = tradeoff.a_pre * share[l];
            let mut g_logits = softmax_cross_entropy_grad(y, f);
            for g in g_logits.iter_mut() {
                *g *= scale;
            }
            let mut clf = LayerClassifier::zeros(dims);
            clf.weight.add_outer(1.0, &g_logits, &trace.hidden[l])?;
            clf.bias.copy_from_slice(&g_logits);
            upstream.push(self.classifiers[l].weight.matvec_t(&g_logits)?);
            classifiers.push(clf);
        }
        let autoencoder = self.autoencoder.backward(trace, &upstream, tradeoff.a_re)?;
        Ok(HedgeGrads {
            autoencoder,
            classifiers,
        })
    }
}

impl HedgeModel {
    /// `β_l f_l[y] / ŷ[y]` for every layer, evaluated in log space so that
    /// layers whose probability for `y` underflows still get their share.
    /// `∂(−ln ŷ[y])/∂z_l = share_l · (f_l − e_y)`.
    fn responsibilities(&self, trace: &ForwardTrace, y: usize, beta: &HedgeState) -> Result<Vec<f64>> {
        let mut log_terms = Vec::with_capacity(self.classifiers.len());
        for (h, clf) in trace.hidden.iter().zip(&self.classifiers) {
            let mut logits = clf.weight.matvec(h)?;
            for (z, b) in logits.iter_mut().zip(clf.bias.iter()) {
                *z += b;
            }
            log_terms.push(log_softmax(&logits)?[y]);
        }
        if beta.beta.dim() != log_terms.len() {
            return Err(Error::shape("HedgeModel::gradients beta", log_terms.len(), beta.beta.dim()));
        }
        for (t, b) in log_terms.iter_mut().zip(beta.beta.iter()) {
            *t += b.ln();
        }
        let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + log_terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
        Ok(log_terms.iter().map(|t| (t - lse).exp()).collect())
    }
}

impl ParamSet for HedgeModel {
    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut s = self.autoencoder.params.shapes();
        s.extend(classifier_shapes(&self.classifiers));
        s
    }

    fn tensors(&self) -> Vec<&[f64]> {
        trainable(&self.autoencoder.params, &self.classifiers)
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        trainable_mut(&mut self.autoencoder.params, &mut self.classifiers)
    }
}

impl OnlineClassifier for HedgeModel {
    fn input_dim(&self) -> usize {
        self.dims().input_dim
    }

    fn num_classes(&self) -> usize {
        self.dims().output_dim
    }

    fn predict(&mut self, x: &[f64]) -> Result<Vector> {
        check_input(x, self.input_dim())?;
        let input = self.corruptor.apply(x);
        let (trace, probs, yhat) = self.forward(&input, x, &self.hedge)?;
        self.pending = Some(Pending {
            trace,
            probs,
            yhat: yhat.clone(),
        });
        Ok(yhat)
    }

    fn learn(&mut self, y: usize) -> Result<StepRecord> {
        check_label(y, self.num_classes())?;
        let Pending { trace, probs, yhat } = self.pending.take().ok_or_else(no_pending)?;

        let l_re = self.autoencoder.reconstruction_loss(&trace)?;
        let layer_losses = probs
            .iter()
            .map(|f| cross_entropy_class(y, f))
            .collect::<Result<Vec<_>>>()?;
        let l_pre = cross_entropy_class(y, &yhat)?;

        let beta_used = self.hedge.clone();
        self.hedge.update(&layer_losses)?;
        self.tradeoff.observe(l_re, l_pre)?;
        let total = self.tradeoff.total_loss(l_re, l_pre)?;

        let grads = self.gradients(&trace, &probs, &yhat, y, &beta_used, &self.tradeoff)?;
        self.optimizer.apply(
            trainable_mut(&mut self.autoencoder.params, &mut self.classifiers),
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
            predicted_class: yhat.argmax(),
            prediction: yhat,
            true_class: y,
            reconstruction_loss: l_re,
            prediction_loss: l_pre,
            total_loss: total,
            a_re: self.tradeoff.a_re,
            a_pre: self.tradeoff.a_pre,
            layer_losses: Some(layer_losses),
            beta: Some(self.hedge.beta.as_slice().to_vec()),
            attention: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn small_dims() -> ModelDims {
        ModelDims::new(6, 4, 3, 3, 5).unwrap()
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let d = small_dims();
        let f = layer_classify(&[0.3, 0.1, 0.0, 2.0], &LayerClassifier::zeros(&d)).unwrap();
        for p in f.iter() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_bias_wins() {
        let d = small_dims();
        let mut c = LayerClassifier::zeros(&d);
        c.bias[0] = 10.0;
        let f = layer_classify(&[1.0; 4], &c).unwrap();
        assert!(f[0] > 0.999);
        assert!(layer_classify(&[1.0; 3], &c).is_err());
    }

    #[test]
    fn classify_is_softmax_of_affine_map() {
        let mut rng = Rng::new(2);
        let c = LayerClassifier {
            weight: glorot_uniform(3, 4, &mut rng),
            bias: Vector::from_vec(vec![0.1, -0.2, 0.3]),
        };
        let h = [0.5, 1.0, 0.0, 0.25];
        let mut z = [0.0; 3];
        for i in 0..3 {
            z[i] = c.bias[i];
            for j in 0..4 {
                z[i] += c.weight.get(i, j) * h[j];
            }
        }
        let want = softmax(&z).unwrap();
        let got = layer_classify(&h, &c).unwrap();
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ensemble_examples() {
        let f0 = Vector::from_vec(vec![0.7, 0.2, 0.1]);
        let f1 = Vector::from_vec(vec![0.1, 0.1, 0.8]);
        let mut h = HedgeState::new(2, 0.9, 0.0).unwrap();
        h.beta = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(ensemble_predict(&[f0.clone(), f1.clone()], &h).unwrap(), f0);
        h.beta = Vector::from_vec(vec![0.3, 0.7]);
        let same = ensemble_predict(&[f0.clone(), f0.clone()], &h).unwrap();
        for (a, b) in same.iter().zip(f0.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(ensemble_predict(std::slice::from_ref(&f0), &h).is_err());

        let mut rng = Rng::new(4);
        for _ in 0..20 {
            let probs: Vec<Vector> = (0..3)
                .map(|_| softmax(&[rng.normal(), rng.normal(), rng.normal(), rng.normal()]).unwrap())
                .collect();
            let b = softmax(&[rng.normal(), rng.normal(), rng.normal()]).unwrap();
            let hs = HedgeState { beta: b.clone(), discount: 0.9, floor: 0.0 };
            let y = ensemble_predict(&probs, &hs).unwrap();
            assert!((y.sum() - 1.0).abs() < 1e-12);
            for k in 0..4 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += b[l] * probs[l][k];
                }
                assert!((y[k] - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hedge_update_direct_formula() {
        let h = HedgeState::new(2, 0.5, 0.01).unwrap();
        let n = hedge_update(&h, &[1.0, 0.0]).unwrap();
        assert!((n.beta[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((n.beta[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_losses_keep_beta() {
        let mut h = HedgeState::new(3, 0.7, 0.01).unwrap();
        h.beta = Vector::from_vec(vec![0.2, 0.5, 0.3]);
        let n = hedge_update(&h, &[0.8, 0.8, 0.8]).unwrap();
        for (a, b) in n.beta.iter().zip(h.beta.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn near_one_discount_freezes_beta() {
        let mut h = HedgeState::new(3, 1.0 - 1e-12, 0.01).unwrap();
        h.beta = Vector::from_vec(vec![0.2, 0.5, 0.3]);
        let n = hedge_update(&h, &[5.0, 0.0, 2.0]).unwrap();
        for (a, b) in n.beta.iter().zip(h.beta.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn floor_is_exact_after_renormalization() {
        let mut h = HedgeState::new(4, 0.1, 0.02).unwrap();
        for _ in 0..200 {
            h.update(&[9.0, 9.0, 0.0, 3.0]).unwrap();
        }
        let min = h.min_weight();
        assert_eq!(h.beta[0], min);
        assert_eq!(h.beta[1], min);
        assert!((h.beta.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_losses_and_params() {
        let h = HedgeState::new(2, 0.5, 0.01).unwrap();
        assert!(matches!(hedge_update(&h, &[-1.0, 0.0]), Err(Error::InvalidInput(_))));
        assert!(hedge_update(&h, &[f64::NAN, 0.0]).is_err());
        assert!(hedge_update(&h, &[0.0]).is_err());
        assert!(HedgeState::new(2, 1.0, 0.01).is_err());
        assert!(HedgeState::new(2, 0.5, 1.5).is_err());
    }

    #[test]
    fn learn_requires_predict_and_valid_label() {
        let mut m = HedgeModel::new(small_dims(), &ModelSettings::default(), 1).unwrap();
        assert!(m.learn(0).is_err());
        m.predict(&[0.5; 6]).unwrap();
        assert!(matches!(m.learn(3), Err(Error::InvalidInput(_))));
        assert!(m.predict(&[0.5; 5]).is_err());
    }

    #[test]
    fn step_is_reproducible() {
        let run = || {
            let mut m = HedgeModel::new(small_dims(), &ModelSettings::default(), 17).unwrap();
            let r1 = m.step(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 2).unwrap();
            let r2 = m.step(&[0.6, 0.5, 0.4, 0.3, 0.2, 0.1], 0).unwrap();
            (r1, r2)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0.total_loss.to_bits(), b.0.total_loss.to_bits());
        assert_eq!(a.1.prediction, b.1.prediction);
        assert_eq!(a.1.total_loss.to_bits(), b.1.total_loss.to_bits());
    }

    #[test]
    fn repeated_example_lowers_prediction_loss() {
        let mut improved = 0;
        for seed in 0..100u64 {
            let mut rng = Rng::new(1000 + seed);
            let x: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
            let y = rng.below(3);
            let mut m = HedgeModel::new(small_dims(), &ModelSettings::default(), seed).unwrap();
            let first = m.step(&x, y).unwrap().prediction_loss;
            let second = m.step(&x, y).unwrap().prediction_loss;
            if second <= first {
                improved += 1;
            }
        }
        assert!(improved >= 95, "{improved}");
    }

    proptest! {
        #[test]
        fn beta_stays_on_simplex(seed in any::<u64>(), floor in 0.0f64..0.5, theta in 0.05f64..0.999) {
            let mut rng = Rng::new(seed);
            let mut h = HedgeState::new(4, theta, floor).unwrap();
            for _ in 0..1000 {
                let losses: Vec<f64> = (0..4).map(|_| 5.0 * rng.uniform()).collect();
                h.update(&losses).unwrap();
                prop_assert!((h.beta.sum() - 1.0).abs() <= 1e-9);
                prop_assert!(h.beta.iter().all(|&b| b >= h.min_weight() * (1.0 - 1e-9)));
            }
        }
    }
}
