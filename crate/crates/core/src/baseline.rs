//! Multinomial logistic regression trained by online gradient descent.

use crate::error::{Error, Result};
use crate::model::{check_input, check_label, no_pending, OnlineClassifier, StepRecord};
use crate::numerics::{cross_entropy_class, softmax, softmax_cross_entropy_grad, Matrix, Vector};
use crate::optim::{Optimizer, OptimizerKind};
use crate::params::ParamSet;

/// Starts from all-zero weights, so its first prediction is uniform.
#[derive(Clone, Debug)]
pub struct LinearOgd {
    /// `D_Y×D_X`
    pub weight: Matrix,
    pub bias: Vector,
    pub optimizer: Optimizer,
    pub steps: u64,
    pending: Option<(Vector, Vector)>,
}

impl LinearOgd {
    pub fn new(input_dim: usize, classes: usize, lr: f64) -> Result<Self> {
        if input_dim == 0 || classes == 0 {
            return Err(Error::Config("linear model needs non-empty input and output".into()));
        }
        let kind = OptimizerKind::sgd(lr);
        kind.validate()?;
        let weight = Matrix::zeros(classes, input_dim);
        let bias = Vector::zeros(classes);
        let optimizer = Optimizer::new(kind, &[weight.shape(), (classes, 1)]);
        Ok(LinearOgd {
            weight,
            bias,
            optimizer,
            steps: 0,
            pending: None,
        })
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vector> {
        let mut z = self.weight.matvec(x)?;
        for (zi, b) in z.iter_mut().zip(self.bias.iter()) {
            *zi += b;
        }
        softmax(&z)
    }
}

impl ParamSet for LinearOgd {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![self.weight.shape(), (self.bias.dim(), 1)]
    }

    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weight.as_slice(), self.bias.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), self.bias.as_mut_slice()]
    }
}

impl OnlineClassifier for LinearOgd {
    fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    fn predict(&mut self, x: &[f64]) -> Result<Vector> {
        check_input(x, self.input_dim())?;
        let p = self.probabilities(x)?;
        self.pending = Some((Vector::from_vec(x.to_vec()), p.clone()));
        Ok(p)
    }

    fn learn(&mut self, y: usize) -> Result<StepRecord> {
        check_label(y, self.num_classes())?;
        let (x, p) = self.pending.take().ok_or_else(no_pending)?;
        let loss = cross_entropy_class(y, &p)?;
        let g_z = softmax_cross_entropy_grad(y, &p);
        let mut g_w = Matrix::zeros(self.weight.rows(), self.weight.cols());
        g_w.add_outer(1.0, &g_z, &x)?;
        let LinearOgd {
            weight,
            bias,
            optimizer,
            ..
        } = self;
        optimizer.apply(
            vec![weight.as_mut_slice(), bias.as_mut_slice()],
            vec![g_w.as_slice(), g_z.as_slice()],
        )?;
        self.steps += 1;
        Ok(StepRecord {
            t: self.steps,
            predicted_class: p.argmax(),
            prediction: p,
            true_class: y,
            reconstruction_loss: 0.0,
            prediction_loss: loss,
            total_loss: loss,
            a_re: 0.0,
            a_pre: 1.0,
            ..Default::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_never_moves() {
        let mut m = LinearOgd::new(3, 2, 0.0).unwrap();
        for i in 0..20 {
            let r = m.step(&[0.1 * i as f64, 0.5, 1.0], i % 2).unwrap();
            assert_eq!(r.predicted_class, 0);
        }
        assert!(m.weight.as_slice().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn learns_a_separable_rule() {
        let mut m = LinearOgd::new(2, 2, 0.5).unwrap();
        let mut rng = crate::numerics::Rng::new(3);
        let mut late_correct = 0;
        for t in 0..2000 {
            let y = rng.below(2);
            let x = [if y == 0 { 0.2 } else { 0.8 } + 0.05 * rng.normal(), rng.uniform()];
            let r = m.step(&x, y).unwrap();
            if t >= 1000 && r.predicted_class == y {
                late_correct += 1;
            }
        }
        assert!(late_correct >= 950, "{late_correct}");
    }
}
