//! First-order updates: plain online gradient descent and Adam.

use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr }
    }

    /// Adam with `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {lr}")));
        }
        if let OptimizerKind::Adam {
            beta1, beta2, eps, ..
        } = *self
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
            }
            if !(eps > 0.0) {
                return Err(Error::Config("Adam epsilon must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Optimizer state for one parameter set. Moment buffers mirror the
/// parameter tensors one-to-one; `step` is shared by all tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, shapes: &[(usize, usize)]) -> Self {
        let zeros = || -> Vec<Vec<f64>> {
            match kind {
                OptimizerKind::Sgd { .. } => Vec::new(),
                OptimizerKind::Adam { .. } => {
                    shapes.iter().map(|(r, c)| vec![0.0; r * c]).collect()
                }
            }
        };
        Optimizer {
            kind,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    pub fn for_params<P: ParamSet>(kind: OptimizerKind, params: &P) -> Self {
        Optimizer::new(kind, &params.shapes())
    }

    pub fn update<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        self.apply(params.tensors_mut(), grads.tensors())
    }

    pub fn apply(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                sgd_step(params, &grads, lr)?;
                self.step += 1;
                Ok(())
            }
            OptimizerKind::Adam { .. } => adam_step(self, params, &grads),
        }
    }
}

fn check_grads(params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("optimizer", params.len(), grads.len()));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::shape("optimizer tensor", p.len(), g.len()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
    }
    Ok(())
}

/// `p ← p − η·g` for every tensor.
pub fn sgd_step(mut params: Vec<&mut [f64]>, grads: &[&[f64]], lr: f64) -> Result<()> {
    check_grads(&params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi -= lr * gi;
        }
    }
    Ok(())
}

/// Bias-corrected Adam step.
pub fn adam_step(state: &mut Optimizer, mut params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
    let OptimizerKind::Adam {
        lr,
        beta1,
        beta2,
        eps,
    } = state.kind
    else {
        return Err(Error::Config("adam_step called on a non-Adam optimizer".into()));
    };
    check_grads(&params, grads)?;
    if state.first_moment.len() != params.len() {
        return Err(Error::shape("adam moments", state.first_moment.len(), params.len()));
    }
    for (m, p) in state.first_moment.iter().zip(&params) {
        if m.len() != p.len() {
            return Err(Error::shape("adam moment tensor", m.len(), p.len()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
        state
            .first_moment
            .iter_mut()
            .zip(state.second_moment.iter_mut()),
    ) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
