//! First-order optimizers operating on full-batch gradients.

use alloc::format;

use crate::error::{Error, Result};
use crate::net::mlp::{Gradients, Mlp};

/// Update rule for one full-batch step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    /// Bias-corrected Adam.
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Optimizer {
    /// Adam with default moment decay and the given learning rate.
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        match *self {
            Optimizer::Sgd { lr } => {
                if !(lr.is_finite() && lr > 0.0) {
                    return bad(format!("sgd learning rate {lr} must be positive"));
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                if !(lr.is_finite() && lr > 0.0) {
                    return bad(format!("adam learning rate {lr} must be positive"));
                }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return bad(format!("adam betas ({beta1}, {beta2}) must lie in [0, 1)"));
                }
                if !(eps.is_finite() && eps > 0.0) {
                    return bad(format!("adam epsilon {eps} must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Moment estimates carried between steps. SGD keeps none; Adam allocates
/// its moments lazily on the first step.
#[derive(Debug, Clone, Default)]
pub struct OptimState {
    t: u64,
    m: Option<Gradients>,
    v: Option<Gradients>,
}

impl OptimState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Applies one optimizer step in place.
///
/// Rejects non-finite gradients before touching the weights and non-finite
/// weights after the update, so a diverging run stops at the step that
/// diverged instead of training on garbage.
pub fn step(
    mlp: &mut Mlp,
    grads: &Gradients,
    state: &mut OptimState,
    optimizer: &Optimizer,
) -> Result<()> {
    optimizer.validate()?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }

    match *optimizer {
        Optimizer::Sgd { lr } => {
            let (weights, biases) = mlp.weights_mut();
            for (params, g) in weights
                .iter_mut()
                .chain(biases.iter_mut())
                .zip(grads.weights.iter().chain(grads.biases.iter()))
            {
                if params.len() != g.len() {
                    return Err(Error::DimensionMismatch {
                        context: "gradient layer width",
                        expected: params.len(),
                        actual: g.len(),
                    });
                }
                for (p, gi) in params.iter_mut().zip(g) {
                    *p -= lr * gi;
                }
            }
            state.t += 1;
        }
        Optimizer::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            if state.m.is_none() {
                state.m = Some(Gradients::zeros_like(mlp));
                state.v = Some(Gradients::zeros_like(mlp));
            }
            let m = state.m.as_mut().expect("just initialized");
            let v = state.v.as_mut().expect("just initialized");
            let t = state.t + 1;
            let bc1 = 1.0 - libm::pow(beta1, t as f64);
            let bc2 = 1.0 - libm::pow(beta2, t as f64);
            let (weights, biases) = mlp.weights_mut();
            for (((params, g), mi), vi) in weights
                .iter_mut()
                .chain(biases.iter_mut())
                .zip(grads.weights.iter().chain(grads.biases.iter()))
                .zip(m.weights.iter_mut().chain(m.biases.iter_mut()))
                .zip(v.weights.iter_mut().chain(v.biases.iter_mut()))
            {
                if params.len() != g.len() {
                    return Err(Error::DimensionMismatch {
                        context: "gradient layer width",
                        expected: params.len(),
                        actual: g.len(),
                    });
                }
                for (((p, &gi), mij), vij) in
                    params.iter_mut().zip(g).zip(mi.iter_mut()).zip(vi.iter_mut())
                {
                    *mij = beta1 * *mij + (1.0 - beta1) * gi;
                    *vij = beta2 * *vij + (1.0 - beta2) * gi * gi;
                    let mhat = *mij / bc1;
                    let vhat = *vij / bc2;
                    *p -= lr * mhat / (libm::sqrt(vhat) + eps);
                }
            }
            state.t = t;
        }
    }

    let finite = {
        let (weights, biases) = mlp.weights_mut();
        weights
            .iter()
            .chain(biases.iter())
            .all(|v| v.iter().all(|p| p.is_finite()))
    };
    if !finite {
        return Err(Error::NonFinite("updated weights"));
    }
    Ok(())
}
