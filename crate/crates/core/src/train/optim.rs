//! RMSProp with decoupled-from-normalization weight decay.

use crate::error::{Error, Result};
use crate::network::NetworkState;

/// One scalar RMSProp update in f64:
///
/// `v <- alpha*v + (1-alpha)*g^2`, then
/// `p <- p - lr*(g + decay*p) / (sqrt(v) + eps)`.
///
/// The squared-gradient average sees the raw gradient; the decay term joins
/// only in the step. Factored out so tests can run the exact update rule in
/// a 64-bit shadow computation.
#[inline]
pub fn rmsprop_update(
    p: f64,
    g: f64,
    v: f64,
    lr: f64,
    decay: f64,
    alpha: f64,
    eps: f64,
) -> (f64, f64) {
    let v_new = alpha * v + (1.0 - alpha) * g * g;
    let p_new = p - lr * (g + decay * p) / (v_new.sqrt() + eps);
    (p_new, v_new)
}

/// Per-parameter running mean of squared gradients, kept in f64 and aligned
/// with the state's parameter enumeration order.
#[derive(Debug, Default)]
pub struct OptimizerState {
    sq_avg: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new() -> OptimizerState {
        OptimizerState { sq_avg: Vec::new() }
    }

    /// Running averages are non-negative by construction; exposed for tests.
    pub fn sq_avg(&self) -> &[Vec<f64>] {
        &self.sq_avg
    }
}

/// Applies one RMSProp step to every learnable parameter.
///
/// Weight decay touches conv/fc weight matrices only, never biases,
/// batch-norm gamma/beta or PReLU slopes. A missing gradient buffer or any
/// non-finite gradient aborts the step before mutating anything, naming the
/// parameter.
pub fn rmsprop_step(
    state: &mut NetworkState,
    opt: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
    alpha: f64,
    eps: f64,
) -> Result<()> {
    // Validation pass: the step must be all-or-nothing.
    let mut count = 0usize;
    state.for_each_param(|slot| {
        let grad = slot
            .grad
            .as_ref()
            .ok_or_else(|| Error::MissingGrad(slot.path.clone()))?;
        if grad.len() != slot.values.len() {
            return Err(Error::ShapeMismatch {
                context: "rmsprop_step grad",
                expected: format!("{} values for `{}`", slot.values.len(), slot.path),
                actual: format!("{}", grad.len()),
            });
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(slot.path.clone()));
        }
        count += 1;
        Ok(())
    })?;

    if opt.sq_avg.is_empty() {
        // Lazily size the running averages on the first step.
        let mut lens = Vec::with_capacity(count);
        state.for_each_param(|slot| {
            lens.push(slot.values.len());
            Ok(())
        })?;
        opt.sq_avg = lens.into_iter().map(|l| vec![0.0f64; l]).collect();
    } else if opt.sq_avg.len() != count {
        return Err(Error::invalid(format!(
            "optimizer state tracks {} tensors, network has {count}",
            opt.sq_avg.len()
        )));
    }

    let mut index = 0usize;
    let sq_avg = &mut opt.sq_avg;
    state.for_each_param(|slot| {
        let v_buf = &mut sq_avg[index];
        index += 1;
        if v_buf.len() != slot.values.len() {
            return Err(Error::invalid(format!(
                "optimizer buffer for `{}` has drifted out of shape",
                slot.path
            )));
        }
        let decay = if slot.kind.decays() { weight_decay } else { 0.0 };
        let grad = slot.grad.as_ref().expect("validated above");
        for ((p, &g), v) in slot.values.iter_mut().zip(grad.iter()).zip(v_buf.iter_mut()) {
            let (np, nv) = rmsprop_update(*p as f64, g as f64, *v, lr, decay, alpha, eps);
            *p = np as f32;
            *v = nv;
        }
        Ok(())
    })
}
