use ndarray::{Array1, Array2, Zip};

use super::{Gradients, NetworkParams};
use crate::error::{Error, Result};

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<(Array2<f64>, Array1<f64>)>,
    pub second_moment: Vec<(Array2<f64>, Array1<f64>)>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    /// Zeroed moments shaped like `params`, with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &NetworkParams, lr: f64) -> Self {
        let zeros: Vec<_> = params
            .layers()
            .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step, in place. Increments the parameter version.
pub fn update_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    opt: &mut OptimizerState,
) -> Result<()> {
    let n = params.layer_count();
    if grads.layers.len() != n || opt.first_moment.len() != n {
        return Err(Error::ShapeMismatch {
            context: "optimizer layer count",
            expected: (n, 1),
            actual: (grads.layers.len(), opt.first_moment.len()),
        });
    }
    for (layer, (gw, gb)) in params.layers().zip(&grads.layers) {
        if layer.weight.dim() != gw.dim() || layer.bias.len() != gb.len() {
            return Err(Error::ShapeMismatch {
                context: "gradient vs parameter",
                expected: layer.weight.dim(),
                actual: gw.dim(),
            });
        }
    }

    opt.step_count += 1;
    let t = opt.step_count as i32;
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = opt.lr;
    let apply = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in params
        .layers_mut()
        .zip(&grads.layers)
        .zip(opt.first_moment.iter_mut())
        .zip(opt.second_moment.iter_mut())
    {
        Zip::from(&mut layer.weight)
            .and(mw)
            .and(vw)
            .and(gw)
            .for_each(|w, m, v, &g| apply(w, m, v, g));
        Zip::from(&mut layer.bias)
            .and(mb)
            .and(vb)
            .and(gb)
            .for_each(|w, m, v, &g| apply(w, m, v, g));
    }
    params.version += 1;
    Ok(())
}
