//! Fully-connected encoder/decoder with hand-written forward and backward passes.
//!
//! The encoder maps `M -> w_1 -> ... -> w_L -> d` and the decoder mirrors it
//! back to `M`. Hidden layers use ReLU; the bottleneck and the reconstruction
//! are linear. Weights are stored `fan_in x fan_out` so a batch forward is
//! `X * W + b`.

mod adam;
pub mod checkpoint;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{EmbeddedMatrix, RngStream};

pub use adam::{update_step, OptimizerState};
pub use train::{
    batch_gradients, network_grad_check, pretrain, ClusterTerm, GradCheckReport, PretrainConfig,
};

/// Default hidden widths of the encoder.
pub const DEFAULT_WIDTHS: [usize; 3] = [512, 512, 3072];
/// Default latent dimension.
pub const DEFAULT_BOTTLENECK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in x fan_out`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        if self.activation == Activation::Relu {
            y.mapv_inplace(|v| v.max(0.0));
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    /// Bumped on every in-place update; forward caches record it.
    pub(crate) version: u64,
}

impl NetworkParams {
    /// Assemble a network from explicit layers, checking that dimensions chain
    /// and that the decoder returns to the input width.
    pub fn from_layers(encoder: Vec<Dense>, decoder: Vec<Dense>) -> Result<Self> {
        if encoder.is_empty() || decoder.is_empty() {
            return Err(Error::Empty("encoder and decoder layers"));
        }
        let all: Vec<&Dense> = encoder.iter().chain(decoder.iter()).collect();
        for (l, layer) in all.iter().enumerate() {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::ShapeMismatch {
                    context: "layer bias",
                    expected: (1, layer.fan_out()),
                    actual: (1, layer.bias.len()),
                });
            }
            if l > 0 && all[l - 1].fan_out() != layer.fan_in() {
                return Err(Error::ShapeMismatch {
                    context: "consecutive layers",
                    expected: (all[l - 1].fan_out(), layer.fan_out()),
                    actual: layer.weight.dim(),
                });
            }
        }
        let m = encoder[0].fan_in();
        let out = decoder[decoder.len() - 1].fan_out();
        if m != out {
            return Err(Error::ShapeMismatch {
                context: "decoder output vs input width",
                expected: (1, m),
                actual: (1, out),
            });
        }
        Ok(Self {
            encoder,
            decoder,
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].fan_in()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.encoder[self.encoder.len() - 1].fan_out()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn layer_count(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Multiply the embedding by `factor` while leaving every reconstruction
    /// unchanged: the last encoder layer is scaled up and the first decoder
    /// weight matrix down by the same factor.
    pub fn rescale_latent(&mut self, factor: f64) -> Result<()> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::param("latent scale factor", factor, "a positive finite factor"));
        }
        let last = self.encoder.len() - 1;
        if self.encoder[last].activation != Activation::Identity {
            return Err(Error::Format("bottleneck layer is not linear".into()));
        }
        let enc = &mut self.encoder[last];
        enc.weight *= factor;
        enc.bias *= factor;
        self.decoder[0].weight /= factor;
        self.version += 1;
        Ok(())
    }

    fn check_input(&self, x: ArrayView2<'_, f64>, width: usize, context: &'static str) -> Result<()> {
        if x.ncols() != width || x.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                context,
                expected: (x.nrows().max(1), width),
                actual: x.dim(),
            });
        }
        Ok(())
    }
}

/// Fan-in scaled uniform initialisation: `W ~ U(-sqrt(g / fan_in), sqrt(g / fan_in))`
/// with `g = 6` before a ReLU and `g = 3` before a linear output, biases zero. Weights are drawn layer by layer, row-major.
pub fn init_params(
    input_dim: usize,
    widths: &[usize],
    bottleneck: usize,
    rng: &mut RngStream,
) -> Result<NetworkParams> {
    if input_dim == 0 || bottleneck == 0 || widths.contains(&0) {
        return Err(Error::param("layer width", 0.0, "every width to be positive"));
    }
    let mut dims = vec![input_dim];
    dims.extend_from_slice(widths);
    dims.push(bottleneck);

    let mut layer = |fan_in: usize, fan_out: usize, activation| {
        let gain = if activation == Activation::Relu { 6.0 } else { 3.0 };
        let bound = (gain / fan_in as f64).sqrt();
        Dense {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.uniform_in(-bound, bound)),
            bias: Array1::zeros(fan_out),
            activation,
        }
    };
    let depth = dims.len() - 1;
    let act = |l: usize| if l + 1 == depth { Activation::Identity } else { Activation::Relu };
    let encoder: Vec<Dense> = (0..depth).map(|l| layer(dims[l], dims[l + 1], act(l))).collect();
    let decoder: Vec<Dense> = (0..depth)
        .map(|l| layer(dims[depth - l], dims[depth - l - 1], act(l)))
        .collect();
    NetworkParams::from_layers(encoder, decoder)
}

pub fn encode(params: &NetworkParams, x: ArrayView2<'_, f64>) -> Result<EmbeddedMatrix> {
    params.check_input(x, params.input_dim(), "encoder input")?;
    let mut h = x.to_owned();
    for layer in &params.encoder {
        h = layer.forward(h.view());
    }
    EmbeddedMatrix::new(h)
}

pub fn decode(params: &NetworkParams, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    params.check_input(z, params.bottleneck_dim(), "decoder input")?;
    let mut h = z.to_owned();
    for layer in &params.decoder {
        h = layer.forward(h.view());
    }
    Ok(h)
}

/// Activations of one forward pass, kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    version: u64,
    n_encoder: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Array2<f64>>,
}

impl ForwardPass {
    pub fn input(&self) -> ArrayView2<'_, f64> {
        self.acts[0].view()
    }

    pub fn embedding(&self) -> ArrayView2<'_, f64> {
        self.acts[self.n_encoder].view()
    }

    pub fn reconstruction(&self) -> ArrayView2<'_, f64> {
        self.acts[self.acts.len() - 1].view()
    }

    /// Which ReLU units are active, packed per layer. Used to detect kinks in
    /// finite-difference checks.
    pub fn relu_pattern(&self, params: &NetworkParams) -> Vec<bool> {
        params
            .layers()
            .zip(self.acts.iter().skip(1))
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, a)| a.iter().map(|v| *v > 0.0).collect::<Vec<_>>())
            .collect()
    }
}

pub fn forward(params: &NetworkParams, x: ArrayView2<'_, f64>) -> Result<ForwardPass> {
    params.check_input(x, params.input_dim(), "encoder input")?;
    let mut acts = Vec::with_capacity(params.layer_count() + 1);
    acts.push(x.to_owned());
    for layer in params.layers() {
        let next = layer.forward(acts[acts.len() - 1].view());
        acts.push(next);
    }
    Ok(ForwardPass {
        version: params.version,
        n_encoder: params.encoder.len(),
        acts,
    })
}

/// Parameter gradients, layer by layer in encoder-then-decoder order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            layers: params
                .layers()
                .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }
}

/// Backpropagate `grad_recon = dL/dxhat` through decoder and encoder, adding
/// `grad_bottleneck = dL/dz` where the encoder output enters the decoder.
///
/// The reconstruction gradient reaches both halves; the bottleneck gradient
/// only reaches the encoder.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardPass,
    grad_recon: ArrayView2<'_, f64>,
    grad_bottleneck: Option<ArrayView2<'_, f64>>,
) -> Result<Gradients> {
    if cache.version != params.version {
        return Err(Error::StaleCache {
            cached: cache.version,
            current: params.version,
        });
    }
    let recon = cache.reconstruction();
    if grad_recon.dim() != recon.dim() {
        return Err(Error::ShapeMismatch {
            context: "reconstruction gradient",
            expected: recon.dim(),
            actual: grad_recon.dim(),
        });
    }
    if let Some(gz) = grad_bottleneck {
        if gz.dim() != cache.embedding().dim() {
            return Err(Error::ShapeMismatch {
                context: "bottleneck gradient",
                expected: cache.embedding().dim(),
                actual: gz.dim(),
            });
        }
    }

    let layers: Vec<&Dense> = params.layers().collect();
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = grad_recon.to_owned();
    for l in (0..layers.len()).rev() {
        if l + 1 == cache.n_encoder {
            if let Some(gz) = grad_bottleneck {
                g += &gz;
            }
        }
        let layer = layers[l];
        if layer.activation == Activation::Relu {
            ndarray::Zip::from(&mut g)
                .and(&cache.acts[l + 1])
                .for_each(|gv, &a| {
                    if a <= 0.0 {
                        *gv = 0.0;
                    }
                });
        }
        let dw = cache.acts[l].t().dot(&g);
        let db = g.sum_axis(Axis(0));
        if l > 0 {
            g = g.dot(&layer.weight.t());
        }
        grads.push((dw, db));
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}
