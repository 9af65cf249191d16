//! Denoising networks: the additive U-Net, its pseudo-additive baseline and DnCNN.
//!
//! All three share one parameter container ([`ParamSet`]) and are evaluated
//! through the [`Ops`] trait, so the same forward code drives training on a
//! [`Tape`](crate::tensor::Tape) and inference on plain tensors.
//!
//! Every convolution keeps the spatial size (stride 1, `k / 2` zero padding)
//! and every intermediate feature map in the U-Nets has exactly `channels`
//! channels.

mod checkpoint;
mod config;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use config::{ModelConfig, Variant};
pub use params::ParamSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{softplus, Eager, Ops, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvSlot {
    weight: usize,
    bias: usize,
    kernel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BlockSlot {
    conv1: ConvSlot,
    conv2: ConvSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Layout {
    UNet {
        stem: ConvSlot,
        encoder: Vec<BlockSlot>,
        decoder: Vec<BlockSlot>,
        gates: Vec<usize>,
        head: ConvSlot,
    },
    DnCnn {
        layers: Vec<ConvSlot>,
    },
}

/// How the additive U-Net forward pass is run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardOptions {
    /// `(gate index, alpha)` pairs replacing `softplus(beta_j)` with a fixed value.
    pub gate_overrides: Vec<(usize, f64)>,
    /// Replaces the subtractive encoder update with `x_{i+1} = r_i`.
    pub disable_subtraction: bool,
}

impl ForwardOptions {
    pub fn with_gate(mut self, gate: usize, alpha: f64) -> Self {
        self.gate_overrides.push((gate, alpha));
        self
    }

    fn override_for(&self, gate: usize) -> Option<f64> {
        self.gate_overrides
            .iter()
            .rev()
            .find(|(g, _)| *g == gate)
            .map(|(_, a)| *a)
    }
}

/// Intermediate values of a U-Net forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<V> {
    pub output: V,
    /// Encoder outputs `r_1..r_L` (raw activations for the pseudo-additive variant).
    pub residuals: Vec<V>,
    /// Encoder states `x_0..x_L`.
    pub encoder_states: Vec<V>,
    /// Decoder states `u_0..u_L`.
    pub decoder_states: Vec<V>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
    layout: Layout,
}

impl Model {
    /// Builds a model with deterministic uniform fan-in initialisation
    /// (`bound = 1/sqrt(fan_in)`) drawn from `config.seed`. Gate
    /// pre-activations start at 0, i.e. `alpha = ln 2`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed);
        let mut params = ParamSet::default();
        let mut conv = |params: &mut ParamSet, name: &str, cin: usize, cout: usize, k: usize| {
            let bound = 1.0 / ((cin * k * k) as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            let w = Tensor::new([cout, cin, k, k], draw(cout * cin * k * k)).expect("shape");
            let b = Tensor::new([cout], draw(cout)).expect("shape");
            ConvSlot {
                weight: params.push(format!("{name}.weight"), w),
                bias: params.push(format!("{name}.bias"), b),
                kernel: k,
            }
        };
        let c = config.channels;
        let layout = match config.variant {
            Variant::RealAdditive | Variant::PseudoAdditive => {
                let l = config.depth;
                let stem = conv(&mut params, "stem", 1, c, 3);
                let mut block = |params: &mut ParamSet, name: String, k: usize| BlockSlot {
                    conv1: conv(params, &format!("{name}.conv1"), c, c, k),
                    conv2: conv(params, &format!("{name}.conv2"), c, c, k),
                };
                let encoder = (0..l)
                    .map(|i| block(&mut params, format!("enc.{i}"), config.kernel_schedule[i]))
                    .collect();
                // Dec_j consumes r_{L-j}, so it mirrors that encoder block's kernel.
                let decoder = (0..l)
                    .map(|j| block(&mut params, format!("dec.{j}"), config.kernel_schedule[l - 1 - j]))
                    .collect();
                let gates = if config.variant == Variant::RealAdditive {
                    (0..l)
                        .map(|j| params.push(format!("gate.{j}.beta"), Tensor::scalar(0.0)))
                        .collect()
                } else {
                    Vec::new()
                };
                let head = conv(&mut params, "head", c, 1, 1);
                Layout::UNet {
                    stem,
                    encoder,
                    decoder,
                    gates,
                    head,
                }
            }
            Variant::DnCnn => {
                let d = config.depth;
                let layers = (0..d)
                    .map(|n| {
                        let cin = if n == 0 { 1 } else { c };
                        let cout = if n == d - 1 { 1 } else { c };
                        conv(&mut params, &format!("layer.{n}"), cin, cout, 3)
                    })
                    .collect();
                Layout::DnCnn { layers }
            }
        };
        params.set_requires_grad(true);
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    /// Rebuilds a model around existing parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut model = Self::new(config)?;
        if model.params.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((name, expected), (got_name, got)) in model.params.iter().zip(params.iter()) {
            if name != got_name || expected.shape() != got.shape() {
                return Err(Error::Format(format!(
                    "parameter mismatch: expected `{name}` {:?}, found `{got_name}` {:?}",
                    expected.shape(),
                    got.shape()
                )));
            }
        }
        model.params = params;
        model.params.set_requires_grad(true);
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_gates(&self) -> usize {
        match &self.layout {
            Layout::UNet { gates, .. } => gates.len(),
            Layout::DnCnn { .. } => 0,
        }
    }

    /// Learned skip weights `alpha_j = softplus(beta_j)`, `j = 0..L-1`.
    pub fn gate_values(&self) -> Result<Vec<f64>> {
        match &self.layout {
            Layout::UNet { gates, .. } if !gates.is_empty() => gates
                .iter()
                .map(|&g| self.params.tensor(g).item().map(softplus))
                .collect(),
            _ => Err(Error::InvalidArgument(format!(
                "{} has no learnable skip gates",
                self.config.model_id()
            ))),
        }
    }

    /// Names of the convolution weights, in network order.
    pub fn conv_layers(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|(_, t)| t.shape().len() == 4)
            .map(|(n, _)| n.strip_suffix(".weight").unwrap_or(n))
            .collect()
    }

    /// First convolution of each encoder block (`enc.i.conv1`).
    pub fn encoder_layers(&self) -> Vec<String> {
        match &self.layout {
            Layout::UNet { encoder, .. } => (0..encoder.len()).map(|i| format!("enc.{i}.conv1")).collect(),
            Layout::DnCnn { .. } => Vec::new(),
        }
    }

    pub fn bind<'a, O: Ops>(&self, ops: &'a O) -> Vec<O::Value<'a>> {
        self.params.iter().map(|(_, t)| ops.param(t)).collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [_, c, h, w] = match shape {
            &[b, c, h, w] => [b, c, h, w],
            s => return Err(Error::Shape(format!("model input must be [B,1,H,W], got {s:?}"))),
        };
        if c != 1 {
            return Err(Error::Shape(format!("model input must have 1 channel, got {c}")));
        }
        let k = self.config.max_kernel();
        if h < k || w < k {
            return Err(Error::Shape(format!(
                "input {h}x{w} is smaller than the largest kernel ({k})"
            )));
        }
        Ok(())
    }

    /// Runs the model on bound parameters and returns the denoised output.
    pub fn forward_bound<'a, O: Ops>(
        &self,
        ops: &'a O,
        bound: &[O::Value<'a>],
        x: O::Value<'a>,
        opts: &ForwardOptions,
    ) -> Result<O::Value<'a>> {
        match self.config.variant {
            Variant::RealAdditive => Ok(self.trace_real_additive(ops, bound, x, opts)?.output),
            Variant::PseudoAdditive => Ok(self.trace_pseudo_additive(ops, bound, x)?.output),
            Variant::DnCnn => self.run_dncnn(ops, bound, x),
        }
    }

    /// Tape-free inference on a `[B,1,H,W]` tensor.
    pub fn denoise(&self, x: &Tensor) -> Result<Tensor> {
        self.denoise_with(x, &ForwardOptions::default())
    }

    pub fn denoise_with(&self, x: &Tensor, opts: &ForwardOptions) -> Result<Tensor> {
        let bound = self.bind(&Eager);
        self.forward_bound(&Eager, &bound, x.detached(), opts)
    }

    /// Subtractive encoder, gated additive decoder:
    ///
    /// ```text
    /// x_0 = stem(x)
    /// r_i = Enc_i(x_{i-1}),  x_i = x_{i-1} - r_i          i = 1..L
    /// u_0 = x_L
    /// u_{j+1} = Dec_j(u_j + alpha_j * r_{L-j})             j = 0..L-1
    /// y = head(u_L)
    /// ```
    pub fn trace_real_additive<'a, O: Ops>(
        &self,
        ops: &'a O,
        bound: &[O::Value<'a>],
        x: O::Value<'a>,
        opts: &ForwardOptions,
    ) -> Result<ForwardTrace<O::Value<'a>>> {
        let Layout::UNet {
            stem,
            encoder,
            decoder,
            gates,
            head,
        } = &self.layout
        else {
            return Err(self.wrong_variant("real-additive"));
        };
        if gates.is_empty() {
            return Err(self.wrong_variant("real-additive"));
        }
        self.check_input(&ops.shape(&x))?;
        if let Some((g, _)) = opts.gate_overrides.iter().find(|(g, _)| *g >= gates.len()) {
            return Err(Error::InvalidArgument(format!(
                "gate index {g} out of range for {} gates",
                gates.len()
            )));
        }
        let l = encoder.len();

        let x0 = conv(ops, bound, stem, &x)?;
        let mut encoder_states = vec![x0.clone()];
        let mut residuals = Vec::with_capacity(l);
        let mut state = x0;
        for enc in encoder {
            let r = block(ops, bound, enc, &state)?;
            state = if opts.disable_subtraction {
                r.clone()
            } else {
                ops.sub(&state, &r)?
            };
            residuals.push(r);
            encoder_states.push(state.clone());
        }

        let mut u = state;
        let mut decoder_states = vec![u.clone()];
        for (j, dec) in decoder.iter().enumerate() {
            let alpha = match opts.override_for(j) {
                Some(a) => ops.constant(Tensor::scalar(a)),
                None => ops.softplus(&bound[gates[j]]),
            };
            let skip = ops.scalar_mul(&alpha, &residuals[l - 1 - j])?;
            let fused = ops.add(&u, &skip)?;
            u = block(ops, bound, dec, &fused)?;
            decoder_states.push(u.clone());
        }
        let output = conv(ops, bound, head, &u)?;
        Ok(ForwardTrace {
            output,
            residuals,
            encoder_states,
            decoder_states,
        })
    }

    /// Encoder activations feed forward directly (`a_i = Enc_i(a_{i-1})`) and
    /// are added into the decoder with unit weight:
    /// `u_{j+1} = Dec_j(u_j + a_{L-j})`, `u_0 = a_L`.
    pub fn trace_pseudo_additive<'a, O: Ops>(
        &self,
        ops: &'a O,
        bound: &[O::Value<'a>],
        x: O::Value<'a>,
    ) -> Result<ForwardTrace<O::Value<'a>>> {
        let Layout::UNet {
            stem,
            encoder,
            decoder,
            head,
            ..
        } = &self.layout
        else {
            return Err(self.wrong_variant("U-Net"));
        };
        self.check_input(&ops.shape(&x))?;
        let l = encoder.len();
        let mut a = conv(ops, bound, stem, &x)?;
        let mut encoder_states = vec![a.clone()];
        let mut activations = Vec::with_capacity(l);
        for enc in encoder {
            a = block(ops, bound, enc, &a)?;
            activations.push(a.clone());
            encoder_states.push(a.clone());
        }
        let mut u = a;
        let mut decoder_states = vec![u.clone()];
        for (j, dec) in decoder.iter().enumerate() {
            let fused = ops.add(&u, &activations[l - 1 - j])?;
            u = block(ops, bound, dec, &fused)?;
            decoder_states.push(u.clone());
        }
        let output = conv(ops, bound, head, &u)?;
        Ok(ForwardTrace {
            output,
            residuals: activations,
            encoder_states,
            decoder_states,
        })
    }

    /// `y = x - noise(x)` where `noise` is a plain conv/ReLU stack.
    fn run_dncnn<'a, O: Ops>(&self, ops: &'a O, bound: &[O::Value<'a>], x: O::Value<'a>) -> Result<O::Value<'a>> {
        let Layout::DnCnn { layers } = &self.layout else {
            return Err(self.wrong_variant("DnCNN"));
        };
        self.check_input(&ops.shape(&x))?;
        let (last, hidden) = layers.split_last().expect("validated depth >= 2");
        let mut h = x.clone();
        for layer in hidden {
            h = ops.relu(&conv(ops, bound, layer, &h)?);
        }
        let noise = conv(ops, bound, last, &h)?;
        ops.sub(&x, &noise)
    }

    fn wrong_variant(&self, wanted: &str) -> Error {
        Error::InvalidArgument(format!(
            "{} is not a {wanted} model",
            self.config.model_id()
        ))
    }
}

fn conv<'a, O: Ops>(ops: &'a O, bound: &[O::Value<'a>], slot: &ConvSlot, x: &O::Value<'a>) -> Result<O::Value<'a>> {
    ops.conv2d(x, &bound[slot.weight], &bound[slot.bias], slot.kernel / 2)
}

/// Conv -> ReLU -> Conv, no internal skip.
fn block<'a, O: Ops>(ops: &'a O, bound: &[O::Value<'a>], slot: &BlockSlot, x: &O::Value<'a>) -> Result<O::Value<'a>> {
    let h = ops.relu(&conv(ops, bound, &slot.conv1, x)?);
    conv(ops, bound, &slot.conv2, &h)
}
