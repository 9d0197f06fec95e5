//! Symmetric fully connected autoencoder with two representation heads: the
//! bottleneck activation (encoder head) and the reconstruction (decoder head).
//! Gradients are hand-derived; training is plain minibatch SGD.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, TrainingSet};
use crate::error::{Error, Result};
use crate::linalg::{affine, axpy, Matrix};
use crate::loss::{head_loss_rows, LossConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Which representation heads take part in training and decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    #[default]
    Both,
    EncoderOnly,
    DecoderOnly,
}

impl HeadMode {
    pub fn uses_encoder(self) -> bool {
        self != HeadMode::DecoderOnly
    }

    pub fn uses_decoder(self) -> bool {
        self != HeadMode::EncoderOnly
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl LayerSpec {
    /// ReLU hidden layers and a sigmoid reconstruction.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        let spec = Self {
            sizes,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `[d, h1, .., hk, .., h1, d]` from the encoder widths `[h1, .., hk]`.
    pub fn mirrored(input_dim: usize, encoder_widths: &[usize]) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(encoder_widths);
        sizes.extend(encoder_widths.iter().rev().skip(1));
        sizes.push(input_dim);
        Self::new(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sizes;
        if s.len() < 3 {
            return Err(Error::Config(format!(
                "autoencoder needs at least 3 layers, got {s:?}"
            )));
        }
        if s.contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {s:?}")));
        }
        if s.iter().ne(s.iter().rev()) {
            return Err(Error::Config(format!(
                "layer sizes must be symmetric around the bottleneck, got {s:?}"
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    /// Index into the activation list of the bottleneck layer.
    pub fn bottleneck(&self) -> usize {
        self.sizes.len() / 2
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.sizes[self.bottleneck()]
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// (out × in)
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub spec: LayerSpec,
    pub layers: Vec<Layer>,
}

/// Same shapes as [`ModelParams::layers`].
pub type Gradients = Vec<Layer>;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    /// One row per input.
    pub u_en: Matrix,
    pub u_de: Matrix,
    /// Per-layer activations, input first; present only in training mode.
    pub cache: Option<Vec<Matrix>>,
}

/// Single-input view of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub u_en: Vec<f64>,
    pub u_de: Vec<f64>,
}

impl ModelParams {
    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(spec: &LayerSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn zeros_like(&self) -> Gradients {
        self.layers
            .iter()
            .map(|l| Layer {
                weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                bias: vec![0.0; l.bias.len()],
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.as_slice().iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: &Matrix, training: bool) -> Result<ForwardOutputs> {
        let d = self.spec.input_dim();
        if x.cols() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: x.cols(),
            });
        }
        let bottleneck = self.spec.bottleneck();
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.layers.len() + 1);
        let mut current = x.clone();
        let mut u_en = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = affine(&current, &layer.weights, &layer.bias);
            let act = self.spec.activation(l);
            for v in next.as_mut_slice() {
                *v = act.apply(*v);
            }
            if training {
                acts.push(current);
            }
            if l + 1 == bottleneck {
                u_en = Some(next.clone());
            }
            current = next;
        }
        let u_de = current;
        if training {
            acts.push(u_de.clone());
        }
        Ok(ForwardOutputs {
            u_en: u_en.expect("bottleneck lies strictly inside the network"),
            u_de,
            cache: training.then_some(acts),
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Representation> {
        let out = self.forward_batch(&Matrix::from_vec(1, x.len(), x.to_vec()), false)?;
        Ok(Representation {
            u_en: out.u_en.into_vec(),
            u_de: out.u_de.into_vec(),
        })
    }

    /// Backpropagates representation gradients. `d_en` is injected at the
    /// bottleneck, `d_de` at the output; either may be absent.
    pub fn backward(
        &self,
        cache: &[Matrix],
        d_en: Option<&Matrix>,
        d_de: Option<&Matrix>,
    ) -> Gradients {
        let n_layers = self.layers.len();
        let bottleneck = self.spec.bottleneck();
        let batch = cache[0].rows();
        let mut grads = self.zeros_like();
        let mut g = match d_de {
            Some(d) => d.clone(),
            None => Matrix::zeros(batch, self.spec.input_dim()),
        };
        for l in (0..n_layers).rev() {
            if l + 1 == bottleneck {
                if let Some(d) = d_en {
                    axpy(g.as_mut_slice(), 1.0, d.as_slice());
                }
            }
            let act = self.spec.activation(l);
            let out = &cache[l + 1];
            let input = &cache[l];
            let mut delta = g;
            for (dv, &a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *dv *= act.derivative_from_output(a);
            }
            let layer = &self.layers[l];
            let gl = &mut grads[l];
            for r in 0..batch {
                let dr = delta.row(r);
                let xr = input.row(r);
                for (o, &dv) in dr.iter().enumerate() {
                    if dv != 0.0 {
                        axpy(gl.weights.row_mut(o), dv, xr);
                    }
                    gl.bias[o] += dv;
                }
            }
            if l > 0 {
                let mut prev = Matrix::zeros(batch, layer.weights.cols());
                for r in 0..batch {
                    let dr = delta.row(r);
                    let pr = prev.row_mut(r);
                    for (o, &dv) in dr.iter().enumerate() {
                        if dv != 0.0 {
                            axpy(pr, dv, layer.weights.row(o));
                        }
                    }
                }
                g = prev;
            } else {
                g = Matrix::zeros(0, 0);
            }
        }
        grads
    }

    /// `θ ← θ − lr·∇`. Non-finite gradients are rejected before anything is
    /// written.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::Dimension {
                expected: self.layers.len(),
                actual: grads.len(),
            });
        }
        for (i, (g, l)) in grads.iter().zip(&self.layers).enumerate() {
            if g.weights.shape() != l.weights.shape() || g.bias.len() != l.bias.len() {
                return Err(Error::Dimension {
                    expected: l.weights.as_slice().len() + l.bias.len(),
                    actual: g.weights.as_slice().len() + g.bias.len(),
                });
            }
            let finite = g.weights.as_slice().iter().chain(&g.bias).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteGradient { layer: i });
            }
        }
        for (g, l) in grads.iter().zip(&mut self.layers) {
            axpy(l.weights.as_mut_slice(), -learning_rate, g.weights.as_slice());
            axpy(&mut l.bias, -learning_rate, &g.bias);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Loss and gradients of the configured heads on one labelled batch.
#[derive(Debug, Clone)]
pub struct BatchStep {
    pub loss: f64,
    /// True when no head produced a contrastive signal (fewer than two
    /// normals or no abnormal in the batch).
    pub degenerate: bool,
    pub grads: Gradients,
}

pub fn batch_step(
    params: &ModelParams,
    x: &Matrix,
    labels: &[Label],
    loss: &LossConfig,
    heads: HeadMode,
) -> Result<BatchStep> {
    let n_normal = labels.iter().filter(|&&l| l == Label::Normal).count();
    let degenerate = n_normal < 2 || n_normal == labels.len();
    if degenerate {
        return Ok(BatchStep {
            loss: 0.0,
            degenerate,
            grads: params.zeros_like(),
        });
    }
    let out = params.forward_batch(x, true)?;
    let cache = out.cache.as_deref().expect("training forward keeps a cache");
    let mut total = 0.0;
    let d_en = heads.uses_encoder().then(|| {
        let (v, g) = head_loss_rows(&out.u_en, labels, loss);
        total += v.value;
        g
    });
    let d_de = heads.uses_decoder().then(|| {
        let (v, g) = head_loss_rows(&out.u_de, labels, loss);
        total += v.value;
        g
    });
    Ok(BatchStep {
        loss: total,
        degenerate,
        grads: params.backward(cache, d_en.as_ref(), d_de.as_ref()),
    })
}

/// Per-call training statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub batches: usize,
    pub skipped_batches: usize,
    /// Mean loss over non-skipped batches, one entry per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Runs `epochs` passes of shuffled minibatch SGD over `data`.
pub fn train_epochs(
    params: &mut ModelParams,
    data: &TrainingSet,
    loss: &LossConfig,
    heads: HeadMode,
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainSummary> {
    cfg.validate()?;
    loss.validate()?;
    if data.dim() != params.spec.input_dim() {
        return Err(Error::Dimension {
            expected: params.spec.input_dim(),
            actual: data.dim(),
        });
    }
    let normals = data.count_label(Label::Normal);
    let attacks = data.count_label(Label::Attack);
    if normals < 2 || attacks < 1 {
        return Err(Error::Precondition(format!(
            "training needs at least 2 normal and 1 attack example, got {normals} and {attacks}"
        )));
    }

    let mut summary = TrainSummary::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let dim = data.dim();
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut used = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut feats = Vec::with_capacity(batch.len() * dim);
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                feats.extend_from_slice(data.row(i));
                labels.push(data.labels()[i]);
            }
            let x = Matrix::from_vec(batch.len(), dim, feats);
            let step = batch_step(params, &x, &labels, loss, heads)?;
            summary.batches += 1;
            if step.degenerate {
                summary.skipped_batches += 1;
                continue;
            }
            params.apply_gradients(&step.grads, cfg.learning_rate)?;
            epoch_loss += step.loss;
            used += 1;
        }
        summary.epochs += 1;
        summary.epoch_loss.push(if used > 0 { epoch_loss / used as f64 } else { 0.0 });
    }
    Ok(summary)
}
