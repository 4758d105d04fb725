//! Multilayer perceptrons with exact reverse-mode gradients.
//!
//! The backward pass returns gradients with respect to parameters *and* to
//! the network input; adversarial training needs the latter because the
//! regression network's update flows through the residual into the critic's
//! input. Gradients are plain sums over the batch — loss normalization is
//! the caller's job via the output gradient.

mod adam;
mod baseline;

pub use adam::{adam_step, AdamConfig, AdamState, Direction};
pub use baseline::{fit_mse_baseline, BaselineConfig, MseModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    LeakyRelu { slope: f64 },
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            ActivationKind::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation. The leaky-ReLU
    /// subgradient at exactly 0 takes the slope branch (fixed tie-break so
    /// gradient checks are reproducible).
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            ActivationKind::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if let ActivationKind::LeakyRelu { slope } = self {
            if !(*slope > 0.0 && *slope < 1.0) {
                return Err(Error::param(format!(
                    "leaky-relu slope must lie in (0,1), got {slope}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: ActivationKind,
    pub has_bias: bool,
}

impl LayerSpec {
    pub fn new(in_width: usize, out_width: usize, activation: ActivationKind) -> Self {
        LayerSpec {
            in_width,
            out_width,
            activation,
            has_bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.has_bias = false;
        self
    }
}

/// Checks widths chain and activations are valid.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::param("network needs at least one layer"));
    }
    for (i, spec) in specs.iter().enumerate() {
        if spec.in_width == 0 || spec.out_width == 0 {
            return Err(Error::param(format!("layer {i} has zero width")));
        }
        spec.activation.validate()?;
        if i > 0 && specs[i - 1].out_width != spec.in_width {
            return Err(Error::shape(format!(
                "layer {i} expects {} inputs but layer {} produces {}",
                spec.in_width,
                i - 1,
                specs[i - 1].out_width
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out_width x in_width`.
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: ActivationKind,
}

/// All parameters of one perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Per-layer gradients, congruent to [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Matrix, Option<Vec<f64>>)>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| {
                    (
                        Matrix::zeros(l.weight.rows(), l.weight.cols()),
                        l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                    )
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        assert_eq!(self.layers.len(), other.layers.len());
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w = w.add(ow);
            if let (Some(b), Some(ob)) = (b.as_mut(), ob.as_ref()) {
                for (x, y) in b.iter_mut().zip(ob) {
                    *x += y;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| {
            w.is_finite() && b.as_ref().map_or(true, |b| b.iter().all(|v| v.is_finite()))
        })
    }
}

/// Pre-activations and activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    pre_activations: Vec<Matrix>,
    activations: Vec<Matrix>,
}

/// Xavier/Glorot initialization: weights uniform on
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
pub fn xavier_init(specs: &[LayerSpec], rng: &mut RngState) -> Result<MlpParams> {
    validate_specs(specs)?;
    let layers = specs
        .iter()
        .map(|spec| {
            let bound = (6.0 / (spec.in_width + spec.out_width) as f64).sqrt();
            let weight = Matrix::from_fn(spec.out_width, spec.in_width, |_, _| {
                bound * (2.0 * rng.next_f64() - 1.0)
            });
            Layer {
                weight,
                bias: spec.has_bias.then(|| vec![0.0; spec.out_width]),
                activation: spec.activation,
            }
        })
        .collect();
    Ok(MlpParams { layers })
}

impl MlpParams {
    pub fn in_width(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    /// Forward pass returning the output and a cache for [`MlpParams::backward`].
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if input.cols() != self.in_width() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                input.cols(),
                self.in_width()
            )));
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let mut pre = current.matmul_nt(&layer.weight);
            if let Some(bias) = &layer.bias {
                pre = pre.add_row_broadcast(bias);
            }
            let act = pre.map(|x| layer.activation.apply(x));
            pre_activations.push(pre);
            current = act.clone();
            activations.push(act);
        }
        let cache = ForwardCache {
            input: input.clone(),
            pre_activations,
            activations,
        };
        Ok((current, cache))
    }

    /// Forward pass without retaining a cache.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_width() {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                input.cols(),
                self.in_width()
            )));
        }
        let mut current = input.clone();
        for layer in &self.layers {
            let mut pre = current.matmul_nt(&layer.weight);
            if let Some(bias) = &layer.bias {
                pre = pre.add_row_broadcast(bias);
            }
            current = pre.map(|x| layer.activation.apply(x));
        }
        Ok(current)
    }

    /// Exact reverse-mode gradients for parameters and the network input.
    ///
    /// `output_grad` is dL/d(output), shape `batch x out_width`; the cache
    /// must come from a forward call on these parameters.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &Matrix,
    ) -> Result<(MlpGrads, Matrix)> {
        let last = cache.activations.last().unwrap();
        if output_grad.rows() != last.rows() || output_grad.cols() != last.cols() {
            return Err(Error::shape(format!(
                "output_grad is {}x{}, expected {}x{}",
                output_grad.rows(),
                output_grad.cols(),
                last.rows(),
                last.cols()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre_activations[l];
            let d_pre = upstream.zip(&pre.map(|x| layer.activation.derivative(x)), |g, d| g * d);
            let below = if l == 0 {
                &cache.input
            } else {
                &cache.activations[l - 1]
            };
            let d_weight = d_pre.matmul_tn(below);
            let d_bias = layer.bias.as_ref().map(|_| d_pre.col_sums());
            upstream = d_pre.matmul(&layer.weight);
            grads.push((d_weight, d_bias));
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, upstream))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<MlpParams> {
        let params: MlpParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::param("network needs at least one layer"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.activation.validate()?;
            if !layer.weight.is_finite() {
                return Err(Error::param(format!("layer {i} has non-finite weights")));
            }
            if let Some(bias) = &layer.bias {
                if bias.len() != layer.weight.rows() {
                    return Err(Error::shape(format!("layer {i} bias length mismatch")));
                }
            }
            if i > 0 && self.layers[i - 1].weight.rows() != layer.weight.cols() {
                return Err(Error::shape(format!("layer {i} width chain broken")));
            }
        }
        Ok(())
    }
}

/// Hidden stack for a regression network: tanh, sigmoid, then leaky-ReLU,
/// with a linear output whose bias is optional.
pub fn regressor_specs(
    input_width: usize,
    hidden_width: usize,
    slope: f64,
    output_bias: bool,
) -> Vec<LayerSpec> {
    let mut specs = vec![
        LayerSpec::new(input_width, hidden_width, ActivationKind::Tanh),
        LayerSpec::new(hidden_width, hidden_width, ActivationKind::Sigmoid),
        LayerSpec::new(hidden_width, hidden_width, ActivationKind::LeakyRelu { slope }),
        LayerSpec::new(hidden_width, 1, ActivationKind::Identity),
    ];
    if !output_bias {
        specs[3] = specs[3].without_bias();
    }
    specs
}

/// Statistics network: three leaky-ReLU hidden layers and a bias-free
/// scalar output (an output bias cannot move the divergence loss).
pub fn critic_specs(input_width: usize, hidden_width: usize, slope: f64) -> Vec<LayerSpec> {
    let lrelu = ActivationKind::LeakyRelu { slope };
    vec![
        LayerSpec::new(input_width, hidden_width, lrelu),
        LayerSpec::new(hidden_width, hidden_width, lrelu),
        LayerSpec::new(hidden_width, hidden_width, lrelu),
        LayerSpec::new(hidden_width, 1, ActivationKind::Identity).without_bias(),
    ]
}

/// One-hidden-layer noise transformer: scalar in, scalar out.
pub fn noise_transform_specs(hidden_width: usize, slope: f64) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(1, hidden_width, ActivationKind::LeakyRelu { slope }),
        LayerSpec::new(hidden_width, 1, ActivationKind::Identity),
    ]
}

#[cfg(test)]
mod tests;
