//! Network assembly and the three detector architectures.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerSpec};
use super::loss::argmax;
use super::optim::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp,
    Cnn,
    Resnet,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Mlp, Architecture::Cnn, Architecture::Resnet];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Cnn => "cnn",
            Architecture::Resnet => "resnet",
        }
    }

    /// `(channels, length)` of the per-symbol input tensor.
    pub fn input_shape(self) -> (usize, usize) {
        match self {
            Architecture::Mlp => (2, 1),
            Architecture::Cnn | Architecture::Resnet => (1, 2),
        }
    }

    pub fn layer_specs(self, q: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        match self {
            Architecture::Mlp => vec![
                Dense { d_in: 2, d_out: 128 },
                Relu,
                Dense { d_in: 128, d_out: 64 },
                Relu,
                Dense { d_in: 64, d_out: q },
            ],
            Architecture::Cnn => vec![
                Conv1d { c_in: 1, c_out: 32, kernel: 3, stride: 1 },
                Relu,
                Conv1d { c_in: 32, c_out: 64, kernel: 3, stride: 1 },
                Relu,
                MaxPool1d { factor: 2 },
                Flatten,
                Dense { d_in: 64, d_out: 128 },
                Relu,
                Dense { d_in: 128, d_out: 64 },
                Relu,
                Dense { d_in: 64, d_out: q },
            ],
            Architecture::Resnet => vec![
                Conv1d { c_in: 1, c_out: 64, kernel: 3, stride: 1 },
                Relu,
                Residual { c_in: 64, c_out: 64, stride: 2 },
                Residual { c_in: 64, c_out: 128, stride: 2 },
                Residual { c_in: 128, c_out: 256, stride: 2 },
                Residual { c_in: 256, c_out: 512, stride: 2 },
                Flatten,
                Dense { d_in: 512, d_out: 256 },
                Relu,
                Dense { d_in: 256, d_out: 128 },
                Relu,
                Dense { d_in: 128, d_out: 64 },
                Relu,
                Dense { d_in: 64, d_out: 32 },
                Relu,
                Dense { d_in: 32, d_out: q },
            ],
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Architecture::Mlp),
            "cnn" => Ok(Architecture::Cnn),
            "resnet" => Ok(Architecture::Resnet),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Ordered layer stack producing `Q` logits per sample; softmax is applied
/// by the loss and by [`NetworkModel::probabilities`].
#[derive(Debug, Clone)]
pub struct NetworkModel {
    arch: Architecture,
    q: usize,
    layers: Vec<Layer>,
}

fn check_order(q: usize) -> Result<()> {
    if q == 4 || q == 16 {
        Ok(())
    } else {
        Err(Error::Config(format!("detector networks support Q = 4 or 16, got {q}")))
    }
}

impl NetworkModel {
    pub fn build(arch: Architecture, q: usize, rng: &mut Rng) -> Result<Self> {
        check_order(q)?;
        let specs = arch.layer_specs(q);
        Self::check_shapes(arch.input_shape(), &specs, q)?;
        let layers = specs.iter().map(|s| Layer::from_spec(s, rng)).collect();
        Ok(NetworkModel { arch, q, layers })
    }

    /// Shapes `(channels, length)` after the input and after every layer.
    pub fn shape_trace(&self) -> Vec<(usize, usize)> {
        let mut shape = self.arch.input_shape();
        let mut trace = vec![shape];
        for l in &self.layers {
            shape = Layer::out_shape(&l.spec(), shape).expect("validated at build");
            trace.push(shape);
        }
        trace
    }

    fn check_shapes(input: (usize, usize), specs: &[LayerSpec], q: usize) -> Result<()> {
        let mut shape = input;
        for (i, s) in specs.iter().enumerate() {
            shape = Layer::out_shape(s, shape)
                .ok_or_else(|| Error::InvalidDimension(format!("layer {i} ({s:?}) rejects input {shape:?}")))?;
        }
        if shape != (q, 1) {
            return Err(Error::InvalidDimension(format!("network ends at {shape:?}, expected ({q}, 1)")));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(Vec::len).sum()
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        for l in &mut self.layers {
            l.visit_params(f);
        }
    }

    /// Parameter buffers in declaration order.
    pub fn parameters(&self) -> Vec<Vec<f64>> {
        let mut copy = self.clone();
        let mut out = Vec::new();
        copy.visit(&mut |p, _| out.push(p.to_vec()));
        out
    }

    pub fn gradients(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit(&mut |_, g| out.push(g.to_vec()));
        out
    }

    pub fn set_parameters(&mut self, params: &[Vec<f64>]) -> Result<()> {
        let mut shapes = Vec::new();
        self.visit(&mut |p, _| shapes.push(p.len()));
        if shapes.len() != params.len() || shapes.iter().zip(params).any(|(&n, p)| n != p.len()) {
            return Err(Error::InvalidDimension("parameter buffers do not match the architecture".into()));
        }
        let mut i = 0;
        self.visit(&mut |p, _| {
            p.copy_from_slice(&params[i]);
            i += 1;
        });
        Ok(())
    }

    pub fn fill_parameters(&mut self, value: f64) {
        self.visit(&mut |p, _| p.fill(value));
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, g| g.fill(0.0));
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// Packs `[Re, Im]` rows into the architecture's input tensor.
    pub fn input_tensor(&self, features: &[[f64; 2]]) -> Array3<f64> {
        let (c, l) = self.arch.input_shape();
        let flat: Vec<f64> = features.iter().flat_map(|f| f.iter().copied()).collect();
        Array3::from_shape_vec((features.len(), c, l), flat).expect("two features per sample")
    }

    fn logits_of(y: Array3<f64>) -> Array2<f64> {
        let (batch, q, _) = y.dim();
        y.into_shape_with_order((batch, q)).expect("standard layout")
    }

    /// Training forward pass; caches activations for [`Self::backward`].
    pub fn forward(&mut self, features: &[[f64; 2]]) -> Result<Array2<f64>> {
        let mut x = self.input_tensor(features);
        for l in &mut self.layers {
            x = l.forward(&x)?;
        }
        Ok(Self::logits_of(x))
    }

    /// Accumulates parameter gradients for `d loss / d logits`.
    pub fn backward(&mut self, grad_logits: &Array2<f64>) {
        let (batch, q) = grad_logits.dim();
        let mut g = grad_logits.to_shape((batch, q, 1)).expect("standard layout").to_owned();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g);
        }
    }

    /// Logits without caching, parallel over chunks of samples.
    pub fn logits(&self, features: &[[f64; 2]]) -> Result<Array2<f64>> {
        const CHUNK: usize = 1024;
        let parts: Vec<Array2<f64>> = features
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut x = self.input_tensor(chunk);
                for l in &self.layers {
                    x = l.infer(&x)?;
                }
                Ok(Self::logits_of(x))
            })
            .collect::<Result<_>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        if views.is_empty() {
            return Ok(Array2::zeros((0, self.q)));
        }
        Ok(ndarray::concatenate(Axis(0), &views).expect("same width"))
    }

    pub fn probabilities(&self, features: &[[f64; 2]]) -> Result<Array2<f64>> {
        Ok(super::loss::softmax(&self.logits(features)?))
    }

    /// Argmax class per sample, ties to the lowest index.
    pub fn classify(&self, features: &[[f64; 2]]) -> Result<Vec<usize>> {
        Ok(self.logits(features)?.axis_iter(Axis(0)).map(argmax).collect())
    }
}

/// Adam over every parameter buffer of a model.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(config: AdamConfig) -> Self {
        Optimizer { config, states: Vec::new() }
    }

    pub fn step(&mut self, model: &mut NetworkModel, lr: f64) {
        let cfg = self.config;
        let states = &mut self.states;
        let mut i = 0;
        model.visit(&mut |p, g| {
            if states.len() <= i {
                states.push(AdamState::new(p.len()));
            }
            adam_step(p, g, &mut states[i], lr, &cfg);
            i += 1;
        });
    }
}
