use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Height x width x channels of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape3 {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvType {
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolType {
    Max,
    Avg,
}

/// How a layer's weights are drawn before training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// i.i.d. Normal(mean, std^2) weights, biases set to `mean`.
    Gaussian { mean: f64, std: f64 },
    /// Uniform on +-sqrt(6 / (fan_in + fan_out)), zero biases.
    Xavier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        filter: usize,
        stride: usize,
        padding: ConvType,
        input: Shape3,
        output: Shape3,
        init: Init,
    },
    Pool {
        kernel: usize,
        stride: usize,
        kind: PoolType,
        input: Shape3,
        output: Shape3,
    },
    Flatten {
        input: Shape3,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        relu: bool,
        init: Init,
    },
}

impl LayerSpec {
    /// Number of scalar values this layer emits per sample.
    pub fn output_len(&self) -> usize {
        match self {
            LayerSpec::Conv { output, .. } | LayerSpec::Pool { output, .. } => output.len(),
            LayerSpec::Flatten { input } => input.len(),
            LayerSpec::Dense { outputs, .. } => *outputs,
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            LayerSpec::Conv { input, .. }
            | LayerSpec::Pool { input, .. }
            | LayerSpec::Flatten { input } => input.len(),
            LayerSpec::Dense { inputs, .. } => *inputs,
        }
    }

    /// (weight count, bias count) for trainable layers.
    pub fn param_shape(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Conv {
                filter,
                input,
                output,
                ..
            } => Some((
                filter * filter * input.channels * output.channels,
                output.channels,
            )),
            LayerSpec::Dense {
                inputs, outputs, ..
            } => Some((inputs * outputs, *outputs)),
            _ => None,
        }
    }

    /// (fan_in, fan_out) as used by the Xavier bound.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Conv {
                filter,
                input,
                output,
                ..
            } => Some((
                filter * filter * input.channels,
                filter * filter * output.channels,
            )),
            LayerSpec::Dense {
                inputs, outputs, ..
            } => Some((*inputs, *outputs)),
            _ => None,
        }
    }

    pub fn init(&self) -> Option<Init> {
        match self {
            LayerSpec::Conv { init, .. } | LayerSpec::Dense { init, .. } => Some(*init),
            _ => None,
        }
    }

    fn set_init(&mut self, new: Init) {
        if let LayerSpec::Conv { init, .. } | LayerSpec::Dense { init, .. } = self {
            *init = new;
        }
    }
}

/// A decoded, shape-resolved network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape3,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Checks that adjacent layer shapes chain and that the last layer emits
    /// `num_classes` logits.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.input.len();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.input_len() != width {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs, previous layer emits {width}",
                    layer.input_len()
                )));
            }
            width = layer.output_len();
        }
        match self.layers.last() {
            Some(LayerSpec::Dense {
                outputs,
                relu: false,
                ..
            }) if *outputs == self.num_classes => Ok(()),
            _ => Err(Error::Shape(
                "network must end in a linear layer with one logit per class".into(),
            )),
        }
    }

    pub fn param_count(&self) -> u64 {
        self.layers
            .iter()
            .filter_map(LayerSpec::param_shape)
            .map(|(w, b)| (w + b) as u64)
            .sum()
    }

    /// The same architecture with every trainable layer switched to `init`.
    pub fn with_init(&self, init: Init) -> Self {
        let mut spec = self.clone();
        for layer in &mut spec.layers {
            layer.set_init(init);
        }
        spec
    }
}
