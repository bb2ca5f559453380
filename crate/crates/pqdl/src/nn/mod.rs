//! Deterministic feed-forward classifier engine.
//!
//! Supports logistic regression (empty layer list), MLPs with optional
//! dropout, and small ConvNets. Every model ends in an implicit dense
//! classifier over `num_classes` with no activation. Forward and backward
//! passes are pure functions of `(spec, params, batch, mode, seeds)` and are
//! reproducible bit-for-bit on one platform.

mod conv;
mod run;

pub use conv::ConvGeom;
pub use run::{backward, backward_with_plan, forward, forward_with_plan, softmax_xent, Mode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{fnv1a_f64, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        width: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    Conv {
        kernel: usize,
        channels: usize,
        stride: usize,
        activation: Activation,
    },
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputShape {
    Flat(usize),
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl InputShape {
    pub fn dim(&self) -> usize {
        match *self {
            InputShape::Flat(d) => d,
            InputShape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }
}

/// Architecture description: the hypothesis-class half of a coding procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: InputShape,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Logistic regression: no hidden layers, just the implicit classifier.
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            input_shape: InputShape::Flat(input_dim),
            num_classes,
            layers: Vec::new(),
        }
    }

    /// MLP with `depth` hidden layers of `width` ReLU units.
    pub fn mlp(input_dim: usize, num_classes: usize, width: usize, depth: usize) -> Self {
        ModelSpec {
            input_shape: InputShape::Flat(input_dim),
            num_classes,
            layers: (0..depth)
                .map(|_| LayerSpec::Dense {
                    width,
                    activation: Activation::Relu,
                })
                .collect(),
        }
    }

    /// Same as [`ModelSpec::mlp`] but with a dropout layer after every hidden
    /// layer.
    pub fn mlp_dropout(
        input_dim: usize,
        num_classes: usize,
        width: usize,
        depth: usize,
        rate: f64,
    ) -> Self {
        let mut layers = Vec::new();
        for _ in 0..depth {
            layers.push(LayerSpec::Dense {
                width,
                activation: Activation::Relu,
            });
            layers.push(LayerSpec::Dropout { rate });
        }
        ModelSpec {
            input_shape: InputShape::Flat(input_dim),
            num_classes,
            layers,
        }
    }

    pub fn validate(&self) -> Result<Plan> {
        Plan::compile(self)
    }
}

/// Parameters of one dense or convolutional layer. Weights are stored
/// input-major: `w` has shape `in_dim x out_dim` so a batch of activations
/// multiplies it from the left.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// All trainable state of a model; shapes mirror the spec's parametric
/// layers plus the implicit final classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
}

impl ModelParams {
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w: Matrix::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data().len() + l.b.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.iter().all(|x| x.is_finite()))
    }

    /// Order-stable checksum over all parameter bits; the codec uses this to
    /// verify that encoder and decoder trained identical models.
    pub fn hash(&self) -> u64 {
        let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
        for l in &self.layers {
            acc ^= fnv1a_f64(l.w.data()).rotate_left(1);
            acc ^= fnv1a_f64(&l.b);
        }
        acc
    }
}

/// A minibatch: row-major inputs and class labels.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<u32>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<u32>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "batch has {} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One executable step of a compiled model.
#[derive(Debug, Clone)]
pub enum PlanStep {
    Dense {
        param_idx: usize,
        activation: Activation,
    },
    Conv {
        param_idx: usize,
        activation: Activation,
        geom: ConvGeom,
    },
    Dropout {
        rate: f64,
        dropout_idx: usize,
    },
    Flatten,
}

/// Shape of the tensor flowing between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }
}

/// A validated, executable form of a [`ModelSpec`]: shape-checked steps,
/// including the implicit final classifier.
#[derive(Debug, Clone)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    /// `(in_dim or patch_dim, out_dim)` per parametric layer, classifier last.
    pub param_shapes: Vec<(usize, usize)>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl Plan {
    pub fn compile(spec: &ModelSpec) -> Result<Plan> {
        if spec.num_classes < 2 {
            return Err(Error::Spec(format!(
                "need at least 2 classes, got {}",
                spec.num_classes
            )));
        }
        if spec.input_shape.dim() == 0 {
            return Err(Error::Spec("input shape has zero elements".into()));
        }
        let mut shape = match spec.input_shape {
            InputShape::Flat(d) => Shape::Flat(d),
            InputShape::Image {
                height,
                width,
                channels,
            } => {
                if height == 0 || width == 0 || channels == 0 {
                    return Err(Error::Spec("image input with a zero dimension".into()));
                }
                Shape::Image {
                    height,
                    width,
                    channels,
                }
            }
        };

        let mut steps = Vec::new();
        let mut param_shapes = Vec::new();
        let mut dropout_idx = 0;

        for (i, layer) in spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Dense { width, activation } => {
                    if width == 0 {
                        return Err(Error::Spec(format!("layer {i}: dense width 0")));
                    }
                    // A dense layer flattens image input implicitly.
                    let in_dim = shape.dim();
                    steps.push(PlanStep::Dense {
                        param_idx: param_shapes.len(),
                        activation,
                    });
                    param_shapes.push((in_dim, width));
                    shape = Shape::Flat(width);
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::Spec(format!(
                            "layer {i}: dropout rate {rate} outside [0,1)"
                        )));
                    }
                    steps.push(PlanStep::Dropout { rate, dropout_idx });
                    dropout_idx += 1;
                }
                LayerSpec::Conv {
                    kernel,
                    channels,
                    stride,
                    activation,
                } => {
                    let (h, w, c) = match shape {
                        Shape::Image {
                            height,
                            width,
                            channels,
                        } => (height, width, channels),
                        Shape::Flat(_) => {
                            return Err(Error::Spec(format!(
                                "layer {i}: conv requires image input"
                            )))
                        }
                    };
                    if kernel == 0 || channels == 0 || stride == 0 {
                        return Err(Error::Spec(format!(
                            "layer {i}: conv kernel/channels/stride must be positive"
                        )));
                    }
                    let geom = ConvGeom::same_padding(h, w, c, kernel, stride, channels);
                    steps.push(PlanStep::Conv {
                        param_idx: param_shapes.len(),
                        activation,
                        geom,
                    });
                    param_shapes.push((kernel * kernel * c, channels));
                    shape = Shape::Image {
                        height: geom.out_h,
                        width: geom.out_w,
                        channels,
                    };
                }
                LayerSpec::Flatten => {
                    steps.push(PlanStep::Flatten);
                    shape = Shape::Flat(shape.dim());
                }
            }
        }

        // Implicit classifier head, flattening whatever precedes it.
        steps.push(PlanStep::Dense {
            param_idx: param_shapes.len(),
            activation: Activation::None,
        });
        param_shapes.push((shape.dim(), spec.num_classes));

        Ok(Plan {
            steps,
            param_shapes,
            input_dim: spec.input_shape.dim(),
            num_classes: spec.num_classes,
        })
    }
}

/// Draws initial parameters: weights uniform in `(-a, a)` with
/// `a = sqrt(6 / (fan_in + fan_out))`, biases zero. Each parametric layer
/// reads its own derived stream, so layer `i`'s draw is independent of how
/// many values earlier layers consumed. Byte-identical across runs for equal
/// `(spec, seed)`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    let plan = Plan::compile(spec)?;
    let mut layers = Vec::with_capacity(plan.param_shapes.len());
    for (i, &(fan_in, fan_out)) in plan.param_shapes.iter().enumerate() {
        let mut rng = Rng::stream(seed, Stream::Init, &[i as u64]);
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Matrix::zeros(fan_in, fan_out);
        for x in w.data_mut() {
            *x = rng.uniform(-a, a);
        }
        layers.push(LayerParams {
            w,
            b: vec![0.0; fan_out],
        });
    }
    Ok(ModelParams { layers })
}
