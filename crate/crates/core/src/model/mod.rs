//! Model architecture descriptions, chip-constraint validation, canonical
//! builders, weight storage and the forward executor.

mod builders;
mod config;
mod forward;
mod validate;
mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Padding, Shape};

pub use builders::{
    build_gnetdet_large, build_gnetdet_large_with, build_gnetdet_small, build_gnetdet_small_with,
    build_gnetfc_v1, build_gnetfc_v1_with, build_gnetfc_v2, build_gnetfc_v2_with, BuildOptions,
};
pub use forward::{execute, forward, forward_with};
pub use validate::{validate, RuleId, ValidationReport, Violation};
pub use weights::{WeightStore, WEIGHT_MAGIC};

/// Channel-width ceiling of the target chip.
pub const DEFAULT_MAX_CHANNELS: usize = 512;
/// Side of the detection grid.
pub const DETECTION_GRID: usize = 14;
/// Channels per cell before the class scores: two boxes of four coordinates plus two confidences.
pub const DETECTION_BASE_CHANNELS: usize = 10;
pub const SUPPORTED_INPUT_SIZES: [usize; 2] = [224, 448];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// One 3x3 convolution, optionally followed by ReLU. The kernel size is implied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub padding: Padding,
    pub activation: Activation,
}

impl SubLayer {
    pub const fn relu(in_channels: usize, out_channels: usize) -> Self {
        SubLayer {
            in_channels,
            out_channels,
            padding: Padding::Same,
            activation: Activation::Relu,
        }
    }

    pub const fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub const fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub const fn param_count(&self) -> usize {
        self.in_channels * self.out_channels * 9 + self.out_channels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MajorLayer {
    pub sublayers: Vec<SubLayer>,
    /// 2x2 max pool after the last sublayer.
    pub pool_after: bool,
    /// 2x2 max pool after the sublayer with this index (never the last one). Only used when a
    /// merged layer spans a downsampling step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mid_pool: Option<usize>,
}

impl MajorLayer {
    pub fn new(sublayers: Vec<SubLayer>, pool_after: bool) -> Self {
        MajorLayer {
            sublayers,
            pool_after,
            mid_pool: None,
        }
    }

    /// Whether a pool runs right after sublayer `i`.
    pub fn pools_after(&self, i: usize) -> bool {
        self.mid_pool == Some(i) || (self.pool_after && i + 1 == self.sublayers.len())
    }

    pub fn pool_count(&self) -> usize {
        usize::from(self.pool_after)
            + usize::from(self.mid_pool.is_some_and(|m| m + 1 < self.sublayers.len()))
    }
}

/// How the final tensor is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// `(10 + C) x 14 x 14` grid-cell detection tensor.
    Detection { num_classes: usize },
    /// `K x 1 x 1` class scores.
    ClassifyV1 { num_classes: usize },
    /// Class scores read positionally from a `K x grid x grid` map.
    ClassifyV2 { num_classes: usize, grid: usize },
}

impl Head {
    pub fn num_classes(&self) -> usize {
        match *self {
            Head::Detection { num_classes }
            | Head::ClassifyV1 { num_classes }
            | Head::ClassifyV2 { num_classes, .. } => num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input_size: usize,
    pub input_channels: usize,
    #[serde(default = "default_max_channels")]
    pub max_channel_width: usize,
    pub head: Head,
    pub major_layers: Vec<MajorLayer>,
}

fn default_max_channels() -> usize {
    DEFAULT_MAX_CHANNELS
}

/// One executable step of a model, in traversal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Conv {
        major: usize,
        sub: usize,
        layer: SubLayer,
    },
    Pool {
        major: usize,
    },
}

impl ModelSpec {
    pub fn sublayers(&self) -> impl DoubleEndedIterator<Item = &SubLayer> + '_ {
        self.major_layers.iter().flat_map(|m| m.sublayers.iter())
    }

    pub fn sublayer_count(&self) -> usize {
        self.sublayers().count()
    }

    pub fn pool_count(&self) -> usize {
        self.major_layers.iter().map(MajorLayer::pool_count).sum()
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(self.input_channels, self.input_size, self.input_size)
    }

    /// Convolutions and pools in execution order.
    pub fn steps(&self) -> Vec<Step> {
        let mut steps = Vec::new();
        for (major, ml) in self.major_layers.iter().enumerate() {
            for (sub, &layer) in ml.sublayers.iter().enumerate() {
                steps.push(Step::Conv { major, sub, layer });
                if ml.pools_after(sub) {
                    steps.push(Step::Pool { major });
                }
            }
        }
        steps
    }

    /// Output shape of every step, computed without weights.
    ///
    /// Channel counts follow each sublayer's declared `out_channels`; chaining is the
    /// validator's job. Fails on a pool over odd dimensions or a valid convolution over a map
    /// smaller than 3x3.
    pub fn trace(&self) -> Result<Vec<Shape>> {
        let mut shape = self.input_shape();
        let mut shapes = Vec::new();
        for step in self.steps() {
            shape = match step {
                Step::Conv { major, sub, layer } => {
                    match (
                        layer.padding.output_extent(shape.height),
                        layer.padding.output_extent(shape.width),
                    ) {
                        (Some(h), Some(w)) => Shape::new(layer.out_channels, h, w),
                        _ => {
                            return Err(Error::Shape(format!(
                                "major layer {major} sublayer {sub}: valid convolution over {}x{}",
                                shape.height, shape.width
                            )))
                        }
                    }
                }
                Step::Pool { major } => {
                    if !shape.height.is_multiple_of(2) || !shape.width.is_multiple_of(2) {
                        return Err(Error::Shape(format!(
                            "major layer {major}: pooling over odd size {}x{}",
                            shape.height, shape.width
                        )));
                    }
                    Shape::new(shape.channels, shape.height / 2, shape.width / 2)
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        self.trace()?
            .last()
            .copied()
            .ok_or_else(|| Error::InvalidSpec("model has no layers".into()))
    }

    /// Total weights plus biases.
    pub fn param_count(&self) -> usize {
        self.sublayers().map(SubLayer::param_count).sum()
    }

    /// Multiply-accumulates for one forward pass, or `None` if the spec does not trace.
    pub fn mac_count(&self) -> Option<u64> {
        let shapes = self.trace().ok()?;
        let macs = self
            .steps()
            .iter()
            .zip(&shapes)
            .map(|(step, out)| match step {
                Step::Conv { layer, .. } => {
                    (out.plane() * layer.out_channels * layer.in_channels * 9) as u64
                }
                Step::Pool { .. } => 0,
            })
            .sum();
        Some(macs)
    }
}

/// Sum over sublayers of `in * out * 9 + out`.
pub fn param_count(spec: &ModelSpec) -> usize {
    spec.param_count()
}
