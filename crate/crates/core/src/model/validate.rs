use std::fmt;

use super::{Activation, Head, ModelSpec, Step, DETECTION_BASE_CHANNELS, DETECTION_GRID};
use crate::nn::Padding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    EmptyModel,
    EmptyMajorLayer,
    ChannelChain,
    InputChannels,
    ChannelWidth,
    InputSize,
    MidPool,
    SpatialUnderflow,
    OddPool,
    NumClasses,
    DetectionGrid,
    DetectionChannels,
    ClassifyV1Output,
    ClassifyV2Grid,
    ClassifyV2Capacity,
    MissingRelu,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::EmptyModel => "empty-model",
            RuleId::EmptyMajorLayer => "empty-major-layer",
            RuleId::ChannelChain => "channel-chain",
            RuleId::InputChannels => "input-channels",
            RuleId::ChannelWidth => "channel-width",
            RuleId::InputSize => "input-size",
            RuleId::MidPool => "mid-pool",
            RuleId::SpatialUnderflow => "spatial-underflow",
            RuleId::OddPool => "odd-pool",
            RuleId::NumClasses => "num-classes",
            RuleId::DetectionGrid => "detection-grid",
            RuleId::DetectionChannels => "detection-channels",
            RuleId::ClassifyV1Output => "classify-v1-output",
            RuleId::ClassifyV2Grid => "classify-v2-grid",
            RuleId::ClassifyV2Capacity => "classify-v2-capacity",
            RuleId::MissingRelu => "missing-relu",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: RuleId,
    pub message: String,
    /// Index of the offending major layer, when the rule is layer-local.
    pub layer: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(f, "[{}] major layer {l}: {}", self.rule, self.message),
            None => write!(f, "[{}] {}", self.rule, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: RuleId) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, rule: RuleId, layer: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation {
            rule,
            message: message.into(),
            layer,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return writeln!(f, "ok: no violations");
        }
        writeln!(f, "invalid: {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Checks a spec against the chip's operator and memory constraints.
///
/// Rules run in a fixed order: structure, channel chaining, input channels, channel widths,
/// input size, spatial bookkeeping, head shape, activations. Spatial and head checks are
/// skipped once the spatial walk fails, since the final shape is then meaningless.
pub fn validate(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();

    if spec.major_layers.is_empty() {
        report.push(RuleId::EmptyModel, None, "model has no major layers");
        return report;
    }
    for (i, ml) in spec.major_layers.iter().enumerate() {
        if ml.sublayers.is_empty() {
            report.push(
                RuleId::EmptyMajorLayer,
                Some(i),
                "major layer has no sublayers",
            );
        }
    }
    if !report.ok() {
        return report;
    }

    let mut expected_in = spec.input_channels;
    for step in spec.steps() {
        if let Step::Conv { major, sub, layer } = step {
            if layer.in_channels != expected_in {
                report.push(
                    RuleId::ChannelChain,
                    Some(major),
                    format!(
                        "channel chain broken at sublayer {sub}: expects {} input channels, previous stage produces {expected_in}",
                        layer.in_channels
                    ),
                );
            }
            expected_in = layer.out_channels;
        }
    }

    if spec.input_channels != 1 && spec.input_channels != 3 {
        report.push(
            RuleId::InputChannels,
            None,
            format!(
                "input must have 1 (Y) or 3 (RGB/YUV) channels, got {}",
                spec.input_channels
            ),
        );
    }

    for (major, ml) in spec.major_layers.iter().enumerate() {
        for (sub, layer) in ml.sublayers.iter().enumerate() {
            for (what, n) in [("input", layer.in_channels), ("output", layer.out_channels)] {
                if n == 0 || n > spec.max_channel_width {
                    report.push(
                        RuleId::ChannelWidth,
                        Some(major),
                        format!(
                            "sublayer {sub} {what} width {n} outside 1..={}",
                            spec.max_channel_width
                        ),
                    );
                }
            }
        }
    }

    if !super::SUPPORTED_INPUT_SIZES.contains(&spec.input_size) {
        report.push(
            RuleId::InputSize,
            None,
            format!("input size must be 224 or 448, got {}", spec.input_size),
        );
    }

    for (major, ml) in spec.major_layers.iter().enumerate() {
        if let Some(m) = ml.mid_pool {
            if m + 1 >= ml.sublayers.len() {
                report.push(
                    RuleId::MidPool,
                    Some(major),
                    format!("mid-layer pool after sublayer {m} must precede the last sublayer"),
                );
            }
        }
    }

    let Some(final_shape) = walk_spatial(spec, &mut report) else {
        return report;
    };

    match spec.head {
        Head::Detection { num_classes } => {
            if num_classes == 0 {
                report.push(
                    RuleId::NumClasses,
                    None,
                    "detection needs at least one class",
                );
            }
            if final_shape.1 != DETECTION_GRID || final_shape.2 != DETECTION_GRID {
                report.push(
                    RuleId::DetectionGrid,
                    None,
                    format!(
                        "detection grid must be 14x14, model ends at {}x{}",
                        final_shape.1, final_shape.2
                    ),
                );
            }
            let want = DETECTION_BASE_CHANNELS + num_classes;
            if final_shape.0 != want {
                report.push(
                    RuleId::DetectionChannels,
                    None,
                    format!(
                        "detection head must emit 10+C = {want} channels, model ends with {}",
                        final_shape.0
                    ),
                );
            }
        }
        Head::ClassifyV1 { num_classes } => {
            if num_classes == 0 {
                report.push(
                    RuleId::NumClasses,
                    None,
                    "classifier needs at least one class",
                );
            }
            if final_shape.1 != 1 || final_shape.2 != 1 || final_shape.0 < num_classes {
                report.push(
                    RuleId::ClassifyV1Output,
                    None,
                    format!(
                        "channel-score head must end at K x 1 x 1 with K >= {num_classes}, model ends at {}x{}x{}",
                        final_shape.0, final_shape.1, final_shape.2
                    ),
                );
            }
        }
        Head::ClassifyV2 { num_classes, grid } => {
            if num_classes == 0 {
                report.push(
                    RuleId::NumClasses,
                    None,
                    "classifier needs at least one class",
                );
            }
            if (grid != 7 && grid != 14) || final_shape.1 != grid || final_shape.2 != grid {
                report.push(
                    RuleId::ClassifyV2Grid,
                    None,
                    format!(
                        "position-score head needs a 7x7 or 14x14 grid matching the declared {grid}, model ends at {}x{}",
                        final_shape.1, final_shape.2
                    ),
                );
            }
            let capacity = final_shape.0 * final_shape.1 * final_shape.2;
            if num_classes > capacity {
                report.push(
                    RuleId::ClassifyV2Capacity,
                    None,
                    format!(
                        "{num_classes} classes exceed the {capacity} score positions of a {}x{}x{} map",
                        final_shape.0, final_shape.1, final_shape.2
                    ),
                );
            }
        }
    }

    // Every sublayer but the very last must be followed by ReLU.
    let last = spec.sublayer_count() - 1;
    let mut idx = 0;
    for (major, ml) in spec.major_layers.iter().enumerate() {
        for (sub, layer) in ml.sublayers.iter().enumerate() {
            if idx < last && layer.activation != Activation::Relu {
                report.push(
                    RuleId::MissingRelu,
                    Some(major),
                    format!("sublayer {sub} has no ReLU; only the final sublayer may omit it"),
                );
            }
            idx += 1;
        }
    }

    report
}

/// Walks spatial sizes through every step; returns the final (channels, height, width).
fn walk_spatial(spec: &ModelSpec, report: &mut ValidationReport) -> Option<(usize, usize, usize)> {
    let (mut c, mut h, mut w) = (spec.input_channels, spec.input_size, spec.input_size);
    let before = report.violations.len();
    for step in spec.steps() {
        match step {
            Step::Conv { major, sub, layer } => {
                if layer.padding == Padding::Valid {
                    if h < 3 || w < 3 {
                        report.push(
                            RuleId::SpatialUnderflow,
                            Some(major),
                            format!("sublayer {sub}: valid convolution shrinks {h}x{w} below 1x1"),
                        );
                        return None;
                    }
                    h -= 2;
                    w -= 2;
                }
                c = layer.out_channels;
            }
            Step::Pool { major } => {
                if h % 2 != 0 || w % 2 != 0 {
                    report.push(
                        RuleId::OddPool,
                        Some(major),
                        format!("2x2 pooling over odd size {h}x{w}"),
                    );
                    return None;
                }
                h /= 2;
                w /= 2;
                if h == 0 || w == 0 {
                    report.push(RuleId::SpatialUnderflow, Some(major), "pooling reaches 0x0");
                    return None;
                }
            }
        }
    }
    debug_assert_eq!(report.violations.len(), before);
    Some((c, h, w))
}
