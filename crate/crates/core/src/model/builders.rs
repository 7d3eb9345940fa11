//! Canonical architectures.
//!
//! Channel plans follow a VGG-16 layout with the deep 512-wide stages narrowed to 256, which
//! keeps every feature map inside the chip's channel budget. Pools sit between major layers;
//! 224 inputs use four to reach the 14x14 detection grid and 448 inputs use five.

use super::{
    Activation, Head, MajorLayer, ModelSpec, SubLayer, DEFAULT_MAX_CHANNELS,
    DETECTION_BASE_CHANNELS, DETECTION_GRID,
};
use crate::error::{Error, Result};
use crate::nn::Padding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub max_channel_width: usize,
    /// Apply ReLU after the final sublayer too (chip-faithful, forbids negative raw outputs).
    pub head_relu: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_channel_width: DEFAULT_MAX_CHANNELS,
            head_relu: false,
        }
    }
}

const LARGE_WIDTHS: [usize; 5] = [64, 128, 256, 256, 256];
const LARGE_DEPTHS: [usize; 5] = [2, 2, 3, 3, 3];
const SMALL_WIDTHS: [usize; 4] = [64, 128, 256, 256];
const SMALL_DEPTHS: [usize; 4] = [1, 2, 2, 3];
const HEAD_WIDTH: usize = 256;

fn check_input(input_size: usize, input_channels: usize) -> Result<()> {
    if !super::SUPPORTED_INPUT_SIZES.contains(&input_size) {
        return Err(Error::InvalidArgument(format!(
            "input size must be 224 or 448, got {input_size}"
        )));
    }
    if input_channels != 1 && input_channels != 3 {
        return Err(Error::InvalidArgument(format!(
            "input channels must be 1 or 3, got {input_channels}"
        )));
    }
    Ok(())
}

fn check_classes(num_classes: usize) -> Result<()> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument(
            "num_classes must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Number of 2x2 pools taking `input_size` down to `grid`.
fn pools_needed(input_size: usize, grid: usize) -> Result<usize> {
    let mut size = input_size;
    let mut pools = 0;
    while size > grid && size.is_multiple_of(2) {
        size /= 2;
        pools += 1;
    }
    if size != grid {
        return Err(Error::InvalidArgument(format!(
            "{input_size} does not reach a {grid}x{grid} grid by halving"
        )));
    }
    Ok(pools)
}

/// Same-padded ReLU stacks of the given widths and depths, chained from `in_channels`.
fn backbone(
    in_channels: usize,
    widths: &[usize],
    depths: &[usize],
    pools: usize,
) -> Vec<MajorLayer> {
    let mut c = in_channels;
    widths
        .iter()
        .zip(depths)
        .enumerate()
        .map(|(i, (&w, &d))| {
            let subs = (0..d)
                .map(|_| {
                    let s = SubLayer::relu(c, w);
                    c = w;
                    s
                })
                .collect();
            MajorLayer::new(subs, i < pools)
        })
        .collect()
}

/// Chain of sublayers through `widths`; the final one has no ReLU unless `head_relu`.
fn head(in_channels: usize, widths: &[usize], padding: Padding, head_relu: bool) -> Vec<SubLayer> {
    let mut c = in_channels;
    let n = widths.len();
    widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let act = if i + 1 < n || head_relu {
                Activation::Relu
            } else {
                Activation::None
            };
            let s = SubLayer::relu(c, w)
                .with_padding(padding)
                .with_activation(act);
            c = w;
            s
        })
        .collect()
}

fn mode_tag(input_channels: usize) -> &'static str {
    if input_channels == 1 {
        "y"
    } else {
        "rgb"
    }
}

pub fn build_gnetdet_large(
    input_size: usize,
    input_channels: usize,
    num_classes: usize,
) -> Result<ModelSpec> {
    build_gnetdet_large_with(
        input_size,
        input_channels,
        num_classes,
        &BuildOptions::default(),
    )
}

/// Six major layers: five backbone stages and a three-sublayer detection head.
pub fn build_gnetdet_large_with(
    input_size: usize,
    input_channels: usize,
    num_classes: usize,
    opts: &BuildOptions,
) -> Result<ModelSpec> {
    check_input(input_size, input_channels)?;
    check_classes(num_classes)?;
    let pools = pools_needed(input_size, DETECTION_GRID)?;
    let mut layers = backbone(input_channels, &LARGE_WIDTHS, &LARGE_DEPTHS, pools);
    let out = DETECTION_BASE_CHANNELS + num_classes;
    layers.push(MajorLayer::new(
        head(
            LARGE_WIDTHS[4],
            &[HEAD_WIDTH, HEAD_WIDTH, out],
            Padding::Same,
            opts.head_relu,
        ),
        false,
    ));
    Ok(ModelSpec {
        name: format!(
            "gnetdet-large-{input_size}-{}-{num_classes}",
            mode_tag(input_channels)
        ),
        input_size,
        input_channels,
        max_channel_width: opts.max_channel_width,
        head: Head::Detection { num_classes },
        major_layers: layers,
    })
}

pub fn build_gnetdet_small(
    input_size: usize,
    input_channels: usize,
    num_classes: usize,
) -> Result<ModelSpec> {
    build_gnetdet_small_with(
        input_size,
        input_channels,
        num_classes,
        &BuildOptions::default(),
    )
}

/// Four backbone stages, then a fifth major layer of six sublayers that doubles as the head.
///
/// At 448 the fifth pool falls inside the merged layer, after its third sublayer, which is
/// where the boundary between the two merged stages would have been.
pub fn build_gnetdet_small_with(
    input_size: usize,
    input_channels: usize,
    num_classes: usize,
    opts: &BuildOptions,
) -> Result<ModelSpec> {
    check_input(input_size, input_channels)?;
    check_classes(num_classes)?;
    let pools = pools_needed(input_size, DETECTION_GRID)?;
    let mut layers = backbone(input_channels, &SMALL_WIDTHS, &SMALL_DEPTHS, pools.min(4));
    let out = DETECTION_BASE_CHANNELS + num_classes;
    let mut widths = [HEAD_WIDTH; 6];
    widths[5] = out;
    let mut merged = MajorLayer::new(
        head(SMALL_WIDTHS[3], &widths, Padding::Same, opts.head_relu),
        false,
    );
    if pools > 4 {
        merged.mid_pool = Some(2);
    }
    layers.push(merged);
    Ok(ModelSpec {
        name: format!(
            "gnetdet-small-{input_size}-{}-{num_classes}",
            mode_tag(input_channels)
        ),
        input_size,
        input_channels,
        max_channel_width: opts.max_channel_width,
        head: Head::Detection { num_classes },
        major_layers: layers,
    })
}

pub fn build_gnetfc_v1(
    input_channels: usize,
    num_classes: usize,
    backbone_channels: usize,
) -> Result<ModelSpec> {
    build_gnetfc_v1_with(
        input_channels,
        num_classes,
        backbone_channels,
        &BuildOptions::default(),
    )
}

/// 224 input pooled five times to 7x7, then three valid convolutions 7 -> 5 -> 3 -> 1 whose
/// last output channels are the class scores.
///
/// `backbone_channels` sets the width of the two deepest backbone stages and the first two
/// head sublayers.
pub fn build_gnetfc_v1_with(
    input_channels: usize,
    num_classes: usize,
    backbone_channels: usize,
    opts: &BuildOptions,
) -> Result<ModelSpec> {
    check_input(224, input_channels)?;
    check_classes(num_classes)?;
    if num_classes > opts.max_channel_width {
        return Err(Error::Capacity {
            requested: num_classes,
            capacity: opts.max_channel_width,
        });
    }
    if backbone_channels == 0 || backbone_channels > opts.max_channel_width {
        return Err(Error::InvalidArgument(format!(
            "backbone width {backbone_channels} outside 1..={}",
            opts.max_channel_width
        )));
    }
    let b = backbone_channels;
    let mut layers = backbone(input_channels, &[64, 128, 256, b, b], &LARGE_DEPTHS, 5);
    layers.push(MajorLayer::new(
        head(b, &[b, b, num_classes], Padding::Valid, opts.head_relu),
        false,
    ));
    Ok(ModelSpec {
        name: format!("gnetfc-v1-224-{}-{num_classes}", mode_tag(input_channels)),
        input_size: 224,
        input_channels,
        max_channel_width: opts.max_channel_width,
        head: Head::ClassifyV1 { num_classes },
        major_layers: layers,
    })
}

pub fn build_gnetfc_v2(
    input_channels: usize,
    num_classes: usize,
    grid: usize,
    channels: usize,
) -> Result<ModelSpec> {
    build_gnetfc_v2_with(
        input_channels,
        num_classes,
        grid,
        channels,
        &BuildOptions::default(),
    )
}

/// 224 input pooled down to a 7x7 or 14x14 map whose every position is one class score.
pub fn build_gnetfc_v2_with(
    input_channels: usize,
    num_classes: usize,
    grid: usize,
    channels: usize,
    opts: &BuildOptions,
) -> Result<ModelSpec> {
    check_input(224, input_channels)?;
    check_classes(num_classes)?;
    if grid != 7 && grid != 14 {
        return Err(Error::InvalidArgument(format!(
            "grid must be 7 or 14, got {grid}"
        )));
    }
    if channels == 0 || channels > opts.max_channel_width {
        return Err(Error::InvalidArgument(format!(
            "head width {channels} outside 1..={}",
            opts.max_channel_width
        )));
    }
    let capacity = crate::classify::capacity(channels, grid);
    if num_classes > capacity {
        return Err(Error::Capacity {
            requested: num_classes,
            capacity,
        });
    }
    let pools = pools_needed(224, grid)?;
    let mut layers = backbone(input_channels, &LARGE_WIDTHS, &LARGE_DEPTHS, pools);
    layers.push(MajorLayer::new(
        head(
            LARGE_WIDTHS[4],
            &[HEAD_WIDTH, channels],
            Padding::Same,
            opts.head_relu,
        ),
        false,
    ));
    Ok(ModelSpec {
        name: format!("gnetfc-v2-224-{}-{num_classes}", mode_tag(input_channels)),
        input_size: 224,
        input_channels,
        max_channel_width: opts.max_channel_width,
        head: Head::ClassifyV2 { num_classes, grid },
        major_layers: layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use crate::nn::Shape;

    #[test]
    fn large_shapes() {
        let spec = build_gnetdet_large(224, 1, 20).unwrap();
        assert_eq!(spec.major_layers.len(), 6);
        assert_eq!(spec.pool_count(), 4);
        assert_eq!(spec.output_shape().unwrap(), Shape::new(30, 14, 14));

        let spec = build_gnetdet_large(448, 3, 20).unwrap();
        assert_eq!(spec.pool_count(), 5);
        assert_eq!(spec.major_layers.iter().filter(|m| m.pool_after).count(), 5);
        assert_eq!(spec.output_shape().unwrap(), Shape::new(30, 14, 14));

        let spec = build_gnetdet_large(224, 1, 1).unwrap();
        assert_eq!(spec.output_shape().unwrap().channels, 11);
    }

    #[test]
    fn small_shapes() {
        let spec = build_gnetdet_small(224, 1, 20).unwrap();
        assert_eq!(spec.major_layers.len(), 5);
        assert_eq!(spec.major_layers[4].sublayers.len(), 6);
        assert!(validate(&spec).ok());
        assert_eq!(spec.output_shape().unwrap(), Shape::new(30, 14, 14));

        let spec = build_gnetdet_small(448, 3, 20).unwrap();
        assert_eq!(spec.major_layers.len(), 5);
        assert_eq!(spec.major_layers[4].sublayers.len(), 6);
        assert_eq!(spec.pool_count(), 5);
        assert!(validate(&spec).ok(), "{}", validate(&spec));
        assert_eq!(spec.output_shape().unwrap(), Shape::new(30, 14, 14));
    }

    #[test]
    fn gnetfc_v1_shrink_chain() {
        let spec = build_gnetfc_v1(3, 10, 256).unwrap();
        assert!(validate(&spec).ok(), "{}", validate(&spec));
        let trace = spec.trace().unwrap();
        let tail: Vec<_> = trace
            .iter()
            .rev()
            .take(3)
            .rev()
            .map(|s| (s.height, s.width))
            .collect();
        assert_eq!(tail, vec![(5, 5), (3, 3), (1, 1)]);
        assert_eq!(spec.output_shape().unwrap(), Shape::new(10, 1, 1));
        let last3: Vec<_> = spec.sublayers().rev().take(3).collect();
        assert!(last3.iter().all(|s| s.padding == Padding::Valid));

        assert!(matches!(
            build_gnetfc_v1(3, 513, 256),
            Err(Error::Capacity {
                requested: 513,
                capacity: 512
            })
        ));
        assert!(build_gnetfc_v1(3, 512, 256).is_ok());
    }

    #[test]
    fn gnetfc_v2_capacity() {
        let spec = build_gnetfc_v2(3, 1000, 7, 256).unwrap();
        assert!(validate(&spec).ok());
        assert_eq!(spec.output_shape().unwrap(), Shape::new(256, 7, 7));
        assert!(matches!(
            build_gnetfc_v2(3, 25089, 7, 512),
            Err(Error::Capacity {
                requested: 25089,
                capacity: 25088
            })
        ));
        assert!(build_gnetfc_v2(3, 25088, 7, 512).is_ok());
        let full = build_gnetfc_v2(1, 49, 7, 1).unwrap();
        assert!(validate(&full).ok());
        let spec14 = build_gnetfc_v2(1, 5000, 14, 64).unwrap();
        assert_eq!(spec14.output_shape().unwrap(), Shape::new(64, 14, 14));
        assert!(build_gnetfc_v2(1, 10, 9, 64).is_err());
    }

    #[test]
    fn head_relu_option() {
        let opts = BuildOptions {
            head_relu: true,
            ..Default::default()
        };
        let spec = build_gnetdet_large_with(224, 1, 20, &opts).unwrap();
        assert!(spec.sublayers().all(|s| s.activation == Activation::Relu));
        let spec = build_gnetdet_large(224, 1, 20).unwrap();
        assert_eq!(
            spec.sublayers().last().unwrap().activation,
            Activation::None
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_gnetdet_large(300, 1, 20).is_err());
        assert!(build_gnetdet_large(224, 2, 20).is_err());
        assert!(build_gnetdet_small(224, 1, 0).is_err());
    }

    #[test]
    fn param_count_closed_forms() {
        assert_eq!(SubLayer::relu(3, 16).param_count(), 448);
        assert_eq!(SubLayer::relu(1, 1).param_count(), 10);
    }
}
