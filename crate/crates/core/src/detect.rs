//! Host-side post-processing of the `(10 + C) x 14 x 14` detection tensor: grid-cell
//! decoding and greedy per-class NMS.
//!
//! Channel plan per cell: 0..4 box 0 `(x, y, w, h)`, 4..8 box 1, 8 and 9 the two box
//! confidences, 10.. the class logits. `x, y` are offsets inside the cell and `w, h` are
//! fractions of the whole image. Raw values are clamped to `[0, 1]`; class probabilities are
//! a per-cell softmax shared by both boxes.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::labels::ClassNames;
use crate::model::{DETECTION_BASE_CHANNELS, DETECTION_GRID};
use crate::nn::{softmax, Tensor};

pub const BOXES_PER_CELL: usize = 2;
/// Upper bound on boxes produced by [`decode`].
pub const MAX_DECODED: usize = BOXES_PER_CELL * DETECTION_GRID * DETECTION_GRID;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub class_id: usize,
    pub score: f32,
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
}

impl BoundingBox {
    pub fn new(class_id: usize, score: f32, x1: f32, y1: f32, x2: f32, y2: f32) -> Self {
        BoundingBox {
            class_id,
            score,
            x1,
            y1,
            x2,
            y2,
        }
    }

    pub fn width(&self) -> f32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x2 as f64 - self.x1 as f64).max(0.0) * (self.y2 as f64 - self.y1 as f64).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub confidence_threshold: f32,
    pub score_threshold: f32,
    pub nms_iou_threshold: f32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            confidence_threshold: 0.10,
            score_threshold: 0.20,
            nms_iou_threshold: 0.45,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("confidence threshold", self.confidence_threshold),
            ("score threshold", self.score_threshold),
            ("NMS IoU threshold", self.nms_iou_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Clamp to `[0, 1]`, mapping NaN to 0.
fn unit(v: f32) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0) as f64
    }
}

/// Number of classes encoded by a detection tensor, checking its shape.
pub fn detection_classes(output: &Tensor) -> Result<usize> {
    if output.height() != DETECTION_GRID || output.width() != DETECTION_GRID {
        return Err(Error::Shape(format!(
            "detection tensor must be 14x14, got {}x{}",
            output.height(),
            output.width()
        )));
    }
    if output.channels() <= DETECTION_BASE_CHANNELS {
        return Err(Error::Shape(format!(
            "detection tensor needs at least 11 channels, got {}",
            output.channels()
        )));
    }
    Ok(output.channels() - DETECTION_BASE_CHANNELS)
}

/// Decodes every cell's two boxes into pixel coordinates of a `image_w x image_h` image.
///
/// Boxes come out in cell order (row, column, box index), before NMS.
pub fn decode(
    output: &Tensor,
    image_w: u32,
    image_h: u32,
    cfg: &DecodeConfig,
) -> Result<Vec<BoundingBox>> {
    cfg.validate()?;
    let num_classes = detection_classes(output)?;
    let grid = DETECTION_GRID as f64;
    let (iw, ih) = (image_w as f64, image_h as f64);
    let mut boxes = Vec::new();
    let mut logits = vec![0.0f64; num_classes];

    for r in 0..DETECTION_GRID {
        for c in 0..DETECTION_GRID {
            let conf = [unit(output.get(8, r, c)), unit(output.get(9, r, c))];
            if conf.iter().all(|&v| v < cfg.confidence_threshold as f64) {
                continue;
            }
            for (k, l) in logits.iter_mut().enumerate() {
                *l = output.get(DETECTION_BASE_CHANNELS + k, r, c) as f64;
            }
            let probs = softmax(&logits)?;
            let (class_id, best) =
                probs
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc },
                    );

            for (b, &conf) in conf.iter().enumerate() {
                let score = conf * best;
                if conf < cfg.confidence_threshold as f64 || score < cfg.score_threshold as f64 {
                    continue;
                }
                let ch = 4 * b;
                let x = unit(output.get(ch, r, c));
                let y = unit(output.get(ch + 1, r, c));
                let w = unit(output.get(ch + 2, r, c));
                let h = unit(output.get(ch + 3, r, c));
                let cx = (c as f64 + x) / grid * iw;
                let cy = (r as f64 + y) / grid * ih;
                let (bw, bh) = (w * iw, h * ih);
                boxes.push(BoundingBox {
                    class_id,
                    score: score as f32,
                    x1: (cx - bw / 2.0).clamp(0.0, iw) as f32,
                    y1: (cy - bh / 2.0).clamp(0.0, ih) as f32,
                    x2: (cx + bw / 2.0).clamp(0.0, iw) as f32,
                    y2: (cy + bh / 2.0).clamp(0.0, ih) as f32,
                });
            }
        }
    }
    Ok(boxes)
}

/// Logit given to the true class by [`encode`]; large enough that the softmax is ~1.
pub const ENCODE_LOGIT: f32 = 30.0;

/// Inverse of [`decode`] for ground truths with at most one box per cell: the box goes in
/// slot 0 of the cell holding its center, with confidence 1 and a one-hot class logit.
pub fn encode(
    boxes: &[BoundingBox],
    num_classes: usize,
    image_w: u32,
    image_h: u32,
) -> Result<Tensor> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument(
            "num_classes must be at least 1".into(),
        ));
    }
    let g = DETECTION_GRID;
    let channels = DETECTION_BASE_CHANNELS + num_classes;
    let mut data = vec![0.0f32; channels * g * g];
    let mut taken = vec![false; g * g];
    let (iw, ih) = (image_w as f64, image_h as f64);
    for b in boxes {
        if b.class_id >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "class {} outside 0..{num_classes}",
                b.class_id
            )));
        }
        let cx = (b.x1 as f64 + b.x2 as f64) / 2.0 / iw * g as f64;
        let cy = (b.y1 as f64 + b.y2 as f64) / 2.0 / ih * g as f64;
        let col = (cx.floor().max(0.0) as usize).min(g - 1);
        let row = (cy.floor().max(0.0) as usize).min(g - 1);
        let cell = row * g + col;
        if std::mem::replace(&mut taken[cell], true) {
            return Err(Error::InvalidArgument(format!(
                "cell ({row}, {col}) holds two boxes"
            )));
        }
        let mut set = |ch: usize, v: f64| data[ch * g * g + cell] = v as f32;
        set(0, cx - col as f64);
        set(1, cy - row as f64);
        set(2, (b.x2 as f64 - b.x1 as f64) / iw);
        set(3, (b.y2 as f64 - b.y1 as f64) / ih);
        set(8, 1.0);
        set(DETECTION_BASE_CHANNELS + b.class_id, ENCODE_LOGIT as f64);
    }
    Tensor::new(channels, g, g, data)
}

/// Intersection over union; 0 for disjoint boxes or a zero-area union.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) as f64 - a.x1.max(b.x1) as f64).max(0.0);
    let ih = (a.y2.min(b.y2) as f64 - a.y1.max(b.y1) as f64).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if inter <= 0.0 || union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// Score descending, then x1, y1, x2, y2 ascending.
fn rank(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.x1.total_cmp(&b.x1))
        .then(a.y1.total_cmp(&b.y1))
        .then(a.x2.total_cmp(&b.x2))
        .then(a.y2.total_cmp(&b.y2))
}

/// Final output order: score descending, then class id, then coordinates.
pub fn output_order(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then_with(|| rank(a, b))
}

/// Greedy per-class non-maximum suppression.
///
/// A box is dropped when its IoU with an already kept box of the same class exceeds
/// `iou_threshold`.
pub fn nms(boxes: &[BoundingBox], iou_threshold: f32) -> Vec<BoundingBox> {
    nms_with(boxes, iou_threshold, Exec::Sequential)
}

/// [`nms`] with classes processed independently under `exec`.
pub fn nms_with(boxes: &[BoundingBox], iou_threshold: f32, exec: Exec) -> Vec<BoundingBox> {
    let mut by_class: Vec<(usize, Vec<BoundingBox>)> = Vec::new();
    let mut sorted: Vec<BoundingBox> = boxes.to_vec();
    sorted.sort_by(|a, b| a.class_id.cmp(&b.class_id).then_with(|| rank(a, b)));
    for b in sorted {
        match by_class.last_mut() {
            Some((c, v)) if *c == b.class_id => v.push(b),
            _ => by_class.push((b.class_id, vec![b])),
        }
    }
    let kept = exec::map_collect(exec, &by_class, |(_, cls)| {
        suppress(cls, iou_threshold as f64)
    });
    let mut out: Vec<BoundingBox> = kept.into_iter().flatten().collect();
    out.sort_by(output_order);
    out
}

/// `ranked` must be sorted by [`rank`] and share one class.
fn suppress(ranked: &[BoundingBox], threshold: f64) -> Vec<BoundingBox> {
    let mut removed = vec![false; ranked.len()];
    let mut keep = Vec::new();
    for i in 0..ranked.len() {
        if removed[i] {
            continue;
        }
        keep.push(ranked[i]);
        for j in i + 1..ranked.len() {
            if !removed[j] && iou(&ranked[i], &ranked[j]) > threshold {
                removed[j] = true;
            }
        }
    }
    keep
}

/// `<class> <score> <x1> <y1> <x2> <y2>` with 6 decimals for the score and 2 for coordinates.
pub fn format_detection(b: &BoundingBox, names: &ClassNames) -> String {
    format!(
        "{} {:.6} {:.2} {:.2} {:.2} {:.2}",
        names.label(b.class_id),
        b.score,
        b.x1,
        b.y1,
        b.x2,
        b.y2
    )
}

pub fn format_detections(boxes: &[BoundingBox], names: &ClassNames) -> String {
    let mut s = String::new();
    for b in boxes {
        let _ = writeln!(s, "{}", format_detection(b, names));
    }
    s
}

/// Parses the fields of one detection line (no image id).
pub fn parse_detection_fields(fields: &[&str], names: &ClassNames) -> Result<BoundingBox> {
    let [class, score, x1, y1, x2, y2] = fields else {
        return Err(Error::format(
            "detection line",
            format!("expected 6 fields, got {}", fields.len()),
        ));
    };
    let class_id = names
        .lookup(class)
        .ok_or_else(|| Error::format("detection line", format!("unknown class `{class}`")))?;
    let num = |s: &str| {
        s.parse::<f32>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::format("detection line", format!("bad number `{s}`")))
    };
    let b = BoundingBox::new(
        class_id,
        num(score)?,
        num(x1)?,
        num(y1)?,
        num(x2)?,
        num(y2)?,
    );
    if b.x1 > b.x2 || b.y1 > b.y2 {
        return Err(Error::format("detection line", "box corners out of order"));
    }
    Ok(b)
}

pub fn parse_detection_line(line: &str, names: &ClassNames) -> Result<BoundingBox> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    parse_detection_fields(&fields, names)
}
