//! VOC-protocol detection evaluation.
//!
//! Detections of one class are ranked by score and matched greedily: each takes the
//! ground truth of its image with the highest IoU. At IoU >= threshold, a difficult ground
//! truth makes the detection neither TP nor FP, a free one makes it a TP, and an already
//! matched one makes it a FP. Difficult ground truths do not count toward recall.

mod formats;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};

pub use formats::{
    format_ground_truth, load_detections, load_ground_truth, parse_detections, parse_ground_truth,
    parse_voc_xml,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub class_id: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub difficult: bool,
}

/// A scored box attributed to an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Detection {
    pub fn from_box(image_id: impl Into<String>, b: &crate::detect::BoundingBox) -> Self {
        Detection {
            image_id: image_id.into(),
            class_id: b.class_id,
            score: b.score as f64,
            x1: b.x1 as f64,
            y1: b.y1 as f64,
            x2: b.x2 as f64,
            y2: b.y2 as f64,
        }
    }

    fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl GroundTruthBox {
    fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched a difficult ground truth; excluded from the PR curve.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ApMethod {
    /// Mean of the interpolated precision at recall 0.0, 0.1, ..., 1.0.
    #[default]
    ElevenPoint,
    /// Area under the monotone precision envelope.
    Continuous,
}

impl fmt::Display for ApMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApMethod::ElevenPoint => "11point",
            ApMethod::Continuous => "continuous",
        })
    }
}

impl FromStr for ApMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "11point" | "11-point" | "voc07" => Ok(ApMethod::ElevenPoint),
            "continuous" | "area" => Ok(ApMethod::Continuous),
            other => Err(format!("unknown AP method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub method: ApMethod,
    pub exec: Exec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.5,
            method: ApMethod::ElevenPoint,
            exec: Exec::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub per_class_ap: BTreeMap<usize, f64>,
    /// Unweighted mean of `per_class_ap`; 0 when there are no classes.
    pub map_score: f64,
}

pub fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: [f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let union = area(a) + area(b) - inter;
    if inter <= 0.0 || union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

fn cmp_corners(a: [f64; 4], b: [f64; 4]) -> Ordering {
    a.iter()
        .zip(&b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Score descending; equal scores are ordered by image id, then corners.
fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| cmp_corners(a.corners(), b.corners()))
}

/// Matches one class's detections against that class's ground truths.
///
/// Returns the detections in ranking order with their outcome.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Vec<(Detection, MatchOutcome)> {
    let mut per_image: HashMap<&str, Vec<&GroundTruthBox>> = HashMap::new();
    for g in gts {
        per_image.entry(g.image_id.as_str()).or_default().push(g);
    }
    for v in per_image.values_mut() {
        v.sort_by(|a, b| cmp_corners(a.corners(), b.corners()).then(a.difficult.cmp(&b.difficult)));
    }
    let mut taken: HashMap<&str, Vec<bool>> = per_image
        .iter()
        .map(|(k, v)| (*k, vec![false; v.len()]))
        .collect();

    let mut ranked: Vec<Detection> = dets.to_vec();
    ranked.sort_by(detection_order);
    ranked
        .into_iter()
        .map(|d| {
            let candidates = per_image.get(d.image_id.as_str());
            let best = candidates.and_then(|c| {
                c.iter()
                    .enumerate()
                    .map(|(i, g)| (i, box_iou(d.corners(), g.corners())))
                    .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                        Some((_, bv)) if bv >= v => acc,
                        _ => Some((i, v)),
                    })
            });
            let outcome = match best {
                Some((i, v)) if v >= iou_threshold => {
                    let g = candidates.unwrap()[i];
                    let flags = taken.get_mut(d.image_id.as_str()).unwrap();
                    if g.difficult {
                        MatchOutcome::Ignored
                    } else if !flags[i] {
                        flags[i] = true;
                        MatchOutcome::TruePositive
                    } else {
                        MatchOutcome::FalsePositive
                    }
                }
                _ => MatchOutcome::FalsePositive,
            };
            (d, outcome)
        })
        .collect()
}

/// Average precision of a ranked list of TP (`true`) / FP (`false`) flags.
pub fn average_precision(tp_flags: &[bool], num_gt: usize, method: ApMethod) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut precision = Vec::with_capacity(tp_flags.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &f in tp_flags {
        if f {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }

    match method {
        ApMethod::ElevenPoint => {
            let sum: f64 = (0..=10)
                .map(|i| {
                    let t = i as f64 / 10.0;
                    recall
                        .iter()
                        .zip(&precision)
                        .filter(|(r, _)| **r >= t)
                        .map(|(_, p)| *p)
                        .fold(0.0, f64::max)
                })
                .sum();
            sum / 11.0
        }
        ApMethod::Continuous => {
            let mut mrec = Vec::with_capacity(recall.len() + 2);
            mrec.push(0.0);
            mrec.extend_from_slice(&recall);
            mrec.push(1.0);
            let mut mpre = Vec::with_capacity(precision.len() + 2);
            mpre.push(0.0);
            mpre.extend_from_slice(&precision);
            mpre.push(0.0);
            for i in (0..mpre.len() - 1).rev() {
                mpre[i] = mpre[i].max(mpre[i + 1]);
            }
            (1..mrec.len())
                .filter(|&i| mrec[i] != mrec[i - 1])
                .map(|i| (mrec[i] - mrec[i - 1]) * mpre[i])
                .sum()
        }
    }
}

/// Per-class AP and mAP over a whole dataset.
///
/// The class set is every class that appears in either input. Image ids are defined by the
/// ground truths; a detection on any other image is an error.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    let images: HashSet<&str> = gts.iter().map(|g| g.image_id.as_str()).collect();
    if let Some(d) = dets.iter().find(|d| !images.contains(d.image_id.as_str())) {
        return Err(Error::UnknownImage(d.image_id.clone()));
    }
    let classes: Vec<usize> = gts
        .iter()
        .map(|g| g.class_id)
        .chain(dets.iter().map(|d| d.class_id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let aps = exec::map_collect(cfg.exec, &classes, |&c| {
        let class_dets: Vec<Detection> = dets.iter().filter(|d| d.class_id == c).cloned().collect();
        let class_gts: Vec<GroundTruthBox> =
            gts.iter().filter(|g| g.class_id == c).cloned().collect();
        let num_gt = class_gts.iter().filter(|g| !g.difficult).count();
        let flags: Vec<bool> = match_detections(&class_dets, &class_gts, cfg.iou_threshold)
            .into_iter()
            .filter_map(|(_, m)| match m {
                MatchOutcome::TruePositive => Some(true),
                MatchOutcome::FalsePositive => Some(false),
                MatchOutcome::Ignored => None,
            })
            .collect();
        average_precision(&flags, num_gt, cfg.method)
    });

    let per_class_ap: BTreeMap<usize, f64> = classes.into_iter().zip(aps).collect();
    let map_score = if per_class_ap.is_empty() {
        0.0
    } else {
        per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64
    };
    Ok(EvalResult {
        per_class_ap,
        map_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt(img: &str, c: usize, r: [f64; 4], difficult: bool) -> GroundTruthBox {
        GroundTruthBox {
            image_id: img.into(),
            class_id: c,
            x1: r[0],
            y1: r[1],
            x2: r[2],
            y2: r[3],
            difficult,
        }
    }

    fn det(img: &str, c: usize, score: f64, r: [f64; 4]) -> Detection {
        Detection {
            image_id: img.into(),
            class_id: c,
            score,
            x1: r[0],
            y1: r[1],
            x2: r[2],
            y2: r[3],
        }
    }

    const R: [f64; 4] = [10.0, 10.0, 50.0, 50.0];

    #[test]
    fn perfect_and_double_matches() {
        let g = [gt("a", 0, R, false)];
        let m = match_detections(&[det("a", 0, 0.7, R)], &g, 0.5);
        assert_eq!(m[0].1, MatchOutcome::TruePositive);

        let m = match_detections(&[det("a", 0, 0.8, R), det("a", 0, 0.9, R)], &g, 0.5);
        assert_eq!(m[0].0.score, 0.9);
        assert_eq!(m[0].1, MatchOutcome::TruePositive);
        assert_eq!(m[1].1, MatchOutcome::FalsePositive);
    }

    #[test]
    fn difficult_and_wrong_image() {
        let g = [gt("a", 0, R, true)];
        let m = match_detections(&[det("a", 0, 0.9, R), det("b", 0, 0.8, R)], &g, 0.5);
        assert_eq!(m[0].1, MatchOutcome::Ignored);
        assert_eq!(m[1].1, MatchOutcome::FalsePositive);
    }

    #[test]
    fn ap_cases() {
        assert_eq!(
            average_precision(&[true, true], 2, ApMethod::ElevenPoint),
            1.0
        );
        assert_eq!(average_precision(&[], 3, ApMethod::ElevenPoint), 0.0);
        assert_eq!(average_precision(&[], 0, ApMethod::ElevenPoint), 0.0);
        // recall/precision: (0.5, 1), (0.5, 1/2), (1, 2/3); six thresholds at 1, five at 2/3
        let expected = (6.0 + 5.0 * (2.0 / 3.0)) / 11.0;
        let ap = average_precision(&[true, false, true], 2, ApMethod::ElevenPoint);
        assert!((ap - expected).abs() < 1e-15);
        // envelope area: 0.5 * 1 + 0.5 * 2/3
        let ap = average_precision(&[true, false, true], 2, ApMethod::Continuous);
        assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(
            average_precision(&[true, true], 2, ApMethod::Continuous),
            1.0
        );
    }

    #[test]
    fn evaluate_cases() {
        let gts = vec![
            gt("a", 0, R, false),
            gt("b", 1, [0.0, 0.0, 5.0, 5.0], false),
        ];
        let perfect: Vec<Detection> = gts
            .iter()
            .map(|g| det(&g.image_id, g.class_id, 0.9, g.corners()))
            .collect();
        let r = evaluate(&perfect, &gts, &EvalConfig::default()).unwrap();
        assert_eq!(r.map_score, 1.0);
        assert_eq!(r.per_class_ap.len(), 2);

        let miss: Vec<Detection> = perfect
            .iter()
            .map(|d| Detection {
                x1: d.x1 + 500.0,
                x2: d.x2 + 500.0,
                ..d.clone()
            })
            .collect();
        assert_eq!(
            evaluate(&miss, &gts, &EvalConfig::default())
                .unwrap()
                .map_score,
            0.0
        );

        let stray = vec![det("zzz", 0, 0.5, R)];
        assert!(matches!(
            evaluate(&stray, &gts, &EvalConfig::default()),
            Err(Error::UnknownImage(id)) if id == "zzz"
        ));
    }

    proptest! {
        #[test]
        fn ap_bounded_and_monotone(flags in proptest::collection::vec(any::<bool>(), 0..40), extra in 0usize..5, flip in any::<prop::sample::Index>()) {
            let num_gt = flags.iter().filter(|&&f| f).count() + extra;
            for method in [ApMethod::ElevenPoint, ApMethod::Continuous] {
                let ap = average_precision(&flags, num_gt, method);
                prop_assert!((0.0..=1.0).contains(&ap));
                if let Some(i) = flags.iter().enumerate().filter(|(_, f)| !**f).map(|(i, _)| i).nth(flip.index(flags.len().max(1)) % flags.len().max(1)) {
                    let mut better = flags.clone();
                    better[i] = true;
                    let num_gt = num_gt.max(better.iter().filter(|&&f| f).count());
                    let before = average_precision(&flags, num_gt, method);
                    prop_assert!(average_precision(&better, num_gt, method) >= before);
                }
            }
        }

        #[test]
        fn equal_score_permutation_is_neutral(seed in any::<u64>()) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let imgs = ["a", "b", "c"];
            let rect = |rng: &mut rand_chacha::ChaCha8Rng| {
                let x = rng.gen_range(0.0..80.0);
                let y = rng.gen_range(0.0..80.0);
                [x, y, x + rng.gen_range(5.0..30.0), y + rng.gen_range(5.0..30.0)]
            };
            let gts: Vec<_> = (0..8).map(|i| gt(if i < 3 { imgs[i] } else { imgs[rng.gen_range(0..3)] }, rng.gen_range(0..2), rect(&mut rng), rng.gen_bool(0.2))).collect();
            let mut dets: Vec<_> = (0..15).map(|_| det(imgs[rng.gen_range(0..3)], rng.gen_range(0..2), [0.5, 0.7][rng.gen_range(0..2)], rect(&mut rng))).collect();
            let a = evaluate(&dets, &gts, &EvalConfig::default()).unwrap();
            dets.shuffle(&mut rng);
            let mut gts2 = gts.clone();
            gts2.shuffle(&mut rng);
            let b = evaluate(&dets, &gts2, &EvalConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
