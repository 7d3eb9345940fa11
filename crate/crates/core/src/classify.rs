//! Class-score decoding for the convolution-only classifiers.
//!
//! The channel-score head ends at `K x 1 x 1` and reads one score per channel. The
//! position-score head ends at `K x G x G` and reads one score per feature-map position,
//! so it represents up to `K * G^2` classes; class id `channel * G^2 + row * G + col`.
//! Positions past `num_classes` are ignored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{softmax, Tensor};

/// Number of classes a `channels x grid x grid` position-score map can represent.
pub fn capacity(channels: usize, grid: usize) -> usize {
    channels * grid * grid
}

/// Class id of position `(channel, row, col)` on a `grid x grid` map.
pub fn position_id(channel: usize, row: usize, col: usize, grid: usize) -> usize {
    channel * grid * grid + row * grid + col
}

/// Inverse of [`position_id`].
pub fn id_position(id: usize, grid: usize) -> (usize, usize, usize) {
    let plane = grid * grid;
    (id / plane, (id % plane) / grid, id % grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    probabilities: Vec<f64>,
}

impl ClassScores {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        Ok(ClassScores {
            probabilities: softmax(logits)?,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Lowest id among the most probable classes.
    pub fn argmax(&self) -> usize {
        self.top_k(1)[0].0
    }

    /// The `k` most probable classes, probability descending, ties by lower id.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> =
            self.probabilities.iter().copied().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    /// `<rank> <class_id> <probability>` lines, rank starting at 1.
    pub fn format_top_k(&self, k: usize) -> String {
        let mut s = String::new();
        for (rank, (id, p)) in self.top_k(k).into_iter().enumerate() {
            let _ = writeln!(s, "{} {} {:.6}", rank + 1, id, p);
        }
        s
    }
}

/// Softmax over the first `num_classes` channels of a `K x 1 x 1` tensor.
pub fn decode_v1(output: &Tensor, num_classes: usize) -> Result<ClassScores> {
    if output.height() != 1 || output.width() != 1 {
        return Err(Error::Shape(format!(
            "channel-score output must be K x 1 x 1, got {}",
            output.shape()
        )));
    }
    if num_classes == 0 || num_classes > output.channels() {
        return Err(Error::Capacity {
            requested: num_classes,
            capacity: output.channels(),
        });
    }
    let logits: Vec<f64> = output.data()[..num_classes]
        .iter()
        .map(|&v| v as f64)
        .collect();
    ClassScores::from_logits(&logits)
}

/// Softmax over the first `num_classes` position ids of a `K x G x G` tensor.
pub fn decode_v2(output: &Tensor, num_classes: usize) -> Result<ClassScores> {
    if output.height() != output.width() {
        return Err(Error::Shape(format!(
            "position-score output must be square, got {}",
            output.shape()
        )));
    }
    let cap = capacity(output.channels(), output.height());
    if num_classes == 0 || num_classes > cap {
        return Err(Error::Capacity {
            requested: num_classes,
            capacity: cap,
        });
    }
    // channel-major then row-major storage is exactly the id order
    let logits: Vec<f64> = output.data()[..num_classes]
        .iter()
        .map(|&v| v as f64)
        .collect();
    ClassScores::from_logits(&logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capacity_values() {
        assert_eq!(capacity(256, 7), 12_544);
        assert_eq!(capacity(512, 7), 25_088);
        assert_eq!(capacity(1, 1), 1);
        assert_eq!(capacity(512, 14), 100_352);
    }

    #[test]
    fn v1_cases() {
        let s = decode_v1(&Tensor::zeros(10, 1, 1), 10).unwrap();
        assert!(s.probabilities().iter().all(|&p| (p - 0.1).abs() < 1e-15));
        let mut v = vec![0.0; 10];
        v[3] = 25.0;
        assert_eq!(
            decode_v1(&Tensor::new(10, 1, 1, v).unwrap(), 10)
                .unwrap()
                .argmax(),
            3
        );
        assert!(decode_v1(&Tensor::zeros(10, 2, 2), 10).is_err());
        assert!(decode_v1(&Tensor::zeros(10, 1, 1), 11).is_err());
        // surplus channels are ignored
        assert_eq!(
            decode_v1(&Tensor::zeros(12, 1, 1), 4)
                .unwrap()
                .probabilities()
                .len(),
            4
        );
    }

    #[test]
    fn v2_cases() {
        let mut t = vec![0.0f32; 49];
        t[2 * 7 + 3] = 20.0;
        let s = decode_v2(&Tensor::new(1, 7, 7, t).unwrap(), 49).unwrap();
        assert_eq!(s.argmax(), 17);
        let s = decode_v2(&Tensor::zeros(256, 7, 7), 12_544).unwrap();
        assert_eq!(s.probabilities().len(), 12_544);
        assert!(s
            .probabilities()
            .iter()
            .all(|&p| (p - 1.0 / 12_544.0).abs() < 1e-15));
        assert!(matches!(
            decode_v2(&Tensor::zeros(256, 7, 7), 12_545),
            Err(Error::Capacity {
                capacity: 12_544,
                ..
            })
        ));
    }

    #[test]
    fn top_k_format() {
        let s = ClassScores::from_logits(&[0.0, 2.0, 1.0]).unwrap();
        let text = s.format_top_k(2);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("1 1 0.665"));
        assert!(lines[1].starts_with("2 2 0.244"));
        assert_eq!(s.top_k(10).len(), 3);
    }

    #[test]
    fn id_map_is_a_bijection() {
        for k in 1..=8 {
            for g in 1..=7 {
                let mut seen = vec![false; capacity(k, g)];
                for c in 0..k {
                    for r in 0..g {
                        for col in 0..g {
                            let id = position_id(c, r, col, g);
                            assert!(!seen[id]);
                            seen[id] = true;
                            assert_eq!(id_position(id, g), (c, r, col));
                        }
                    }
                }
                assert!(seen.iter().all(|&s| s));
            }
        }
    }

    proptest! {
        #[test]
        fn v2_with_unit_grid_is_v1(v in proptest::collection::vec(-20.0f32..20.0, 1..30), n in 1usize..30) {
            prop_assume!(n <= v.len());
            let t = Tensor::new(v.len(), 1, 1, v).unwrap();
            prop_assert_eq!(decode_v2(&t, n).unwrap(), decode_v1(&t, n).unwrap());
        }

        #[test]
        fn shift_invariance(v in proptest::collection::vec(-20.0f64..20.0, 1..30), shift in -100.0f64..100.0) {
            let a = ClassScores::from_logits(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let b = ClassScores::from_logits(&shifted).unwrap();
            for (p, q) in a.probabilities().iter().zip(b.probabilities()) {
                prop_assert!((p - q).abs() <= 1e-9);
            }
        }
    }
}
