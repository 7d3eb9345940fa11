use serde::{Deserialize, Serialize};

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};

/// Border handling for [`conv3x3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero border of width 1; spatial size is preserved.
    Same,
    /// No border; each spatial dimension shrinks by 2.
    Valid,
}

impl Padding {
    pub const fn border(self) -> usize {
        match self {
            Padding::Same => 1,
            Padding::Valid => 0,
        }
    }

    /// Output extent for an input extent, or `None` if the map is too small.
    pub const fn output_extent(self, extent: usize) -> Option<usize> {
        match self {
            Padding::Same => Some(extent),
            Padding::Valid if extent >= 3 => Some(extent - 2),
            Padding::Valid => None,
        }
    }
}

/// A bank of 3x3 filters with one bias per output channel.
///
/// Weights are stored out-major, then in-major, then row-major over the 3x3 window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    out_channels: usize,
    in_channels: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvKernel {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::Shape(
                "kernel channel counts must be positive".into(),
            ));
        }
        if weights.len() != out_channels * in_channels * 9 {
            return Err(Error::Shape(format!(
                "{out_channels}x{in_channels}x3x3 kernel needs {} weights, got {}",
                out_channels * in_channels * 9,
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "kernel with {out_channels} outputs needs {out_channels} biases, got {}",
                bias.len()
            )));
        }
        Ok(ConvKernel {
            out_channels,
            in_channels,
            weights,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        ConvKernel {
            out_channels,
            in_channels,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((out * self.in_channels + inp) * 3 + ky) * 3 + kx]
    }

    pub fn set_weight(&mut self, out: usize, inp: usize, ky: usize, kx: usize, value: f32) {
        let i = ((out * self.in_channels + inp) * 3 + ky) * 3 + kx;
        self.weights[i] = value;
    }

    pub fn set_bias(&mut self, out: usize, value: f32) {
        self.bias[out] = value;
    }

    /// The 9 * in_channels weights feeding one output channel.
    fn filter(&self, out: usize) -> &[f32] {
        let n = self.in_channels * 9;
        &self.weights[out * n..(out + 1) * n]
    }
}

/// Output shape of a 3x3 stride-1 convolution.
pub fn conv3x3_shape(input: Shape, kernel: &ConvKernel, padding: Padding) -> Result<Shape> {
    if input.channels != kernel.in_channels {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got {}",
            kernel.in_channels, input.channels
        )));
    }
    match (
        padding.output_extent(input.height),
        padding.output_extent(input.width),
    ) {
        (Some(h), Some(w)) => Ok(Shape::new(kernel.out_channels, h, w)),
        _ => Err(Error::Shape(format!(
            "valid 3x3 convolution needs at least 3x3 input, got {}x{}",
            input.height, input.width
        ))),
    }
}

/// 3x3 stride-1 cross-correlation plus bias.
pub fn conv3x3(input: &Tensor, kernel: &ConvKernel, padding: Padding) -> Result<Tensor> {
    conv3x3_with(input, kernel, padding, Exec::Sequential)
}

/// [`conv3x3`] with an explicit execution strategy.
///
/// Lowers the convolution to patch-matrix GEMMs. Output channels are split into fixed-size
/// groups that are computed independently, so sequential and parallel runs are bitwise equal.
pub fn conv3x3_with(
    input: &Tensor,
    kernel: &ConvKernel,
    padding: Padding,
    exec: Exec,
) -> Result<Tensor> {
    let out_shape = conv3x3_shape(input.shape(), kernel, padding)?;
    let plane = out_shape.plane();
    let mut data = vec![0.0f32; out_shape.len()];
    exec::for_each_chunk(exec, &mut data, CHANNEL_GROUP * plane, |g, out| {
        let first = g * CHANNEL_GROUP;
        let count = out.len() / plane;
        conv_gemm_group(input, kernel, first, count, padding, out_shape, out);
    });
    Tensor::from_shape(out_shape, data)
}

/// Direct row-wise kernel: one output channel at a time, each tap a multiply-add over a
/// contiguous row segment. Slower than the GEMM path on wide layers; kept for benchmarking.
pub fn conv3x3_direct(
    input: &Tensor,
    kernel: &ConvKernel,
    padding: Padding,
    exec: Exec,
) -> Result<Tensor> {
    let out_shape = conv3x3_shape(input.shape(), kernel, padding)?;
    let mut data = vec![0.0f32; out_shape.len()];
    exec::for_each_chunk(exec, &mut data, out_shape.plane(), |o, plane| {
        conv_output_channel(
            input,
            kernel.filter(o),
            kernel.bias[o],
            padding,
            out_shape,
            plane,
        );
    });
    Tensor::from_shape(out_shape, data)
}

/// Output channels per independently computed group.
const CHANNEL_GROUP: usize = 32;
/// Upper bound on patch-matrix elements per row tile.
const PATCH_BUDGET: usize = 1 << 21;

/// Computes output channels `first..first + count` into `out` (channel-major planes).
fn conv_gemm_group(
    input: &Tensor,
    kernel: &ConvKernel,
    first: usize,
    count: usize,
    padding: Padding,
    out_shape: Shape,
    out: &mut [f32],
) {
    let (in_h, in_w) = (input.height(), input.width());
    let (out_h, out_w) = (out_shape.height, out_shape.width);
    let plane = out_h * out_w;
    let pad = padding.border();
    let k_len = kernel.in_channels * 9;
    let a = &kernel.weights[first * k_len..(first + count) * k_len];

    for (o, p) in out.chunks_exact_mut(plane).enumerate() {
        p.fill(kernel.bias[first + o]);
    }

    let rows_per_tile = (PATCH_BUDGET / (k_len * out_w)).clamp(1, out_h);
    let mut patches = vec![0.0f32; k_len * rows_per_tile * out_w];
    let mut y0 = 0;
    while y0 < out_h {
        let rows = rows_per_tile.min(out_h - y0);
        let n = rows * out_w;
        let patches = &mut patches[..k_len * n];

        // patch row k = (ic, ky, kx) holds the shifted input for every output pixel of the tile
        for (k, prow) in patches.chunks_exact_mut(n).enumerate() {
            let (ic, ky, kx) = (k / 9, (k % 9) / 3, k % 3);
            let in_plane = input.plane(ic);
            for (r, dst) in prow.chunks_exact_mut(out_w).enumerate() {
                let Some(iy) = (y0 + r + ky).checked_sub(pad).filter(|&v| v < in_h) else {
                    dst.fill(0.0);
                    continue;
                };
                let x0 = pad.saturating_sub(kx);
                let x1 = out_w.min(in_w + pad - kx);
                let src = &in_plane[iy * in_w..(iy + 1) * in_w];
                dst[..x0].fill(0.0);
                dst[x0..x1].copy_from_slice(&src[x0 + kx - pad..x1 + kx - pad]);
                dst[x1..].fill(0.0);
            }
        }

        // out[o][y0*out_w ..][n] += a[o][k] * patches[k][n]
        let c_offset = y0 * out_w;
        debug_assert!(c_offset + (count - 1) * plane + n <= out.len());
        // SAFETY: `a` is count x k_len and `patches` is k_len x n, both row-major. Destination
        // row o starts at c_offset + o * plane and holds n elements; the last one ends at
        // c_offset + (count - 1) * plane + n <= out.len(). The three buffers do not alias.
        unsafe {
            matrixmultiply::sgemm(
                count,
                k_len,
                n,
                1.0,
                a.as_ptr(),
                k_len as isize,
                1,
                patches.as_ptr(),
                n as isize,
                1,
                1.0,
                out.as_mut_ptr().add(c_offset),
                plane as isize,
                1,
            );
        }
        y0 += rows;
    }
}

/// Fills one output plane, row by row. Each tap is a contiguous multiply-add over a row
/// segment, so the inner loop vectorizes.
fn conv_output_channel(
    input: &Tensor,
    filter: &[f32],
    bias: f32,
    padding: Padding,
    out_shape: Shape,
    plane: &mut [f32],
) {
    let (in_h, in_w) = (input.height(), input.width());
    let (out_h, out_w) = (out_shape.height, out_shape.width);
    let pad = padding.border();

    plane.fill(bias);
    for (y, out_row) in plane.chunks_exact_mut(out_w).enumerate() {
        debug_assert!(y < out_h);
        for (ic, taps) in filter.chunks_exact(9).enumerate() {
            let in_plane = input.plane(ic);
            for ky in 0..3 {
                // input row = y + ky - pad
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&r| r < in_h) else {
                    continue;
                };
                let in_row = &in_plane[iy * in_w..(iy + 1) * in_w];
                for kx in 0..3 {
                    let w = taps[ky * 3 + kx];
                    // output columns whose input column x + kx - pad lies inside the row
                    let x0 = pad.saturating_sub(kx);
                    let x1 = out_w.min(in_w + pad - kx);
                    if x0 >= x1 {
                        continue;
                    }
                    let src = &in_row[x0 + kx - pad..x1 + kx - pad];
                    for (o, &v) in out_row[x0..x1].iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            }
        }
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub(crate) fn relu_in_place(t: Tensor) -> Tensor {
    let shape = t.shape();
    let mut data = t.into_data();
    for v in &mut data {
        *v = v.max(0.0);
    }
    Tensor::from_shape(shape, data).expect("shape unchanged")
}

pub fn maxpool2x2_shape(input: Shape) -> Result<Shape> {
    if !input.height.is_multiple_of(2) || !input.width.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "2x2 max pooling needs even spatial dimensions, got {}x{}",
            input.height, input.width
        )));
    }
    Ok(Shape::new(
        input.channels,
        input.height / 2,
        input.width / 2,
    ))
}

/// Non-overlapping 2x2 max pooling with stride 2.
pub fn maxpool2x2(input: &Tensor) -> Result<Tensor> {
    maxpool2x2_with(input, Exec::Sequential)
}

pub fn maxpool2x2_with(input: &Tensor, exec: Exec) -> Result<Tensor> {
    let out_shape = maxpool2x2_shape(input.shape())?;
    let in_w = input.width();
    let out_w = out_shape.width;
    let mut data = vec![0.0f32; out_shape.len()];
    exec::for_each_chunk(exec, &mut data, out_shape.plane(), |c, plane| {
        let src = input.plane(c);
        for (y, out_row) in plane.chunks_exact_mut(out_w).enumerate() {
            let top = &src[2 * y * in_w..(2 * y + 1) * in_w];
            let bottom = &src[(2 * y + 1) * in_w..(2 * y + 2) * in_w];
            for (x, o) in out_row.iter_mut().enumerate() {
                *o = top[2 * x]
                    .max(top[2 * x + 1])
                    .max(bottom[2 * x])
                    .max(bottom[2 * x + 1]);
            }
        }
    });
    Tensor::from_shape(out_shape, data)
}

/// Numerically stable softmax (the maximum is subtracted before exponentiation).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::reference;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_kernel(rng: &mut impl Rng, out: usize, inp: usize) -> ConvKernel {
        let weights = (0..out * inp * 9)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let bias = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ConvKernel::new(out, inp, weights, bias).unwrap()
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut k = random_kernel(&mut rng, 1, 1);
        k.set_bias(0, 0.0);
        let out = conv3x3(&Tensor::zeros(1, 7, 7), &k, Padding::Same).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 7, 7));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_valid_convs_shrink_7_to_1() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = random_tensor(&mut rng, 4, 7, 7);
        let mut sizes = vec![];
        for _ in 0..3 {
            let k = random_kernel(&mut rng, 4, 4);
            t = conv3x3(&t, &k, Padding::Valid).unwrap();
            sizes.push((t.height(), t.width()));
        }
        assert_eq!(sizes, vec![(5, 5), (3, 3), (1, 1)]);
    }

    #[test]
    fn matches_direct_loop_on_2x5x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&mut rng, 2, 5, 5);
        let k = random_kernel(&mut rng, 3, 2);
        for padding in [Padding::Same, Padding::Valid] {
            let slow = reference::conv3x3(&x, &k, padding).unwrap();
            let fast = conv3x3(&x, &k, padding).unwrap();
            assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-5);
            let direct = conv3x3_direct(&x, &k, padding, Exec::Sequential).unwrap();
            assert!(direct.max_abs_diff(&slow).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn conv_errors() {
        let k = ConvKernel::zeros(1, 2);
        assert!(conv3x3(&Tensor::zeros(1, 4, 4), &k, Padding::Same).is_err());
        assert!(conv3x3(&Tensor::zeros(2, 2, 5), &k, Padding::Valid).is_err());
        assert!(conv3x3(&Tensor::zeros(2, 3, 3), &k, Padding::Valid).is_ok());
        assert!(ConvKernel::new(1, 1, vec![0.0; 8], vec![0.0]).is_err());
        assert!(ConvKernel::new(1, 1, vec![0.0; 9], vec![]).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&mut rng, 5, 12, 9);
        let k = random_kernel(&mut rng, 7, 5);
        let a = conv3x3_with(&x, &k, Padding::Same, Exec::Sequential).unwrap();
        let b = conv3x3_with(&x, &k, Padding::Same, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        // more channels than one group, and a map tall enough to need several row tiles
        let x = random_tensor(&mut rng, 40, 70, 66);
        let k = random_kernel(&mut rng, 70, 40);
        let a = conv3x3_with(&x, &k, Padding::Valid, Exec::Sequential).unwrap();
        let b = conv3x3_with(&x, &k, Padding::Valid, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let d = conv3x3_direct(&x, &k, Padding::Valid, Exec::Parallel).unwrap();
        assert!(a.max_abs_diff(&d).unwrap() <= 1e-4);
        assert_eq!(
            maxpool2x2_with(&x, Exec::Parallel).unwrap(),
            maxpool2x2(&x).unwrap()
        );
    }

    #[test]
    fn relu_sign_cases() {
        let t = Tensor::new(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn maxpool_single_block_and_shape() {
        let t = Tensor::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(maxpool2x2(&t).unwrap().data(), &[4.0]);
        let big = Tensor::zeros(64, 224, 224);
        assert_eq!(maxpool2x2(&big).unwrap().shape(), Shape::new(64, 112, 112));
        assert!(maxpool2x2(&Tensor::zeros(1, 3, 4)).is_err());
    }

    #[test]
    fn maxpool_matches_nested_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tensor(&mut rng, 3, 8, 8);
        assert_eq!(maxpool2x2(&t).unwrap(), reference::maxpool2x2(&t).unwrap());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert!(softmax(&[]).is_err());
        // exp(k - 3) / (e^-2 + e^-1 + 1), evaluated by hand to 17 digits
        let expected = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_64,
            0.665_240_955_774_821_9,
        ];
        for (p, e) in softmax(&[1.0, 2.0, 3.0]).unwrap().iter().zip(expected) {
            assert!((p - e).abs() < 1e-15, "{p} vs {e}");
        }
        let big = softmax(&[1000.0, 1000.0, -1000.0]).unwrap();
        assert!((big[0] - 0.5).abs() < 1e-12 && big[2] >= 0.0);
    }

    proptest! {
        #[test]
        fn relu_is_idempotent_and_nonnegative(v in proptest::collection::vec(-10.0f32..10.0, 1..64)) {
            let t = Tensor::new(1, 1, v.len(), v.clone()).unwrap();
            let r = relu(&t);
            prop_assert_eq!(relu(&r), r.clone());
            for (out, inp) in r.data().iter().zip(&v) {
                prop_assert!(*out >= 0.0);
                if *inp > 0.0 {
                    prop_assert!(*out <= *inp);
                }
            }
        }

        #[test]
        fn softmax_sums_to_one(v in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let p = softmax(&v).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn maxpool_dominates_and_hits_its_block(seed in any::<u64>(), c in 1usize..4, h in 1usize..6, w in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(&mut rng, c, 2 * h, 2 * w);
            let p = maxpool2x2(&t).unwrap();
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let block = [
                            t.get(ch, 2 * y, 2 * x),
                            t.get(ch, 2 * y, 2 * x + 1),
                            t.get(ch, 2 * y + 1, 2 * x),
                            t.get(ch, 2 * y + 1, 2 * x + 1),
                        ];
                        let m = p.get(ch, y, x);
                        prop_assert!(block.iter().all(|&b| m >= b));
                        prop_assert!(block.contains(&m));
                    }
                }
            }
        }

        #[test]
        fn conv_is_linear_without_bias(seed in any::<u64>(), a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, h, w) = (rng.gen_range(1..5), rng.gen_range(1..10), rng.gen_range(1..10));
            let x = random_tensor(&mut rng, c, h, w);
            let y = random_tensor(&mut rng, c, h, w);
            let mut k = random_kernel(&mut rng, 3, c);
            for o in 0..3 {
                k.set_bias(o, 0.0);
            }
            let combo = Tensor::from_fn(c, h, w, |ch, r, col| a * x.get(ch, r, col) + b * y.get(ch, r, col));
            let lhs = conv3x3(&combo, &k, Padding::Same).unwrap();
            let cx = conv3x3(&x, &k, Padding::Same).unwrap();
            let cy = conv3x3(&y, &k, Padding::Same).unwrap();
            let rhs = Tensor::from_fn(3, h, w, |o, r, col| a * cx.get(o, r, col) + b * cy.get(o, r, col));
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-4);
        }

        #[test]
        fn valid_recurrence(n in 3usize..24, k in 1usize..12) {
            prop_assume!(n > 2 * k);
            let kernel = ConvKernel::zeros(1, 1);
            let mut t = Tensor::zeros(1, n, n);
            for _ in 0..k {
                t = conv3x3(&t, &kernel, Padding::Valid).unwrap();
            }
            prop_assert_eq!((t.height(), t.width()), (n - 2 * k, n - 2 * k));
        }
    }
}
