//! Direct-loop implementations of the operator set.
//!
//! These are written for obviousness, not speed, and serve as test oracles for the
//! optimized kernels in [`super::ops`].

use super::ops::{ConvKernel, Padding};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Six nested loops over (out, y, x, in, ky, kx), accumulated in `f64`.
pub fn conv3x3(input: &Tensor, kernel: &ConvKernel, padding: Padding) -> Result<Tensor> {
    if input.channels() != kernel.in_channels() {
        return Err(Error::Shape("channel mismatch".into()));
    }
    let pad = padding.border() as isize;
    let (h, w) = (input.height() as isize, input.width() as isize);
    let out_h = h + 2 * pad - 2;
    let out_w = w + 2 * pad - 2;
    if out_h < 1 || out_w < 1 {
        return Err(Error::Shape("input too small".into()));
    }
    let mut out = vec![0.0f32; kernel.out_channels() * (out_h * out_w) as usize];
    for o in 0..kernel.out_channels() {
        for y in 0..out_h {
            for x in 0..out_w {
                let mut acc = kernel.bias()[o] as f64;
                for i in 0..kernel.in_channels() {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = y + ky as isize - pad;
                            let ix = x + kx as isize - pad;
                            if iy < 0 || iy >= h || ix < 0 || ix >= w {
                                continue;
                            }
                            acc += kernel.weight(o, i, ky, kx) as f64
                                * input.get(i, iy as usize, ix as usize) as f64;
                        }
                    }
                }
                out[(o as isize * out_h * out_w + y * out_w + x) as usize] = acc as f32;
            }
        }
    }
    Tensor::new(kernel.out_channels(), out_h as usize, out_w as usize, out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn maxpool2x2(input: &Tensor) -> Result<Tensor> {
    if input.height() % 2 == 1 || input.width() % 2 == 1 {
        return Err(Error::Shape("odd size".into()));
    }
    let (c, h, w) = (input.channels(), input.height() / 2, input.width() / 2);
    Ok(Tensor::from_fn(c, h, w, |ch, y, x| {
        let mut m = f32::NEG_INFINITY;
        for dy in 0..2 {
            for dx in 0..2 {
                let v = input.get(ch, 2 * y + dy, 2 * x + dx);
                if v > m {
                    m = v;
                }
            }
        }
        m
    }))
}
