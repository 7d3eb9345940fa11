use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::nn::ConvKernel;

pub const WEIGHT_MAGIC: [u8; 4] = *b"GNW1";

/// One kernel per sublayer, in model traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    kernels: Vec<ConvKernel>,
}

impl WeightStore {
    pub fn new(spec: &ModelSpec, kernels: Vec<ConvKernel>) -> Result<Self> {
        let store = WeightStore { kernels };
        store.check(spec)?;
        Ok(store)
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        WeightStore {
            kernels: spec
                .sublayers()
                .map(|s| ConvKernel::zeros(s.out_channels, s.in_channels))
                .collect(),
        }
    }

    /// Uniform weights and biases in `[-s, s]`, `s = sqrt(1 / (9 * in_channels))`.
    ///
    /// Uses ChaCha8, so a seed yields the same values on every platform.
    pub fn random(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernels = spec
            .sublayers()
            .map(|s| {
                let bound = (1.0 / (9.0 * s.in_channels as f64)).sqrt() as f32;
                let weights = (0..s.out_channels * s.in_channels * 9)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect();
                let bias = (0..s.out_channels)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect();
                ConvKernel::new(s.out_channels, s.in_channels, weights, bias)
                    .expect("shapes derived from spec")
            })
            .collect();
        WeightStore { kernels }
    }

    pub fn kernels(&self) -> &[ConvKernel] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [ConvKernel] {
        &mut self.kernels
    }

    /// Verifies kernel count and shapes against the spec's sublayer sequence.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let n = spec.sublayer_count();
        if self.kernels.len() != n {
            return Err(Error::Shape(format!(
                "spec has {n} sublayers but {} kernels were supplied",
                self.kernels.len()
            )));
        }
        for (i, (k, s)) in self.kernels.iter().zip(spec.sublayers()).enumerate() {
            if k.out_channels() != s.out_channels || k.in_channels() != s.in_channels {
                return Err(Error::Shape(format!(
                    "sublayer {i} expects a {}x{} kernel, got {}x{}",
                    s.out_channels,
                    s.in_channels,
                    k.out_channels(),
                    k.in_channels()
                )));
            }
        }
        Ok(())
    }

    /// Little-endian weight file: magic, spec fingerprint, then per sublayer
    /// `out:u32 in:u32 weights:f32[out*in*9] bias:f32[out]`.
    pub fn to_bytes(&self, spec: &ModelSpec) -> Result<Vec<u8>> {
        self.check(spec)?;
        let floats: usize = self
            .kernels
            .iter()
            .map(|k| k.weights().len() + k.bias().len())
            .sum();
        let mut out = Vec::with_capacity(12 + 8 * self.kernels.len() + 4 * floats);
        out.extend_from_slice(&WEIGHT_MAGIC);
        out.extend_from_slice(&spec.fingerprint().to_le_bytes());
        for k in &self.kernels {
            out.extend_from_slice(&(k.out_channels() as u32).to_le_bytes());
            out.extend_from_slice(&(k.in_channels() as u32).to_le_bytes());
            for v in k.weights().iter().chain(k.bias()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(spec: &ModelSpec, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != WEIGHT_MAGIC {
            return Err(Error::format("weight file", "missing GNW1 magic"));
        }
        let found = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let expected = spec.fingerprint();
        if found != expected {
            return Err(Error::FingerprintMismatch { expected, found });
        }
        let mut kernels = Vec::with_capacity(spec.sublayer_count());
        for (i, s) in spec.sublayers().enumerate() {
            let out = r.u32()? as usize;
            let inp = r.u32()? as usize;
            if out != s.out_channels || inp != s.in_channels {
                return Err(Error::format(
                    "weight file",
                    format!(
                        "record {i} is {out}x{inp}, spec sublayer is {}x{}",
                        s.out_channels, s.in_channels
                    ),
                ));
            }
            let weights = r.f32s(out * inp * 9)?;
            let bias = r.f32s(out)?;
            kernels.push(ConvKernel::new(out, inp, weights, bias)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                "weight file",
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(WeightStore { kernels })
    }

    pub fn save(&self, spec: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes(spec)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(spec, &bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format("weight file", "truncated"));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format("weight file", "record too large"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
