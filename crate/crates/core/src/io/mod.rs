//! Images: binary PNM codecs, BT.601 color conversion, preprocessing into model input
//! tensors, and box rendering.

mod draw;
mod pnm;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use draw::{draw_boxes, PALETTE};
pub use pnm::{decode_pnm, encode_pnm, load_image, save_image};

/// 8-bit interleaved image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image size {width}x{height} is empty"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, not {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, sample: &[u8]) -> Result<Self> {
        let pixels = sample
            .iter()
            .copied()
            .cycle()
            .take(width * height * sample.len())
            .collect();
        Image::new(width, height, sample.len(), pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    fn require_rgb(&self, what: &str) -> Result<()> {
        if self.channels == 3 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{what} needs a 3-channel image, got 1 channel"
            )))
        }
    }

    /// Gray images are replicated into three equal channels.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        Image {
            channels: 3,
            pixels,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ChannelMode {
    Rgb,
    Yuv,
    #[default]
    Y,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Y => 1,
            ChannelMode::Rgb | ChannelMode::Yuv => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Rgb => "rgb",
            ChannelMode::Yuv => "yuv",
            ChannelMode::Y => "y",
        }
    }
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(ChannelMode::Rgb),
            "yuv" => Ok(ChannelMode::Yuv),
            "y" => Ok(ChannelMode::Y),
            other => Err(format!("unknown channel mode `{other}` (rgb, yuv or y)")),
        }
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// BT.601 full range, offset chroma. Output stays interleaved.
pub fn rgb_to_yuv(image: &Image) -> Result<Image> {
    image.require_rgb("rgb_to_yuv")?;
    let pixels = image
        .pixels
        .chunks_exact(3)
        .flat_map(|p| {
            let (r, g, b) = (p[0], p[1], p[2]);
            let y = luma(r, g, b);
            [
                to_u8(y),
                to_u8(0.492 * (b as f64 - y) + 128.0),
                to_u8(0.877 * (r as f64 - y) + 128.0),
            ]
        })
        .collect();
    Ok(Image { pixels, ..*image })
}

/// First plane of a YUV image.
pub fn extract_y(yuv: &Image) -> Result<Image> {
    yuv.require_rgb("extract_y")?;
    let pixels = yuv.pixels.iter().step_by(3).copied().collect();
    Ok(Image {
        channels: 1,
        pixels,
        ..*yuv
    })
}

pub fn rgb_to_y(image: &Image) -> Result<Image> {
    image.require_rgb("rgb_to_y")?;
    let pixels = image
        .pixels
        .chunks_exact(3)
        .map(|p| to_u8(luma(p[0], p[1], p[2])))
        .collect();
    Ok(Image {
        channels: 1,
        pixels,
        ..*image
    })
}

/// Converts to the channel layout of `mode`. Gray input is treated as R = G = B.
pub fn convert(image: &Image, mode: ChannelMode) -> Image {
    match (mode, image.channels) {
        (ChannelMode::Y, 1) | (ChannelMode::Rgb, 3) => image.clone(),
        (ChannelMode::Rgb, _) => image.to_rgb(),
        (ChannelMode::Y, _) => rgb_to_y(image).expect("3 channels"),
        (ChannelMode::Yuv, _) => rgb_to_yuv(&image.to_rgb()).expect("3 channels"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessOptions {
    /// Samples are divided by this value.
    pub divisor: f32,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { divisor: 255.0 }
    }
}

/// Channel conversion, bilinear resize to `target` x `target`, and scaling to [0, 1].
pub fn preprocess(image: &Image, target: usize, mode: ChannelMode) -> Result<Tensor> {
    preprocess_with(image, target, mode, &PreprocessOptions::default())
}

pub fn preprocess_with(
    image: &Image,
    target: usize,
    mode: ChannelMode,
    opts: &PreprocessOptions,
) -> Result<Tensor> {
    if target == 0 {
        return Err(Error::InvalidArgument(
            "target size must be positive".into(),
        ));
    }
    if !(opts.divisor.is_finite() && opts.divisor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "divisor {} must be positive",
            opts.divisor
        )));
    }
    let img = convert(image, mode);
    let c = img.channels;
    let scale = opts.divisor as f64;
    let mut data = vec![0f32; c * target * target];

    if img.width == target && img.height == target {
        for (i, v) in img.pixels.iter().enumerate() {
            let (pix, ch) = (i / c, i % c);
            data[ch * target * target + pix] = (*v as f64 / scale) as f32;
        }
    } else {
        let xs = sample_axis(img.width, target);
        let ys = sample_axis(img.height, target);
        let at = |x: usize, y: usize, ch: usize| img.pixels[(y * img.width + x) * c + ch] as f64;
        for ch in 0..c {
            let plane = &mut data[ch * target * target..(ch + 1) * target * target];
            for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                    let top = lerp(at(x0, y0, ch), at(x1, y0, ch), tx);
                    let bottom = lerp(at(x0, y1, ch), at(x1, y1, ch), tx);
                    plane[oy * target + ox] = (lerp(top, bottom, ty) / scale) as f32;
                }
            }
        }
    }
    Ok(Tensor::new(c, target, target, data)?.map(|v| v.clamp(0.0, 1.0)))
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Half-pixel-centre source taps for each output coordinate.
fn sample_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb(r: u8, g: u8, b: u8) -> Image {
        Image::new(1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn image_invariants() {
        assert!(Image::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(Image::new(2, 2, 2, vec![0; 8]).is_err());
        assert!(Image::new(0, 2, 1, vec![]).is_err());
        let g = Image::new(2, 1, 1, vec![3, 9]).unwrap();
        assert_eq!(g.to_rgb().pixels(), &[3, 3, 3, 9, 9, 9]);
    }

    #[test]
    fn yuv_reference_colors() {
        assert_eq!(rgb_to_yuv(&rgb(255, 255, 255)).unwrap().pixels()[0], 255);
        assert_eq!(rgb_to_yuv(&rgb(0, 0, 0)).unwrap().pixels(), &[0, 128, 128]);
        let red = rgb_to_yuv(&rgb(255, 0, 0)).unwrap();
        assert_eq!(red.pixels()[0], 76);
        // U = 0.492 * (0 - 76.245) + 128 = 90.49, V = 0.877 * (255 - 76.245) + 128 = 284.8 -> 255
        assert_eq!(&red.pixels()[1..], &[90, 255]);
        assert!(rgb_to_yuv(&Image::new(1, 1, 1, vec![0]).unwrap()).is_err());
        assert!(extract_y(&Image::new(1, 1, 1, vec![0]).unwrap()).is_err());
    }

    #[test]
    fn identity_resize_path() {
        let img = Image::new(
            224,
            224,
            1,
            (0..224 * 224).map(|i| (i % 251) as u8).collect(),
        )
        .unwrap();
        let t = preprocess(&img, 224, ChannelMode::Y).unwrap();
        assert_eq!(t.shape().to_string(), "1x224x224");
        for (v, p) in t.data().iter().zip(img.pixels()) {
            assert_eq!(*v, (*p as f64 / 255.0) as f32);
        }
    }

    #[test]
    fn channel_counts_follow_mode() {
        let img = Image::filled(10, 6, &[10, 20, 30]).unwrap();
        assert_eq!(preprocess(&img, 8, ChannelMode::Y).unwrap().channels(), 1);
        assert_eq!(preprocess(&img, 8, ChannelMode::Rgb).unwrap().channels(), 3);
        let gray = Image::filled(10, 6, &[40]).unwrap();
        let t = preprocess(&gray, 8, ChannelMode::Yuv).unwrap();
        assert_eq!(t.get(0, 0, 0), (40.0f64 / 255.0) as f32);
        assert_eq!(t.get(1, 3, 3), (128.0f64 / 255.0) as f32);
    }

    #[test]
    fn divisor_is_configurable() {
        let img = Image::filled(4, 4, &[64]).unwrap();
        let t = preprocess_with(
            &img,
            4,
            ChannelMode::Y,
            &PreprocessOptions { divisor: 128.0 },
        )
        .unwrap();
        assert_eq!(t.get(0, 1, 1), 0.5);
        assert!(
            preprocess_with(&img, 4, ChannelMode::Y, &PreprocessOptions { divisor: 0.0 }).is_err()
        );
    }

    proptest! {
        #[test]
        fn y_of_yuv_is_direct_y(px in proptest::collection::vec(any::<u8>(), 3..300)) {
            let n = px.len() / 3;
            let img = Image::new(n, 1, 3, px[..n * 3].to_vec()).unwrap();
            prop_assert_eq!(extract_y(&rgb_to_yuv(&img).unwrap()).unwrap(), rgb_to_y(&img).unwrap());
        }

        #[test]
        fn constant_images_stay_constant(v in any::<u8>(), w in 1usize..40, h in 1usize..40, target in 1usize..50) {
            let img = Image::filled(w, h, &[v]).unwrap();
            let t = preprocess(&img, target, ChannelMode::Y).unwrap();
            let want = (v as f64 / 255.0) as f32;
            prop_assert!(t.data().iter().all(|x| *x == want));
        }

        #[test]
        fn preprocess_in_unit_range(px in proptest::collection::vec(any::<u8>(), 48), target in 1usize..20, mode in prop_oneof![Just(ChannelMode::Y), Just(ChannelMode::Rgb), Just(ChannelMode::Yuv)]) {
            let img = Image::new(4, 4, 3, px).unwrap();
            let t = preprocess(&img, target, mode).unwrap();
            prop_assert!(t.data().iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
