#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gnetdet_core::io::{save_image, Image};
use gnetdet_core::model::{Activation, Head, MajorLayer, ModelSpec, SubLayer, WeightStore};

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn gnetdet(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("gnetdet").chain(args.iter().copied());
    let code = gnetdet_cli::run(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn shipped_configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    v.sort();
    v
}

pub fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// Smallest valid detection model: four 4-channel stages, then the 30-channel head.
pub fn tiny_detector() -> ModelSpec {
    let mut layers: Vec<MajorLayer> = (0..4)
        .map(|i| MajorLayer::new(vec![SubLayer::relu(if i == 0 { 1 } else { 4 }, 4)], true))
        .collect();
    layers.push(MajorLayer::new(
        vec![SubLayer::relu(4, 30).with_activation(Activation::None)],
        false,
    ));
    ModelSpec {
        name: "tiny".into(),
        input_size: 224,
        input_channels: 1,
        max_channel_width: 512,
        head: Head::Detection { num_classes: 20 },
        major_layers: layers,
    }
}

/// Channel 0 passes through every layer unchanged (center tap 1, ReLU keeps it); the last
/// layer writes `head[o]` times channel 0 into output `o`.
pub fn identity_weights(spec: &ModelSpec, head: &[f32]) -> WeightStore {
    let mut w = WeightStore::zeros(spec);
    let n = w.kernels().len();
    for (i, k) in w.kernels_mut().iter_mut().enumerate() {
        if i + 1 < n {
            k.set_weight(0, 0, 1, 1, 1.0);
        } else {
            for (o, v) in head.iter().enumerate() {
                k.set_weight(o, 0, 1, 1, *v);
            }
        }
    }
    w
}

/// Cell (0, 0) raw outputs: box centered in the cell, one cell wide and tall, confidence 1,
/// class 0 logit 10 with the other 19 at 0.
pub fn hand_cell() -> Vec<f32> {
    let mut v = vec![0.0; 30];
    v[0] = 0.5;
    v[1] = 0.5;
    v[2] = 1.0 / 14.0;
    v[3] = 1.0 / 14.0;
    v[8] = 1.0;
    v[10] = 10.0;
    v
}

/// The single line the crafted weights must produce on [`white_corner_image`].
pub const HAND_LINE: &str = "aeroplane 0.999138 0.00 0.00 16.00 16.00";

/// Black 224x224 gray image with a white 16x16 block in the top-left corner.
pub fn white_corner_image() -> Image {
    let mut px = vec![0u8; 224 * 224];
    for y in 0..16 {
        px[y * 224..y * 224 + 16].fill(255);
    }
    Image::new(224, 224, 1, px).unwrap()
}

pub fn write_model(
    dir: &Path,
    stem: &str,
    spec: &ModelSpec,
    weights: &WeightStore,
) -> (PathBuf, PathBuf) {
    let cfg = dir.join(format!("{stem}.cfg"));
    let wts = dir.join(format!("{stem}.gnw"));
    spec.save(&cfg).unwrap();
    weights.save(spec, &wts).unwrap();
    (cfg, wts)
}

pub fn write_image(path: &Path, image: &Image) -> PathBuf {
    save_image(image, path).unwrap();
    path.to_path_buf()
}

pub const TWO_OBJECT_XML: &str = r#"<annotation>
  <folder>VOC2007</folder>
  <filename>000042.jpg</filename>
  <size><width>320</width><height>240</height><depth>3</depth></size>
  <object>
    <name>dog</name><pose>Left</pose><truncated>0</truncated><difficult>0</difficult>
    <bndbox><xmin>12</xmin><ymin>30</ymin><xmax>140</xmax><ymax>200</ymax></bndbox>
  </object>
  <object>
    <name>person</name><difficult>1</difficult>
    <bndbox><xmin>150</xmin><ymin>10</ymin><xmax>310</xmax><ymax>235</ymax></bndbox>
  </object>
</annotation>
"#;
