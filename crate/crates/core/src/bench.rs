//! Stage-resolved timing of the detection pipeline: preprocess, forward, decode, NMS.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::detect::{decode, nms_with, BoundingBox, DecodeConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::{preprocess_with, ChannelMode, Image, PreprocessOptions};
use crate::model::{execute, validate, Head, ModelSpec, WeightStore};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub decode: DecodeConfig,
    pub warmup: usize,
    pub iterations: usize,
    /// Defaults to Y for one input channel and RGB for three.
    pub channel_mode: Option<ChannelMode>,
    pub preprocess: PreprocessOptions,
    /// Parallelism used inside forward and NMS. Timing is sequential by default.
    pub exec: Exec,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            decode: DecodeConfig::default(),
            warmup: 1,
            iterations: 10,
            channel_mode: None,
            preprocess: PreprocessOptions::default(),
            exec: Exec::Sequential,
        }
    }
}

/// Wall-clock totals over all timed frames, in nanoseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTimings {
    pub preprocess_ns: u64,
    pub forward_ns: u64,
    pub decode_ns: u64,
    pub nms_ns: u64,
    /// Whole frames, including bookkeeping between stages.
    pub total_ns: u64,
    pub frames: u64,
    pub fps: f64,
    /// Frame rate with NMS time removed.
    pub fps_without_nms: f64,
    pub mode: Exec,
    pub timer_resolution_ns: u64,
}

impl StageTimings {
    pub fn stages(&self) -> [(&'static str, u64); 4] {
        [
            ("preprocess", self.preprocess_ns),
            ("forward", self.forward_ns),
            ("decode", self.decode_ns),
            ("nms", self.nms_ns),
        ]
    }

    pub fn stage_sum_ns(&self) -> u64 {
        self.stages().iter().map(|s| s.1).sum()
    }

    /// Percentage of `total_ns`; 0 when nothing was measured.
    pub fn share(&self, ns: u64) -> f64 {
        if self.total_ns == 0 {
            0.0
        } else {
            100.0 * ns as f64 / self.total_ns as f64
        }
    }

    pub fn host_postprocess_ns(&self) -> u64 {
        self.decode_ns + self.nms_ns
    }

    fn finish(&mut self) {
        self.fps = rate(self.frames, self.total_ns);
        self.fps_without_nms = rate(self.frames, self.total_ns.saturating_sub(self.nms_ns));
    }
}

fn rate(frames: u64, ns: u64) -> f64 {
    frames as f64 / (ns.max(1) as f64 * 1e-9)
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub timings: StageTimings,
    /// Final detections for each input image.
    pub detections: Vec<Vec<BoundingBox>>,
}

/// Smallest observable step of the monotonic clock.
pub fn timer_resolution() -> Duration {
    (0..16)
        .map(|_| {
            let start = Instant::now();
            loop {
                let d = start.elapsed();
                if !d.is_zero() {
                    break d;
                }
            }
        })
        .min()
        .unwrap_or_default()
}

fn same_boxes(a: &[BoundingBox], b: &[BoundingBox]) -> bool {
    let bits = |x: &BoundingBox| {
        (
            x.class_id,
            [x.score, x.x1, x.y1, x.x2, x.y2].map(f32::to_bits),
        )
    };
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| bits(p) == bits(q))
}

/// One full pass over an image without timing.
pub fn detect_image(
    spec: &ModelSpec,
    weights: &WeightStore,
    image: &Image,
    cfg: &DecodeConfig,
    mode: ChannelMode,
    prep: &PreprocessOptions,
    exec: Exec,
) -> Result<Vec<BoundingBox>> {
    let input = preprocess_with(image, spec.input_size, mode, prep)?;
    let out = execute(spec, weights, &input, exec)?;
    let boxes = decode(&out, image.width() as u32, image.height() as u32, cfg)?;
    Ok(nms_with(&boxes, cfg.nms_iou_threshold, exec))
}

pub fn default_channel_mode(input_channels: usize) -> ChannelMode {
    if input_channels == 1 {
        ChannelMode::Y
    } else {
        ChannelMode::Rgb
    }
}

/// Runs `warmup` untimed and `iterations` timed frames, cycling over `images`.
///
/// Every frame of an image must reproduce that image's first result bit for bit.
pub fn run_benchmark(
    spec: &ModelSpec,
    weights: &WeightStore,
    images: &[Image],
    cfg: &BenchConfig,
) -> Result<BenchOutcome> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidArgument(
            "iterations must be at least 1".into(),
        ));
    }
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to benchmark".into()));
    }
    if !matches!(spec.head, Head::Detection { .. }) {
        return Err(Error::Unsupported(
            "benchmarking needs a detection head".into(),
        ));
    }
    let report = validate(spec);
    if !report.ok() {
        return Err(Error::InvalidSpec(report.to_string()));
    }
    weights.check(spec)?;
    cfg.decode.validate()?;
    let mode = cfg
        .channel_mode
        .unwrap_or_else(|| default_channel_mode(spec.input_channels));
    if mode.channels() != spec.input_channels {
        return Err(Error::Shape(format!(
            "channel mode {mode} gives {} channels, model takes {}",
            mode.channels(),
            spec.input_channels
        )));
    }

    let mut reference: HashMap<usize, Vec<BoundingBox>> = HashMap::new();
    let mut check = |frame: usize, idx: usize, boxes: Vec<BoundingBox>| -> Result<()> {
        match reference.get(&idx) {
            Some(prev) if !same_boxes(prev, &boxes) => Err(Error::Nondeterministic(frame as u64)),
            Some(_) => Ok(()),
            None => {
                reference.insert(idx, boxes);
                Ok(())
            }
        }
    };

    for frame in 0..cfg.warmup {
        let idx = frame % images.len();
        let boxes = detect_image(
            spec,
            weights,
            &images[idx],
            &cfg.decode,
            mode,
            &cfg.preprocess,
            cfg.exec,
        )?;
        check(frame, idx, boxes)?;
    }

    let ns = |a: Instant, b: Instant| (b - a).as_nanos() as u64;
    let mut t = StageTimings {
        preprocess_ns: 0,
        forward_ns: 0,
        decode_ns: 0,
        nms_ns: 0,
        total_ns: 0,
        frames: cfg.iterations as u64,
        fps: 0.0,
        fps_without_nms: 0.0,
        mode: cfg.exec,
        timer_resolution_ns: timer_resolution().as_nanos() as u64,
    };
    for frame in 0..cfg.iterations {
        let idx = frame % images.len();
        let image = &images[idx];
        let t0 = Instant::now();
        let input = preprocess_with(image, spec.input_size, mode, &cfg.preprocess)?;
        let t1 = Instant::now();
        let out = execute(spec, weights, &input, cfg.exec)?;
        let t2 = Instant::now();
        let raw = decode(
            &out,
            image.width() as u32,
            image.height() as u32,
            &cfg.decode,
        )?;
        let t3 = Instant::now();
        let boxes = nms_with(&raw, cfg.decode.nms_iou_threshold, cfg.exec);
        let t4 = Instant::now();
        check(cfg.warmup + frame, idx, boxes)?;
        let t5 = Instant::now();
        t.preprocess_ns += ns(t0, t1);
        t.forward_ns += ns(t1, t2);
        t.decode_ns += ns(t2, t3);
        t.nms_ns += ns(t3, t4);
        t.total_ns += ns(t0, t5);
    }
    t.finish();

    let detections = (0..images.len())
        .map(|i| match reference.remove(&i) {
            Some(b) => Ok(b),
            None => detect_image(
                spec,
                weights,
                &images[i],
                &cfg.decode,
                mode,
                &cfg.preprocess,
                cfg.exec,
            ),
        })
        .collect::<Result<_>>()?;
    Ok(BenchOutcome {
        timings: t,
        detections,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    /// Flat `key=value` lines.
    KeyValue,
}

pub fn report(t: &StageTimings, format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Text => {
            let ms = |ns: u64| ns as f64 / 1e6;
            let _ = writeln!(
                s,
                "# mode={} timer_resolution_ns={} frames={}",
                t.mode, t.timer_resolution_ns, t.frames
            );
            let _ = writeln!(s, "{:<12} {:>12} {:>7}", "stage", "time_ms", "share");
            for (name, v) in t.stages() {
                let _ = writeln!(s, "{name:<12} {:>12.3} {:>6.1}%", ms(v), t.share(v));
            }
            let other = t.total_ns.saturating_sub(t.stage_sum_ns());
            let _ = writeln!(
                s,
                "{:<12} {:>12.3} {:>6.1}%",
                "other",
                ms(other),
                t.share(other)
            );
            let _ = writeln!(
                s,
                "{:<12} {:>12.3} {:>6.1}%",
                "total",
                ms(t.total_ns),
                t.share(t.total_ns)
            );
            let host = t.host_postprocess_ns();
            let _ = writeln!(
                s,
                "host postprocess (decode+nms): {:.3} ms, {:.4}%",
                ms(host),
                t.share(host)
            );
            let _ = writeln!(s, "fps {:.2} (without nms {:.2})", t.fps, t.fps_without_nms);
        }
        ReportFormat::KeyValue => {
            for (name, v) in t.stages() {
                let _ = writeln!(s, "{name}_ns={v}");
            }
            let _ = writeln!(s, "total_ns={}", t.total_ns);
            let _ = writeln!(s, "frames={}", t.frames);
            let _ = writeln!(s, "fps={}", t.fps);
            let _ = writeln!(s, "fps_without_nms={}", t.fps_without_nms);
            let _ = writeln!(s, "host_postprocess_ns={}", t.host_postprocess_ns());
            let _ = writeln!(s, "mode={}", t.mode);
            let _ = writeln!(s, "timer_resolution_ns={}", t.timer_resolution_ns);
        }
    }
    s
}

/// Reads back the key/value form of [`report`]. Unknown keys are ignored.
pub fn parse_report(text: &str) -> Result<StageTimings> {
    let mut kv = HashMap::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("bench report", format!("not key=value: `{line}`")))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| Error::format("bench report", format!("missing `{k}`")))
    };
    let int = |k: &str| -> Result<u64> {
        get(k)?
            .parse()
            .map_err(|_| Error::format("bench report", format!("bad integer for `{k}`")))
    };
    let real = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::format("bench report", format!("bad number for `{k}`")))
    };
    Ok(StageTimings {
        preprocess_ns: int("preprocess_ns")?,
        forward_ns: int("forward_ns")?,
        decode_ns: int("decode_ns")?,
        nms_ns: int("nms_ns")?,
        total_ns: int("total_ns")?,
        frames: int("frames")?,
        fps: real("fps")?,
        fps_without_nms: real("fps_without_nms")?,
        mode: get("mode")?
            .parse()
            .map_err(|e: String| Error::format("bench report", e))?,
        timer_resolution_ns: int("timer_resolution_ns")?,
    })
}
