use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gnetdet_core::bench::{self, default_channel_mode, BenchConfig, ReportFormat};
use gnetdet_core::classify::{decode_v1, decode_v2};
use gnetdet_core::detect::{format_detections, BoundingBox, DecodeConfig};
use gnetdet_core::eval::{self, EvalConfig};
use gnetdet_core::io::{self, ChannelMode, Image};
use gnetdet_core::labels::ClassNames;
use gnetdet_core::model::{
    build_gnetdet_large_with, build_gnetdet_small_with, build_gnetfc_v1_with, build_gnetfc_v2_with,
    execute, validate, BuildOptions, Head, ModelSpec, WeightStore,
};

use crate::args::*;
use crate::{CliError, CliResult};

pub fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Validate(a) => cmd_validate(&a, out),
        Command::Init(a) => cmd_init(&a, out),
        Command::Detect(a) => cmd_detect(&a, out),
        Command::Classify(a) => cmd_classify(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::ConvertVoc(a) => cmd_convert_voc(&a, out),
    }
}

fn refuse_overwrite(path: &Path, force: bool) -> CliResult {
    if path.exists() && !force {
        return Err(CliError::usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

fn load_names(path: Option<&Path>) -> CliResult<ClassNames> {
    Ok(match path {
        Some(p) => ClassNames::load(p)?,
        None => ClassNames::voc(),
    })
}

/// Loads and validates a config, then its weights.
fn load_model(a: &ModelArgs) -> CliResult<(ModelSpec, WeightStore, ChannelMode)> {
    let spec = ModelSpec::load(&a.config)?;
    let report = validate(&spec);
    if !report.ok() {
        return Err(CliError::invalid(format!(
            "{}: invalid model\n{report}",
            a.config.display()
        )));
    }
    let weights = WeightStore::load(&spec, &a.weights)?;
    let mode = a
        .mode
        .unwrap_or_else(|| default_channel_mode(spec.input_channels));
    if mode.channels() != spec.input_channels {
        return Err(CliError::data(format!(
            "mode {mode} gives {} channels but the model takes {}",
            mode.channels(),
            spec.input_channels
        )));
    }
    Ok((spec, weights, mode))
}

fn is_image(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ppm" | "pgm" | "pnm"))
}

/// Image files of a directory, sorted by path.
fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

fn image_id(path: &Path) -> CliResult<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::data(format!("cannot derive an image id from {}", path.display())))
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> CliResult {
    let spec = ModelSpec::load(&a.config)?;
    let report = validate(&spec);
    if report.ok() {
        let shape = spec.output_shape()?;
        writeln!(
            out,
            "ok {}: {} sublayers, {} pools, output {shape}, {} parameters",
            spec.name,
            spec.sublayer_count(),
            spec.pool_count(),
            spec.param_count()
        )?;
        Ok(())
    } else {
        write!(out, "{report}")?;
        Err(CliError::invalid(format!(
            "{}: {} violation(s)",
            a.config.display(),
            report.violations.len()
        )))
    }
}

fn cmd_init(a: &InitArgs, out: &mut dyn Write) -> CliResult {
    let opts = BuildOptions {
        max_channel_width: a.max_width,
        head_relu: a.head_relu,
    };
    let ch = a.mode.channels();
    let spec = match a.arch {
        Arch::GnetdetLarge => build_gnetdet_large_with(a.size, ch, a.classes, &opts)?,
        Arch::GnetdetSmall => build_gnetdet_small_with(a.size, ch, a.classes, &opts)?,
        Arch::GnetfcV1 | Arch::GnetfcV2 if a.size != 224 => {
            return Err(CliError::usage("GnetFC models take 224x224 input only"))
        }
        Arch::GnetfcV1 => build_gnetfc_v1_with(ch, a.classes, a.width, &opts)?,
        Arch::GnetfcV2 => build_gnetfc_v2_with(ch, a.classes, a.grid, a.width, &opts)?,
    };
    let report = validate(&spec);
    if !report.ok() {
        return Err(CliError::invalid(format!(
            "generated model is invalid\n{report}"
        )));
    }
    refuse_overwrite(&a.config, a.force)?;
    refuse_overwrite(&a.weights, a.force)?;
    let weights = WeightStore::random(&spec, a.seed);
    write_file(&a.config, spec.to_config_string().as_bytes())?;
    write_file(&a.weights, &weights.to_bytes(&spec)?)?;
    writeln!(
        out,
        "wrote {} and {} ({}, {} parameters, fingerprint {:016x})",
        a.config.display(),
        a.weights.display(),
        spec.name,
        spec.param_count(),
        spec.fingerprint()
    )?;
    Ok(())
}

fn detect_one(
    spec: &ModelSpec,
    weights: &WeightStore,
    mode: ChannelMode,
    cfg: &DecodeConfig,
    a: &DetectArgs,
    path: &Path,
) -> CliResult<(Image, Vec<BoundingBox>)> {
    let image = io::load_image(path)?;
    let prep = a.model.preprocess_options();
    let boxes = bench::detect_image(spec, weights, &image, cfg, mode, &prep, a.model.exec)?;
    Ok((image, boxes))
}

fn cmd_detect(a: &DetectArgs, out: &mut dyn Write) -> CliResult {
    let (spec, weights, mode) = load_model(&a.model)?;
    if !matches!(spec.head, Head::Detection { .. }) {
        return Err(CliError::usage(format!(
            "{} is not a detection model",
            spec.name
        )));
    }
    let cfg = a.thresholds.decode_config();
    cfg.validate()?;
    let names = load_names(a.names.as_deref())?;

    if !a.input.is_dir() {
        for p in a.out.iter().chain(&a.render) {
            refuse_overwrite(p, a.force)?;
        }
        let (image, boxes) = detect_one(&spec, &weights, mode, &cfg, a, &a.input)?;
        let text = format_detections(&boxes, &names);
        match &a.out {
            Some(p) => write_file(p, text.as_bytes())?,
            None => out.write_all(text.as_bytes())?,
        }
        if let Some(p) = &a.render {
            write_file(p, &io::encode_pnm(&io::draw_boxes(&image, &boxes)))?;
        }
        return Ok(());
    }

    let files = list_images(&a.input)?;
    let ids = files
        .iter()
        .map(|f| image_id(f))
        .collect::<CliResult<Vec<_>>>()?;
    let targets = |dir: &Option<PathBuf>, ext: &str| -> Vec<PathBuf> {
        dir.iter()
            .flat_map(|d| ids.iter().map(move |id| d.join(format!("{id}.{ext}"))))
            .collect()
    };
    let (txt, ppm) = (targets(&a.out, "txt"), targets(&a.render, "ppm"));
    for p in txt.iter().chain(&ppm) {
        refuse_overwrite(p, a.force)?;
    }
    for d in a.out.iter().chain(&a.render) {
        fs::create_dir_all(d)?;
    }
    for (i, file) in files.iter().enumerate() {
        let (image, boxes) = detect_one(&spec, &weights, mode, &cfg, a, file)?;
        let text = format_detections(&boxes, &names);
        match txt.get(i) {
            Some(p) => write_file(p, text.as_bytes())?,
            None => {
                for line in text.lines() {
                    writeln!(out, "{} {line}", ids[i])?;
                }
            }
        }
        if let Some(p) = ppm.get(i) {
            write_file(p, &io::encode_pnm(&io::draw_boxes(&image, &boxes)))?;
        }
    }
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs, out: &mut dyn Write) -> CliResult {
    let (spec, weights, mode) = load_model(&a.model)?;
    let image = io::load_image(&a.image)?;
    let input = io::preprocess_with(&image, spec.input_size, mode, &a.model.preprocess_options())?;
    let output = execute(&spec, &weights, &input, a.model.exec)?;
    let scores = match spec.head {
        Head::ClassifyV1 { num_classes } => decode_v1(&output, num_classes)?,
        Head::ClassifyV2 { num_classes, .. } => decode_v2(&output, num_classes)?,
        Head::Detection { .. } => {
            return Err(CliError::usage(format!(
                "{} is not a classification model",
                spec.name
            )))
        }
    };
    out.write_all(scores.format_top_k(a.top_k).as_bytes())?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(CliError::usage(format!(
            "IoU threshold {} outside [0, 1]",
            a.iou
        )));
    }
    let names = load_names(a.names.as_deref())?;
    let gts = eval::load_ground_truth(&a.ground_truth, &names)?;
    let dets = eval::load_detections(&a.detections, &names)?;
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        method: a.method,
        exec: a.exec,
    };
    let result = eval::evaluate(&dets, &gts, &cfg)?;
    for (class, ap) in &result.per_class_ap {
        writeln!(out, "AP {} {ap:.4}", names.label(*class))?;
    }
    writeln!(out, "mAP {:.4}", result.map_score)?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let (spec, weights, mode) = load_model(&a.model)?;
    let mut images = Vec::new();
    if a.synthetic {
        images.push(Image::filled(
            spec.input_size,
            spec.input_size,
            &vec![128; mode.channels()],
        )?);
    }
    for p in &a.images {
        if p.is_dir() {
            for f in list_images(p)? {
                images.push(io::load_image(f)?);
            }
        } else {
            images.push(io::load_image(p)?);
        }
    }
    if images.is_empty() {
        return Err(CliError::usage(
            "no images given; pass image paths or --synthetic",
        ));
    }
    let cfg = BenchConfig {
        decode: a.thresholds.decode_config(),
        warmup: a.warmup,
        iterations: a.iterations,
        channel_mode: Some(mode),
        preprocess: a.model.preprocess_options(),
        exec: a.model.exec,
    };
    let outcome = bench::run_benchmark(&spec, &weights, &images, &cfg)?;
    let format = match a.format {
        Format::Text => ReportFormat::Text,
        Format::Kv => ReportFormat::KeyValue,
    };
    out.write_all(bench::report(&outcome.timings, format).as_bytes())?;
    Ok(())
}

fn cmd_convert_voc(a: &ConvertVocArgs, out: &mut dyn Write) -> CliResult {
    let names = load_names(a.names.as_deref())?;
    let mut files: Vec<PathBuf> = fs::read_dir(&a.xml_dir)
        .map_err(|e| CliError::data(format!("{}: {e}", a.xml_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();
    refuse_overwrite(&a.out, a.force)?;
    let mut gts = Vec::new();
    for f in &files {
        let xml =
            fs::read_to_string(f).map_err(|e| CliError::data(format!("{}: {e}", f.display())))?;
        let id = image_id(f)?;
        gts.extend(eval::parse_voc_xml(&xml, &id, &names).map_err(|e| {
            CliError::new(
                crate::exit_code(&e),
                anyhow::anyhow!("{}: {e}", f.display()),
            )
        })?);
    }
    write_file(&a.out, eval::format_ground_truth(&gts).as_bytes())?;
    writeln!(
        out,
        "wrote {} boxes from {} files to {}",
        gts.len(),
        files.len(),
        a.out.display()
    )?;
    Ok(())
}
