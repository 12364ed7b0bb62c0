//! Command implementations behind the CLI, usable as a library.
//!
//! Every command is deterministic for a fixed seed and input set: seeds are
//! derived from named streams, images are visited in sorted order, and all
//! artifacts are written with round-trip float formatting. Running a command
//! twice produces byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use deepsc_core::classifier::{evaluate, train_svm, EvalReport};
use deepsc_core::descriptor::{compute_descriptors, GrayImage};
use deepsc_core::executor::Executor;
use deepsc_core::grid::build_grid;
use deepsc_core::pipeline::{
    extract_features, features_from_codes, train_model, DeepSCModel, TrainOutcome,
};
use deepsc_core::seeds::Stream;
use rand::Rng;

use crate::config::RunConfig;
use crate::dataset::{list_images, scan_dataset, split_dataset, DataSplit};
use crate::error::{config_error, core_data, core_data_with, data_error, CmdResult};
use crate::exec::{with_jobs, RayonExec};
use crate::formats;
use crate::imageio::load_gray_image;

/// Split seed for one evaluation repeat. Repeat 0 is the seed every
/// single-run command uses, so `--repeats 1` reproduces a plain run.
pub fn split_seed(seed: u64, repeat: usize) -> u64 {
    Stream::Repeat { index: repeat }.rng(seed).gen()
}

fn svm_seed(seed: u64) -> u64 {
    Stream::Svm.rng(seed).gen()
}

/// Images under `dir`, labeled. A directory of class subdirectories yields
/// `name/file` ids with class labels; a flat directory yields file-name ids
/// with label 0.
fn collect_images(dir: &Path) -> CmdResult<Vec<(String, PathBuf, usize)>> {
    let has_subdirs = fs::read_dir(dir)
        .map_err(|e| data_error!("cannot read {}: {e}", dir.display()))?
        .filter_map(Result::ok)
        .any(|e| e.path().is_dir());
    let mut out = Vec::new();
    if has_subdirs {
        for (label, class) in scan_dataset(dir)?.into_iter().enumerate() {
            for path in class.images {
                let file = path.file_name().unwrap_or_default().to_string_lossy();
                out.push((format!("{}/{file}", class.name), path.clone(), label));
            }
        }
    } else {
        for path in list_images(dir)? {
            let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            out.push((file, path.clone(), 0));
        }
    }
    if out.is_empty() {
        return Err(data_error!("{}: no png/pgm images found", dir.display()));
    }
    Ok(out)
}

fn load_images(paths: &[PathBuf]) -> CmdResult<Vec<GrayImage>> {
    paths.iter().map(|p| load_gray_image(p)).collect()
}

fn ensure_out_dir(dir: &Path) -> CmdResult<()> {
    fs::create_dir_all(dir).map_err(|e| data_error!("cannot create {}: {e}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> CmdResult<()> {
    fs::write(path, text).map_err(|e| data_error!("cannot write {}: {e}", path.display()))
}

pub struct DescriptorsSummary {
    pub images: usize,
    pub out_path: PathBuf,
}

/// Computes descriptor grids for every image in a directory and writes them
/// as one multi-block descriptor file.
pub fn cmd_descriptors(
    images_dir: &Path,
    out_path: &Path,
    patch: u32,
    spacing: u32,
    jobs: Option<usize>,
) -> CmdResult<DescriptorsSummary> {
    let listed = collect_images(images_dir)?;
    let images = load_images(&listed.iter().map(|(_, p, _)| p.clone()).collect::<Vec<_>>())?;
    let grids = images
        .iter()
        .zip(&listed)
        .map(|(img, (id, ..))| {
            build_grid(img.width(), img.height(), patch, spacing)
                .map_err(|e| data_error!("{id}: {e}"))
        })
        .collect::<CmdResult<Vec<_>>>()?;
    let inputs: Vec<(GrayImage, _)> = images.into_iter().zip(grids).collect();
    let descriptors = with_jobs(jobs, || {
        RayonExec.map(&inputs, |(img, grid)| compute_descriptors(img, grid))
    })?;
    let mut blocks = Vec::with_capacity(listed.len());
    for ((id, ..), result) in listed.iter().zip(&descriptors) {
        match result {
            Ok(dg) => blocks.push((id.as_str(), dg)),
            Err(e) => return Err(data_error!("{id}: {e}")),
        }
    }
    let text = formats::save_descriptors(blocks).map_err(core_data)?;
    write_file(out_path, &text)?;
    Ok(DescriptorsSummary {
        images: listed.len(),
        out_path: out_path.to_owned(),
    })
}

pub struct TrainSummary {
    pub model_path: PathBuf,
    pub log_path: PathBuf,
    pub depth: usize,
    pub feature_dim: usize,
    pub train_images: usize,
    pub warnings: Vec<String>,
}

/// Trains a model on the training split and writes the archive plus a
/// per-epoch loss log.
pub fn cmd_train(config: &RunConfig, jobs: Option<usize>) -> CmdResult<TrainSummary> {
    let mut train_config = config.train_config(config.seed)?;
    train_config.cache_codes = false;
    let classes = scan_dataset(&config.dataset)?;
    let split = split_dataset(
        &classes,
        config.train_per_class,
        config.test_per_class,
        split_seed(config.seed, 0),
    )?;
    let images = load_images(&split.train.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>())?;
    let outcome = with_jobs(jobs, || train_model(&images, &train_config, &RayonExec))?
        .map_err(core_data)?;

    ensure_out_dir(&config.out_dir)?;
    let model_path = config.out_dir.join("model.deepsc");
    let log_path = config.out_dir.join("train_log.txt");
    formats::save_model(&outcome.model, &model_path)
        .map_err(|e| data_error!("cannot write {}: {e}", model_path.display()))?;
    write_file(&log_path, &training_log(&outcome))?;
    Ok(TrainSummary {
        model_path,
        log_path,
        depth: outcome.model.depth(),
        feature_dim: outcome.model.feature_dim(outcome.model.depth()),
        train_images: images.len(),
        warnings: outcome.warnings,
    })
}

/// Per-epoch dictionary objectives and contrastive losses, then warnings.
fn training_log(outcome: &TrainOutcome) -> String {
    let mut log = String::new();
    for (l, layer_log) in outcome.layer_logs.iter().enumerate() {
        let n = l + 1;
        if let Some(losses) = &layer_log.drlim_loss {
            for (epoch, loss) in losses.iter().enumerate() {
                writeln!(log, "layer {n} drlim epoch {epoch} loss {loss}").expect("string write");
            }
        }
        for (epoch, objective) in layer_log.dict_objective.iter().enumerate() {
            writeln!(log, "layer {n} dict epoch {} objective {objective}", epoch + 1)
                .expect("string write");
        }
    }
    for warning in &outcome.warnings {
        writeln!(log, "warning: {warning}").expect("string write");
    }
    log
}

pub struct FeaturesSummary {
    pub images: usize,
    pub dim: usize,
    pub depth: usize,
    pub out_path: PathBuf,
}

/// Extracts pyramid features for every image in a directory and writes them
/// as sparse text, with class labels when the directory has class layout.
pub fn cmd_features(
    model_path: &Path,
    images_dir: &Path,
    out_path: &Path,
    layers: Option<usize>,
    jobs: Option<usize>,
) -> CmdResult<FeaturesSummary> {
    let model = formats::load_model(model_path)
        .map_err(|e| data_error!("{}: {e}", model_path.display()))?;
    let depth = feature_depth(&model, layers)?;
    let listed = collect_images(images_dir)?;
    let images = load_images(&listed.iter().map(|(_, p, _)| p.clone()).collect::<Vec<_>>())?;
    let features = with_jobs(jobs, || {
        RayonExec.map(&images, |img| extract_features(&model, img, depth))
    })?;
    let mut rows = Vec::with_capacity(features.len());
    for ((id, ..), feature) in listed.iter().zip(features) {
        rows.push(feature.map_err(|e| core_data_with(id, e))?);
    }
    let labels: Vec<usize> = listed.iter().map(|(.., label)| *label).collect();
    let dim = model.feature_dim(depth);
    write_file(out_path, &formats::write_sparse_text(&rows, &labels, Some(dim)))?;
    Ok(FeaturesSummary {
        images: rows.len(),
        dim,
        depth,
        out_path: out_path.to_owned(),
    })
}

fn feature_depth(model: &DeepSCModel, layers: Option<usize>) -> CmdResult<usize> {
    match layers {
        None => Ok(model.depth()),
        Some(n) if n >= 1 && n <= model.depth() => Ok(n),
        Some(n) => Err(config_error!(
            "--layers {n} is outside this model's depth {}",
            model.depth()
        )),
    }
}

pub struct RepeatOutcome {
    pub split_seed: u64,
    pub report: EvalReport,
    pub warnings: Vec<String>,
}

pub struct EvalSummary {
    pub class_names: Vec<String>,
    pub depth: usize,
    pub repeats: Vec<RepeatOutcome>,
    pub mean: f64,
    pub std: f64,
    pub report_path: PathBuf,
    pub report_text: String,
}

/// The full experiment: repeated split → train → features → SVM → report.
/// Each repeat reshuffles the split with its own derived seed; the summary
/// aggregates the average per-class accuracies as mean ± population std.
pub fn cmd_evaluate(config: &RunConfig, layers: Option<usize>, jobs: Option<usize>) -> CmdResult<EvalSummary> {
    let classes = scan_dataset(&config.dataset)?;
    let mut repeats = Vec::with_capacity(config.repeats);
    let mut class_names = Vec::new();
    let mut depth_used = 0;
    for repeat in 0..config.repeats {
        let seed_r = split_seed(config.seed, repeat);
        let split = split_dataset(&classes, config.train_per_class, config.test_per_class, seed_r)?;
        if split.test.is_empty() {
            return Err(data_error!(
                "the split leaves no test images; lower train_per_class or set test_per_class"
            ));
        }
        let (report, warnings, depth) = evaluate_once(config, &split, layers, jobs)?;
        class_names = split.class_names;
        depth_used = depth;
        repeats.push(RepeatOutcome {
            split_seed: seed_r,
            report,
            warnings,
        });
    }

    let averages: Vec<f64> = repeats.iter().map(|r| r.report.average).collect();
    let mean = averages.iter().sum::<f64>() / averages.len() as f64;
    let var = averages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / averages.len() as f64;
    let std = var.sqrt();

    let report_text = format_eval_report(&class_names, &repeats, mean, std, depth_used);
    ensure_out_dir(&config.out_dir)?;
    let report_path = config.out_dir.join("report.txt");
    write_file(&report_path, &report_text)?;
    Ok(EvalSummary {
        class_names,
        depth: depth_used,
        repeats,
        mean,
        std,
        report_path,
        report_text,
    })
}

fn evaluate_once(
    config: &RunConfig,
    split: &DataSplit,
    layers: Option<usize>,
    jobs: Option<usize>,
) -> CmdResult<(EvalReport, Vec<String>, usize)> {
    let train_config = config.train_config(config.seed)?;
    let train_images = load_images(&split.train.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>())?;
    let train_labels: Vec<usize> = split.train.iter().map(|(_, l)| *l).collect();
    let outcome = with_jobs(jobs, || train_model(&train_images, &train_config, &RayonExec))?
        .map_err(core_data)?;
    let model = &outcome.model;
    let depth = feature_depth(model, layers)?;

    // Training features come from the codes cached during training; the
    // forward pass reproduces them bitwise, so this is purely a time saver.
    let cached = outcome.cached_codes.as_ref().expect("cache_codes is set");
    let train_features = cached
        .iter()
        .map(|codes| features_from_codes(model, &codes[..depth]).map_err(core_data))
        .collect::<CmdResult<Vec<_>>>()?;

    let test_images = load_images(&split.test.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>())?;
    let test_labels: Vec<usize> = split.test.iter().map(|(_, l)| *l).collect();
    let test_features = with_jobs(jobs, || {
        RayonExec.map(&test_images, |img| extract_features(model, img, depth))
    })?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(core_data)?;

    let trained = train_svm(
        &train_features,
        &train_labels,
        config.svm.c,
        config.svm.epochs,
        svm_seed(config.seed),
    )
    .map_err(core_data)?;
    let report = evaluate(&trained.svm, &test_features, &test_labels).map_err(core_data)?;
    Ok((report, outcome.warnings, depth))
}

fn format_eval_report(
    class_names: &[String],
    repeats: &[RepeatOutcome],
    mean: f64,
    std: f64,
    depth: usize,
) -> String {
    let mut out = String::new();
    writeln!(out, "layers used: {depth}").expect("string write");
    for (i, repeat) in repeats.iter().enumerate() {
        writeln!(out, "\nrepeat {} (split seed {})", i + 1, repeat.split_seed).expect("string write");
        for warning in &repeat.warnings {
            writeln!(out, "  warning: {warning}").expect("string write");
        }
        writeln!(out, "  {:<24} accuracy", "class").expect("string write");
        for (class, accuracy) in repeat.report.per_class.iter().enumerate() {
            let name = class_names
                .get(class)
                .map(String::as_str)
                .unwrap_or("(unknown label)");
            match accuracy {
                Some(a) => writeln!(out, "  {name:<24} {a:.4}").expect("string write"),
                None => writeln!(out, "  {name:<24} (no test samples)").expect("string write"),
            }
        }
        writeln!(out, "  average per-class accuracy: {:.4}", repeat.report.average)
            .expect("string write");
    }
    writeln!(
        out,
        "\nrepeats: {}\naverage per-class accuracy: {mean:.4} +/- {std:.4}",
        repeats.len()
    )
    .expect("string write");
    out
}

pub struct GridPoint {
    pub c: f64,
    pub average: f64,
}

/// Sweeps the SVM regularization constant over one fixed split and model:
/// train features once, retrain only the classifier per value.
pub fn cmd_grid(
    config: &RunConfig,
    c_values: &[f64],
    layers: Option<usize>,
    jobs: Option<usize>,
) -> CmdResult<Vec<GridPoint>> {
    if c_values.is_empty() {
        return Err(config_error!("the C grid needs at least one value"));
    }
    for &c in c_values {
        if !(c > 0.0 && c.is_finite()) {
            return Err(config_error!("C values must be positive, got {c}"));
        }
    }
    let classes = scan_dataset(&config.dataset)?;
    let split = split_dataset(
        &classes,
        config.train_per_class,
        config.test_per_class,
        split_seed(config.seed, 0),
    )?;
    if split.test.is_empty() {
        return Err(data_error!("the split leaves no test images"));
    }

    let train_config = config.train_config(config.seed)?;
    let train_images = load_images(&split.train.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>())?;
    let train_labels: Vec<usize> = split.train.iter().map(|(_, l)| *l).collect();
    let outcome = with_jobs(jobs, || train_model(&train_images, &train_config, &RayonExec))?
        .map_err(core_data)?;
    let model = &outcome.model;
    let depth = feature_depth(model, layers)?;
    let cached = outcome.cached_codes.as_ref().expect("cache_codes is set");
    let train_features = cached
        .iter()
        .map(|codes| features_from_codes(model, &codes[..depth]).map_err(core_data))
        .collect::<CmdResult<Vec<_>>>()?;
    let test_images = load_images(&split.test.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>())?;
    let test_labels: Vec<usize> = split.test.iter().map(|(_, l)| *l).collect();
    let test_features = with_jobs(jobs, || {
        RayonExec.map(&test_images, |img| extract_features(model, img, depth))
    })?
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(core_data)?;

    let mut points = Vec::with_capacity(c_values.len());
    for &c in c_values {
        let trained = train_svm(
            &train_features,
            &train_labels,
            c,
            config.svm.epochs,
            svm_seed(config.seed),
        )
        .map_err(core_data)?;
        let report = evaluate(&trained.svm, &test_features, &test_labels).map_err(core_data)?;
        points.push(GridPoint { c, average: report.average });
    }
    Ok(points)
}
