//! Dataset layout and train/test splitting.
//!
//! A dataset root holds one subdirectory per class; class ids follow the
//! subdirectory names in lexicographic order. A split shuffles each class
//! with a seeded generator and takes the first `train_per_class` images for
//! training, then `test_per_class` (or all remaining) for testing, so a
//! fixed seed always lands on the same images.

use std::fs;
use std::path::{Path, PathBuf};

use deepsc_core::seeds::Stream;
use rand::seq::SliceRandom;

use crate::error::{data_error, CmdResult};

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm"];

#[derive(Debug, Clone)]
pub struct ClassDir {
    pub name: String,
    pub images: Vec<PathBuf>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| data_error!("cannot read {}: {e}", dir.display()))?;
    let mut images = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| data_error!("cannot read {}: {e}", dir.display()))?;
        let path = entry.path();
        if path.is_file() && is_image(&path) {
            images.push(path);
        }
    }
    images.sort();
    Ok(images)
}

/// Scans a dataset root into per-class image lists; classes are the
/// subdirectories in sorted order and each must hold at least one image.
pub fn scan_dataset(root: &Path) -> CmdResult<Vec<ClassDir>> {
    let entries = fs::read_dir(root).map_err(|e| data_error!("cannot read {}: {e}", root.display()))?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| data_error!("cannot read {}: {e}", root.display()))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(data_error!(
            "{}: a dataset needs one subdirectory per class",
            root.display()
        ));
    }
    let mut classes = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let images = list_images(&dir)?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if images.is_empty() {
            return Err(data_error!("class {name} has no png/pgm images"));
        }
        classes.push(ClassDir { name, images });
    }
    Ok(classes)
}

/// A labeled train/test partition; labels index into `class_names`.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub class_names: Vec<String>,
    pub train: Vec<(PathBuf, usize)>,
    pub test: Vec<(PathBuf, usize)>,
}

pub fn split_dataset(
    classes: &[ClassDir],
    train_per_class: usize,
    test_per_class: Option<usize>,
    split_seed: u64,
) -> CmdResult<DataSplit> {
    if train_per_class == 0 {
        return Err(crate::error::config_error!(
            "train_per_class must be at least 1"
        ));
    }
    let mut rng = Stream::Split.rng(split_seed);
    let mut split = DataSplit {
        class_names: classes.iter().map(|c| c.name.clone()).collect(),
        train: Vec::new(),
        test: Vec::new(),
    };
    for (label, class) in classes.iter().enumerate() {
        let needed = train_per_class + test_per_class.unwrap_or(0);
        if class.images.len() < needed {
            return Err(data_error!(
                "class {} has {} images but the split needs {needed}",
                class.name,
                class.images.len()
            ));
        }
        let mut order: Vec<usize> = (0..class.images.len()).collect();
        order.shuffle(&mut rng);
        let test_count = test_per_class.unwrap_or(class.images.len() - train_per_class);
        for (rank, &idx) in order.iter().enumerate() {
            let item = (class.images[idx].clone(), label);
            if rank < train_per_class {
                split.train.push(item);
            } else if rank < train_per_class + test_count {
                split.test.push(item);
            }
        }
    }
    Ok(split)
}
