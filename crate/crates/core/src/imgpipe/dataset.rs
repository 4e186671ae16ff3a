//! Labelled samples, deterministic splits and directory ingestion.
//!
//! Layout: `<root>/<class_dir>/<image files>`. Class indices follow the
//! lexicographic order of the class directories, samples follow sorted paths.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::image_ops::prepare_image;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

/// Class 0 and class 1.
pub const CLASS_NAMES: [&str; 2] = ["Ae. aegypti", "Ae. albopictus"];

pub const DEFAULT_IMAGE_SIZE: (usize, usize) = (180, 180);

pub fn default_class_names() -> Vec<String> {
    CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SampleSource {
    Path(PathBuf),
    Synthetic(usize),
}

impl fmt::Display for SampleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSource::Path(p) => write!(f, "{}", p.display()),
            SampleSource::Synthetic(i) => write!(f, "synthetic:{i}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    /// `[H, W, 3]`, values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub label: u8,
    pub source: SampleSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.2,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be in [0, 1] and sum to 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

/// Disjoint index sets covering all samples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Per-class shuffle under `rng`, then per-class allocation by ratio, so
    /// each split sees both classes in proportion.
    pub fn stratified(labels: &[u8], ratios: SplitRatios, rng: &Rng) -> Result<Self> {
        ratios.validate()?;
        let mut split = Split::default();
        for class in 0..=1u8 {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            rng.substream(&[stream::SPLIT, u64::from(class)]).shuffle(&mut idx);
            let n = idx.len();
            let n_train = ((n as f64 * ratios.train).round() as usize).min(n);
            let n_val = ((n as f64 * ratios.val).round() as usize).min(n - n_train);
            split.train.extend_from_slice(&idx[..n_train]);
            split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
            split.test.extend_from_slice(&idx[n_train + n_val..]);
        }
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        Ok(split)
    }

    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Split,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, ratios: SplitRatios, rng: &Rng) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.label > 1) {
            return Err(Error::Dataset(format!("label {} outside {{0, 1}} for {}", s.label, s.source)));
        }
        let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
        let split = Split::stratified(&labels, ratios, rng)?;
        let ds = Dataset {
            samples,
            split,
            class_names: default_class_names(),
        };
        for class in 0..=1u8 {
            if !ds.split.train.iter().any(|&i| ds.samples[i].label == class) {
                return Err(Error::Dataset(format!(
                    "training split has no samples of class {class} ({})",
                    ds.class_names[class as usize]
                )));
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, name: SplitName) -> Vec<&Sample> {
        self.split.get(name).iter().map(|&i| &self.samples[i]).collect()
    }

    /// SHA-256 over sources, labels and pixel bits, in sample order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            let src = match &s.source {
                SampleSource::Path(p) => p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                SampleSource::Synthetic(i) => format!("synthetic:{i}"),
            };
            h.update((src.len() as u64).to_le_bytes());
            h.update(src.as_bytes());
            h.update([s.label]);
            for d in s.image.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in s.image.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ClassReport {
    pub class_index: usize,
    pub directory: String,
    pub loaded: usize,
    pub skipped: Vec<SkippedFile>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LoadReport {
    pub root: PathBuf,
    pub classes: Vec<ClassReport>,
}

impl LoadReport {
    pub fn total_loaded(&self) -> usize {
        self.classes.iter().map(|c| c.loaded).sum()
    }

    pub fn total_skipped(&self) -> usize {
        self.classes.iter().map(|c| c.skipped.len()).sum()
    }
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "load report for {}", self.root.display())?;
        for c in &self.classes {
            writeln!(
                f,
                "  class={} dir={} loaded={} skipped={}",
                c.class_index,
                c.directory,
                c.loaded,
                c.skipped.len()
            )?;
            for s in &c.skipped {
                writeln!(f, "    skip {}: {}", s.path.display(), s.reason)?;
            }
        }
        write!(f, "  total loaded={} skipped={}", self.total_loaded(), self.total_skipped())
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
        .collect();
    entries.sort();
    Ok(entries)
}

/// Scans the class directories of `root` and returns them in class order.
pub fn class_directories(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset root {} is not a directory", root.display())));
    }
    let dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if dirs.len() != 2 {
        return Err(Error::Dataset(format!(
            "expected exactly 2 class subdirectories under {}, found {}",
            root.display(),
            dirs.len()
        )));
    }
    Ok(dirs)
}

/// Decodes every image under `root`, resized to `image_size` and rescaled.
/// Files that fail to decode are skipped and listed in the report; a class
/// with no usable image is an error.
pub fn load_samples(root: &Path, image_size: (usize, usize)) -> Result<(Vec<Sample>, LoadReport)> {
    let dirs = class_directories(root)?;
    let mut report = LoadReport {
        root: root.to_path_buf(),
        classes: Vec::new(),
    };
    let mut samples = Vec::new();
    for (label, dir) in dirs.iter().enumerate() {
        let files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| p.is_file()).collect();
        let decoded: Vec<(PathBuf, Result<Tensor<f32>>)> = files
            .into_par_iter()
            .map(|path| {
                let img = fs::read(&path)
                    .map_err(Error::from)
                    .and_then(|bytes| prepare_image(&bytes, image_size))
                    .map(|d| d.pixels);
                (path, img)
            })
            .collect();
        let mut class = ClassReport {
            class_index: label,
            directory: dir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            ..Default::default()
        };
        for (path, img) in decoded {
            match img {
                Ok(image) => {
                    class.loaded += 1;
                    samples.push(Sample {
                        image,
                        label: label as u8,
                        source: SampleSource::Path(path),
                    });
                }
                Err(e) => {
                    tracing::warn!(path = %path.display(), error = %e, "skipping undecodable file");
                    class.skipped.push(SkippedFile {
                        path,
                        reason: e.to_string(),
                    });
                }
            }
        }
        if class.loaded == 0 {
            return Err(Error::Dataset(format!(
                "class directory {} has no usable images",
                dir.display()
            )));
        }
        report.classes.push(class);
    }
    Ok((samples, report))
}

pub fn load_dataset(
    root: &Path,
    image_size: (usize, usize),
    ratios: SplitRatios,
    rng: &Rng,
) -> Result<(Dataset, LoadReport)> {
    let (samples, report) = load_samples(root, image_size)?;
    Ok((Dataset::new(samples, ratios, rng)?, report))
}
