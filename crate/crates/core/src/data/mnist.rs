use std::path::{Path, PathBuf};

use super::idx::{parse_idx, IdxData};
use super::{Dataset, Normalization};
use crate::dynamics::{Batch, Targets};
use crate::error::{Error, Result};

/// Size of the validation block split off the front of the training file,
/// which leaves 55000 of MNIST's 60000 training images.
pub const MNIST_VALIDATION: usize = 5000;

/// Locations of the four IDX files of an MNIST-format dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    /// The conventional file names inside `dir`, accepting either `-` or `.`
    /// before the `idxN-ubyte` suffix.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let pick = |stem: &str, kind: &str| {
            let dashed = dir.join(format!("{stem}-{kind}-ubyte"));
            let dotted = dir.join(format!("{stem}.{kind}-ubyte"));
            if !dashed.exists() && dotted.exists() {
                dotted
            } else {
                dashed
            }
        };
        Self {
            train_images: pick("train-images", "idx3"),
            train_labels: pick("train-labels", "idx1"),
            test_images: pick("t10k-images", "idx3"),
            test_labels: pick("t10k-labels", "idx1"),
        }
    }

    pub fn all_exist(&self) -> bool {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
            .iter()
            .all(|p| p.is_file())
    }
}

#[derive(Clone, Debug)]
pub struct MnistSplits {
    pub train: Dataset<f64>,
    pub validation: Option<Dataset<f64>>,
    pub test: Dataset<f64>,
}

fn read(path: &Path) -> Result<IdxData> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::Idx { offset, reason } => Error::Idx {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

/// Pairs an image file with a label file as a ten-class dataset.
pub fn load_idx_dataset(images: &Path, labels: &Path, name: &str) -> Result<Dataset<f64>> {
    let IdxData::Images { pixels, .. } = read(images)? else {
        return Err(Error::Invalid(format!("{} holds labels, not images", images.display())));
    };
    let IdxData::Labels(labels_raw) = read(labels)? else {
        return Err(Error::Invalid(format!("{} holds images, not labels", labels.display())));
    };
    if pixels.rows() != labels_raw.len() {
        return Err(Error::Invalid(format!(
            "{} images but {} labels",
            pixels.rows(),
            labels_raw.len()
        )));
    }
    let targets = Targets::classes(labels_raw.into_iter().map(usize::from).collect(), 10)?;
    Dataset::new(name, Normalization::UnitInterval, Batch::new(pixels, targets)?)
}

/// Loads all four files and splits the first `validation` training samples
/// off as a validation set.
pub fn load_mnist(files: &MnistFiles, validation: usize) -> Result<MnistSplits> {
    let full = load_idx_dataset(&files.train_images, &files.train_labels, "train")?;
    let test = load_idx_dataset(&files.test_images, &files.test_labels, "test")?;
    let (train, validation) = if validation == 0 {
        (full, None)
    } else {
        let (v, t) = full.split_at(validation)?;
        (t, Some(v))
    };
    Ok(MnistSplits {
        train,
        validation,
        test,
    })
}
