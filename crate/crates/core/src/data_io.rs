//! Dataset loading: IDX (MNIST) files and synthetic Gaussian blobs.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::numerics::{Matrix, RngStream};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Features (one sample per row) with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(invalid_input(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(invalid_input(format!("label {y} out of range for K={classes}")));
        }
        Ok(Self {
            features,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// The first `n / K` samples of every class, in file order. `n` must
    /// not ask for more of a class than exists.
    pub fn stratified_subset(&self, n: usize) -> Result<Dataset> {
        let per_class = n / self.classes;
        let mut taken = vec![0usize; self.classes];
        let mut idx = Vec::with_capacity(per_class * self.classes);
        for (i, &y) in self.labels.iter().enumerate() {
            if taken[y] < per_class {
                taken[y] += 1;
                idx.push(i);
            }
        }
        if let Some(c) = taken.iter().position(|&t| t < per_class) {
            return Err(invalid_input(format!(
                "class {c} has only {} samples, {per_class} requested",
                taken[c]
            )));
        }
        Ok(Dataset {
            features: self.features.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
        })
    }
}

/// Undoes gzip compression when the buffer starts with the gzip magic.
pub fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("IDX header truncated at byte {at}")))
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::Format(format!("IDX magic {magic:#010x}, expected {want:#010x}")));
    }
    Ok(())
}

/// Parses an IDX3 image file into an `items × (rows·cols)` matrix scaled
/// to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let items = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let pixels = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < items * pixels {
        return Err(Error::Length(format!(
            "{items} images of {pixels} pixels need {} bytes, found {}",
            items * pixels,
            payload.len()
        )));
    }
    let data = payload[..items * pixels].iter().map(|&b| f64::from(b) / 255.0).collect();
    Matrix::new(items, pixels, data)
}

/// Parses an IDX1 label file, rejecting labels `>= classes`.
pub fn parse_idx_labels(bytes: &[u8], classes: usize) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let items = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < items {
        return Err(Error::Length(format!(
            "{items} labels declared, {} bytes present",
            payload.len()
        )));
    }
    payload[..items]
        .iter()
        .map(|&b| {
            let y = usize::from(b);
            if y >= classes {
                Err(Error::Format(format!("label {y} out of range for K={classes}")))
            } else {
                Ok(y)
            }
        })
        .collect()
}

fn find_idx(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{stem}[.gz] not found in {}", dir.display()),
    )))
}

fn read_idx(dir: &Path, stem: &str) -> Result<Vec<u8>> {
    maybe_gunzip(std::fs::read(find_idx(dir, stem)?)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnistOptions {
    /// Class-stratified training subset size.
    pub train_subset: Option<usize>,
    /// Class-stratified test subset size.
    pub test_subset: Option<usize>,
}

/// Loads the standard four MNIST files (optionally gzipped) from `dir`.
pub fn load_mnist(dir: &Path, opts: MnistOptions) -> Result<(Dataset, Dataset)> {
    let load = |img: &str, lbl: &str, split| -> Result<Dataset> {
        let x = parse_idx_images(&read_idx(dir, img)?)?;
        let y = parse_idx_labels(&read_idx(dir, lbl)?, 10)?;
        Dataset::new(x, y, 10, split)
    };
    let mut train = load("train-images-idx3-ubyte", "train-labels-idx1-ubyte", Split::Train)?;
    let mut test = load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", Split::Test)?;
    if let Some(n) = opts.train_subset {
        train = train.stratified_subset(n)?;
    }
    if let Some(n) = opts.test_subset {
        test = test.stratified_subset(n)?;
    }
    Ok((train, test))
}

/// Builds the bytes of an IDX3 image file. Used for fixtures.
pub fn encode_idx_images(items: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, items as u32, rows as u32, cols as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

/// Builds the bytes of an IDX1 label file.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::with_capacity(8 + labels.len());
    b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

/// Parameters of the synthetic blob generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
}

/// Center of class `c`: `separation · e_c` when `dim ≥ K`; otherwise
/// evenly spaced directions on a circle in the first two coordinates, or
/// evenly spaced points on the line when `dim == 1`.
pub fn blob_center(spec: &BlobSpec, c: usize) -> Vec<f64> {
    let mut v = vec![0.0; spec.dim];
    if spec.dim >= spec.classes {
        v[c] = spec.separation;
    } else if spec.dim >= 2 {
        let theta = std::f64::consts::TAU * c as f64 / spec.classes as f64;
        v[0] = spec.separation * theta.cos();
        v[1] = spec.separation * theta.sin();
    } else {
        v[0] = spec.separation * c as f64;
    }
    v
}

/// Isotropic unit-variance Gaussian blobs, one per class, split 80/20 per
/// class with the rounding going to the training side.
pub fn synthetic_blobs(spec: &BlobSpec, rng: &mut RngStream) -> Result<(Dataset, Dataset)> {
    if spec.classes < 2 {
        return Err(invalid_param(format!("blobs need K >= 2, got {}", spec.classes)));
    }
    if spec.dim == 0 || spec.per_class == 0 {
        return Err(invalid_param("blobs need dim >= 1 and per_class >= 1"));
    }
    if !(spec.separation.is_finite() && spec.separation > 0.0) {
        return Err(invalid_param(format!("separation must be positive, got {}", spec.separation)));
    }
    let n_train = (4 * spec.per_class).div_ceil(5);
    let mut train_x = Vec::new();
    let mut train_y = Vec::new();
    let mut test_x = Vec::new();
    let mut test_y = Vec::new();
    for c in 0..spec.classes {
        let center = blob_center(spec, c);
        for i in 0..spec.per_class {
            let (xs, ys) = if i < n_train {
                (&mut train_x, &mut train_y)
            } else {
                (&mut test_x, &mut test_y)
            };
            xs.extend(center.iter().map(|m| m + rng.normal()));
            ys.push(c);
        }
    }
    let train = Dataset::new(
        Matrix::new(train_y.len(), spec.dim, train_x)?,
        train_y,
        spec.classes,
        Split::Train,
    )?;
    let test = Dataset::new(
        Matrix::new(test_y.len(), spec.dim, test_x)?,
        test_y,
        spec.classes,
        Split::Test,
    )?;
    Ok((train, test))
}
