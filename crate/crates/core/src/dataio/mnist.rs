//! IDX (MNIST) loader.
//!
//! Images use magic `0x00000803` (2051) followed by big-endian `u32` count,
//! rows and cols, then one unsigned byte per pixel. Labels use magic
//! `0x00000801` (2049) followed by a big-endian `u32` count and one byte
//! per label.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Images kept as raw bytes; pixel values are `byte / 255`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != rows * cols * labels.len() {
            return Err(Error::dims(
                "Dataset::new",
                rows * cols * labels.len(),
                pixels.len(),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range")));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn raw_image(&self, k: usize) -> &[u8] {
        let n = self.image_size();
        &self.pixels[k * n..(k + 1) * n]
    }

    pub fn image(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.image_size());
        self.image_into(k, &mut out);
        out
    }

    /// Writes the normalized image into `buf`, replacing its contents.
    pub fn image_into(&self, k: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.raw_image(k).iter().map(|&b| b as f64 / 255.0));
    }

    pub fn label(&self, k: usize) -> usize {
        self.labels[k] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn one_hot(&self, k: usize) -> [f64; NUM_CLASSES] {
        let mut t = [0.0; NUM_CLASSES];
        t[self.label(k)] = 1.0;
        t
    }

    pub fn label_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// The first `n` examples (all of them if `n >= len`).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.image_size()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn header_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::DataFormat {
            path: path.to_path_buf(),
            message: "truncated header".into(),
        })
}

fn format_error(path: &Path, message: String) -> Error {
    Error::DataFormat {
        path: path.to_path_buf(),
        message,
    }
}

/// Loads a matching pair of IDX image and label files.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = read_file(images_path)?;
    let magic = header_u32(&img, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(format_error(
            images_path,
            format!("bad image magic {magic}, expected {IMAGE_MAGIC}"),
        ));
    }
    let count = header_u32(&img, 4, images_path)? as usize;
    let rows = header_u32(&img, 8, images_path)? as usize;
    let cols = header_u32(&img, 12, images_path)? as usize;
    let expected = 16 + count * rows * cols;
    if img.len() != expected {
        return Err(format_error(
            images_path,
            format!("expected {expected} bytes for {count} images of {rows}x{cols}, found {}", img.len()),
        ));
    }

    let lab = read_file(labels_path)?;
    let magic = header_u32(&lab, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(format_error(
            labels_path,
            format!("bad label magic {magic}, expected {LABEL_MAGIC}"),
        ));
    }
    let label_count = header_u32(&lab, 4, labels_path)? as usize;
    if lab.len() != 8 + label_count {
        return Err(format_error(
            labels_path,
            format!("expected {} bytes for {label_count} labels, found {}", 8 + label_count, lab.len()),
        ));
    }
    if label_count != count {
        return Err(format_error(
            labels_path,
            format!("{label_count} labels for {count} images"),
        ));
    }
    let labels = lab[8..].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(format_error(labels_path, format!("label {bad} out of range 0..=9")));
    }
    Dataset::new(rows, cols, img[16..].to_vec(), labels)
}

/// Canonical train and test splits under `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let p = |name: &str| -> PathBuf { dir.join(name) };
    let train = load_mnist_idx(&p(TRAIN_IMAGES), &p(TRAIN_LABELS))?;
    let test = load_mnist_idx(&p(TEST_IMAGES), &p(TEST_LABELS))?;
    Ok((train, test))
}
