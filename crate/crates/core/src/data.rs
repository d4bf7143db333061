//! Datasets: IDX image/label files, average-pool downsampling, and seeded
//! Gaussian blobs.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{Sample, Target};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// `N x d` features (row-major) with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
    /// Image shape `(rows, cols)` when the features are pixels.
    image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        classes: usize,
        split: Split,
    ) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} feature values do not split into {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Label {
                label: bad,
                classes,
            });
        }
        Ok(Self {
            features,
            dim,
            labels,
            classes,
            split,
            image_shape: None,
        })
    }

    pub fn with_image_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.dim {
            return Err(Error::Shape(format!(
                "{rows}x{cols} image does not match dimension {}",
                self.dim
            )));
        }
        self.image_shape = Some((rows, cols));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample {
            x: self.row(i),
            target: Target::Class(self.labels[i]),
        }
    }

    pub fn samples(&self, indices: &[usize]) -> Vec<Sample<'_>> {
        indices.iter().map(|&i| self.sample(i)).collect()
    }

    pub fn all_samples(&self) -> Vec<Sample<'_>> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }
}

fn read_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            msg: format!("header ends before byte {}", at + 4),
        })
}

/// Decoded IDX u8 tensor: dimensions and raw bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX file of unsigned bytes with the expected magic number.
pub fn decode_idx(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<IdxTensor> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != expected_magic {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("magic 0x{magic:08x}, expected 0x{expected_magic:08x}"),
        });
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let available = bytes.len() - start;
    if available < len {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            msg: format!("payload has {available} bytes, header promises {len}"),
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[start..start + len].to_vec(),
    })
}

/// Encodes an unsigned-byte IDX tensor; the magic's last byte is the rank.
pub fn encode_idx(tensor: &IdxTensor) -> Vec<u8> {
    let magic = 0x0000_0800u32 | tensor.dims.len() as u32;
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image/label pair; pixels are scaled by `1/255`.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = decode_idx(&read_file(images_path)?, IDX_IMAGES_MAGIC, images_path)?;
    let labels = decode_idx(&read_file(labels_path)?, IDX_LABELS_MAGIC, labels_path)?;
    let (n, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(Error::Pairing {
            images: n,
            labels: labels.dims[0],
        });
    }
    let features = images.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.data.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(1, |&m| m + 1).max(10);
    Dataset::new(features, rows * cols, labels, classes, split)?.with_image_shape(rows, cols)
}

/// Average pooling with a `factor x factor` window and stride `factor`.
pub fn avg_pool_downsample(data: &Dataset, factor: usize) -> Result<Dataset> {
    let (rows, cols) = data
        .image_shape
        .ok_or_else(|| Error::Shape("dataset has no image shape".into()))?;
    if factor == 0 || rows % factor != 0 || cols % factor != 0 {
        return Err(Error::Shape(format!(
            "{rows}x{cols} images are not divisible by {factor}"
        )));
    }
    let (out_rows, out_cols) = (rows / factor, cols / factor);
    let area = (factor * factor) as f64;
    let mut features = Vec::with_capacity(data.len() * out_rows * out_cols);
    for i in 0..data.len() {
        let img = data.row(i);
        for br in 0..out_rows {
            for bc in 0..out_cols {
                let mut sum = 0.0;
                for r in br * factor..(br + 1) * factor {
                    for c in bc * factor..(bc + 1) * factor {
                        sum += img[r * cols + c];
                    }
                }
                features.push(sum / area);
            }
        }
    }
    Dataset::new(
        features,
        out_rows * out_cols,
        data.labels.clone(),
        data.classes,
        data.split,
    )?
    .with_image_shape(out_rows, out_cols)
}

/// Mean of class `k` in `[0, 1]^d`. With `d >= K` class `k` lights up every
/// coordinate `i` with `i mod K == k`; otherwise the class index is written
/// in base `q = ceil(K^(1/d))` and each digit is scaled into `[0, 1]`.
pub fn blob_mean(k: usize, d: usize, classes: usize) -> Vec<f64> {
    if d >= classes {
        return (0..d)
            .map(|i| f64::from(u8::from(i % classes == k)))
            .collect();
    }
    let mut q = 2usize;
    while q.checked_pow(d as u32).is_some_and(|p| p < classes) {
        q += 1;
    }
    let mut rest = k;
    (0..d)
        .map(|_| {
            let digit = rest % q;
            rest /= q;
            digit as f64 / (q - 1) as f64
        })
        .collect()
}

/// `n_per_class` points per class drawn from `N(mean_k, spread^2 I)`,
/// grouped by class.
pub fn synthetic_blobs(
    seed: u64,
    n_per_class: usize,
    d: usize,
    classes: usize,
    spread: f64,
    split: Split,
) -> Result<Dataset> {
    if classes < 2 || d == 0 {
        return Err(Error::Shape(format!(
            "blobs need at least 2 classes and 1 dimension, got K={classes}, d={d}"
        )));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::Domain(format!(
            "spread must be finite and nonnegative, got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(n_per_class * classes * d);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for k in 0..classes {
        let mean = blob_mean(k, d, classes);
        for _ in 0..n_per_class {
            features.extend(mean.iter().map(|m| m + spread * noise.sample(&mut rng)));
            labels.push(k);
        }
    }
    Dataset::new(features, d, labels, classes, split)
}
