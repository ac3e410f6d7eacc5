//! Dataset ingestion and manipulation.
//!
//! Two sources: the IDX binary format (big-endian headers, magic 0x00000803
//! for images and 0x00000801 for labels) and seeded synthetic Gaussian
//! blobs. Datasets are immutable after construction; removal copies.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// A feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n x d feature matrix.
    pub features: Array2<f64>,
    /// Length-n class indices, each in [0, num_classes).
    pub labels: Vec<usize>,
    pub num_classes: usize,
    /// Free-form provenance string.
    pub source_tag: String,
}

impl Dataset {
    /// Build a dataset, checking the row-count, label-range, and class-count
    /// invariants.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Consistency(format!(
                "feature rows ({}) != label count ({})",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::invalid_argument(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            source_tag: source_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimensionality d.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, as a new dataset (used for probe/member subsets).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid_argument(format!(
                    "subset index {i} out of range for n={}",
                    self.len()
                )));
            }
        }
        let features = self.features.select(ndarray::Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(
            features,
            labels,
            self.num_classes,
            format!("{}:subset", self.source_tag),
        )
    }
}

/// Train/test partition parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of rows assigned to the first (train) half, in (0, 1).
    pub train_fraction: f64,
    pub seed: u64,
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("truncated file while reading {what}"),
        )));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Load an MNIST-style IDX image/label file pair.
///
/// Pixels are scaled by 1/255 into [0, 1]; the class count is fixed at 10.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;

    let img_magic = read_u32_be(&img_bytes, 0, "image magic")?;
    if img_magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic 0x{img_magic:08x} in {} (expected 0x{IDX_IMAGE_MAGIC:08x})",
            images_path.display()
        )));
    }
    let lbl_magic = read_u32_be(&lbl_bytes, 0, "label magic")?;
    if lbl_magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "bad label magic 0x{lbl_magic:08x} in {} (expected 0x{IDX_LABEL_MAGIC:08x})",
            labels_path.display()
        )));
    }

    let n_images = read_u32_be(&img_bytes, 4, "image count")? as usize;
    let rows = read_u32_be(&img_bytes, 8, "row count")? as usize;
    let cols = read_u32_be(&img_bytes, 12, "column count")? as usize;
    let n_labels = read_u32_be(&lbl_bytes, 4, "label count")? as usize;

    if n_images != n_labels {
        return Err(Error::Consistency(format!(
            "image count {n_images} != label count {n_labels}"
        )));
    }

    let d = rows * cols;
    let expected_img_len = 16 + n_images * d;
    if img_bytes.len() < expected_img_len {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!(
                "image file holds {} bytes, header implies {expected_img_len}",
                img_bytes.len()
            ),
        )));
    }
    let expected_lbl_len = 8 + n_labels;
    if lbl_bytes.len() < expected_lbl_len {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!(
                "label file holds {} bytes, header implies {expected_lbl_len}",
                lbl_bytes.len()
            ),
        )));
    }

    let mut features = Array2::zeros((n_images, d));
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let start = 16 + i * d;
        for (j, value) in row.iter_mut().enumerate() {
            *value = img_bytes[start + j] as f64 / 255.0;
        }
    }
    let labels: Vec<usize> = lbl_bytes[8..8 + n_labels].iter().map(|&b| b as usize).collect();

    Dataset::new(
        features,
        labels,
        10,
        format!("idx:{}", images_path.display()),
    )
}

/// Re-encode a dataset as an IDX image/label file pair.
///
/// `rows * cols` must equal the feature dimension and every feature must be
/// an exact multiple of 1/255 in [0, 1] (as produced by `load_idx`), so a
/// load/save round trip is byte-faithful.
pub fn save_idx(
    dataset: &Dataset,
    rows: u32,
    cols: u32,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let d = (rows as usize) * (cols as usize);
    if d != dataset.dim() {
        return Err(Error::invalid_argument(format!(
            "rows*cols = {d} does not match feature dim {}",
            dataset.dim()
        )));
    }
    let n = dataset.len() as u32;

    let mut img = Vec::with_capacity(16 + dataset.len() * d);
    img.write_all(&IDX_IMAGE_MAGIC.to_be_bytes())?;
    img.write_all(&n.to_be_bytes())?;
    img.write_all(&rows.to_be_bytes())?;
    img.write_all(&cols.to_be_bytes())?;
    for &value in dataset.features.iter() {
        let scaled = value * 255.0;
        let byte = scaled.round();
        if !(0.0..=255.0).contains(&byte) || (scaled - byte).abs() > 1e-6 {
            return Err(Error::invalid_argument(format!(
                "feature value {value} is not an exact pixel intensity"
            )));
        }
        img.push(byte as u8);
    }

    let mut lbl = Vec::with_capacity(8 + dataset.len());
    lbl.write_all(&IDX_LABEL_MAGIC.to_be_bytes())?;
    lbl.write_all(&n.to_be_bytes())?;
    for &label in &dataset.labels {
        lbl.push(label as u8);
    }

    fs::write(images_path, img)?;
    fs::write(labels_path, lbl)?;
    Ok(())
}

/// Seeded Gaussian blobs: k unit-variance clusters with centers `separation`
/// apart along coordinate axes, labels assigned round-robin (balanced to
/// within one).
pub fn synth_blobs(seed: u64, n: usize, d: usize, k: usize, separation: f64) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::invalid_argument(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::invalid_argument(format!(
            "n ({n}) must be at least k ({k})"
        )));
    }
    if d < 1 {
        return Err(Error::invalid_argument("d must be >= 1".to_string()));
    }
    if !(separation > 0.0) {
        return Err(Error::invalid_argument(format!(
            "separation must be positive, got {separation}"
        )));
    }

    // Center for class c sits on axis (c mod d) at distance
    // separation * (1 + c/d): distinct centers pairwise >= separation apart.
    let mut centers = Array2::zeros((k, d));
    for c in 0..k {
        centers[[c, c % d]] = separation * (1.0 + (c / d) as f64);
    }

    let mut rng = rng::rng_from_seed(seed);
    let normal = StandardNormal;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        labels.push(label);
        for j in 0..d {
            let noise: f64 = normal.sample(&mut rng);
            features[[i, j]] = centers[[label, j]] + noise;
        }
    }

    Dataset::new(
        features,
        labels,
        k,
        format!("blobs:seed={seed},n={n},d={d},k={k},sep={separation}"),
    )
}

/// Delete the rows at `indices` (which must be sorted, unique, and in
/// range), preserving survivor order. The input dataset is untouched.
pub fn remove_indices(dataset: &Dataset, indices: &[usize]) -> Result<Dataset> {
    let n = dataset.len();
    for window in indices.windows(2) {
        if window[0] >= window[1] {
            return Err(Error::invalid_argument(format!(
                "indices must be sorted and unique, got {} before {}",
                window[0], window[1]
            )));
        }
    }
    if let Some(&last) = indices.last() {
        if last >= n {
            return Err(Error::invalid_argument(format!(
                "index {last} out of range for n={n}"
            )));
        }
    }

    let mut keep = Vec::with_capacity(n - indices.len());
    let mut cursor = 0;
    for i in 0..n {
        if cursor < indices.len() && indices[cursor] == i {
            cursor += 1;
        } else {
            keep.push(i);
        }
    }

    let features = dataset.features.select(ndarray::Axis(0), &keep);
    let labels = keep.iter().map(|&i| dataset.labels[i]).collect();
    Dataset::new(
        features,
        labels,
        dataset.num_classes,
        format!("{}:minus{}", dataset.source_tag, indices.len()),
    )
}

/// Seeded shuffle, then partition at floor(train_fraction * n).
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(Error::invalid_argument("cannot split an empty dataset".to_string()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid_argument(format!(
            "train_fraction must lie strictly between 0 and 1, got {}",
            spec.train_fraction
        )));
    }

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::rng_from_seed(spec.seed);
    rng::shuffle(&mut rng, &mut order);

    let cut = (spec.train_fraction * n as f64).floor() as usize;
    let (first, second) = order.split_at(cut);
    Ok((dataset.subset(first)?, dataset.subset(second)?))
}
