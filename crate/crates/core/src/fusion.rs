//! Per-sample normalization and stacking of the depth and RGB feature sets.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Depth,
    Rgb,
}

/// One modality's features, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatureSet {
    pub values: DMatrix<f64>,
    pub modality: Modality,
}

impl ModalityFeatureSet {
    pub fn new(values: DMatrix<f64>, modality: Modality) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(Error::invalid("feature set has no samples"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature set contains non-finite entries"));
        }
        Ok(Self { values, modality })
    }

    /// Build from per-sample feature vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>], modality: Modality) -> Result<Self> {
        let dim = columns.first().map(Vec::len).unwrap_or(0);
        if columns.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("feature vectors differ in length"));
        }
        let flat: Vec<f64> = columns.iter().flatten().copied().collect();
        Self::new(DMatrix::from_column_slice(dim, columns.len(), &flat), modality)
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }
}

/// Column-stacked training dictionary with its labels and class indicator
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDictionary {
    pub x: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub b: DMatrix<f64>,
    /// Row count contributed by each stacked block, top to bottom.
    pub block_dims: Vec<usize>,
}

impl FusedDictionary {
    pub fn classes(&self) -> usize {
        self.b.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }
}

fn zscore_in_place(v: &mut [f64]) {
    let (lo, hi) = min_max(v);
    if lo == hi {
        v.fill(0.0);
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

fn rescale_in_place(v: &mut [f64]) {
    let (lo, hi) = min_max(v);
    if lo == hi {
        v.fill(0.5);
        return;
    }
    let span = hi - lo;
    for x in v.iter_mut() {
        *x = ((*x - lo) / span).clamp(0.0, 1.0);
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn normalize_in_place(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    Ok(())
}

/// Z-score every column with the population standard deviation. Constant
/// columns become zeros.
pub fn zscore_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() < 2 {
        return Err(Error::invalid("z-scoring needs at least two rows"));
    }
    check_finite(m)?;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        zscore_in_place(col.as_mut_slice());
    }
    Ok(out)
}

/// Min-max rescale every column to `[0, 1]`. Constant columns become 0.5.
pub fn rescale_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(m)?;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        rescale_in_place(col.as_mut_slice());
    }
    Ok(out)
}

/// Indicator matrix with `b[(labels[j], j)] = 1`.
pub fn class_matrix(labels: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} outside [0, {classes})")));
    }
    let mut b = DMatrix::zeros(classes, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        b[(l, j)] = 1.0;
    }
    Ok(b)
}

/// Normalize each block, stack them top to bottom and scale every column to
/// unit length. A single block is the single-modality dictionary.
pub fn fuse_blocks(blocks: &[&ModalityFeatureSet], labels: &[usize], classes: usize) -> Result<FusedDictionary> {
    let Some(first) = blocks.first() else {
        return Err(Error::invalid("no feature blocks to fuse"));
    };
    let n = first.len();
    if blocks.iter().any(|b| b.len() != n) {
        return Err(Error::invalid("feature blocks disagree on sample count"));
    }
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} samples", labels.len())));
    }
    let b = class_matrix(labels, classes)?;

    let block_dims: Vec<usize> = blocks.iter().map(|b| b.dim()).collect();
    let rows: usize = block_dims.iter().sum();
    let mut x = DMatrix::zeros(rows, n);
    let mut offset = 0;
    for block in blocks {
        let normalized = rescale_columns(&zscore_columns(&block.values)?)?;
        x.rows_mut(offset, block.dim()).copy_from(&normalized);
        offset += block.dim();
    }
    for mut col in x.column_iter_mut() {
        normalize_in_place(col.as_mut_slice());
    }
    Ok(FusedDictionary {
        x,
        labels: labels.to_vec(),
        b,
        block_dims,
    })
}

/// Depth rows above RGB rows.
pub fn fuse(
    depth: &ModalityFeatureSet,
    rgb: &ModalityFeatureSet,
    labels: &[usize],
    classes: usize,
) -> Result<FusedDictionary> {
    if depth.len() != rgb.len() {
        return Err(Error::invalid(format!(
            "depth has {} samples but rgb has {}",
            depth.len(),
            rgb.len()
        )));
    }
    fuse_blocks(&[depth, rgb], labels, classes)
}

/// Test-sample counterpart of [`fuse_blocks`]: each part is normalized within
/// itself, so no training statistics are involved.
pub fn fuse_single(parts: &[&[f64]], block_dims: &[usize]) -> Result<DVector<f64>> {
    if parts.len() != block_dims.len() {
        return Err(Error::invalid(format!(
            "{} feature parts for {} dictionary blocks",
            parts.len(),
            block_dims.len()
        )));
    }
    let mut out = Vec::with_capacity(block_dims.iter().sum());
    for (part, &dim) in parts.iter().zip(block_dims) {
        if part.len() != dim {
            return Err(Error::invalid(format!(
                "feature part has length {} but the dictionary block has {dim}",
                part.len()
            )));
        }
        if dim < 2 {
            return Err(Error::invalid("z-scoring needs at least two entries"));
        }
        if part.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector contains non-finite entries"));
        }
        let mut v = part.to_vec();
        zscore_in_place(&mut v);
        rescale_in_place(&mut v);
        out.extend(v);
    }
    normalize_in_place(&mut out);
    Ok(DVector::from_vec(out))
}
