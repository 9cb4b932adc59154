//! Fourier temporal pyramid encoding of per-frame feature sequences.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::{Error, Result};

pub const DEFAULT_LEVELS: usize = 3;
pub const DEFAULT_COEFFS: usize = 4;

/// Per-frame features of one video: one row per feature dimension, one
/// column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence(DMatrix<f64>);

impl FeatureSequence {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("feature sequence must have at least one row and one frame"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature sequence contains non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn frames(&self) -> usize {
        self.0.ncols()
    }
}

/// Low-frequency magnitudes for every pyramid group, one row per feature
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidDescriptor {
    values: DMatrix<f64>,
    levels: usize,
    coeffs: usize,
}

impl PyramidDescriptor {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }

    /// Column-major stacking of the descriptor matrix.
    pub fn vectorize(&self) -> Vec<f64> {
        self.values.as_slice().to_vec()
    }
}

/// Number of groups in a pyramid with `levels` levels.
pub fn group_count(levels: usize) -> usize {
    (1usize << levels) - 1
}

/// Contiguous `(start, len)` groups for every level, level-major and
/// left-to-right. Each split gives the first half `ceil(len / 2)` samples.
pub fn pyramid_groups(frames: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(group_count(levels));
    let mut current = vec![(0usize, frames)];
    for level in 0..levels {
        out.extend_from_slice(&current);
        if level + 1 == levels {
            break;
        }
        current = current
            .iter()
            .flat_map(|&(start, len)| {
                let head = len.div_ceil(2);
                [(start, head), (start + head, len - head)]
            })
            .collect();
    }
    out
}

/// Cosine/sine tables for the first `coeffs` bins of a `len`-point DFT.
struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
    bins: usize,
    len: usize,
}

impl Twiddles {
    fn new(len: usize, coeffs: usize) -> Self {
        let bins = coeffs.min(len);
        let mut cos = Vec::with_capacity(bins * len);
        let mut sin = Vec::with_capacity(bins * len);
        for k in 0..bins {
            for n in 0..len {
                // Reduce k*n mod len first so the angle stays in [0, 2pi).
                let angle = 2.0 * PI * ((k * n) % len) as f64 / len as f64;
                cos.push(angle.cos());
                sin.push(angle.sin());
            }
        }
        Self { cos, sin, bins, len }
    }

    fn magnitudes(&self, samples: &[f64], out: &mut [f64]) {
        for k in 0..self.bins {
            let base = k * self.len;
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &x) in samples.iter().enumerate() {
                re += x * self.cos[base + n];
                im -= x * self.sin[base + n];
            }
            out[k] = re.hypot(im);
        }
    }
}

/// Encode `seq` with a `levels`-level temporal pyramid keeping `coeffs`
/// DFT magnitudes (DC first) per group. Groups shorter than `coeffs` are
/// zero-padded.
pub fn ftp_encode(seq: &FeatureSequence, levels: usize, coeffs: usize) -> Result<PyramidDescriptor> {
    if levels == 0 || coeffs == 0 {
        return Err(Error::invalid("pyramid levels and coefficient count must be positive"));
    }
    if levels >= usize::BITS as usize {
        return Err(Error::invalid(format!("{levels} pyramid levels is too many")));
    }
    let groups = pyramid_groups(seq.frames(), levels);
    let tables: Vec<Twiddles> = groups.iter().map(|&(_, len)| Twiddles::new(len, coeffs)).collect();

    let dim = seq.dim();
    let mut values = DMatrix::zeros(dim, groups.len() * coeffs);
    let mut row = vec![0.0; seq.frames()];
    let mut mags = vec![0.0; coeffs];
    for r in 0..dim {
        for (t, slot) in row.iter_mut().enumerate() {
            *slot = seq.0[(r, t)];
        }
        for (g, (&(start, len), table)) in groups.iter().zip(&tables).enumerate() {
            mags.fill(0.0);
            table.magnitudes(&row[start..start + len], &mut mags);
            for (c, &m) in mags.iter().enumerate() {
                values[(r, g * coeffs + c)] = m;
            }
        }
    }
    Ok(PyramidDescriptor {
        values,
        levels,
        coeffs,
    })
}

/// Column-major vectorization of a descriptor.
pub fn vectorize_descriptor(desc: &PyramidDescriptor) -> Vec<f64> {
    desc.vectorize()
}
