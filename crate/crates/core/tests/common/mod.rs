#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use xview::io::DatasetManifest;
use xview::synth::{self, SynthConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn unit_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}

/// Gaussian elimination with partial pivoting on a dense square system.
pub fn gauss_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut row: Vec<f64> = (0..n).map(|c| a[(r, c)]).collect();
            row.push(b[r]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    DVector::from_vec(x)
}

/// Ridge solution from the normal equations `(XᵀX + λI)α = Xᵀy`.
pub fn ridge_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = x.ncols();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = x.column(i).dot(&x.column(j));
        }
        g[(i, i)] += lambda;
    }
    let rhs = DVector::from_fn(n, |i, _| x.column(i).dot(y));
    gauss_solve(&g, &rhs)
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

/// Groups listed level by level; every split gives the first half the extra
/// frame when the length is odd.
pub fn oracle_groups(frames: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut all = Vec::new();
    for level in 0..levels {
        let mut spans = vec![(0usize, frames)];
        for _ in 0..level {
            spans = spans
                .into_iter()
                .flat_map(|(s, l)| {
                    let first = (l + 1) / 2;
                    vec![(s, first), (s + first, l - first)]
                })
                .collect();
        }
        all.extend(spans);
    }
    all
}

/// Direct DFT magnitudes of each group, zero where a group has fewer samples
/// than coefficients.
pub fn ftp_oracle(seq: &DMatrix<f64>, levels: usize, coeffs: usize) -> DMatrix<f64> {
    let groups = oracle_groups(seq.ncols(), levels);
    let mut out = DMatrix::zeros(seq.nrows(), groups.len() * coeffs);
    for r in 0..seq.nrows() {
        for (g, &(start, len)) in groups.iter().enumerate() {
            for k in 0..coeffs.min(len) {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..len {
                    let angle = -2.0 * PI * (k * n) as f64 / len as f64;
                    re += seq[(r, start + n)] * angle.cos();
                    im += seq[(r, start + n)] * angle.sin();
                }
                out[(r, g * coeffs + k)] = (re * re + im * im).sqrt();
            }
        }
    }
    out
}

/// Benchmark data at the default synthetic configuration.
pub fn default_benchmark(dir: &Path) -> DatasetManifest {
    synth::generate_dataset(&SynthConfig::default(), dir).expect("synthetic benchmark")
}

pub fn small_benchmark(dir: &Path, seed: u64) -> DatasetManifest {
    let cfg = SynthConfig {
        classes: 3,
        views: 3,
        samples_per_cell: 3,
        depth_dim: 6,
        frames: 8,
        trajectories: 12,
        transfer_videos: 8,
        seed,
        ..SynthConfig::default()
    };
    synth::generate_dataset(&cfg, dir).expect("synthetic benchmark")
}

/// Pipeline settings small enough for `small_benchmark`.
pub fn tiny_params() -> xview::harness::PipelineParams {
    let mut p = xview::harness::PipelineParams::desk();
    p.codebook_size = 4;
    p.widths = xview::viewnet::Widths([8, 8, 8, 4]);
    p.train.total_iters = 40;
    p.train.batch_size = 8;
    p.sparsity = 5;
    p
}
