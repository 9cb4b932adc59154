//! Deterministic synthetic multi-view benchmark.
//!
//! Each class owns a depth prototype with a class-specific temporal
//! modulation and a mixture of trajectory cluster centres. Every view applies
//! a fixed orthogonal transform to both streams; view 0 is the canonical view
//! and uses the identity. A separate transfer corpus renders class-agnostic
//! motions from every view, which is what the codebook and the view-transfer
//! network are trained on.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::io::{self, DatasetManifest, ManifestDoc, SampleRecord, TransferRecord};
use crate::rng::{self, purpose, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub views: usize,
    pub samples_per_cell: usize,
    pub depth_dim: usize,
    pub frames: usize,
    pub trajectories: usize,
    pub trajectory_dim: usize,
    /// Trajectory cluster centres per class mixture.
    pub mixture_components: usize,
    pub separation: f64,
    pub noise: f64,
    /// How far each view transform is from the identity (see
    /// [`make_view_transform`]).
    pub view_spread: f64,
    pub transfer_videos: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            views: 4,
            samples_per_cell: 8,
            depth_dim: 32,
            frames: 16,
            trajectories: 40,
            trajectory_dim: 6,
            mixture_components: 4,
            separation: 1.0,
            noise: 2.0,
            view_spread: 0.6,
            transfer_videos: 48,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.classes,
            self.views,
            self.samples_per_cell,
            self.depth_dim,
            self.frames,
            self.trajectories,
            self.trajectory_dim,
            self.mixture_components,
        ];
        if counts.contains(&0) {
            return Err(Error::invalid("synthetic dataset sizes must be positive"));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("separation must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        if !(self.view_spread >= 0.0) {
            return Err(Error::invalid("view spread must be non-negative"));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

/// Orthogonal `dim × dim` transform for a view: the Q factor (diagonal of R
/// made positive) of `I + spread·G/√dim` with `G` a seeded standard Gaussian
/// matrix, so `spread` sets the perturbation size relative to the identity
/// independently of `dim`. An infinite `spread` orthonormalizes `G` itself.
/// View 0 is the identity.
pub fn make_view_transform(view: usize, dim: usize, seed: u64, spread: f64) -> DMatrix<f64> {
    if view == 0 || dim == 0 {
        return DMatrix::identity(dim, dim);
    }
    let mut rng = rng::stream(seed, view as u64, &[dim as u64]);
    let g = DMatrix::from_fn(dim, dim, |_, _| gaussian(&mut rng));
    let m = if spread.is_infinite() {
        g
    } else {
        DMatrix::identity(dim, dim) + g * (spread / (dim as f64).sqrt())
    };
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..dim {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    q
}

struct ClassModel {
    depth_proto: Vec<f64>,
    freq: f64,
    phase: f64,
    centres: DMatrix<f64>,
}

fn class_model(cfg: &SynthConfig, class: usize) -> ClassModel {
    let c = class as u64;
    let mut rng = rng::stream(cfg.seed, purpose::DEPTH_PROTOTYPE, &[c]);
    let depth_proto = (0..cfg.depth_dim).map(|_| gaussian(&mut rng)).collect();
    let mut rng = rng::stream(cfg.seed, purpose::MODULATION, &[c]);
    let freq = rng.random_range(1..=3) as f64;
    let phase = rng.random::<f64>() * 2.0 * PI;
    let mut rng = rng::stream(cfg.seed, purpose::TRAJ_PROTOTYPE, &[c]);
    let centres = DMatrix::from_fn(cfg.mixture_components, cfg.trajectory_dim, |_, _| {
        cfg.separation * gaussian(&mut rng)
    });
    ClassModel {
        depth_proto,
        freq,
        phase,
        centres,
    }
}

/// `d × frames` sequence before any view transform.
fn depth_sequence(cfg: &SynthConfig, model: &ClassModel, rng: &mut Stream) -> DMatrix<f64> {
    let f = cfg.frames as f64;
    let mut seq = DMatrix::zeros(cfg.depth_dim, cfg.frames);
    for t in 0..cfg.frames {
        let m = 1.0 + 0.5 * (2.0 * PI * model.freq * t as f64 / f + model.phase).sin();
        for r in 0..cfg.depth_dim {
            seq[(r, t)] = cfg.separation * model.depth_proto[r] * m + cfg.noise * gaussian(rng);
        }
    }
    seq
}

/// Trajectories cycling through the mixture components plus noise, one per row.
fn trajectory_set(cfg: &SynthConfig, centres: &DMatrix<f64>, rng: &mut Stream) -> DMatrix<f64> {
    let h = centres.nrows();
    DMatrix::from_fn(cfg.trajectories, cfg.trajectory_dim, |i, j| {
        centres[(i % h, j)] + cfg.noise * gaussian(rng)
    })
}

fn view_transforms(cfg: &SynthConfig, dim: usize, purpose: u64) -> Vec<DMatrix<f64>> {
    let seed = rng::derive_seed(cfg.seed, purpose, &[]);
    (0..cfg.views)
        .map(|v| make_view_transform(v, dim, seed, cfg.view_spread))
        .collect()
}

/// Apply `q` to every frame column.
fn rotate_columns(q: &DMatrix<f64>, m: DMatrix<f64>, view: usize) -> DMatrix<f64> {
    if view == 0 { m } else { q * m }
}

/// Apply `q` to every trajectory row.
fn rotate_rows(q: &DMatrix<f64>, m: DMatrix<f64>, view: usize) -> DMatrix<f64> {
    if view == 0 { m } else { m * q.transpose() }
}

pub fn sample_id(class: usize, view: usize, sample: usize) -> String {
    format!("c{class:02}_v{view}_s{sample:02}")
}

/// Write the benchmark under `out_dir` and return its validated manifest
/// (`out_dir/manifest.json`).
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let depth_views = view_transforms(cfg, cfg.depth_dim, purpose::DEPTH_VIEW);
    let traj_views = view_transforms(cfg, cfg.trajectory_dim, purpose::TRAJ_VIEW);

    let mut samples = Vec::new();
    for class in 0..cfg.classes {
        let model = class_model(cfg, class);
        let centres: Vec<DMatrix<f64>> = traj_views
            .iter()
            .enumerate()
            .map(|(v, q)| rotate_rows(q, model.centres.clone(), v))
            .collect();
        for view in 0..cfg.views {
            for s in 0..cfg.samples_per_cell {
                let key = [class as u64, view as u64, s as u64];
                let id = sample_id(class, view, s);
                let mut rng = rng::stream(cfg.seed, purpose::SAMPLE_NOISE, &[key[0], key[1], key[2], 0]);
                let depth = rotate_columns(&depth_views[view], depth_sequence(cfg, &model, &mut rng), view);
                let mut rng = rng::stream(cfg.seed, purpose::SAMPLE_NOISE, &[key[0], key[1], key[2], 1]);
                let traj = trajectory_set(cfg, &centres[view], &mut rng);

                let depth_rel = format!("depth/{id}.txt");
                let traj_rel = format!("traj/{id}.txt");
                io::write_matrix(&depth, &out_dir.join(&depth_rel))?;
                io::write_matrix(&traj, &out_dir.join(&traj_rel))?;
                samples.push(SampleRecord {
                    id,
                    class,
                    view,
                    depth: depth_rel,
                    trajectories: traj_rel,
                });
            }
        }
    }

    let mut transfer = Vec::with_capacity(cfg.transfer_videos);
    for t in 0..cfg.transfer_videos {
        let mut rng = rng::stream(cfg.seed, purpose::TRANSFER, &[t as u64, 0]);
        let centres = DMatrix::from_fn(cfg.mixture_components, cfg.trajectory_dim, |_, _| {
            cfg.separation * gaussian(&mut rng)
        });
        let mut rng = rng::stream(cfg.seed, purpose::TRANSFER, &[t as u64, 1]);
        let latent = trajectory_set(cfg, &centres, &mut rng);
        let id = format!("t{t:03}");
        let mut views = Vec::with_capacity(cfg.views);
        for (v, q) in traj_views.iter().enumerate() {
            let rel = format!("transfer/{id}_v{v}.txt");
            io::write_matrix(&rotate_rows(q, latent.clone(), v), &out_dir.join(&rel))?;
            views.push(rel);
        }
        transfer.push(TransferRecord { id, views });
    }

    let doc = ManifestDoc {
        classes: cfg.classes,
        views: (0..cfg.views).map(|v| format!("view{v}")).collect(),
        samples,
        transfer,
    };
    let path = out_dir.join("manifest.json");
    io::write_manifest(&doc, &path)?;
    io::load_manifest(&path)
}
