//! Cross-view evaluation: train on two views, test on each remaining view.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::codebook::{self, Codebook, KMeansConfig, TrajectorySet};
use crate::cr::{Classifier, CrParams};
use crate::fusion::{self, Modality, ModalityFeatureSet};
use crate::io::{self, DatasetManifest, EvaluationReport, ModalityMean, SplitRecord};
use crate::pyramid::{self, FeatureSequence};
use crate::viewnet::{self, NetworkParams, TrainConfig, TrainingPair, Widths};
use crate::{Error, Result};

pub const PROTOCOL_NAME: &str = "cross-view";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalitySelector {
    Depth,
    Rgb,
    Fused,
}

impl ModalitySelector {
    pub const ALL: [ModalitySelector; 3] = [Self::Depth, Self::Rgb, Self::Fused];

    fn uses(self, m: Modality) -> bool {
        matches!(
            (self, m),
            (Self::Fused, _) | (Self::Depth, Modality::Depth) | (Self::Rgb, Modality::Rgb)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Depth => "depth",
            Self::Rgb => "rgb",
            Self::Fused => "fused",
        }
    }
}

impl std::fmt::Display for ModalitySelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModalitySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(Self::Depth),
            "rgb" => Ok(Self::Rgb),
            "fused" => Ok(Self::Fused),
            _ => Err(Error::invalid(format!("unknown modality {s:?} (depth|rgb|fused)"))),
        }
    }
}

/// Every tunable of the pipeline. Serialized verbatim into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub lambda: f64,
    pub lambda1: f64,
    pub sparsity: usize,
    pub omp_residual_tol: f64,
    pub codebook_size: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub widths: Widths,
    pub train: TrainConfig,
    pub pyramid_levels: usize,
    pub pyramid_coeffs: usize,
    pub seed: u64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            lambda: crate::cr::DEFAULT_LAMBDA,
            lambda1: crate::cr::DEFAULT_LAMBDA1,
            sparsity: crate::cr::DEFAULT_SPARSITY,
            omp_residual_tol: crate::cr::DEFAULT_RESIDUAL_TOL,
            codebook_size: 2000,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            widths: viewnet::DEFAULT_WIDTHS,
            train: TrainConfig::default(),
            pyramid_levels: pyramid::DEFAULT_LEVELS,
            pyramid_coeffs: pyramid::DEFAULT_COEFFS,
            seed: 0,
        }
    }
}

impl PipelineParams {
    /// Settings sized for the synthetic benchmark: a 32-word codebook and a
    /// small network trained for 2000 iterations.
    pub fn desk() -> Self {
        Self {
            codebook_size: 32,
            widths: Widths([64, 64, 64, 32]),
            train: TrainConfig {
                initial_lr: 0.05,
                total_iters: 2000,
                batch_size: 32,
                ..TrainConfig::default()
            },
            seed: 7,
            ..Self::default()
        }
    }

    pub fn cr_params(&self, dictionary_len: usize) -> CrParams {
        CrParams {
            lambda: self.lambda,
            lambda1: self.lambda1,
            sparsity: self.sparsity.min(dictionary_len),
            residual_tol: self.omp_residual_tol,
        }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.codebook_size,
            seed: self.seed,
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda1) {
            return Err(Error::invalid("lambda1 must lie in [0, 1]"));
        }
        if self.sparsity == 0 {
            return Err(Error::invalid("sparsity must be positive"));
        }
        if self.widths.output() != self.codebook_size {
            return Err(Error::invalid(format!(
                "the network's last width ({}) must equal the codebook size ({})",
                self.widths.output(),
                self.codebook_size
            )));
        }
        self.train.validate()
    }
}

/// `(train views, test view)` for every unordered training pair and every
/// remaining view.
pub fn protocol_combinations(views: usize) -> Vec<([usize; 2], usize)> {
    let mut out = Vec::new();
    for a in 0..views {
        for b in a + 1..views {
            for t in (0..views).filter(|&t| t != a && t != b) {
                out.push(([a, b], t));
            }
        }
    }
    out
}

pub fn compute_accuracy(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid("predictions and truths differ in length"));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Rows are true classes, columns predicted classes.
pub fn confusion_matrix(predictions: &[usize], truths: &[usize], classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        m[t][p] += 1;
    }
    m
}

/// Codebook and view-transfer network used by the RGB stream.
#[derive(Debug, Clone)]
pub struct RgbModel {
    pub codebook: Codebook,
    pub network: NetworkParams,
}

/// Matrix reader that records every path it opens.
#[derive(Debug, Default)]
pub struct DataReader {
    log: Mutex<Vec<PathBuf>>,
}

impl DataReader {
    pub fn read(&self, path: &Path) -> Result<DMatrix<f64>> {
        self.log.lock().unwrap().push(path.to_path_buf());
        io::read_matrix(path)
    }

    pub fn accessed(&self) -> Vec<PathBuf> {
        self.log.lock().unwrap().clone()
    }
}

/// Fit the codebook on every transfer-corpus trajectory, all views pooled.
pub fn train_codebook(manifest: &DatasetManifest, params: &PipelineParams, reader: &DataReader) -> Result<Codebook> {
    if manifest.transfer().is_empty() {
        return Err(Error::invalid("manifest has no transfer corpus to learn a codebook from"));
    }
    let mut sets = Vec::new();
    for rec in manifest.transfer() {
        for rel in &rec.views {
            sets.push(TrajectorySet::new(reader.read(&manifest.resolve(rel))?)?);
        }
    }
    codebook::kmeans_fit(&TrajectorySet::concat(&sets)?, &params.kmeans())
}

/// One pair per transfer motion and view: that view's histogram regressed
/// onto the canonical view's histogram.
pub fn transfer_pairs(manifest: &DatasetManifest, codebook: &Codebook, reader: &DataReader) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for rec in manifest.transfer() {
        let hists = rec
            .views
            .iter()
            .map(|rel| {
                let set = TrajectorySet::new(reader.read(&manifest.resolve(rel))?)?;
                Ok(codebook::bow_encode(&set, codebook)?.into_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        for h in &hists {
            pairs.push(TrainingPair {
                input: h.clone(),
                target: hists[0].clone(),
            });
        }
    }
    Ok(pairs)
}

pub fn train_viewnet(pairs: &[TrainingPair], params: &PipelineParams) -> Result<(NetworkParams, Vec<f64>)> {
    viewnet::sgd_train(pairs, params.widths, &params.train, params.seed)
}

pub fn train_rgb_model(manifest: &DatasetManifest, params: &PipelineParams, reader: &DataReader) -> Result<RgbModel> {
    let codebook = train_codebook(manifest, params, reader)?;
    let pairs = transfer_pairs(manifest, &codebook, reader)?;
    let (network, _) = train_viewnet(&pairs, params)?;
    Ok(RgbModel { codebook, network })
}

/// Outcome of one train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<usize>,
    pub truths: Vec<usize>,
}

fn cached<T>(cell: &OnceLock<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = init()?;
    Ok(cell.get_or_init(|| v))
}

/// Evaluation state for one manifest. Per-sample features and the RGB model
/// are computed on first use and shared by every split.
pub struct Pipeline<'m> {
    manifest: &'m DatasetManifest,
    params: PipelineParams,
    reader: DataReader,
    rgb_model: OnceLock<RgbModel>,
    depth_features: Vec<OnceLock<Vec<f64>>>,
    rgb_features: Vec<OnceLock<Vec<f64>>>,
}

impl<'m> Pipeline<'m> {
    pub fn new(manifest: &'m DatasetManifest, params: PipelineParams) -> Result<Self> {
        params.validate()?;
        let n = manifest.samples().len();
        Ok(Self {
            manifest,
            params,
            reader: DataReader::default(),
            rgb_model: OnceLock::new(),
            depth_features: (0..n).map(|_| OnceLock::new()).collect(),
            rgb_features: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Use an already trained codebook and network instead of training them
    /// from the transfer corpus.
    pub fn with_rgb_model(self, model: RgbModel) -> Result<Self> {
        if model.network.input_dim() != model.codebook.size() {
            return Err(Error::invalid("network input dimension does not match the codebook size"));
        }
        let _ = self.rgb_model.set(model);
        Ok(self)
    }

    pub fn params(&self) -> &PipelineParams {
        &self.params
    }

    pub fn accessed_paths(&self) -> Vec<PathBuf> {
        self.reader.accessed()
    }

    pub fn rgb_model(&self) -> Result<&RgbModel> {
        cached(&self.rgb_model, || train_rgb_model(self.manifest, &self.params, &self.reader))
    }

    pub fn depth_feature(&self, sample: usize) -> Result<&Vec<f64>> {
        cached(&self.depth_features[sample], || {
            let rec = &self.manifest.samples()[sample];
            let seq = FeatureSequence::new(self.reader.read(&self.manifest.resolve(&rec.depth))?)?;
            let desc = pyramid::ftp_encode(&seq, self.params.pyramid_levels, self.params.pyramid_coeffs)?;
            Ok(desc.vectorize())
        })
    }

    pub fn rgb_feature(&self, sample: usize) -> Result<&Vec<f64>> {
        cached(&self.rgb_features[sample], || {
            let model = self.rgb_model()?;
            let rec = &self.manifest.samples()[sample];
            let set = TrajectorySet::new(self.reader.read(&self.manifest.resolve(&rec.trajectories))?)?;
            let hist = codebook::bow_encode(&set, &model.codebook)?;
            viewnet::extract_feature(&model.network, hist.values())
        })
    }

    /// Feature blocks of one sample in dictionary order (depth, then RGB).
    pub fn sample_parts(&self, sample: usize, modality: ModalitySelector) -> Result<Vec<&Vec<f64>>> {
        let mut parts = Vec::with_capacity(2);
        if modality.uses(Modality::Depth) {
            parts.push(self.depth_feature(sample)?);
        }
        if modality.uses(Modality::Rgb) {
            parts.push(self.rgb_feature(sample)?);
        }
        Ok(parts)
    }

    /// Indices of samples recorded in the given views, in manifest order.
    pub fn samples_in(&self, views: &[usize]) -> Vec<usize> {
        self.manifest
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| views.contains(&s.view))
            .map(|(i, _)| i)
            .collect()
    }

    /// Build the training dictionary for a set of samples.
    pub fn dictionary(&self, train: &[usize], modality: ModalitySelector) -> Result<fusion::FusedDictionary> {
        let mut blocks = Vec::with_capacity(2);
        for m in [Modality::Depth, Modality::Rgb] {
            if !modality.uses(m) {
                continue;
            }
            let cols = train
                .iter()
                .map(|&i| {
                    Ok(match m {
                        Modality::Depth => self.depth_feature(i)?.clone(),
                        Modality::Rgb => self.rgb_feature(i)?.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            blocks.push(ModalityFeatureSet::from_columns(&cols, m)?);
        }
        let labels: Vec<usize> = train.iter().map(|&i| self.manifest.samples()[i].class).collect();
        let refs: Vec<&ModalityFeatureSet> = blocks.iter().collect();
        fusion::fuse_blocks(&refs, &labels, self.manifest.classes())
    }

    pub fn run_split(&self, train_views: &[usize], test_view: usize, modality: ModalitySelector) -> Result<SplitOutcome> {
        let views = self.manifest.view_count();
        if train_views.iter().chain([&test_view]).any(|&v| v >= views) {
            return Err(Error::invalid(format!("view index out of range (manifest has {views} views)")));
        }
        if train_views.contains(&test_view) {
            return Err(Error::invalid("test view must not be a training view"));
        }
        let train = self.samples_in(train_views);
        let test = self.samples_in(&[test_view]);
        if train.is_empty() || test.is_empty() {
            return Err(Error::invalid("empty training or test partition"));
        }

        let dict = self.dictionary(&train, modality)?;
        let block_dims = dict.block_dims.clone();
        let cr = self.params.cr_params(dict.len());
        let classifier = Classifier::new(dict, cr)?;

        let mut predictions = Vec::with_capacity(test.len());
        let mut truths = Vec::with_capacity(test.len());
        for &i in &test {
            let parts = self.sample_parts(i, modality)?;
            let slices: Vec<&[f64]> = parts.iter().map(|p| p.as_slice()).collect();
            let y = fusion::fuse_single(&slices, &block_dims)?;
            predictions.push(classifier.classify(&y)?.label);
            truths.push(self.manifest.samples()[i].class);
        }
        Ok(SplitOutcome {
            accuracy: compute_accuracy(&predictions, &truths)?,
            confusion: confusion_matrix(&predictions, &truths, self.manifest.classes()),
            predictions,
            truths,
        })
    }

    /// Every view combination for each requested modality.
    pub fn run_protocol_with(&self, modalities: &[ModalitySelector]) -> Result<EvaluationReport> {
        let views = self.manifest.view_count();
        if views < 3 {
            return Err(Error::invalid(format!("the cross-view protocol needs at least 3 views, got {views}")));
        }
        let combos = protocol_combinations(views);
        let classes = self.manifest.classes();
        let mut records = Vec::with_capacity(combos.len() * modalities.len());
        let mut means = Vec::with_capacity(modalities.len());
        let mut fused_confusion = vec![vec![0u64; classes]; classes];
        let ordered: BTreeSet<ModalitySelector> = modalities.iter().copied().collect();
        for &modality in &ordered {
            let mut total = 0.0;
            for (train, test) in &combos {
                let out = self.run_split(train, *test, modality)?;
                if modality == ModalitySelector::Fused {
                    for (acc, row) in fused_confusion.iter_mut().zip(&out.confusion) {
                        for (a, v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                }
                total += out.accuracy;
                records.push(SplitRecord {
                    train_views: train.to_vec(),
                    test_view: *test,
                    modality,
                    accuracy: out.accuracy,
                    confusion: out.confusion,
                });
            }
            means.push(ModalityMean {
                modality,
                mean_accuracy: total / combos.len() as f64,
            });
        }
        let mean_of = |m| means.iter().find(|x: &&ModalityMean| x.modality == m).map(|x| x.mean_accuracy);
        let fused_gain = match (
            mean_of(ModalitySelector::Fused),
            mean_of(ModalitySelector::Depth),
            mean_of(ModalitySelector::Rgb),
        ) {
            (Some(f), Some(d), Some(r)) => Some(f - d.max(r)),
            _ => None,
        };
        Ok(EvaluationReport {
            protocol: PROTOCOL_NAME.to_string(),
            parameters: self.params.clone(),
            records,
            means,
            fused_gain,
            confusion: fused_confusion,
        })
    }

    pub fn run_protocol(&self) -> Result<EvaluationReport> {
        self.run_protocol_with(&ModalitySelector::ALL)
    }
}

pub fn run_split(
    manifest: &DatasetManifest,
    train_views: &[usize],
    test_view: usize,
    params: &PipelineParams,
    modality: ModalitySelector,
) -> Result<SplitOutcome> {
    Pipeline::new(manifest, params.clone())?.run_split(train_views, test_view, modality)
}

pub fn run_protocol(manifest: &DatasetManifest, params: &PipelineParams) -> Result<EvaluationReport> {
    Pipeline::new(manifest, params.clone())?.run_protocol()
}
