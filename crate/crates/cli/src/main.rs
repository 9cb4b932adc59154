use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xview::harness::{self, DataReader, ModalitySelector, Pipeline, PipelineParams, RgbModel};
use xview::io;
use xview::synth::{self, SynthConfig};
use xview::viewnet::Widths;
use xview::{Error, Result};

#[derive(Parser)]
#[command(name = "xview", version, about = "Cross-view RGB-D action recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-view benchmark.
    Synth(SynthArgs),
    /// Fit the trajectory codebook on the manifest's transfer corpus.
    TrainCodebook(ModelArgs),
    /// Train the view-transfer network on transfer-corpus histogram pairs.
    TrainViewnet(ViewnetArgs),
    /// Encode every sample and write the normalized dictionary and labels.
    Encode(EncodeArgs),
    /// Evaluate one train/test view split.
    RunSplit(SplitArgs),
    /// Evaluate every view combination for all three modalities.
    RunProtocol(ProtocolArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-size defaults: 2000-word codebook, 1000/1000/2000/2000 network.
    Full,
    /// Small settings matching the synthetic benchmark.
    Desk,
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, value_enum, default_value = "full")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    codebook_size: Option<usize>,
    #[arg(long)]
    widths: Option<String>,
    /// Training iterations for the view-transfer network.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<PipelineParams> {
        let mut p = match self.preset {
            Preset::Full => PipelineParams::default(),
            Preset::Desk => PipelineParams::desk(),
        };
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.lambda {
            p.lambda = v;
        }
        if let Some(v) = self.lambda1 {
            p.lambda1 = v;
        }
        if let Some(v) = self.sparsity {
            p.sparsity = v;
        }
        if let Some(v) = self.codebook_size {
            p.codebook_size = v;
        }
        if let Some(w) = &self.widths {
            p.widths = w.parse::<Widths>()?;
        }
        if let Some(v) = self.iters {
            p.train.total_iters = v;
        }
        if let Some(v) = self.learning_rate {
            p.train.initial_lr = v;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    view_spread: Option<f64>,
    /// Class-agnostic motions rendered from every view for codebook and
    /// view-transfer training.
    #[arg(long)]
    transfer_videos: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct ViewnetArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Codebook from `train-codebook`.
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

/// Pretrained RGB-stream models; both or neither.
#[derive(Args)]
struct PretrainedArgs {
    #[arg(long, requires = "viewnet")]
    codebook: Option<PathBuf>,
    #[arg(long, requires = "codebook")]
    viewnet: Option<PathBuf>,
}

impl PretrainedArgs {
    fn load(&self) -> Result<Option<RgbModel>> {
        match (&self.codebook, &self.viewnet) {
            (Some(c), Some(v)) => Ok(Some(RgbModel {
                codebook: xview::codebook::Codebook::new(io::read_matrix(c)?)?,
                network: io::read_network(v)?,
            })),
            _ => Ok(None),
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for `dictionary.txt` and `labels.txt`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "fused")]
    modality: String,
    #[command(flatten)]
    pretrained: PretrainedArgs,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    train_views: String,
    #[arg(long)]
    test_view: usize,
    #[arg(long, default_value = "fused")]
    modality: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pretrained: PretrainedArgs,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pretrained: PretrainedArgs,
    #[command(flatten)]
    params: ParamArgs,
}

fn parse_views(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("bad view list {s:?}")))
        })
        .collect()
}

fn pipeline<'m>(
    manifest: &'m io::DatasetManifest,
    params: PipelineParams,
    pretrained: &PretrainedArgs,
) -> Result<Pipeline<'m>> {
    let p = Pipeline::new(manifest, params)?;
    match pretrained.load()? {
        Some(model) => p.with_rgb_model(model),
        None => Ok(p),
    }
}

fn write_json(value: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let text = format!("{}\n", serde_json::to_string_pretty(value)?);
    print!("{text}");
    if let Some(path) = path {
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                classes: a.classes.unwrap_or(d.classes),
                views: a.views.unwrap_or(d.views),
                samples_per_cell: a.samples.unwrap_or(d.samples_per_cell),
                noise: a.noise.unwrap_or(d.noise),
                separation: a.separation.unwrap_or(d.separation),
                view_spread: a.view_spread.unwrap_or(d.view_spread),
                transfer_videos: a.transfer_videos.unwrap_or(d.transfer_videos),
                seed: a.seed,
                ..d
            };
            let manifest = synth::generate_dataset(&cfg, &a.out)?;
            eprintln!(
                "wrote {} samples and {} transfer motions to {}",
                manifest.samples().len(),
                manifest.transfer().len(),
                a.out.display()
            );
        }
        Command::TrainCodebook(a) => {
            let params = a.params.resolve()?;
            let manifest = io::load_manifest(&a.manifest)?;
            let codebook = harness::train_codebook(&manifest, &params, &DataReader::default())?;
            io::write_matrix(codebook.centroids(), &a.out)?;
        }
        Command::TrainViewnet(a) => {
            let params = a.params.resolve()?;
            let manifest = io::load_manifest(&a.manifest)?;
            let codebook = xview::codebook::Codebook::new(io::read_matrix(&a.codebook)?)?;
            let pairs = harness::transfer_pairs(&manifest, &codebook, &DataReader::default())?;
            let (net, trace) = harness::train_viewnet(&pairs, &params)?;
            io::write_network(&net, &a.out)?;
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                eprintln!("trained on {} pairs, loss {first:.6} -> {last:.6}", pairs.len());
            }
        }
        Command::Encode(a) => {
            let params = a.params.resolve()?;
            let modality: ModalitySelector = a.modality.parse()?;
            let manifest = io::load_manifest(&a.manifest)?;
            let p = pipeline(&manifest, params, &a.pretrained)?;
            let all: Vec<usize> = (0..manifest.samples().len()).collect();
            let dict = p.dictionary(&all, modality)?;
            io::write_matrix(&dict.x, &a.out.join("dictionary.txt"))?;
            io::write_labels(&dict.labels, &a.out.join("labels.txt"))?;
        }
        Command::RunSplit(a) => {
            let params = a.params.resolve()?;
            let modality: ModalitySelector = a.modality.parse()?;
            let train = parse_views(&a.train_views)?;
            let manifest = io::load_manifest(&a.manifest)?;
            let p = pipeline(&manifest, params, &a.pretrained)?;
            let out = p.run_split(&train, a.test_view, modality)?;
            let value = serde_json::json!({
                "train_views": train,
                "test_view": a.test_view,
                "modality": modality,
                "accuracy": out.accuracy,
                "confusion": out.confusion,
            });
            write_json(&value, a.out.as_deref())?;
        }
        Command::RunProtocol(a) => {
            let params = a.params.resolve()?;
            let manifest = io::load_manifest(&a.manifest)?;
            let p = pipeline(&manifest, params, &a.pretrained)?;
            let report = p.run_protocol()?;
            io::write_report(&report, &a.out)?;
            for m in &report.means {
                eprintln!("{:>5}: mean accuracy {:.4}", m.modality, m.mean_accuracy);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
