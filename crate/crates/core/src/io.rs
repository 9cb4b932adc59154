//! On-disk formats: text matrices, label lists, network parameters, dataset
//! manifests and evaluation reports.
//!
//! Matrix file layout (ASCII, LF line endings):
//!
//! ```text
//! <rows> <cols>
//! <v11> <v12> ... <v1cols>
//! ...
//! ```
//!
//! Values are written with the shortest representation that parses back to the
//! same binary64 value, so a write/read cycle is bit-exact.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::harness::{ModalitySelector, PipelineParams};
use crate::viewnet::{NetworkParams, Widths, LAYERS};
use crate::{Error, Result};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_matrix_into(out: &mut String, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("cannot serialize non-finite matrix entries"));
    }
    writeln!(out, "{} {}", m.nrows(), m.ncols()).unwrap();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            write!(out, "{:?}", m[(r, c)]).unwrap();
        }
        out.push('\n');
    }
    Ok(())
}

/// Serialize a matrix to its text form.
pub fn format_matrix(m: &DMatrix<f64>) -> Result<String> {
    let mut out = String::new();
    format_matrix_into(&mut out, m)?;
    Ok(out)
}

/// Line cursor that reports 1-based line numbers in errors.
struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Split<'a, char>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let text = text.strip_suffix('\n').unwrap_or(text);
        Self {
            path,
            inner: text.split('\n').enumerate(),
            last: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((i, line)) => {
                self.last = i + 1;
                Ok((i + 1, line))
            }
            None => Err(self.err(self.last + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    fn finish(mut self) -> Result<()> {
        match self.inner.next() {
            Some((i, _)) => Err(self.err(i + 1, "trailing content after the last matrix row")),
            None => Ok(()),
        }
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let (hline, header) = self.next_line("a \"rows cols\" header")?;
        let dims: Vec<&str> = header.split(' ').collect();
        let parsed: Option<(usize, usize)> = match dims.as_slice() {
            [r, c] => r.parse().ok().zip(c.parse().ok()),
            _ => None,
        };
        let Some((rows, cols)) = parsed else {
            return Err(self.err(hline, format!("malformed header {header:?}, expected \"rows cols\"")));
        };
        let mut data = Vec::with_capacity(rows.saturating_mul(cols).min(1 << 24));
        for _ in 0..rows {
            let (ln, line) = self.next_line("a matrix row")?;
            let tokens: Vec<&str> = if line.is_empty() { Vec::new() } else { line.split(' ').collect() };
            if tokens.len() != cols {
                return Err(self.err(ln, format!("expected {cols} values, found {}", tokens.len())));
            }
            for tok in tokens {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| self.err(ln, format!("non-numeric token {tok:?}")))?;
                if !v.is_finite() {
                    return Err(self.err(ln, format!("non-finite value {tok:?}")));
                }
                data.push(v);
            }
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

/// Parse the text form of a matrix. `path` only labels errors.
pub fn parse_matrix(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut lines = Lines::new(path, text);
    let m = lines.matrix()?;
    lines.finish()?;
    Ok(m)
}

pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_text(path, &format_matrix(m)?)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read_text(path)?, path)
}

/// Label list: a count line followed by one class index per line.
pub fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut out = format!("{}\n", labels.len());
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    write_text(path, &out)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut lines = Lines::new(path, &text);
    let (ln, head) = lines.next_line("a label count")?;
    let count: usize = head.parse().map_err(|_| lines.err(ln, format!("malformed label count {head:?}")))?;
    let mut labels = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let (ln, line) = lines.next_line("a label")?;
        labels.push(line.parse().map_err(|_| lines.err(ln, format!("malformed label {line:?}")))?);
    }
    lines.finish()?;
    Ok(labels)
}

const NETWORK_MAGIC: &str = "viewnet";

/// Header `viewnet <input_dim> <w1> <w2> <w3> <w4>`, then per layer its weight
/// matrix and its bias as a column matrix.
pub fn format_network(params: &NetworkParams) -> Result<String> {
    let mut out = format!("{NETWORK_MAGIC} {} {}\n", params.input_dim(), params.widths().0.map(|w| w.to_string()).join(" "));
    for l in 0..LAYERS {
        format_matrix_into(&mut out, &params.weights[l])?;
        let b = &params.biases[l];
        format_matrix_into(&mut out, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    }
    Ok(out)
}

pub fn parse_network(text: &str, path: &Path) -> Result<NetworkParams> {
    let mut lines = Lines::new(path, text);
    let (ln, header) = lines.next_line("a network header")?;
    let fields: Vec<&str> = header.split(' ').collect();
    let dims: Option<Vec<usize>> = fields.iter().skip(1).map(|f| f.parse().ok()).collect();
    let dims = match (fields.first(), dims) {
        (Some(&NETWORK_MAGIC), Some(d)) if d.len() == LAYERS + 1 => d,
        _ => return Err(lines.err(ln, format!("malformed network header {header:?}"))),
    };
    let widths = Widths([dims[1], dims[2], dims[3], dims[4]]);
    let mut weights = Vec::with_capacity(LAYERS);
    let mut biases = Vec::with_capacity(LAYERS);
    let mut fan_in = dims[0];
    for &w in &widths.0 {
        let start = lines.last + 1;
        let wm = lines.matrix()?;
        if wm.shape() != (w, fan_in) {
            return Err(lines.err(start, format!("expected a {w}x{fan_in} weight matrix")));
        }
        let start = lines.last + 1;
        let bm = lines.matrix()?;
        if bm.shape() != (w, 1) {
            return Err(lines.err(start, format!("expected a {w}x1 bias matrix")));
        }
        weights.push(wm);
        biases.push(DVector::from_column_slice(bm.as_slice()));
        fan_in = w;
    }
    lines.finish()?;
    NetworkParams::from_parts(weights, biases)
}

pub fn write_network(params: &NetworkParams, path: &Path) -> Result<()> {
    write_text(path, &format_network(params)?)
}

pub fn read_network(path: &Path) -> Result<NetworkParams> {
    parse_network(&read_text(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub class: usize,
    pub view: usize,
    /// Depth feature sequence (`d × frames` matrix file).
    pub depth: String,
    /// Trajectory descriptors (`m × p` matrix file).
    pub trajectories: String,
}

/// One motion observed from every view; index 0 is the canonical view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRecord {
    pub id: String,
    pub views: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    pub classes: usize,
    pub views: Vec<String>,
    pub samples: Vec<SampleRecord>,
    #[serde(default)]
    pub transfer: Vec<TransferRecord>,
}

/// A validated manifest together with the directory its paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub doc: ManifestDoc,
}

impl DatasetManifest {
    pub fn classes(&self) -> usize {
        self.doc.classes
    }

    pub fn view_count(&self) -> usize {
        self.doc.views.len()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.doc.samples
    }

    pub fn transfer(&self) -> &[TransferRecord] {
        &self.doc.transfer
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn validate_manifest(doc: &ManifestDoc, root: &Path, path: &Path) -> Result<()> {
    let fail = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };
    if doc.classes == 0 {
        return Err(fail("class count must be positive".into()));
    }
    if doc.views.is_empty() {
        return Err(fail("view list is empty".into()));
    }
    let check_path = |rel: &str, owner: &str| -> Result<()> {
        if Path::new(rel).is_absolute() {
            return Err(fail(format!("{owner}: path {rel:?} must be relative to the manifest")));
        }
        if !root.join(rel).is_file() {
            return Err(fail(format!("{owner}: referenced file {rel:?} does not exist")));
        }
        Ok(())
    };
    let mut ids = HashSet::new();
    for s in &doc.samples {
        if !ids.insert(s.id.as_str()) {
            return Err(fail(format!("duplicate sample id {:?}", s.id)));
        }
        if s.class >= doc.classes {
            return Err(fail(format!("sample {:?}: class {} outside [0, {})", s.id, s.class, doc.classes)));
        }
        if s.view >= doc.views.len() {
            return Err(fail(format!(
                "sample {:?}: view {} outside [0, {})",
                s.id,
                s.view,
                doc.views.len()
            )));
        }
        check_path(&s.depth, &s.id)?;
        check_path(&s.trajectories, &s.id)?;
    }
    let mut tids = HashSet::new();
    for t in &doc.transfer {
        if !tids.insert(t.id.as_str()) {
            return Err(fail(format!("duplicate transfer id {:?}", t.id)));
        }
        if t.views.len() != doc.views.len() {
            return Err(fail(format!(
                "transfer {:?} lists {} views, expected {}",
                t.id,
                t.views.len(),
                doc.views.len()
            )));
        }
        for p in &t.views {
            check_path(p, &t.id)?;
        }
    }
    Ok(())
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<DatasetManifest> {
    let doc: ManifestDoc = serde_json::from_str(text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    validate_manifest(&doc, &root, path)?;
    Ok(DatasetManifest { root, doc })
}

/// Load and eagerly validate a manifest.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    parse_manifest(&read_text(path)?, path)
}

pub fn format_manifest(doc: &ManifestDoc) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn write_manifest(doc: &ManifestDoc, path: &Path) -> Result<()> {
    write_text(path, &format_manifest(doc)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub train_views: Vec<usize>,
    pub test_view: usize,
    pub modality: ModalitySelector,
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityMean {
    pub modality: ModalitySelector,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub protocol: String,
    pub parameters: PipelineParams,
    pub records: Vec<SplitRecord>,
    pub means: Vec<ModalityMean>,
    /// Fused mean minus the best single-modality mean, when all three ran.
    pub fused_gain: Option<f64>,
    /// Fused-modality confusion summed over every combination.
    pub confusion: Vec<Vec<u64>>,
}

impl EvaluationReport {
    pub fn mean(&self, modality: ModalitySelector) -> Option<f64> {
        self.means.iter().find(|m| m.modality == modality).map(|m| m.mean_accuracy)
    }
}

pub fn format_report(report: &EvaluationReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<EvaluationReport> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_report(report: &EvaluationReport, path: &Path) -> Result<()> {
    write_text(path, &format_report(report)?)
}

pub fn read_report(path: &Path) -> Result<EvaluationReport> {
    parse_report(&read_text(path)?)
}
