//! JSON-Lines dataset files: a header object, then one example per line.

use anyhow::{anyhow, bail, Context, Result};
use bcfw::models::{
    ChainInstance, ChainModel, Labeling, MulticlassExample, MulticlassModel, StructuredModel, ToyModel,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Chain,
    Multiclass,
    Toy,
}

/// First line of a dataset file. `d_u` is used by chains, `d` by multiclass
/// data, `K` and `lambda` by the toy construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    #[serde(default = "default_kind")]
    pub kind: DatasetKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_u: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub num_labels: Option<usize>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn default_kind() -> DatasetKind {
    DatasetKind::Chain
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainLine {
    labels: Vec<usize>,
    features: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MulticlassLine {
    label: usize,
    x: Vec<f64>,
}

pub enum Dataset {
    Chain(ChainModel),
    Multiclass(MulticlassModel),
    Toy(ToyModel),
}

impl Dataset {
    pub fn model(&self) -> &dyn StructuredModel {
        match self {
            Dataset::Chain(m) => m,
            Dataset::Multiclass(m) => m,
            Dataset::Toy(m) => m,
        }
    }

    /// Regularizer recorded in the file, if any.
    pub fn default_lambda(&self) -> Option<f64> {
        match self {
            Dataset::Toy(m) => Some(m.lambda()),
            _ => None,
        }
    }

    pub fn header(&self) -> Header {
        let mut h = Header {
            format_version: FORMAT_VERSION,
            kind: DatasetKind::Chain,
            n: self.model().num_examples(),
            d_u: None,
            d: None,
            num_labels: None,
            k: None,
            lambda: None,
        };
        match self {
            Dataset::Chain(m) => {
                h.d_u = Some(m.d_u());
                h.num_labels = Some(m.num_labels());
            }
            Dataset::Multiclass(m) => {
                h.kind = DatasetKind::Multiclass;
                h.d = Some(m.examples().first().map_or(0, |e| e.x.len()));
                h.num_labels = Some(m.num_classes());
            }
            Dataset::Toy(m) => {
                h.kind = DatasetKind::Toy;
                h.k = Some(m.num_wrong_labels());
                h.lambda = Some(m.lambda());
            }
        }
        h
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header()).expect("header serializes");
        out.push('\n');
        match self {
            Dataset::Chain(m) => {
                for inst in m.instances() {
                    let line = ChainLine { labels: inst.labels.0.clone(), features: inst.features.clone() };
                    let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("line serializes"));
                }
            }
            Dataset::Multiclass(m) => {
                for e in m.examples() {
                    let line = MulticlassLine { label: e.label, x: e.x.clone() };
                    let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("line serializes"));
                }
            }
            Dataset::Toy(_) => {}
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| anyhow!("empty dataset file"))?;
        let h: Header = serde_json::from_str(first).context("line 1: bad header")?;
        if h.format_version != FORMAT_VERSION {
            bail!("unsupported format_version {}", h.format_version);
        }
        let need = |v: Option<usize>, name: &str| v.ok_or_else(|| anyhow!("header is missing {name}"));
        let ds = match h.kind {
            DatasetKind::Chain => {
                let (d_u, num_labels) = (need(h.d_u, "d_u")?, need(h.num_labels, "L")?);
                let mut instances = Vec::with_capacity(h.n);
                for (no, l) in lines {
                    let line: ChainLine = serde_json::from_str(l).with_context(|| format!("line {}", no + 1))?;
                    if line.labels.len() != line.features.len() {
                        bail!(
                            "line {}: {} labels but {} feature lists",
                            no + 1,
                            line.labels.len(),
                            line.features.len()
                        );
                    }
                    instances.push(ChainInstance { features: line.features, labels: Labeling(line.labels) });
                }
                Dataset::Chain(ChainModel::new(d_u, num_labels, instances)?)
            }
            DatasetKind::Multiclass => {
                let (d, num_labels) = (need(h.d, "d")?, need(h.num_labels, "L")?);
                let mut examples = Vec::with_capacity(h.n);
                for (no, l) in lines {
                    let line: MulticlassLine = serde_json::from_str(l).with_context(|| format!("line {}", no + 1))?;
                    if line.x.len() != d {
                        bail!("line {}: expected {d} features, got {}", no + 1, line.x.len());
                    }
                    examples.push(MulticlassExample { x: line.x, label: line.label });
                }
                Dataset::Multiclass(MulticlassModel::new(num_labels, examples)?)
            }
            DatasetKind::Toy => {
                if lines.next().is_some() {
                    bail!("toy datasets have no example lines");
                }
                let m = ToyModel::new(h.n, need(h.k, "K")?)?;
                if let Some(l) = h.lambda {
                    if l != m.lambda() {
                        bail!("toy header lambda {l} differs from 1/n");
                    }
                }
                Dataset::Toy(m)
            }
        };
        if ds.model().num_examples() != h.n {
            bail!("header says n = {} but the file has {} examples", h.n, ds.model().num_examples());
        }
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
