//! Weight files, bound files and path manifests.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// `d=<d> lambda=<lambda> method=<method>`, then one value per line with 17
/// significant digits.
pub fn format_weights(w: &[f64], lambda: f64, method: &str) -> String {
    let mut s = format!("d={} lambda={:?} method={}\n", w.len(), lambda, method);
    for x in w {
        let _ = writeln!(s, "{x:.16e}");
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightsFile {
    pub lambda: f64,
    pub method: String,
    pub w: Vec<f64>,
}

pub fn parse_weights(text: &str) -> Result<WeightsFile> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty weights file"))?;
    let (mut d, mut lambda, mut method) = (None, None, None);
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("d", v)) => d = Some(v.parse::<usize>()?),
            Some(("lambda", v)) => lambda = Some(v.parse::<f64>()?),
            Some(("method", v)) => method = Some(v.to_string()),
            _ => bail!("unexpected header field {field:?}"),
        }
    }
    let d = d.ok_or_else(|| anyhow!("weights header lacks d"))?;
    let w = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().with_context(|| format!("bad weight {l:?}")))
        .collect::<Result<Vec<_>>>()?;
    if w.len() != d {
        bail!("weights header says d = {d} but {} values follow", w.len());
    }
    Ok(WeightsFile {
        lambda: lambda.ok_or_else(|| anyhow!("weights header lacks lambda"))?,
        method: method.unwrap_or_default(),
        w,
    })
}

pub fn read_weights(path: &Path) -> Result<WeightsFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_weights(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One bound per line; `inf` and `-inf` are allowed, `#` starts a comment.
pub fn parse_bounds(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().with_context(|| format!("bad bound {l:?}")))
        .collect()
}

pub fn read_bounds(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_bounds(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestBreakpoint {
    pub lambda: f64,
    pub gap: f64,
    pub ell: f64,
    pub passes: f64,
    pub oracle_calls: u64,
    pub seconds: f64,
    pub rho: Option<f64>,
    pub flagged: bool,
    pub weights: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathManifest {
    pub format_version: u32,
    pub mode: String,
    pub epsilon: f64,
    pub kappa: f64,
    pub lambda_inf: f64,
    pub covered_to: f64,
    pub status: String,
    pub breakpoints: Vec<ManifestBreakpoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPointEntry {
    pub lambda: f64,
    pub gap: f64,
    pub converged: bool,
    pub passes: f64,
    pub seconds: f64,
    pub weights: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub warm: bool,
    pub total_passes: f64,
    pub points: Vec<GridPointEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub format_version: u32,
    pub tol: f64,
    pub runs: Vec<GridRun>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("manifest serializes");
    s.push('\n');
    s
}
