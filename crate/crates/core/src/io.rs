//! File formats: measure JSON, spectrum CSV, planar point-set CSV,
//! bipartite edge lists, and generic JSON report emission.
//!
//! Determinism: floating-point values are written with Rust's shortest
//! round-trip formatting, which is a pure function of the bit pattern, so
//! identical in-memory values always produce byte-identical files.
//! Filesystem problems surface as rejected-input errors carrying the path.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::addcomb::BipartiteGraph;
use crate::error::{Error, Result};
use crate::measure::{GridMeasure, Spectrum};
use crate::projection::PlanarPointSet;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::RejectedInput(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Measure files
// ---------------------------------------------------------------------------

/// On-disk weight layout: a dense vector of length `Q`, or sparse
/// `[index, weight]` pairs (duplicate indices accumulate).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsFile {
    Dense(Vec<f64>),
    Sparse(Vec<(usize, f64)>),
}

/// Measure file: `{"Q": <int>, "weights": {"dense": [..]} | {"sparse": [[i, w], ..]}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    #[serde(rename = "Q")]
    pub q: usize,
    pub weights: WeightsFile,
}

impl MeasureFile {
    pub fn to_measure(&self) -> Result<GridMeasure> {
        match &self.weights {
            WeightsFile::Dense(w) => {
                if w.len() != self.q {
                    return Err(Error::RejectedInput(format!(
                        "dense weight vector has length {}, expected Q = {}",
                        w.len(),
                        self.q
                    )));
                }
                GridMeasure::from_weights(self.q, w.clone())
            }
            WeightsFile::Sparse(pairs) => {
                let mut w = vec![0.0; self.q];
                for &(i, v) in pairs {
                    if i >= self.q {
                        return Err(Error::RejectedInput(format!(
                            "sparse index {i} out of range for Q = {}",
                            self.q
                        )));
                    }
                    w[i] += v;
                }
                GridMeasure::from_weights(self.q, w)
            }
        }
    }

    /// Chooses the sparse layout when fewer than a third of the grid
    /// points carry weight, dense otherwise (a deterministic rule).
    pub fn from_measure(mu: &GridMeasure) -> Self {
        let nonzero: Vec<(usize, f64)> = mu
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i, *w))
            .collect();
        let weights = if nonzero.len() * 3 < mu.q() {
            WeightsFile::Sparse(nonzero)
        } else {
            WeightsFile::Dense(mu.weights().to_vec())
        };
        MeasureFile { q: mu.q(), weights }
    }
}

pub fn read_measure(path: &Path) -> Result<GridMeasure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: MeasureFile = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    file.to_measure()
}

pub fn write_measure(path: &Path, mu: &GridMeasure) -> Result<()> {
    write_json(path, &MeasureFile::from_measure(mu))
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

/// Spectrum CSV: header `n,re,im,abs`, one row per frequency, ascending.
pub fn spectrum_csv(spec: &Spectrum) -> String {
    let mut out = String::from("n,re,im,abs\n");
    for (n, c) in spec.iter() {
        out.push_str(&format!("{n},{},{},{}\n", c.re, c.im, c.norm()));
    }
    out
}

pub fn write_spectrum_csv(path: &Path, spec: &Spectrum) -> Result<()> {
    fs::write(path, spectrum_csv(spec)).map_err(|e| io_err(path, e))
}

/// Planar point-set CSV: header `x,y`, one row per point. Weights are not
/// stored in this format; import assigns uniform weights.
pub fn planar_csv(points: &PlanarPointSet) -> String {
    let mut out = String::from("x,y\n");
    for p in points.coords() {
        out.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    out
}

pub fn write_planar_csv(path: &Path, points: &PlanarPointSet) -> Result<()> {
    fs::write(path, planar_csv(points)).map_err(|e| io_err(path, e))
}

/// Reads an `x,y` CSV (header optional) into a uniformly weighted set.
pub fn read_planar_csv(path: &Path) -> Result<PlanarPointSet> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut coords = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().unwrap_or("").trim();
        let b = parts.next().unwrap_or("").trim();
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => coords.push([x, y]),
            _ if lineno == 0 => continue, // header row
            _ => {
                return Err(io_err(
                    path,
                    format!("line {}: expected `x,y`, got `{line}`", lineno + 1),
                ))
            }
        }
    }
    PlanarPointSet::uniform(coords)
}

// ---------------------------------------------------------------------------
// Edge lists and generic JSON
// ---------------------------------------------------------------------------

/// Reads a bipartite graph from an edge-list file (`n_a n_b` header, then
/// one `a b` pair per line; `#` comments allowed).
pub fn read_edge_list(path: &Path) -> Result<BipartiteGraph> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    BipartiteGraph::from_edge_list_text(&text)
}

/// Writes any serializable report as pretty-printed JSON with a trailing
/// newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InternalAssertion(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}
