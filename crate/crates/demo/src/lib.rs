//! wasm-bindgen bindings behind `www/index.html`. Each export takes plain
//! strings and numbers and returns a JSON string, so the page needs no glue
//! beyond `JSON.parse`.

use ndarray::Array1;
use serde::Serialize;
use vulnloc::contrastive::{cscl_loss, kmeans, scl_loss};
use vulnloc::corpus::tokenize_statement;
use vulnloc::selector::sample_gates;
use wasm_bindgen::prelude::*;

const HISTOGRAM_BINS: usize = 10;

fn to_js<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo payloads serialize")
}

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Tokens of one source line, as a JSON array of strings.
#[wasm_bindgen]
pub fn tokenize(line: &str) -> String {
    to_js(&tokenize_statement(line))
}

#[derive(Debug, Serialize, PartialEq)]
pub struct GateSummary {
    pub p: f64,
    pub temperature: f64,
    pub draws: usize,
    pub mean: f64,
    pub above_half: f64,
    /// Counts of gate values in ten equal bins over [0, 1].
    pub histogram: Vec<usize>,
}

pub fn gate_summary(p: f64, temperature: f64, draws: usize, seed: u64) -> vulnloc::Result<GateSummary> {
    if !(p > 0.0 && p < 1.0) {
        return Err(vulnloc::Error::Config(format!("p must lie in (0, 1), got {p}")));
    }
    let z = sample_gates(&Array1::from_elem(draws, p), temperature, seed)?;
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for &v in &z {
        histogram[((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let n = draws.max(1) as f64;
    Ok(GateSummary {
        p,
        temperature,
        draws,
        mean: z.sum() / n,
        above_half: z.iter().filter(|&&v| v > 0.5).count() as f64 / n,
        histogram,
    })
}

/// Samples `draws` relaxed gates for one selection probability.
#[wasm_bindgen]
pub fn gates(p: f64, temperature: f64, draws: usize, seed: u32) -> Result<String, JsError> {
    gate_summary(p, temperature, draws, u64::from(seed)).map(|s| to_js(&s)).map_err(err)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ContrastiveSummary {
    pub clusters: Vec<usize>,
    pub scl: f64,
    pub cscl: f64,
}

/// `points` holds `[x, y, label]` triples.
pub fn contrastive_summary(points: &[[f64; 3]], k: usize, tau: f64, seed: u64) -> vulnloc::Result<ContrastiveSummary> {
    let reps: Vec<Array1<f64>> = points.iter().map(|p| Array1::from(vec![p[0], p[1]])).collect();
    let labels: Vec<u8> = points.iter().map(|p| u8::from(p[2] >= 0.5)).collect();
    let clusters = kmeans(&reps, k, seed)?.assignments;
    Ok(ContrastiveSummary {
        scl: scl_loss(&reps, &labels, tau)?,
        cscl: cscl_loss(&reps, &labels, &clusters, tau)?,
        clusters,
    })
}

/// Clusters the points and scores both contrastive losses. `points_json` is a
/// JSON array of `[x, y, label]`.
#[wasm_bindgen]
pub fn contrastive(points_json: &str, k: usize, tau: f64, seed: u32) -> Result<String, JsError> {
    let points: Vec<[f64; 3]> = serde_json::from_str(points_json).map_err(err)?;
    contrastive_summary(&points, k, tau, u64::from(seed)).map(|s| to_js(&s)).map_err(err)
}
