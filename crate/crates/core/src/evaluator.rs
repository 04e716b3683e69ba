//! Statement-level localization metrics, function accuracy and text reports.
//!
//! Every metric works on the first `k` entries of each function's full
//! ranking, so one set of predictions can be scored at several cut-offs.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{FunctionRecord, TokenizedFunction};
use crate::error::{Error, Result};
use crate::par;
use crate::selector::{eval_gate, mask_function, ranking, top_k};
use crate::trainer::{MethodVariant, ModelState};

/// Model output for one function plus the ground truth needed to score it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionPrediction {
    pub id: String,
    /// Real statements by descending selection probability, ties by lower index.
    pub ranking: Vec<usize>,
    /// The model's top-K statements, ascending.
    pub selected: Vec<usize>,
    pub predicted_label: u8,
    pub label: u8,
    /// Ground-truth statements that survived truncation.
    pub truth: Vec<usize>,
    /// Ground-truth count before truncation.
    pub truth_total: usize,
    pub truncated_truth: bool,
    pub probs: Vec<f64>,
}

impl FunctionPrediction {
    fn hits(&self, k: usize) -> usize {
        let top = &self.ranking[..k.min(self.ranking.len())];
        top.iter().filter(|i| self.truth.contains(i)).count()
    }
}

/// Deterministic inference: no dropout, hard top-K gates, then the classifier.
pub fn predict(state: &ModelState, tf: &TokenizedFunction) -> Result<FunctionPrediction> {
    let params = &state.params;
    let (f, _) = params.encoder.forward(tf, None)?;
    let (probs, _) = params.selector.forward(&f, None)?;
    let k = state.config.top_k;
    let gates = eval_gate(&probs, k, &f.statement_mask);
    let (q, _) = params.classifier.forward(&mask_function(&f.values, &gates)?, None)?;
    Ok(FunctionPrediction {
        id: tf.id.clone(),
        ranking: ranking(probs.view(), &f.statement_mask),
        selected: top_k(&probs, k, &f.statement_mask),
        predicted_label: u8::from(q[1] > q[0]),
        label: tf.label,
        truth: tf.vuln_indices.clone(),
        truth_total: tf.original_truth_len,
        truncated_truth: tf.truncated_truth,
        probs: probs.to_vec(),
    })
}

pub fn predict_corpus(state: &ModelState, corpus: &[TokenizedFunction]) -> Result<Vec<FunctionPrediction>> {
    par::map(corpus, |_, tf| predict(state, tf)).into_iter().collect()
}

/// Which functions the coverage metrics range over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricScope {
    /// Vulnerable functions with at least one ground-truth statement.
    #[default]
    Vulnerable,
    /// Every function; those without ground truth count as uncovered.
    All,
}

impl fmt::Display for MetricScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricScope::Vulnerable => "vulnerable",
            MetricScope::All => "all",
        })
    }
}

impl FromStr for MetricScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vulnerable" => Ok(MetricScope::Vulnerable),
            "all" => Ok(MetricScope::All),
            other => Err(Error::config(format!("unknown metric scope {other:?} (expected vulnerable or all)"))),
        }
    }
}

fn in_scope(preds: &[FunctionPrediction], scope: MetricScope) -> impl Iterator<Item = &FunctionPrediction> {
    preds
        .iter()
        .filter(move |p| scope == MetricScope::All || (p.label == 1 && p.truth_total > 0))
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Share of ground-truth statements found in their function's top `k`.
/// `None` when the scope holds no ground truth.
pub fn vcp(preds: &[FunctionPrediction], k: usize, scope: MetricScope) -> Option<f64> {
    let (hits, total) = in_scope(preds, scope).fold((0, 0), |(h, t), p| (h + p.hits(k), t + p.truth_total));
    ratio(hits, total)
}

/// Share of in-scope functions whose whole ground truth is in the top `k`.
pub fn vca(preds: &[FunctionPrediction], k: usize, scope: MetricScope) -> Option<f64> {
    let (full, n) = in_scope(preds, scope).fold((0, 0), |(c, n), p| {
        let covered = !p.truncated_truth && p.truth_total > 0 && p.hits(k) == p.truth.len();
        (c + usize::from(covered), n + 1)
    });
    ratio(full, n)
}

/// Share of in-scope functions with at least one ground-truth statement in the top `k`.
pub fn topk_acc(preds: &[FunctionPrediction], k: usize, scope: MetricScope) -> Option<f64> {
    let (any, n) = in_scope(preds, scope).fold((0, 0), |(c, n), p| (c + usize::from(p.hits(k) > 0), n + 1));
    ratio(any, n)
}

/// Initial false alarms of one function: ranked statements before the first
/// hit, or the whole ranking when nothing ranked is a hit.
pub fn initial_false_alarms(p: &FunctionPrediction) -> usize {
    p.ranking.iter().position(|i| p.truth.contains(i)).unwrap_or(p.ranking.len())
}

/// Mean initial false alarms over in-scope functions.
pub fn ifa(preds: &[FunctionPrediction], scope: MetricScope) -> Option<f64> {
    let (sum, n) = in_scope(preds, scope).fold((0, 0), |(s, n), p| (s + initial_false_alarms(p), n + 1));
    ratio(sum, n)
}

/// Hits per selection slot: summed top-`k` hits over `k` times the number of in-scope functions.
pub fn vce(preds: &[FunctionPrediction], k: usize, scope: MetricScope) -> Option<f64> {
    let (hits, n) = in_scope(preds, scope).fold((0, 0), |(h, n), p| (h + p.hits(k), n + 1));
    ratio(hits, k * n)
}

/// Share of all functions whose predicted label is correct.
pub fn function_accuracy(preds: &[FunctionPrediction]) -> Option<f64> {
    ratio(preds.iter().filter(|p| p.predicted_label == p.label).count(), preds.len())
}

/// All metrics of one evaluation at one cut-off. `None` marks a metric with an
/// empty denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub vcp: Option<f64>,
    pub vca: Option<f64>,
    pub topk_acc: Option<f64>,
    pub ifa: Option<f64>,
    pub vce: Option<f64>,
    pub function_acc: Option<f64>,
    pub n_functions: usize,
    pub n_in_scope: usize,
}

impl MetricsReport {
    pub fn compute(preds: &[FunctionPrediction], k: usize, scope: MetricScope) -> Self {
        MetricsReport {
            k,
            vcp: vcp(preds, k, scope),
            vca: vca(preds, k, scope),
            topk_acc: topk_acc(preds, k, scope),
            ifa: ifa(preds, scope),
            vce: vce(preds, k, scope),
            function_acc: function_accuracy(preds),
            n_functions: preds.len(),
            n_in_scope: in_scope(preds, scope).count(),
        }
    }

    /// Functions in scope whose ranking never reaches a ground-truth statement.
    pub fn ifa_misses(preds: &[FunctionPrediction], scope: MetricScope) -> Vec<String> {
        in_scope(preds, scope)
            .filter(|p| initial_false_alarms(p) == p.ranking.len())
            .map(|p| p.id.clone())
            .collect()
    }
}

/// One row of a metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub split: String,
    pub method_variant: MethodVariant,
    pub seed: u64,
    pub report: MetricsReport,
}

/// `Top10_ACC` holds Top-K accuracy at the row's `K`.
pub const METRICS_HEADER: &str = "dataset,split,K,method_variant,VCP,VCA,Top10_ACC,IFA,VCE,ACC,seed,n_functions,n_in_scope";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::data(format!("bad metric value {s:?}")))
}

fn check_field(s: &str) -> Result<&str> {
    if s.contains([',', '\n', '\r']) {
        return Err(Error::data(format!("metrics field {s:?} may not contain commas or newlines")));
    }
    Ok(s)
}

pub fn format_metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut out = format!("{METRICS_HEADER}\n");
    for row in rows {
        let r = &row.report;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            check_field(&row.dataset)?,
            check_field(&row.split)?,
            r.k,
            row.method_variant,
            fmt_opt(r.vcp),
            fmt_opt(r.vca),
            fmt_opt(r.topk_acc),
            fmt_opt(r.ifa),
            fmt_opt(r.vce),
            fmt_opt(r.function_acc),
            row.seed,
            r.n_functions,
            r.n_in_scope
        ));
    }
    Ok(out)
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::data("metrics CSV header mismatch"));
    }
    let int = |s: &str| s.parse::<u64>().map_err(|_| Error::data(format!("bad integer {s:?}")));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 13 {
                return Err(Error::data(format!("expected 13 metrics fields, got {}", f.len())));
            }
            Ok(MetricsRow {
                dataset: f[0].into(),
                split: f[1].into(),
                method_variant: f[3].parse()?,
                seed: int(f[10])?,
                report: MetricsReport {
                    k: int(f[2])? as usize,
                    vcp: parse_opt(f[4])?,
                    vca: parse_opt(f[5])?,
                    topk_acc: parse_opt(f[6])?,
                    ifa: parse_opt(f[7])?,
                    vce: parse_opt(f[8])?,
                    function_acc: parse_opt(f[9])?,
                    n_functions: int(f[11])? as usize,
                    n_in_scope: int(f[12])? as usize,
                },
            })
        })
        .collect()
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    fs::write(path, format_metrics_csv(rows)?)?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    parse_metrics_csv(&fs::read_to_string(path)?)
}

pub const SELECTED_MARK: &str = ">>";
pub const HIT_MARK: &str = ">>!";

/// Writes the ranked report for every vulnerable prediction: a header line,
/// one line per source statement, and a hit-count footer. Selected statements
/// carry `>>`; selected ground-truth statements carry `>>!`.
pub fn write_report(out: &mut impl Write, preds: &[FunctionPrediction], records: &[FunctionRecord], k: usize) -> Result<()> {
    let by_id: HashMap<&str, &FunctionRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    for p in preds.iter().filter(|p| p.label == 1) {
        let rec = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::data(format!("no source record for function {:?}", p.id)))?;
        let top = &p.ranking[..k.min(p.ranking.len())];
        writeln!(out, "== {} (predicted {}, K={k})", p.id, p.predicted_label)?;
        for (i, stmt) in rec.statements.iter().enumerate() {
            let mark = match (top.contains(&i), rec.vuln_indices.contains(&i)) {
                (true, true) => HIT_MARK,
                (true, false) => SELECTED_MARK,
                _ => "",
            };
            writeln!(out, "{mark:<3} {i:>4}  {stmt}")?;
        }
        writeln!(out, "-- hits {}/{} in top {k}", p.hits(k), p.truth_total)?;
    }
    Ok(())
}

pub fn emit_report(preds: &[FunctionPrediction], records: &[FunctionRecord], k: usize, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_report(&mut buf, preds, records, k)?;
    fs::write(path, buf)?;
    Ok(())
}
