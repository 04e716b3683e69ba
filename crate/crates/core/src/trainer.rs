//! Joint objective, optimization loop and checkpoints.
//!
//! The training loss for a batch is
//! `CE + alpha * contrastive + eta * sum(semi-supervised terms)`, where CE is
//! the mean cross-entropy of the classifier on gated statement matrices, the
//! contrastive term is computed over top-K representations with per-batch
//! k-means cluster labels held constant, and the semi-supervised term is the
//! Bernoulli negative log-likelihood of annotated statements.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classifier::{cross_entropy_logit_grad, ClassifierCache, ClassifierParams, LOG_CLAMP};
use crate::contrastive::{build_topk_representation, contrastive_with_grad, kmeans_minibatch, Positives};
use crate::corpus::{TokenizedFunction, Vocabulary};
use crate::encoder::{EncoderCache, EncoderParams, EncoderVariant, StatementMatrix};
use crate::error::{Error, Result};
use crate::evaluator::{self, MetricScope};
use crate::nn::{clip_global_norm, AdamConfig, AdamState, Params};
use crate::par;
use crate::rng::{self, stream};
use crate::selector::{gates_from_noise, gumbel_noise, mask_function, relaxed_gate_derivative, top_k, SelectorCache, SelectorParams, PROB_CLAMP};

pub const CHECKPOINT_FORMAT: &str = "vulnloc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
// Fixed regardless of thread count so gradient sums are reproducible.
const GRADIENT_CHUNKS: usize = 8;

/// Which contrastive regularizer joins the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodVariant {
    /// Clustered contrastive loss.
    #[default]
    Cscl,
    /// Plain supervised contrastive loss.
    Cl,
    /// No contrastive term.
    None,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 3] = [MethodVariant::None, MethodVariant::Cl, MethodVariant::Cscl];
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodVariant::Cscl => "cscl",
            MethodVariant::Cl => "cl",
            MethodVariant::None => "none",
        })
    }
}

impl FromStr for MethodVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cscl" => Ok(MethodVariant::Cscl),
            "cl" => Ok(MethodVariant::Cl),
            "none" => Ok(MethodVariant::None),
            other => Err(Error::config(format!("unknown method variant {other:?} (expected cscl, cl or none)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Temperature of the relaxed gates.
    pub gate_temperature: f64,
    /// Temperature of the contrastive softmax.
    pub contrastive_temperature: f64,
    pub alpha: f64,
    pub clusters: usize,
    pub top_k: usize,
    pub eta: f64,
    pub semi_fraction: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub max_statements: usize,
    pub max_tokens: usize,
    pub embed_dim: usize,
    pub hidden_width: usize,
    pub kernel: usize,
    pub encoder_variant: EncoderVariant,
    pub method_variant: MethodVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 100,
            epochs: 10,
            gate_temperature: crate::selector::DEFAULT_TEMPERATURE,
            contrastive_temperature: crate::contrastive::DEFAULT_TAU,
            alpha: 1.0,
            clusters: 3,
            top_k: 10,
            eta: 1e-2,
            semi_fraction: 0.0,
            grad_clip_norm: 5.0,
            seed: 0,
            max_statements: 100,
            max_tokens: 50,
            embed_dim: crate::encoder::DEFAULT_DIM,
            hidden_width: 100,
            kernel: crate::encoder::DEFAULT_KERNEL,
            encoder_variant: EncoderVariant::ConvMaxPool,
            method_variant: MethodVariant::Cscl,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("gate_temperature", self.gate_temperature),
            ("contrastive_temperature", self.contrastive_temperature),
            ("grad_clip_norm", self.grad_clip_norm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("eta", self.eta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.semi_fraction) {
            return Err(Error::config(format!("semi_fraction must lie in [0, 1], got {}", self.semi_fraction)));
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("clusters", self.clusters),
            ("top_k", self.top_k),
            ("max_statements", self.max_statements),
            ("max_tokens", self.max_tokens),
            ("embed_dim", self.embed_dim),
            ("hidden_width", self.hidden_width),
            ("kernel", self.kernel),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn contrastive_active(&self) -> bool {
        self.alpha > 0.0 && self.method_variant != MethodVariant::None
    }
}

/// Parameters of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub selector: SelectorParams,
    pub classifier: ClassifierParams,
}

impl ModelParams {
    pub fn init(vocab_size: usize, cfg: &TrainConfig) -> Result<Self> {
        let encoder = EncoderParams::init(vocab_size, cfg.embed_dim, cfg.kernel, cfg.encoder_variant, cfg.seed)?;
        let d = encoder.output_dim();
        let w = cfg.hidden_width;
        Ok(ModelParams {
            selector: SelectorParams::init(cfg.max_statements, d, &[w, w, w], cfg.seed),
            classifier: ClassifierParams::init(cfg.max_statements, d, &[w, w], cfg.seed),
            encoder,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            encoder: self.encoder.zeros_like(),
            selector: self.selector.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }
}

fn prefixed<T>(prefix: &'static str, v: Vec<(String, T)>) -> impl Iterator<Item = (String, T)> {
    v.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

impl Params for ModelParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        prefixed("encoder", self.encoder.tensors())
            .chain(prefixed("selector", self.selector.tensors()))
            .chain(prefixed("classifier", self.classifier.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        prefixed("encoder", self.encoder.tensors_mut())
            .chain(prefixed("selector", self.selector.tensors_mut()))
            .chain(prefixed("classifier", self.classifier.tensors_mut()))
            .collect()
    }
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    pub optimizer: AdamState,
    pub epoch: usize,
}

impl ModelState {
    pub fn init(vocab: Vocabulary, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(vocab.len(), &config)?;
        let optimizer = AdamState::new(&params);
        Ok(ModelState { params, vocab, config, optimizer, epoch: 0 })
    }

    fn check_function(&self, tf: &TokenizedFunction) -> Result<()> {
        if tf.max_statements() != self.config.max_statements || tf.max_tokens() != self.config.max_tokens {
            return Err(Error::shape(format!(
                "function {:?} is {}x{}, model expects {}x{}",
                tf.id,
                tf.max_statements(),
                tf.max_tokens(),
                self.config.max_statements,
                self.config.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub function: &'a TokenizedFunction,
    /// Whether the statement-level ground truth may be used for this function.
    pub annotated: bool,
}

impl<'a> BatchItem<'a> {
    pub fn unannotated(function: &'a TokenizedFunction) -> Self {
        BatchItem { function, annotated: false }
    }
}

/// Loss terms of one batch, unweighted except `total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub contrastive: f64,
    pub semi: f64,
    /// Set when the contrastive term was skipped for a batch of fewer than two.
    pub small_batch: bool,
    /// Gradient norm before clipping (training steps only).
    pub grad_norm: f64,
}

/// Negative Bernoulli log-likelihood of annotated statements:
/// `-(sum_{k in annotated} ln p_k + sum_{k real, not annotated} ln(1 - p_k))`.
pub fn semi_supervised_term(p: &Array1<f64>, annotated: &[usize], statement_mask: &[u8]) -> Result<f64> {
    let positive = annotated_mask(p.len(), annotated, statement_mask)?;
    Ok((0..p.len())
        .filter(|&k| statement_mask[k] == 1)
        .map(|k| {
            let pk = p[k].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if positive[k] {
                -pk.ln()
            } else {
                -(1.0 - pk).ln()
            }
        })
        .sum())
}

fn annotated_mask(len: usize, annotated: &[usize], statement_mask: &[u8]) -> Result<Vec<bool>> {
    let mut positive = vec![false; len];
    for &k in annotated {
        if statement_mask.get(k) != Some(&1) {
            return Err(Error::data(format!("annotated index {k} is not a real statement")));
        }
        positive[k] = true;
    }
    Ok(positive)
}

struct Forward {
    f: StatementMatrix,
    enc: EncoderCache,
    probs: Array1<f64>,
    sel: SelectorCache,
    gates: Array1<f64>,
    q: Array1<f64>,
    cls: ClassifierCache,
    topk: Vec<usize>,
    rep: Array1<f64>,
}

fn forward_one(params: &ModelParams, cfg: &TrainConfig, tf: &TokenizedFunction, noise_seed: u64, idx: usize) -> Result<Forward> {
    let i = idx as u64;
    let (f, enc) = params.encoder.forward(tf, Some(&mut rng::rng(noise_seed, &[stream::ENCODER_DROPOUT, i])))?;
    let (probs, sel) = params.selector.forward(&f, Some(&mut rng::rng(noise_seed, &[stream::SELECTOR_DROPOUT, i])))?;
    let (a, b) = gumbel_noise(probs.len(), &mut rng::rng(noise_seed, &[stream::GUMBEL, i]));
    let gates = gates_from_noise(&probs, &a, &b, cfg.gate_temperature)?;
    let masked = mask_function(&f.values, &gates)?;
    let (q, cls) = params
        .classifier
        .forward(&masked, Some(&mut rng::rng(noise_seed, &[stream::CLASSIFIER_DROPOUT, i])))?;
    let topk = top_k(&probs, cfg.top_k, &f.statement_mask);
    let rep = build_topk_representation(&f, &topk, cfg.top_k)?;
    Ok(Forward { f, enc, probs, sel, gates, q, cls, topk, rep })
}

fn backward_one(
    params: &ModelParams,
    cfg: &TrainConfig,
    item: &BatchItem<'_>,
    fw: &Forward,
    batch_len: usize,
    rep_grad: Option<&Array1<f64>>,
    grad: &mut ModelParams,
) -> Result<()> {
    let tf = item.function;
    let d_logits = cross_entropy_logit_grad(&fw.q, tf.label) / batch_len as f64;
    let d_masked = params.classifier.backward(fw.f.values.dim(), &fw.cls, &d_logits, &mut grad.classifier);

    let l = fw.probs.len();
    let mut d_f = &d_masked * &fw.gates.view().insert_axis(ndarray::Axis(1));
    let mut d_probs = Array1::zeros(l);
    for i in 0..l {
        if fw.probs[i] > 0.0 {
            let dz = d_masked.row(i).dot(&fw.f.values.row(i));
            d_probs[i] = dz * relaxed_gate_derivative(fw.probs[i], fw.gates[i], cfg.gate_temperature);
        }
    }
    if item.annotated && cfg.eta > 0.0 {
        let positive = annotated_mask(l, &tf.vuln_indices, &tf.statement_mask)?;
        for k in (0..l).filter(|&k| tf.statement_mask[k] == 1) {
            let pk = fw.probs[k];
            d_probs[k] += cfg.eta * if positive[k] { -1.0 / pk } else { 1.0 / (1.0 - pk) };
        }
    }
    if let Some(g) = rep_grad {
        let d = fw.f.dim();
        for (slot, &row) in fw.topk.iter().enumerate() {
            d_f.row_mut(row).scaled_add(cfg.alpha, &g.slice(s![slot * d..(slot + 1) * d]));
        }
    }
    d_f += &params.selector.backward(&fw.f, &fw.sel, &d_probs, &mut grad.selector);
    params.encoder.backward(tf, &fw.enc, &d_f, &mut grad.encoder);
    Ok(())
}

fn evaluate_batch(
    params: &ModelParams,
    cfg: &TrainConfig,
    batch: &[BatchItem<'_>],
    noise_seed: u64,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<ModelParams>)> {
    if batch.is_empty() {
        return Err(Error::data("empty batch"));
    }
    let forwards: Vec<Forward> = par::map(batch, |i, item| forward_one(params, cfg, item.function, noise_seed, i))
        .into_iter()
        .collect::<Result<_>>()?;

    let ce = forwards
        .iter()
        .zip(batch)
        .map(|(fw, item)| -fw.q[item.function.label as usize].max(LOG_CLAMP).ln())
        .sum::<f64>()
        / batch.len() as f64;

    let mut semi = 0.0;
    for (fw, item) in forwards.iter().zip(batch).filter(|(_, it)| it.annotated) {
        semi += semi_supervised_term(&fw.probs, &item.function.vuln_indices, &item.function.statement_mask)?;
    }

    let mut out = LossBreakdown { ce, semi, ..Default::default() };
    let mut rep_grads = None;
    if cfg.contrastive_active() {
        let reps: Vec<Array1<f64>> = forwards.iter().map(|fw| fw.rep.clone()).collect();
        let labels: Vec<u8> = batch.iter().map(|it| it.function.label).collect();
        let clusters;
        let positives = match cfg.method_variant {
            MethodVariant::Cscl => {
                clusters = kmeans_minibatch(&reps, cfg.clusters, rng::derive(noise_seed, &[stream::KMEANS]))?;
                Positives::SameCluster(&clusters)
            }
            _ => Positives::AllVulnerable,
        };
        let c = contrastive_with_grad(&reps, &labels, positives, cfg.contrastive_temperature)?;
        out.contrastive = c.loss;
        out.small_batch = c.small_batch;
        rep_grads = Some(c.grads);
    }
    out.total = out.ce + cfg.alpha * out.contrastive + cfg.eta * out.semi;
    if !want_grad {
        return Ok((out, None));
    }

    let chunk = batch.len().div_ceil(GRADIENT_CHUNKS);
    let ranges: Vec<(usize, usize)> = (0..batch.len()).step_by(chunk).map(|s| (s, (s + chunk).min(batch.len()))).collect();
    let partials: Vec<ModelParams> = par::map(&ranges, |_, &(start, end)| {
        let mut g = params.zeros_like();
        for i in start..end {
            let rg = rep_grads.as_ref().map(|v| &v[i]);
            backward_one(params, cfg, &batch[i], &forwards[i], batch.len(), rg, &mut g)?;
        }
        Ok(g)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let mut grad = iter.next().expect("non-empty batch");
    for g in iter {
        grad.add_scaled(1.0, &g);
    }
    Ok((out, Some(grad)))
}

/// Training-mode loss of `batch` with dropout, gate noise and k-means all
/// drawn from `noise_seed`.
pub fn combined_loss(params: &ModelParams, cfg: &TrainConfig, batch: &[BatchItem<'_>], noise_seed: u64) -> Result<LossBreakdown> {
    Ok(evaluate_batch(params, cfg, batch, noise_seed, false)?.0)
}

/// [`combined_loss`] together with its gradient for every parameter.
pub fn loss_and_gradient(
    params: &ModelParams,
    cfg: &TrainConfig,
    batch: &[BatchItem<'_>],
    noise_seed: u64,
) -> Result<(LossBreakdown, ModelParams)> {
    let (loss, grad) = evaluate_batch(params, cfg, batch, noise_seed, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// One optimization step: gradient, global-norm clipping, Adam update.
pub fn train_step(state: &mut ModelState, batch: &[BatchItem<'_>], seed: u64) -> Result<LossBreakdown> {
    for item in batch {
        state.check_function(item.function)?;
    }
    let (mut loss, mut grad) = loss_and_gradient(&state.params, &state.config, batch, seed)?;
    if !loss.total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (ce {}, contrastive {}, semi {})",
            loss.ce, loss.contrastive, loss.semi
        )));
    }
    loss.grad_norm = clip_global_norm(&mut grad, state.config.grad_clip_norm);
    if !loss.grad_norm.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let adam = AdamConfig::with_learning_rate(state.config.learning_rate);
    state.optimizer.update(&adam, &mut state.params, &grad);
    Ok(loss)
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub ce_term: f64,
    pub cscl_term: f64,
    pub valid_vcp: Option<f64>,
    pub valid_vca: Option<f64>,
    pub valid_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// The state with the best validation VCP (the initial state when no epoch ran).
    pub best: ModelState,
    pub best_epoch: Option<usize>,
    /// The state after the last epoch.
    pub last: ModelState,
    pub history: Vec<EpochRecord>,
}

/// Picks `round(fraction * n)` vulnerable training functions whose statement
/// ground truth may be used.
pub fn choose_annotated(train: &[TokenizedFunction], fraction: f64, seed: u64) -> HashSet<usize> {
    let mut vulnerable: Vec<usize> = (0..train.len()).filter(|&i| train[i].is_vulnerable()).collect();
    let n = (vulnerable.len() as f64 * fraction).round() as usize;
    vulnerable.shuffle(&mut rng::rng(seed, &[stream::ANNOTATE]));
    vulnerable.into_iter().take(n).collect()
}

/// Trains for `config.epochs` epochs of shuffled mini-batches, validating after
/// each epoch and keeping the state with the best validation VCP.
pub fn fit(train: &[TokenizedFunction], valid: &[TokenizedFunction], vocab: Vocabulary, config: TrainConfig) -> Result<FitOutcome> {
    fit_with(train, valid, vocab, config, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    train: &[TokenizedFunction],
    valid: &[TokenizedFunction],
    vocab: Vocabulary,
    config: TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(Error::data("empty training corpus"));
    }
    let mut state = ModelState::init(vocab, config)?;
    for tf in train.iter().chain(valid) {
        state.check_function(tf)?;
    }
    let cfg = state.config.clone();
    let annotated = if cfg.semi_fraction > 0.0 { choose_annotated(train, cfg.semi_fraction, cfg.seed) } else { HashSet::new() };

    let mut best = state.clone();
    let mut best_epoch = None;
    let mut best_vcp = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::rng(cfg.seed, &[stream::SHUFFLE, epoch as u64]));
        let (mut total, mut ce, mut contrastive, mut n_batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<BatchItem<'_>> = chunk
                .iter()
                .map(|&i| BatchItem { function: &train[i], annotated: annotated.contains(&i) })
                .collect();
            let step_seed = rng::derive(cfg.seed, &[stream::STEP, epoch as u64, b as u64]);
            let loss = train_step(&mut state, &batch, step_seed)?;
            total += loss.total;
            ce += loss.ce;
            contrastive += loss.contrastive;
            n_batches += 1;
        }
        state.epoch = epoch + 1;
        let n = n_batches as f64;
        let (vcp, vca, acc) = if valid.is_empty() {
            (None, None, None)
        } else {
            let preds = evaluator::predict_corpus(&state, valid)?;
            let report = evaluator::MetricsReport::compute(&preds, cfg.top_k, MetricScope::Vulnerable);
            (report.vcp, report.vca, report.function_acc)
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: total / n,
            ce_term: ce / n,
            cscl_term: contrastive / n,
            valid_vcp: vcp,
            valid_vca: vca,
            valid_acc: acc,
        };
        on_epoch(&record);
        history.push(record);
        if let Some(v) = vcp.filter(|v| *v > best_vcp) {
            best_vcp = v;
            best = state.clone();
            best_epoch = Some(epoch + 1);
        }
    }
    if best_epoch.is_none() && cfg.epochs > 0 {
        best = state.clone();
        best_epoch = Some(cfg.epochs);
    }
    Ok(FitOutcome { best, best_epoch, last: state, history })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,ce_term,cscl_term,valid_VCP,valid_VCA,valid_ACC";

pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.ce_term,
            r.cscl_term,
            opt(r.valid_vcp),
            opt(r.valid_vca),
            opt(r.valid_acc)
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    state: ModelState,
}

#[derive(Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let file = CheckpointFile { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, state: state.clone() };
    fs::write(path, serde_json::to_vec(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    let bytes = fs::read(path)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("not a checkpoint (format {:?})", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    let file: CheckpointFile =
        serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;
    let state = file.state;
    let fresh = ModelParams::init(state.vocab.len(), &state.config)?;
    let shapes = |p: &ModelParams| p.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect::<Vec<_>>();
    if shapes(&fresh) != shapes(&state.params) || !state.params.all_finite() {
        return Err(Error::Checkpoint("parameter shapes do not match the stored configuration".into()));
    }
    Ok(state)
}
