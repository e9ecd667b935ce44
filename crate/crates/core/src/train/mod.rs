//! Losses, the training loop, accuracy and the comparison report.

pub mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{cosine_lr, Adam, Workspace};
use crate::data::{batches, Dataset};
use crate::fuzzify::{DiffModel, Head, ModelError, ModelSpec, Threshold};
use crate::par;

pub use report::{run_matrix, MatrixConfig, ModelKind, Report, ReportCell};

const PROB_FLOOR: f64 = 1e-12;
/// Samples per gradient work unit. Fixed so results do not depend on the
/// number of threads.
const CHUNK: usize = 25;

/// Binary cross-entropy against the smoothed target `y(1 - 2ε) + ε`.
/// Returns the loss and its derivative with respect to `pred`.
pub fn bce_loss(pred: f64, label: bool, eps: f64) -> (f64, f64) {
    let t = if label { 1.0 - eps } else { eps };
    let p = pred.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    let loss = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    (loss, -t / p + (1.0 - t) / (1.0 - p))
}

/// Categorical cross-entropy against a smoothed one-hot target. Writes the
/// derivative with respect to each probability into `grad`.
pub fn cce_loss(probs: &[f64], class: usize, eps: f64, grad: &mut [f64]) -> Result<f64, TrainError> {
    let k = probs.len();
    if class >= k {
        return Err(TrainError::Label { label: class, classes: k });
    }
    let mut loss = 0.0;
    for (j, (&p, g)) in probs.iter().zip(grad.iter_mut()).enumerate() {
        let t = eps / k as f64 + if j == class { 1.0 - eps } else { 0.0 };
        let p = p.clamp(PROB_FLOOR, 1.0);
        loss -= t * p.ln();
        *g = -t / p;
    }
    Ok(loss)
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training diverged: loss is {loss} in epoch {epoch}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("accuracy of an empty dataset is undefined")]
    EmptyDataset,
    #[error("{0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub label_smoothing: f64,
    /// Drives the batch order.
    pub seed: u64,
    /// Record wall-clock time in the report (makes it non-reproducible).
    #[serde(default)]
    pub timings: bool,
}

impl TrainConfig {
    /// Defaults for `spec`: dense baselines are trained with label smoothing
    /// 0.1, everything else without.
    pub fn for_spec(spec: &ModelSpec, seed: u64) -> Self {
        let eps = match spec {
            ModelSpec::Dense {
                scenario: crate::scenario::Scenario::Industry,
                ..
            } => 0.1,
            _ => 0.0,
        };
        TrainConfig {
            epochs: 100,
            batch_size: 100,
            lr: 0.01,
            label_smoothing: eps,
            seed,
            timings: false,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return Err(TrainError::Config(format!(
                "label smoothing must lie in [0, 0.5), got {}",
                self.label_smoothing
            )));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub params: usize,
    pub seed: u64,
    pub config: TrainConfig,
    /// Validation accuracy after each epoch.
    pub history: Vec<f64>,
    /// Mean training loss of each epoch.
    pub train_loss: Vec<f64>,
    pub final_accuracy: f64,
    /// Learned threshold positions at the end of training.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub thresholds: Vec<Threshold>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_s: Option<f64>,
}

/// A dataset turned into model inputs once, up front.
pub struct Encoded {
    pub width: usize,
    pub x: Vec<f64>,
    /// `false` where the rule could not bind; such rows predict 0.
    pub valid: Vec<bool>,
    pub labels: Vec<usize>,
    pub strata: Vec<String>,
}

impl Encoded {
    pub fn new(model: &DiffModel, d: &Dataset) -> Result<Encoded, ModelError> {
        let width = model.input_width;
        let rows = par::map(&d.records, |r| {
            let mut x = vec![0.0; width];
            model.encode(&r.input, &mut x).map(|ok| (x, ok))
        });
        let mut enc = Encoded {
            width,
            x: Vec::with_capacity(width * d.len()),
            valid: Vec::with_capacity(d.len()),
            labels: d.records.iter().map(|r| r.label).collect(),
            strata: d.records.iter().map(|r| r.stratum.clone()).collect(),
        };
        for row in rows {
            let (x, ok) = row?;
            enc.x.extend(x);
            enc.valid.push(ok);
        }
        Ok(enc)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.width..(i + 1) * self.width]
    }
}

fn is_correct(head: &Head, out: &[f64], label: usize) -> bool {
    match head {
        Head::Binary => (out[0] > 0.5) == (label == 1),
        _ => argmax(out) == label,
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

fn outputs(model: &DiffModel, ws: &mut Workspace<f64>, enc: &Encoded, i: usize) -> Result<Vec<f64>, ModelError> {
    if !enc.valid[i] {
        return Ok(vec![0.0; model.head.outputs()]);
    }
    Ok(model.forward(ws, enc.row(i))?.to_vec())
}

/// Per-row correctness.
pub fn predictions(model: &DiffModel, enc: &Encoded) -> Result<Vec<bool>, ModelError> {
    let idx: Vec<usize> = (0..enc.len()).collect();
    let parts = par::map_chunks(&idx, 256, || model.workspace(), |ws, rows| {
        rows.iter()
            .map(|&i| Ok(is_correct(&model.head, &outputs(model, ws, enc, i)?, enc.labels[i])))
            .collect::<Result<Vec<bool>, ModelError>>()
    });
    let mut out = Vec::with_capacity(enc.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn accuracy_encoded(model: &DiffModel, enc: &Encoded) -> Result<f64, TrainError> {
    if enc.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let hits = predictions(model, enc)?.iter().filter(|c| **c).count();
    Ok(hits as f64 / enc.len() as f64)
}

pub fn accuracy(model: &DiffModel, d: &Dataset) -> Result<f64, TrainError> {
    accuracy_encoded(model, &Encoded::new(model, d)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n: usize,
    pub strata: BTreeMap<String, StratumScore>,
}

/// Overall accuracy plus a breakdown by oracle stratum.
pub fn evaluate(model: &DiffModel, d: &Dataset) -> Result<EvalReport, TrainError> {
    let enc = Encoded::new(model, d)?;
    if enc.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let hits = predictions(model, &enc)?;
    let mut strata: BTreeMap<String, StratumScore> = BTreeMap::new();
    for (s, ok) in enc.strata.iter().zip(&hits) {
        let e = strata.entry(s.clone()).or_insert(StratumScore {
            correct: 0,
            total: 0,
            accuracy: 0.0,
        });
        e.total += 1;
        e.correct += usize::from(*ok);
    }
    for e in strata.values_mut() {
        e.accuracy = e.correct as f64 / e.total as f64;
    }
    let correct = hits.iter().filter(|c| **c).count();
    Ok(EvalReport {
        accuracy: correct as f64 / enc.len() as f64,
        n: enc.len(),
        strata,
    })
}

/// Loss and its derivative with respect to the model output.
fn loss_and_seed(head: &Head, out: &[f64], label: usize, eps: f64, seed: &mut [f64]) -> Result<f64, TrainError> {
    match head {
        Head::Binary => {
            let (l, d) = bce_loss(out[0], label == 1, eps);
            seed[0] = d;
            Ok(l)
        }
        _ => cce_loss(out, label, eps, seed),
    }
}

/// Summed loss and gradient over `rows`.
fn chunk_gradient(
    model: &DiffModel,
    ws: &mut Workspace<f64>,
    enc: &Encoded,
    rows: &[usize],
    eps: f64,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut grad = vec![0.0; model.param_count()];
    let mut seed = vec![0.0; model.head.outputs()];
    let mut loss = 0.0;
    for &i in rows {
        let label = enc.labels[i];
        if !enc.valid[i] {
            let out = vec![0.0; model.head.outputs()];
            loss += loss_and_seed(&model.head, &out, label, eps, &mut seed)?;
            continue;
        }
        let out = model.forward(ws, enc.row(i))?;
        loss += loss_and_seed(&model.head, out, label, eps, &mut seed)?;
        if !grad.is_empty() {
            model.graph.backward(ws, &model.params.values, &seed, &mut grad);
        }
    }
    Ok((loss, grad))
}

/// Mean loss and gradient over a batch.
pub fn batch_gradient(model: &DiffModel, enc: &Encoded, rows: &[usize], eps: f64) -> Result<(f64, Vec<f64>), TrainError> {
    let parts = par::map_chunks(rows, CHUNK, || model.workspace(), |ws, c| {
        chunk_gradient(model, ws, enc, c, eps)
    });
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let n = rows.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Per-epoch progress: epoch number (1-based), mean training loss,
/// validation accuracy.
pub type Progress<'a> = &'a mut dyn FnMut(usize, f64, f64);

pub fn train(model: &mut DiffModel, train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    train_with_progress(model, train_set, val_set, cfg, &mut |_, _, _| {})
}

/// Adam with cosine decay over all steps; clamped parameters are projected
/// back after every step.
pub fn train_with_progress(
    model: &mut DiffModel,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    progress: Progress,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let started = Instant::now();
    let tr = Encoded::new(model, train_set)?;
    let va = Encoded::new(model, val_set)?;
    if tr.is_empty() || va.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let n_batches = tr.len().div_ceil(cfg.batch_size);
    let total_steps = (n_batches * cfg.epochs) as u64;
    let adam = Adam::default();
    model.params.reset_optimizer();
    let mut step = 0u64;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut train_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for b in batches(tr.len(), cfg.batch_size, epoch_seed(cfg.seed, epoch)) {
            let (loss, grad) = batch_gradient(model, &tr, &b, cfg.label_smoothing)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { epoch: epoch + 1, loss });
            }
            loss_sum += loss * b.len() as f64;
            if !grad.is_empty() {
                let lr = cosine_lr(step, total_steps, cfg.lr);
                adam.step(&mut model.params, &grad, lr)
                    .map_err(|e| TrainError::Config(e.to_string()))?;
                model.params.apply_clamps();
                if model.params.values.iter().any(|v| !v.is_finite()) {
                    return Err(TrainError::Diverged { epoch: epoch + 1, loss });
                }
            }
            step += 1;
        }
        let mean_loss = loss_sum / tr.len() as f64;
        let acc = accuracy_encoded(model, &va)?;
        progress(epoch + 1, mean_loss, acc);
        train_loss.push(mean_loss);
        history.push(acc);
    }
    let final_accuracy = history.last().copied().unwrap_or(accuracy_encoded(model, &va)?);
    Ok(TrainReport {
        model: describe(&model.spec),
        params: model.param_count(),
        seed: cfg.seed,
        config: cfg.clone(),
        history,
        train_loss,
        final_accuracy,
        thresholds: model.thresholds(),
        wall_clock_s: cfg.timings.then(|| started.elapsed().as_secs_f64()),
    })
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Short human-readable model name.
pub fn describe(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Rules { target, .. } => format!("rules:{}", target.name()),
        ModelSpec::Dense { depth, width, .. } => format!("dense:{depth}x{width}"),
        ModelSpec::Gated { width, gate, .. } => format!("gated:{gate}+1x{width}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_random_industry, split, GenSpec};
    use crate::fuzzify::FuzzConfig;
    use crate::scenario::Relaxation;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(bce_loss(0.5, true, 0.0).0, 0.693147, epsilon = 1e-6);
        assert!(bce_loss(1.0 - 1e-12, true, 0.0).0 < 1e-11);
        assert_abs_diff_eq!(bce_loss(0.5, true, 0.1).0, 0.693147, epsilon = 1e-6);
    }

    #[test]
    fn cce_examples() {
        let mut g = [0.0; 4];
        assert_abs_diff_eq!(cce_loss(&[0.25; 4], 2, 0.0, &mut g).unwrap(), 4f64.ln(), epsilon = 1e-12);
        assert!(cce_loss(&[0.0, 1.0], 1, 0.0, &mut g[..2]).unwrap().abs() < 1e-15);
        assert_abs_diff_eq!(
            cce_loss(&[0.731059, 0.268941], 0, 0.0, &mut g[..2]).unwrap(),
            0.313262,
            epsilon = 1e-6
        );
        assert!(cce_loss(&[0.5, 0.5], 2, 0.0, &mut g[..2]).is_err());
    }

    #[test]
    fn ties_at_one_half_are_false() {
        assert!(!is_correct(&Head::Binary, &[0.5], 1));
        assert!(is_correct(&Head::Binary, &[0.5], 0));
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn strict_model_is_perfect_every_epoch() {
        let d = gen_random_industry(&GenSpec::new(400, 2)).unwrap();
        let (tr, va) = split(&d, 0.9, 2).unwrap();
        let mut m = DiffModel::from_relaxation(Relaxation::Strict, FuzzConfig::default()).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::for_spec(&m.spec, 1)
        };
        let r = train(&mut m, &tr, &va, &cfg).unwrap();
        assert_eq!(r.history, vec![1.0; 3]);
        assert_eq!(r.params, 0);
    }

    #[test]
    fn empty_dataset_has_no_accuracy() {
        let d = gen_random_industry(&GenSpec::new(8, 2)).unwrap();
        let empty = Dataset { records: vec![], ..d };
        let m = DiffModel::from_relaxation(Relaxation::Strict, FuzzConfig::default()).unwrap();
        assert!(matches!(accuracy(&m, &empty), Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn short_training_is_reproducible_and_learns() {
        let d = gen_random_industry(&GenSpec::new(2000, 3)).unwrap();
        let (tr, va) = split(&d, 0.9, 3).unwrap();
        let run = || {
            let mut m = DiffModel::from_relaxation(Relaxation::TimeRight, FuzzConfig::default()).unwrap();
            let cfg = TrainConfig {
                epochs: 10,
                ..TrainConfig::for_spec(&m.spec, 4)
            };
            (train(&mut m, &tr, &va, &cfg).unwrap(), m.to_json())
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert!(a.train_loss[9] < a.train_loss[0]);
    }
}
