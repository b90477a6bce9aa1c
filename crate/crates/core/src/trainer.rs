//! Full-batch training with AdamW and a per-epoch cosine schedule,
//! best-on-validation model selection, evaluation and repeated runs.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{MetricsReport, Summary};
use crate::hetgraph::{Ehg, LabelTable, Split};
use crate::model::{Gdan, GdanConfig};
use crate::nn::{cosine_lr, ops, AdamW, Mode, Reduction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    Accuracy,
    MacroF1,
}

impl SelectionMetric {
    fn of(self, r: &MetricsReport) -> f64 {
        match self {
            Self::Accuracy => r.accuracy,
            Self::MacroF1 => r.macro_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr_min: 0.001,
            lr_max: 0.01,
            weight_decay: 0.01,
            seed: 0,
            selection_metric: SelectionMetric::Accuracy,
            reduction: Reduction::Mean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < lr_min <= lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay {} must be finite and >= 0",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Hex SHA-256 of the compact JSON form of `value`. Map keys serialize in
/// sorted order, so equal configs hash equally.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy of the train-mode forward pass used for the update.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// `None` when there is no validation split; the last epoch is kept.
    pub best_val_metric: Option<f64>,
    /// Path of the saved checkpoint, filled in by whoever saves it.
    pub checkpoint: Option<String>,
    /// Not serialized, so reports of identical runs are byte-identical.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

fn dropout_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        ^ (epoch as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_labels(labels: &LabelTable, g: &Ehg, model_cfg: &GdanConfig) -> Result<()> {
    if let Some(max) = labels.max_node() {
        if max >= g.node_count() {
            return Err(Error::NodeOutOfRange {
                index: max,
                node_count: g.node_count(),
            });
        }
    }
    if labels.num_classes() > model_cfg.num_classes {
        return Err(Error::InvalidArgument(format!(
            "labels have {} classes but the model predicts {}",
            labels.num_classes(),
            model_cfg.num_classes
        )));
    }
    Ok(())
}

/// Trains from a fresh initialization and returns the epoch with the best
/// validation metric (earliest on ties).
///
/// A non-finite loss or gradient aborts with [`Error::Diverged`], carrying
/// the parameters of the last epoch whose loss was finite.
pub fn train(
    g: &Ehg,
    labels: &LabelTable,
    model_cfg: &GdanConfig,
    cfg: &TrainConfig,
) -> Result<(Gdan, TrainReport)> {
    let start = Instant::now();
    cfg.validate()?;
    check_labels(labels, g, model_cfg)?;
    let targets = labels.split(Split::Train);
    if targets.is_empty() {
        return Err(Error::InvalidArgument("train split is empty".into()));
    }
    let val = labels.split(Split::Val);
    let val_nodes: Vec<usize> = val.iter().map(|&(n, _)| n).collect();
    let val_classes: Vec<usize> = val.iter().map(|&(_, c)| c).collect();
    let train_classes: Vec<usize> = targets.iter().map(|&(_, c)| c).collect();
    let train_nodes: Vec<usize> = targets.iter().map(|&(n, _)| n).collect();

    let mut model = Gdan::new(model_cfg.clone(), cfg.seed)?;
    let opt = AdamW::with_weight_decay(cfg.weight_decay);
    let h = g.features().values();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Gdan)> = None;
    let mut last_finite = model.clone();

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr_min, cfg.lr_max);
        let pass = model.forward(g, h, Mode::Train, dropout_seed(cfg.seed, epoch))?;
        let loss = if pass.probs.is_finite() {
            ops::cross_entropy(&pass.probs, &targets, cfg.reduction)?
        } else {
            f64::NAN
        };
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite: Box::new(last_finite),
            });
        }
        last_finite = model.clone();
        let dlogits = ops::softmax_cross_entropy_backward(&pass.probs, &targets, cfg.reduction);
        model.backward(g, &pass, &dlogits)?;
        match opt.step(&mut model.params, lr) {
            Ok(()) => {}
            Err(Error::NonFiniteGradient(name)) => {
                log::error!("non-finite gradient in {name} at epoch {epoch}");
                return Err(Error::Diverged {
                    epoch,
                    last_finite: Box::new(last_finite),
                });
            }
            Err(e) => return Err(e),
        }
        if let Some(stats) = pass.batch_stats() {
            model.bn.update(stats);
        }

        let preds = pass.probs.gather_rows(&train_nodes).argmax_rows();
        let train_accuracy = crate::eval::accuracy(&preds, &train_classes)?;
        let val_report = if val.is_empty() {
            None
        } else {
            let probs = model.predict_proba(g)?.gather_rows(&val_nodes);
            Some(MetricsReport::compute(Split::Val, &probs, &val_classes)?)
        };
        if let Some(r) = &val_report {
            let metric = cfg.selection_metric.of(r);
            if best.as_ref().is_none_or(|(_, b, _)| metric > *b) {
                best = Some((epoch, metric, model.clone()));
            }
        }
        log::debug!("epoch {epoch}: loss {loss:.6} lr {lr:.6}");
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss,
            train_accuracy,
            val_accuracy: val_report.as_ref().map(|r| r.accuracy),
            val_macro_f1: val_report.as_ref().map(|r| r.macro_f1),
        });
    }

    let (best_epoch, best_val_metric, best_model) = match best {
        Some((e, m, model)) => (e, Some(m), model),
        None => (cfg.epochs - 1, None, model),
    };
    let report = TrainReport {
        config_hash: config_hash(&(model_cfg, cfg))?,
        seed: cfg.seed,
        selection_metric: cfg.selection_metric,
        epochs: records,
        best_epoch,
        best_val_metric,
        checkpoint: None,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((best_model, report))
}

/// Eval-mode metrics on one split. Does not modify the model.
pub fn evaluate(g: &Ehg, labels: &LabelTable, model: &Gdan, split: Split) -> Result<MetricsReport> {
    let rows = labels.split(split);
    if rows.is_empty() {
        return Err(Error::Metric(format!("{split} split is empty")));
    }
    let nodes: Vec<usize> = rows.iter().map(|&(n, _)| n).collect();
    let classes: Vec<usize> = rows.iter().map(|&(_, c)| c).collect();
    let probs = model.predict_proba(g)?.gather_rows(&nodes);
    MetricsReport::compute(split, &probs, &classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub split: Split,
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricsReport>,
    pub accuracy: Summary,
    pub macro_f1: Summary,
    /// `None` if any run had no defined AUC.
    pub macro_auc: Option<Summary>,
}

/// `k` runs with seeds `cfg.seed, cfg.seed + 1, ...`, evaluated on `split`.
pub fn repeat_runs(
    g: &Ehg,
    labels: &LabelTable,
    model_cfg: &GdanConfig,
    cfg: &TrainConfig,
    k: usize,
    split: Split,
) -> Result<RepeatReport> {
    let seeds: Vec<u64> = (0..k as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    repeat_runs_with_seeds(g, labels, model_cfg, cfg, &seeds, split)
}

/// One independent training run per seed, in parallel; each run owns its
/// model and dropout stream.
pub fn repeat_runs_with_seeds(
    g: &Ehg,
    labels: &LabelTable,
    model_cfg: &GdanConfig,
    cfg: &TrainConfig,
    seeds: &[u64],
    split: Split,
) -> Result<RepeatReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "repeat_runs needs at least one seed".into(),
        ));
    }
    let hash = config_hash(&(model_cfg, cfg))?;
    let runs: Vec<MetricsReport> = seeds
        .par_iter()
        .map(|&seed| {
            let run_cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            let (model, _) = train(g, labels, model_cfg, &run_cfg)?;
            Ok(evaluate(g, labels, &model, split)?.with_run(seed, hash.clone()))
        })
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let f1: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
    let auc: Option<Vec<f64>> = runs.iter().map(|r| r.macro_auc).collect();
    Ok(RepeatReport {
        split,
        seeds: seeds.to_vec(),
        accuracy: Summary::of(&acc)?,
        macro_f1: Summary::of(&f1)?,
        macro_auc: auc.map(|v| Summary::of(&v)).transpose()?,
        runs,
    })
}
