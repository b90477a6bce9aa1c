//! Classification and clustering metrics, plus the edge delete/add curve
//! experiment.

mod cluster;
mod curve;
mod metrics;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::Split;
use crate::nn::Tensor;

pub use cluster::{ari, kmeans, kmeans_cluster_eval, nmi, ClusterReport};
pub use curve::{edge_curve, CurveConfig, CurveMode, CurvePoint, CurveResult};
pub use metrics::{accuracy, auc_macro_ovr, binary_auc, macro_f1};

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Std is 0 for a single value. Errors on an empty slice.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Metric("summary of no values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `None` when the split holds a single class.
    pub macro_auc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

impl MetricsReport {
    /// Scores predictions for one split. `probs` rows align with `labels`.
    pub fn compute(split: Split, probs: &Tensor, labels: &[usize]) -> Result<Self> {
        let preds = probs.argmax_rows();
        let macro_auc = match auc_macro_ovr(probs, labels) {
            Ok(v) => Some(v),
            Err(Error::Metric(msg)) => {
                log::warn!("macro AUC on {split} split: {msg}");
                None
            }
            Err(e) => return Err(e),
        };
        Ok(Self {
            split,
            accuracy: accuracy(&preds, labels)?,
            macro_f1: macro_f1(&preds, labels, probs.cols())?,
            macro_auc,
            nmi: None,
            ari: None,
            seed: None,
            config_hash: None,
        })
    }

    pub fn with_run(mut self, seed: u64, config_hash: impl Into<String>) -> Self {
        self.seed = Some(seed);
        self.config_hash = Some(config_hash.into());
        self
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: accuracy {:.2}%  macro-F1 {:.2}%",
            self.split,
            100.0 * self.accuracy,
            100.0 * self.macro_f1
        )?;
        match self.macro_auc {
            Some(auc) => write!(f, "  AUC {:.2}%", 100.0 * auc),
            None => write!(f, "  AUC n/a"),
        }
    }
}

/// Writes one row per node: `id,dim0,dim1,...`.
pub fn write_embeddings(path: &Path, ids: &[String], reps: &Tensor) -> Result<()> {
    if ids.len() != reps.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} ids for {} embedding rows",
            ids.len(),
            reps.rows()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..reps.cols()).map(|k| format!("dim{k}")));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(reps.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_std_is_sample_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Summary::of(&[0.7; 4]).unwrap().std, 0.0);
    }

    #[test]
    fn single_class_split_has_no_auc() {
        let probs = Tensor::from_rows(&[vec![0.9, 0.1], vec![0.6, 0.4]]);
        let r = MetricsReport::compute(Split::Test, &probs, &[0, 0]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.macro_auc.is_none());
    }
}
