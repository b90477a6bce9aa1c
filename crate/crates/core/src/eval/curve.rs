use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MetricsReport, Summary};
use crate::distshift::EdgeScoreTable;
use crate::error::{Error, Result};
use crate::hetgraph::{Ehg, LabelTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    /// Start from the full graph, remove the highest-scored edges first.
    Delete,
    /// Start from no edges, add the highest-scored edges first.
    Add,
}

impl FromStr for CurveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delete" => Ok(Self::Delete),
            "add" => Ok(Self::Add),
            other => Err(Error::InvalidArgument(format!(
                "unknown curve mode `{other}` (expected delete or add)"
            ))),
        }
    }
}

impl fmt::Display for CurveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Delete => "delete",
            Self::Add => "add",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    /// Fraction of edges changed per step; must divide 1 evenly.
    pub step: f64,
    /// Retrains per step, with seeds `seed, seed + 1, ...`.
    pub seeds: usize,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            step: 0.05,
            seeds: 5,
            seed: 0,
        }
    }
}

impl CurveConfig {
    pub fn fractions(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "curve step {} not in (0, 1]",
                self.step
            )));
        }
        let n = (1.0 / self.step).round();
        if (n * self.step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "curve step {} does not divide 1 evenly",
                self.step
            )));
        }
        let n = n as usize;
        Ok((0..=n).map(|k| k as f64 / n as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    /// Undirected edges present in the retrained graph.
    pub edges: usize,
    pub accuracy: Summary,
    pub macro_f1: Summary,
    /// `None` if any retrain had no defined AUC.
    pub macro_auc: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub mode: CurveMode,
    pub points: Vec<CurvePoint>,
}

impl CurveResult {
    /// `fraction,accuracy_mean,accuracy_std,macro_f1_mean,...`; missing AUC
    /// is left blank.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "fraction",
            "accuracy_mean",
            "accuracy_std",
            "macro_f1_mean",
            "macro_f1_std",
            "macro_auc_mean",
            "macro_auc_std",
        ])?;
        for p in &self.points {
            let (auc_m, auc_s) = p.macro_auc.map_or((String::new(), String::new()), |s| {
                (s.mean.to_string(), s.std.to_string())
            });
            w.write_record([
                p.fraction.to_string(),
                p.accuracy.mean.to_string(),
                p.accuracy.std.to_string(),
                p.macro_f1.mean.to_string(),
                p.macro_f1.std.to_string(),
                auc_m,
                auc_s,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Edge ids ordered by descending score, ties broken by ascending id.
pub(crate) fn ranked_edges(pair_scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pair_scores.len()).collect();
    order.sort_by(|&a, &b| pair_scores[b].total_cmp(&pair_scores[a]).then(a.cmp(&b)));
    order
}

/// Retrains from scratch on graphs with a growing share of edges removed
/// (or added) in score order, recording test metrics at each step.
///
/// `train` receives the modified graph, the labels and a seed, and returns
/// the metrics of the trained model. Retrains run in parallel.
pub fn edge_curve<F>(
    g: &Ehg,
    labels: &LabelTable,
    scores: &EdgeScoreTable,
    mode: CurveMode,
    cfg: &CurveConfig,
    train: F,
) -> Result<CurveResult>
where
    F: Fn(&Ehg, &LabelTable, u64) -> Result<MetricsReport> + Sync,
{
    if cfg.seeds == 0 {
        return Err(Error::InvalidArgument(
            "curve needs at least one seed".into(),
        ));
    }
    let fractions = cfg.fractions()?;
    let order = ranked_edges(&scores.pair_scores(g)?);
    let m = g.edge_count();

    let graphs: Vec<Ehg> = fractions
        .iter()
        .map(|&f| {
            let count = (f * m as f64).round() as usize;
            let mut keep = vec![mode == CurveMode::Delete; m];
            for &e in &order[..count] {
                keep[e] = mode == CurveMode::Add;
            }
            g.with_edges(|e| keep[e])
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> = (0..graphs.len())
        .flat_map(|s| (0..cfg.seeds).map(move |k| (s, cfg.seed + k as u64)))
        .collect();
    let reports: Vec<MetricsReport> = jobs
        .par_iter()
        .map(|&(s, seed)| train(&graphs[s], labels, seed))
        .collect::<Result<_>>()?;

    let points = fractions
        .iter()
        .zip(&graphs)
        .zip(reports.chunks(cfg.seeds))
        .map(|((&fraction, graph), runs)| {
            let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let f1: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
            let auc: Option<Vec<f64>> = runs.iter().map(|r| r.macro_auc).collect();
            Ok(CurvePoint {
                fraction,
                edges: graph.edge_count(),
                accuracy: Summary::of(&acc)?,
                macro_f1: Summary::of(&f1)?,
                macro_auc: auc.map(|v| Summary::of(&v)).transpose()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CurveResult { mode, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fractions_step_by_five_percent() {
        let f = CurveConfig::default().fractions().unwrap();
        assert_eq!(f.len(), 21);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[20], 1.0);
        assert!(f.windows(2).all(|w| (w[1] - w[0] - 0.05).abs() < 1e-12));
    }

    #[test]
    fn uneven_step_is_rejected() {
        let cfg = CurveConfig {
            step: 0.3,
            ..CurveConfig::default()
        };
        assert!(cfg.fractions().is_err());
    }

    #[test]
    fn ranking_is_descending_with_stable_ties() {
        assert_eq!(ranked_edges(&[0.1, 0.5, 0.1, 0.9]), vec![3, 1, 0, 2]);
    }
}
