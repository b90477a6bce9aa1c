//! Entropy-based edge importance from proxy classifiers trained before and
//! after one round of parameter-free aggregation, averaged over sampled
//! subgraphs and the full graph. Also the leave-one-out baseline.

mod proxy;
mod sampler;
mod scores;

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{Ehg, LabelTable, Split};
use crate::nn::Tensor;

pub use proxy::{ProxyClassifier, ProxyConfig};
pub use sampler::{relation_probabilities, type_probabilities, unbalanced_sample, SamplerConfig};
pub use scores::{EdgeScore, EdgeScoreTable};

/// Shannon entropy in nats, with `0 ln 0 = 0`.
///
/// Log-probabilities are shifted by the largest one before summing, which
/// makes a uniform row come out at exactly `ln(1/p)`.
pub fn entropy(p: &[f64]) -> f64 {
    let max = p.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    let shift = -max.ln();
    let mass: f64 = p.iter().sum();
    let residual: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * (x.ln() + shift))
        .sum();
    (shift * mass - residual).max(0.0)
}

/// `h̃_i = h_i + Σ_j h_j / (√dg(j) √dg(i))` over the neighbors of each node.
pub fn aggregate_all(g: &Ehg, h: &Tensor) -> Result<Tensor> {
    h.ensure_shape("aggregate_all", (g.node_count(), h.cols()))?;
    let m = g.messages();
    let mut out = h.clone();
    for i in 0..g.node_count() {
        let si = g.norm_degree(i).sqrt();
        for s in m.slots(i) {
            let j = m.source[s];
            let w = 1.0 / (g.norm_degree(j).sqrt() * si);
            for (o, &x) in out.row_mut(i).iter_mut().zip(h.row(j)) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

/// Target `i` updated by the aggregated message of source `j`:
/// `h̃_j / (√dg(j) √dg(i)) + h̃_i`.
pub fn edge_update(agg: &Tensor, i: usize, j: usize, dg_i: f64, dg_j: f64) -> Vec<f64> {
    let w = 1.0 / (dg_j.sqrt() * dg_i.sqrt());
    agg.row(i)
        .iter()
        .zip(agg.row(j))
        .map(|(&hi, &hj)| w * hj + hi)
        .collect()
}

/// Entropy of `ml0` on the raw features of `target` minus the entropy of
/// `ml1` after the message from `source`. Positive means the edge makes the
/// target easier to classify.
pub fn edge_importance(
    g: &Ehg,
    h: &Tensor,
    agg: &Tensor,
    ml0: &ProxyClassifier,
    ml1: &ProxyClassifier,
    target: usize,
    source: usize,
) -> f64 {
    let updated = edge_update(
        agg,
        target,
        source,
        g.norm_degree(target),
        g.norm_degree(source),
    );
    entropy(&ml0.predict_row(h.row(target))) - entropy(&ml1.predict_row(&updated))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistShiftConfig {
    pub sampler: SamplerConfig,
    pub proxy: ProxyConfig,
}

fn train_class_count(labels: &LabelTable) -> usize {
    labels
        .split(Split::Train)
        .iter()
        .map(|&(_, c)| c)
        .collect::<BTreeSet<_>>()
        .len()
}

fn require_classes(labels: &LabelTable) -> Result<Vec<(usize, usize)>> {
    if train_class_count(labels) < 2 {
        return Err(Error::InvalidArgument(
            "edge scoring needs at least 2 classes among training labels".into(),
        ));
    }
    Ok(labels.split(Split::Train))
}

struct Proxies {
    ml0: ProxyClassifier,
    ml1: ProxyClassifier,
    agg: Tensor,
}

fn fit_proxies(g: &Ehg, labels: &LabelTable, cfg: &ProxyConfig) -> Result<Proxies> {
    let targets = require_classes(labels)?;
    let h = g.features().values();
    let c = labels.num_classes();
    let ml0 = ProxyClassifier::fit(h, &targets, c, cfg)?;
    let agg = aggregate_all(g, h)?;
    let ml1 = ProxyClassifier::fit(&agg, &targets, c, cfg)?;
    Ok(Proxies { ml0, ml1, agg })
}

/// Scores every directed message of `g` with proxies trained on `g` itself.
fn score_graph(g: &Ehg, labels: &LabelTable, cfg: &ProxyConfig) -> Result<Vec<EdgeScore>> {
    let p = fit_proxies(g, labels, cfg)?;
    let h = g.features().values();
    let m = g.messages();
    let rows = (0..g.node_count())
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = &p;
            m.slots(i).map(move |s| EdgeScore {
                edge: m.edge[s],
                src: m.source[s],
                dst: i,
                relation: m.relation[s],
                score: edge_importance(g, h, &p.agg, &p.ml0, &p.ml1, i, m.source[s]),
                n_subgraphs: 1,
            })
        })
        .collect();
    Ok(rows)
}

/// Mean edge importance over sampled subgraphs plus the full graph. Each
/// graph trains its own proxy pair and supplies its own degrees. A sampled
/// subgraph whose training labels cover fewer than two classes is skipped.
pub fn distshift_scores(
    g: &Ehg,
    labels: &LabelTable,
    cfg: &DistShiftConfig,
) -> Result<EdgeScoreTable> {
    cfg.sampler.validate()?;
    cfg.proxy.validate()?;
    let full = score_graph(g, labels, &cfg.proxy)?;

    let sampled: Vec<Option<Vec<EdgeScore>>> = (0..cfg.sampler.subgraphs)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampler.seed);
            rng.set_stream(s as u64);
            let sub = unbalanced_sample(g, labels, &cfg.sampler, &mut rng)?;
            let sub_labels = labels.restrict(&sub.node_map);
            if train_class_count(&sub_labels) < 2 {
                log::warn!(
                    "subgraph {s} ({} nodes) has fewer than 2 training classes; skipped",
                    sub.graph.node_count()
                );
                return Ok(None);
            }
            let rows = score_graph(&sub.graph, &sub_labels, &cfg.proxy)?;
            Ok(Some(
                rows.into_iter()
                    .map(|r| EdgeScore {
                        edge: sub.edge_map[r.edge],
                        src: sub.node_map[r.src],
                        dst: sub.node_map[r.dst],
                        ..r
                    })
                    .collect(),
            ))
        })
        .collect::<Result<_>>()?;

    let mut acc: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for rows in sampled.into_iter().flatten() {
        for r in rows {
            let e = acc.entry((r.edge, r.dst)).or_insert((0.0, 0));
            e.0 += r.score;
            e.1 += 1;
        }
    }
    let rows = full
        .into_iter()
        .map(|r| {
            let (sum, count) = acc.get(&(r.edge, r.dst)).copied().unwrap_or((0.0, 0));
            EdgeScore {
                score: (sum + r.score) / (count + 1) as f64,
                n_subgraphs: count + 1,
                ..r
            }
        })
        .collect();
    Ok(EdgeScoreTable::new(rows))
}

/// Leave-one-out baseline: for each message into target `i`, the entropy of
/// the aggregated-feature proxy on `h̃_i` recomputed without that edge (with
/// `dg(i)` reduced by one), minus its entropy on the full `h̃_i`.
pub fn loo_scores(g: &Ehg, labels: &LabelTable, cfg: &ProxyConfig) -> Result<EdgeScoreTable> {
    cfg.validate()?;
    let p = fit_proxies(g, labels, cfg)?;
    let h = g.features().values();
    let m = g.messages();
    let d = h.cols();
    let rows = (0..g.node_count())
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = &p;
            let full_entropy = entropy(&p.ml1.predict_row(p.agg.row(i)));
            // Σ_j h_j / √dg(j), before the 1/√dg(i) factor.
            let mut neighbor_sum = vec![0.0; d];
            for s in m.slots(i) {
                let j = m.source[s];
                let w = 1.0 / g.norm_degree(j).sqrt();
                for (o, &x) in neighbor_sum.iter_mut().zip(h.row(j)) {
                    *o += w * x;
                }
            }
            let reduced_dg = (g.degree(i).saturating_sub(1)).max(1) as f64;
            m.slots(i).map(move |s| {
                let j = m.source[s];
                let wj = 1.0 / g.norm_degree(j).sqrt();
                let wi = 1.0 / reduced_dg.sqrt();
                let without: Vec<f64> = (0..d)
                    .map(|k| h.get(i, k) + wi * (neighbor_sum[k] - wj * h.get(j, k)))
                    .collect();
                EdgeScore {
                    edge: m.edge[s],
                    src: j,
                    dst: i,
                    relation: m.relation[s],
                    score: entropy(&p.ml1.predict_row(&without)) - full_entropy,
                    n_subgraphs: 1,
                }
            })
        })
        .collect();
    Ok(EdgeScoreTable::new(rows))
}
