use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{Ehg, LabelTable, Subgraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Initial seed nodes, drawn from labeled nodes.
    pub seed_nodes: usize,
    /// Expansion rounds.
    pub depth: usize,
    pub subgraphs: usize,
    /// Lower clamp of the node-type probability.
    pub type_floor: f64,
    /// Per-relation sampling weights by name, replacing the inverse-frequency
    /// defaults for the relations listed.
    pub relation_weights: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed_nodes: 256,
            depth: 2,
            subgraphs: 10,
            type_floor: 0.05,
            relation_weights: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_nodes == 0 || self.depth == 0 {
            return Err(Error::InvalidArgument(
                "sampler needs seed_nodes >= 1 and depth >= 1".into(),
            ));
        }
        if !(self.type_floor > 0.0 && self.type_floor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "type_floor {} not in (0, 1]",
                self.type_floor
            )));
        }
        if let Some((k, v)) = self
            .relation_weights
            .iter()
            .find(|(_, v)| v.is_nan() || **v < 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "relation weight {k} = {v} is negative"
            )));
        }
        Ok(())
    }
}

/// `clamp(1 - 2 |V_c| / |V|, floor, 1)` per node type.
pub fn type_probabilities(g: &Ehg, floor: f64) -> Vec<f64> {
    let mut counts = vec![0usize; g.node_types().len()];
    for t in g.node_type_ids() {
        counts[t.0] += 1;
    }
    let n = g.node_count().max(1) as f64;
    counts
        .iter()
        .map(|&c| (1.0 - 2.0 * c as f64 / n).clamp(floor, 1.0))
        .collect()
}

/// Inverse relation frequency scaled so the rarest relation has weight 1,
/// with `overrides` replacing entries by relation name. Relations without
/// edges get weight 1.
pub fn relation_probabilities(g: &Ehg, overrides: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    let rels = g.relations();
    let counts: Vec<usize> = (0..rels.len())
        .map(|r| g.relation_edge_count(crate::hetgraph::RelationId(r)))
        .collect();
    let min = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(1);
    let mut w: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 1.0 } else { min as f64 / c as f64 })
        .collect();
    for (name, &value) in overrides {
        let r = rels.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown relation `{name}` in relation_weights"))
        })?;
        w[r] = value;
    }
    Ok(w)
}

/// Grows a subgraph from labeled seed nodes. Each round, every unvisited
/// neighbor of the current frontier is kept independently with probability
/// `p_type · p_edge · dg / max_dg`; a neighbor reached through several
/// relations uses its largest relation weight. Kept nodes form the next
/// frontier. Returns the subgraph induced on all visited nodes.
pub fn unbalanced_sample<R: Rng>(
    g: &Ehg,
    labels: &LabelTable,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Subgraph> {
    cfg.validate()?;
    let labeled: Vec<usize> = labels
        .nodes()
        .into_iter()
        .filter(|&i| i < g.node_count())
        .collect();
    if labeled.is_empty() {
        return Err(Error::InvalidArgument(
            "sampling needs labeled nodes".into(),
        ));
    }
    let p_type = type_probabilities(g, cfg.type_floor);
    let p_rel = relation_probabilities(g, &cfg.relation_weights)?;
    let max_dg = g.max_degree().max(1) as f64;

    let b = cfg.seed_nodes.min(labeled.len());
    let mut frontier: Vec<usize> = index::sample(rng, labeled.len(), b)
        .into_iter()
        .map(|k| labeled[k])
        .collect();
    frontier.sort_unstable();
    let mut visited: BTreeSet<usize> = frontier.iter().copied().collect();
    let m = g.messages();

    for _ in 0..cfg.depth {
        let mut candidates: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in &frontier {
            for s in m.slots(i) {
                let j = m.source[s];
                if !visited.contains(&j) {
                    let w = p_rel[m.relation[s].0];
                    let e = candidates.entry(j).or_insert(w);
                    *e = e.max(w);
                }
            }
        }
        frontier.clear();
        for (j, w) in candidates {
            let p = (p_type[g.node_type(j).0] * w * g.degree(j) as f64 / max_dg).min(1.0);
            if rng.gen::<f64>() < p {
                frontier.push(j);
            }
        }
        if frontier.is_empty() {
            break;
        }
        visited.extend(&frontier);
    }
    let nodes: Vec<usize> = visited.into_iter().collect();
    g.induced_subgraph(&nodes)
}
