use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{Ehg, RelationId};

/// Importance of the message carried by edge `edge` from `src` into `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub edge: usize,
    pub src: usize,
    pub dst: usize,
    pub relation: RelationId,
    pub score: f64,
    /// Scored graphs containing this edge, the full graph included.
    pub n_subgraphs: usize,
}

/// Directed edge scores, sorted by descending score (ties by edge id, then
/// target).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeScoreTable {
    rows: Vec<EdgeScore>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    src: String,
    dst: String,
    relation: String,
    score: f64,
    n_subgraphs: usize,
}

impl EdgeScoreTable {
    pub fn new(mut rows: Vec<EdgeScore>) -> Self {
        rows.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.edge.cmp(&b.edge))
                .then(a.dst.cmp(&b.dst))
        });
        Self { rows }
    }

    pub fn rows(&self) -> &[EdgeScore] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Score of the message from `src` into `dst` along `edge`.
    pub fn get(&self, edge: usize, dst: usize) -> Option<&EdgeScore> {
        self.rows.iter().find(|r| r.edge == edge && r.dst == dst)
    }

    /// One score per undirected edge of `g`: the larger of its two directed
    /// scores. Errors if any edge has no score in either direction.
    pub fn pair_scores(&self, g: &Ehg) -> Result<Vec<f64>> {
        let mut best = vec![f64::NEG_INFINITY; g.edge_count()];
        let mut seen = vec![false; g.edge_count()];
        for r in &self.rows {
            if r.edge >= best.len() {
                return Err(Error::InvalidArgument(format!(
                    "score for edge {} but graph has {} edges",
                    r.edge,
                    best.len()
                )));
            }
            seen[r.edge] = true;
            best[r.edge] = best[r.edge].max(r.score);
        }
        let missing = seen.iter().filter(|s| !**s).count();
        if missing > 0 {
            return Err(Error::InvalidArgument(format!(
                "scores missing for {missing} of {} edges",
                g.edge_count()
            )));
        }
        Ok(best)
    }

    /// `src,dst,relation,score,n_subgraphs` with node ids and relation names
    /// taken from `g`.
    pub fn write_csv(&self, path: &Path, g: &Ehg) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(CsvRow {
                src: g.node_ids()[r.src].clone(),
                dst: g.node_ids()[r.dst].clone(),
                relation: g.relations().name(r.relation.0).to_string(),
                score: r.score,
                n_subgraphs: r.n_subgraphs,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`EdgeScoreTable::write_csv`], resolving ids
    /// against `g`. Rows naming edges absent from `g` are an error.
    pub fn read_csv(path: &Path, g: &Ehg) -> Result<Self> {
        let index: HashMap<&str, usize> = g
            .node_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for (k, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let line = k as u64 + 2;
            let parse_err = |message: String| Error::Parse {
                file: path.to_path_buf(),
                line,
                message,
            };
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let node = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| parse_err(format!("unknown node `{id}`")))
            };
            let (src, dst) = (node(&rec.src)?, node(&rec.dst)?);
            let relation = g
                .relations()
                .get(&rec.relation)
                .map(RelationId)
                .ok_or_else(|| parse_err(format!("unknown relation `{}`", rec.relation)))?;
            let edge = g.find_edge(dst, src, relation).ok_or_else(|| {
                parse_err(format!(
                    "no edge {} -> {} ({})",
                    rec.src, rec.dst, rec.relation
                ))
            })?;
            rows.push(EdgeScore {
                edge,
                src,
                dst,
                relation,
                score: rec.score,
                n_subgraphs: rec.n_subgraphs,
            });
        }
        Ok(Self::new(rows))
    }
}
