//! Enterprise heterogeneous graphs: typed nodes, typed relations stored as
//! per-relation CSR, a dense feature matrix and a sparse label table.
//!
//! Message passing is undirected. Every stored edge `(src, dst, r)` is seen
//! by both endpoints, `dg(i)` is the number of such incidences across all
//! relations, and `(u, v, r)` / `(v, u, r)` rows collapse into one edge.

mod io;
mod labels;
mod subgraph;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use io::{load_graph, write_graph, write_idmap, GraphFiles, LoadOptions};
pub use labels::{LabelEntry, LabelTable, Split};
pub use subgraph::Subgraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeTypeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub usize);

/// Bijective name ↔ dense id map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut r = Self::new();
        for n in names {
            let n = n.as_ref();
            if r.get(n).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "duplicate registry name `{n}`"
                )));
            }
            r.intern(n);
        }
        Ok(r)
    }

    /// Returns the id of `name`, registering it if new.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub unit: String,
}

/// Dense `node_count × d` feature matrix with column descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Tensor,
    columns: Vec<ColumnInfo>,
}

impl FeatureMatrix {
    pub fn new(values: Tensor, columns: Vec<ColumnInfo>) -> Result<Self> {
        if columns.len() != values.cols() {
            return Err(Error::InvalidGraph(format!(
                "{} column descriptors for {} feature columns",
                columns.len(),
                values.cols()
            )));
        }
        if let Some(pos) = values.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph(format!(
                "non-finite feature at node {} column {}",
                pos / values.cols().max(1),
                pos % values.cols().max(1)
            )));
        }
        Ok(Self { values, columns })
    }

    /// Columns named `f1..fd` with empty units.
    pub fn unnamed(values: Tensor) -> Result<Self> {
        let columns = (1..=values.cols())
            .map(|i| ColumnInfo {
                name: format!("f{i}"),
                unit: String::new(),
            })
            .collect();
        Self::new(values, columns)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn columns(&self) -> &[ColumnInfo] {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Standardises every column to mean 0 and variance 1 using statistics of
    /// `rows` only. Constant columns are centred but not scaled.
    pub fn standardize(&mut self, rows: &[usize]) {
        let d = self.values.cols();
        if rows.is_empty() {
            return;
        }
        let n = rows.len() as f64;
        for k in 0..d {
            let mean = rows.iter().map(|&r| self.values.get(r, k)).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|&r| (self.values.get(r, k) - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
            for r in 0..self.values.rows() {
                let v = self.values.get(r, k);
                self.values.set(r, k, (v - mean) / std);
            }
        }
    }

    fn slice_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.gather_rows(rows),
            columns: self.columns.clone(),
        }
    }
}

/// A stored edge. `src`/`dst` keep the orientation of the first input row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationId,
}

/// Compressed sparse rows: `targets[offsets[i]..offsets[i+1]]` are the
/// endpoints reached from `i`, with the matching global edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
    pub edge_ids: Vec<usize>,
}

impl Csr {
    fn build(
        node_count: usize,
        pairs: impl Iterator<Item = (usize, usize, usize)> + Clone,
    ) -> Self {
        let mut offsets = vec![0usize; node_count + 1];
        for (from, _, _) in pairs.clone() {
            offsets[from + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        let m = offsets[node_count];
        let mut cursor = offsets.clone();
        let mut targets = vec![0usize; m];
        let mut edge_ids = vec![0usize; m];
        for (from, to, id) in pairs {
            let slot = cursor[from];
            targets[slot] = to;
            edge_ids[slot] = id;
            cursor[from] += 1;
        }
        Self {
            offsets,
            targets,
            edge_ids,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[usize]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.targets[a..b], &self.edge_ids[a..b])
    }
}

/// Incoming-message view: for each target node, every neighbor slot
/// (relation id, then forward CSR, then reverse CSR order).
///
/// Each stored edge occupies two slots, one per endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageIndex {
    pub offsets: Vec<usize>,
    pub source: Vec<usize>,
    pub relation: Vec<RelationId>,
    pub edge: Vec<usize>,
}

impl MessageIndex {
    pub fn slot_count(&self) -> usize {
        self.source.len()
    }

    #[inline]
    pub fn slots(&self, target: usize) -> std::ops::Range<usize> {
        self.offsets[target]..self.offsets[target + 1]
    }

    /// Target node of every slot.
    pub fn targets(&self) -> Vec<usize> {
        let mut t = Vec::with_capacity(self.slot_count());
        for i in 0..self.offsets.len() - 1 {
            t.extend(std::iter::repeat_n(
                i,
                self.offsets[i + 1] - self.offsets[i],
            ));
        }
        t
    }
}

/// Immutable enterprise heterogeneous graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Ehg {
    node_ids: Vec<String>,
    node_type: Vec<NodeTypeId>,
    node_types: Registry,
    relations: Registry,
    features: FeatureMatrix,
    edges: Vec<Edge>,
    forward: Vec<Csr>,
    reverse: Vec<Csr>,
    messages: MessageIndex,
    degree: Vec<usize>,
}

impl Ehg {
    /// Validates and indexes a graph.
    ///
    /// Self-loops are dropped; duplicate edges (in either orientation, same
    /// relation) are collapsed onto the first occurrence. Edges are then
    /// ordered by relation, then source, then input order.
    pub fn new(
        node_ids: Vec<String>,
        node_type: Vec<NodeTypeId>,
        node_types: Registry,
        relations: Registry,
        features: FeatureMatrix,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let n = node_ids.len();
        if node_type.len() != n || features.values().rows() != n {
            return Err(Error::InvalidGraph(format!(
                "{n} nodes but {} type entries and {} feature rows",
                node_type.len(),
                features.values().rows()
            )));
        }
        let mut seen_ids = HashSet::with_capacity(n);
        for id in &node_ids {
            if !seen_ids.insert(id.as_str()) {
                return Err(Error::InvalidGraph(format!("duplicate node id `{id}`")));
            }
        }
        if let Some(t) = node_type.iter().find(|t| t.0 >= node_types.len()) {
            return Err(Error::InvalidGraph(format!(
                "unregistered node type {}",
                t.0
            )));
        }

        let mut dedup = HashSet::with_capacity(edges.len());
        let mut kept = Vec::with_capacity(edges.len());
        let mut self_loops = 0usize;
        for e in edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} references a node outside 0..{n}",
                    e.src, e.dst
                )));
            }
            if e.relation.0 >= relations.len() {
                return Err(Error::InvalidGraph(format!(
                    "unregistered relation {}",
                    e.relation.0
                )));
            }
            if e.src == e.dst {
                self_loops += 1;
                continue;
            }
            let key = (e.src.min(e.dst), e.src.max(e.dst), e.relation);
            if dedup.insert(key) {
                kept.push(e);
            }
        }
        if self_loops > 0 {
            log::warn!("dropped {self_loops} self-loop edge(s)");
        }
        kept.sort_by_key(|e| (e.relation, e.src));

        let r_count = relations.len();
        let mut forward = Vec::with_capacity(r_count);
        let mut reverse = Vec::with_capacity(r_count);
        let mut start = 0;
        for r in 0..r_count {
            let end = start
                + kept[start..]
                    .iter()
                    .take_while(|e| e.relation.0 == r)
                    .count();
            let range = start..end;
            let fwd = range.clone().map(|id| (kept[id].src, kept[id].dst, id));
            let rev = range.clone().map(|id| (kept[id].dst, kept[id].src, id));
            forward.push(Csr::build(n, fwd));
            reverse.push(Csr::build(n, rev));
            start = end;
        }

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut source = Vec::with_capacity(2 * kept.len());
        let mut relation = Vec::with_capacity(2 * kept.len());
        let mut edge = Vec::with_capacity(2 * kept.len());
        for i in 0..n {
            for r in 0..r_count {
                for csr in [&forward[r], &reverse[r]] {
                    let (nbrs, ids) = csr.row(i);
                    source.extend_from_slice(nbrs);
                    edge.extend_from_slice(ids);
                    relation.extend(std::iter::repeat_n(RelationId(r), nbrs.len()));
                }
            }
            offsets.push(source.len());
        }
        let degree = (0..n).map(|i| offsets[i + 1] - offsets[i]).collect();

        Ok(Self {
            node_ids,
            node_type,
            node_types,
            relations,
            features,
            edges: kept,
            forward,
            reverse,
            messages: MessageIndex {
                offsets,
                source,
                relation,
                edge,
            },
            degree,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    pub fn relation_edge_count(&self, r: RelationId) -> usize {
        self.forward[r.0].edge_count()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_type(&self, i: usize) -> NodeTypeId {
        self.node_type[i]
    }

    pub fn node_type_ids(&self) -> &[NodeTypeId] {
        &self.node_type
    }

    pub fn node_types(&self) -> &Registry {
        &self.node_types
    }

    pub fn relations(&self) -> &Registry {
        &self.relations
    }

    /// Heterogeneous in the strict sense: at least two relation types.
    pub fn is_heterogeneous(&self) -> bool {
        self.relations.len() >= 2
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn forward_csr(&self, r: RelationId) -> &Csr {
        &self.forward[r.0]
    }

    pub fn reverse_csr(&self, r: RelationId) -> &Csr {
        &self.reverse[r.0]
    }

    pub fn messages(&self) -> &MessageIndex {
        &self.messages
    }

    /// Undirected degree: neighbor incidences over all relations.
    pub fn degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    /// Degree floored at 1, for use as a divisor.
    pub fn norm_degree(&self, i: usize) -> f64 {
        self.degree[i].max(1) as f64
    }

    pub fn max_degree(&self) -> usize {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    /// Neighbors of `i`, optionally restricted to one relation. Ordered by
    /// relation id, then CSR order.
    pub fn neighbors(&self, i: usize, r: Option<RelationId>) -> Result<Vec<(usize, RelationId)>> {
        if i >= self.node_count() {
            return Err(Error::NodeOutOfRange {
                index: i,
                node_count: self.node_count(),
            });
        }
        let m = &self.messages;
        Ok(m.slots(i)
            .filter(|&s| r.is_none_or(|r| m.relation[s] == r))
            .map(|s| (m.source[s], m.relation[s]))
            .collect())
    }

    /// Same nodes and features, keeping only edges for which `keep` holds.
    /// Keeping every edge reproduces `self` exactly.
    pub fn with_edges(&self, keep: impl Fn(usize) -> bool) -> Result<Ehg> {
        let edges = (0..self.edges.len())
            .filter(|&id| keep(id))
            .map(|id| self.edges[id])
            .collect();
        self.with_edge_list(edges)
    }

    /// Same structure with replaced features.
    pub fn with_features(&self, features: FeatureMatrix) -> Result<Ehg> {
        if features.values().rows() != self.node_count() {
            return Err(Error::InvalidGraph("feature row count changed".into()));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    /// Same nodes and features with a different edge list.
    fn with_edge_list(&self, edges: Vec<Edge>) -> Result<Ehg> {
        Ehg::new(
            self.node_ids.clone(),
            self.node_type.clone(),
            self.node_types.clone(),
            self.relations.clone(),
            self.features.clone(),
            edges,
        )
    }

    /// Finds the stored edge joining `a` and `b` under `r`, in either
    /// orientation.
    pub fn find_edge(&self, a: usize, b: usize, r: RelationId) -> Option<usize> {
        let m = &self.messages;
        m.slots(a)
            .find(|&s| m.source[s] == b && m.relation[s] == r)
            .map(|s| m.edge[s])
    }

    /// Re-checks every structural invariant. Graphs built through
    /// [`Ehg::new`] always pass; this backs the `validate` command.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.node_count();
        for (r, (fwd, rev)) in self.forward.iter().zip(&self.reverse).enumerate() {
            for csr in [fwd, rev] {
                if csr.offsets.len() != n + 1
                    || csr.offsets.windows(2).any(|w| w[0] > w[1])
                    || csr.offsets[n] != csr.targets.len()
                {
                    return Err(Error::InvalidGraph(format!(
                        "relation {r}: malformed CSR offsets"
                    )));
                }
                if csr.targets.iter().any(|&t| t >= n) {
                    return Err(Error::InvalidGraph(format!(
                        "relation {r}: endpoint out of range"
                    )));
                }
            }
            if fwd.edge_count() != rev.edge_count() {
                return Err(Error::InvalidGraph(format!(
                    "relation {r}: reverse count differs"
                )));
            }
            let mut f: Vec<(usize, usize)> = Vec::with_capacity(fwd.edge_count());
            let mut b: Vec<(usize, usize)> = Vec::with_capacity(rev.edge_count());
            for i in 0..n {
                f.extend(fwd.row(i).0.iter().map(|&j| (i, j)));
                b.extend(rev.row(i).0.iter().map(|&j| (j, i)));
            }
            f.sort_unstable();
            b.sort_unstable();
            if f != b {
                return Err(Error::InvalidGraph(format!(
                    "relation {r}: reverse adjacency is not the transpose"
                )));
            }
        }
        let total: usize = self.degree.iter().sum();
        if total != 2 * self.edge_count() {
            return Err(Error::InvalidGraph(format!(
                "degree sum {total} != 2 * {} edges",
                self.edge_count()
            )));
        }
        if !self.features.values().is_finite() {
            return Err(Error::InvalidGraph("non-finite features".into()));
        }
        Ok(())
    }
}

/// Incremental construction by node index, for synthetic graphs.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    feature_dim: usize,
    node_ids: Vec<String>,
    node_type: Vec<NodeTypeId>,
    node_types: Registry,
    relations: Registry,
    features: Vec<f64>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            node_ids: Vec::new(),
            node_type: Vec::new(),
            node_types: Registry::new(),
            relations: Registry::new(),
            features: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Pre-registers relation names so relation ids follow this order.
    pub fn relations<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        for n in names {
            self.relations.intern(n.as_ref());
        }
        self
    }

    pub fn node_types<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        for n in names {
            self.node_types.intern(n.as_ref());
        }
        self
    }

    /// Adds a node with id equal to its index; returns the index.
    pub fn add_node(&mut self, node_type: &str, features: &[f64]) -> usize {
        assert_eq!(features.len(), self.feature_dim, "feature width");
        let i = self.node_ids.len();
        self.node_ids.push(i.to_string());
        self.node_type
            .push(NodeTypeId(self.node_types.intern(node_type)));
        self.features.extend_from_slice(features);
        i
    }

    pub fn add_edge(&mut self, src: usize, dst: usize, relation: &str) {
        let r = RelationId(self.relations.intern(relation));
        self.edges.push(Edge {
            src,
            dst,
            relation: r,
        });
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn build(self) -> Result<Ehg> {
        let n = self.node_ids.len();
        let values = Tensor::from_vec(n, self.feature_dim, self.features)?;
        Ehg::new(
            self.node_ids,
            self.node_type,
            self.node_types,
            self.relations,
            FeatureMatrix::unnamed(values)?,
            self.edges,
        )
    }
}
