use std::collections::HashMap;

use super::{Edge, Ehg};
use crate::error::{Error, Result};

/// An induced subgraph with maps back to the parent graph.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: Ehg,
    /// `node_map[sub] = parent`, ascending.
    pub node_map: Vec<usize>,
    /// `edge_map[sub edge id] = parent edge id`.
    pub edge_map: Vec<usize>,
}

impl Ehg {
    /// Subgraph on `nodes` (deduplicated and sorted) containing exactly the
    /// edges with both endpoints in the set. Relation and node-type
    /// registries are carried over unchanged.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Subgraph> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "induced subgraph of an empty node set".into(),
            ));
        }
        let n = self.node_count();
        let mut node_map = nodes.to_vec();
        node_map.sort_unstable();
        node_map.dedup();
        if let Some(&bad) = node_map.iter().find(|&&i| i >= n) {
            return Err(Error::NodeOutOfRange {
                index: bad,
                node_count: n,
            });
        }
        let mut local = vec![usize::MAX; n];
        for (sub, &parent) in node_map.iter().enumerate() {
            local[parent] = sub;
        }

        let mut edges = Vec::new();
        let mut parent_ids = Vec::new();
        for (id, e) in self.edges().iter().enumerate() {
            let (s, d) = (local[e.src], local[e.dst]);
            if s != usize::MAX && d != usize::MAX {
                edges.push(Edge {
                    src: s,
                    dst: d,
                    relation: e.relation,
                });
                parent_ids.push(id);
            }
        }
        let graph = Ehg::new(
            node_map
                .iter()
                .map(|&i| self.node_ids()[i].clone())
                .collect(),
            node_map.iter().map(|&i| self.node_type(i)).collect(),
            self.node_types().clone(),
            self.relations().clone(),
            self.features().slice_rows(&node_map),
            edges.clone(),
        )?;
        // Ehg::new reorders edges; recover the parent id of each stored edge.
        let lookup: HashMap<Edge, usize> = edges.into_iter().zip(parent_ids).collect();
        let edge_map = graph.edges().iter().map(|e| lookup[e]).collect();
        Ok(Subgraph {
            graph,
            node_map,
            edge_map,
        })
    }
}
