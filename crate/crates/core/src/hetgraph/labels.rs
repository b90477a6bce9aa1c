use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelEntry {
    pub node: usize,
    pub class: usize,
    pub split: Split,
}

/// Sparse labels over graph nodes, with dense class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    entries: Vec<LabelEntry>,
    class_names: Vec<String>,
    by_node: HashMap<usize, usize>,
}

impl LabelTable {
    pub fn new(entries: Vec<LabelEntry>, class_names: Vec<String>) -> Result<Self> {
        let mut by_node = HashMap::with_capacity(entries.len());
        for (k, e) in entries.iter().enumerate() {
            if e.class >= class_names.len() {
                return Err(Error::InvalidArgument(format!(
                    "class id {} outside 0..{}",
                    e.class,
                    class_names.len()
                )));
            }
            if by_node.insert(e.node, k).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "node {} labeled twice",
                    e.node
                )));
            }
        }
        Ok(Self {
            entries,
            class_names,
            by_node,
        })
    }

    /// Classes named by their index.
    pub fn with_numeric_classes(entries: Vec<LabelEntry>, num_classes: usize) -> Result<Self> {
        Self::new(entries, (0..num_classes).map(|c| c.to_string()).collect())
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, node: usize) -> Option<&LabelEntry> {
        self.by_node.get(&node).map(|&k| &self.entries[k])
    }

    /// `(node, class)` pairs of one split, in table order.
    pub fn split(&self, split: Split) -> Vec<(usize, usize)> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| (e.node, e.class))
            .collect()
    }

    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.node)
            .collect()
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.node).collect()
    }

    /// Counts per class for one split.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for e in self.entries.iter().filter(|e| e.split == split) {
            counts[e.class] += 1;
        }
        counts
    }

    pub fn max_node(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.node).max()
    }

    /// Re-indexes labels onto a subgraph given its `sub → parent` node map.
    /// Labels of nodes outside the subgraph are dropped; class ids are kept.
    pub fn restrict(&self, node_map: &[usize]) -> LabelTable {
        let mut entries = Vec::new();
        for (sub, &parent) in node_map.iter().enumerate() {
            if let Some(e) = self.get(parent) {
                entries.push(LabelEntry {
                    node: sub,
                    class: e.class,
                    split: e.split,
                });
            }
        }
        LabelTable::new(entries, self.class_names.clone()).expect("restriction of a valid table")
    }

    /// Same labels with nodes renamed through `map` (`new = map[old]`).
    pub fn permute(&self, map: &[usize]) -> LabelTable {
        let entries = self
            .entries
            .iter()
            .map(|e| LabelEntry {
                node: map[e.node],
                ..*e
            })
            .collect();
        LabelTable::new(entries, self.class_names.clone()).expect("permutation of a valid table")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_bad_classes() {
        let e = |node, class| LabelEntry {
            node,
            class,
            split: Split::Train,
        };
        assert!(LabelTable::with_numeric_classes(vec![e(0, 0), e(0, 1)], 2).is_err());
        assert!(LabelTable::with_numeric_classes(vec![e(0, 2)], 2).is_err());
        let t = LabelTable::with_numeric_classes(vec![e(3, 1), e(1, 0)], 2).unwrap();
        let r = t.restrict(&[1, 2, 3]);
        assert_eq!(r.split(Split::Train), vec![(0, 0), (2, 1)]);
    }

    #[test]
    fn split_parsing() {
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
        assert!("dev".parse::<Split>().is_err());
    }
}
