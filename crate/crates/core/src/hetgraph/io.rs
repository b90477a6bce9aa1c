//! CSV graph files.
//!
//! - nodes: `id,type,f1,...,fd`
//! - edges: `src,dst,relation`
//! - labels: `id,label,split` with split in `train|val|test`
//!
//! Ids are arbitrary strings mapped to dense indices in node-file order.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    ColumnInfo, Edge, Ehg, FeatureMatrix, LabelEntry, LabelTable, NodeTypeId, Registry, RelationId,
    Split,
};
use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Standardise feature columns with statistics of training nodes.
    pub standardize: bool,
}

fn parse_err(file: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| parse_err(path, 0, format!("cannot open: {e}")))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(path, line, e.to_string())
}

fn expect_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().take(expected.len()).collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!(
                "header must start with {}, got {}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

/// Loads and validates the three graph files.
pub fn load_graph(
    nodes: &Path,
    edges: &Path,
    labels: &Path,
    options: &LoadOptions,
) -> Result<(Ehg, LabelTable)> {
    let mut rdr = reader(nodes)?;
    let header = rdr.headers().map_err(|e| csv_err(nodes, e))?.clone();
    expect_header(nodes, &header, &["id", "type"])?;
    let columns: Vec<ColumnInfo> = header
        .iter()
        .skip(2)
        .map(|name| ColumnInfo {
            name: name.to_string(),
            unit: String::new(),
        })
        .collect();
    let d = columns.len();

    let mut node_ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut node_type = Vec::new();
    let mut node_types = Registry::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(nodes, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(parse_err(nodes, line, "empty node id"));
        }
        if index.insert(id.clone(), node_ids.len()).is_some() {
            return Err(parse_err(nodes, line, format!("duplicate node id `{id}`")));
        }
        node_type.push(NodeTypeId(
            node_types.intern(rec.get(1).unwrap_or_default()),
        ));
        for (k, field) in rec.iter().skip(2).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(
                    nodes,
                    line,
                    format!("column {}: `{field}` is not a number", columns[k].name),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    nodes,
                    line,
                    format!("column {}: non-finite value `{field}`", columns[k].name),
                ));
            }
            values.push(v);
        }
        node_ids.push(id);
    }
    let features = FeatureMatrix::new(Tensor::from_vec(node_ids.len(), d, values)?, columns)?;

    let mut rdr = reader(edges)?;
    let header = rdr.headers().map_err(|e| csv_err(edges, e))?.clone();
    expect_header(edges, &header, &["src", "dst", "relation"])?;
    let mut relations = Registry::new();
    let mut edge_list = Vec::new();
    let mut dangling = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(edges, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(
                edges,
                line,
                format!("expected 3 fields, got {}", rec.len()),
            ));
        }
        let (s, t, r) = (&rec[0], &rec[1], &rec[2]);
        if r.is_empty() {
            return Err(parse_err(edges, line, "empty relation name"));
        }
        match (index.get(s), index.get(t)) {
            (Some(&src), Some(&dst)) => edge_list.push(Edge {
                src,
                dst,
                relation: RelationId(relations.intern(r)),
            }),
            _ => dangling.push(format!("line {line}: {s} -> {t} ({r})")),
        }
    }
    if !dangling.is_empty() {
        return Err(Error::DanglingEdges {
            file: edges.to_path_buf(),
            count: dangling.len(),
            examples: dangling
                .iter()
                .take(5)
                .cloned()
                .collect::<Vec<_>>()
                .join("; "),
        });
    }

    let table = load_labels(labels, &index)?;
    let mut graph = Ehg::new(
        node_ids, node_type, node_types, relations, features, edge_list,
    )?;
    if options.standardize {
        let mut f = graph.features().clone();
        f.standardize(&table.split_nodes(Split::Train));
        graph = graph.with_features(f)?;
    }
    Ok((graph, table))
}

fn load_labels(path: &Path, index: &HashMap<String, usize>) -> Result<LabelTable> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    expect_header(path, &header, &["id", "label", "split"])?;
    let mut raw = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 fields, got {}", rec.len()),
            ));
        }
        let node = *index
            .get(&rec[0])
            .ok_or_else(|| parse_err(path, line, format!("unknown node `{}`", &rec[0])))?;
        let split: Split = rec[2]
            .parse()
            .map_err(|e: Error| parse_err(path, line, e.to_string()))?;
        raw.push((line, node, rec[1].to_string(), split));
    }

    // Integer labels are taken as class ids and must be dense; anything else
    // is interned in order of first appearance.
    let numeric: Option<Vec<usize>> = raw.iter().map(|r| r.2.parse::<usize>().ok()).collect();
    let (classes, names) = match numeric {
        Some(ids) if !ids.is_empty() => {
            let c = ids.iter().max().unwrap() + 1;
            let mut present = vec![false; c];
            ids.iter().for_each(|&i| present[i] = true);
            if let Some(missing) = present.iter().position(|p| !p) {
                return Err(parse_err(
                    path,
                    0,
                    format!(
                        "numeric class ids must be dense from 0; class {missing} never appears"
                    ),
                ));
            }
            (ids, (0..c).map(|i| i.to_string()).collect())
        }
        _ => {
            let mut reg = Registry::new();
            let ids = raw.iter().map(|r| reg.intern(&r.2)).collect();
            (ids, reg.names().to_vec())
        }
    };
    let mut seen = HashMap::new();
    let mut entries = Vec::with_capacity(raw.len());
    for ((line, node, _, split), class) in raw.into_iter().zip(classes) {
        if let Some(first) = seen.insert(node, line) {
            return Err(parse_err(
                path,
                line,
                format!("node already labeled on line {first}"),
            ));
        }
        entries.push(LabelEntry { node, class, split });
    }
    LabelTable::new(entries, names)
}

/// Paths written by [`write_graph`].
#[derive(Debug, Clone)]
pub struct GraphFiles {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub labels: PathBuf,
    pub idmap: PathBuf,
}

/// Writes `nodes.csv`, `edges.csv`, `labels.csv` and `idmap.csv` into `dir`.
/// Features use the shortest decimal that parses back to the same `f64`.
pub fn write_graph(g: &Ehg, labels: &LabelTable, dir: &Path) -> Result<GraphFiles> {
    fs::create_dir_all(dir)?;
    let files = GraphFiles {
        nodes: dir.join("nodes.csv"),
        edges: dir.join("edges.csv"),
        labels: dir.join("labels.csv"),
        idmap: dir.join("idmap.csv"),
    };

    let mut w = csv::Writer::from_path(&files.nodes)?;
    let mut header = vec!["id".to_string(), "type".to_string()];
    header.extend(g.features().columns().iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    let x = g.features().values();
    for i in 0..g.node_count() {
        let mut rec = vec![
            g.node_ids()[i].clone(),
            g.node_types().name(g.node_type(i).0).to_string(),
        ];
        rec.extend(x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&files.edges)?;
    w.write_record(["src", "dst", "relation"])?;
    for e in g.edges() {
        w.write_record([
            g.node_ids()[e.src].as_str(),
            g.node_ids()[e.dst].as_str(),
            g.relations().name(e.relation.0),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&files.labels)?;
    w.write_record(["id", "label", "split"])?;
    for e in labels.entries() {
        w.write_record([
            g.node_ids()[e.node].as_str(),
            labels.class_names()[e.class].as_str(),
            e.split.as_str(),
        ])?;
    }
    w.flush()?;

    write_idmap(g, &files.idmap)?;
    Ok(files)
}

/// `index,id` rows mapping dense indices back to file ids.
pub fn write_idmap(g: &Ehg, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "id"])?;
    for (i, id) in g.node_ids().iter().enumerate() {
        w.write_record([i.to_string().as_str(), id.as_str()])?;
    }
    w.flush()?;
    Ok(())
}
