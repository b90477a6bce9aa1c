//! Shared fixtures for the integration tests: random graph builders, a
//! nested-loop reference forward pass and a textbook Adam.
#![allow(dead_code)]

use gdan::hetgraph::{Ehg, GraphBuilder, LabelEntry, LabelTable, Split};
use gdan::model::{Architecture, GcnNorm, Gdan};
use gdan::nn::Tensor;
use rand::Rng;

pub type Matrix = Vec<Vec<f64>>;

/// Random graph with `n` nodes, up to `m` edges (self-loops and duplicates
/// are dropped by the graph), `relations` relation names `r0, r1, ...` and
/// `types` node types `t0, t1, ...` assigned round-robin.
pub fn random_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
    relations: usize,
    types: usize,
    dim: usize,
) -> Ehg {
    let rel: Vec<String> = (0..relations).map(|r| format!("r{r}")).collect();
    let ty: Vec<String> = (0..types).map(|t| format!("t{t}")).collect();
    let mut b = GraphBuilder::new(dim).relations(&rel).node_types(&ty);
    for i in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        b.add_node(&ty[i % types], &x);
    }
    for _ in 0..m {
        let s = rng.gen_range(0..n);
        let d = rng.gen_range(0..n);
        b.add_edge(s, d, &rel[rng.gen_range(0..relations)]);
    }
    b.build().expect("random graph")
}

/// Labels every node with a random class, assigning splits in the ratio
/// 2:1:1 by node index.
pub fn random_labels<R: Rng>(rng: &mut R, n: usize, classes: usize) -> LabelTable {
    let entries = (0..n)
        .map(|node| LabelEntry {
            node,
            class: if node < classes {
                node
            } else {
                rng.gen_range(0..classes)
            },
            split: match node % 4 {
                0 | 1 => Split::Train,
                2 => Split::Val,
                _ => Split::Test,
            },
        })
        .collect();
    LabelTable::with_numeric_classes(entries, classes).expect("labels")
}

pub fn rows(t: &Tensor) -> Matrix {
    t.to_rows()
}

pub fn max_abs_diff(a: &Matrix, b: &Tensor) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(i, k)).abs());
        }
    }
    worst
}

fn param(model: &Gdan, name: &str) -> Matrix {
    model
        .params
        .value(name)
        .unwrap_or_else(|_| panic!("missing parameter {name}"))
        .to_rows()
}

fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    x.iter()
        .map(|row| {
            (0..w[0].len())
                .map(|c| {
                    let mut s = b[0][c];
                    for (k, &v) in row.iter().enumerate() {
                        s += v * w[k][c];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn relu(x: Matrix) -> Matrix {
    x.into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect()
}

/// Undirected neighbor lists `(neighbor, relation id)` built straight from
/// the edge list.
pub fn neighbor_lists(g: &Ehg) -> Vec<Vec<(usize, usize)>> {
    let mut nb = vec![Vec::new(); g.node_count()];
    for e in g.edges() {
        nb[e.dst].push((e.src, e.relation.0));
        nb[e.src].push((e.dst, e.relation.0));
    }
    nb
}

fn conv(nb: &[Vec<(usize, usize)>], x: &Matrix, norm: GcnNorm) -> Matrix {
    let dg = |i: usize| (nb[i].len() as f64).max(1.0);
    let d = x[0].len();
    (0..x.len())
        .map(|i| {
            let mut out = vec![0.0; d];
            for &(j, _) in &nb[i] {
                let w = match norm {
                    GcnNorm::Product => 1.0 / (dg(i) * dg(j)),
                    GcnNorm::Sqrt => 1.0 / (dg(i) * dg(j)).sqrt(),
                };
                for k in 0..d {
                    out[k] += w * x[j][k];
                }
            }
            out
        })
        .collect()
}

/// `DA_i^k = Σ_j softmax_j(e_ij^k) x_j^k` with `e_ij = x_j W_r(ij)`.
fn dimension_attention(nb: &[Vec<(usize, usize)>], x: &Matrix, rel: &[Matrix]) -> Matrix {
    let d = x[0].len();
    (0..x.len())
        .map(|i| {
            let logits: Vec<Vec<f64>> = nb[i]
                .iter()
                .map(|&(j, r)| {
                    (0..d)
                        .map(|k| (0..d).map(|m| x[j][m] * rel[r][m][k]).sum())
                        .collect()
                })
                .collect();
            (0..d)
                .map(|k| {
                    let z: f64 = logits.iter().map(|e| e[k].exp()).sum();
                    nb[i]
                        .iter()
                        .zip(&logits)
                        .map(|(&(j, _), e)| e[k].exp() / z * x[j][k])
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Reference eval-mode forward pass, written directly from the model
/// equations with nested loops. Returns `(probs, embedding)`.
pub fn oracle_forward(g: &Ehg, h: &Tensor, model: &Gdan) -> (Matrix, Matrix) {
    let cfg = &model.config;
    let n = g.node_count();
    let nb = neighbor_lists(g);
    let h = h.to_rows();

    let input: Matrix = match &cfg.node_type_dims {
        None => h,
        Some(types) => (0..n)
            .map(|i| {
                let tname = g.node_types().name(g.node_type(i).0);
                let t = types.iter().find(|t| t.name == tname).expect("typed node");
                let w = param(model, &format!("input.{}.weight", t.name));
                let b = param(model, &format!("input.{}.bias", t.name));
                let x = vec![h[i][..t.dim].to_vec()];
                relu(affine(&x, &w, &b)).remove(0)
            })
            .collect(),
    };

    let z = affine(
        &input,
        &param(model, "proj.weight"),
        &param(model, "proj.bias"),
    );
    let gamma = &param(model, "proj.bn.gamma")[0];
    let beta = &param(model, "proj.bn.beta")[0];
    let bn = &model.bn;
    let mut x: Matrix = z
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let y = (v - bn.running_mean[k]) / (bn.running_var[k] + bn.eps).sqrt();
                    (gamma[k] * y + beta[k]).max(0.0)
                })
                .collect()
        })
        .collect();

    let rel_names: Vec<String> = g.relations().names().to_vec();
    for l in 0..cfg.layers {
        let prefix = match cfg.architecture {
            Architecture::Gdan => "cont",
            _ => "base",
        };
        let c = affine(
            &x,
            &param(model, &format!("block{l}.{prefix}.weight")),
            &param(model, &format!("block{l}.{prefix}.bias")),
        );
        let structural = conv(&nb, &c, cfg.gcn_norm);
        let values = match cfg.architecture {
            Architecture::Gdan => Some(c),
            Architecture::GraphConvAttention => Some(structural.clone()),
            Architecture::GraphConv => None,
        };
        let merged: Matrix = match values {
            None => structural,
            Some(v) => {
                let rel: Vec<Matrix> = rel_names
                    .iter()
                    .map(|r| param(model, &format!("block{l}.rel.{r}")))
                    .collect();
                let da = dimension_attention(&nb, &v, &rel);
                structural
                    .iter()
                    .zip(&da)
                    .map(|(s, a)| s.iter().zip(a).map(|(s, a)| s + cfg.beta * a).collect())
                    .collect()
            }
        };
        x = relu(affine(
            &merged,
            &param(model, &format!("block{l}.merge.weight")),
            &param(model, &format!("block{l}.merge.bias")),
        ));
    }

    let emb = relu(affine(
        &x,
        &param(model, "cls.hidden.weight"),
        &param(model, "cls.hidden.bias"),
    ));
    let logits = affine(
        &emb,
        &param(model, "cls.out.weight"),
        &param(model, "cls.out.bias"),
    );
    let probs = logits
        .iter()
        .map(|row| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            row.iter().map(|v| v.exp() / z).collect()
        })
        .collect();
    (probs, emb)
}

/// Plain Adam with bias correction on a flat parameter vector.
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, w: &mut [f64], g: &[f64], lr: f64) {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        self.t += 1;
        for k in 0..w.len() {
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g[k];
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g[k] * g[k];
            let mh = self.m[k] / (1.0 - b1.powi(self.t));
            let vh = self.v[k] / (1.0 - b2.powi(self.t));
            w[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// The 12-node, two-relation, two-class graph used by the learnability and
/// gradient checks. Class is the sign of the first feature; relations link
/// nodes within a class (`same`) and across classes (`cross`). Eight nodes
/// train and four are held out; there is no validation split, so training
/// keeps the final epoch.
pub fn separable_graph() -> (Ehg, LabelTable) {
    let mut b = GraphBuilder::new(3)
        .relations(&["same", "cross"])
        .node_types(&["a", "b"]);
    let mut entries = Vec::new();
    for i in 0..12 {
        let class = i % 2;
        let sign = if class == 0 { -1.0 } else { 1.0 };
        let x = [
            sign * (1.0 + 0.1 * (i / 2) as f64),
            0.3 * ((i * 7 % 5) as f64 - 2.0),
            0.2 * ((i * 3 % 4) as f64 - 1.5),
        ];
        b.add_node(if i < 6 { "a" } else { "b" }, &x);
        entries.push(LabelEntry {
            node: i,
            class,
            split: match i {
                0..=7 => Split::Train,
                _ => Split::Test,
            },
        });
    }
    for i in 0..12 {
        b.add_edge(i, (i + 2) % 12, "same");
        if i % 3 == 0 {
            b.add_edge(i, (i + 1) % 12, "cross");
        }
    }
    let g = b.build().expect("separable graph");
    let labels = LabelTable::with_numeric_classes(entries, 2).expect("labels");
    (g, labels)
}

/// Two-class graph where class information reaches the first `n/2` nodes
/// ("targets", pure-noise features) only through one edge each to a
/// same-class "source" node whose features are a one-hot class indicator.
/// `noise_edges` further edges join random target pairs.
///
/// Features are `[onehot0, onehot1, noise0, noise1]`. Sources are all in
/// the training split; targets are split 3:1:1 into train, val and test.
/// Returns the graph, labels and the set of signal edge ids.
pub fn planted_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    noise_edges: usize,
) -> (Ehg, LabelTable, Vec<usize>) {
    let half = n / 2;
    let mut b = GraphBuilder::new(4)
        .relations(&["link"])
        .node_types(&["target", "source"]);
    let mut entries = Vec::with_capacity(n);
    let class_of = |i: usize| i % 2;
    for i in 0..half {
        b.add_node(
            "target",
            &[0.0, 0.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        );
        entries.push(LabelEntry {
            node: i,
            class: class_of(i),
            split: match i % 5 {
                0..=2 => Split::Train,
                3 => Split::Val,
                _ => Split::Test,
            },
        });
    }
    for i in half..n {
        let c = class_of(i);
        let onehot = if c == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
        b.add_node("source", &[onehot[0], onehot[1], 0.0, 0.0]);
        entries.push(LabelEntry {
            node: i,
            class: c,
            split: Split::Train,
        });
    }
    let sources: [Vec<usize>; 2] = [
        (half..n).filter(|&i| class_of(i) == 0).collect(),
        (half..n).filter(|&i| class_of(i) == 1).collect(),
    ];
    for t in 0..half {
        let pool = &sources[class_of(t)];
        let s = pool[rng.gen_range(0..pool.len())];
        b.add_edge(s, t, "link");
    }
    let mut added = 0;
    while added < noise_edges {
        let a = rng.gen_range(0..half);
        let c = rng.gen_range(0..half);
        if a != c {
            b.add_edge(a, c, "link");
            added += 1;
        }
    }
    let g = b.build().expect("planted graph");
    let signal = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.src >= half || e.dst >= half)
        .map(|(id, _)| id)
        .collect();
    let labels = LabelTable::with_numeric_classes(entries, 2).expect("labels");
    (g, labels, signal)
}

/// Central-difference gradient of a scalar function of a tensor.
pub fn numeric_grad(x: &Tensor, eps: f64, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[k] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[k] = orig;
        out.data_mut()[k] = (plus - minus) / (2.0 * eps);
    }
    out
}

/// `max |a − b| / max(1, |b|)` over entries.
pub fn rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// `Σ y ⊙ r`, the scalar probe used to pull one gradient out of an op.
pub fn probe(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
    )
    .expect("shape")
}
