//! Sparse message-passing kernels over [`MessageIndex`] slots.
//!
//! A slot is one (target `i`, neighbor `j`, relation `r`) incidence. Per-slot
//! tensors (logits, attention) have one row per slot in [`MessageIndex`]
//! order.
//!
//! [`MessageIndex`]: crate::hetgraph::MessageIndex

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::Ehg;
use crate::nn::Tensor;

/// Edge weight used by the graph-convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcnNorm {
    /// `1 / (dg(i) · dg(j))`
    #[default]
    Product,
    /// `1 / sqrt(dg(i) · dg(j))`
    Sqrt,
}

impl GcnNorm {
    #[inline]
    pub fn weight(self, dg_i: f64, dg_j: f64) -> f64 {
        match self {
            GcnNorm::Product => 1.0 / (dg_i * dg_j),
            GcnNorm::Sqrt => 1.0 / (dg_i * dg_j).sqrt(),
        }
    }
}

fn check_rows(op: &'static str, t: &Tensor, rows: usize) -> Result<()> {
    if t.rows() != rows {
        return Err(Error::Shape {
            op,
            left: t.shape(),
            right: (rows, t.cols()),
        });
    }
    Ok(())
}

/// `h_i = Σ_{j∈N(i)} w(i,j) · x_j`. Isolated nodes get a zero row.
pub fn graph_conv(g: &Ehg, x: &Tensor, norm: GcnNorm) -> Result<Tensor> {
    check_rows("graph_conv", x, g.node_count())?;
    let m = g.messages();
    let d = x.cols();
    let mut out = Tensor::zeros(g.node_count(), d);
    for i in 0..g.node_count() {
        let dg_i = g.norm_degree(i);
        let row = out.row_mut(i);
        for s in m.slots(i) {
            let j = m.source[s];
            let w = norm.weight(dg_i, g.norm_degree(j));
            for (o, &v) in row.iter_mut().zip(x.row(j)) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}

pub fn graph_conv_backward(g: &Ehg, dy: &Tensor, norm: GcnNorm) -> Result<Tensor> {
    check_rows("graph_conv_backward", dy, g.node_count())?;
    let m = g.messages();
    let mut dx = Tensor::zeros(g.node_count(), dy.cols());
    for i in 0..g.node_count() {
        let dg_i = g.norm_degree(i);
        for s in m.slots(i) {
            let j = m.source[s];
            let w = norm.weight(dg_i, g.norm_degree(j));
            let gi = dy.row(i);
            for (o, &v) in dx.row_mut(j).iter_mut().zip(gi) {
                *o += w * v;
            }
        }
    }
    Ok(dx)
}

/// Per-slot logits `e_ij = x_j · W_r`, where `weights[r]` is the square
/// transform of graph relation `r`.
pub fn relation_transform(g: &Ehg, x: &Tensor, weights: &[&Tensor]) -> Result<Tensor> {
    check_rows("relation_transform", x, g.node_count())?;
    let d = x.cols();
    check_relation_weights(g, weights, d)?;
    let m = g.messages();
    let projected: Vec<Option<Tensor>> = (0..weights.len())
        .map(|r| {
            if g.relation_edge_count(crate::hetgraph::RelationId(r)) == 0 {
                Ok(None)
            } else {
                x.matmul(weights[r]).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let mut logits = Vec::with_capacity(m.slot_count() * d);
    for s in 0..m.slot_count() {
        let p = projected[m.relation[s].0]
            .as_ref()
            .expect("relation has edges");
        logits.extend_from_slice(p.row(m.source[s]));
    }
    Tensor::from_vec(m.slot_count(), d, logits)
}

fn check_relation_weights(g: &Ehg, weights: &[&Tensor], d: usize) -> Result<()> {
    if weights.len() != g.relations().len() {
        return Err(Error::InvalidArgument(format!(
            "{} relation transforms for {} relations",
            weights.len(),
            g.relations().len()
        )));
    }
    for w in weights {
        w.ensure_shape("relation weight", (d, d))?;
    }
    Ok(())
}

pub struct RelationTransformGrads {
    pub dx: Tensor,
    /// Indexed like the `weights` argument.
    pub dweights: Vec<Tensor>,
}

pub fn relation_transform_backward(
    g: &Ehg,
    x: &Tensor,
    weights: &[&Tensor],
    dlogits: &Tensor,
) -> Result<RelationTransformGrads> {
    let d = x.cols();
    let m = g.messages();
    check_rows("relation_transform_backward", dlogits, m.slot_count())?;
    let n = g.node_count();
    let mut dproj: Vec<Tensor> = (0..weights.len()).map(|_| Tensor::zeros(n, d)).collect();
    for s in 0..m.slot_count() {
        let dp = &mut dproj[m.relation[s].0];
        for (o, &v) in dp.row_mut(m.source[s]).iter_mut().zip(dlogits.row(s)) {
            *o += v;
        }
    }
    let mut dx = Tensor::zeros(n, d);
    let mut dweights = Vec::with_capacity(weights.len());
    for (dp, w) in dproj.iter().zip(weights) {
        dweights.push(x.matmul_tn(dp)?);
        dx.add_assign(&dp.matmul_nt(w)?)?;
    }
    Ok(RelationTransformGrads { dx, dweights })
}

/// Softmax of each logit column over the neighbors of every target node,
/// across all relations jointly. Targets without neighbors own no slots.
pub fn dimension_attention(g: &Ehg, logits: &Tensor) -> Result<Tensor> {
    let m = g.messages();
    check_rows("dimension_attention", logits, m.slot_count())?;
    let d = logits.cols();
    let mut alpha = logits.clone();
    let mut max = vec![0.0; d];
    let mut sum = vec![0.0; d];
    for i in 0..g.node_count() {
        let slots = m.slots(i);
        if slots.is_empty() {
            continue;
        }
        max.fill(f64::NEG_INFINITY);
        for s in slots.clone() {
            for (mx, &v) in max.iter_mut().zip(alpha.row(s)) {
                *mx = mx.max(v);
            }
        }
        sum.fill(0.0);
        for s in slots.clone() {
            for ((a, mx), acc) in alpha.row_mut(s).iter_mut().zip(&max).zip(sum.iter_mut()) {
                *a = (*a - mx).exp();
                *acc += *a;
            }
        }
        for s in slots {
            for (a, acc) in alpha.row_mut(s).iter_mut().zip(&sum) {
                *a /= acc;
            }
        }
    }
    Ok(alpha)
}

/// Entity-level attention: one score per slot, normalised over neighbors.
/// Uses the same kernel as [`dimension_attention`] with a single column.
pub fn entity_attention(g: &Ehg, scores: &[f64]) -> Result<Vec<f64>> {
    let t = Tensor::from_vec(scores.len(), 1, scores.to_vec())?;
    Ok(dimension_attention(g, &t)?.into_data())
}

/// Gradient of [`dimension_attention`] given its output.
pub fn dimension_attention_backward(g: &Ehg, alpha: &Tensor, dalpha: &Tensor) -> Result<Tensor> {
    let m = g.messages();
    dalpha.ensure_shape("dimension_attention_backward", alpha.shape())?;
    let d = alpha.cols();
    let mut out = Tensor::zeros(alpha.rows(), d);
    let mut inner = vec![0.0; d];
    for i in 0..g.node_count() {
        let slots = m.slots(i);
        inner.fill(0.0);
        for s in slots.clone() {
            for ((acc, &a), &da) in inner.iter_mut().zip(alpha.row(s)).zip(dalpha.row(s)) {
                *acc += a * da;
            }
        }
        for s in slots {
            let (a_row, da_row) = (alpha.row(s), dalpha.row(s));
            for (k, o) in out.row_mut(s).iter_mut().enumerate() {
                *o = a_row[k] * (da_row[k] - inner[k]);
            }
        }
    }
    Ok(out)
}

/// `h_i^k = Σ_{j∈N(i)} α_ij^k · x_j^k`.
pub fn dimension_aggregate(g: &Ehg, alpha: &Tensor, x: &Tensor) -> Result<Tensor> {
    let m = g.messages();
    check_rows("dimension_aggregate", x, g.node_count())?;
    alpha.ensure_shape("dimension_aggregate", (m.slot_count(), x.cols()))?;
    let mut out = Tensor::zeros(g.node_count(), x.cols());
    for i in 0..g.node_count() {
        let row = out.row_mut(i);
        for s in m.slots(i) {
            for ((o, &a), &v) in row.iter_mut().zip(alpha.row(s)).zip(x.row(m.source[s])) {
                *o += a * v;
            }
        }
    }
    Ok(out)
}

pub struct AggregateGrads {
    pub dalpha: Tensor,
    pub dx: Tensor,
}

pub fn dimension_aggregate_backward(
    g: &Ehg,
    alpha: &Tensor,
    x: &Tensor,
    dy: &Tensor,
) -> Result<AggregateGrads> {
    let m = g.messages();
    check_rows("dimension_aggregate_backward", dy, g.node_count())?;
    let d = x.cols();
    let mut dalpha = Tensor::zeros(m.slot_count(), d);
    let mut dx = Tensor::zeros(g.node_count(), d);
    for i in 0..g.node_count() {
        let gi = dy.row(i);
        for s in m.slots(i) {
            let j = m.source[s];
            let da = &mut dalpha.data_mut()[s * d..(s + 1) * d];
            for ((o, &gv), &xv) in da.iter_mut().zip(gi).zip(x.row(j)) {
                *o = gv * xv;
            }
            for ((o, &a), &gv) in dx.row_mut(j).iter_mut().zip(alpha.row(s)).zip(gi) {
                *o += a * gv;
            }
        }
    }
    Ok(AggregateGrads { dalpha, dx })
}
