use rand::Rng;

use super::graph_ops;
use crate::error::Result;
use crate::hetgraph::Ehg;
use crate::nn::ops;
use crate::nn::{Mode, Tensor};

#[derive(Debug, Clone)]
pub struct AttentionMergeCache {
    values: Option<Tensor>,
    alpha: Option<Tensor>,
    merged: Tensor,
    pre_activation: Tensor,
    mask: Option<Tensor>,
}

impl AttentionMergeCache {
    pub fn alpha(&self) -> Option<&Tensor> {
        self.alpha.as_ref()
    }
}

/// Dimension-attention aggregation merged into a structural representation:
///
/// `Dropout(Relu((S + β · DA(V)) W_f + b_f))`
///
/// where `DA(V)_i^k = Σ_j softmax_j(V_j W_r)^k · V_j^k`. With `attention` set
/// to `None` the merge reduces to `Dropout(Relu(S W_f + b_f))`.
#[allow(clippy::too_many_arguments)]
pub fn attention_merge<R: Rng>(
    g: &Ehg,
    attention: Option<(&Tensor, &Vec<&Tensor>)>,
    structural: Tensor,
    beta: f64,
    merge_w: &Tensor,
    merge_b: &Tensor,
    dropout: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, AttentionMergeCache)> {
    let (merged, values, alpha) = match attention {
        Some((values, rel)) => {
            let logits = graph_ops::relation_transform(g, values, rel)?;
            let alpha = graph_ops::dimension_attention(g, &logits)?;
            let da = graph_ops::dimension_aggregate(g, &alpha, values)?;
            let mut merged = structural;
            merged.axpy(beta, &da)?;
            (merged, Some(values.clone()), Some(alpha))
        }
        None => (structural, None, None),
    };
    let pre_activation = ops::linear(&merged, merge_w, merge_b)?;
    let act = ops::relu(&pre_activation);
    let (out, mask) = ops::dropout(&act, dropout, mode, rng)?;
    Ok((
        out,
        AttentionMergeCache {
            values,
            alpha,
            merged,
            pre_activation,
            mask,
        },
    ))
}

pub(crate) struct AttentionMergeGrads {
    pub dstructural: Tensor,
    pub dvalues: Option<Tensor>,
    pub drelations: Vec<Tensor>,
    pub dweight: Tensor,
    pub dbias: Tensor,
}

pub(crate) fn attention_merge_backward(
    g: &Ehg,
    cache: &AttentionMergeCache,
    rel: &[&Tensor],
    beta: f64,
    merge_w: &Tensor,
    dy: &Tensor,
) -> Result<AttentionMergeGrads> {
    let dact = ops::dropout_backward(cache.mask.as_ref(), dy)?;
    let dpre = ops::relu_backward(&cache.pre_activation, &dact)?;
    let gl = ops::linear_backward(&cache.merged, merge_w, &dpre)?;
    let dmerged = gl.dx;
    let (dvalues, drelations) = match (&cache.values, &cache.alpha) {
        (Some(values), Some(alpha)) => {
            let dda = dmerged.scale(beta);
            let agg = graph_ops::dimension_aggregate_backward(g, alpha, values, &dda)?;
            let dlogits = graph_ops::dimension_attention_backward(g, alpha, &agg.dalpha)?;
            let rt = graph_ops::relation_transform_backward(g, values, rel, &dlogits)?;
            let mut dv = agg.dx;
            dv.add_assign(&rt.dx)?;
            (Some(dv), rt.dweights)
        }
        _ => (None, Vec::new()),
    };
    Ok(AttentionMergeGrads {
        dstructural: dmerged,
        dvalues,
        drelations,
        dweight: gl.dw,
        dbias: gl.db,
    })
}

/// Augments the output of any message-passing base layer with dimension
/// attention: the base output serves both as attention values and as the
/// structural term of the merge. Output has the base output's shape.
#[allow(clippy::too_many_arguments)]
pub fn dimension_attention_plugin<R: Rng>(
    g: &Ehg,
    base_output: &Tensor,
    relation_weights: &Vec<&Tensor>,
    beta: f64,
    merge_w: &Tensor,
    merge_b: &Tensor,
    dropout: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor> {
    let (out, _) = attention_merge(
        g,
        Some((base_output, relation_weights)),
        base_output.clone(),
        beta,
        merge_w,
        merge_b,
        dropout,
        mode,
        rng,
    )?;
    Ok(out)
}
