//! The dimension-attention network and its graph-convolution base.
//!
//! One forward pass is
//!
//! ```text
//! H ──(typed projection)──► Relu(BatchNorm(H W + b)) ──► block × L ──► MLP ──► softmax
//! ```
//!
//! where a block, depending on [`Architecture`], is
//!
//! - `Gdan`: `C = X W_c + b_c`, `S = GC(C)`, `A = DA(C)`
//! - `GraphConv`: `S = GC(X W_g + b_g)`, no attention
//! - `GraphConvAttention`: `S = GC(X W_g + b_g)`, `A = DA(S)` (the plug-in)
//!
//! followed by `Dropout(Relu((S + β·A) W_f + b_f))`. `GC` is the
//! degree-normalised neighbor sum and `DA` the per-dimension attention
//! aggregation with relation-specific logit transforms.

pub mod graph_ops;
mod plugin;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::Ehg;
use crate::nn::checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_VERSION};
use crate::nn::ops::{self, BatchNormCache, BatchStats};
use crate::nn::{BatchNormState, Mode, ParamStore, Reduction, Tensor};

pub use graph_ops::GcnNorm;
pub use plugin::{attention_merge, dimension_attention_plugin, AttentionMergeCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Architecture {
    #[default]
    #[serde(rename = "gdan")]
    Gdan,
    /// Plain graph-convolution base.
    #[serde(rename = "gc")]
    GraphConv,
    /// Graph-convolution base augmented with dimension attention.
    #[serde(rename = "gc+da")]
    GraphConvAttention,
}

impl Architecture {
    pub fn uses_attention(self) -> bool {
        !matches!(self, Architecture::GraphConv)
    }
}

/// Input width of one node type for the per-type projection path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTypeDim {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdanConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Width of the classifier's hidden layer.
    pub output_dim: usize,
    pub num_classes: usize,
    pub beta: f64,
    pub dropout: f64,
    /// Relation names, one transform matrix each.
    pub relations: Vec<String>,
    /// When set, nodes of each type use the first `dim` feature columns and
    /// a private projection before the shared one.
    pub node_type_dims: Option<Vec<NodeTypeDim>>,
    pub layers: usize,
    pub gcn_norm: GcnNorm,
    pub architecture: Architecture,
}

impl GdanConfig {
    /// Config matching the relations and feature width of `g`.
    pub fn for_graph(g: &Ehg, hidden_dim: usize, output_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim: g.features().dim(),
            hidden_dim,
            output_dim,
            num_classes,
            beta: 0.1,
            dropout: 0.5,
            relations: g.relations().names().to_vec(),
            node_type_dims: None,
            layers: 1,
            gcn_norm: GcnNorm::Product,
            architecture: Architecture::Gdan,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        ops::check_dropout_rate(self.dropout)?;
        if self.layers == 0 {
            return bad("layers must be >= 1".into());
        }
        if self.architecture.uses_attention() && self.relations.is_empty() {
            return bad("attention needs at least one relation".into());
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(r) = self.relations.iter().find(|r| !seen.insert(r.as_str())) {
            return bad(format!("duplicate relation `{r}`"));
        }
        if let Some(types) = &self.node_type_dims {
            if types.is_empty() {
                return bad("node_type_dims is empty".into());
            }
            for t in types {
                if t.dim == 0 || t.dim > self.input_dim {
                    return bad(format!(
                        "node type `{}` dim {} outside 1..={}",
                        t.name, t.dim, self.input_dim
                    ));
                }
            }
        }
        Ok(())
    }
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        *v = rng.gen_range(-limit..limit);
    }
    t
}

fn near_identity(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::identity(n);
    for v in t.data_mut() {
        *v += rng.gen_range(-0.01..0.01);
    }
    t
}

/// Parameter names of one block.
#[derive(Debug, Clone)]
struct BlockNames {
    affine_w: String,
    affine_b: String,
    relations: Vec<String>,
    merge_w: String,
    merge_b: String,
}

impl BlockNames {
    fn new(l: usize, cfg: &GdanConfig) -> Self {
        let affine = match cfg.architecture {
            Architecture::Gdan => "cont",
            _ => "base",
        };
        Self {
            affine_w: format!("block{l}.{affine}.weight"),
            affine_b: format!("block{l}.{affine}.bias"),
            relations: if cfg.architecture.uses_attention() {
                cfg.relations
                    .iter()
                    .map(|r| format!("block{l}.rel.{r}"))
                    .collect()
            } else {
                Vec::new()
            },
            merge_w: format!("block{l}.merge.weight"),
            merge_b: format!("block{l}.merge.bias"),
        }
    }
}

/// A model instance: config, trainable parameters and batch-norm buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gdan {
    pub config: GdanConfig,
    pub params: ParamStore,
    pub bn: BatchNormState,
}

#[derive(Debug, Clone)]
struct TypedCache {
    /// Node indices of each configured type.
    groups: Vec<Vec<usize>>,
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Tensor,
    merge: AttentionMergeCache,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probs: Tensor,
    pub logits: Tensor,
    /// Classifier hidden activations, used as node representations.
    pub embedding: Tensor,
    /// Output of the last block.
    pub block_output: Tensor,
    typed: Option<TypedCache>,
    proj_input: Tensor,
    proj_pre_bn: Tensor,
    bn_cache: BatchNormCache,
    bn_out: Tensor,
    blocks: Vec<BlockCache>,
    cls_input: Tensor,
    cls_hidden_pre: Tensor,
}

impl ForwardPass {
    /// Batch statistics, present in train mode.
    pub fn batch_stats(&self) -> Option<&BatchStats> {
        self.bn_cache.stats.as_ref()
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.probs.argmax_rows()
    }
}

impl Gdan {
    /// Initialises parameters. Each parameter draws from its own stream
    /// seeded by `(seed, name)`, so models that share parameter names start
    /// from identical values for those names.
    pub fn new(config: GdanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut params = ParamStore::new();
        let add_weight = |params: &mut ParamStore, name: String, rows, cols, identity: bool| {
            let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, &name));
            let t = if identity {
                near_identity(rows, &mut rng)
            } else {
                glorot(rows, cols, &mut rng)
            };
            params.insert(name, t)
        };

        let proj_in = match &config.node_type_dims {
            Some(types) => {
                for t in types {
                    add_weight(
                        &mut params,
                        format!("input.{}.weight", t.name),
                        t.dim,
                        h,
                        false,
                    )?;
                    params.insert(format!("input.{}.bias", t.name), Tensor::zeros(1, h))?;
                }
                h
            }
            None => config.input_dim,
        };
        add_weight(&mut params, "proj.weight".into(), proj_in, h, false)?;
        params.insert("proj.bias", Tensor::zeros(1, h))?;
        params.insert("proj.bn.gamma", Tensor::full(1, h, 1.0))?;
        params.insert("proj.bn.beta", Tensor::zeros(1, h))?;

        for l in 0..config.layers {
            let names = BlockNames::new(l, &config);
            add_weight(&mut params, names.affine_w.clone(), h, h, false)?;
            params.insert(names.affine_b.clone(), Tensor::zeros(1, h))?;
            for r in &names.relations {
                add_weight(&mut params, r.clone(), h, h, true)?;
            }
            add_weight(&mut params, names.merge_w.clone(), h, h, false)?;
            params.insert(names.merge_b.clone(), Tensor::zeros(1, h))?;
        }
        add_weight(
            &mut params,
            "cls.hidden.weight".into(),
            h,
            config.output_dim,
            false,
        )?;
        params.insert("cls.hidden.bias", Tensor::zeros(1, config.output_dim))?;
        add_weight(
            &mut params,
            "cls.out.weight".into(),
            config.output_dim,
            config.num_classes,
            false,
        )?;
        params.insert("cls.out.bias", Tensor::zeros(1, config.num_classes))?;

        Ok(Self {
            bn: BatchNormState::new(h),
            config,
            params,
        })
    }

    fn p(&self, name: &str) -> Result<&Tensor> {
        self.params.value(name)
    }

    /// Relation transforms ordered by the graph's relation ids.
    fn relation_weights(&self, g: &Ehg, names: &BlockNames) -> Result<Vec<&Tensor>> {
        let by_name: HashMap<&str, &String> = self
            .config
            .relations
            .iter()
            .zip(&names.relations)
            .map(|(r, p)| (r.as_str(), p))
            .collect();
        g.relations()
            .names()
            .iter()
            .map(|r| {
                let p = by_name.get(r.as_str()).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "graph relation `{r}` has no transform in the model"
                    ))
                })?;
                self.p(p)
            })
            .collect()
    }

    fn typed_groups(&self, g: &Ehg) -> Result<Vec<Vec<usize>>> {
        let types = self.config.node_type_dims.as_ref().expect("typed path");
        let mut slot = vec![usize::MAX; g.node_types().len()];
        for (k, t) in types.iter().enumerate() {
            if let Some(id) = g.node_types().get(&t.name) {
                slot[id] = k;
            }
        }
        let mut groups = vec![Vec::new(); types.len()];
        for i in 0..g.node_count() {
            let t = g.node_type(i).0;
            if slot[t] == usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "node type `{}` has no input projection",
                    g.node_types().name(t)
                )));
            }
            groups[slot[t]].push(i);
        }
        Ok(groups)
    }

    /// Full forward pass. `dropout_seed` drives dropout masks in train mode
    /// and is ignored in eval mode.
    pub fn forward(
        &self,
        g: &Ehg,
        h: &Tensor,
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        let n = g.node_count();
        h.ensure_shape("forward features", (n, cfg.input_dim))?;

        let (typed, proj_input) = match &cfg.node_type_dims {
            Some(types) => {
                let groups = self.typed_groups(g)?;
                let mut out = Tensor::zeros(n, cfg.hidden_dim);
                let mut inputs = Vec::with_capacity(types.len());
                let mut pre = Vec::with_capacity(types.len());
                for (t, rows) in types.iter().zip(&groups) {
                    let x = h.gather_rows(rows).take_cols(t.dim);
                    let z = ops::linear(
                        &x,
                        self.p(&format!("input.{}.weight", t.name))?,
                        self.p(&format!("input.{}.bias", t.name))?,
                    )?;
                    let a = ops::relu(&z);
                    for (k, &i) in rows.iter().enumerate() {
                        out.row_mut(i).copy_from_slice(a.row(k));
                    }
                    inputs.push(x);
                    pre.push(z);
                }
                (
                    Some(TypedCache {
                        groups,
                        inputs,
                        pre,
                    }),
                    out,
                )
            }
            None => (None, h.clone()),
        };

        let proj_pre_bn = ops::linear(&proj_input, self.p("proj.weight")?, self.p("proj.bias")?)?;
        let (bn_out, bn_cache) = ops::batch_norm(
            &proj_pre_bn,
            self.p("proj.bn.gamma")?,
            self.p("proj.bn.beta")?,
            &self.bn,
            mode,
        )?;
        let mut x = ops::relu(&bn_out);

        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let mut blocks = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let names = BlockNames::new(l, cfg);
            let affine = ops::linear(&x, self.p(&names.affine_w)?, self.p(&names.affine_b)?)?;
            let rel = if cfg.architecture.uses_attention() {
                self.relation_weights(g, &names)?
            } else {
                Vec::new()
            };
            let (out, merge) = match cfg.architecture {
                Architecture::Gdan => {
                    let structural = graph_ops::graph_conv(g, &affine, cfg.gcn_norm)?;
                    attention_merge(
                        g,
                        Some((&affine, &rel)),
                        structural,
                        cfg.beta,
                        self.p(&names.merge_w)?,
                        self.p(&names.merge_b)?,
                        cfg.dropout,
                        mode,
                        &mut rng,
                    )?
                }
                Architecture::GraphConv | Architecture::GraphConvAttention => {
                    let base = graph_ops::graph_conv(g, &affine, cfg.gcn_norm)?;
                    let values = base.clone();
                    let attention = if cfg.architecture.uses_attention() {
                        Some((&values, &rel))
                    } else {
                        None
                    };
                    attention_merge(
                        g,
                        attention,
                        base,
                        cfg.beta,
                        self.p(&names.merge_w)?,
                        self.p(&names.merge_b)?,
                        cfg.dropout,
                        mode,
                        &mut rng,
                    )?
                }
            };
            blocks.push(BlockCache { input: x, merge });
            x = out;
        }

        let cls_hidden_pre =
            ops::linear(&x, self.p("cls.hidden.weight")?, self.p("cls.hidden.bias")?)?;
        let embedding = ops::relu(&cls_hidden_pre);
        let logits = ops::linear(
            &embedding,
            self.p("cls.out.weight")?,
            self.p("cls.out.bias")?,
        )?;
        let probs = ops::softmax_rows(&logits)?;
        Ok(ForwardPass {
            probs,
            logits,
            embedding,
            block_output: x.clone(),
            typed,
            proj_input,
            proj_pre_bn,
            bn_cache,
            bn_out,
            blocks,
            cls_input: x,
            cls_hidden_pre,
        })
    }

    /// Eval-mode class probabilities on the graph's own features.
    pub fn predict_proba(&self, g: &Ehg) -> Result<Tensor> {
        Ok(self.forward(g, g.features().values(), Mode::Eval, 0)?.probs)
    }

    /// Back-propagates `dlogits` and overwrites every parameter gradient.
    pub fn backward(&mut self, g: &Ehg, pass: &ForwardPass, dlogits: &Tensor) -> Result<()> {
        self.params.zero_grad();
        let cfg = self.config.clone();

        let gout = ops::linear_backward(&pass.embedding, self.p("cls.out.weight")?, dlogits)?;
        self.params.accumulate("cls.out.weight", &gout.dw)?;
        self.params.accumulate("cls.out.bias", &gout.db)?;
        let dpre = ops::relu_backward(&pass.cls_hidden_pre, &gout.dx)?;
        let ghid = ops::linear_backward(&pass.cls_input, self.p("cls.hidden.weight")?, &dpre)?;
        self.params.accumulate("cls.hidden.weight", &ghid.dw)?;
        self.params.accumulate("cls.hidden.bias", &ghid.db)?;
        let mut dx = ghid.dx;

        for l in (0..cfg.layers).rev() {
            let names = BlockNames::new(l, &cfg);
            let cache = &pass.blocks[l];
            let rel = if cfg.architecture.uses_attention() {
                self.relation_weights(g, &names)?
            } else {
                Vec::new()
            };
            let mg = plugin::attention_merge_backward(
                g,
                &cache.merge,
                &rel,
                cfg.beta,
                self.p(&names.merge_w)?,
                &dx,
            )?;
            let rel_grads: Vec<Tensor> = mg.drelations;
            let daffine = match cfg.architecture {
                Architecture::Gdan => {
                    let mut d = graph_ops::graph_conv_backward(g, &mg.dstructural, cfg.gcn_norm)?;
                    d.add_assign(&mg.dvalues.expect("gdan block has attention"))?;
                    d
                }
                Architecture::GraphConv | Architecture::GraphConvAttention => {
                    let mut dbase = mg.dstructural;
                    if let Some(dv) = mg.dvalues {
                        dbase.add_assign(&dv)?;
                    }
                    graph_ops::graph_conv_backward(g, &dbase, cfg.gcn_norm)?
                }
            };
            self.params.accumulate(&names.merge_w, &mg.dweight)?;
            self.params.accumulate(&names.merge_b, &mg.dbias)?;
            if !rel_grads.is_empty() {
                let by_graph: HashMap<&str, &Tensor> = g
                    .relations()
                    .names()
                    .iter()
                    .map(String::as_str)
                    .zip(&rel_grads)
                    .collect();
                for (rname, pname) in cfg.relations.iter().zip(&names.relations) {
                    if let Some(grad) = by_graph.get(rname.as_str()) {
                        self.params.accumulate(pname, grad)?;
                    }
                }
            }
            let ga = ops::linear_backward(&cache.input, self.p(&names.affine_w)?, &daffine)?;
            self.params.accumulate(&names.affine_w, &ga.dw)?;
            self.params.accumulate(&names.affine_b, &ga.db)?;
            dx = ga.dx;
        }

        let dbn_out = ops::relu_backward(&pass.bn_out, &dx)?;
        let gbn = ops::batch_norm_backward(&pass.bn_cache, self.p("proj.bn.gamma")?, &dbn_out)?;
        self.params.accumulate("proj.bn.gamma", &gbn.dgamma)?;
        self.params.accumulate("proj.bn.beta", &gbn.dbeta)?;
        let gproj = ops::linear_backward(&pass.proj_input, self.p("proj.weight")?, &gbn.dx)?;
        self.params.accumulate("proj.weight", &gproj.dw)?;
        self.params.accumulate("proj.bias", &gproj.db)?;
        debug_assert_eq!(pass.proj_pre_bn.shape(), gbn.dx.shape());

        if let (Some(typed), Some(types)) = (&pass.typed, &cfg.node_type_dims) {
            for (k, t) in types.iter().enumerate() {
                let rows = &typed.groups[k];
                let dout = gproj.dx.gather_rows(rows);
                let dz = ops::relu_backward(&typed.pre[k], &dout)?;
                let wname = format!("input.{}.weight", t.name);
                let gt = ops::linear_backward(&typed.inputs[k], self.p(&wname)?, &dz)?;
                self.params.accumulate(&wname, &gt.dw)?;
                self.params
                    .accumulate(&format!("input.{}.bias", t.name), &gt.db)?;
            }
        }
        Ok(())
    }

    /// Forward pass plus cross-entropy on `targets`; fills gradients.
    pub fn loss_and_gradients(
        &mut self,
        g: &Ehg,
        h: &Tensor,
        targets: &[(usize, usize)],
        reduction: Reduction,
        mode: Mode,
        dropout_seed: u64,
    ) -> Result<(f64, ForwardPass)> {
        let pass = self.forward(g, h, mode, dropout_seed)?;
        let loss = ops::cross_entropy(&pass.probs, targets, reduction)?;
        let dlogits = ops::softmax_cross_entropy_backward(&pass.probs, targets, reduction);
        self.backward(g, &pass, &dlogits)?;
        Ok((loss, pass))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let h = self.bn.running_mean.len();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            params: self
                .params
                .iter()
                .map(|(n, p)| NamedTensor::new(n, &p.value))
                .collect(),
            buffers: vec![
                NamedTensor {
                    name: "proj.bn.running_mean".into(),
                    shape: [1, h],
                    values: self.bn.running_mean.clone(),
                },
                NamedTensor {
                    name: "proj.bn.running_var".into(),
                    shape: [1, h],
                    values: self.bn.running_var.clone(),
                },
            ],
        }
    }

    /// Builds a model from `config` and overwrites its state from `ckpt`.
    /// Every parameter must be present with a matching shape.
    pub fn from_checkpoint(config: GdanConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut model = Gdan::new(config, 0)?;
        let by_name: HashMap<&str, &NamedTensor> =
            ckpt.params.iter().map(|t| (t.name.as_str(), t)).collect();
        if by_name.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                by_name.len(),
                model.params.len()
            )));
        }
        let names: Vec<String> = model.params.names().map(str::to_string).collect();
        for name in names {
            let t = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            model
                .params
                .set_value(&name, t.to_tensor()?)
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        }
        let h = model.bn.running_mean.len();
        for b in &ckpt.buffers {
            if b.values.len() != h {
                return Err(Error::Checkpoint(format!(
                    "buffer `{}` has wrong length",
                    b.name
                )));
            }
            match b.name.as_str() {
                "proj.bn.running_mean" => model.bn.running_mean = b.values.clone(),
                "proj.bn.running_var" => model.bn.running_var = b.values.clone(),
                other => return Err(Error::Checkpoint(format!("unknown buffer `{other}`"))),
            }
        }
        Ok(model)
    }
}
