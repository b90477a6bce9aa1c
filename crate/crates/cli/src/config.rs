use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gdan::distshift::{DistShiftConfig, ProxyConfig, SamplerConfig};
use gdan::eval::CurveConfig;
use gdan::hetgraph::{Ehg, LabelTable};
use gdan::model::{Architecture, GcnNorm, GdanConfig, NodeTypeDim};
use gdan::nn::Reduction;
use gdan::trainer::{SelectionMetric, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub curve: CurveSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub standardize: bool,
}

fn default_beta() -> f64 {
    0.1
}
fn default_dropout() -> f64 {
    0.5
}
fn default_layers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub output_dim: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default)]
    pub gcn_norm: GcnNorm,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub node_type_dims: Option<Vec<NodeTypeDim>>,
}

fn default_lr_min() -> f64 {
    0.001
}
fn default_lr_max() -> f64 {
    0.01
}
fn default_weight_decay() -> f64 {
    0.01
}
fn default_runs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    #[serde(default = "default_lr_min")]
    pub lr_min: f64,
    #[serde(default = "default_lr_max")]
    pub lr_max: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    #[serde(default)]
    pub reduction: Reduction,
    /// Extra seeded runs summarized as mean ± std; 1 trains a single model.
    #[serde(default = "default_runs")]
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    pub seed_nodes: usize,
    pub depth: usize,
    pub subgraphs: usize,
    pub type_floor: f64,
    pub relation_weights: BTreeMap<String, f64>,
    pub proxy_steps: usize,
    pub proxy_lr: f64,
    pub proxy_l2: f64,
}

impl Default for ExplainSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        let p = ProxyConfig::default();
        Self {
            seed_nodes: s.seed_nodes,
            depth: s.depth,
            subgraphs: s.subgraphs,
            type_floor: s.type_floor,
            relation_weights: s.relation_weights,
            proxy_steps: p.steps,
            proxy_lr: p.lr,
            proxy_l2: p.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    pub step: f64,
    pub seeds: usize,
}

impl Default for CurveSection {
    fn default() -> Self {
        let c = CurveConfig::default();
        Self {
            step: c.step,
            seeds: c.seeds,
        }
    }
}

impl RunConfig {
    /// Parses TOML. Relative data paths resolve against the config file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data.nodes,
            &mut cfg.data.edges,
            &mut cfg.data.labels,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Hash of the canonical JSON form of the whole config.
    pub fn hash(&self) -> String {
        gdan::trainer::config_hash(self).expect("config serializes to JSON")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.hash()[..16])
    }

    pub fn model_config(&self, g: &Ehg, labels: &LabelTable) -> GdanConfig {
        let m = &self.model;
        GdanConfig {
            beta: m.beta,
            dropout: m.dropout,
            layers: m.layers,
            gcn_norm: m.gcn_norm,
            architecture: m.architecture,
            node_type_dims: m.node_type_dims.clone(),
            ..GdanConfig::for_graph(g, m.hidden_dim, m.output_dim, labels.num_classes())
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            lr_min: t.lr_min,
            lr_max: t.lr_max,
            weight_decay: t.weight_decay,
            seed: self.seed,
            selection_metric: t.selection_metric,
            reduction: t.reduction,
        }
    }

    pub fn distshift_config(&self) -> DistShiftConfig {
        let e = &self.explain;
        DistShiftConfig {
            sampler: SamplerConfig {
                seed_nodes: e.seed_nodes,
                depth: e.depth,
                subgraphs: e.subgraphs,
                type_floor: e.type_floor,
                relation_weights: e.relation_weights.clone(),
                seed: self.seed,
            },
            proxy: ProxyConfig {
                steps: e.proxy_steps,
                lr: e.proxy_lr,
                l2: e.proxy_l2,
            },
        }
    }

    pub fn curve_config(&self) -> CurveConfig {
        CurveConfig {
            step: self.curve.step,
            seeds: self.curve.seeds,
            seed: self.seed,
        }
    }
}
