use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use gdan::distshift::{distshift_scores, loo_scores, EdgeScoreTable};
use gdan::eval::{edge_curve, kmeans_cluster_eval, write_embeddings, CurveMode};
use gdan::hetgraph::{load_graph, write_idmap, Ehg, LabelTable, LoadOptions, RelationId, Split};
use gdan::model::{Architecture, Gdan, GdanConfig};
use gdan::nn::{Checkpoint, Mode};
use gdan::trainer::{evaluate, repeat_runs, train as train_model};

use crate::config::RunConfig;
use crate::Failure;

pub struct Context {
    pub threads: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    version: &'a str,
    threads: usize,
    wall_time_secs: f64,
    artifacts: Vec<String>,
}

/// A loaded config with its data and the run directory it writes into.
struct Run {
    cfg: RunConfig,
    hash: String,
    dir: PathBuf,
    graph: Ehg,
    labels: LabelTable,
    started: Instant,
    artifacts: Vec<String>,
}

impl Run {
    fn open(path: &Path, plug_in: bool) -> Result<Self, Failure> {
        let started = Instant::now();
        let mut cfg = RunConfig::load(path).map_err(Failure::Usage)?;
        if plug_in {
            cfg.model.architecture = Architecture::GraphConvAttention;
        }
        let (graph, labels) = load_data(
            &cfg.data.nodes,
            &cfg.data.edges,
            &cfg.data.labels,
            cfg.data.standardize,
        )?;
        let hash = cfg.hash();
        let dir = cfg.run_dir();
        fs::create_dir_all(&dir)?;
        write_idmap(&graph, &dir.join("idmap.csv"))?;
        Ok(Self {
            cfg,
            hash,
            dir,
            graph,
            labels,
            started,
            artifacts: vec!["idmap.csv".into()],
        })
    }

    fn model_config(&self) -> Result<GdanConfig, Failure> {
        let mc = self.cfg.model_config(&self.graph, &self.labels);
        mc.validate()
            .map_err(|e| Failure::Usage(format!("[model]: {e}")))?;
        Ok(mc)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn load_model(&self, checkpoint: Option<PathBuf>) -> Result<Gdan, Failure> {
        let path = checkpoint.unwrap_or_else(|| self.dir.join("checkpoint.json"));
        let ckpt = Checkpoint::load(&path)?;
        Ok(Gdan::from_checkpoint(self.model_config()?, &ckpt)?)
    }

    fn finish(mut self, ctx: &Context, command: &str) -> Result<(), Failure> {
        let manifest_name = format!("manifest_{command}.json");
        let artifacts = std::mem::take(&mut self.artifacts);
        let manifest = Manifest {
            command,
            config_hash: &self.hash,
            seed: self.cfg.seed,
            version: env!("CARGO_PKG_VERSION"),
            threads: ctx.threads,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            artifacts,
        };
        let path = self.dir.join(&manifest_name);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        println!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn load_data(
    nodes: &Path,
    edges: &Path,
    labels: &Path,
    standardize: bool,
) -> Result<(Ehg, LabelTable), Failure> {
    Ok(load_graph(
        nodes,
        edges,
        labels,
        &LoadOptions { standardize },
    )?)
}

#[derive(Serialize)]
struct RelationStats {
    relation: String,
    edges: usize,
}

#[derive(Serialize)]
struct DatasetStats {
    nodes: usize,
    node_types: Vec<(String, usize)>,
    features: usize,
    relations: Vec<RelationStats>,
    edges: usize,
    labeled: usize,
    classes: usize,
    train: usize,
    val: usize,
    test: usize,
}

fn stats(g: &Ehg, labels: &LabelTable) -> DatasetStats {
    let mut type_counts = vec![0usize; g.node_types().len()];
    for t in g.node_type_ids() {
        type_counts[t.0] += 1;
    }
    DatasetStats {
        nodes: g.node_count(),
        node_types: g
            .node_types()
            .names()
            .iter()
            .cloned()
            .zip(type_counts)
            .collect(),
        features: g.features().dim(),
        relations: g
            .relations()
            .names()
            .iter()
            .enumerate()
            .map(|(r, name)| RelationStats {
                relation: name.clone(),
                edges: g.relation_edge_count(RelationId(r)),
            })
            .collect(),
        edges: g.edge_count(),
        labeled: labels.len(),
        classes: labels.num_classes(),
        train: labels.split(Split::Train).len(),
        val: labels.split(Split::Val).len(),
        test: labels.split(Split::Test).len(),
    }
}

fn print_stats(s: &DatasetStats) {
    let types: Vec<String> = s
        .node_types
        .iter()
        .map(|(n, c)| format!("{n} {c}"))
        .collect();
    println!("{:<18}{:>10}   ({})", "Nodes", s.nodes, types.join(", "));
    println!("{:<18}{:>10}", "Features", s.features);
    println!(
        "{:<18}{:>10}   (train {}, val {}, test {}; {} classes)",
        "Labeled", s.labeled, s.train, s.val, s.test, s.classes
    );
    println!("{:<18}{:>10}", "Relation", "Edges");
    for r in &s.relations {
        println!("{:<18}{:>10}", r.relation, r.edges);
    }
    println!("{:<18}{:>10}", "Total", s.edges);
}

pub fn validate(
    ctx: &Context,
    config: Option<PathBuf>,
    paths: Option<((PathBuf, PathBuf), PathBuf)>,
) -> Result<(), Failure> {
    let (g, labels, run) = match (config, paths) {
        (Some(c), _) => {
            let run = Run::open(&c, false)?;
            (run.graph.clone(), run.labels.clone(), Some(run))
        }
        (None, Some(((n, e), l))) => {
            let (g, labels) = load_data(&n, &e, &l, false)?;
            (g, labels, None)
        }
        (None, None) => {
            return Err(Failure::Usage(
                "validate needs --config or all of --nodes, --edges, --labels".into(),
            ))
        }
    };
    g.check_invariants()?;
    if labels.is_empty() {
        log::warn!("label file has no entries");
        eprintln!("warning: label file has no entries");
    }
    let s = stats(&g, &labels);
    print_stats(&s);
    if let Some(mut run) = run {
        run.write_json("dataset_stats.json", &s)?;
        run.finish(ctx, "validate")?;
    }
    Ok(())
}

pub fn train(ctx: &Context, config: &Path, plug_in: bool) -> Result<(), Failure> {
    let mut run = Run::open(config, plug_in)?;
    let mc = run.model_config()?;
    let tc = run.cfg.train_config();
    tc.validate()
        .map_err(|e| Failure::Usage(format!("[train]: {e}")))?;
    let (model, mut report) = match train_model(&run.graph, &run.labels, &mc, &tc) {
        Ok(r) => r,
        Err(gdan::Error::Diverged { epoch, last_finite }) => {
            let path = run.path("checkpoint_last_finite.json");
            last_finite.to_checkpoint().save(&path)?;
            run.finish(ctx, "train")?;
            return Err(Failure::Runtime(format!(
                "training diverged at epoch {epoch}; last finite parameters saved to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let ckpt_path = run.path("checkpoint.json");
    model.to_checkpoint().save(&ckpt_path)?;
    run.write_json("model_config.json", &mc)?;
    report.config_hash = run.hash.clone();
    report.checkpoint = Some("checkpoint.json".into());
    run.write_json("train_report.json", &report)?;
    println!(
        "trained {} epochs in {:.1}s, best epoch {}",
        report.epochs.len(),
        report.wall_time_secs,
        report.best_epoch
    );
    for split in [Split::Val, Split::Test] {
        if !run.labels.split(split).is_empty() {
            let m = evaluate(&run.graph, &run.labels, &model, split)?
                .with_run(run.cfg.seed, run.hash.clone());
            println!("{m}");
            run.write_json(&format!("metrics_{split}.json"), &m)?;
        }
    }
    if run.cfg.train.runs > 1 {
        let split = if run.labels.split(Split::Test).is_empty() {
            Split::Val
        } else {
            Split::Test
        };
        let r = repeat_runs(&run.graph, &run.labels, &mc, &tc, run.cfg.train.runs, split)?;
        println!(
            "{} runs on {split}: accuracy {}  macro-F1 {}",
            run.cfg.train.runs, r.accuracy, r.macro_f1
        );
        run.write_json("repeat_report.json", &r)?;
    }
    run.finish(ctx, "train")
}

pub fn eval(
    ctx: &Context,
    config: &Path,
    plug_in: bool,
    checkpoint: Option<PathBuf>,
    split: Split,
) -> Result<(), Failure> {
    let mut run = Run::open(config, plug_in)?;
    let model = run.load_model(checkpoint)?;
    let m =
        evaluate(&run.graph, &run.labels, &model, split)?.with_run(run.cfg.seed, run.hash.clone());
    println!("{m}");
    run.write_json(&format!("metrics_{split}.json"), &m)?;
    run.finish(ctx, "eval")
}

#[derive(Serialize)]
struct ClusterOutput<'a> {
    config_hash: &'a str,
    nodes: usize,
    #[serde(flatten)]
    report: gdan::eval::ClusterReport,
}

pub fn cluster(
    ctx: &Context,
    config: &Path,
    plug_in: bool,
    checkpoint: Option<PathBuf>,
    k: Option<usize>,
    repeats: usize,
) -> Result<(), Failure> {
    let mut run = Run::open(config, plug_in)?;
    let model = run.load_model(checkpoint)?;
    let pass = model.forward(&run.graph, run.graph.features().values(), Mode::Eval, 0)?;
    let emb_path = run.path("embeddings.csv");
    write_embeddings(&emb_path, run.graph.node_ids(), &pass.embedding)?;

    let labeled = run.labels.entries();
    if labeled.is_empty() {
        return Err(Failure::Runtime("clustering needs labeled nodes".into()));
    }
    let nodes: Vec<usize> = labeled.iter().map(|e| e.node).collect();
    let classes: Vec<usize> = labeled.iter().map(|e| e.class).collect();
    let k = k.unwrap_or(run.labels.num_classes());
    let report = kmeans_cluster_eval(
        &pass.embedding.gather_rows(&nodes),
        &classes,
        k,
        repeats,
        run.cfg.seed,
    )?;
    println!(
        "NMI {:.4}  ARI {:.4}  (k = {k}, {repeats} repeats)",
        report.nmi, report.ari
    );
    let out = ClusterOutput {
        config_hash: &run.hash.clone(),
        nodes: nodes.len(),
        report,
    };
    run.write_json("cluster.json", &out)?;
    run.finish(ctx, "cluster")
}

pub fn explain(ctx: &Context, config: &Path, plug_in: bool, loo: bool) -> Result<(), Failure> {
    let mut run = Run::open(config, plug_in)?;
    let ds = run.cfg.distshift_config();
    let (table, name) = if loo {
        (loo_scores(&run.graph, &run.labels, &ds.proxy)?, "loo")
    } else {
        ds.sampler
            .validate()
            .map_err(|e| Failure::Usage(format!("[explain]: {e}")))?;
        (distshift_scores(&run.graph, &run.labels, &ds)?, "distshift")
    };
    let path = run.path(&format!("edge_scores_{name}.csv"));
    table.write_csv(&path, &run.graph)?;
    println!("scored {} directed edges with {name}", table.len());
    run.finish(ctx, "explain")
}

pub fn curve(
    ctx: &Context,
    config: &Path,
    plug_in: bool,
    scores: &Path,
    mode: CurveMode,
) -> Result<(), Failure> {
    let mut run = Run::open(config, plug_in)?;
    let mc = run.model_config()?;
    let tc = run.cfg.train_config();
    let cc = run.cfg.curve_config();
    cc.fractions()
        .map_err(|e| Failure::Usage(format!("[curve]: {e}")))?;
    let table = EdgeScoreTable::read_csv(scores, &run.graph)?;
    let result = edge_curve(
        &run.graph,
        &run.labels,
        &table,
        mode,
        &cc,
        |g, labels, seed| {
            let tc = gdan::trainer::TrainConfig { seed, ..tc.clone() };
            let (model, _) = train_model(g, labels, &mc, &tc)?;
            evaluate(g, labels, &model, Split::Test)
        },
    )?;
    for p in &result.points {
        println!(
            "{:>5.1}%  edges {:>8}  accuracy {}",
            100.0 * p.fraction,
            p.edges,
            p.accuracy
        );
    }
    let csv_path = run.path(&format!("curve_{mode}.csv"));
    result.write_csv(&csv_path)?;
    run.write_json(&format!("curve_{mode}.json"), &result)?;
    run.finish(ctx, "curve")
}
