mod common;

use gdan::distshift::{EdgeScore, EdgeScoreTable};
use gdan::eval::{accuracy, ari, auc_macro_ovr, edge_curve, macro_f1, nmi, CurveConfig, CurveMode};
use gdan::hetgraph::{Ehg, LabelTable, Split};
use gdan::model::GdanConfig;
use gdan::nn::ops::softmax_rows;
use gdan::trainer::{evaluate, train, TrainConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn confusion(preds: &[usize], labels: &[usize], c: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; c]; c];
    for (&p, &y) in preds.iter().zip(labels) {
        m[y][p] += 1;
    }
    m
}

fn pairs(x: usize) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_metrics_match_the_confusion_matrix(seed in any::<u64>(), c in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100;
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        // Coarse scores so ties occur.
        let logits = common::random_tensor(&mut rng, n, c, 2.0).map(|v| (v * 4.0).round() / 4.0);
        let probs = softmax_rows(&logits).unwrap();
        let preds = probs.argmax_rows();
        let m = confusion(&preds, &labels, c);

        let diag: usize = (0..c).map(|k| m[k][k]).sum();
        prop_assert_eq!(accuracy(&preds, &labels).unwrap(), diag as f64 / n as f64);

        let f1: f64 = (0..c)
            .map(|k| {
                let tp = m[k][k];
                let fp: usize = (0..c).filter(|&y| y != k).map(|y| m[y][k]).sum();
                let fn_: usize = (0..c).filter(|&p| p != k).map(|p| m[k][p]).sum();
                if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 }
            })
            .sum::<f64>()
            / c as f64;
        prop_assert_eq!(macro_f1(&preds, &labels, c).unwrap(), f1);

        // One-vs-rest AUC by counting ordered positive/negative pairs.
        let present: Vec<usize> = (0..c).filter(|k| labels.contains(k)).collect();
        let mut total = 0.0;
        for &k in &present {
            let (mut wins, mut count) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    if labels[i] == k && labels[j] != k {
                        let (a, b) = (probs.get(i, k), probs.get(j, k));
                        wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                        count += 1.0;
                    }
                }
            }
            total += wins / count;
        }
        let auc = auc_macro_ovr(&probs, &labels).unwrap();
        prop_assert_eq!(auc, total / present.len() as f64);
        for v in [auc, f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn cluster_scores_match_pair_counting(seed in any::<u64>(), ka in 1usize..5, kb in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100;
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kb)).collect();
        let (mut both, mut in_a, mut in_b) = (0usize, 0usize, 0usize);
        for i in 0..n {
            for j in i + 1..n {
                let (sa, sb) = (a[i] == a[j], b[i] == b[j]);
                both += usize::from(sa && sb);
                in_a += usize::from(sa);
                in_b += usize::from(sb);
            }
        }
        let total = pairs(n);
        let expected = in_a as f64 * in_b as f64 / total;
        let max = (in_a as f64 + in_b as f64) / 2.0;
        let reference = if max == expected { 1.0 } else { (both as f64 - expected) / (max - expected) };
        prop_assert_eq!(ari(&a, &b).unwrap(), reference);

        // NMI from the contingency table by definition.
        let count = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).count() as f64;
        let h = |k: usize, part: &[usize]| -> f64 {
            (0..k).map(|c| count(&|i| part[i] == c) / n as f64).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
        };
        let (ha, hb) = (h(ka, &a), h(kb, &b));
        let mut mi = 0.0;
        for x in 0..ka {
            for y in 0..kb {
                let pxy = count(&|i| a[i] == x && b[i] == y) / n as f64;
                if pxy > 0.0 {
                    let px = count(&|i| a[i] == x) / n as f64;
                    let py = count(&|i| b[i] == y) / n as f64;
                    mi += pxy * (pxy / (px * py)).ln();
                }
            }
        }
        let reference = if ha == 0.0 && hb == 0.0 { 1.0 } else { (mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0) };
        prop_assert!((nmi(&a, &b).unwrap() - reference).abs() < 1e-12);
    }

    #[test]
    fn cluster_scores_ignore_cluster_ids(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<usize> = (0..80).map(|_| rng.gen_range(0..k)).collect();
        let b: Vec<usize> = (0..80).map(|_| rng.gen_range(0..4)).collect();
        let mut ids: Vec<usize> = (0..k).collect();
        ids.shuffle(&mut rng);
        let relabeled: Vec<usize> = a.iter().map(|&c| ids[c] + 10).collect();
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&relabeled, &b).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&a, &b).unwrap() - ari(&relabeled, &b).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn curve_fractions_step_in_five_percent() {
    let f = CurveConfig::default().fractions().unwrap();
    assert_eq!(f.len(), 21);
    assert_eq!(f[0], 0.0);
    assert_eq!(f[20], 1.0);
    assert!(f.windows(2).all(|w| (w[1] - w[0] - 0.05).abs() < 1e-12));
}

#[test]
fn curve_endpoints_agree_with_the_intact_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = common::random_graph(&mut rng, 30, 60, 2, 1, 4);
    let labels = common::random_labels(&mut rng, 30, 2);
    let scores = EdgeScoreTable::new(
        g.edges()
            .iter()
            .enumerate()
            .map(|(id, e)| EdgeScore {
                edge: id,
                src: e.src,
                dst: e.dst,
                relation: e.relation,
                score: rng.gen(),
                n_subgraphs: 1,
            })
            .collect(),
    );
    let model_cfg = GdanConfig::for_graph(&g, 6, 4, 2);
    let train_cfg = |seed| TrainConfig {
        epochs: 15,
        seed,
        ..TrainConfig::default()
    };
    let run = |g: &Ehg, l: &LabelTable, seed: u64| {
        let (m, _) = train(g, l, &model_cfg, &train_cfg(seed))?;
        evaluate(g, l, &m, Split::Test)
    };
    let cfg = CurveConfig {
        step: 0.5,
        seeds: 2,
        seed: 3,
    };
    let del = edge_curve(&g, &labels, &scores, CurveMode::Delete, &cfg, run).unwrap();
    let add = edge_curve(&g, &labels, &scores, CurveMode::Add, &cfg, run).unwrap();
    assert_eq!(del.points[0].accuracy, add.points[2].accuracy);
    assert_eq!(del.points[0].macro_f1, add.points[2].macro_f1);
    assert_eq!(del.points[2].accuracy, add.points[0].accuracy);
    assert_eq!(del.points[0].edges, g.edge_count());
    assert_eq!(del.points[2].edges, 0);
    assert_eq!(del.points[1].edges + add.points[1].edges, g.edge_count());

    let intact: Vec<f64> = [3, 4]
        .iter()
        .map(|&s| run(&g, &labels, s).unwrap().accuracy)
        .collect();
    let mean = (intact[0] + intact[1]) / 2.0;
    assert_eq!(del.points[0].accuracy.mean, mean);
}
