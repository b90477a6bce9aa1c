mod common;

use std::collections::BTreeSet;

use gdan::hetgraph::{load_graph, write_graph, Ehg, LoadOptions, RelationId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph(seed: u64, n: usize, m: usize) -> Ehg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_graph(&mut rng, n, m, 3, 2, 3)
}

/// Edges as `(src id, dst id, relation name)` with endpoints sorted, so two
/// graphs over the same ids compare regardless of edge order.
fn edge_set(g: &Ehg) -> BTreeSet<(String, String, String)> {
    g.edges()
        .iter()
        .map(|e| {
            let (a, b) = (&g.node_ids()[e.src], &g.node_ids()[e.dst]);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            (
                a.clone(),
                b.clone(),
                g.relations().name(e.relation.0).to_string(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reverse_adjacency_is_the_transpose(seed in any::<u64>(), n in 1usize..40, m in 0usize..120) {
        let g = graph(seed, n, m);
        prop_assert!(g.check_invariants().is_ok());
        for r in 0..g.relations().len() {
            let (fwd, rev) = (g.forward_csr(RelationId(r)), g.reverse_csr(RelationId(r)));
            prop_assert_eq!(fwd.edge_count(), rev.edge_count());
            prop_assert_eq!(fwd.edge_count(), g.relation_edge_count(RelationId(r)));
            for i in 0..n {
                let (nbrs, ids) = fwd.row(i);
                for (&j, &id) in nbrs.iter().zip(ids) {
                    let (back, back_ids) = rev.row(j);
                    let found = back.iter().zip(back_ids).any(|(&k, &bid)| k == i && bid == id);
                    prop_assert!(found, "edge {} ({} -> {}) missing from reverse", id, i, j);
                }
            }
        }
    }

    #[test]
    fn degrees_sum_to_twice_the_edge_count(seed in any::<u64>(), n in 1usize..40, m in 0usize..120) {
        let g = graph(seed, n, m);
        let total: usize = (0..n).map(|i| g.degree(i)).sum();
        prop_assert_eq!(total, 2 * g.edge_count());
        let nb = common::neighbor_lists(&g);
        for (i, list) in nb.iter().enumerate() {
            prop_assert_eq!(g.degree(i), list.len());
            prop_assert!(g.norm_degree(i) >= 1.0);
        }
    }

    #[test]
    fn write_then_load_is_exact(seed in any::<u64>(), n in 4usize..30, m in 0usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, n, m, 2, 2, 3);
        let labels = common::random_labels(&mut rng, n, 3);
        let dir = tempfile::tempdir().unwrap();
        let files = write_graph(&g, &labels, dir.path()).unwrap();
        let (back, back_labels) =
            load_graph(&files.nodes, &files.edges, &files.labels, &LoadOptions::default()).unwrap();
        prop_assert_eq!(back.node_ids(), g.node_ids());
        for i in 0..n {
            prop_assert_eq!(
                back.node_types().name(back.node_type(i).0),
                g.node_types().name(g.node_type(i).0)
            );
        }
        let bits = |g: &Ehg| g.features().values().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&g));
        prop_assert_eq!(edge_set(&back), edge_set(&g));
        prop_assert_eq!(back_labels.entries(), labels.entries());
    }

    #[test]
    fn nested_induction_equals_intersection(
        seed in any::<u64>(),
        n in 2usize..40,
        m in 0usize..120,
        a in proptest::collection::vec(any::<bool>(), 40),
        b in proptest::collection::vec(any::<bool>(), 40),
    ) {
        let g = graph(seed, n, m);
        let set_a: Vec<usize> = (0..n).filter(|&i| a[i]).collect();
        let both: Vec<usize> = (0..n).filter(|&i| a[i] && b[i]).collect();
        prop_assume!(!both.is_empty());
        let outer = g.induced_subgraph(&set_a).unwrap();
        let inner_local: Vec<usize> = outer
            .node_map
            .iter()
            .enumerate()
            .filter(|(_, &p)| b[p])
            .map(|(k, _)| k)
            .collect();
        let nested = outer.graph.induced_subgraph(&inner_local).unwrap();
        let direct = g.induced_subgraph(&both).unwrap();

        let composed: Vec<usize> = nested.node_map.iter().map(|&k| outer.node_map[k]).collect();
        prop_assert_eq!(&composed, &direct.node_map);
        let composed_edges: BTreeSet<usize> =
            nested.edge_map.iter().map(|&e| outer.edge_map[e]).collect();
        let direct_edges: BTreeSet<usize> = direct.edge_map.iter().copied().collect();
        prop_assert_eq!(composed_edges, direct_edges);
        prop_assert_eq!(edge_set(&nested.graph), edge_set(&direct.graph));
        prop_assert_eq!(nested.graph.features(), direct.graph.features());
    }

    #[test]
    fn keeping_every_edge_changes_nothing(seed in any::<u64>(), n in 1usize..30, m in 0usize..80) {
        let g = graph(seed, n, m);
        let same = g.with_edges(|_| true).unwrap();
        prop_assert_eq!(same.edges(), g.edges());
        prop_assert_eq!(same.messages(), g.messages());
    }
}

#[test]
fn duplicate_and_reversed_edges_collapse() {
    let mut b = gdan::hetgraph::GraphBuilder::new(1).relations(&["r", "s"]);
    for _ in 0..3 {
        b.add_node("v", &[0.0]);
    }
    b.add_edge(0, 1, "r");
    b.add_edge(1, 0, "r");
    b.add_edge(0, 1, "r");
    b.add_edge(0, 1, "s");
    b.add_edge(2, 2, "r");
    let g = b.build().unwrap();
    assert_eq!(g.edge_count(), 2);
    assert_eq!(g.degree(0), 2);
    assert_eq!(g.degree(2), 0);
    assert_eq!(g.norm_degree(2), 1.0);
}
