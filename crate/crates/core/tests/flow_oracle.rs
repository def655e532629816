mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_force_cost, random_dag, COST_SCALE};
use trackflow::flow::{solve_paths, solve_paths_with, FlowGraph, Mode, PathSearch, Vertex};
use trackflow::Error;

fn scaled(cost: f64) -> i64 {
    (cost * COST_SCALE).round() as i64
}

#[test]
fn matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let dag = random_dag(&mut rng, 8);
        let g = dag.to_graph();
        for mode in [Mode::Free, Mode::CoverAll] {
            let expected = brute_force_cost(&dag, mode);
            for search in [PathSearch::Potentials, PathSearch::BellmanFord] {
                match (solve_paths_with(&g, mode, search), expected) {
                    (Ok(sol), Some(best)) => {
                        assert_eq!(scaled(sol.cost), best, "{mode:?} {search:?} {dag:?}");
                        assert_eq!(dag.paths_cost(&sol.paths), Some(best));
                    }
                    (Err(Error::Infeasible(_)), None) => {}
                    (got, want) => panic!("{mode:?} {search:?}: {got:?} vs {want:?} on {dag:?}"),
                }
            }
        }
    }
}

#[test]
fn cover_all_reports_uncoverable_nodes() {
    let mut g = FlowGraph::new();
    let a = g.add_node(0.0, true);
    let b = g.add_node(0.0, true);
    g.add_edge(Vertex::Source, Vertex::Node(a), 1.0);
    g.add_edge(Vertex::Node(a), Vertex::Sink, 1.0);
    g.add_edge(Vertex::Source, Vertex::Node(b), 1.0);
    match solve_paths(&g, Mode::CoverAll) {
        Err(Error::Infeasible(missing)) => assert_eq!(missing, vec![b]),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn rejects_cycles_and_bad_edges() {
    let mut g = FlowGraph::new();
    let a = g.add_node(0.0, false);
    let b = g.add_node(0.0, false);
    g.add_edge(Vertex::Node(a), Vertex::Node(b), 0.0);
    g.add_edge(Vertex::Node(b), Vertex::Node(a), 0.0);
    assert!(matches!(solve_paths(&g, Mode::Free), Err(Error::Cyclic)));

    let mut g = FlowGraph::new();
    g.add_node(0.0, false);
    g.add_edge(Vertex::Source, Vertex::Sink, 0.0);
    assert!(solve_paths(&g, Mode::Free).is_err());
}

#[test]
fn empty_graph_is_empty_flow() {
    let sol = solve_paths(&FlowGraph::new(), Mode::Free).unwrap();
    assert!(sol.paths.is_empty());
    assert_eq!(sol.cost, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn free_flow_never_costs_more_than_nothing(seed in any::<u64>()) {
        let dag = random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 7);
        let sol = solve_paths(&dag.to_graph(), Mode::Free).unwrap();
        prop_assert!(scaled(sol.cost) <= 0);
        prop_assert_eq!(dag.paths_cost(&sol.paths), Some(scaled(sol.cost)));
    }

    #[test]
    fn cover_all_uses_every_mandatory_node(seed in any::<u64>()) {
        let dag = random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 7);
        if let Ok(sol) = solve_paths(&dag.to_graph(), Mode::CoverAll) {
            let used: Vec<usize> = sol.paths.iter().flatten().copied().collect();
            for v in 0..dag.len() {
                prop_assert!(!dag.must[v] || used.contains(&v));
            }
            prop_assert!(dag.paths_cost(&sol.paths).is_some());
        }
    }

    #[test]
    fn search_strategies_agree(seed in any::<u64>()) {
        let g = random_dag(&mut ChaCha8Rng::seed_from_u64(seed), 8).to_graph();
        for mode in [Mode::Free, Mode::CoverAll] {
            let a = solve_paths_with(&g, mode, PathSearch::Potentials).map(|s| scaled(s.cost)).ok();
            let b = solve_paths_with(&g, mode, PathSearch::BellmanFord).map(|s| scaled(s.cost)).ok();
            prop_assert_eq!(a, b);
        }
    }
}
