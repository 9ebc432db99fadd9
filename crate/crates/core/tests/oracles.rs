mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wscj_core::dp::{self, DpLimits};
use wscj_core::genome::{Adjacency, Extremity};
use wscj_core::graph::{build_global_graph, candidate_adjacencies, connected_components};
use wscj_core::ilp::{self, ModelOptions};
use wscj_core::random::{random_instance, InstanceParams};
use wscj_core::weights::{boltzmann_weights, fitch_scj};
use wscj_core::{dcj_distance, scj_distance, Alpha, Genome, Threshold};

fn alphas() -> Vec<Alpha> {
    [(0, 1), (1, 4), (1, 2), (3, 4), (1, 1)].iter().map(|&(n, d)| Alpha::new(n, d).unwrap()).collect()
}

#[test]
fn solvers_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 40 {
        let (phylo, weights) = random_instance(&InstanceParams::default(), &mut rng).unwrap();
        let graph = build_global_graph(&phylo, &candidate_adjacencies(&phylo), &weights, Threshold::from_micros(0));
        for c in connected_components(&graph) {
            let adjs: Vec<Adjacency> = c.edges().iter().map(|(a, _)| *a).collect();
            let Some(all) = common::enumerate(&phylo, &weights, &adjs, 20_000) else { continue };
            for alpha in alphas() {
                let expected = common::optimum(&all, alpha);
                let (sol, _) = dp::solve_component(&c, &phylo, &weights, alpha, DpLimits { cap: u128::MAX }).unwrap();
                assert_eq!(sol.objective.cost, expected, "dp at alpha {alpha}");
                let model = ilp::build_model(&c, &phylo, &weights, alpha, ModelOptions::default());
                assert_eq!(ilp::solve_bb(&model).unwrap().objective, expected, "ilp at alpha {alpha}");
            }
            checked += 1;
        }
    }
}

#[test]
fn branch_and_bound_beyond_the_cap() {
    // Components with ten or more extremities, past a cap the DP refuses.
    let limits = DpLimits { cap: 1_000 };
    let params = InstanceParams { min_leaves: 3, max_leaves: 4, markers: 6, max_ops: 4, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 5 {
        let (phylo, weights) = random_instance(&params, &mut rng).unwrap();
        let graph = build_global_graph(&phylo, &candidate_adjacencies(&phylo), &weights, Threshold::from_micros(0));
        for c in connected_components(&graph) {
            if c.vertices().len() < 10 || limits.admits(&c) {
                continue;
            }
            assert!(dp::solve_component(&c, &phylo, &weights, Alpha::new(0, 1).unwrap(), limits).is_err());
            let adjs: Vec<Adjacency> = c.edges().iter().map(|(a, _)| *a).collect();
            let Some(all) = common::enumerate(&phylo, &weights, &adjs, 300_000) else { continue };
            for alpha in alphas() {
                let model = ilp::build_model(&c, &phylo, &weights, alpha, ModelOptions::default());
                assert_eq!(ilp::solve_bb(&model).unwrap().objective, common::optimum(&all, alpha));
            }
            checked += 1;
        }
    }
}

#[test]
fn fitch_histories_are_parsimonious() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let (phylo, _) = random_instance(&InstanceParams::default(), &mut rng).unwrap();
        let tree = phylo.tree();
        let all: BTreeSet<Adjacency> = tree.leaves().flat_map(|l| phylo.leaf_adjacencies(l).iter().copied()).collect();
        for a in &all {
            let state = fitch_scj(&phylo, a);
            for l in tree.leaves() {
                assert_eq!(state[l], phylo.leaf_adjacencies(l).contains(a));
            }
            let changes = tree.edges().filter(|&(u, v)| state[u] != state[v]).count() as u64;
            assert_eq!(changes, common::min_history_changes(&phylo, a));
        }
    }
}

#[test]
fn boltzmann_matches_enumeration() {
    let params = InstanceParams { min_leaves: 6, max_leaves: 9, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let (phylo, _) = random_instance(&params, &mut rng).unwrap();
        let tree = phylo.tree();
        let all: BTreeSet<Adjacency> = tree.leaves().flat_map(|l| phylo.leaf_adjacencies(l).iter().copied()).collect();
        for a in &all {
            for kt in [0.1, 1.0] {
                let got = boltzmann_weights(&phylo, a, kt).unwrap();
                let want = common::brute_boltzmann(&phylo, a, kt);
                for v in tree.internal_nodes() {
                    assert!((got[v] - want[v]).abs() <= 1e-9, "{} vs {}", got[v], want[v]);
                }
            }
        }
    }
}

fn genome_strategy(markers: u32) -> impl Strategy<Value = BTreeSet<Adjacency>> {
    // A random order of all extremities, paired greedily; pairs on the same
    // marker or dropped by the mask become telomeres.
    let n = 2 * markers as usize;
    (Just(()).prop_perturb(move |_, mut rng| {
        let mut xs: Vec<Extremity> = (1..=markers).flat_map(|m| [Extremity::tail(m), Extremity::head(m)]).collect();
        for i in (1..xs.len()).rev() {
            xs.swap(i, rng.random_range(0..=i));
        }
        xs
    }), proptest::collection::vec(any::<bool>(), n / 2))
        .prop_map(|(xs, mask)| {
            xs.chunks(2)
                .zip(mask)
                .filter(|(_, keep)| *keep)
                .filter_map(|(p, _)| Adjacency::new(p[0], p[1]).ok())
                .collect()
        })
}

fn genome(adjs: BTreeSet<Adjacency>, markers: u32) -> Genome {
    Genome::new(adjs, Arc::new((1..=markers).collect())).unwrap()
}

#[test]
fn dcj_matches_search() {
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig { cases: 150, ..Default::default() });
    runner
        .run(&(genome_strategy(4), genome_strategy(4)), |(a, b)| {
            let d = dcj_distance(&genome(a.clone(), 4), &genome(b.clone(), 4)).unwrap();
            prop_assert_eq!(d, common::dcj_bfs(&a, &b, 4));
            Ok(())
        })
        .unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..Default::default() })]

    #[test]
    fn metric_axioms(a in genome_strategy(6), b in genome_strategy(6), c in genome_strategy(6)) {
        let (ga, gb, gc) = (genome(a.clone(), 6), genome(b.clone(), 6), genome(c, 6));
        let ab = scj_distance(&ga, &gb).unwrap();
        prop_assert_eq!(scj_distance(&ga, &ga).unwrap(), 0);
        prop_assert_eq!(ab == 0, a == b);
        prop_assert_eq!(ab, scj_distance(&gb, &ga).unwrap());
        prop_assert!(scj_distance(&ga, &gc).unwrap() <= ab + scj_distance(&gb, &gc).unwrap());
        prop_assert!(dcj_distance(&ga, &gb).unwrap() <= ab);
    }
}
