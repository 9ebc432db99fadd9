//! Adjacency weighting and single-adjacency baselines: the Fitch gain/loss
//! labeling, Boltzmann presence probabilities over gain/loss scenarios, and
//! the per-node maximum-weight matching.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genome::{check_consistency, scj_count, Adjacency, Extremity};
use crate::graph::GlobalAdjacencyGraph;
use crate::labeling::Labeling;
use crate::score::{Weight, WeightTable};
use crate::tree::{NodeId, Phylogeny};

/// Default Boltzmann temperature.
pub const DEFAULT_KT: f64 = 0.1;

fn leaf_presence(phylo: &Phylogeny, adj: &Adjacency, v: NodeId) -> bool {
    phylo.leaf_adjacencies(v).contains(adj)
}

/// One most parsimonious gain/loss history of `adj`, as a presence bit per
/// node. Bottom-up minimal change counts per state; the root takes absence
/// when both states are optimal, and each other node keeps its parent's state
/// whenever that state is optimal for its subtree given the parent.
pub fn fitch_scj(phylo: &Phylogeny, adj: &Adjacency) -> Vec<bool> {
    let tree = phylo.tree();
    let mut cost = vec![[0u64; 2]; tree.len()];
    for &v in tree.postorder() {
        if tree.is_leaf(v) {
            cost[v] = if leaf_presence(phylo, adj, v) { [u64::MAX, 0] } else { [0, u64::MAX] };
            continue;
        }
        for s in 0..2 {
            cost[v][s] = tree
                .children(v)
                .iter()
                .map(|&c| cost[c][s].min(cost[c][1 - s].saturating_add(1)))
                .sum();
        }
    }
    let mut state = vec![false; tree.len()];
    let root = tree.root();
    state[root] = cost[root][1] < cost[root][0];
    for v in tree.preorder() {
        if v == root {
            continue;
        }
        let p = usize::from(state[tree.parent(v).expect("non-root")]);
        let stay = cost[v][p];
        let flip = cost[v][1 - p].saturating_add(1);
        state[v] = if stay <= flip { p == 1 } else { p == 0 };
    }
    state
}

/// Applies [`fitch_scj`] to every leaf adjacency and unions the results per
/// node. Returns the labeling and its total SCJ cost.
pub fn fitch_scj_labeling(phylo: &Phylogeny) -> Result<(Labeling, u64)> {
    let tree = phylo.tree();
    let all: BTreeSet<Adjacency> =
        tree.leaves().flat_map(|l| phylo.leaf_adjacencies(l).iter().copied()).collect();
    let mut labeling = Labeling::leaves_only(phylo);
    for adj in &all {
        let state = fitch_scj(phylo, adj);
        for v in tree.internal_nodes() {
            if state[v] {
                labeling.set_mut(v).insert(*adj);
            }
        }
    }
    for v in tree.internal_nodes() {
        let check = check_consistency(labeling.set(v));
        if !check.consistent {
            return Err(Error::internal(format!(
                "Fitch labeling conflicts at `{}` on {}",
                tree.name(v),
                check.conflicts[0]
            )));
        }
    }
    let cost = tree.edges().map(|(u, v)| scj_count(labeling.set(u), labeling.set(v)) as u64).sum();
    Ok((labeling, cost))
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Probability that `adj` is present at each node, under the distribution
/// giving every assignment of presence bits to internal nodes a probability
/// proportional to `exp(-changes / kT)`. Leaves are clamped to their genomes
/// and report 0 or 1.
pub fn boltzmann_weights(phylo: &Phylogeny, adj: &Adjacency, kt: f64) -> Result<Vec<f64>> {
    if !(kt > 0.0 && kt.is_finite()) {
        return Err(Error::input(format!("kT must be positive, got {kt}")));
    }
    let tree = phylo.tree();
    let n = tree.len();
    let edge = |s: usize, t: usize| if s == t { 0.0 } else { -1.0 / kt };
    let neg = f64::NEG_INFINITY;

    // inside[v][s]: log of the summed factors below v with v in state s.
    // up[c][s]: message from child c to its parent in state s.
    let mut inside = vec![[0.0f64; 2]; n];
    let mut up = vec![[0.0f64; 2]; n];
    for &v in tree.postorder() {
        if tree.is_leaf(v) {
            inside[v] = if leaf_presence(phylo, adj, v) { [neg, 0.0] } else { [0.0, neg] };
        } else {
            let mut acc = [0.0; 2];
            for &c in tree.children(v) {
                acc[0] += up[c][0];
                acc[1] += up[c][1];
            }
            inside[v] = acc;
        }
        for s in 0..2 {
            up[v][s] = log_add(edge(s, 0) + inside[v][0], edge(s, 1) + inside[v][1]);
        }
    }
    let root = tree.root();
    let log_z = log_add(inside[root][0], inside[root][1]);
    if !log_z.is_finite() {
        return Err(Error::internal("partition function vanished"));
    }
    // outside[v][s]: log of the summed factors outside the subtree of v.
    let mut outside = vec![[0.0f64; 2]; n];
    for v in tree.preorder() {
        for &c in tree.children(v) {
            let mut out = [neg; 2];
            for s in 0..2 {
                // Messages are finite, so dividing out the child's is safe.
                let rest = outside[v][s] + inside[v][s] - up[c][s];
                for (t, slot) in out.iter_mut().enumerate() {
                    *slot = log_add(*slot, rest + edge(s, t));
                }
            }
            outside[c] = out;
        }
    }
    let mut w = vec![0.0; n];
    for v in 0..n {
        w[v] = if tree.is_leaf(v) {
            f64::from(u8::from(leaf_presence(phylo, adj, v)))
        } else {
            let p1 = (inside[v][1] + outside[v][1] - log_z).exp();
            let p0 = (inside[v][0] + outside[v][0] - log_z).exp();
            // Renormalize so the two states sum to one.
            (p1 / (p0 + p1)).clamp(0.0, 1.0)
        };
    }
    Ok(w)
}

/// Boltzmann weights of every leaf adjacency at every internal node,
/// quantized to the weight grid. Zero weights are stored too, so the table
/// lists every candidate.
pub fn boltzmann_table(phylo: &Phylogeny, kt: f64) -> Result<WeightTable> {
    let tree = phylo.tree();
    let all: Vec<Adjacency> = tree
        .leaves()
        .flat_map(|l| phylo.leaf_adjacencies(l).iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let per_adj: Vec<Vec<f64>> =
        all.par_iter().map(|a| boltzmann_weights(phylo, a, kt)).collect::<Result<_>>()?;
    let mut table = WeightTable::new();
    for (a, w) in all.iter().zip(per_adj) {
        for v in tree.internal_nodes() {
            table.insert(v, *a, Weight::quantize(w[v])?);
        }
    }
    Ok(table)
}

/// Result of matching every internal node independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchingLabeling {
    pub labeling: Labeling,
    /// Weight kept by the matchings, in micro-units.
    pub kept_micros: u64,
    /// Table weight at internal nodes left out of the labeling.
    pub discarded_micros: u64,
}

/// Maximum-weight matching of the edges of `graph` annotated with `v`,
/// weighted by the table at `v`.
pub fn max_weight_matching_at(
    graph: &GlobalAdjacencyGraph,
    weights: &WeightTable,
    v: NodeId,
) -> BTreeSet<Adjacency> {
    let edges: Vec<(Adjacency, u32)> = graph
        .edges()
        .iter()
        .filter(|(_, nodes)| nodes.binary_search(&v).is_ok())
        .map(|(a, _)| (*a, weights.get(v, a).micros()))
        .collect();
    max_weight_matching(&edges)
}

/// Maximum-weight matching over adjacencies with micro-unit weights.
/// Zero-weight adjacencies are never chosen.
pub fn max_weight_matching(edges: &[(Adjacency, u32)]) -> BTreeSet<Adjacency> {
    let edges: Vec<(Adjacency, u32)> = edges.iter().copied().filter(|&(_, w)| w > 0).collect();
    if edges.is_empty() {
        return BTreeSet::new();
    }
    let index: BTreeMap<Extremity, usize> = edges
        .iter()
        .flat_map(|(a, _)| a.extremities())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, x)| (x, i))
        .collect();
    // Doubled so that the dual updates stay integral.
    let input: mwmatching::Edges = edges
        .iter()
        .map(|(a, w)| (index[&a.a()], index[&a.b()], 2 * *w as i32))
        .collect();
    let mate = mwmatching::Matching::new(input).solve();
    edges
        .iter()
        .filter(|(a, _)| mate[index[&a.a()]] == index[&a.b()])
        .map(|(a, _)| *a)
        .collect()
}

pub fn max_weight_matching_labeling(
    phylo: &Phylogeny,
    graph: &GlobalAdjacencyGraph,
    weights: &WeightTable,
) -> MatchingLabeling {
    let tree = phylo.tree();
    let mut labeling = Labeling::leaves_only(phylo);
    let mut kept = 0u64;
    for v in tree.internal_nodes() {
        let m = max_weight_matching_at(graph, weights, v);
        kept += m.iter().map(|a| u64::from(weights.get(v, a).micros())).sum::<u64>();
        *labeling.set_mut(v) = m;
    }
    let total: u64 = weights
        .iter()
        .filter(|(v, _, _)| !tree.is_leaf(*v))
        .map(|(_, _, w)| u64::from(w.micros()))
        .sum();
    MatchingLabeling { labeling, kept_micros: kept, discarded_micros: total - kept }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::Genome;
    use crate::tree::tests::tree_from;
    use std::sync::Arc;

    fn adj(x: &str, y: &str) -> Adjacency {
        Adjacency::new(x.parse().unwrap(), y.parse().unwrap()).unwrap()
    }

    fn phylo(layout: &[(&str, Option<&str>)], present: &[&str], other: &[(&str, Adjacency)]) -> Phylogeny {
        let e = adj("1h", "2t");
        let u = Arc::new((1..=4).collect::<BTreeSet<u32>>());
        let t = tree_from(layout);
        let g = t
            .leaves()
            .map(|l| {
                let name = t.name(l);
                let mut s = BTreeSet::new();
                if present.contains(&name) {
                    s.insert(e);
                }
                for (n, a) in other {
                    if *n == name {
                        s.insert(*a);
                    }
                }
                (name.to_string(), Genome::new(s, u.clone()).unwrap())
            })
            .collect();
        Phylogeny::new(t, g).unwrap()
    }

    const QUARTET: &[(&str, Option<&str>)] = &[
        ("R", None),
        ("X", Some("R")),
        ("Y", Some("R")),
        ("A", Some("X")),
        ("B", Some("X")),
        ("C", Some("Y")),
        ("D", Some("Y")),
    ];

    fn changes(p: &Phylogeny, s: &[bool]) -> usize {
        p.tree().edges().filter(|&(u, v)| s[u] != s[v]).count()
    }

    #[test]
    fn fitch_examples() {
        let e = adj("1h", "2t");
        let all = phylo(QUARTET, &["A", "B", "C", "D"], &[]);
        let s = fitch_scj(&all, &e);
        assert!(s.iter().all(|&b| b));
        assert_eq!(changes(&all, &s), 0);

        let ab = phylo(QUARTET, &["A", "B"], &[]);
        let s = fitch_scj(&ab, &e);
        let t = ab.tree();
        assert!(s[t.find("X").unwrap()]);
        assert!(!s[t.find("R").unwrap()]);
        assert!(!s[t.find("Y").unwrap()]);
        assert_eq!(changes(&ab, &s), 1);

        let one = phylo(QUARTET, &["C"], &[]);
        let s = fitch_scj(&one, &e);
        assert!(t.internal_nodes().all(|v| !s[v]));
        assert_eq!(changes(&one, &s), 1);
    }

    #[test]
    fn fitch_labeling_of_identical_leaves_is_free() {
        let p = phylo(QUARTET, &["A", "B", "C", "D"], &[]);
        let (lab, cost) = fitch_scj_labeling(&p).unwrap();
        assert_eq!(cost, 0);
        assert!(p.tree().internal_nodes().all(|v| lab.set(v).len() == 1));
    }

    /// Enumerates all internal assignments.
    fn brute(p: &Phylogeny, kt: f64) -> Vec<f64> {
        let t = p.tree();
        let internal: Vec<NodeId> = t.internal_nodes().collect();
        let e = adj("1h", "2t");
        let mut z = 0.0;
        let mut num = vec![0.0; t.len()];
        for bits in 0u32..1 << internal.len() {
            let mut s: Vec<bool> = (0..t.len()).map(|v| p.leaf_adjacencies(v).contains(&e)).collect();
            for (k, &v) in internal.iter().enumerate() {
                s[v] = bits >> k & 1 == 1;
            }
            let b = (-(changes(p, &s) as f64) / kt).exp();
            z += b;
            for &v in &internal {
                if s[v] {
                    num[v] += b;
                }
            }
        }
        internal.iter().fold(vec![0.0; t.len()], |mut w, &v| {
            w[v] = num[v] / z;
            w
        })
    }

    #[test]
    fn boltzmann_matches_enumeration() {
        let e = adj("1h", "2t");
        for present in [&["A", "B", "C", "D"][..], &["A", "B"], &["C"], &["A", "D"], &[]] {
            let p = phylo(QUARTET, present, &[]);
            for kt in [0.1, 1.0, 10.0] {
                let w = boltzmann_weights(&p, &e, kt).unwrap();
                let b = brute(&p, kt);
                for v in p.tree().internal_nodes() {
                    assert!((w[v] - b[v]).abs() < 1e-12, "{present:?} kT={kt} v={v}");
                }
            }
        }
        let all = boltzmann_weights(&phylo(QUARTET, &["A", "B", "C", "D"], &[]), &e, 1.0).unwrap();
        assert!(all.iter().all(|&w| w > 0.5));
        assert!(boltzmann_weights(&phylo(QUARTET, &[], &[]), &e, 0.0).is_err());
    }

    #[test]
    fn cherry_by_hand() {
        // Root with leaves A (present) and B (absent): the two scenarios cost
        // one change each, so the root weight is exactly 1/2.
        let layout: &[(&str, Option<&str>)] = &[("R", None), ("A", Some("R")), ("B", Some("R"))];
        let p = phylo(layout, &["A"], &[]);
        let w = boltzmann_weights(&p, &adj("1h", "2t"), 1.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_kt_tends_to_parsimonious_fraction() {
        // Present at A, B only: the two one-change histories both keep X and
        // drop Y, and disagree at R.
        let p = phylo(QUARTET, &["A", "B"], &[]);
        let w = boltzmann_weights(&p, &adj("1h", "2t"), 1e-3).unwrap();
        let t = p.tree();
        assert!((w[t.find("X").unwrap()] - 1.0).abs() < 1e-3);
        assert!((w[t.find("R").unwrap()] - 0.5).abs() < 1e-3);
        assert!(w[t.find("Y").unwrap()] < 1e-3);
    }

    fn graph_at(edges: &[(Adjacency, f64)]) -> (GlobalAdjacencyGraph, WeightTable) {
        let mut w = WeightTable::new();
        let mut g = BTreeMap::new();
        for &(a, x) in edges {
            w.insert(0, a, Weight::quantize(x).unwrap());
            g.insert(a, vec![0]);
        }
        (GlobalAdjacencyGraph::from_edges(g), w)
    }

    #[test]
    fn matching_examples() {
        let (e1, e2) = (adj("1h", "2t"), adj("1h", "3t"));
        let (g, w) = graph_at(&[(e1, 0.9), (e2, 0.5)]);
        assert_eq!(max_weight_matching_at(&g, &w, 0), [e1].into());

        let path = [adj("1h", "2t"), adj("2t", "3t"), adj("3t", "4t")];
        let (g, w) = graph_at(&path.map(|a| (a, 1.0)));
        let m = max_weight_matching_at(&g, &w, 0);
        assert_eq!(m, [path[0], path[2]].into());

        let (g, w) = graph_at(&[]);
        assert!(max_weight_matching_at(&g, &w, 0).is_empty());
    }

    #[test]
    fn matching_prefers_heavy_middle() {
        let path = [adj("1h", "2t"), adj("2t", "3t"), adj("3t", "4t")];
        let (g, w) = graph_at(&[(path[0], 0.3), (path[1], 0.9), (path[2], 0.4)]);
        assert_eq!(max_weight_matching_at(&g, &w, 0), [path[1]].into());
    }
}
