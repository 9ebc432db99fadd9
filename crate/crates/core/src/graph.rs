//! The global adjacency graph and its decomposition into independent
//! components.
//!
//! Vertices are marker extremities; an edge is a candidate adjacency that
//! passes the weight threshold at one or more internal nodes, annotated with
//! those nodes. Optimal labelings of distinct components never interact, so
//! each component is solved on its own.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::genome::{Adjacency, Extremity};
use crate::score::{Threshold, WeightTable};
use crate::tree::{NodeId, Phylogeny};

/// The union of all leaf adjacency sets, offered at every internal node.
pub fn candidate_adjacencies(phylo: &Phylogeny) -> BTreeMap<NodeId, BTreeSet<Adjacency>> {
    let tree = phylo.tree();
    let all: BTreeSet<Adjacency> =
        tree.leaves().flat_map(|l| phylo.leaf_adjacencies(l).iter().copied()).collect();
    tree.internal_nodes().map(|v| (v, all.clone())).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalAdjacencyGraph {
    /// Each edge with the sorted internal nodes whose adjacency graph holds it.
    edges: BTreeMap<Adjacency, Vec<NodeId>>,
}

impl GlobalAdjacencyGraph {
    /// Builds a graph from explicit annotations; empty annotation lists are
    /// dropped.
    pub fn from_edges(edges: BTreeMap<Adjacency, Vec<NodeId>>) -> Self {
        let edges = edges
            .into_iter()
            .filter(|(_, nodes)| !nodes.is_empty())
            .map(|(a, mut nodes)| {
                nodes.sort_unstable();
                nodes.dedup();
                (a, nodes)
            })
            .collect();
        GlobalAdjacencyGraph { edges }
    }

    pub fn edges(&self) -> &BTreeMap<Adjacency, Vec<NodeId>> {
        &self.edges
    }

    pub fn vertices(&self) -> BTreeSet<Extremity> {
        self.edges.keys().flat_map(|a| a.extremities()).collect()
    }

    pub fn contains(&self, adj: &Adjacency) -> bool {
        self.edges.contains_key(adj)
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Annotates adjacency `a` with internal node `v` when `a` is a candidate at
/// `v` and `w(v, a) >= threshold`. Unannotated edges and isolated vertices do
/// not appear.
pub fn build_global_graph(
    phylo: &Phylogeny,
    candidates: &BTreeMap<NodeId, BTreeSet<Adjacency>>,
    weights: &WeightTable,
    threshold: Threshold,
) -> GlobalAdjacencyGraph {
    let mut edges: BTreeMap<Adjacency, Vec<NodeId>> = BTreeMap::new();
    for (&v, cands) in candidates {
        if phylo.tree().is_leaf(v) {
            continue;
        }
        for a in cands {
            if threshold.admits(weights.get(v, a)) {
                edges.entry(*a).or_default().push(v);
            }
        }
    }
    for nodes in edges.values_mut() {
        nodes.sort_unstable();
        nodes.dedup();
    }
    GlobalAdjacencyGraph { edges }
}

/// Size statistics of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ComponentStats {
    /// Number of extremities.
    pub vertices: usize,
    /// Largest extremity degree.
    pub max_degree: usize,
    /// Product of `1 + degree` over all extremities, saturating.
    pub label_space_bound: u128,
}

/// A connected piece of the global adjacency graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    vertices: Vec<Extremity>,
    edges: Vec<(Adjacency, Vec<NodeId>)>,
    stats: ComponentStats,
}

impl Component {
    pub fn new(mut edges: Vec<(Adjacency, Vec<NodeId>)>) -> Self {
        edges.sort();
        let vertices: BTreeSet<Extremity> = edges.iter().flat_map(|(a, _)| a.extremities()).collect();
        let vertices: Vec<Extremity> = vertices.into_iter().collect();
        let stats = compute_stats(&vertices, &edges);
        Component { vertices, edges, stats }
    }

    /// Sorted extremities.
    pub fn vertices(&self) -> &[Extremity] {
        &self.vertices
    }

    /// Sorted edges with their node annotations.
    pub fn edges(&self) -> &[(Adjacency, Vec<NodeId>)] {
        &self.edges
    }

    pub fn stats(&self) -> ComponentStats {
        self.stats
    }

    pub fn recompute_stats(&self) -> ComponentStats {
        compute_stats(&self.vertices, &self.edges)
    }

    pub fn is_annotated(&self, edge: usize, v: NodeId) -> bool {
        self.edges[edge].1.binary_search(&v).is_ok()
    }
}

fn compute_stats(vertices: &[Extremity], edges: &[(Adjacency, Vec<NodeId>)]) -> ComponentStats {
    let mut degree: BTreeMap<Extremity, usize> = vertices.iter().map(|&x| (x, 0)).collect();
    for (a, _) in edges {
        for x in a.extremities() {
            *degree.entry(x).or_default() += 1;
        }
    }
    let max_degree = degree.values().copied().max().unwrap_or(0);
    let label_space_bound = degree
        .values()
        .fold(1u128, |acc, &d| acc.saturating_mul(1 + d as u128));
    ComponentStats { vertices: vertices.len(), max_degree, label_space_bound }
}

/// Connected components ordered by their smallest extremity.
pub fn connected_components(graph: &GlobalAdjacencyGraph) -> Vec<Component> {
    let mut incident: BTreeMap<Extremity, Vec<Adjacency>> = BTreeMap::new();
    for a in graph.edges.keys() {
        for x in a.extremities() {
            incident.entry(x).or_default().push(*a);
        }
    }
    let mut seen: BTreeSet<Extremity> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in incident.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut edges: BTreeSet<Adjacency> = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for a in &incident[&x] {
                edges.insert(*a);
                let y = a.other(x).expect("incident");
                if seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        out.push(Component::new(
            edges.into_iter().map(|a| (a, graph.edges[&a].clone())).collect(),
        ));
    }
    out
}

/// A component without conflict is a single edge.
pub fn is_conflict_free(c: &Component) -> bool {
    c.vertices.len() == 2 && c.edges.len() == 1
}
