//! Random instances for tests and benchmarks.
//!
//! Leaf genomes descend from one ancestral genome by a few random cuts and
//! joins each, so candidate adjacencies overlap and conflict the way they do
//! in real data while components stay small.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::Result;
use crate::genome::{Adjacency, Extremity, Genome, MarkerId};
use crate::score::{Weight, WeightTable, WEIGHT_SCALE};
use crate::graph::candidate_adjacencies;
use crate::tree::{Node, NodeId, Phylogeny, Tree};

#[derive(Debug, Clone)]
pub struct InstanceParams {
    pub min_leaves: usize,
    pub max_leaves: usize,
    pub markers: u32,
    /// Cut-or-join operations applied to each leaf copy of the ancestor.
    pub max_ops: usize,
    /// Chance that a split produces three children instead of two.
    pub p_multifurcation: f64,
    /// Chance that a candidate gets a weight entry at an internal node.
    pub weight_density: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            min_leaves: 2,
            max_leaves: 7,
            markers: 4,
            max_ops: 2,
            p_multifurcation: 0.15,
            weight_density: 0.8,
        }
    }
}

/// Random rooted tree with `n >= 2` leaves named `L1..` and internal nodes
/// named `N1..`, grown by splitting random leaves.
pub fn random_tree<R: Rng>(n: usize, p_multifurcation: f64, rng: &mut R) -> Result<Tree> {
    let mut parent: Vec<Option<NodeId>> = vec![None];
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new()];
    let mut leaves: Vec<NodeId> = vec![0];
    while leaves.len() < n {
        let i = rng.random_range(0..leaves.len());
        let v = leaves.swap_remove(i);
        let k = if n - leaves.len() >= 3 && rng.random_bool(p_multifurcation) { 3 } else { 2 };
        for _ in 0..k {
            let c = parent.len();
            parent.push(Some(v));
            children.push(Vec::new());
            children[v].push(c);
            leaves.push(c);
        }
    }
    let mut names = vec![String::new(); parent.len()];
    let (mut leaf_no, mut internal_no) = (0, 0);
    // Postorder numbering for stable names.
    let mut stack = vec![(0usize, false)];
    while let Some((v, done)) = stack.pop() {
        if done || children[v].is_empty() {
            if children[v].is_empty() {
                leaf_no += 1;
                names[v] = format!("L{leaf_no}");
            } else {
                internal_no += 1;
                names[v] = format!("N{internal_no}");
            }
            continue;
        }
        stack.push((v, true));
        for &c in children[v].iter().rev() {
            stack.push((c, false));
        }
    }
    let nodes = (0..parent.len())
        .map(|v| Node { name: names[v].clone(), parent: parent[v], children: children[v].clone(), branch_length: None })
        .collect();
    Tree::new(nodes)
}

fn identity_adjacencies(markers: u32) -> BTreeSet<Adjacency> {
    (1..markers)
        .map(|m| Adjacency::new(Extremity::head(m), Extremity::tail(m + 1)).expect("distinct extremities"))
        .collect()
}

/// Applies `ops` random cuts or joins to a consistent adjacency set.
fn perturb<R: Rng>(adjs: &mut BTreeSet<Adjacency>, markers: u32, ops: usize, rng: &mut R) {
    for _ in 0..ops {
        let used: BTreeSet<Extremity> = adjs.iter().flat_map(|a| a.extremities()).collect();
        let free: Vec<Extremity> = (1..=markers)
            .flat_map(|m| [Extremity::tail(m), Extremity::head(m)])
            .filter(|x| !used.contains(x))
            .collect();
        let x = free.choose(rng).copied();
        let partners: Vec<Extremity> =
            x.map_or_else(Vec::new, |x| free.iter().copied().filter(|y| y.marker != x.marker).collect());
        if !partners.is_empty() && (adjs.is_empty() || rng.random_bool(0.5)) {
            let y = *partners.choose(rng).expect("non-empty");
            adjs.insert(Adjacency::new(x.expect("chosen"), y).expect("different markers"));
        } else if !adjs.is_empty() {
            let all: Vec<Adjacency> = adjs.iter().copied().collect();
            adjs.remove(all.choose(rng).expect("non-empty"));
        }
    }
}

/// Random phylogeny and weight table over the candidates at internal nodes.
pub fn random_instance<R: Rng>(params: &InstanceParams, rng: &mut R) -> Result<(Phylogeny, WeightTable)> {
    let n = rng.random_range(params.min_leaves..=params.max_leaves);
    let tree = random_tree(n, params.p_multifurcation, rng)?;
    let universe: Arc<BTreeSet<MarkerId>> = Arc::new((1..=params.markers).collect());
    let mut ancestor = identity_adjacencies(params.markers);
    perturb(&mut ancestor, params.markers, params.max_ops, rng);
    let mut genomes = BTreeMap::new();
    for leaf in tree.leaves() {
        let mut adjs = ancestor.clone();
        let ops = rng.random_range(0..=params.max_ops);
        perturb(&mut adjs, params.markers, ops, rng);
        genomes.insert(tree.name(leaf).to_string(), Genome::new(adjs, universe.clone())?);
    }
    let phylo = Phylogeny::new(tree, genomes)?;
    let weights = random_weights(&phylo, params.weight_density, rng);
    Ok((phylo, weights))
}

/// Weights on the micro-unit grid for a random subset of the candidates at
/// each internal node; the extremes 0 and 1 are drawn on purpose.
pub fn random_weights<R: Rng>(phylo: &Phylogeny, density: f64, rng: &mut R) -> WeightTable {
    let mut table = WeightTable::new();
    for (v, cands) in candidate_adjacencies(phylo) {
        if phylo.tree().is_leaf(v) {
            continue;
        }
        for a in cands {
            if !rng.random_bool(density) {
                continue;
            }
            let micros = match rng.random_range(0..10) {
                0 => 0,
                1 => WEIGHT_SCALE as u32,
                _ => rng.random_range(0..=WEIGHT_SCALE as u32),
            };
            table.insert(v, a, Weight::from_micros(micros).expect("on the grid"));
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (p, w) = random_instance(&InstanceParams::default(), &mut rng).unwrap();
            let leaves = p.tree().leaves().count();
            assert!((2..=7).contains(&leaves));
            assert!(w.iter().all(|(v, _, _)| !p.tree().is_leaf(v)));
            let names: BTreeSet<&str> = (0..p.tree().len()).map(|v| p.tree().name(v)).collect();
            assert_eq!(names.len(), p.tree().len());
        }
    }
}
