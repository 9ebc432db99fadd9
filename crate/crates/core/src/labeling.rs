use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{check_consistency, scj_count, Adjacency};
use crate::score::{Alpha, Cost, WeightTable};
use crate::tree::{NodeId, Phylogeny};

/// Adjacency sets for every node of a phylogeny, leaves included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    sets: Vec<BTreeSet<Adjacency>>,
}

impl Labeling {
    /// Leaves carry their input genomes, internal nodes start empty.
    pub fn leaves_only(phylo: &Phylogeny) -> Self {
        let sets = (0..phylo.tree().len()).map(|v| phylo.leaf_adjacencies(v).clone()).collect();
        Labeling { sets }
    }

    /// Wraps one adjacency set per node, indexed by node id.
    pub fn from_sets(sets: Vec<BTreeSet<Adjacency>>) -> Self {
        Labeling { sets }
    }

    pub fn sets(&self) -> &[BTreeSet<Adjacency>] {
        &self.sets
    }

    pub fn set(&self, v: NodeId) -> &BTreeSet<Adjacency> {
        &self.sets[v]
    }

    pub fn set_mut(&mut self, v: NodeId) -> &mut BTreeSet<Adjacency> {
        &mut self.sets[v]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// An objective value and its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Objective {
    /// `alpha * discarded + (1 - alpha) * changes` in cost units.
    pub cost: Cost,
    /// Total SCJ distance over all branches.
    pub changes: u64,
    /// Total weight of discarded adjacencies, in micro-units.
    pub discarded_micros: u64,
}

impl Objective {
    pub fn new(alpha: Alpha, changes: u64, discarded_micros: u64) -> Self {
        Objective { cost: alpha.cost(changes, discarded_micros), changes, discarded_micros }
    }
}

/// Evaluates the weighted SCJ criterion directly: the SCJ distance summed
/// over all branches, and the weight of every table entry at an internal node
/// whose adjacency is absent from that node's label.
pub fn labeling_objective(
    phylo: &Phylogeny,
    labeling: &Labeling,
    weights: &WeightTable,
    alpha: Alpha,
) -> Result<Objective> {
    let tree = phylo.tree();
    if labeling.len() != tree.len() {
        return Err(Error::input("labeling does not cover every node"));
    }
    for v in tree.leaves() {
        if labeling.set(v) != phylo.leaf_adjacencies(v) {
            return Err(Error::input(format!("leaf `{}` differs from its input genome", tree.name(v))));
        }
    }
    for v in tree.internal_nodes() {
        let check = check_consistency(labeling.set(v));
        if !check.consistent {
            return Err(Error::input(format!(
                "label of `{}` is inconsistent at {}",
                tree.name(v),
                check.conflicts[0]
            )));
        }
    }
    let changes: u64 = tree
        .edges()
        .map(|(u, v)| scj_count(labeling.set(u), labeling.set(v)) as u64)
        .sum();
    let discarded: u64 = weights
        .iter()
        .filter(|(v, a, _)| !tree.is_leaf(*v) && !labeling.set(*v).contains(a))
        .map(|(_, _, w)| u64::from(w.micros()))
        .sum();
    Ok(Objective::new(alpha, changes, discarded))
}
