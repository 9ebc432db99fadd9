//! Rooted phylogenies with genomes at the leaves.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::genome::{Adjacency, Genome, MarkerId};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Length of the branch to the parent, if known. Not used by the solvers.
    pub branch_length: Option<f64>,
}

/// A rooted tree. Internal nodes may have any number of children.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    root: NodeId,
    postorder: Vec<NodeId>,
    depth: Vec<usize>,
}

impl Tree {
    /// Validates that `nodes` form a single rooted tree with unique names and
    /// that parent and child links agree.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::input("empty tree"));
        }
        let roots: Vec<NodeId> = (0..nodes.len()).filter(|&i| nodes[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::input(format!("tree must have exactly one root, found {}", roots.len())));
        }
        let root = roots[0];
        let mut names = BTreeSet::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.name.is_empty() {
                return Err(Error::input(format!("node {i} has no name")));
            }
            if !names.insert(n.name.as_str()) {
                return Err(Error::input(format!("duplicate node name `{}`", n.name)));
            }
            for &c in &n.children {
                if c >= nodes.len() || nodes[c].parent != Some(i) {
                    return Err(Error::input(format!("inconsistent child link {i} -> {c}")));
                }
            }
            if let Some(p) = n.parent {
                if p >= nodes.len() || !nodes[p].children.contains(&i) {
                    return Err(Error::input(format!("inconsistent parent link {i} -> {p}")));
                }
            }
        }
        // Iterative DFS from the root; anything unreached sits on a cycle.
        let mut depth = vec![usize::MAX; nodes.len()];
        let mut pre = Vec::with_capacity(nodes.len());
        let mut stack = vec![root];
        depth[root] = 0;
        while let Some(v) = stack.pop() {
            pre.push(v);
            for &c in nodes[v].children.iter().rev() {
                if depth[c] != usize::MAX {
                    return Err(Error::input("tree contains a cycle"));
                }
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        if pre.len() != nodes.len() {
            return Err(Error::input("tree is not connected"));
        }
        let postorder = postorder_from(&nodes, root);
        Ok(Tree { nodes, root, postorder, depth })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.nodes[v].name
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v].children
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.nodes[v].children.is_empty()
    }

    pub fn depth(&self, v: NodeId) -> usize {
        self.depth[v]
    }

    /// Children before parents; siblings in child order.
    pub fn postorder(&self) -> &[NodeId] {
        &self.postorder
    }

    /// Parents before children.
    pub fn preorder(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.postorder.iter().rev().copied()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(move |&v| self.is_leaf(v))
    }

    /// Internal nodes in node-id order.
    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(move |&v| !self.is_leaf(v))
    }

    /// `(parent, child)` pairs in preorder of the child.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.preorder().filter_map(move |v| self.parent(v).map(|p| (p, v)))
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn name_index(&self) -> HashMap<&str, NodeId> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect()
    }
}

fn postorder_from(nodes: &[Node], root: NodeId) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut stack = vec![(root, false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            out.push(v);
        } else {
            stack.push((v, true));
            for &c in nodes[v].children.iter().rev() {
                stack.push((c, false));
            }
        }
    }
    out
}

/// A tree whose leaves carry genomes over a common marker set.
#[derive(Debug, Clone)]
pub struct Phylogeny {
    tree: Tree,
    universe: Arc<BTreeSet<MarkerId>>,
    leaf_sets: Vec<BTreeSet<Adjacency>>,
}

impl Phylogeny {
    pub fn new(tree: Tree, genomes: BTreeMap<String, Genome>) -> Result<Self> {
        let mut leaf_sets = vec![BTreeSet::new(); tree.len()];
        let mut universe: Option<Arc<BTreeSet<MarkerId>>> = None;
        for leaf in tree.leaves() {
            let name = tree.name(leaf);
            let g = genomes
                .get(name)
                .ok_or_else(|| Error::input(format!("no genome for leaf `{name}`")))?;
            match &universe {
                None => universe = Some(g.universe().clone()),
                Some(u) if **u != **g.universe() => {
                    return Err(Error::input(format!("genome `{name}` has a different marker set")))
                }
                Some(_) => {}
            }
            leaf_sets[leaf] = g.adjacencies().clone();
        }
        for name in genomes.keys() {
            match tree.find(name) {
                Some(v) if tree.is_leaf(v) => {}
                Some(_) => return Err(Error::input(format!("genome given for internal node `{name}`"))),
                None => return Err(Error::input(format!("genome `{name}` matches no leaf"))),
            }
        }
        let universe = universe.ok_or_else(|| Error::input("tree has no leaves"))?;
        Ok(Phylogeny { tree, universe, leaf_sets })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn universe(&self) -> &Arc<BTreeSet<MarkerId>> {
        &self.universe
    }

    pub fn marker_count(&self) -> usize {
        self.universe.len()
    }

    /// The adjacency set of a leaf (empty for internal nodes).
    pub fn leaf_adjacencies(&self, v: NodeId) -> &BTreeSet<Adjacency> {
        &self.leaf_sets[v]
    }

    pub fn leaf_genome(&self, v: NodeId) -> Option<Genome> {
        if self.tree.is_leaf(v) {
            Some(Genome::new(self.leaf_sets[v].clone(), self.universe.clone()).expect("validated"))
        } else {
            None
        }
    }
}
