//! Exact Sankoff-Rousseau dynamic program over joint labels of one component,
//! with co-optimal counting and uniform sampling of optimal labelings.
//!
//! A joint label of internal node `v` chooses, for every extremity of the
//! component, either nothing or one incident edge annotated with `v`, such
//! that both ends of a chosen edge agree. Valid joint labels are exactly the
//! matchings of the component's subgraph at `v`, and are stored as bit masks
//! over the component's edges.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genome::{Adjacency, Extremity};
use crate::graph::Component;
use crate::labeling::Objective;
use crate::score::{Alpha, Cost, WeightTable};
use crate::tree::{NodeId, Phylogeny};

/// Set of component edges, bit `i` for edge `i`.
pub type Mask = u128;

/// Largest number of edges a component may have to be solved by the DP.
pub const MAX_DP_EDGES: usize = Mask::BITS as usize;

/// Default cap on the squared label-space bound.
pub const DEFAULT_CAP: u128 = 10_000_000;

/// Routing limit for the DP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DpLimits {
    /// A component is rejected when `label_space_bound^2 > cap`.
    pub cap: u128,
}

impl Default for DpLimits {
    fn default() -> Self {
        DpLimits { cap: DEFAULT_CAP }
    }
}

impl DpLimits {
    pub fn admits(&self, component: &Component) -> bool {
        self.check(component).is_ok()
    }

    pub fn check(&self, component: &Component) -> Result<()> {
        let bound = component.stats().label_space_bound;
        if component.edges().len() > MAX_DP_EDGES || bound.saturating_mul(bound) > self.cap {
            return Err(Error::CapacityExceeded { bound, cap: self.cap });
        }
        Ok(())
    }
}

/// Per-extremity choice of one incident edge (by index) or none.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointLabel {
    choice: Vec<Option<usize>>,
}

impl JointLabel {
    pub fn new(choice: Vec<Option<usize>>) -> Self {
        JointLabel { choice }
    }

    /// The joint label whose choices realize the edge set `mask`. Both ends
    /// of every edge in the mask choose it; overlapping edges keep the last.
    pub fn from_mask(component: &Component, mask: Mask) -> Self {
        let mut choice = vec![None; component.vertices().len()];
        for (i, (adj, _)) in component.edges().iter().enumerate() {
            if mask >> i & 1 == 1 {
                for x in adj.extremities() {
                    choice[vertex_index(component, x)] = Some(i);
                }
            }
        }
        JointLabel { choice }
    }

    pub fn choices(&self) -> &[Option<usize>] {
        &self.choice
    }

    /// Both ends of every chosen edge choose it, and every choice is an edge
    /// incident to its extremity.
    pub fn is_valid(&self, component: &Component) -> bool {
        if self.choice.len() != component.vertices().len() {
            return false;
        }
        self.choice.iter().enumerate().all(|(xi, c)| match *c {
            None => true,
            Some(e) => {
                let Some((adj, _)) = component.edges().get(e) else { return false };
                let x = component.vertices()[xi];
                match adj.other(x) {
                    Some(y) => self.choice[vertex_index(component, y)] == Some(e),
                    None => false,
                }
            }
        })
    }

    /// Edges chosen by at least one extremity.
    pub fn mask(&self) -> Mask {
        self.choice.iter().flatten().fold(0, |m, &e| m | 1 << e)
    }

    pub fn adjacencies(&self, component: &Component) -> BTreeSet<Adjacency> {
        mask_adjacencies(component, self.mask())
    }
}

fn vertex_index(component: &Component, x: Extremity) -> usize {
    component.vertices().binary_search(&x).expect("extremity of the component")
}

pub fn mask_adjacencies(component: &Component, mask: Mask) -> BTreeSet<Adjacency> {
    component
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, (a, _))| *a)
        .collect()
}

/// Edges of the component annotated with `v`.
fn annotated_mask(component: &Component, v: NodeId) -> Mask {
    (0..component.edges().len()).filter(|&i| component.is_annotated(i, v)).fold(0, |m, i| m | 1 << i)
}

/// Enumerates the matchings of `allowed` edges by deciding extremities in
/// order: each undecided extremity takes nothing or an allowed edge to a
/// later undecided extremity. Conflicting choices are never generated.
fn enumerate_masks(component: &Component, allowed: Mask) -> Vec<Mask> {
    let n = component.vertices().len();
    // incident[x] = (edge, other vertex) with other > x, allowed edges only
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, (adj, _)) in component.edges().iter().enumerate() {
        if allowed >> i & 1 == 0 {
            continue;
        }
        let a = vertex_index(component, adj.a());
        let b = vertex_index(component, adj.b());
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        incident[lo].push((i, hi));
    }
    let mut out = Vec::new();
    let mut used = vec![false; n];
    fn rec(
        x: usize,
        mask: Mask,
        incident: &[Vec<(usize, usize)>],
        used: &mut [bool],
        out: &mut Vec<Mask>,
    ) {
        if x == incident.len() {
            out.push(mask);
            return;
        }
        if used[x] {
            rec(x + 1, mask, incident, used, out);
            return;
        }
        rec(x + 1, mask, incident, used, out);
        for &(e, y) in &incident[x] {
            if !used[y] {
                used[y] = true;
                rec(x + 1, mask | 1 << e, incident, used, out);
                used[y] = false;
            }
        }
    }
    rec(0, 0, &incident, &mut used, &mut out);
    out
}

/// All valid joint labels of internal node `v`, in deterministic order
/// (the empty label first).
pub fn enumerate_labels(component: &Component, v: NodeId, limits: DpLimits) -> Result<Vec<JointLabel>> {
    limits.check(component)?;
    Ok(enumerate_masks(component, annotated_mask(component, v))
        .into_iter()
        .map(|m| JointLabel::from_mask(component, m))
        .collect())
}

/// Discarded weight at `v` for the edge set `mask`, in micro-units.
fn discarded_at(component: &Component, weights: &WeightTable, v: NodeId, mask: Mask) -> u64 {
    component
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, (_, nodes))| mask >> i & 1 == 0 && nodes.binary_search(&v).is_ok())
        .map(|(_, (a, _))| u64::from(weights.get(v, a).micros()))
        .sum()
}

/// Cost of the branch from parent `u` to child `v` given their labels:
/// `(1 - alpha) * |changes| + alpha * (weight discarded at v)`. `None`
/// stands for an infinite cost, returned when either label is invalid.
pub fn branch_cost(
    component: &Component,
    weights: &WeightTable,
    alpha: Alpha,
    v: NodeId,
    label_u: &JointLabel,
    label_v: &JointLabel,
) -> Option<Cost> {
    if !label_u.is_valid(component) || !label_v.is_valid(component) {
        return None;
    }
    let changes = u64::from((label_u.mask() ^ label_v.mask()).count_ones());
    Some(alpha.cost(changes, discarded_at(component, weights, v, label_v.mask())))
}

#[derive(Debug, Clone)]
struct NodeRow {
    labels: Vec<Mask>,
    cost: Vec<Cost>,
    count: Vec<BigUint>,
}

/// Bottom-up DP results for one component: for every node and valid label,
/// the minimal subtree cost and the number of optimal subtree labelings.
#[derive(Debug, Clone)]
pub struct DpTable {
    component: Component,
    alpha: Alpha,
    root: NodeId,
    children: Vec<Vec<NodeId>>,
    internal: Vec<bool>,
    rows: Vec<NodeRow>,
}

/// One optimal labeling of a component's internal nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSolution {
    /// Chosen adjacencies per internal node, by node id.
    pub node_sets: Vec<(NodeId, BTreeSet<Adjacency>)>,
    /// Objective restricted to the component's edges.
    pub objective: Objective,
    /// Number of co-optimal labelings, when known.
    pub cooptimal: Option<BigUint>,
    pub sample: Option<SampleTag>,
}

/// Provenance of a sampled solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleTag {
    pub index: usize,
    pub seed: u64,
}

/// Objective of per-node edge sets on a component, evaluated directly.
pub(crate) fn component_objective(
    component: &Component,
    phylo: &Phylogeny,
    weights: &WeightTable,
    alpha: Alpha,
    masks: &[Mask],
) -> Objective {
    let tree = phylo.tree();
    let changes: u64 = tree.edges().map(|(u, v)| u64::from((masks[u] ^ masks[v]).count_ones())).sum();
    let discarded: u64 =
        tree.internal_nodes().map(|v| discarded_at(component, weights, v, masks[v])).sum();
    Objective::new(alpha, changes, discarded)
}

/// Leaf adjacencies restricted to the component's edges.
pub(crate) fn leaf_mask(component: &Component, leaf_set: &BTreeSet<Adjacency>) -> Mask {
    component
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, (a, _))| leaf_set.contains(a))
        .fold(0, |m, (i, _)| m | 1 << i)
}

/// Solves one component exactly and returns the first optimum in enumeration
/// order together with the DP table for counting and sampling.
pub fn solve_component(
    component: &Component,
    phylo: &Phylogeny,
    weights: &WeightTable,
    alpha: Alpha,
    limits: DpLimits,
) -> Result<(ComponentSolution, DpTable)> {
    limits.check(component)?;
    let tree = phylo.tree();
    let n = tree.len();
    let change = alpha.change_coef();
    let mut rows: Vec<Option<NodeRow>> = vec![None; n];

    for &v in tree.postorder() {
        if tree.is_leaf(v) {
            let m = leaf_mask(component, phylo.leaf_adjacencies(v));
            rows[v] = Some(NodeRow { labels: vec![m], cost: vec![0], count: vec![BigUint::one()] });
            continue;
        }
        let labels = enumerate_masks(component, annotated_mask(component, v));
        let mut cost: Vec<Cost> = labels
            .iter()
            .map(|&m| alpha.weight_coef() * discarded_at(component, weights, v, m))
            .collect();
        let mut count: Vec<BigUint> = vec![BigUint::one(); labels.len()];
        for &c in tree.children(v) {
            let child = rows[c].as_ref().expect("postorder");
            for (ai, &a) in labels.iter().enumerate() {
                let (best, ways) = best_child_labels(child, a, change);
                cost[ai] += best;
                count[ai] *= ways;
            }
        }
        rows[v] = Some(NodeRow { labels, cost, count });
    }

    let table = DpTable {
        component: component.clone(),
        alpha,
        root: tree.root(),
        children: (0..n).map(|v| tree.children(v).to_vec()).collect(),
        internal: (0..n).map(|v| !tree.is_leaf(v)).collect(),
        rows: rows.into_iter().map(|r| r.expect("every node visited")).collect(),
    };
    let masks = table.backtrack(|candidates| candidates[0].0);
    let objective = component_objective(component, phylo, weights, alpha, &masks);
    if objective.cost != table.optimum() {
        return Err(Error::internal(format!(
            "backtracked labeling costs {} but the DP optimum is {}",
            objective.cost,
            table.optimum()
        )));
    }
    let solution = ComponentSolution {
        node_sets: table.node_sets(&masks),
        objective,
        cooptimal: Some(table.count_cooptimal()),
        sample: None,
    };
    Ok((solution, table))
}

/// Minimum over child labels `b` of `cost(b) + change * |a ^ b|`, and the
/// number of optimal child subtree labelings attaining it.
fn best_child_labels(child: &NodeRow, a: Mask, change: Cost) -> (Cost, BigUint) {
    let mut best = Cost::MAX;
    for (b, &cb) in child.labels.iter().zip(&child.cost) {
        let c = cb + change * Cost::from((a ^ b).count_ones());
        best = best.min(c);
    }
    let mut ways = BigUint::zero();
    for ((b, &cb), k) in child.labels.iter().zip(&child.cost).zip(&child.count) {
        if cb + change * Cost::from((a ^ b).count_ones()) == best {
            ways += k;
        }
    }
    (best, ways)
}

impl DpTable {
    /// Minimal objective of the component.
    pub fn optimum(&self) -> Cost {
        self.rows[self.root].cost.iter().copied().min().unwrap_or(0)
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn component(&self) -> &Component {
        &self.component
    }

    /// Number of valid labels stored at `v`.
    pub fn label_count(&self, v: NodeId) -> usize {
        self.rows[v].labels.len()
    }

    /// Minimal subtree cost for each label of `v`, in enumeration order.
    pub fn costs(&self, v: NodeId) -> impl Iterator<Item = (BTreeSet<Adjacency>, Cost)> + '_ {
        self.rows[v]
            .labels
            .iter()
            .zip(&self.rows[v].cost)
            .map(move |(&m, &c)| (mask_adjacencies(&self.component, m), c))
    }

    /// Exact number of distinct optimal labelings of the component.
    pub fn count_cooptimal(&self) -> BigUint {
        let row = &self.rows[self.root];
        let best = self.optimum();
        row.cost
            .iter()
            .zip(&row.count)
            .filter(|(&c, _)| c == best)
            .map(|(_, k)| k.clone())
            .sum()
    }

    /// Top-down reconstruction. `pick` receives the optimal candidates as
    /// `(label index, count)` pairs and returns the chosen label index.
    fn backtrack(&self, mut pick: impl FnMut(&[(usize, &BigUint)]) -> usize) -> Vec<Mask> {
        let mut masks: Vec<Mask> = vec![0; self.rows.len()];
        let mut chosen: Vec<usize> = vec![0; self.rows.len()];
        let change = self.alpha.change_coef();

        let root = &self.rows[self.root];
        let best = self.optimum();
        let cands: Vec<(usize, &BigUint)> = (0..root.labels.len())
            .filter(|&i| root.cost[i] == best)
            .map(|i| (i, &root.count[i]))
            .collect();
        chosen[self.root] = pick(&cands);
        masks[self.root] = root.labels[chosen[self.root]];

        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            let a = masks[u];
            for &c in &self.children[u] {
                let row = &self.rows[c];
                let edge_cost = |b: Mask| change * Cost::from((a ^ b).count_ones());
                let best = row.labels.iter().zip(&row.cost).map(|(&b, &cb)| cb + edge_cost(b)).min().expect("non-empty row");
                let cands: Vec<(usize, &BigUint)> = (0..row.labels.len())
                    .filter(|&i| row.cost[i] + edge_cost(row.labels[i]) == best)
                    .map(|i| (i, &row.count[i]))
                    .collect();
                chosen[c] = pick(&cands);
                masks[c] = row.labels[chosen[c]];
                stack.push(c);
            }
        }
        masks
    }

    fn node_sets(&self, masks: &[Mask]) -> Vec<(NodeId, BTreeSet<Adjacency>)> {
        (0..masks.len())
            .filter(|&v| self.internal[v])
            .map(|v| (v, mask_adjacencies(&self.component, masks[v])))
            .collect()
    }

    /// Draws `n` labelings uniformly from the co-optimal set: every choice
    /// between optimal labels is made with probability proportional to the
    /// number of optimal completions below it.
    pub fn sample<R: Rng>(
        &self,
        phylo: &Phylogeny,
        weights: &WeightTable,
        n: usize,
        rng: &mut R,
        seed: u64,
    ) -> Result<Vec<ComponentSolution>> {
        let total = self.count_cooptimal();
        let mut out = Vec::with_capacity(n);
        for index in 0..n {
            let masks = self.backtrack(|cands| {
                if cands.len() == 1 {
                    return cands[0].0;
                }
                let sum: BigUint = cands.iter().map(|(_, k)| *k).sum();
                let mut r = random_below(rng, &sum);
                for (i, k) in cands {
                    if &r < *k {
                        return *i;
                    }
                    r -= *k;
                }
                unreachable!("r < sum of counts")
            });
            let objective = component_objective(&self.component, phylo, weights, self.alpha, &masks);
            if objective.cost != self.optimum() {
                return Err(Error::internal("sampled labeling is not optimal"));
            }
            out.push(ComponentSolution {
                node_sets: self.node_sets(&masks),
                objective,
                cooptimal: Some(total.clone()),
                sample: Some(SampleTag { index, seed }),
            });
        }
        Ok(out)
    }
}

/// Uniform integer in `[0, bound)` by rejection over `bound.bits()` bits.
fn random_below<R: Rng>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let words = bits.div_ceil(32) as usize;
    let top_bits = bits - 32 * (words as u64 - 1);
    let top_mask = if top_bits == 32 { u32::MAX } else { (1u32 << top_bits) - 1 };
    loop {
        let mut digits: Vec<u32> = (0..words).map(|_| rng.random()).collect();
        *digits.last_mut().expect("at least one word") &= top_mask;
        let x = BigUint::new(digits);
        if &x < bound {
            return x;
        }
    }
}

/// Samples `n` optimal labelings of a component with a generator seeded from
/// `seed`. Identical seeds give identical sequences.
pub fn sample_component(
    component: &Component,
    phylo: &Phylogeny,
    weights: &WeightTable,
    alpha: Alpha,
    limits: DpLimits,
    n: usize,
    seed: u64,
) -> Result<Vec<ComponentSolution>> {
    let (_, table) = solve_component(component, phylo, weights, alpha, limits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    table.sample(phylo, weights, n, &mut rng, seed)
}

pub fn count_cooptimal(table: &DpTable) -> BigUint {
    table.count_cooptimal()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::Genome;
    use crate::graph::{build_global_graph, candidate_adjacencies, connected_components, GlobalAdjacencyGraph};
    use crate::score::{Threshold, Weight};
    use crate::tree::tests::tree_from;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn adj(x: &str, y: &str) -> Adjacency {
        Adjacency::new(x.parse().unwrap(), y.parse().unwrap()).unwrap()
    }

    fn component(edges: &[(Adjacency, &[NodeId])]) -> Component {
        Component::new(edges.iter().map(|(a, n)| (*a, n.to_vec())).collect())
    }

    #[test]
    fn single_edge_has_two_labels() {
        let c = component(&[(adj("1h", "2t"), &[0])]);
        let labels = enumerate_labels(&c, 0, DpLimits::default()).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0].mask(), 0);
        assert_eq!(labels[1].mask(), 1);
        assert!(labels.iter().all(|l| l.is_valid(&c)));
    }

    #[test]
    fn star_has_three_valid_labels() {
        let c = component(&[(adj("1h", "2t"), &[0]), (adj("1h", "3t"), &[0])]);
        let labels = enumerate_labels(&c, 0, DpLimits::default()).unwrap();
        let masks: Vec<Mask> = labels.iter().map(|l| l.mask()).collect();
        assert_eq!(masks, vec![0, 1, 2]);

        // Exhaust the raw product of per-extremity choices: 3 * 2 * 2 = 12.
        let mut raw_valid = 0;
        for center in [None, Some(0), Some(1)] {
            for two in [None, Some(0)] {
                for three in [None, Some(1)] {
                    // vertices sorted: 1h, 2t, 3t
                    if JointLabel::new(vec![center, two, three]).is_valid(&c) {
                        raw_valid += 1;
                    }
                }
            }
        }
        assert_eq!(raw_valid, 3);
    }

    #[test]
    fn annotation_gates_labels() {
        let c = component(&[(adj("1h", "2t"), &[0])]);
        let labels = enumerate_labels(&c, 5, DpLimits::default()).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].mask(), 0);
    }

    #[test]
    fn capacity_is_enforced() {
        let c = component(&[(adj("1h", "2t"), &[0]), (adj("1h", "3t"), &[0])]);
        // bound 12, squared 144
        assert!(enumerate_labels(&c, 0, DpLimits { cap: 144 }).is_ok());
        assert!(matches!(
            enumerate_labels(&c, 0, DpLimits { cap: 143 }),
            Err(Error::CapacityExceeded { bound: 12, cap: 143 })
        ));
    }

    #[test]
    fn branch_cost_examples() {
        let e = adj("1h", "2t");
        let f = adj("3h", "4t");
        let c = component(&[(e, &[1]), (f, &[1])]);
        let mut w = WeightTable::new();
        w.insert(1, e, Weight::quantize(0.8).unwrap());
        w.insert(1, f, Weight::quantize(0.3).unwrap());
        let both = JointLabel::from_mask(&c, 0b11);
        assert_eq!(branch_cost(&c, &w, Alpha::new(1, 2).unwrap(), 1, &both, &both), Some(0));

        let only_f = JointLabel::from_mask(&c, 0b10);
        assert_eq!(branch_cost(&c, &w, Alpha::ZERO, 1, &both, &only_f), Some(Alpha::ZERO.unit()));

        // One change (e is cut) and e, weighing 0.8, is discarded at the child.
        let half = Alpha::new(1, 2).unwrap();
        let cost = branch_cost(&c, &w, half, 1, &both, &only_f).unwrap();
        assert_eq!(cost * crate::score::WEIGHT_SCALE / half.unit(), 900_000);

        let invalid = JointLabel::new(vec![Some(0), None, None, None]);
        assert_eq!(branch_cost(&c, &w, half, 1, &invalid, &both), None);
    }

    fn phylo(newick_like: &[(&str, Option<&str>)], leaves: &[(&str, &[Adjacency])], n: u32) -> Phylogeny {
        let t = tree_from(newick_like);
        let u = Arc::new((1..=n).collect::<BTreeSet<u32>>());
        let g: BTreeMap<String, Genome> = leaves
            .iter()
            .map(|(name, adjs)| (name.to_string(), Genome::new(adjs.iter().copied().collect(), u.clone()).unwrap()))
            .collect();
        Phylogeny::new(t, g).unwrap()
    }

    #[test]
    fn shared_adjacency_is_kept_everywhere() {
        let e = adj("1h", "2t");
        let p = phylo(
            &[("R", None), ("X", Some("R")), ("A", Some("X")), ("B", Some("X")), ("C", Some("R"))],
            &[("A", &[e]), ("B", &[e]), ("C", &[e])],
            2,
        );
        let g = build_global_graph(&p, &candidate_adjacencies(&p), &WeightTable::new(), Threshold::default());
        let comps = connected_components(&g);
        let (sol, table) = solve_component(&comps[0], &p, &WeightTable::new(), Alpha::ZERO, DpLimits::default()).unwrap();
        assert_eq!(sol.objective.cost, 0);
        assert!(sol.node_sets.iter().all(|(_, s)| s.contains(&e)));
        assert_eq!(table.count_cooptimal(), BigUint::one());
    }

    #[test]
    fn cut_and_join_on_one_branch() {
        // Internal u (root) proposes (x_t, z_t), internal v proposes (x_t, y_h).
        // Leaves below v carry (x_t, y_h), the leaf below u carries (x_t, z_t).
        let xy = adj("1t", "2h");
        let xz = adj("1t", "3t");
        let p = phylo(
            &[("U", None), ("V", Some("U")), ("A", Some("V")), ("B", Some("V")), ("C", Some("U")), ("D", Some("U"))],
            &[("A", &[xy]), ("B", &[xy]), ("C", &[xz]), ("D", &[xz])],
            3,
        );
        let mut ann = BTreeMap::new();
        ann.insert(xy, vec![1]);
        ann.insert(xz, vec![0]);
        let g = GlobalAdjacencyGraph::from_edges(ann);
        let comps = connected_components(&g);
        assert_eq!(comps.len(), 1);
        let (sol, table) = solve_component(&comps[0], &p, &WeightTable::new(), Alpha::ZERO, DpLimits::default()).unwrap();
        assert_eq!(sol.objective.changes, 2);
        assert_eq!(sol.objective.cost, 2 * Alpha::ZERO.unit());
        assert_eq!(table.count_cooptimal(), BigUint::one());
    }

    #[test]
    fn symmetric_instance_has_two_optima() {
        // Cherry: the adjacency is in one leaf only; keeping or dropping it at
        // the root both cost one change.
        let e = adj("1h", "2t");
        let p = phylo(&[("R", None), ("A", Some("R")), ("B", Some("R"))], &[("A", &[e]), ("B", &[])], 2);
        let g = build_global_graph(&p, &candidate_adjacencies(&p), &WeightTable::new(), Threshold::default());
        let comps = connected_components(&g);
        let (sol, table) = solve_component(&comps[0], &p, &WeightTable::new(), Alpha::ZERO, DpLimits::default()).unwrap();
        assert_eq!(table.count_cooptimal(), BigUint::from(2u32));
        // first optimum in enumeration order is the empty label
        assert!(sol.node_sets[0].1.is_empty());

        let a = sample_component(&comps[0], &p, &WeightTable::new(), Alpha::ZERO, DpLimits::default(), 50, 7).unwrap();
        let b = sample_component(&comps[0], &p, &WeightTable::new(), Alpha::ZERO, DpLimits::default(), 50, 7).unwrap();
        assert_eq!(a, b);
        let kept = a.iter().filter(|s| !s.node_sets[0].1.is_empty()).count();
        assert!(kept > 0 && kept < 50);
        assert!(a.iter().all(|s| s.objective.cost == table.optimum()));
    }

    #[test]
    fn random_below_is_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bound in [1u64, 2, 3, 7, 1 << 32, (1 << 32) + 5, u64::MAX] {
            let b = BigUint::from(bound);
            for _ in 0..100 {
                assert!(random_below(&mut rng, &b) < b);
            }
        }
    }
}
