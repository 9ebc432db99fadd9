//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use wscj_core::genome::{Adjacency, Extremity};
use wscj_core::{Alpha, Cost, Phylogeny, WeightTable};

/// Every consistent subset of `adjs`.
pub fn matchings(adjs: &[Adjacency]) -> Vec<BTreeSet<Adjacency>> {
    fn go(adjs: &[Adjacency], i: usize, used: &mut BTreeSet<Extremity>, cur: &mut Vec<Adjacency>, out: &mut Vec<BTreeSet<Adjacency>>) {
        if i == adjs.len() {
            out.push(cur.iter().copied().collect());
            return;
        }
        go(adjs, i + 1, used, cur, out);
        let [x, y] = adjs[i].extremities();
        if !used.contains(&x) && !used.contains(&y) {
            used.insert(x);
            used.insert(y);
            cur.push(adjs[i]);
            go(adjs, i + 1, used, cur, out);
            cur.pop();
            used.remove(&x);
            used.remove(&y);
        }
    }
    let mut out = Vec::new();
    go(adjs, 0, &mut BTreeSet::new(), &mut Vec::new(), &mut out);
    out
}

/// One labeling of the internal nodes restricted to a set of adjacencies,
/// with its change count and discarded weight.
#[derive(Debug, Clone)]
pub struct Scored {
    /// Index into the list of consistent subsets, per internal node.
    pub choice: Vec<u16>,
    pub changes: u64,
    pub discarded: u64,
}

impl Scored {
    pub fn cost(&self, alpha: Alpha) -> Cost {
        alpha.cost(self.changes, self.discarded)
    }
}

/// All consistent labelings over a set of adjacencies.
pub struct Enumeration {
    pub internal: Vec<usize>,
    pub options: Vec<BTreeSet<Adjacency>>,
    pub all: Vec<Scored>,
}

impl Enumeration {
    pub fn labels(&self, s: &Scored) -> Vec<(usize, BTreeSet<Adjacency>)> {
        self.internal.iter().zip(&s.choice).map(|(&v, &k)| (v, self.options[k as usize].clone())).collect()
    }
}

/// Enumerates every consistent labeling over `adjs`, or `None` when there are
/// more than `limit`.
pub fn enumerate(phylo: &Phylogeny, weights: &WeightTable, adjs: &[Adjacency], limit: u64) -> Option<Enumeration> {
    assert!(adjs.len() <= 64);
    let tree = phylo.tree();
    let bits = |set: &BTreeSet<Adjacency>| -> u64 {
        adjs.iter().enumerate().filter(|(_, a)| set.contains(a)).fold(0, |m, (i, _)| m | 1 << i)
    };
    let options = matchings(adjs);
    let option_bits: Vec<u64> = options.iter().map(bits).collect();
    let internal: Vec<usize> = tree.internal_nodes().collect();
    let total = (options.len() as u64).checked_pow(internal.len() as u32)?;
    if total > limit {
        return None;
    }
    let mut slot = vec![usize::MAX; tree.len()];
    for (k, &v) in internal.iter().enumerate() {
        slot[v] = k;
    }
    let leaf_bits: Vec<u64> =
        (0..tree.len()).map(|v| if tree.is_leaf(v) { bits(phylo.leaf_adjacencies(v)) } else { 0 }).collect();
    // discarded[k][o]: weight dropped at internal node k by option o.
    let discarded: Vec<Vec<u64>> = internal
        .iter()
        .map(|&v| {
            option_bits
                .iter()
                .map(|&m| {
                    adjs.iter()
                        .enumerate()
                        .filter(|(i, _)| m >> i & 1 == 0)
                        .map(|(_, a)| u64::from(weights.get(v, a).micros()))
                        .sum()
                })
                .collect()
        })
        .collect();
    let edges: Vec<(usize, usize)> = tree.edges().collect();
    let mut all = Vec::with_capacity(total as usize);
    let mut index = vec![0usize; internal.len()];
    let mut label = leaf_bits.clone();
    loop {
        for (k, &v) in internal.iter().enumerate() {
            label[v] = option_bits[index[k]];
        }
        let changes = edges.iter().map(|&(u, v)| u64::from((label[u] ^ label[v]).count_ones())).sum();
        let discarded = index.iter().enumerate().map(|(k, &o)| discarded[k][o]).sum();
        all.push(Scored { choice: index.iter().map(|&o| o as u16).collect(), changes, discarded });
        // Odometer step.
        let mut k = 0;
        loop {
            if k == index.len() {
                return Some(Enumeration { internal, options, all });
            }
            index[k] += 1;
            if index[k] < options.len() {
                break;
            }
            index[k] = 0;
            k += 1;
        }
    }
}

pub fn optimum(e: &Enumeration, alpha: Alpha) -> Cost {
    e.all.iter().map(|s| s.cost(alpha)).min().expect("at least the empty labeling")
}

/// Smallest number of changes over all presence histories of one adjacency,
/// by enumeration of the internal states.
pub fn min_history_changes(phylo: &Phylogeny, adj: &Adjacency) -> u64 {
    let tree = phylo.tree();
    let internal: Vec<usize> = tree.internal_nodes().collect();
    let mut state = vec![false; tree.len()];
    for v in tree.leaves() {
        state[v] = phylo.leaf_adjacencies(v).contains(adj);
    }
    let mut best = u64::MAX;
    for bits in 0u64..(1 << internal.len()) {
        for (k, &v) in internal.iter().enumerate() {
            state[v] = bits >> k & 1 == 1;
        }
        let c = tree.edges().filter(|&(u, v)| state[u] != state[v]).count() as u64;
        best = best.min(c);
    }
    best
}

/// Boltzmann presence probability at every node by enumerating the states of
/// all internal nodes.
pub fn brute_boltzmann(phylo: &Phylogeny, adj: &Adjacency, kt: f64) -> Vec<f64> {
    let tree = phylo.tree();
    let internal: Vec<usize> = tree.internal_nodes().collect();
    let mut state = vec![false; tree.len()];
    for v in tree.leaves() {
        state[v] = phylo.leaf_adjacencies(v).contains(adj);
    }
    // Shift by the minimum change count so small kT does not underflow.
    let mut scenarios = Vec::with_capacity(1 << internal.len());
    for bits in 0u64..(1 << internal.len()) {
        for (k, &v) in internal.iter().enumerate() {
            state[v] = bits >> k & 1 == 1;
        }
        let c = tree.edges().filter(|&(u, v)| state[u] != state[v]).count() as f64;
        scenarios.push((bits, c));
    }
    let min = scenarios.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut present = vec![0.0; tree.len()];
    for &(bits, c) in &scenarios {
        let b = (-(c - min) / kt).exp();
        z += b;
        for (k, &v) in internal.iter().enumerate() {
            if bits >> k & 1 == 1 {
                present[v] += b;
            }
        }
    }
    let mut out = vec![0.0; tree.len()];
    for &v in &internal {
        out[v] = present[v] / z;
    }
    for v in tree.leaves() {
        out[v] = if state[v] { 1.0 } else { 0.0 };
    }
    out
}

/// DCJ distance by breadth-first search over all single DCJ operations.
/// Genomes are consistent adjacency sets over the extremities of `markers`.
pub fn dcj_bfs(a: &BTreeSet<Adjacency>, b: &BTreeSet<Adjacency>, markers: u32) -> usize {
    let extremities: Vec<Extremity> = (1..=markers).flat_map(|m| [Extremity::tail(m), Extremity::head(m)]).collect();
    let mut seen: HashMap<BTreeSet<Adjacency>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(a.clone(), 0);
    queue.push_back(a.clone());
    while let Some(g) = queue.pop_front() {
        let d = seen[&g];
        if &g == b {
            return d;
        }
        for next in dcj_neighbours(&g, &extremities) {
            if !seen.contains_key(&next) {
                seen.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }
    unreachable!("every genome is reachable by DCJ")
}

fn adj(x: Extremity, y: Extremity) -> Option<Adjacency> {
    Adjacency::new(x, y).ok()
}

/// Results of one DCJ: cut one or two adjacencies (or use telomeres) and
/// rejoin the freed extremities in another way.
fn dcj_neighbours(g: &BTreeSet<Adjacency>, extremities: &[Extremity]) -> Vec<BTreeSet<Adjacency>> {
    let used: BTreeSet<Extremity> = g.iter().flat_map(|a| a.extremities()).collect();
    let telomeres: Vec<Extremity> = extremities.iter().copied().filter(|x| !used.contains(x)).collect();
    let adjs: Vec<Adjacency> = g.iter().copied().collect();
    let mut out = Vec::new();
    let mut push = |remove: &[Adjacency], add: &[Option<Adjacency>]| {
        if add.iter().any(|a| a.is_none()) {
            return;
        }
        let mut h = g.clone();
        for r in remove {
            h.remove(r);
        }
        for a in add.iter().flatten() {
            h.insert(*a);
        }
        out.push(h);
    };
    // Cut one adjacency.
    for &p in &adjs {
        push(&[p], &[]);
    }
    // Join two telomeres.
    for i in 0..telomeres.len() {
        for j in i + 1..telomeres.len() {
            push(&[], &[adj(telomeres[i], telomeres[j])]);
        }
    }
    // Two adjacencies into two others.
    for i in 0..adjs.len() {
        for j in i + 1..adjs.len() {
            let [p, q] = adjs[i].extremities();
            let [r, s] = adjs[j].extremities();
            push(&[adjs[i], adjs[j]], &[adj(p, r), adj(q, s)]);
            push(&[adjs[i], adjs[j]], &[adj(p, s), adj(q, r)]);
        }
    }
    // One adjacency and one telomere: keep one end joined to the telomere.
    for &p in &adjs {
        let [x, y] = p.extremities();
        for &t in &telomeres {
            push(&[p], &[adj(x, t)]);
            push(&[p], &[adj(y, t)]);
        }
    }
    out
}
