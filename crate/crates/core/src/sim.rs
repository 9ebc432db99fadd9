//! Benchmark generation: birth-death trees, evolution of a unichromosomal
//! root genome by inversions and translocations, and scoring of
//! reconstructed adjacencies against the simulated truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::car::{Car, CarKind};
use crate::error::{Error, Result};
use crate::genome::{Adjacency, Genome, MarkerId, SignedMarker};
use crate::io;
use crate::labeling::Labeling;
use crate::tree::{Node, Phylogeny, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_markers: u32,
    pub n_leaves: usize,
    pub birth_rate: f64,
    pub death_rate: f64,
    /// The tree diameter is scaled to `diameter_factor * n_markers`.
    pub diameter_factor: f64,
    /// Probability that an event is an inversion; translocation otherwise.
    pub p_inversion: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_markers: 500,
            n_leaves: 6,
            birth_rate: 0.001,
            death_rate: 0.0,
            diameter_factor: 2.0,
            p_inversion: 0.9,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_markers == 0 {
            return Err(Error::input("n_markers must be positive"));
        }
        if self.n_leaves < 2 {
            return Err(Error::input("at least two leaves are needed"));
        }
        if !(self.birth_rate > 0.0 && self.birth_rate.is_finite()) {
            return Err(Error::input("birth rate must be positive"));
        }
        if !(self.death_rate >= 0.0 && self.death_rate <= self.birth_rate) {
            return Err(Error::input("death rate must lie in [0, birth rate]"));
        }
        if !(self.diameter_factor > 0.0 && self.diameter_factor.is_finite()) {
            return Err(Error::input("diameter factor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_inversion) {
            return Err(Error::input("inversion probability must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn p_translocation(&self) -> f64 {
        1.0 - self.p_inversion
    }

    /// Generator for replicate `index`: one independent stream per replicate.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Unscaled birth-death tree grown forward in time until `n_leaves` lineages
/// are alive, then extended by one more waiting time. Extinct lineages are
/// pruned and the resulting unary nodes suppressed. Restarts on extinction.
fn birth_death<R: Rng>(config: &SimConfig, rng: &mut R) -> (Vec<Option<usize>>, Vec<f64>) {
    let total = config.birth_rate + config.death_rate;
    let p_birth = config.birth_rate / total;
    'restart: loop {
        // parent and length of every node; node 0 is the root.
        let mut parent: Vec<Option<usize>> = vec![None, Some(0), Some(0)];
        let mut length = vec![0.0, 0.0, 0.0];
        let mut alive: Vec<usize> = vec![1, 2];
        let mut dead: BTreeSet<usize> = BTreeSet::new();
        loop {
            let rate = alive.len() as f64 * total;
            let wait = Exp::new(rate).expect("positive rate").sample(rng);
            for &v in &alive {
                length[v] += wait;
            }
            if alive.len() == config.n_leaves {
                break;
            }
            let k = rng.random_range(0..alive.len());
            let v = alive.swap_remove(k);
            if rng.random::<f64>() < p_birth {
                for _ in 0..2 {
                    parent.push(Some(v));
                    length.push(0.0);
                    alive.push(parent.len() - 1);
                }
            } else {
                dead.insert(v);
                if alive.is_empty() {
                    continue 'restart;
                }
            }
        }
        if dead.is_empty() {
            return (parent, length);
        }
        return prune(&parent, &length, &alive);
    }
}

/// Keeps the ancestors of `alive` and merges unary nodes into their child.
fn prune(parent: &[Option<usize>], length: &[f64], alive: &[usize]) -> (Vec<Option<usize>>, Vec<f64>) {
    let n = parent.len();
    let mut keep = vec![false; n];
    for &leaf in alive {
        let mut v = Some(leaf);
        while let Some(x) = v {
            if keep[x] {
                break;
            }
            keep[x] = true;
            v = parent[x];
        }
    }
    let mut kids = vec![0usize; n];
    for v in 0..n {
        if let (true, Some(p)) = (keep[v], parent[v]) {
            kids[p] += 1;
        }
    }
    // Walk up from each kept node to its nearest kept, branching ancestor.
    let mut new_id = vec![usize::MAX; n];
    let mut out_parent = Vec::new();
    let mut out_len = Vec::new();
    let mut root = 0;
    while kids[root] == 1 {
        root = (0..n).find(|&c| keep[c] && parent[c] == Some(root)).expect("child");
    }
    let mut order: Vec<usize> = (0..n).filter(|&v| keep[v] && (v == root || kids[v] != 1)).collect();
    order.sort_unstable();
    for &v in &order {
        new_id[v] = out_parent.len();
        out_parent.push(None);
        out_len.push(0.0);
    }
    for &v in &order {
        if v == root {
            continue;
        }
        let mut len = length[v];
        let mut p = parent[v].expect("non-root");
        while new_id[p] == usize::MAX {
            len += length[p];
            p = parent[p].expect("non-root");
        }
        out_parent[new_id[v]] = Some(new_id[p]);
        out_len[new_id[v]] = len;
    }
    (out_parent, out_len)
}

fn diameter(tree: &Tree) -> f64 {
    let mut down = vec![0.0f64; tree.len()];
    let mut best = 0.0f64;
    for &v in tree.postorder() {
        let mut top = [0.0f64; 2];
        for &c in tree.children(v) {
            let d = down[c] + tree.node(c).branch_length.unwrap_or(0.0);
            if d > top[0] {
                top = [d, top[0]];
            } else if d > top[1] {
                top[1] = d;
            }
        }
        down[v] = top[0];
        best = best.max(top[0] + top[1]);
    }
    best
}

/// Random tree with `n_leaves` leaves named `L1`…, internal nodes named
/// `N1`… in post-order, and branch lengths scaled so the diameter equals
/// `diameter_factor * n_markers`.
pub fn simulate_tree<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<Tree> {
    config.validate()?;
    let (parent, length) = birth_death(config, rng);
    let mut nodes: Vec<Node> = (0..parent.len())
        .map(|v| Node { name: v.to_string(), parent: parent[v], children: vec![], branch_length: Some(length[v]) })
        .collect();
    nodes[0].branch_length = None;
    for v in 0..nodes.len() {
        if let Some(p) = parent[v] {
            nodes[p].children.push(v);
        }
    }
    let raw = Tree::new(nodes)?;
    let scale = config.diameter_factor * f64::from(config.n_markers) / diameter(&raw);
    let mut nodes = raw.nodes().to_vec();
    let (mut leaves, mut internal) = (0, 0);
    for &v in raw.postorder() {
        if raw.is_leaf(v) {
            leaves += 1;
            nodes[v].name = format!("L{leaves}");
        } else {
            internal += 1;
            nodes[v].name = format!("N{internal}");
        }
        if let Some(l) = nodes[v].branch_length.as_mut() {
            *l *= scale;
        }
    }
    Tree::new(nodes)
}

/// A genome as a list of linear chromosomes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SimGenome {
    pub chromosomes: Vec<Vec<SignedMarker>>,
}

impl SimGenome {
    pub fn identity(n: u32) -> Self {
        SimGenome { chromosomes: vec![(1..=SignedMarker::from(n)).collect()] }
    }

    pub fn to_genome(&self, universe: Arc<BTreeSet<MarkerId>>) -> Result<Genome> {
        Genome::from_chromosomes(self.chromosomes.iter().map(|c| (CarKind::Linear, c.as_slice())), universe)
    }

    pub fn markers(&self) -> BTreeSet<MarkerId> {
        self.chromosomes.iter().flatten().map(|m| m.unsigned_abs() as MarkerId).collect()
    }
}

/// Reverses positions `i..=j` of one chromosome and flips their signs.
pub fn apply_inversion(genome: &SimGenome, chromosome: usize, i: usize, j: usize) -> Result<SimGenome> {
    let c = genome
        .chromosomes
        .get(chromosome)
        .ok_or_else(|| Error::input(format!("no chromosome {chromosome}")))?;
    if i > j || j >= c.len() {
        return Err(Error::input(format!("invalid segment {i}..={j} on a chromosome of length {}", c.len())));
    }
    let mut out = genome.clone();
    let seg = &mut out.chromosomes[chromosome][i..=j];
    seg.reverse();
    for m in seg {
        *m = -*m;
    }
    Ok(out)
}

/// Reciprocal translocation: chromosome `a` keeps its first `i` markers and
/// receives the suffix of `b` after its first `j` markers, and vice versa.
/// Chromosomes left empty are removed.
pub fn apply_translocation(genome: &SimGenome, a: usize, i: usize, b: usize, j: usize) -> Result<SimGenome> {
    let n = genome.chromosomes.len();
    if a == b || a >= n || b >= n {
        return Err(Error::input("translocation needs two distinct chromosomes"));
    }
    let (ca, cb) = (&genome.chromosomes[a], &genome.chromosomes[b]);
    if i > ca.len() || j > cb.len() {
        return Err(Error::input("translocation cut outside the chromosome"));
    }
    let mut out = genome.clone();
    out.chromosomes[a] = ca[..i].iter().chain(&cb[j..]).copied().collect();
    out.chromosomes[b] = cb[..j].iter().chain(&ca[i..]).copied().collect();
    out.chromosomes.retain(|c| !c.is_empty());
    Ok(out)
}

/// Counts of the events applied on one branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EventCounts {
    pub inversions: u64,
    pub translocations: u64,
}

impl EventCounts {
    pub fn total(&self) -> u64 {
        self.inversions + self.translocations
    }
}

/// Number of events on a branch: its length rounded half up, at least 0.
pub fn events_for_length(length: f64) -> u64 {
    if length.is_finite() && length > 0.0 {
        (length + 0.5).floor() as u64
    } else {
        0
    }
}

fn random_event<R: Rng>(genome: &SimGenome, p_inversion: f64, rng: &mut R) -> (SimGenome, bool) {
    let n = genome.chromosomes.len();
    let translocate = n >= 2 && rng.random::<f64>() >= p_inversion;
    if translocate {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let i = rng.random_range(0..=genome.chromosomes[a].len());
        let j = rng.random_range(0..=genome.chromosomes[b].len());
        (apply_translocation(genome, a, i, b, j).expect("valid cut"), false)
    } else {
        let c = rng.random_range(0..n);
        let len = genome.chromosomes[c].len();
        let (x, y) = (rng.random_range(0..len), rng.random_range(0..len));
        (apply_inversion(genome, c, x.min(y), x.max(y)).expect("valid segment"), true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    #[serde(skip)]
    pub tree: Tree,
    /// True genome at every node.
    pub genomes: Vec<SimGenome>,
    /// Events on the branch above each node (zero at the root).
    pub events: Vec<EventCounts>,
    pub n_markers: u32,
}

impl SimResult {
    pub fn total_events(&self) -> u64 {
        self.events.iter().map(EventCounts::total).sum()
    }

    pub fn universe(&self) -> Arc<BTreeSet<MarkerId>> {
        Arc::new((1..=self.n_markers).collect())
    }

    /// The leaves and their genomes, as a reconstruction input.
    pub fn phylogeny(&self) -> Result<Phylogeny> {
        let u = self.universe();
        let genomes = self
            .tree
            .leaves()
            .map(|v| Ok((self.tree.name(v).to_string(), self.genomes[v].to_genome(u.clone())?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Phylogeny::new(self.tree.clone(), genomes)
    }

    /// True adjacency sets at every node.
    pub fn true_labeling(&self) -> Result<Labeling> {
        let u = self.universe();
        let sets = self
            .genomes
            .iter()
            .map(|g| Ok(g.to_genome(u.clone())?.into_adjacencies()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Labeling::from_sets(sets))
    }

    /// Writes `tree.nwk`, `leaves.tsv`, `ancestors.tsv` and `events.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("tree.nwk"), io::write_newick(&self.tree))?;
        let rows = |leaf: bool| -> String {
            let mut s = String::new();
            for v in self.tree.preorder().filter(|&v| self.tree.is_leaf(v) == leaf) {
                for c in &self.genomes[v].chromosomes {
                    let car = Car::new(CarKind::Linear, c.clone()).expect("non-empty");
                    s.push_str(&io::format_cars(self.tree.name(v), &[car]));
                }
            }
            s
        };
        std::fs::write(dir.join("leaves.tsv"), rows(true))?;
        std::fs::write(dir.join("ancestors.tsv"), rows(false))?;
        let mut ev = String::from("node\tinversions\ttranslocations\n");
        for v in self.tree.preorder() {
            let e = self.events[v];
            ev.push_str(&format!("{}\t{}\t{}\n", self.tree.name(v), e.inversions, e.translocations));
        }
        std::fs::write(dir.join("events.tsv"), ev)?;
        Ok(())
    }
}

/// Simulates one replicate with the given generator.
pub fn evolve_with<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<SimResult> {
    let tree = simulate_tree(config, rng)?;
    let mut genomes = vec![SimGenome { chromosomes: vec![] }; tree.len()];
    let mut events = vec![EventCounts::default(); tree.len()];
    genomes[tree.root()] = SimGenome::identity(config.n_markers);
    for v in tree.preorder() {
        let Some(p) = tree.parent(v) else { continue };
        let mut g = genomes[p].clone();
        for _ in 0..events_for_length(tree.node(v).branch_length.unwrap_or(0.0)) {
            let (next, inversion) = random_event(&g, config.p_inversion, rng);
            g = next;
            if inversion {
                events[v].inversions += 1;
            } else {
                events[v].translocations += 1;
            }
        }
        genomes[v] = g;
    }
    Ok(SimResult { tree, genomes, events, n_markers: config.n_markers })
}

/// Simulates replicate 0 of `config`.
pub fn evolve(config: &SimConfig) -> Result<SimResult> {
    evolve_with(config, &mut config.rng(0))
}

/// Simulates replicates `0..count` in parallel; the result does not depend on
/// the number of threads.
pub fn evolve_replicates(config: &SimConfig, count: u64) -> Result<Vec<SimResult>> {
    (0..count).into_par_iter().map(|r| evolve_with(config, &mut config.rng(r))).collect()
}

/// Adjacency-level agreement counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn of(truth: &BTreeSet<Adjacency>, predicted: &BTreeSet<Adjacency>) -> Self {
        let tp = truth.intersection(predicted).count() as u64;
        Confusion { tp, fp: predicted.len() as u64 - tp, fn_: truth.len() as u64 - tp }
    }

    fn add(&mut self, o: Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    pub f05: f64,
    /// Set when a ratio had a zero denominator and was reported as 1.
    pub degenerate: bool,
}

impl Scores {
    pub fn from_counts(c: Confusion) -> Self {
        let mut degenerate = false;
        let mut ratio = |num: u64, den: u64| {
            if den == 0 {
                degenerate = true;
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        let r = ratio(c.tp, c.tp + c.fn_);
        let p = ratio(c.tp, c.tp + c.fp);
        let f = |beta2: f64| {
            let den = beta2 * p + r;
            if den == 0.0 {
                0.0
            } else {
                (1.0 + beta2) * p * r / den
            }
        };
        Scores { sensitivity: r, precision: p, f1: f(1.0), f05: f(0.25), degenerate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// Internal nodes with their counts.
    pub per_node: Vec<(String, Confusion)>,
    pub pooled: Confusion,
    pub scores: Scores,
}

/// Compares the adjacencies of every internal node with the truth.
pub fn score_reconstruction(tree: &Tree, truth: &Labeling, predicted: &Labeling) -> Result<Evaluation> {
    if truth.len() != tree.len() || predicted.len() != tree.len() {
        return Err(Error::input("labelings do not match the tree"));
    }
    let mut per_node = Vec::new();
    let mut pooled = Confusion::default();
    for v in tree.internal_nodes() {
        let c = Confusion::of(truth.set(v), predicted.set(v));
        pooled.add(c);
        per_node.push((tree.name(v).to_string(), c));
    }
    Ok(Evaluation { per_node, pooled, scores: Scores::from_counts(pooled) })
}

/// Like [`score_reconstruction`], with labelings given as adjacency sets by
/// node name; internal nodes missing from `predicted` count as empty.
pub fn score_named(
    tree: &Tree,
    truth: &BTreeMap<String, BTreeSet<Adjacency>>,
    predicted: &BTreeMap<String, BTreeSet<Adjacency>>,
) -> Result<Evaluation> {
    let to_labeling = |m: &BTreeMap<String, BTreeSet<Adjacency>>, strict: bool| -> Result<Labeling> {
        for name in m.keys() {
            if tree.find(name).is_none() {
                return Err(Error::input(format!("node `{name}` is not in the tree")));
            }
        }
        let mut sets = vec![BTreeSet::new(); tree.len()];
        for v in tree.internal_nodes() {
            match m.get(tree.name(v)) {
                Some(s) => sets[v] = s.clone(),
                None if strict => return Err(Error::input(format!("no truth for `{}`", tree.name(v)))),
                None => {}
            }
        }
        Ok(Labeling::from_sets(sets))
    };
    score_reconstruction(tree, &to_labeling(truth, true)?, &to_labeling(predicted, false)?)
}
