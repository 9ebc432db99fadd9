//! Text formats: Newick trees, genome TSV and weight TSV.
//!
//! Genome rows are `name<TAB>L|C<TAB>signed markers`, one chromosome per row.
//! Weight rows are `node<TAB>extremity<TAB>extremity<TAB>weight`. Blank lines
//! and lines starting with `#` are ignored in both.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::car::{Car, CarKind};
use crate::error::{Error, Result};
use crate::genome::{Adjacency, Extremity, Genome, MarkerId, SignedMarker};
use crate::score::{Weight, WeightTable};
use crate::tree::{Node, NodeId, Phylogeny, Tree};

fn parse_err(origin: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: origin.to_path_buf(), line, msg: msg.into() }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))
}

struct NewickParser<'a> {
    text: &'a [u8],
    pos: usize,
    origin: &'a Path,
    nodes: Vec<Node>,
}

impl NewickParser<'_> {
    fn error(&self, msg: &str) -> Error {
        let before = &self.text[..self.pos.min(self.text.len())];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let col = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        parse_err(self.origin, line, format!("column {col}: {msg}"))
    }

    fn skip(&mut self) -> Result<()> {
        loop {
            match self.text.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'[') => {
                    let start = self.pos;
                    while self.text.get(self.pos).is_some_and(|&b| b != b']') {
                        self.pos += 1;
                    }
                    if self.pos == self.text.len() {
                        self.pos = start;
                        return Err(self.error("unterminated comment"));
                    }
                    self.pos += 1;
                }
                _ => return Ok(()),
            }
        }
    }

    fn peek(&mut self) -> Result<Option<u8>> {
        self.skip()?;
        Ok(self.text.get(self.pos).copied())
    }

    fn label(&mut self) -> Result<String> {
        self.skip()?;
        if self.text.get(self.pos) == Some(&b'\'') {
            self.pos += 1;
            let mut out = Vec::new();
            loop {
                match self.text.get(self.pos) {
                    None => return Err(self.error("unterminated quoted label")),
                    Some(b'\'') if self.text.get(self.pos + 1) == Some(&b'\'') => {
                        out.push(b'\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(&b) => {
                        out.push(b);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(out).map_err(|_| self.error("label is not UTF-8"));
        }
        let start = self.pos;
        while let Some(&b) = self.text.get(self.pos) {
            if b.is_ascii_whitespace() || b"()[]':;,".contains(&b) {
                break;
            }
            self.pos += 1;
        }
        String::from_utf8(self.text[start..self.pos].to_vec()).map_err(|_| self.error("label is not UTF-8"))
    }

    fn length(&mut self) -> Result<Option<f64>> {
        if self.peek()? != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip()?;
        let start = self.pos;
        while self.text.get(self.pos).is_some_and(|b| b.is_ascii_alphanumeric() || b"+-.".contains(b)) {
            self.pos += 1;
        }
        let s = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii");
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => {
                self.pos = start;
                Err(self.error(&format!("invalid branch length `{s}`")))
            }
        }
    }

    fn subtree(&mut self, parent: Option<NodeId>) -> Result<NodeId> {
        let id = self.nodes.len();
        self.nodes.push(Node { name: String::new(), parent, children: vec![], branch_length: None });
        if self.peek()? == Some(b'(') {
            self.pos += 1;
            loop {
                let c = self.subtree(Some(id))?;
                self.nodes[id].children.push(c);
                match self.peek()? {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
            self.nodes[id].name = self.label()?;
        } else {
            let name = self.label()?;
            if name.is_empty() {
                return Err(self.error("leaf without a name"));
            }
            self.nodes[id].name = name;
        }
        self.nodes[id].branch_length = self.length()?;
        Ok(id)
    }
}

/// Parses a Newick tree. Unnamed internal nodes are named `anc1`, `anc2`, …
/// in post-order, skipping names already used in the file.
pub fn parse_newick(text: &str, origin: &Path) -> Result<Tree> {
    let mut p = NewickParser { text: text.as_bytes(), pos: 0, origin, nodes: Vec::new() };
    if p.peek()?.is_none() {
        return Err(p.error("empty tree file"));
    }
    p.subtree(None)?;
    if p.peek()? != Some(b';') {
        return Err(p.error("expected `;`"));
    }
    p.pos += 1;
    if p.peek()?.is_some() {
        return Err(p.error("trailing text after `;`"));
    }
    let mut nodes = p.nodes;
    let mut seen = HashSet::new();
    for n in &nodes {
        if !n.name.is_empty() && !seen.insert(n.name.clone()) {
            return Err(parse_err(origin, 1, format!("duplicate node name `{}`", n.name)));
        }
    }
    let mut counter = 0;
    for v in postorder(&nodes) {
        if nodes[v].name.is_empty() {
            let name = loop {
                counter += 1;
                let candidate = format!("anc{counter}");
                if !seen.contains(&candidate) {
                    break candidate;
                }
            };
            seen.insert(name.clone());
            nodes[v].name = name;
        }
    }
    Tree::new(nodes)
}

fn postorder(nodes: &[Node]) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut stack = vec![(0usize, false)];
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

pub fn read_tree(path: &Path) -> Result<Tree> {
    parse_newick(&read(path)?, path)
}

fn newick_label(name: &str) -> String {
    if !name.is_empty() && name.bytes().all(|b| !b.is_ascii_whitespace() && !b"()[]':;,".contains(&b)) {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

/// Writes a tree in Newick format with all node names and any branch lengths.
pub fn write_newick(tree: &Tree) -> String {
    fn rec(tree: &Tree, v: NodeId, out: &mut String) {
        let kids = tree.children(v);
        if !kids.is_empty() {
            out.push('(');
            for (i, &c) in kids.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                rec(tree, c, out);
            }
            out.push(')');
        }
        out.push_str(&newick_label(tree.name(v)));
        if let Some(len) = tree.node(v).branch_length {
            let _ = write!(out, ":{len}");
        }
    }
    let mut s = String::new();
    rec(tree, tree.root(), &mut s);
    s.push_str(";\n");
    s
}

/// Chromosomes of each genome, in file order.
pub type ChromosomeTable = BTreeMap<String, Vec<(CarKind, Vec<SignedMarker>)>>;

fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn parse_marker(tok: &str) -> Option<SignedMarker> {
    // Accept the Unicode minus sign as well as `-`.
    let tok = tok.replace('\u{2212}', "-");
    let m: SignedMarker = tok.parse().ok()?;
    (m != 0 && m.unsigned_abs() <= u64::from(MarkerId::MAX)).then_some(m)
}

/// Reads genome rows; checks marker ids, kinds, and repeated markers within a
/// genome.
pub fn parse_chromosomes(text: &str, origin: &Path) -> Result<ChromosomeTable> {
    let mut out: ChromosomeTable = BTreeMap::new();
    let mut used: BTreeMap<String, BTreeSet<MarkerId>> = BTreeMap::new();
    for (line, row) in rows(text) {
        let cols: Vec<&str> = row.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(origin, line, format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let name = cols[0].trim();
        if name.is_empty() {
            return Err(parse_err(origin, line, "empty genome name"));
        }
        let kind = match cols[1].trim() {
            "L" | "l" => CarKind::Linear,
            "C" | "c" => CarKind::Circular,
            k => return Err(parse_err(origin, line, format!("unknown chromosome kind `{k}`"))),
        };
        let mut order = Vec::new();
        for tok in cols[2].split_whitespace() {
            let m = parse_marker(tok).ok_or_else(|| parse_err(origin, line, format!("invalid marker `{tok}`")))?;
            if !used.entry(name.to_string()).or_default().insert(m.unsigned_abs() as MarkerId) {
                return Err(parse_err(origin, line, format!("marker {} repeated in genome `{name}`", m.unsigned_abs())));
            }
            order.push(m);
        }
        if order.is_empty() {
            return Err(parse_err(origin, line, "chromosome without markers"));
        }
        if kind == CarKind::Circular && order.len() < 2 {
            return Err(parse_err(origin, line, "circular chromosome with a single marker"));
        }
        out.entry(name.to_string()).or_default().push((kind, order));
    }
    Ok(out)
}

/// Builds genomes from chromosome rows, requiring equal marker content.
pub fn genomes_from_chromosomes(table: &ChromosomeTable) -> Result<BTreeMap<String, Genome>> {
    let content = |chroms: &[(CarKind, Vec<SignedMarker>)]| -> BTreeSet<MarkerId> {
        chroms.iter().flat_map(|(_, o)| o.iter().map(|m| m.unsigned_abs() as MarkerId)).collect()
    };
    let Some((first_name, first)) = table.iter().next() else {
        return Ok(BTreeMap::new());
    };
    let universe = Arc::new(content(first));
    let mut out = BTreeMap::new();
    for (name, chroms) in table {
        let c = content(chroms);
        if c != *universe {
            let missing = universe.symmetric_difference(&c).next().expect("differs");
            return Err(Error::input(format!(
                "genome `{name}` and genome `{first_name}` differ in content (marker {missing})"
            )));
        }
        let g = Genome::from_chromosomes(chroms.iter().map(|(k, o)| (*k, o.as_slice())), universe.clone())?;
        out.insert(name.clone(), g);
    }
    Ok(out)
}

/// Adjacency sets of each named genome, without the equal-content check.
/// Used for reconstructed ancestors, whose rows may come from CAR files.
pub fn adjacency_sets(table: &ChromosomeTable) -> Result<BTreeMap<String, BTreeSet<Adjacency>>> {
    let mut out = BTreeMap::new();
    for (name, chroms) in table {
        let mut set = BTreeSet::new();
        for (kind, order) in chroms {
            set.extend(crate::car::chromosome_adjacencies(*kind, order)?);
        }
        let check = crate::genome::check_consistency(&set);
        if !check.consistent {
            return Err(Error::input(format!("genome `{name}` is inconsistent at {}", check.conflicts[0])));
        }
        out.insert(name.clone(), set);
    }
    Ok(out)
}

pub fn read_adjacency_sets(path: &Path) -> Result<BTreeMap<String, BTreeSet<Adjacency>>> {
    adjacency_sets(&parse_chromosomes(&read(path)?, path)?)
}

pub fn read_genomes(path: &Path) -> Result<BTreeMap<String, Genome>> {
    genomes_from_chromosomes(&parse_chromosomes(&read(path)?, path)?)
}

pub fn read_phylogeny(tree: &Path, genomes: &Path) -> Result<Phylogeny> {
    Phylogeny::new(read_tree(tree)?, read_genomes(genomes)?)
}

/// Genome rows for a list of CARs.
pub fn format_cars(name: &str, cars: &[Car]) -> String {
    let mut s = String::new();
    for car in cars {
        let _ = writeln!(s, "{name}\t{car}");
    }
    s
}

/// Reads a weight table. Node names must be internal nodes of `tree`, markers
/// must belong to `universe`, weights must lie in [0, 1], and each
/// (node, adjacency) pair may appear once.
pub fn parse_weights(text: &str, origin: &Path, tree: &Tree, universe: &BTreeSet<MarkerId>) -> Result<WeightTable> {
    let index = tree.name_index();
    let mut table = WeightTable::new();
    for (line, row) in rows(text) {
        let cols: Vec<&str> = row.split('\t').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(parse_err(origin, line, format!("expected 4 tab-separated columns, found {}", cols.len())));
        }
        let v = *index
            .get(cols[0])
            .ok_or_else(|| parse_err(origin, line, format!("unknown node `{}`", cols[0])))?;
        if tree.is_leaf(v) {
            return Err(parse_err(origin, line, format!("`{}` is a leaf; weights apply to internal nodes", cols[0])));
        }
        let mut ext = [Extremity::tail(1); 2];
        for (k, tok) in cols[1..3].iter().enumerate() {
            let x: Extremity = tok
                .parse()
                .map_err(|_| parse_err(origin, line, format!("invalid extremity `{tok}`")))?;
            if !universe.contains(&x.marker) {
                return Err(parse_err(origin, line, format!("unknown marker {}", x.marker)));
            }
            ext[k] = x;
        }
        let adj = Adjacency::new(ext[0], ext[1]).map_err(|e| parse_err(origin, line, e.to_string()))?;
        let w: f64 = cols[3]
            .parse()
            .map_err(|_| parse_err(origin, line, format!("invalid weight `{}`", cols[3])))?;
        if !(0.0..=1.0).contains(&w) {
            return Err(parse_err(origin, line, format!("weight {w} outside [0, 1]")));
        }
        let w = Weight::quantize(w).map_err(|e| parse_err(origin, line, e.to_string()))?;
        if table.insert(v, adj, w).is_some() {
            return Err(parse_err(origin, line, format!("duplicate entry for `{}` {adj}", cols[0])));
        }
    }
    Ok(table)
}

pub fn read_weights(path: &Path, tree: &Tree, universe: &BTreeSet<MarkerId>) -> Result<WeightTable> {
    parse_weights(&read(path)?, path, tree, universe)
}

/// Weight rows, ordered by node id then adjacency.
pub fn format_weights(tree: &Tree, table: &WeightTable) -> String {
    let mut s = String::new();
    for (v, adj, w) in table.iter() {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", tree.name(v), adj.a(), adj.b(), w);
    }
    s
}

/// Placeholder origin for text that did not come from a file.
pub fn inline() -> PathBuf {
    PathBuf::from("<input>")
}
