//! Markers, extremities, adjacencies and genomes, together with the SCJ and
//! DCJ distances between genomes over a shared marker set.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type MarkerId = u32;

/// Signed marker occurrence in a chromosome; the sign gives the orientation.
pub type SignedMarker = i64;

/// Which end of a marker an extremity denotes. `Tail < Head`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum End {
    Tail,
    Head,
}

impl End {
    pub fn other(self) -> End {
        match self {
            End::Tail => End::Head,
            End::Head => End::Tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Extremity {
    pub marker: MarkerId,
    pub end: End,
}

impl Extremity {
    pub fn new(marker: MarkerId, end: End) -> Result<Self> {
        if marker == 0 {
            return Err(Error::input("marker ids start at 1"));
        }
        Ok(Extremity { marker, end })
    }

    pub fn tail(marker: MarkerId) -> Self {
        debug_assert!(marker >= 1);
        Extremity { marker, end: End::Tail }
    }

    pub fn head(marker: MarkerId) -> Self {
        debug_assert!(marker >= 1);
        Extremity { marker, end: End::Head }
    }

    /// The opposite extremity of the same marker.
    pub fn sibling(self) -> Self {
        Extremity { marker: self.marker, end: self.end.other() }
    }

    /// Extremity through which a chromosome enters a signed marker.
    pub fn left_of(m: SignedMarker) -> Self {
        let id = m.unsigned_abs() as MarkerId;
        if m > 0 {
            Extremity::tail(id)
        } else {
            Extremity::head(id)
        }
    }

    /// Extremity through which a chromosome leaves a signed marker.
    pub fn right_of(m: SignedMarker) -> Self {
        Extremity::left_of(m).sibling()
    }
}

impl fmt::Display for Extremity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.end {
            End::Tail => 't',
            End::Head => 'h',
        };
        write!(f, "{}{}", self.marker, c)
    }
}

impl FromStr for Extremity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (num, end) = match s.char_indices().last() {
            Some((i, 'h')) => (&s[..i], End::Head),
            Some((i, 't')) => (&s[..i], End::Tail),
            _ => return Err(Error::input(format!("bad extremity `{s}` (expected e.g. 5h or 12t)"))),
        };
        let marker: MarkerId = num
            .parse()
            .map_err(|_| Error::input(format!("bad marker id in extremity `{s}`")))?;
        Extremity::new(marker, end)
    }
}

/// Unordered pair of extremities of two distinct markers, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Adjacency {
    a: Extremity,
    b: Extremity,
}

impl Adjacency {
    /// Rejects pairs that reuse an extremity or join the two ends of one
    /// marker (single-marker circles are outside the model).
    pub fn new(x: Extremity, y: Extremity) -> Result<Self> {
        if x.marker == y.marker {
            return Err(Error::input(format!(
                "adjacency ({x},{y}) joins two extremities of marker {}",
                x.marker
            )));
        }
        Ok(if x < y { Adjacency { a: x, b: y } } else { Adjacency { a: y, b: x } })
    }

    pub fn a(&self) -> Extremity {
        self.a
    }

    pub fn b(&self) -> Extremity {
        self.b
    }

    pub fn extremities(&self) -> [Extremity; 2] {
        [self.a, self.b]
    }

    pub fn contains(&self, x: Extremity) -> bool {
        self.a == x || self.b == x
    }

    /// The partner of `x` in this adjacency; `None` if `x` is not an end.
    pub fn other(&self, x: Extremity) -> Option<Extremity> {
        if self.a == x {
            Some(self.b)
        } else if self.b == x {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn conflicts_with(&self, other: &Adjacency) -> bool {
        self != other && (other.contains(self.a) || other.contains(self.b))
    }
}

/// Sorts before every valid adjacency; used as a range bound.
pub(crate) const MIN_ADJACENCY: Adjacency = Adjacency {
    a: Extremity { marker: 0, end: End::Tail },
    b: Extremity { marker: 0, end: End::Tail },
};

impl fmt::Display for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

/// Outcome of a consistency check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consistency {
    pub consistent: bool,
    /// Every extremity used by two or more adjacencies, sorted.
    pub conflicts: Vec<Extremity>,
}

pub fn check_consistency<'a, I>(adjs: I) -> Consistency
where
    I: IntoIterator<Item = &'a Adjacency>,
{
    let mut degree: BTreeMap<Extremity, usize> = BTreeMap::new();
    for adj in adjs {
        for x in adj.extremities() {
            *degree.entry(x).or_default() += 1;
        }
    }
    let conflicts: Vec<Extremity> =
        degree.into_iter().filter(|&(_, d)| d >= 2).map(|(x, _)| x).collect();
    Consistency { consistent: conflicts.is_empty(), conflicts }
}

/// A consistent set of adjacencies over a fixed marker universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genome {
    adjacencies: BTreeSet<Adjacency>,
    universe: Arc<BTreeSet<MarkerId>>,
}

impl Genome {
    pub fn new(adjacencies: BTreeSet<Adjacency>, universe: Arc<BTreeSet<MarkerId>>) -> Result<Self> {
        let check = check_consistency(&adjacencies);
        if !check.consistent {
            let list: Vec<String> = check.conflicts.iter().map(|x| x.to_string()).collect();
            return Err(Error::input(format!("conflicting extremities: {}", list.join(", "))));
        }
        for adj in &adjacencies {
            for x in adj.extremities() {
                if !universe.contains(&x.marker) {
                    return Err(Error::input(format!(
                        "adjacency {adj} references marker {} outside the universe",
                        x.marker
                    )));
                }
            }
        }
        Ok(Genome { adjacencies, universe })
    }

    /// Builds a genome from chromosomes given as signed marker orders.
    pub fn from_chromosomes<'a, I>(chromosomes: I, universe: Arc<BTreeSet<MarkerId>>) -> Result<Self>
    where
        I: IntoIterator<Item = (crate::car::CarKind, &'a [SignedMarker])>,
    {
        let mut adjs = BTreeSet::new();
        for (kind, order) in chromosomes {
            for adj in crate::car::chromosome_adjacencies(kind, order)? {
                adjs.insert(adj);
            }
        }
        Genome::new(adjs, universe)
    }

    pub fn adjacencies(&self) -> &BTreeSet<Adjacency> {
        &self.adjacencies
    }

    pub fn universe(&self) -> &Arc<BTreeSet<MarkerId>> {
        &self.universe
    }

    pub fn into_adjacencies(self) -> BTreeSet<Adjacency> {
        self.adjacencies
    }

    pub fn len(&self) -> usize {
        self.adjacencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacencies.is_empty()
    }
}

fn same_universe(a: &Genome, b: &Genome) -> Result<()> {
    if Arc::ptr_eq(&a.universe, &b.universe) || a.universe == b.universe {
        Ok(())
    } else {
        Err(Error::input("genomes are defined over different marker sets"))
    }
}

/// Size of the symmetric difference of two adjacency sets.
pub fn scj_count(a: &BTreeSet<Adjacency>, b: &BTreeSet<Adjacency>) -> usize {
    a.symmetric_difference(b).count()
}

pub fn scj_distance(a: &Genome, b: &Genome) -> Result<usize> {
    same_universe(a, b)?;
    Ok(scj_count(&a.adjacencies, &b.adjacencies))
}

/// DCJ distance `N - C - I/2` from the cycles `C` and odd paths `I` of the
/// adjacency graph of the two genomes. Telomeres are free extremities.
pub fn dcj_distance(a: &Genome, b: &Genome) -> Result<usize> {
    same_universe(a, b)?;
    let partner = |g: &Genome| {
        let mut m: HashMap<Extremity, Extremity> = HashMap::with_capacity(2 * g.len());
        for adj in &g.adjacencies {
            m.insert(adj.a, adj.b);
            m.insert(adj.b, adj.a);
        }
        m
    };
    let in_a = partner(a);
    let in_b = partner(b);

    let mut seen: HashMap<Extremity, bool> = HashMap::new();
    let mut cycles = 0usize;
    let mut odd_paths = 0usize;
    for &marker in a.universe.iter() {
        for start in [Extremity::tail(marker), Extremity::head(marker)] {
            if seen.contains_key(&start) {
                continue;
            }
            // Every extremity has at most one partner per genome, so the
            // component is a path or an alternating cycle.
            let mut stack = vec![start];
            seen.insert(start, true);
            let mut vertices = 0usize;
            let mut edge_ends = 0usize;
            while let Some(x) = stack.pop() {
                vertices += 1;
                for next in [in_a.get(&x), in_b.get(&x)].into_iter().flatten() {
                    edge_ends += 1;
                    if !seen.contains_key(next) {
                        seen.insert(*next, true);
                        stack.push(*next);
                    }
                }
            }
            let edges = edge_ends / 2;
            if edges == vertices {
                cycles += 1;
            } else if vertices % 2 == 1 {
                odd_paths += 1;
            }
        }
    }
    let n = a.universe.len();
    Ok(n - cycles - odd_paths / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::car::CarKind;

    fn adj(x: &str, y: &str) -> Adjacency {
        Adjacency::new(x.parse().unwrap(), y.parse().unwrap()).unwrap()
    }

    fn universe(n: u32) -> Arc<BTreeSet<MarkerId>> {
        Arc::new((1..=n).collect())
    }

    fn linear(chroms: &[&[i64]], n: u32) -> Genome {
        Genome::from_chromosomes(chroms.iter().map(|c| (CarKind::Linear, *c)), universe(n)).unwrap()
    }

    #[test]
    fn extremity_order_and_parse() {
        assert!(Extremity::tail(1) < Extremity::head(1));
        assert!(Extremity::head(1) < Extremity::tail(2));
        assert_eq!("12t".parse::<Extremity>().unwrap(), Extremity::tail(12));
        assert_eq!(Extremity::head(5).to_string(), "5h");
        assert!("0h".parse::<Extremity>().is_err());
        assert!("5x".parse::<Extremity>().is_err());
        assert!("h".parse::<Extremity>().is_err());
    }

    #[test]
    fn adjacency_is_canonical() {
        let x = adj("2t", "1h");
        assert_eq!(x.a(), Extremity::head(1));
        assert_eq!(x, adj("1h", "2t"));
        assert!(Adjacency::new(Extremity::head(3), Extremity::tail(3)).is_err());
        assert!(Adjacency::new(Extremity::head(3), Extremity::head(3)).is_err());
    }

    #[test]
    fn consistency_examples() {
        assert!(check_consistency(&[]).consistent);
        let path = [adj("1h", "2t"), adj("2h", "3t")];
        assert!(check_consistency(&path).consistent);
        let bad = [adj("1h", "2t"), adj("1h", "3t")];
        let c = check_consistency(&bad);
        assert!(!c.consistent);
        assert_eq!(c.conflicts, vec![Extremity::head(1)]);
    }

    #[test]
    fn genome_rejects_conflicts_and_foreign_markers() {
        let u = universe(3);
        let bad: BTreeSet<_> = [adj("1h", "2t"), adj("1h", "3t")].into_iter().collect();
        assert!(Genome::new(bad, u.clone()).is_err());
        let foreign: BTreeSet<_> = [adj("1h", "4t")].into_iter().collect();
        assert!(Genome::new(foreign, u).is_err());
    }

    #[test]
    fn scj_examples() {
        let u = universe(3);
        let g = |v: &[Adjacency]| Genome::new(v.iter().copied().collect(), u.clone()).unwrap();
        let a = g(&[adj("1h", "2t"), adj("2h", "3t")]);
        assert_eq!(scj_distance(&a, &a).unwrap(), 0);
        assert_eq!(scj_distance(&g(&[adj("1h", "2t")]), &g(&[])).unwrap(), 1);
        assert_eq!(scj_distance(&a, &g(&[adj("1h", "3t")])).unwrap(), 3);
        let other = Genome::new(BTreeSet::new(), universe(4)).unwrap();
        assert!(scj_distance(&a, &other).is_err());
    }

    #[test]
    fn dcj_examples() {
        let a = linear(&[&[1, 2, 3]], 3);
        assert_eq!(dcj_distance(&a, &a).unwrap(), 0);
        assert_eq!(dcj_distance(&a, &linear(&[&[1, -2, 3]], 3)).unwrap(), 1);
        let two = linear(&[&[1, 2], &[3, 4]], 4);
        // A single reciprocal translocation: cut 1h-2t and 3h-4t, rejoin 1h-4t and 3h-2t.
        let swapped = linear(&[&[1, 4], &[3, 2]], 4);
        assert_eq!(dcj_distance(&two, &swapped).unwrap(), 1);
    }

    #[test]
    fn dcj_of_fully_fragmented_genomes() {
        let empty = Genome::new(BTreeSet::new(), universe(3)).unwrap();
        assert_eq!(dcj_distance(&empty, &empty).unwrap(), 0);
        // n-1 joins build a single chromosome.
        assert_eq!(dcj_distance(&empty, &linear(&[&[1, 2, 3]], 3)).unwrap(), 2);
    }
}
