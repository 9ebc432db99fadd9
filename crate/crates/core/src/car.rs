//! Contiguous ancestral regions: the maximal paths and cycles induced by a
//! consistent adjacency set.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{check_consistency, Adjacency, Extremity, MarkerId, SignedMarker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CarKind {
    Linear,
    Circular,
}

impl CarKind {
    pub fn code(self) -> char {
        match self {
            CarKind::Linear => 'L',
            CarKind::Circular => 'C',
        }
    }
}

/// A CAR in canonical orientation (see [`Car::new`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Car {
    kind: CarKind,
    markers: Vec<SignedMarker>,
}

fn order_key(m: SignedMarker) -> (u64, bool) {
    (m.unsigned_abs(), m < 0)
}

fn reversed(markers: &[SignedMarker]) -> Vec<SignedMarker> {
    markers.iter().rev().map(|m| -m).collect()
}

impl Car {
    /// Canonicalizes the orientation. A linear CAR keeps whichever of its two
    /// readings is lexicographically smaller, comparing markers by id and then
    /// preferring the positive sign. A circular CAR is read so that its
    /// smallest marker comes first with positive sign.
    pub fn new(kind: CarKind, markers: Vec<SignedMarker>) -> Result<Self> {
        if markers.is_empty() || markers.contains(&0) {
            return Err(Error::input("a CAR needs at least one non-zero marker"));
        }
        if kind == CarKind::Circular && markers.len() < 2 {
            return Err(Error::input("circular CARs need at least two markers"));
        }
        let markers = match kind {
            CarKind::Linear => {
                let rev = reversed(&markers);
                let fwd_key = markers.iter().map(|&m| order_key(m));
                if fwd_key.lt(rev.iter().map(|&m| order_key(m))) {
                    markers
                } else {
                    rev
                }
            }
            CarKind::Circular => {
                let smallest = markers.iter().map(|m| m.unsigned_abs()).min().expect("non-empty");
                let mut seq = if markers.contains(&(smallest as SignedMarker)) {
                    markers
                } else {
                    reversed(&markers)
                };
                let start = seq.iter().position(|&m| m == smallest as SignedMarker).expect("present");
                seq.rotate_left(start);
                seq
            }
        };
        Ok(Car { kind, markers })
    }

    pub fn kind(&self) -> CarKind {
        self.kind
    }

    pub fn markers(&self) -> &[SignedMarker] {
        &self.markers
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.markers.len() == 1
    }

    /// The adjacencies inducing this CAR.
    pub fn adjacencies(&self) -> Vec<Adjacency> {
        chromosome_adjacencies(self.kind, &self.markers).expect("canonical CARs are well formed")
    }
}

impl fmt::Display for Car {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.markers.iter().map(|m| m.to_string()).collect();
        write!(f, "{}\t{}", self.kind.code(), body.join(" "))
    }
}

/// Adjacencies between consecutive markers of a chromosome, plus the closing
/// adjacency for a circular one.
pub fn chromosome_adjacencies(kind: CarKind, order: &[SignedMarker]) -> Result<Vec<Adjacency>> {
    if order.contains(&0) {
        return Err(Error::input("marker id 0 in chromosome"));
    }
    let mut out = Vec::with_capacity(order.len());
    for w in order.windows(2) {
        out.push(Adjacency::new(Extremity::right_of(w[0]), Extremity::left_of(w[1]))?);
    }
    if kind == CarKind::Circular {
        match order {
            [] => {}
            [_] => return Err(Error::input("circular chromosome with a single marker")),
            [first, .., last] => {
                out.push(Adjacency::new(Extremity::right_of(*last), Extremity::left_of(*first))?)
            }
        }
    }
    Ok(out)
}

/// Partitions `markers` into the maximal paths and cycles of `adjs`. Markers
/// touched by no adjacency become singleton linear CARs. Output is sorted.
pub fn extract_cars<'a, I>(adjs: I, markers: &BTreeSet<MarkerId>) -> Result<Vec<Car>>
where
    I: IntoIterator<Item = &'a Adjacency>,
{
    let adjs: Vec<&Adjacency> = adjs.into_iter().collect();
    let check = check_consistency(adjs.iter().copied());
    if !check.consistent {
        return Err(Error::input(format!(
            "cannot extract CARs from an inconsistent set ({} conflicting extremities)",
            check.conflicts.len()
        )));
    }
    let mut partner: HashMap<Extremity, Extremity> = HashMap::with_capacity(2 * adjs.len());
    for adj in &adjs {
        for x in adj.extremities() {
            if !markers.contains(&x.marker) {
                return Err(Error::input(format!("adjacency {adj} uses marker {} outside the set", x.marker)));
            }
        }
        partner.insert(adj.a(), adj.b());
        partner.insert(adj.b(), adj.a());
    }

    let mut visited: BTreeSet<MarkerId> = BTreeSet::new();
    let mut cars = Vec::new();

    // Walks from the marker entered through `entry` until a telomere or
    // until the walk returns to `entry`.
    let walk = |entry: Extremity, visited: &mut BTreeSet<MarkerId>| -> (Vec<SignedMarker>, bool) {
        let mut seq = Vec::new();
        let mut cur = entry;
        loop {
            visited.insert(cur.marker);
            let signed = match cur.end {
                crate::genome::End::Tail => cur.marker as SignedMarker,
                crate::genome::End::Head => -(cur.marker as SignedMarker),
            };
            seq.push(signed);
            match partner.get(&cur.sibling()) {
                None => return (seq, false),
                Some(&next) if next == entry => return (seq, true),
                Some(&next) => cur = next,
            }
        }
    };

    for &m in markers {
        if visited.contains(&m) {
            continue;
        }
        let tail = Extremity::tail(m);
        let head = Extremity::head(m);
        let entry = if !partner.contains_key(&tail) {
            tail
        } else if !partner.contains_key(&head) {
            head
        } else {
            continue;
        };
        let (seq, closed) = walk(entry, &mut visited);
        debug_assert!(!closed);
        cars.push(Car::new(CarKind::Linear, seq)?);
    }
    for &m in markers {
        if visited.contains(&m) {
            continue;
        }
        let (seq, closed) = walk(Extremity::tail(m), &mut visited);
        if !closed {
            return Err(Error::internal("open walk left after all paths were removed"));
        }
        cars.push(Car::new(CarKind::Circular, seq)?);
    }
    cars.sort();
    Ok(cars)
}

/// Number of CARs, total and excluding singletons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CarCounts {
    pub total: usize,
    pub non_singleton: usize,
}

pub fn car_counts(cars: &[Car]) -> CarCounts {
    CarCounts {
        total: cars.len(),
        non_singleton: cars.iter().filter(|c| !c.is_singleton()).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adj(x: &str, y: &str) -> Adjacency {
        Adjacency::new(x.parse().unwrap(), y.parse().unwrap()).unwrap()
    }

    fn set(n: u32) -> BTreeSet<MarkerId> {
        (1..=n).collect()
    }

    #[test]
    fn single_path() {
        let cars = extract_cars(&[adj("1h", "2t"), adj("2h", "3t")], &set(3)).unwrap();
        assert_eq!(cars.len(), 1);
        assert_eq!(cars[0].kind(), CarKind::Linear);
        assert_eq!(cars[0].markers(), &[1, 2, 3]);
    }

    #[test]
    fn fully_fragmented() {
        let cars = extract_cars(&[], &set(2)).unwrap();
        assert_eq!(cars.len(), 2);
        assert!(cars.iter().all(|c| c.is_singleton()));
        assert_eq!(car_counts(&cars), CarCounts { total: 2, non_singleton: 0 });
    }

    #[test]
    fn two_cycle() {
        let cars = extract_cars(&[adj("1h", "2t"), adj("2h", "1t")], &set(2)).unwrap();
        assert_eq!(cars, vec![Car::new(CarKind::Circular, vec![1, 2]).unwrap()]);
        assert_eq!(cars[0].markers(), &[1, 2]);
    }

    #[test]
    fn canonical_orientation() {
        let a = Car::new(CarKind::Linear, vec![-3, -2, -1]).unwrap();
        assert_eq!(a.markers(), &[1, 2, 3]);
        let b = Car::new(CarKind::Linear, vec![2, -1]).unwrap();
        assert_eq!(b.markers(), &[1, -2]);
        let c = Car::new(CarKind::Circular, vec![3, -1, 2]).unwrap();
        assert_eq!(c.markers(), &[1, -3, -2]);
        assert_eq!(c, Car::new(CarKind::Circular, vec![-2, 1, -3]).unwrap());
        assert!(Car::new(CarKind::Circular, vec![4]).is_err());
    }

    #[test]
    fn inverted_path_is_read_forward() {
        let cars = extract_cars(&[adj("1h", "2h"), adj("2t", "3t")], &set(3)).unwrap();
        assert_eq!(cars[0].markers(), &[1, -2, 3]);
    }

    #[test]
    fn rejects_inconsistent() {
        assert!(extract_cars(&[adj("1h", "2t"), adj("1h", "3t")], &set(3)).is_err());
    }

    #[test]
    fn circular_closure() {
        let adjs = chromosome_adjacencies(CarKind::Circular, &[1, 2]).unwrap();
        assert_eq!(adjs, vec![adj("1h", "2t"), adj("2h", "1t")]);
    }
}
