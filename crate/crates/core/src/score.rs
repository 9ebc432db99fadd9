//! Exact objective arithmetic.
//!
//! Adjacency weights are quantized to integer micro-units (`w * 10^6`) and the
//! mixing factor alpha is a reduced fraction `num/den` with `den <= 10^4`. An
//! objective value `alpha * discarded + (1 - alpha) * changes` is then an
//! integer when expressed in units of `1 / (den * 10^6)`; every solver works
//! on these integers so that ties are detected exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Adjacency;
use crate::tree::NodeId;

/// Weight quantization denominator.
pub const WEIGHT_SCALE: u64 = 1_000_000;

/// Largest accepted denominator for alpha.
pub const MAX_ALPHA_DENOMINATOR: u32 = 10_000;

/// Objective value in units of `1 / (alpha.den() * WEIGHT_SCALE)`.
pub type Cost = u64;

/// A weight in `[0, 1]` stored as integer micro-units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Weight(u32);

impl Weight {
    pub const ZERO: Weight = Weight(0);
    pub const ONE: Weight = Weight(WEIGHT_SCALE as u32);

    pub fn from_micros(micros: u32) -> Result<Self> {
        if u64::from(micros) > WEIGHT_SCALE {
            return Err(Error::input(format!("weight {micros}e-6 exceeds 1")));
        }
        Ok(Weight(micros))
    }

    /// Rounds to the nearest micro-unit.
    pub fn quantize(w: f64) -> Result<Self> {
        if !w.is_finite() || !(0.0..=1.0).contains(&w) {
            return Err(Error::input(format!("weight {w} outside [0, 1]")));
        }
        Ok(Weight((w * WEIGHT_SCALE as f64).round() as u32))
    }

    pub fn micros(self) -> u32 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / WEIGHT_SCALE as f64
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / WEIGHT_SCALE as u32, self.0 % WEIGHT_SCALE as u32)
    }
}

/// Inclusion threshold on weights, in micro-units. May exceed one micro-scale
/// unit of 1.0, in which case nothing passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Threshold(u64);

impl Threshold {
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::input(format!("threshold {x} must be a non-negative number")));
        }
        Ok(Threshold((x * WEIGHT_SCALE as f64).round() as u64))
    }

    pub fn from_micros(micros: u64) -> Self {
        Threshold(micros)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    /// Inclusive comparison: a weight equal to the threshold is kept.
    pub fn admits(self, w: Weight) -> bool {
        u64::from(w.0) >= self.0
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / WEIGHT_SCALE, self.0 % WEIGHT_SCALE)
    }
}

/// The convex combination factor, as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alpha {
    num: u32,
    den: u32,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Alpha {
    pub const ZERO: Alpha = Alpha { num: 0, den: 1 };
    pub const ONE: Alpha = Alpha { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::input(format!("alpha {num}/{den} is not in [0, 1]")));
        }
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        if den > u64::from(MAX_ALPHA_DENOMINATOR) {
            return Err(Error::input(format!(
                "alpha {num}/{den} needs a denominator above {MAX_ALPHA_DENOMINATOR}"
            )));
        }
        Ok(Alpha { num: num as u32, den: den as u32 })
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    /// Cost units per discarded micro-unit of weight.
    pub fn weight_coef(self) -> Cost {
        Cost::from(self.num)
    }

    /// Cost units per adjacency change along a branch.
    pub fn change_coef(self) -> Cost {
        Cost::from(self.den - self.num) * WEIGHT_SCALE
    }

    /// Cost units per unit of objective.
    pub fn unit(self) -> Cost {
        Cost::from(self.den) * WEIGHT_SCALE
    }

    /// Combines a change count and a discarded weight (micro-units).
    pub fn cost(self, changes: u64, discarded_micros: u64) -> Cost {
        self.change_coef() * changes + self.weight_coef() * discarded_micros
    }

    pub fn to_real(self, cost: Cost) -> f64 {
        cost as f64 / self.unit() as f64
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// Renders a cost as an exact decimal when the unit allows it, otherwise
    /// as a fraction.
    pub fn format_cost(self, cost: Cost) -> String {
        let unit = self.unit();
        let g = gcd(cost, unit);
        let (n, d) = (cost / g, unit / g);
        let mut d2 = d;
        while d2 % 2 == 0 {
            d2 /= 2;
        }
        while d2 % 5 == 0 {
            d2 /= 5;
        }
        if d2 == 1 {
            let mut digits = 0;
            let mut p = 1u64;
            while p % d != 0 {
                p *= 10;
                digits += 1;
            }
            let scaled = n * (p / d);
            if digits == 0 {
                format!("{scaled}")
            } else {
                let int = scaled / p;
                let frac = scaled % p;
                format!("{int}.{frac:0width$}", width = digits)
            }
        } else {
            format!("{n}/{d}")
        }
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    /// Accepts `p/q` fractions and plain decimals such as `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::input(format!("cannot parse alpha `{s}`"));
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Alpha::new(n, d);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > 9 {
            return Err(Error::input(format!("alpha `{s}` needs a denominator above {MAX_ALPHA_DENOMINATOR}")));
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        Alpha::new(int.saturating_mul(den).saturating_add(frac_v), den)
    }
}

/// Per-node adjacency weights. Missing entries read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeightTable {
    entries: BTreeMap<(NodeId, Adjacency), Weight>,
}

impl WeightTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: NodeId, adj: &Adjacency) -> Weight {
        self.entries.get(&(node, *adj)).copied().unwrap_or(Weight::ZERO)
    }

    /// Returns the previous weight if the entry already existed.
    pub fn insert(&mut self, node: NodeId, adj: Adjacency, w: Weight) -> Option<Weight> {
        self.entries.insert((node, adj), w)
    }

    pub fn contains(&self, node: NodeId, adj: &Adjacency) -> bool {
        self.entries.contains_key(&(node, *adj))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Adjacency, Weight)> + '_ {
        self.entries.iter().map(|(&(v, ref a), &w)| (v, a, w))
    }

    /// Entries at one node, in adjacency order.
    pub fn at(&self, node: NodeId) -> impl Iterator<Item = (&Adjacency, Weight)> + '_ {
        self.entries
            .range((node, MIN_ADJ)..)
            .take_while(move |((v, _), _)| *v == node)
            .map(|((_, a), &w)| (a, w))
    }

    /// Keeps only the entries for which `keep` holds.
    pub fn retain(&mut self, mut keep: impl FnMut(NodeId, &Adjacency, Weight) -> bool) {
        self.entries.retain(|(v, a), w| keep(*v, a, *w));
    }
}

const MIN_ADJ: Adjacency = crate::genome::MIN_ADJACENCY;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_parsing() {
        assert_eq!("0.5".parse::<Alpha>().unwrap(), Alpha::new(1, 2).unwrap());
        assert_eq!("1/3".parse::<Alpha>().unwrap(), Alpha::new(1, 3).unwrap());
        assert_eq!("0".parse::<Alpha>().unwrap(), Alpha::ZERO);
        assert_eq!("1".parse::<Alpha>().unwrap(), Alpha::ONE);
        assert_eq!("1.0".parse::<Alpha>().unwrap(), Alpha::ONE);
        assert_eq!("0.30".parse::<Alpha>().unwrap(), Alpha::new(3, 10).unwrap());
        assert_eq!(".75".parse::<Alpha>().unwrap(), Alpha::new(3, 4).unwrap());
        assert!("0.33333".parse::<Alpha>().is_err());
        assert!("1/10001".parse::<Alpha>().is_err());
        assert!("2/10002".parse::<Alpha>().is_ok());
        assert!("1.5".parse::<Alpha>().is_err());
        assert!("-0.5".parse::<Alpha>().is_err());
        assert!("abc".parse::<Alpha>().is_err());
    }

    #[test]
    fn cost_arithmetic() {
        let half = Alpha::new(1, 2).unwrap();
        // one change plus a discarded weight of 0.8
        let c = half.cost(1, 800_000);
        assert_eq!(half.to_real(c), 0.9);
        assert_eq!(half.format_cost(c), "0.9");
        assert_eq!(c * WEIGHT_SCALE / half.unit(), 900_000);
        let third = Alpha::new(1, 3).unwrap();
        assert_eq!(third.format_cost(third.cost(1, 0)), "2/3");
        assert_eq!(Alpha::ZERO.format_cost(Alpha::ZERO.cost(3, 5)), "3");
    }

    #[test]
    fn weight_quantization() {
        assert_eq!(Weight::quantize(0.73).unwrap().micros(), 730_000);
        assert_eq!(Weight::quantize(1.0).unwrap(), Weight::ONE);
        assert!(Weight::quantize(1.2).is_err());
        assert!(Weight::quantize(-0.1).is_err());
        assert_eq!(Weight::quantize(0.25).unwrap().to_string(), "0.250000");
        let t = Threshold::from_f64(0.2).unwrap();
        assert!(t.admits(Weight::quantize(0.25).unwrap()));
        assert!(!t.admits(Weight::quantize(0.1).unwrap()));
        assert!(t.admits(Weight::quantize(0.2).unwrap()));
    }
}
