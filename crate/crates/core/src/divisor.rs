//! Integer and rational divisors on a metric graph.

use std::collections::BTreeMap;
use std::ops::{Add, Neg, Sub};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, MetricGraph, Point, PointSpec};
use crate::rational::{q, serde_q, Q};

/// Finite integer combination of points; zero coefficients are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Divisor(BTreeMap<Point, i64>);

impl Divisor {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn point(p: Point, c: i64) -> Self {
        let mut d = Self::zero();
        d.add_at(p, c);
        d
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Point, i64)>) -> Self {
        let mut d = Self::zero();
        for (p, c) in pairs {
            d.add_at(p, c);
        }
        d
    }

    /// Adds `c` to the coefficient at `p`.
    pub fn add_at(&mut self, p: Point, c: i64) {
        if c == 0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.0.entry(p) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0 {
                    o.remove();
                }
            }
        }
    }

    pub fn get(&self, p: &Point) -> i64 {
        self.0.get(p).copied().unwrap_or(0)
    }

    pub fn degree(&self) -> i64 {
        self.0.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_effective(&self) -> bool {
        self.0.values().all(|&c| c > 0)
    }

    /// Effective away from `v`.
    pub fn is_effective_except(&self, v: &Point) -> bool {
        self.0.iter().all(|(p, &c)| c > 0 || p == v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, &i64)> {
        self.0.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &Point> {
        self.0.keys()
    }

    pub fn scale(&self, k: i64) -> Self {
        Self::from_pairs(self.0.iter().map(|(p, &c)| (p.clone(), c * k)))
    }

    /// Relabels points, e.g. when moving between a model and its refinement.
    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> Self {
        Self::from_pairs(self.0.iter().map(|(p, &c)| (f(p), c)))
    }

    pub fn to_rational(&self) -> QDivisor {
        QDivisor::from_pairs(self.0.iter().map(|(p, &c)| (p.clone(), q(c))))
    }

    pub fn to_spec(&self, g: &MetricGraph) -> DivisorSpec {
        DivisorSpec {
            coeffs: self
                .0
                .iter()
                .map(|(p, &c)| CoeffSpec {
                    point: PointSpec::of(g, p),
                    c,
                })
                .collect(),
        }
    }

    pub fn display(&self, g: &MetricGraph) -> String {
        if self.is_zero() {
            return "0".into();
        }
        self.0
            .iter()
            .map(|(p, c)| format!("{c}({})", g.point_name(p)))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

impl Add for &Divisor {
    type Output = Divisor;
    fn add(self, rhs: &Divisor) -> Divisor {
        let mut d = self.clone();
        for (p, &c) in rhs.iter() {
            d.add_at(p.clone(), c);
        }
        d
    }
}

impl Sub for &Divisor {
    type Output = Divisor;
    fn sub(self, rhs: &Divisor) -> Divisor {
        let mut d = self.clone();
        for (p, &c) in rhs.iter() {
            d.add_at(p.clone(), -c);
        }
        d
    }
}

impl Neg for &Divisor {
    type Output = Divisor;
    fn neg(self) -> Divisor {
        self.scale(-1)
    }
}

/// Rational-coefficient divisor, used for approximate Weierstrass data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QDivisor(BTreeMap<Point, Q>);

impl QDivisor {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Point, Q)>) -> Self {
        let mut d = Self::zero();
        for (p, c) in pairs {
            d.add_at(p, c);
        }
        d
    }

    pub fn add_at(&mut self, p: Point, c: Q) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.0.entry(p) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn get(&self, p: &Point) -> Q {
        self.0.get(p).cloned().unwrap_or_else(Q::zero)
    }

    pub fn degree(&self) -> Q {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, &Q)> {
        self.0.iter()
    }

    pub fn scale(&self, k: &Q) -> Self {
        Self::from_pairs(self.0.iter().map(|(p, c)| (p.clone(), c * k)))
    }
}

impl Add for &QDivisor {
    type Output = QDivisor;
    fn add(self, rhs: &QDivisor) -> QDivisor {
        let mut d = self.clone();
        for (p, c) in rhs.iter() {
            d.add_at(p.clone(), c.clone());
        }
        d
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoeffSpec {
    pub point: PointSpec,
    pub c: i64,
}

/// `{"coeffs":[{"point":{"vertex":"x"},"c":-3}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DivisorSpec {
    pub coeffs: Vec<CoeffSpec>,
}

impl DivisorSpec {
    pub fn resolve(&self, g: &MetricGraph) -> Result<Divisor, GraphError> {
        let mut d = Divisor::zero();
        for c in &self.coeffs {
            d.add_at(c.point.resolve(g)?, c.c);
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QCoeffSpec {
    pub point: PointSpec,
    #[serde(with = "serde_q")]
    pub c: Q,
}
