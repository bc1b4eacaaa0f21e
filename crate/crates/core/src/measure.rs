//! Signed measures made of point masses and piecewise-constant densities.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, MetricGraph, Point, PointSpec};
use crate::rational::{serde_q, Q};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Measure {
    atoms: BTreeMap<Point, Q>,
    /// Per edge: disjoint sorted `(from, to, density)` pieces.
    densities: BTreeMap<usize, Vec<(Q, Q, Q)>>,
}

impl Measure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dirac(p: Point) -> Self {
        let mut m = Self::zero();
        m.add_atom(p, Q::from_integer(1.into()));
        m
    }

    pub fn add_atom(&mut self, p: Point, mass: Q) {
        if mass.is_zero() {
            return;
        }
        let e = self.atoms.entry(p.clone()).or_insert_with(Q::zero);
        *e += mass;
        if e.is_zero() {
            self.atoms.remove(&p);
        }
    }

    /// Adds `density` per unit length on `[from, to]` of `edge`.
    pub fn add_density(&mut self, edge: usize, from: Q, to: Q, density: Q) {
        if density.is_zero() || from >= to {
            return;
        }
        let old = self.densities.remove(&edge).unwrap_or_default();
        let mut cuts: BTreeSet<Q> = BTreeSet::new();
        for (a, b, _) in &old {
            cuts.insert(a.clone());
            cuts.insert(b.clone());
        }
        cuts.insert(from.clone());
        cuts.insert(to.clone());
        let cuts: Vec<Q> = cuts.into_iter().collect();
        let mut pieces: Vec<(Q, Q, Q)> = Vec::new();
        for w in cuts.windows(2) {
            let mid = (&w[0] + &w[1]) / Q::from_integer(2.into());
            let mut c: Q = old
                .iter()
                .filter(|(a, b, _)| *a < mid && mid < *b)
                .map(|(_, _, c)| c.clone())
                .sum();
            if from < mid && mid < to {
                c += &density;
            }
            if c.is_zero() {
                continue;
            }
            match pieces.last_mut() {
                Some(last) if last.1 == w[0] && last.2 == c => last.1 = w[1].clone(),
                _ => pieces.push((w[0].clone(), w[1].clone(), c)),
            }
        }
        if !pieces.is_empty() {
            self.densities.insert(edge, pieces);
        }
    }

    pub fn atoms(&self) -> &BTreeMap<Point, Q> {
        &self.atoms
    }

    pub fn atom(&self, p: &Point) -> Q {
        self.atoms.get(p).cloned().unwrap_or_else(Q::zero)
    }

    pub fn densities(&self, edge: usize) -> &[(Q, Q, Q)] {
        self.densities.get(&edge).map_or(&[], |v| v.as_slice())
    }

    pub fn density_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.densities.keys().copied()
    }

    pub fn mass(&self) -> Q {
        let a: Q = self.atoms.values().sum();
        let d: Q = self
            .densities
            .values()
            .flatten()
            .map(|(a, b, c)| (b - a) * c)
            .sum();
        a + d
    }

    /// Density part of the mass carried by `(a, b)` on `edge`.
    pub fn density_mass(&self, edge: usize, a: &Q, b: &Q) -> Q {
        self.densities(edge)
            .iter()
            .map(|(s, t, c)| {
                let lo = s.max(a);
                let hi = t.min(b);
                if lo < hi {
                    (hi - lo) * c
                } else {
                    Q::zero()
                }
            })
            .sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.values().all(|m| !m.is_negative())
            && self.densities.values().flatten().all(|(_, _, c)| !c.is_negative())
    }

    pub fn scale(&self, k: &Q) -> Self {
        let mut m = Self::zero();
        for (p, a) in &self.atoms {
            m.add_atom(p.clone(), a * k);
        }
        for (&e, pieces) in &self.densities {
            for (a, b, c) in pieces {
                m.add_density(e, a.clone(), b.clone(), c * k);
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = self.clone();
        for (p, a) in &other.atoms {
            m.add_atom(p.clone(), a.clone());
        }
        for (&e, pieces) in &other.densities {
            for (a, b, c) in pieces {
                m.add_density(e, a.clone(), b.clone(), c.clone());
            }
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&Q::from_integer((-1).into())))
    }

    /// Atom locations and density breakpoints.
    pub fn special_points(&self, g: &MetricGraph) -> Vec<Point> {
        let mut pts: Vec<Point> = self.atoms.keys().cloned().collect();
        for (&e, pieces) in &self.densities {
            for (a, b, _) in pieces {
                for t in [a, b] {
                    pts.push(g.point_on_edge(e, t.clone()).expect("density inside edge"));
                }
            }
        }
        pts
    }

    pub fn to_spec(&self, g: &MetricGraph) -> MeasureSpec {
        MeasureSpec {
            atoms: self
                .atoms
                .iter()
                .map(|(p, m)| AtomSpec {
                    point: PointSpec::of(g, p),
                    mass: m.clone(),
                })
                .collect(),
            densities: self
                .densities
                .iter()
                .flat_map(|(&e, pieces)| {
                    pieces.iter().map(move |(a, b, c)| DensitySpec {
                        edge: g.edge(e).id.clone(),
                        from: a.clone(),
                        to: b.clone(),
                        density: c.clone(),
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AtomSpec {
    pub point: PointSpec,
    #[serde(with = "serde_q")]
    pub mass: Q,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensitySpec {
    pub edge: String,
    #[serde(with = "serde_q")]
    pub from: Q,
    #[serde(with = "serde_q")]
    pub to: Q,
    #[serde(with = "serde_q")]
    pub density: Q,
}

/// `{"atoms":[{"point":...,"mass":"p/q"}],"densities":[{"edge":"e","from":"0","to":"1","density":"1/3"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub densities: Vec<DensitySpec>,
}

impl MeasureSpec {
    pub fn resolve(&self, g: &MetricGraph) -> Result<Measure, GraphError> {
        let mut m = Measure::zero();
        for a in &self.atoms {
            m.add_atom(a.point.resolve(g)?, a.mass.clone());
        }
        for d in &self.densities {
            let e = g.edge_id(&d.edge)?;
            // validates the interval
            g.point_on_edge(e, d.from.clone())?;
            g.point_on_edge(e, d.to.clone())?;
            m.add_density(e, d.from.clone(), d.to.clone(), d.density.clone());
        }
        Ok(m)
    }
}
