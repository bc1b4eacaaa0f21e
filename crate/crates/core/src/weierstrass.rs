//! Reduced Weierstrass divisors from slope data, local weights, and exact
//! Wronskian orders of monomial spaces.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::divisor::{Divisor, QDivisor};
use crate::graph::{GraphError, MetricGraph, Point};
use crate::rational::{q, qr, Q};
use crate::slope::SlopeStructure;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WeierstrassError {
    #[error("vertex {vertex}: direction {arc} has no full slope list")]
    MissingSlopes { vertex: String, arc: String },
    #[error("no partner arc for {0}")]
    MissingPartner(String),
    #[error("direction {arc}: expected {expected} slopes, got {got}")]
    Length {
        arc: String,
        expected: usize,
        got: usize,
    },
    #[error("direction {0}: slopes are not strictly increasing")]
    NotStrict(String),
    #[error("slope list {0:?} is not strictly increasing and nonnegative")]
    BadSequence(Vec<i64>),
    #[error("antisymmetry fails between {0} and its partner")]
    Antisymmetry(String),
    #[error("malformed arc name {0}")]
    BadArc(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Slopes along one tangent direction: the full list or just its minimum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionSlopes {
    /// `"x->y"`.
    pub arc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slopes: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<i64>,
}

impl DirectionSlopes {
    pub fn full(arc: impl Into<String>, slopes: Vec<i64>) -> Self {
        Self {
            arc: arc.into(),
            slopes: Some(slopes),
            s0: None,
        }
    }

    pub fn min_only(arc: impl Into<String>, s0: i64) -> Self {
        Self {
            arc: arc.into(),
            slopes: None,
            s0: Some(s0),
        }
    }

    pub fn min(&self) -> Option<i64> {
        self.slopes
            .as_ref()
            .and_then(|s| s.first().copied())
            .or(self.s0)
    }

    /// The arc in the opposite orientation.
    pub fn partner(&self) -> Result<String, WeierstrassError> {
        let (a, b) = self
            .arc
            .split_once("->")
            .ok_or_else(|| WeierstrassError::BadArc(self.arc.clone()))?;
        Ok(format!("{b}->{a}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexSlopes {
    pub id: String,
    /// Coefficient of `D` (the series divisor is `n D`).
    pub d_x: i64,
    #[serde(default)]
    pub g_x: u32,
    pub directions: Vec<DirectionSlopes>,
}

impl VertexSlopes {
    pub fn valence(&self) -> usize {
        self.directions.len()
    }
}

/// Slope data of the series `|n D|` of rank `r` at every model vertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlopeData {
    pub n: u64,
    pub r: usize,
    pub vertices: Vec<VertexSlopes>,
}

impl SlopeData {
    /// Full slope lists of a slope structure, with `n = 1`.
    pub fn from_structure(g: &MetricGraph, d: &Divisor, s: &SlopeStructure) -> Self {
        let vertices = (0..g.num_vertices())
            .map(|x| VertexSlopes {
                id: g.vertex(x).id.clone(),
                d_x: d.get(&Point::Vertex(x)),
                g_x: g.vertex(x).genus,
                directions: g
                    .incident(x)
                    .iter()
                    .map(|&e| {
                        let y = g.edge(e).other(x);
                        let arc = format!("{}->{}", g.vertex(x).id, g.vertex(y).id);
                        DirectionSlopes::full(arc, s.arc(e, g.edge(e).u == x).to_vec())
                    })
                    .collect(),
            })
            .collect();
        Self {
            n: 1,
            r: s.width(),
            vertices,
        }
    }

    fn arcs(&self) -> BTreeMap<&str, &DirectionSlopes> {
        self.vertices
            .iter()
            .flat_map(|v| v.directions.iter().map(|d| (d.arc.as_str(), d)))
            .collect()
    }

    /// List lengths, strict monotonicity, and antisymmetry wherever both
    /// orientations carry full lists.
    pub fn validate(&self) -> Result<(), WeierstrassError> {
        let arcs = self.arcs();
        for d in arcs.values() {
            let Some(list) = &d.slopes else {
                continue;
            };
            if list.len() != self.r + 1 {
                return Err(WeierstrassError::Length {
                    arc: d.arc.clone(),
                    expected: self.r + 1,
                    got: list.len(),
                });
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(WeierstrassError::NotStrict(d.arc.clone()));
            }
            if let Some(Some(other)) = arcs.get(d.partner()?.as_str()).map(|p| &p.slopes) {
                let r = self.r;
                if other.len() == r + 1 && (0..=r).any(|i| list[i] + other[r - i] != 0) {
                    return Err(WeierstrassError::Antisymmetry(d.arc.clone()));
                }
            }
        }
        Ok(())
    }

    fn vertex_point(g: &MetricGraph, id: &str) -> Result<Point, WeierstrassError> {
        Ok(Point::Vertex(g.vertex_id(id)?))
    }
}

/// `(r+1) n d_x + r(r+1)/2 (2g_x − 2 + val) − Σ_ν Σ_i s^ν_i`.
pub fn weierstrass_coefficient(v: &VertexSlopes, n: u64, r: usize) -> Result<i64, WeierstrassError> {
    let r = r as i64;
    let k = 2 * v.g_x as i64 - 2 + v.valence() as i64;
    let mut c = (r + 1) * n as i64 * v.d_x + r * (r + 1) / 2 * k;
    for d in &v.directions {
        let list = d.slopes.as_ref().ok_or_else(|| WeierstrassError::MissingSlopes {
            vertex: v.id.clone(),
            arc: d.arc.clone(),
        })?;
        c -= list.iter().sum::<i64>();
    }
    Ok(c)
}

/// The reduced Weierstrass divisor from full slope lists.
pub fn reduce_weierstrass(g: &MetricGraph, data: &SlopeData) -> Result<Divisor, WeierstrassError> {
    data.validate()?;
    let mut w = Divisor::zero();
    for v in &data.vertices {
        let c = weierstrass_coefficient(v, data.n, data.r)?;
        w.add_at(SlopeData::vertex_point(g, &v.id)?, c);
    }
    Ok(w)
}

/// The four terms of `W = (r+1) n D + r(r+1) K_g + r(r+1)/2 K_Γ − P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeierstrassParts {
    pub divisor_term: QDivisor,
    pub genus_term: QDivisor,
    pub valence_term: QDivisor,
    pub slope_term: QDivisor,
}

impl WeierstrassParts {
    pub fn total(&self) -> QDivisor {
        let mut w = &(&self.divisor_term + &self.genus_term) + &self.valence_term;
        for (p, c) in self.slope_term.iter() {
            w.add_at(p.clone(), -c);
        }
        w
    }
}

fn parts_with(
    g: &MetricGraph,
    data: &SlopeData,
    slope_sum: impl Fn(&VertexSlopes) -> Result<Q, WeierstrassError>,
) -> Result<WeierstrassParts, WeierstrassError> {
    let r = q(data.r as i64);
    let r1 = &r + q(1);
    let mut parts = WeierstrassParts {
        divisor_term: QDivisor::zero(),
        genus_term: QDivisor::zero(),
        valence_term: QDivisor::zero(),
        slope_term: QDivisor::zero(),
    };
    for v in &data.vertices {
        let p = SlopeData::vertex_point(g, &v.id)?;
        parts
            .divisor_term
            .add_at(p.clone(), &r1 * q(data.n as i64 * v.d_x));
        parts
            .genus_term
            .add_at(p.clone(), &r * &r1 * q(v.g_x as i64));
        parts
            .valence_term
            .add_at(p.clone(), &r * &r1 / q(2) * q(v.valence() as i64 - 2));
        parts.slope_term.add_at(p, slope_sum(v)?);
    }
    Ok(parts)
}

/// Exact decomposition of the reduced Weierstrass divisor.
pub fn weierstrass_parts(
    g: &MetricGraph,
    data: &SlopeData,
) -> Result<WeierstrassParts, WeierstrassError> {
    data.validate()?;
    parts_with(g, data, |v| {
        let mut s = Q::zero();
        for d in &v.directions {
            let list = d.slopes.as_ref().ok_or_else(|| WeierstrassError::MissingSlopes {
                vertex: v.id.clone(),
                arc: d.arc.clone(),
            })?;
            s += q(list.iter().sum());
        }
        Ok(s)
    })
}

/// Midpoint approximation: every `Σ_i s^ν_i` is replaced by
/// `(r+1)(s^ν_0 − s^{partner}_0)/2`, using only minimum slopes.
pub fn midpoint_parts(
    g: &MetricGraph,
    data: &SlopeData,
) -> Result<WeierstrassParts, WeierstrassError> {
    let arcs = data.arcs();
    let r1 = q(data.r as i64 + 1);
    parts_with(g, data, |v| {
        let mut s = Q::zero();
        for d in &v.directions {
            let partner = d.partner()?;
            let other = arcs
                .get(partner.as_str())
                .and_then(|p| p.min())
                .ok_or_else(|| WeierstrassError::MissingPartner(d.arc.clone()))?;
            let own = d.min().ok_or_else(|| WeierstrassError::MissingSlopes {
                vertex: v.id.clone(),
                arc: d.arc.clone(),
            })?;
            s += &r1 * qr(own - other, 2);
        }
        Ok(s)
    })
}

pub fn midpoint_weierstrass(g: &MetricGraph, data: &SlopeData) -> Result<QDivisor, WeierstrassError> {
    Ok(midpoint_parts(g, data)?.total())
}

fn check_sequence(s: &[i64]) -> Result<(), WeierstrassError> {
    if s.first().is_some_and(|&v| v < 0) || s.windows(2).any(|w| w[0] >= w[1]) {
        return Err(WeierstrassError::BadSequence(s.to_vec()));
    }
    Ok(())
}

/// `Σ s_i − r(r+1)/2` for a vanishing sequence of length `r + 1`.
pub fn local_weight(s: &[i64]) -> Result<i64, WeierstrassError> {
    check_sequence(s)?;
    let r = s.len() as i64 - 1;
    Ok(s.iter().sum::<i64>() - r * (r + 1) / 2)
}

/// Integer polynomial, lowest degree first, no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Poly(Vec<BigInt>);

impl Poly {
    fn monomial(c: BigInt, k: usize) -> Self {
        if c.is_zero() {
            return Self(Vec::new());
        }
        let mut v = vec![BigInt::zero(); k];
        v.push(c);
        Self(v)
    }

    fn trim(mut self) -> Self {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
        self
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    fn mul(&self, o: &Self) -> Self {
        if self.is_zero() || o.is_zero() {
            return Self(Vec::new());
        }
        let mut v = vec![BigInt::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Self(v).trim()
    }

    fn sub(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        let z = BigInt::zero();
        let v = (0..n)
            .map(|i| self.0.get(i).unwrap_or(&z) - o.0.get(i).unwrap_or(&z))
            .collect();
        Self(v).trim()
    }

    /// Exact division; panics if `o` does not divide `self`.
    fn div_exact(&self, o: &Self) -> Self {
        let mut rem = self.0.clone();
        let lead = o.0.last().expect("nonzero divisor");
        if rem.len() < o.0.len() {
            assert!(self.is_zero(), "inexact polynomial division");
            return Self(Vec::new());
        }
        let mut quot = vec![BigInt::zero(); rem.len() - o.0.len() + 1];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + o.0.len() - 1];
            assert!((c % lead).is_zero(), "inexact polynomial division");
            let t = c / lead;
            for (j, b) in o.0.iter().enumerate() {
                rem[k + j] -= &t * b;
            }
            quot[k] = t;
        }
        assert!(rem.iter().all(|c| c.is_zero()), "inexact polynomial division");
        Self(quot).trim()
    }

    fn order(&self) -> Option<usize> {
        self.0.iter().position(|c| !c.is_zero())
    }
}

/// Determinant over `Z[t]` by fraction-free elimination.
fn poly_determinant(mut m: Vec<Vec<Poly>>) -> Poly {
    let n = m.len();
    let mut prev = Poly(vec![BigInt::one()]);
    let mut negate = false;
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !m[i][k].is_zero()) else {
            return Poly(Vec::new());
        };
        if p != k {
            m.swap(p, k);
            negate = !negate;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = m[k][k].mul(&m[i][j]).sub(&m[i][k].mul(&m[k][j]));
                m[i][j] = v.div_exact(&prev);
            }
        }
        prev = m[k][k].clone();
    }
    if n == 0 {
        return Poly(vec![BigInt::one()]);
    }
    let det = m[n - 1][n - 1].clone();
    if negate {
        Poly(det.0.into_iter().map(|c| -c).collect())
    } else {
        det
    }
}

/// `j`-th derivative of `t^s`.
fn derivative(s: usize, j: usize) -> Poly {
    if j > s {
        return Poly(Vec::new());
    }
    let c: BigInt = ((s - j + 1)..=s).fold(BigInt::one(), |acc, k| acc * BigInt::from(k));
    Poly::monomial(c, s - j)
}

/// Order at `0` of `det(d^j/dt^j t^{s_i})`.
pub fn wronskian_order(s: &[i64]) -> Result<usize, WeierstrassError> {
    check_sequence(s)?;
    let m = s
        .iter()
        .map(|&si| (0..s.len()).map(|j| derivative(si as usize, j)).collect())
        .collect();
    let det = poly_determinant(m);
    Ok(det.order().expect("monomial Wronskian is nonzero in characteristic zero"))
}

/// Whether weights of a linear series of rank `r` on a curve of genus
/// `g_c` add up to `(g_c − 1) r (r + 1)`.
pub fn total_weight_checks(g_c: u32, r: usize, weights: &[i64]) -> bool {
    let r = r as i64;
    weights.iter().sum::<i64>() == (g_c as i64 - 1) * r * (r + 1)
}

/// Orders of vanishing at `at` (`None` for infinity) of a space of
/// polynomials given by coefficient vectors, lowest degree first.
/// Orders at infinity are `−deg`.
pub fn vanishing_sequence(basis: &[Vec<Q>], at: Option<&Q>) -> Vec<i64> {
    // Taylor coefficients at `at`, or the coefficients reversed at infinity
    let width = basis.iter().map(Vec::len).max().unwrap_or(0);
    let mut rows: Vec<Vec<Q>> = basis
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.resize(width, Q::zero());
            match at {
                Some(a) => taylor(&p, a),
                None => p.into_iter().rev().collect(),
            }
        })
        .collect();
    // echelon form: distinct leading positions are the orders
    let mut orders = Vec::new();
    for col in 0..width {
        let Some(piv) = rows.iter().position(|r| !r[col].is_zero()) else {
            continue;
        };
        let pr = rows.swap_remove(piv);
        for r in rows.iter_mut() {
            if !r[col].is_zero() {
                let f = &r[col] / &pr[col];
                for (x, y) in r.iter_mut().zip(&pr) {
                    *x -= &f * y;
                }
            }
        }
        orders.push(col as i64);
    }
    if at.is_none() {
        let top = width as i64 - 1;
        orders = orders.into_iter().map(|o| o - top).collect();
    }
    orders.sort_unstable();
    orders
}

fn taylor(p: &[Q], a: &Q) -> Vec<Q> {
    // repeated synthetic division by (t − a)
    let mut c = p.to_vec();
    let n = c.len();
    for k in 0..n {
        for j in (k..n - 1).rev() {
            let t = &c[j + 1] * a;
            c[j] += t;
        }
    }
    c
}

/// Helper for weights of negative sequences: sum minus `r(r+1)/2`.
pub fn weight_of(orders: &[i64]) -> i64 {
    let r = orders.len() as i64 - 1;
    orders.iter().sum::<i64>() - r * (r + 1) / 2
}
