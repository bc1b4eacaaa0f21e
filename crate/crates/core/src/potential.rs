//! Laplacian, effective resistance, Green functions and the canonical
//! admissible measure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::divisor::Divisor;
use crate::graph::{GraphError, MetricGraph, Point, Refinement};
use crate::linalg::SymmetricFactor;
use crate::measure::Measure;
use crate::plfunction::PLFunction;
use crate::rational::{fmt_q, q, qr, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PotentialError {
    #[error("total genus is 0; the canonical measure is undefined")]
    ZeroGenus,
    #[error("measure has mass {0}, expected 1")]
    MassNotOne(String),
    #[error("points {0} and {1} lie in different components")]
    Disconnected(String, String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Effective resistance; `Infinite` when the terminals are not connected.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Resistance {
    Finite(Q),
    Infinite,
}

impl Resistance {
    pub fn finite(&self) -> Option<&Q> {
        match self {
            Resistance::Finite(r) => Some(r),
            Resistance::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Resistance::Infinite)
    }
}

impl fmt::Display for Resistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resistance::Finite(r) => f.write_str(&fmt_q(r)),
            Resistance::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Resistance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// `Δf`: for piecewise-affine `f` this is the atomic measure with mass
/// `−Σ_ν d_ν f(p)` at every breakpoint `p`.
pub fn laplacian(g: &MetricGraph, f: &PLFunction) -> Measure {
    let mut m = Measure::zero();
    for (p, a) in f.laplacian_atoms(g) {
        m.add_atom(p, a);
    }
    m
}

/// Weighted vertex Laplacian (conductance `1/ℓ`) with each vertex in
/// `grounds` pinned to potential 0.
pub(crate) fn grounded_laplacian(g: &MetricGraph, grounds: &[usize]) -> Vec<BTreeMap<usize, Q>> {
    let n = g.num_vertices();
    let grounded: BTreeSet<usize> = grounds.iter().copied().collect();
    let mut rows: Vec<BTreeMap<usize, Q>> = vec![BTreeMap::new(); n];
    for e in g.edges() {
        let w = Q::one() / &e.length;
        for (a, b) in [(e.u, e.v), (e.v, e.u)] {
            if grounded.contains(&a) {
                continue;
            }
            *rows[a].entry(a).or_insert_with(Q::zero) += &w;
            if !grounded.contains(&b) {
                *rows[a].entry(b).or_insert_with(Q::zero) -= &w;
            }
        }
    }
    for &r in &grounded {
        rows[r].insert(r, Q::one());
    }
    rows
}

/// First vertex of every component.
fn component_roots(comp: &[usize]) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    comp.iter()
        .enumerate()
        .filter(|(_, c)| seen.insert(**c))
        .map(|(i, _)| i)
        .collect()
}

/// A refinement containing a fixed set of points, with all pairwise
/// resistances between its vertices precomputed.
#[derive(Debug, Clone)]
pub struct Network {
    refinement: Refinement,
    comp: Vec<usize>,
    /// Grounded Green matrix (zero at component roots).
    green: Vec<Vec<Q>>,
}

impl Network {
    pub fn new<'a>(g: &MetricGraph, points: impl IntoIterator<Item = &'a Point>) -> Self {
        Self::from_refinement(g.refine(points))
    }

    pub fn from_refinement(refinement: Refinement) -> Self {
        let rg = &refinement.graph;
        let comp = rg.components();
        let roots = component_roots(&comp);
        let factor = SymmetricFactor::new(grounded_laplacian(rg, &roots))
            .expect("grounded Laplacian is nonsingular");
        let n = rg.num_vertices();
        let cols: Vec<Vec<Q>> = (0..n)
            .into_par_iter()
            .map(|i| {
                if roots.contains(&i) {
                    return vec![Q::zero(); n];
                }
                let mut b = vec![Q::zero(); n];
                b[i] = Q::one();
                factor.solve(&b)
            })
            .collect();
        Self {
            refinement,
            comp,
            green: cols,
        }
    }

    pub fn refinement(&self) -> &Refinement {
        &self.refinement
    }

    fn vertex(&self, p: &Point) -> usize {
        match self.refinement.forward(p) {
            Point::Vertex(v) => v,
            _ => panic!("point was not registered with the network"),
        }
    }

    pub fn vertex_resistance(&self, i: usize, j: usize) -> Resistance {
        if self.comp[i] != self.comp[j] {
            return Resistance::Infinite;
        }
        Resistance::Finite(&self.green[i][i] + &self.green[j][j] - &self.green[i][j] * q(2))
    }

    /// Resistance between two points registered at construction.
    pub fn resistance(&self, a: &Point, b: &Point) -> Resistance {
        self.vertex_resistance(self.vertex(a), self.vertex(b))
    }

    /// Finite resistance; panics across components.
    pub fn r(&self, a: &Point, b: &Point) -> Q {
        match self.resistance(a, b) {
            Resistance::Finite(r) => r,
            Resistance::Infinite => panic!("resistance across components"),
        }
    }
}

/// Effective resistance between `a` and `b` (unit resistance per unit length).
pub fn resistance(g: &MetricGraph, a: &Point, b: &Point) -> Result<Resistance, PotentialError> {
    g.check_point(a)?;
    g.check_point(b)?;
    if a == b {
        return Ok(Resistance::Finite(Q::zero()));
    }
    let r = g.refine([a, b]);
    let va = r.vertex_at(a).unwrap_or_else(|| vertex_index(a));
    let vb = r.vertex_at(b).unwrap_or_else(|| vertex_index(b));
    let comp = r.graph.components();
    if comp[va] != comp[vb] {
        return Ok(Resistance::Infinite);
    }
    let mut grounds: Vec<usize> = component_roots(&comp)
        .into_iter()
        .filter(|&x| comp[x] != comp[vb])
        .collect();
    grounds.push(vb);
    let factor = SymmetricFactor::new(grounded_laplacian(&r.graph, &grounds))
        .expect("grounded Laplacian is nonsingular");
    let mut rhs = vec![Q::zero(); r.graph.num_vertices()];
    rhs[va] = Q::one();
    Ok(Resistance::Finite(factor.solve(&rhs)[va].clone()))
}

fn vertex_index(p: &Point) -> usize {
    match p {
        Point::Vertex(v) => *v,
        _ => unreachable!("interior points are cut by the refinement"),
    }
}

/// `ρ_e`: resistance between the endpoints of `e` in `Γ ∖ e`.
pub fn edge_resistance(g: &MetricGraph, e: usize) -> Resistance {
    let edge = g.edge(e);
    resistance(&g.without_edge(e), &Point::Vertex(edge.u), &Point::Vertex(edge.v))
        .expect("endpoints are vertices")
}

/// `ℓ_e / (ℓ_e + ρ_e)` for every edge, from the resistances `r(u, v)` in the
/// whole graph.
pub fn foster_terms(g: &MetricGraph) -> Vec<Q> {
    let net = Network::from_refinement(g.refine(std::iter::empty()));
    g.edges()
        .iter()
        .map(|e| {
            let r = match net.vertex_resistance(e.u, e.v) {
                Resistance::Finite(r) => r,
                Resistance::Infinite => unreachable!("edge endpoints are connected"),
            };
            (&e.length - r) / &e.length
        })
        .collect()
}

/// `g_z(x, y) = ½ (r(z,x) + r(z,y) − r(x,y))`.
pub fn green(g: &MetricGraph, z: &Point, x: &Point, y: &Point) -> Result<Q, PotentialError> {
    for p in [z, x, y] {
        g.check_point(p)?;
    }
    let net = Network::new(g, [z, x, y]);
    Ok(green_on(&net, z, x, y))
}

fn green_on(net: &Network, z: &Point, x: &Point, y: &Point) -> Q {
    (net.r(z, x) + net.r(z, y) - net.r(x, y)) / q(2)
}

/// `y ↦ g_z(x, y)` as a piecewise-affine function on `g`.
pub fn green_function(g: &MetricGraph, z: &Point, x: &Point) -> Result<PLFunction, PotentialError> {
    g.check_point(z)?;
    g.check_point(x)?;
    let net = Network::new(g, [z, x]);
    let r = net.refinement();
    let values: Vec<Q> = (0..r.graph.num_vertices())
        .map(|v| green_on(&net, z, x, &r.origin[v]))
        .collect();
    Ok(PLFunction::from_refinement(g, r, &values))
}

/// `z ↦ r(z, ·)` integrated against a measure of the supported class.
///
/// Along an edge segment free of query points, `z ↦ r(z, p)` is a quadratic
/// polynomial in the offset, so Simpson's rule on each segment is exact.
#[derive(Debug, Clone)]
pub struct MuKernel {
    net: Network,
    atoms: Vec<(Point, Q)>,
    /// `(start, midpoint, end, density, length)`.
    segments: Vec<(Point, Point, Point, Q, Q)>,
    mass: Q,
}

impl MuKernel {
    /// `queries` are the points at which the kernel will be evaluated.
    pub fn new(g: &MetricGraph, mu: &Measure, queries: &[Point]) -> Result<Self, PotentialError> {
        for p in queries {
            g.check_point(p)?;
        }
        let mut cuts: BTreeMap<usize, BTreeSet<Q>> = BTreeMap::new();
        let mut extra: Vec<Point> = queries.to_vec();
        extra.extend(mu.special_points(g));
        for p in &extra {
            if let Point::Interior { edge, offset } = p {
                cuts.entry(*edge).or_default().insert(offset.clone());
            }
        }
        let mut segments_raw = Vec::new();
        for e in mu.density_edges() {
            let mut ts: BTreeSet<Q> = cuts.get(&e).cloned().unwrap_or_default();
            for (a, b, _) in mu.densities(e) {
                ts.insert(a.clone());
                ts.insert(b.clone());
            }
            let ts: Vec<Q> = ts.into_iter().collect();
            for (a, b, c) in mu.densities(e) {
                let mut inner: Vec<Q> = ts.iter().filter(|t| a <= *t && *t <= b).cloned().collect();
                inner.dedup();
                for w in inner.windows(2) {
                    let mid = (&w[0] + &w[1]) / q(2);
                    segments_raw.push((e, w[0].clone(), mid, w[1].clone(), c.clone()));
                }
            }
        }
        for (e, a, m, b, _) in &segments_raw {
            for t in [a, m, b] {
                extra.push(g.point_on_edge(*e, t.clone())?);
            }
        }
        let net = Network::new(g, extra.iter());
        let segments = segments_raw
            .into_iter()
            .map(|(e, a, m, b, c)| {
                let len = &b - &a;
                (
                    g.point_on_edge(e, a).expect("on edge"),
                    g.point_on_edge(e, m).expect("on edge"),
                    g.point_on_edge(e, b).expect("on edge"),
                    c,
                    len,
                )
            })
            .collect();
        Ok(Self {
            net,
            atoms: mu.atoms().iter().map(|(p, m)| (p.clone(), m.clone())).collect(),
            segments,
            mass: mu.mass(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    fn simpson(&self, seg: &(Point, Point, Point, Q, Q), f: impl Fn(&Point) -> Q) -> Q {
        let (a, m, b, c, len) = seg;
        c * len * (f(a) + f(m) * q(4) + f(b)) / q(6)
    }

    /// `∫ r(z, p) dμ(z)`.
    pub fn potential(&self, p: &Point) -> Q {
        let atoms: Q = self.atoms.iter().map(|(a, m)| m * self.net.r(a, p)).sum();
        let dens: Q = self
            .segments
            .iter()
            .map(|s| self.simpson(s, |z| self.net.r(z, p)))
            .sum();
        atoms + dens
    }

    /// `g_μ(x, y) = ∫ g_z(x, y) dμ(z)`.
    pub fn green(&self, x: &Point, y: &Point) -> Q {
        (self.potential(x) + self.potential(y) - &self.mass * self.net.r(x, y)) / q(2)
    }

    /// `∬ r(z, w) dμ(z) dμ(w)`.
    pub fn energy(&self) -> Q {
        let mut total = Q::zero();
        for (p, m) in &self.atoms {
            total += m * self.potential(p);
        }
        for (i, s) in self.segments.iter().enumerate() {
            // atoms against this segment
            let atoms: Q = self
                .atoms
                .iter()
                .map(|(p, m)| m * self.simpson(s, |z| self.net.r(z, p)))
                .sum();
            total += atoms;
            for (j, t) in self.segments.iter().enumerate() {
                if i == j {
                    // same segment: the rest of the graph acts as one resistor
                    let (a, _, b, c, len) = s;
                    let rab = self.net.r(a, b);
                    let l2 = len * len;
                    total += c * c * (&l2 * len / q(3) - l2 * (len - rab) / q(6));
                } else {
                    total += self.simpson(s, |z| self.simpson(t, |w| self.net.r(z, w)));
                }
            }
        }
        total
    }
}

fn check_unit_mass(mu: &Measure) -> Result<(), PotentialError> {
    let m = mu.mass();
    if m != Q::one() {
        return Err(PotentialError::MassNotOne(fmt_q(&m)));
    }
    Ok(())
}

/// `g_μ(x, y)` for a probability measure `μ`.
pub fn green_mu(g: &MetricGraph, mu: &Measure, x: &Point, y: &Point) -> Result<Q, PotentialError> {
    check_unit_mass(mu)?;
    Ok(MuKernel::new(g, mu, &[x.clone(), y.clone()])?.green(x, y))
}

/// The constant `c` with `∫ g_μ(x, y) dμ(y) = c` for every `x`, so that
/// `g_μ − c` is the kernel normalised to have zero `μ`-average.
pub fn uniformizing_constant(g: &MetricGraph, mu: &Measure) -> Result<Q, PotentialError> {
    check_unit_mass(mu)?;
    Ok(MuKernel::new(g, mu, &[])?.energy() / q(2))
}

/// The canonical admissible measure: mass `g_x / g` at every vertex and
/// density `1 / (g (ℓ_e + ρ_e))` on every edge.
pub fn zhang_measure(g: &MetricGraph) -> Result<Measure, PotentialError> {
    let (_, genus) = g.genus();
    if genus == 0 {
        return Err(PotentialError::ZeroGenus);
    }
    let gq = q(genus);
    let mut mu = Measure::zero();
    for (x, v) in g.vertices().iter().enumerate() {
        mu.add_atom(Point::Vertex(x), Q::from_integer(v.genus.into()) / &gq);
    }
    for (e, frac) in foster_terms(g).into_iter().enumerate() {
        let len = &g.edge(e).length;
        // 1/(ℓ+ρ) = (ℓ − r(u,v)) / ℓ²  =  frac / ℓ
        mu.add_density(e, Q::zero(), len.clone(), frac / len / &gq);
    }
    Ok(mu)
}

/// Evaluates `g_μ(D, x) + g_μ(x, x)` at every sample; returns `c = −value`
/// and whether the value is the same at all samples.
pub fn verify_admissibility(
    g: &MetricGraph,
    d: &Divisor,
    mu: &Measure,
    samples: &[Point],
) -> Result<(Q, bool), PotentialError> {
    check_unit_mass(mu)?;
    let mut queries: Vec<Point> = samples.to_vec();
    queries.extend(d.support().cloned());
    let k = MuKernel::new(g, mu, &queries)?;
    let values: Vec<Q> = samples
        .par_iter()
        .map(|x| {
            let gd: Q = d.iter().map(|(p, &c)| q(c) * k.green(p, x)).sum();
            gd + k.green(x, x)
        })
        .collect();
    let ok = values.windows(2).all(|w| w[0] == w[1]);
    let c = values.first().map(|v| -v).unwrap_or_else(Q::zero);
    Ok((c, ok))
}

/// Evenly spread sample points: every vertex and the midpoint of every edge.
pub fn default_samples(g: &MetricGraph) -> Vec<Point> {
    let mut pts: Vec<Point> = (0..g.num_vertices()).map(Point::Vertex).collect();
    for (e, edge) in g.edges().iter().enumerate() {
        pts.push(Point::Interior {
            edge: e,
            offset: &edge.length * qr(1, 2),
        });
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::GraphSpec;
    use crate::rational::qr;
    use proptest::prelude::*;

    fn circle3() -> MetricGraph {
        fixtures::circle(&q(1), &q(2))
    }

    /// Series/parallel oracle on a cycle: `d (L − d) / L`.
    fn cycle_r(d: &Q, l: &Q) -> Q {
        d * (l - d) / l
    }

    #[test]
    fn circle_resistances() {
        let c = circle3();
        let x = Point::Vertex(c.vertex_id("x").unwrap());
        let y = Point::Vertex(c.vertex_id("y").unwrap());
        assert_eq!(
            resistance(&c, &x, &y).unwrap(),
            Resistance::Finite(qr(2, 3))
        );
        assert_eq!(resistance(&c, &x, &x).unwrap(), Resistance::Finite(q(0)));
        let e1 = c.edge_id("e1").unwrap();
        assert_eq!(edge_resistance(&c, e1), Resistance::Finite(q(2)));
        let p = fixtures::path(&[qr(1, 2), qr(3, 2)]);
        assert_eq!(
            resistance(&p, &Point::Vertex(0), &Point::Vertex(2)).unwrap(),
            Resistance::Finite(q(2))
        );
    }

    #[test]
    fn triangle_edge_resistance() {
        let t: GraphSpec = serde_json::from_str(
            r#"{"vertices":[{"id":"a"},{"id":"b"},{"id":"c"}],
                "edges":[{"u":"a","v":"b","length":1},{"u":"b","v":"c","length":1},{"u":"c","v":"a","length":1}]}"#,
        )
        .unwrap();
        let t = t.build().unwrap();
        for e in 0..3 {
            assert_eq!(edge_resistance(&t, e), Resistance::Finite(q(2)));
        }
    }

    #[test]
    fn bridge_is_infinite() {
        let d = fixtures::dumbbell();
        let b = d.edge_id("bridge").unwrap();
        assert!(edge_resistance(&d, b).is_infinite());
        assert_eq!(foster_terms(&d)[b], q(0));
    }

    #[test]
    fn green_on_circle() {
        let c = circle3();
        let l = q(3);
        let x = Point::Vertex(c.vertex_id("x").unwrap());
        let e = c.edge_id("e2").unwrap();
        let z = c.point_on_edge(e, qr(1, 4)).unwrap();
        // distance from x to z: e2 runs y -> m, so go through y
        let d = q(1) + qr(1, 4);
        assert_eq!(green(&c, &z, &x, &x).unwrap(), cycle_r(&d, &l));
        assert_eq!(green(&c, &z, &x, &z).unwrap(), q(0));
    }

    #[test]
    fn green_function_solves_laplace() {
        let c = circle3();
        let x = Point::Vertex(0);
        let z = c.point_on_edge(1, qr(1, 3)).unwrap();
        let f = green_function(&c, &z, &x).unwrap();
        let expect = Measure::dirac(x).sub(&Measure::dirac(z));
        assert_eq!(laplacian(&c, &f), expect);
    }

    #[test]
    fn uniform_circle_kernel() {
        let c = circle3();
        let mut mu = Measure::zero();
        for (e, edge) in c.edges().iter().enumerate() {
            mu.add_density(e, q(0), edge.length.clone(), qr(1, 3));
        }
        assert_eq!(mu.mass(), q(1));
        let x = Point::Vertex(0);
        assert_eq!(green_mu(&c, &mu, &x, &x).unwrap(), qr(1, 2)); // L/6
        let p = c.point_on_edge(2, qr(1, 7)).unwrap();
        assert_eq!(green_mu(&c, &mu, &p, &p).unwrap(), qr(1, 2));
        // ½ ∬ r = ½ · L/6
        assert_eq!(uniformizing_constant(&c, &mu).unwrap(), qr(1, 4));
    }

    #[test]
    fn green_mu_of_dirac() {
        let t = fixtures::theta();
        let z = t.point_on_edge(3, qr(1, 3)).unwrap();
        let x = Point::Vertex(1);
        let y = t.point_on_edge(0, qr(1, 5)).unwrap();
        let mu = Measure::dirac(z.clone());
        assert_eq!(green_mu(&t, &mu, &x, &y).unwrap(), green(&t, &z, &x, &y).unwrap());
    }

    #[test]
    fn uniformizing_constant_matches_average() {
        // ∫ g_μ(x, y) dμ(y) for an atomic μ is a finite sum
        let t = fixtures::theta();
        let pts = [Point::Vertex(0), Point::Vertex(2), t.point_on_edge(1, qr(1, 4)).unwrap()];
        let ws = [qr(1, 2), qr(1, 3), qr(1, 6)];
        let mut mu = Measure::zero();
        for (p, w) in pts.iter().zip(&ws) {
            mu.add_atom(p.clone(), w.clone());
        }
        let c = uniformizing_constant(&t, &mu).unwrap();
        let x = t.point_on_edge(4, qr(1, 2)).unwrap();
        let mut queries = pts.to_vec();
        queries.push(x.clone());
        let k = MuKernel::new(&t, &mu, &queries).unwrap();
        let avg: Q = pts.iter().zip(&ws).map(|(p, w)| w * k.green(&x, p)).sum();
        assert_eq!(avg, c);
    }

    #[test]
    fn zhang_examples() {
        let c = circle3();
        let mu = zhang_measure(&c).unwrap();
        assert_eq!(mu.mass(), q(1));
        for e in 0..c.num_edges() {
            assert_eq!(mu.densities(e)[0].2, qr(1, 3));
        }
        let single: GraphSpec =
            serde_json::from_str(r#"{"vertices":[{"id":"x","genus":1}],"edges":[]}"#).unwrap();
        let s = single.build().unwrap();
        assert_eq!(zhang_measure(&s).unwrap(), Measure::dirac(Point::Vertex(0)));
        let d = fixtures::dumbbell();
        let mu = zhang_measure(&d).unwrap();
        assert!(mu.densities(d.edge_id("bridge").unwrap()).is_empty());
        assert_eq!(mu.mass(), q(1));
        assert!(matches!(
            zhang_measure(&fixtures::path(&[q(1)])),
            Err(PotentialError::ZeroGenus)
        ));
    }

    #[test]
    fn admissibility_on_circle() {
        let c = circle3();
        let mu = zhang_measure(&c).unwrap();
        let k = c.canonical_divisor();
        let samples = vec![
            Point::Vertex(0),
            Point::Vertex(1),
            c.point_on_edge(0, qr(1, 3)).unwrap(),
            c.point_on_edge(1, qr(2, 3)).unwrap(),
            c.point_on_edge(2, qr(1, 5)).unwrap(),
        ];
        let (_, ok) = verify_admissibility(&c, &k, &mu, &samples).unwrap();
        assert!(ok);
        // move mass between edges
        let mut bad = mu.clone();
        bad.add_density(0, q(0), q(1), qr(1, 10));
        bad.add_density(1, q(0), q(1), qr(-1, 10));
        let (_, ok) = verify_admissibility(&c, &k, &bad, &samples).unwrap();
        assert!(!ok);
    }

    #[test]
    fn admissibility_single_vertex() {
        let single: GraphSpec =
            serde_json::from_str(r#"{"vertices":[{"id":"x","genus":1}],"edges":[]}"#).unwrap();
        let s = single.build().unwrap();
        let mu = Measure::dirac(Point::Vertex(0));
        let (c, ok) =
            verify_admissibility(&s, &Divisor::zero(), &mu, &[Point::Vertex(0)]).unwrap();
        assert!(ok);
        assert_eq!(c, q(0));
    }

    #[test]
    fn edge_resistance_agrees_with_foster_terms() {
        for g in [fixtures::theta(), fixtures::dumbbell(), circle3()] {
            let terms = foster_terms(&g);
            for (e, t) in terms.iter().enumerate() {
                let len = &g.edge(e).length;
                let expect = match edge_resistance(&g, e) {
                    Resistance::Finite(rho) => len / (len + rho),
                    Resistance::Infinite => q(0),
                };
                assert_eq!(*t, expect);
            }
            let sum: Q = terms.iter().sum();
            assert_eq!(sum, q(g.genus().0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn resistance_properties(g in fixtures::strategy::graph(6, 3), a in 0usize..6, b in 0usize..6, drop in 0usize..8) {
            let n = g.num_vertices();
            let (a, b) = (Point::Vertex(a % n), Point::Vertex(b % n));
            let rab = resistance(&g, &a, &b).unwrap();
            prop_assert_eq!(&rab, &resistance(&g, &b, &a).unwrap());
            let zab = green(&g, &b, &a, &a).unwrap();
            prop_assert_eq!(Resistance::Finite(zab), rab.clone());
            if g.num_edges() > 0 {
                let sub = g.without_edge(drop % g.num_edges());
                match (resistance(&sub, &a, &b).unwrap(), rab) {
                    (Resistance::Finite(r2), Resistance::Finite(r1)) => prop_assert!(r2 >= r1),
                    (Resistance::Infinite, _) => {}
                    (Resistance::Finite(_), Resistance::Infinite) => prop_assert!(false),
                }
            }
        }

        #[test]
        fn green_is_symmetric(g in fixtures::strategy::graph(5, 2), t in 1i64..7) {
            let e = g.num_edges() - 1;
            let z = g.point_on_edge(e, &g.edge(e).length * qr(t, 8)).unwrap();
            let x = Point::Vertex(0);
            let y = Point::Vertex(g.num_vertices() - 1);
            prop_assert_eq!(green(&g, &z, &x, &y).unwrap(), green(&g, &z, &y, &x).unwrap());
        }

        #[test]
        fn zhang_refinement_invariant(g in fixtures::strategy::graph(5, 2), t in 1i64..5) {
            prop_assume!(g.genus().1 > 0);
            let mu = zhang_measure(&g).unwrap();
            prop_assert!(mu.is_nonnegative());
            let p = g.point_on_edge(0, &g.edge(0).length * qr(t, 5)).unwrap();
            let r = g.refine([&p]);
            let mu2 = zhang_measure(&r.graph).unwrap();
            // pull the refined measure back
            let mut back = Measure::zero();
            for (q_, m) in mu2.atoms() {
                back.add_atom(r.back(q_), m.clone());
            }
            for e in mu2.density_edges() {
                let (orig, a, _) = &r.pieces[e];
                for (s, t2, c) in mu2.densities(e) {
                    back.add_density(*orig, a + s, a + t2, c.clone());
                }
            }
            prop_assert_eq!(back, mu);
        }

        #[test]
        fn foster_and_green_laplacian(g in fixtures::strategy::graph(6, 3), t in 1i64..8, v in 0usize..6) {
            let foster: Q = foster_terms(&g).iter().sum();
            prop_assert_eq!(foster, q(g.genus().0));
            let e = g.num_edges() - 1;
            let z = g.point_on_edge(e, &g.edge(e).length * qr(t, 8)).unwrap();
            let x = Point::Vertex(v % g.num_vertices());
            let f = green_function(&g, &z, &x).unwrap();
            let expected = Measure::dirac(x).sub(&Measure::dirac(z));
            prop_assert_eq!(laplacian(&g, &f), expected);
        }
    }
}
