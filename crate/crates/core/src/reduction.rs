//! Divisors of PL functions and `v`-reduced divisors.
//!
//! Reduction runs the burning algorithm on a lattice: every length and
//! offset involved is a multiple of `1/N`, all chip moves stay on that
//! lattice, and positions, chips and function values are machine integers.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::divisor::Divisor;
use crate::graph::{GraphError, MetricGraph, Point, TangentDirection};
use crate::plfunction::{PLFunction, PlError};
use crate::potential::green_function;
use crate::rational::{lcm_denominators, q, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReduceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Pl(#[from] PlError),
    #[error("lattice scale {0} does not fit in 64 bits")]
    ScaleOverflow(String),
}

/// `div(f)`: coefficient `−Σ_ν slope_ν(f)` at every breakpoint.
pub fn div(g: &MetricGraph, f: &PLFunction) -> Result<Divisor, PlError> {
    f.is_integer_sloped(g)?;
    let mut d = Divisor::zero();
    for (p, a) in f.laplacian_atoms(g) {
        d.add_at(p, a.to_integer().to_i64().expect("slope sum fits in i64"));
    }
    Ok(d)
}

/// Result of [`reduce`]: `divisor = D + div(witness)` with `witness(v) = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reduction {
    pub divisor: Divisor,
    pub witness: PLFunction,
}

impl Reduction {
    /// Outgoing integer slopes of the witness at `p`, one per tangent direction.
    pub fn slopes_at(&self, g: &MetricGraph, p: &Point) -> Vec<(TangentDirection, i64)> {
        g.tangent_directions(p)
            .into_iter()
            .map(|d| {
                let s = self.witness.slope(g, &d);
                (d, s.to_integer().to_i64().expect("integer slope"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Vertex(usize),
    Edge(usize, i64),
}

#[derive(Debug, Clone)]
struct Node {
    loc: Loc,
    chips: i64,
    orig: i64,
    /// Function value in units of `1/N`.
    f: i128,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: usize,
    b: usize,
    len: i64,
    edge: usize,
}

struct Workspace<'g> {
    g: &'g MetricGraph,
    scale: i64,
    lens: Vec<i64>,
    nodes: Vec<Node>,
    alive: Vec<bool>,
    /// Interior nodes per edge, keyed by lattice position.
    on_edge: Vec<BTreeMap<i64, usize>>,
    base: usize,
}

fn lattice_scale<'a>(
    g: &MetricGraph,
    extra: impl IntoIterator<Item = &'a Point>,
) -> Result<i64, ReduceError> {
    let mut qs: Vec<Q> = g.edges().iter().map(|e| e.length.clone()).collect();
    for p in extra {
        if let Point::Interior { offset, .. } = p {
            qs.push(offset.clone());
        }
    }
    let n: BigInt = lcm_denominators(qs.iter());
    n.to_i64()
        .filter(|v| *v < (1 << 40))
        .ok_or_else(|| ReduceError::ScaleOverflow(n.to_string()))
}

fn to_lattice(x: &Q, scale: i64) -> i64 {
    let v = x * q(scale);
    debug_assert!(v.is_integer());
    v.to_integer().to_i64().expect("lattice coordinate fits")
}

impl<'g> Workspace<'g> {
    fn new(g: &'g MetricGraph, d: &Divisor, v: &Point, scale: i64) -> Self {
        let lens = g.edges().iter().map(|e| to_lattice(&e.length, scale)).collect();
        let mut ws = Self {
            g,
            scale,
            lens,
            nodes: Vec::new(),
            alive: Vec::new(),
            on_edge: vec![BTreeMap::new(); g.num_edges()],
            base: 0,
        };
        for x in 0..g.num_vertices() {
            ws.push(Loc::Vertex(x), 0, 0);
        }
        for (p, &c) in d.iter() {
            let id = ws.node_at(p);
            ws.nodes[id].chips += c;
            ws.nodes[id].orig += c;
        }
        ws.base = ws.node_at(v);
        ws
    }

    fn push(&mut self, loc: Loc, chips: i64, f: i128) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            loc,
            chips,
            orig: 0,
            f,
        });
        self.alive.push(true);
        if let Loc::Edge(e, pos) = loc {
            self.on_edge[e].insert(pos, id);
        }
        id
    }

    fn node_at(&mut self, p: &Point) -> usize {
        match p {
            Point::Vertex(x) => *x,
            Point::Interior { edge, offset } => {
                let pos = to_lattice(offset, self.scale);
                match self.on_edge[*edge].get(&pos) {
                    Some(&id) => id,
                    None => self.push(Loc::Edge(*edge, pos), 0, 0),
                }
            }
        }
    }

    fn point_of(&self, id: usize) -> Point {
        match self.nodes[id].loc {
            Loc::Vertex(x) => Point::Vertex(x),
            Loc::Edge(e, pos) => Point::Interior {
                edge: e,
                offset: Q::new(pos.into(), self.scale.into()),
            },
        }
    }

    /// Lattice position of a node along edge `e`.
    fn pos_on(&self, id: usize, e: usize) -> i64 {
        match self.nodes[id].loc {
            Loc::Vertex(x) if x == self.g.edge(e).u => 0,
            Loc::Vertex(_) => self.lens[e],
            Loc::Edge(_, pos) => pos,
        }
    }

    fn segments(&self) -> Vec<Segment> {
        let mut segs = Vec::new();
        for (e, edge) in self.g.edges().iter().enumerate() {
            let mut prev = (edge.u, 0i64);
            for (&pos, &id) in &self.on_edge[e] {
                segs.push(Segment {
                    a: prev.0,
                    b: id,
                    len: pos - prev.1,
                    edge: e,
                });
                prev = (id, pos);
            }
            segs.push(Segment {
                a: prev.0,
                b: edge.v,
                len: self.lens[e] - prev.1,
                edge: e,
            });
        }
        segs
    }

    /// One burning pass followed by one firing; `false` once reduced.
    fn step(&mut self) -> bool {
        let segs = self.segments();
        let n = self.nodes.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, s) in segs.iter().enumerate() {
            adj[s.a].push(i);
            adj[s.b].push(i);
        }
        let mut burnt = vec![false; n];
        let mut hits = vec![0i64; n];
        burnt[self.base] = true;
        let mut queue = VecDeque::from([self.base]);
        while let Some(x) = queue.pop_front() {
            for &si in &adj[x] {
                let s = segs[si];
                let y = if s.a == x { s.b } else { s.a };
                if burnt[y] {
                    continue;
                }
                hits[y] += 1;
                if hits[y] > self.nodes[y].chips {
                    burnt[y] = true;
                    queue.push_back(y);
                }
            }
        }
        let unburnt: Vec<usize> = (0..n).filter(|&i| self.alive[i] && !burnt[i]).collect();
        if unburnt.is_empty() {
            return false;
        }
        // outgoing segments of the unburnt set
        let mut k = i64::MAX;
        let mut eps = i64::MAX;
        let mut outs: Vec<(usize, Segment)> = Vec::new();
        for &b in &unburnt {
            let mine: Vec<Segment> = adj[b]
                .iter()
                .map(|&si| segs[si])
                .filter(|s| burnt[if s.a == b { s.b } else { s.a }])
                .collect();
            if mine.is_empty() {
                continue;
            }
            k = k.min(self.nodes[b].chips / mine.len() as i64);
            for s in mine {
                eps = eps.min(s.len);
                outs.push((b, s));
            }
        }
        debug_assert!(k >= 1 && eps >= 1);
        let lift = (k as i128) * (eps as i128);
        for (b, s) in &outs {
            self.nodes[*b].chips -= k;
            let a = if s.a == *b { s.b } else { s.a };
            if s.len == eps {
                self.nodes[a].chips += k;
            } else {
                let pb = self.pos_on(*b, s.edge);
                let pa = self.pos_on(a, s.edge);
                let pos = if pa > pb { pb + eps } else { pb - eps };
                let (fb, fa) = (self.nodes[*b].f, self.nodes[a].f);
                let f = fb + (fa - fb) / (s.len as i128) * (eps as i128);
                // burnt-side value, lifted below with the rest of that side
                let id = self.push(Loc::Edge(s.edge, pos), k, f);
                burnt.push(true);
                debug_assert_eq!(id + 1, burnt.len());
            }
        }
        for ((node, &alive), &b) in self.nodes.iter_mut().zip(&self.alive).zip(&burnt) {
            if alive && b {
                node.f += lift;
            }
        }
        self.prune();
        true
    }

    fn prune(&mut self) {
        for e in 0..self.on_edge.len() {
            let dead: Vec<i64> = self.on_edge[e]
                .iter()
                .filter(|(_, &id)| {
                    id != self.base && self.nodes[id].chips == 0 && self.nodes[id].orig == 0
                })
                .map(|(&pos, _)| pos)
                .collect();
            for pos in dead {
                let id = self.on_edge[e].remove(&pos).expect("present");
                self.alive[id] = false;
            }
        }
    }

    fn witness(&self) -> PLFunction {
        let s = Q::from_integer(self.scale.into());
        let fv = self.nodes[self.base].f;
        let val = |id: usize| Q::from_integer(BigInt::from(self.nodes[id].f - fv)) / &s;
        let vertex_values = (0..self.g.num_vertices()).map(val).collect();
        let interior = self
            .on_edge
            .iter()
            .map(|m| {
                m.iter()
                    .map(|(&pos, &id)| (Q::new(pos.into(), self.scale.into()), val(id)))
                    .collect()
            })
            .collect();
        PLFunction::new(self.g, vertex_values, interior)
            .expect("workspace knots are ordered")
            .simplified(self.g)
    }

    fn divisor(&self) -> Divisor {
        Divisor::from_pairs(
            (0..self.nodes.len())
                .filter(|&i| self.alive[i])
                .map(|i| (self.point_of(i), self.nodes[i].chips)),
        )
    }
}

/// Returns `(D', f)` with `D' = D + div(f)` effective away from `v`.
pub fn make_effective(
    g: &MetricGraph,
    d: &Divisor,
    v: &Point,
) -> Result<(Divisor, PLFunction), ReduceError> {
    let mut out = d.clone();
    let mut f = PLFunction::constant(g, Q::zero());
    let negatives: Vec<(Point, i64)> = d
        .iter()
        .filter(|(p, &c)| c < 0 && *p != v)
        .map(|(p, &c)| (p.clone(), c))
        .collect();
    for (x, c) in negatives {
        // Δφ = δ_x − δ_v; m φ is integer-sloped
        let phi = green_function(g, v, &x).map_err(|e| match e {
            crate::potential::PotentialError::Graph(ge) => ReduceError::Graph(ge),
            other => panic!("unexpected potential error: {other}"),
        })?;
        let mut slopes = Vec::new();
        for e in 0..g.num_edges() {
            for w in phi.knots(g, e).windows(2) {
                slopes.push((&w[1].1 - &w[0].1) / (&w[1].0 - &w[0].0));
            }
        }
        let m = lcm_denominators(slopes.iter()).to_i64().expect("small lcm");
        let times = (-c + m - 1) / m;
        let step = phi.scale(&q(times * m));
        f = f.add(g, &step);
        out.add_at(x.clone(), times * m);
        out.add_at(v.clone(), -times * m);
    }
    Ok((out, f))
}

/// The `v`-reduced divisor linearly equivalent to `D`, with its witness.
pub fn reduce(g: &MetricGraph, d: &Divisor, v: &Point) -> Result<Reduction, ReduceError> {
    g.check_point(v)?;
    for p in d.support() {
        g.check_point(p)?;
    }
    let (eff, f0) = make_effective(g, d, v)?;
    let mut pts: Vec<Point> = eff.support().cloned().collect();
    pts.extend(d.support().cloned());
    pts.push(v.clone());
    let scale = lattice_scale(g, pts.iter())?;
    let mut ws = Workspace::new(g, &eff, v, scale);
    // original divisor for pruning decisions
    for n in ws.nodes.iter_mut() {
        n.orig = 0;
    }
    for (p, &c) in d.iter() {
        let id = ws.node_at(p);
        ws.nodes[id].orig = c;
    }
    // seed f with the make-effective part (affine between nodes)
    let fv0 = f0.value(g, v);
    for id in 0..ws.nodes.len() {
        let val = (f0.value(g, &ws.point_of(id)) - &fv0) * q(scale);
        ws.nodes[id].f = val.to_integer().to_i128().expect("value fits");
    }
    while ws.step() {}
    let divisor = ws.divisor();
    let witness = ws.witness();
    Ok(Reduction { divisor, witness })
}

/// Whether `d` is `v`-reduced.
pub fn is_reduced(g: &MetricGraph, d: &Divisor, v: &Point) -> Result<bool, ReduceError> {
    if !d.is_effective_except(v) {
        return Ok(false);
    }
    Ok(reduce(g, d, v)?.divisor == *d)
}

/// The set of slopes along `dir` of functions in the complete linear
/// series `|D|`: the integers in `[min, max]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlopeRange {
    pub min: i64,
    pub max: i64,
}

impl SlopeRange {
    pub fn values(&self) -> Vec<i64> {
        (self.min..=self.max).collect()
    }
}

/// Slopes along `dir` attained by `f` with `D + div(f) ≥ 0`; `None` if
/// `|D|` is empty.
pub fn complete_slopes(
    g: &MetricGraph,
    d: &Divisor,
    dir: &TangentDirection,
) -> Result<Option<SlopeRange>, ReduceError> {
    let x = &dir.base;
    let red = reduce(g, d, x)?;
    if red.divisor.get(x) < 0 {
        return Ok(None);
    }
    let min = red
        .witness
        .slope(g, dir)
        .to_integer()
        .to_i64()
        .expect("integer slope");
    let t0 = g.offset_on(x, dir.edge).expect("base on edge");
    let len = &g.edge(dir.edge).length;
    // probe below the scale at which chips can cross the base point
    let room = if dir.forward { len - &t0 } else { t0.clone() };
    let mut pts: Vec<Point> = d.support().cloned().collect();
    pts.push(x.clone());
    let n = lattice_scale(g, pts.iter())?;
    let fine = Q::new(1.into(), (2 * n * d.degree().abs().max(1)).into());
    let mut eps = (room / q(2)).min(fine);
    let mut last: Option<i64> = None;
    for _ in 0..64 {
        let t = if dir.forward { &t0 + &eps } else { &t0 - &eps };
        let y = g.point_on_edge(dir.edge, t)?;
        let ry = reduce(g, d, &y)?;
        let back = TangentDirection {
            base: y.clone(),
            edge: dir.edge,
            forward: !dir.forward,
        };
        let s_back = ry.witness.slope(g, &back);
        let s_here = ry.witness.slope(g, dir);
        let cand = (-&s_back).to_integer().to_i64().expect("integer slope");
        if s_here == -&s_back && last == Some(cand) {
            return Ok(Some(SlopeRange { min, max: cand }));
        }
        last = Some(cand);
        eps /= q(2);
    }
    unreachable!("slope sequence stabilises on a finite lattice")
}

/// `D_v(v) ≥ deg D − g` for every `v` once `deg D ≥ g`.
pub fn reduced_coefficient_bound(g: &MetricGraph, d: &Divisor) -> i64 {
    d.degree() - g.genus().0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::qr;
    use proptest::prelude::*;

    fn circle3() -> MetricGraph {
        fixtures::circle(&q(1), &q(2))
    }

    /// Position of a point along the circle, starting at `x` and running
    /// `x -e1-> y -e2-> m -e3-> x`.
    fn arc_pos(p: &Point) -> Q {
        match p {
            Point::Vertex(x) => q(*x as i64),
            Point::Interior { edge, offset } => q(*edge as i64) + offset,
        }
    }

    fn circle_point(g: &MetricGraph, t: &Q) -> Point {
        let l = q(3);
        let mut t = t.clone();
        while t < q(0) {
            t += &l;
        }
        while t >= l {
            t -= &l;
        }
        let e = t.floor().to_integer().to_i64().unwrap() as usize;
        g.point_on_edge(e, &t - q(e as i64)).unwrap()
    }

    #[test]
    fn div_examples() {
        let c = circle3();
        assert!(div(&c, &PLFunction::constant(&c, q(5))).unwrap().is_zero());
        // f = slope s on e0 of a path, constant after
        let p = fixtures::path(&[q(1), q(1)]);
        let f = PLFunction::from_vertex_values(&p, vec![q(0), q(3), q(3)]).unwrap();
        let d = div(&p, &f).unwrap();
        assert_eq!(d.get(&Point::Vertex(0)), -3);
        assert_eq!(d.get(&Point::Vertex(1)), 3);
        // tent on a circle of circumference 2 with q = x, p = y: slopes +1 out
        // of q along both arcs, -1 out of p along both arcs
        let tent = fixtures::circle(&q(1), &q(1));
        let f = PLFunction::from_vertex_values(&tent, vec![q(0), q(1), qr(1, 2)]).unwrap();
        let d = div(&tent, &f).unwrap();
        assert_eq!(
            d,
            Divisor::from_pairs([(Point::Vertex(0), -2), (Point::Vertex(1), 2)])
        );
        let non_integer = PLFunction::from_vertex_values(&p, vec![q(0), qr(1, 2), q(0)]).unwrap();
        assert!(div(&p, &non_integer).is_err());
    }

    #[test]
    fn already_reduced() {
        let c = circle3();
        let v = Point::Vertex(1);
        let d = Divisor::point(v.clone(), 3);
        let r = reduce(&c, &d, &v).unwrap();
        assert_eq!(r.divisor, d);
        assert_eq!(r.witness, PLFunction::constant(&c, q(0)));
    }

    #[test]
    fn degree_one_on_circle_is_rigid() {
        let c = circle3();
        let p = c.point_on_edge(1, qr(1, 3)).unwrap();
        for v in [Point::Vertex(0), Point::Vertex(2), c.point_on_edge(0, qr(1, 2)).unwrap()] {
            let r = reduce(&c, &Divisor::point(p.clone(), 1), &v).unwrap();
            assert_eq!(r.divisor, Divisor::point(p.clone(), 1));
        }
    }

    /// On a circle of circumference L, the `v`-reduced form of `n(p)` is
    /// `(n−1)(v) + (w)` with `w = n·p − (n−1)·v` in `ℝ / Lℤ`.
    #[test]
    fn circle_group_law_oracle() {
        let c = circle3();
        let p = c.point_on_edge(2, qr(1, 4)).unwrap();
        let tp = arc_pos(&p);
        for n in 1..9 {
            for v in [Point::Vertex(0), Point::Vertex(1), c.point_on_edge(1, qr(2, 3)).unwrap()] {
                let tv = arc_pos(&v);
                let w = circle_point(&c, &(q(n) * &tp - q(n - 1) * &tv));
                let mut expect = Divisor::point(v.clone(), n - 1);
                expect.add_at(w, 1);
                let r = reduce(&c, &Divisor::point(p.clone(), n), &v).unwrap();
                assert_eq!(r.divisor, expect, "n = {n}");
                assert!(r.divisor.get(&v) >= n - 1);
                let back = &Divisor::point(p.clone(), n) + &div(&c, &r.witness).unwrap();
                assert_eq!(back, r.divisor);
            }
        }
    }

    #[test]
    fn negative_coefficients_are_handled() {
        let t = fixtures::theta();
        let mut d = Divisor::point(Point::Vertex(2), -2);
        d.add_at(Point::Vertex(3), 3);
        d.add_at(t.point_on_edge(5, qr(1, 2)).unwrap(), 1);
        let v = Point::Vertex(0);
        let r = reduce(&t, &d, &v).unwrap();
        assert!(r.divisor.is_effective_except(&v));
        assert_eq!(&d + &div(&t, &r.witness).unwrap(), r.divisor);
        assert_eq!(r.witness.value(&t, &v), q(0));
    }

    #[test]
    fn circle_slope_ranges() {
        // D = n(p) with p = x on a circle of circumference L = 3;
        // S = Z ∩ [−n(L−a)/L, n a/L) with a the distance from base to p
        // along the direction, and {0..n−1} when the base is p itself.
        let c = circle3();
        let x = Point::Vertex(0);
        for n in 1..6i64 {
            let d = Divisor::point(x.clone(), n);
            for dir in c.tangent_directions(&x) {
                let s = complete_slopes(&c, &d, &dir).unwrap().unwrap();
                assert_eq!(s, SlopeRange { min: 0, max: n - 1 });
            }
            let y = Point::Vertex(1);
            for dir in c.tangent_directions(&y) {
                // towards x along e1 (a = 1) or the long way (a = 2)
                let a = if dir.edge == 0 { q(1) } else { q(2) };
                let lo = (-(q(n) * (q(3) - &a)) / q(3)).ceil().to_integer().to_i64().unwrap();
                let hi_excl = q(n) * &a / q(3);
                let hi = if hi_excl.is_integer() {
                    hi_excl.to_integer().to_i64().unwrap() - 1
                } else {
                    hi_excl.floor().to_integer().to_i64().unwrap()
                };
                let s = complete_slopes(&c, &d, &dir).unwrap().unwrap();
                assert_eq!(s, SlopeRange { min: lo, max: hi }, "n={n} edge={}", dir.edge);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn reduce_properties(
            g in fixtures::strategy::graph(5, 2),
            coeffs in prop::collection::vec(-2i64..4, 5),
            base in 0usize..5,
            t in 1i64..4,
        ) {
            let n = g.num_vertices();
            let mut d = Divisor::zero();
            for (i, c) in coeffs.iter().enumerate().take(n) {
                d.add_at(Point::Vertex(i), *c);
            }
            let e = g.num_edges() - 1;
            d.add_at(g.point_on_edge(e, &g.edge(e).length * qr(t, 4)).unwrap(), 1);
            let v = Point::Vertex(base % n);
            let r = reduce(&g, &d, &v).unwrap();
            let fdiv = div(&g, &r.witness).unwrap();
            prop_assert_eq!(fdiv.degree(), 0);
            prop_assert_eq!(&d + &fdiv, r.divisor.clone());
            prop_assert!(r.divisor.is_effective_except(&v));
            // projection
            let again = reduce(&g, &r.divisor, &v).unwrap();
            prop_assert_eq!(&again.divisor, &r.divisor);
            prop_assert_eq!(again.witness, PLFunction::constant(&g, q(0)));
            if d.degree() >= g.genus().0 {
                prop_assert!(r.divisor.get(&v) >= reduced_coefficient_bound(&g, &d));
            }
        }
    }
}
