//! Small named graphs used by tests, benches and the CLI.

use std::collections::BTreeSet;

use crate::divisor::Divisor;
use crate::graph::{Edge, MetricGraph, Point, Vertex};
use crate::rational::ceil_int;
use crate::slope::{RankFunction, SlopeStructure};
use crate::weierstrass::{DirectionSlopes, SlopeData, VertexSlopes};
use num_traits::{ToPrimitive, Zero};
use crate::rational::{q, qr, Q};

fn build(vertices: &[(&str, u32)], edges: &[(&str, &str, &str, Q)]) -> MetricGraph {
    let vs: Vec<Vertex> = vertices
        .iter()
        .map(|(id, g)| Vertex {
            id: id.to_string(),
            genus: *g,
        })
        .collect();
    let idx = |id: &str| vs.iter().position(|v| v.id == id).expect("fixture vertex");
    let es = edges
        .iter()
        .map(|(id, u, v, l)| Edge {
            id: id.to_string(),
            u: idx(u),
            v: idx(v),
            length: l.clone(),
        })
        .collect();
    MetricGraph::new(vs, es).expect("fixture is valid")
}

/// A cycle made of two arcs of lengths `a` (edge `e1`, from `x` to `y`) and
/// `b`, the latter split at its midpoint `m` into `e2` (`y`–`m`) and `e3`
/// (`m`–`x`).
pub fn circle(a: &Q, b: &Q) -> MetricGraph {
    let h = b / q(2);
    build(
        &[("x", 0), ("y", 0), ("m", 0)],
        &[
            ("e1", "x", "y", a.clone()),
            ("e2", "y", "m", h.clone()),
            ("e3", "m", "x", h),
        ],
    )
}

/// Two vertices `a`, `b` joined by three paths of lengths 1, 2 and 3, each
/// subdivided at its midpoint.
pub fn theta() -> MetricGraph {
    build(
        &[("a", 0), ("b", 0), ("c1", 0), ("c2", 0), ("c3", 0)],
        &[
            ("p1a", "a", "c1", qr(1, 2)),
            ("p1b", "c1", "b", qr(1, 2)),
            ("p2a", "a", "c2", q(1)),
            ("p2b", "c2", "b", q(1)),
            ("p3a", "a", "c3", qr(3, 2)),
            ("p3b", "c3", "b", qr(3, 2)),
        ],
    )
}

/// Two triangles of perimeter 3/2 joined by a bridge of length 1.
pub fn dumbbell() -> MetricGraph {
    let h = qr(1, 2);
    build(
        &[("a", 0), ("a1", 0), ("a2", 0), ("b", 0), ("b1", 0), ("b2", 0)],
        &[
            ("la0", "a", "a1", h.clone()),
            ("la1", "a1", "a2", h.clone()),
            ("la2", "a2", "a", h.clone()),
            ("bridge", "a", "b", q(1)),
            ("lb0", "b", "b1", h.clone()),
            ("lb1", "b1", "b2", h.clone()),
            ("lb2", "b2", "b", h),
        ],
    )
}

/// Path `v0 - v1 - … - vk` with the given edge lengths (`e0`, `e1`, …).
pub fn path(lengths: &[Q]) -> MetricGraph {
    let names: Vec<String> = (0..=lengths.len()).map(|i| format!("v{i}")).collect();
    let vs: Vec<(&str, u32)> = names.iter().map(|n| (n.as_str(), 0)).collect();
    let es: Vec<(String, Q)> = lengths
        .iter()
        .enumerate()
        .map(|(i, l)| (format!("e{i}"), l.clone()))
        .collect();
    let es: Vec<(&str, &str, &str, Q)> = es
        .iter()
        .enumerate()
        .map(|(i, (id, l))| (id.as_str(), names[i].as_str(), names[i + 1].as_str(), l.clone()))
        .collect();
    build(&vs, &es)
}

/// A degree-two pencil on a circle of length 3: model vertices `x`, `y`,
/// `o` with edges `xy` (1), `yo` (1/2), `ox` (3/2), divisor `2(x)`, slopes
/// `{0, 1}` leaving `x` and `y` towards `o`, and the rank function
/// `1 − max(i, j)` at `x` and `o`.
pub fn g12_circle() -> (MetricGraph, Divisor, SlopeStructure) {
    let g = build(
        &[("x", 0), ("y", 0), ("o", 0)],
        &[
            ("xy", "x", "y", q(1)),
            ("yo", "y", "o", qr(1, 2)),
            ("ox", "o", "x", qr(3, 2)),
        ],
    );
    let arcs = vec![
        (vec![0, 1], vec![-1, 0]),
        (vec![0, 1], vec![-1, 0]),
        (vec![-1, 0], vec![0, 1]),
    ];
    let same_point: BTreeSet<Vec<usize>> = [vec![0, 0], vec![1, 1]].into_iter().collect();
    let tied = RankFunction::from_jumps(2, 1, &same_point).expect("valid jumps");
    let ranks = vec![tied.clone(), RankFunction::standard(2, 1), tied];
    let s = SlopeStructure::new(&g, 1, arcs, ranks).expect("valid structure");
    (g, Divisor::point(Point::Vertex(0), 2), s)
}

/// Full slope data of the complete series `|n (p)|` on a cycle, with the
/// model refined at the `n` points whose multiples of `n` are equivalent to
/// `n (p)`. Along a direction reaching `p` after distance `a` the slopes
/// are the integers in `[−n(L − a)/L, n a/L)`.
pub fn circle_complete_series(cycle: &MetricGraph, p: usize, n: u64) -> (MetricGraph, SlopeData) {
    let walk = |g: &MetricGraph, start: usize| -> Vec<(usize, usize, Q)> {
        // (vertex, edge taken from it, position of the vertex)
        let mut out = Vec::new();
        let (mut x, mut e, mut t) = (start, g.incident(start)[0], Q::zero());
        loop {
            out.push((x, e, t.clone()));
            t += &g.edge(e).length;
            x = g.edge(e).other(x);
            if x == start {
                return out;
            }
            e = *g.incident(x).iter().find(|&&f| f != e).expect("cycle");
        }
    };
    assert!(
        (0..cycle.num_vertices()).all(|x| cycle.valence(x) == 2),
        "circle_complete_series needs a cycle"
    );
    let total = cycle.total_length();
    let nn = Q::from_integer((n as i64).into());
    let steps = walk(cycle, p);
    let mut cuts = Vec::new();
    for k in 1..n as i64 {
        let t = &total * qr(k, n as i64);
        let i = steps.iter().rposition(|(_, _, s)| *s <= t).expect("position");
        let (x, e, s) = &steps[i];
        let along = &t - s;
        let offset = if cycle.edge(*e).u == *x {
            along
        } else {
            &cycle.edge(*e).length - along
        };
        cuts.push(cycle.point_on_edge(*e, offset).expect("on edge"));
    }
    let g = cycle.refine(cuts.iter()).graph;
    let steps = walk(&g, p);
    let slopes = |a: &Q| -> Vec<i64> {
        let lo = ceil_int(&(-(&nn) * (&total - a) / &total));
        let hi = ceil_int(&(&nn * a / &total));
        let (lo, hi) = (lo.to_i64().expect("small"), hi.to_i64().expect("small"));
        (lo..hi).collect()
    };
    let m = steps.len();
    let vertices = (0..m)
        .map(|k| {
            let (x, _, t) = &steps[k];
            let next = steps[(k + 1) % m].0;
            let prev = steps[(k + m - 1) % m].0;
            let (ahead, behind) = if k == 0 {
                (total.clone(), total.clone())
            } else {
                (&total - t, t.clone())
            };
            let name = |y: usize| format!("{}->{}", g.vertex(*x).id, g.vertex(y).id);
            VertexSlopes {
                id: g.vertex(*x).id.clone(),
                d_x: i64::from(*x == p),
                g_x: 0,
                directions: vec![
                    DirectionSlopes::full(name(next), slopes(&ahead)),
                    DirectionSlopes::full(name(prev), slopes(&behind)),
                ],
            }
        })
        .collect();
    let data = SlopeData {
        n,
        r: n as usize - 1,
        vertices,
    };
    (g, data)
}

/// Looks up a fixture by name: `circle`, `theta`, `dumbbell`.
pub fn by_name(name: &str) -> Option<MetricGraph> {
    match name {
        "circle" => Some(circle(&q(1), &q(2))),
        "theta" => Some(theta()),
        "dumbbell" => Some(dumbbell()),
        _ => None,
    }
}
