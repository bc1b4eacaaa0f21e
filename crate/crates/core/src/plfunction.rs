//! Continuous piecewise-affine functions on a metric graph.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, MetricGraph, Point, Refinement, TangentDirection};
use crate::rational::{fmt_q, serde_q, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlError {
    #[error("expected {expected} vertex values, got {got}")]
    VertexCount { expected: usize, got: usize },
    #[error("breakpoints on edge {0:?} must be strictly increasing inside the edge")]
    BadBreakpoints(String),
    #[error("slope {slope} at {at} is not an integer")]
    NonIntegerSlope { slope: String, at: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Values at model vertices plus interior breakpoints `(offset, value)` per
/// edge; affine between consecutive knots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PLFunction {
    vertex_values: Vec<Q>,
    interior: Vec<Vec<(Q, Q)>>,
}

impl PLFunction {
    pub fn new(
        g: &MetricGraph,
        vertex_values: Vec<Q>,
        mut interior: Vec<Vec<(Q, Q)>>,
    ) -> Result<Self, PlError> {
        if vertex_values.len() != g.num_vertices() {
            return Err(PlError::VertexCount {
                expected: g.num_vertices(),
                got: vertex_values.len(),
            });
        }
        interior.resize(g.num_edges(), Vec::new());
        for (e, knots) in interior.iter().enumerate() {
            let len = &g.edge(e).length;
            let ok = knots.iter().all(|(t, _)| t.is_positive() && t < len)
                && knots.windows(2).all(|w| w[0].0 < w[1].0);
            if !ok {
                return Err(PlError::BadBreakpoints(g.edge(e).id.clone()));
            }
        }
        Ok(Self {
            vertex_values,
            interior,
        })
    }

    pub fn constant(g: &MetricGraph, c: Q) -> Self {
        Self {
            vertex_values: vec![c; g.num_vertices()],
            interior: vec![Vec::new(); g.num_edges()],
        }
    }

    /// Affine on every edge of the model.
    pub fn from_vertex_values(g: &MetricGraph, values: Vec<Q>) -> Result<Self, PlError> {
        Self::new(g, values, Vec::new())
    }

    /// Pulls back a function given by its values on the vertices of a
    /// refinement (affine on refined edges) to the original model.
    pub fn from_refinement(orig: &MetricGraph, r: &Refinement, values: &[Q]) -> Self {
        let vertex_values = (0..orig.num_vertices())
            .map(|x| values[x].clone())
            .collect();
        let mut interior = vec![Vec::new(); orig.num_edges()];
        for (e, knots) in interior.iter_mut().enumerate() {
            for &re in &r.chain(e)[1..] {
                let u = r.graph.edge(re).u;
                knots.push((r.pieces[re].1.clone(), values[u].clone()));
            }
        }
        Self {
            vertex_values,
            interior,
        }
        .simplified(orig)
    }

    /// Drops interior knots where the function does not bend.
    pub fn simplified(mut self, g: &MetricGraph) -> Self {
        for e in 0..g.num_edges() {
            let all = self.knots(g, e);
            let mut keep = Vec::new();
            for w in all.windows(3) {
                let s1 = (&w[1].1 - &w[0].1) / (&w[1].0 - &w[0].0);
                let s2 = (&w[2].1 - &w[1].1) / (&w[2].0 - &w[1].0);
                if s1 != s2 {
                    keep.push(w[1].clone());
                }
            }
            self.interior[e] = keep;
        }
        self
    }

    pub fn vertex_values(&self) -> &[Q] {
        &self.vertex_values
    }

    pub fn interior_knots(&self, e: usize) -> &[(Q, Q)] {
        &self.interior[e]
    }

    /// All knots of edge `e`, endpoints included.
    pub fn knots(&self, g: &MetricGraph, e: usize) -> Vec<(Q, Q)> {
        let edge = g.edge(e);
        let mut v = Vec::with_capacity(self.interior[e].len() + 2);
        v.push((Q::zero(), self.vertex_values[edge.u].clone()));
        v.extend(self.interior[e].iter().cloned());
        v.push((edge.length.clone(), self.vertex_values[edge.v].clone()));
        v
    }

    pub fn value(&self, g: &MetricGraph, p: &Point) -> Q {
        match p {
            Point::Vertex(x) => self.vertex_values[*x].clone(),
            Point::Interior { edge, offset } => {
                let k = self.knots(g, *edge);
                let i = k.iter().position(|(t, _)| t >= offset).expect("inside edge");
                if k[i].0 == *offset {
                    return k[i].1.clone();
                }
                let (t0, v0) = &k[i - 1];
                let (t1, v1) = &k[i];
                v0 + (v1 - v0) * (offset - t0) / (t1 - t0)
            }
        }
    }

    /// Outgoing slope along a tangent direction.
    pub fn slope(&self, g: &MetricGraph, dir: &TangentDirection) -> Q {
        let k = self.knots(g, dir.edge);
        let t = g.offset_on(&dir.base, dir.edge).expect("base on edge");
        let i = k.iter().position(|(s, _)| *s >= t).expect("base on edge");
        let forward_slope = |j: usize| (&k[j + 1].1 - &k[j].1) / (&k[j + 1].0 - &k[j].0);
        if dir.forward {
            // segment starting at or after t
            let j = if k[i].0 == t { i } else { i - 1 };
            forward_slope(j)
        } else {
            -forward_slope(i - 1)
        }
    }

    /// Vertices and interior knots.
    pub fn breakpoints(&self, g: &MetricGraph) -> Vec<Point> {
        let mut pts: Vec<Point> = (0..g.num_vertices()).map(Point::Vertex).collect();
        for (e, knots) in self.interior.iter().enumerate() {
            for (t, _) in knots {
                pts.push(Point::Interior {
                    edge: e,
                    offset: t.clone(),
                });
            }
        }
        pts
    }

    /// `−Σ_ν slope_ν(f)` at every breakpoint, zero entries omitted.
    pub fn laplacian_atoms(&self, g: &MetricGraph) -> BTreeMap<Point, Q> {
        let mut out = BTreeMap::new();
        for p in self.breakpoints(g) {
            let s: Q = g
                .tangent_directions(&p)
                .iter()
                .map(|d| self.slope(g, d))
                .sum();
            if !s.is_zero() {
                out.insert(p, -s);
            }
        }
        out
    }

    pub fn is_integer_sloped(&self, g: &MetricGraph) -> Result<(), PlError> {
        for e in 0..g.num_edges() {
            for w in self.knots(g, e).windows(2) {
                let s = (&w[1].1 - &w[0].1) / (&w[1].0 - &w[0].0);
                if !s.is_integer() {
                    return Err(PlError::NonIntegerSlope {
                        slope: fmt_q(&s),
                        at: format!("{}@{}", g.edge(e).id, fmt_q(&w[0].0)),
                    });
                }
            }
        }
        Ok(())
    }

    fn combine(&self, g: &MetricGraph, other: &Self, op: impl Fn(&Q, &Q) -> Q) -> Self {
        let vertex_values = self
            .vertex_values
            .iter()
            .zip(&other.vertex_values)
            .map(|(a, b)| op(a, b))
            .collect();
        let mut interior = Vec::with_capacity(g.num_edges());
        for e in 0..g.num_edges() {
            let ts: BTreeSet<Q> = self.interior[e]
                .iter()
                .chain(&other.interior[e])
                .map(|(t, _)| t.clone())
                .collect();
            interior.push(
                ts.into_iter()
                    .map(|t| {
                        let p = Point::Interior {
                            edge: e,
                            offset: t.clone(),
                        };
                        let v = op(&self.value(g, &p), &other.value(g, &p));
                        (t, v)
                    })
                    .collect(),
            );
        }
        Self {
            vertex_values,
            interior,
        }
        .simplified(g)
    }

    pub fn add(&self, g: &MetricGraph, other: &Self) -> Self {
        self.combine(g, other, |a, b| a + b)
    }

    pub fn sub(&self, g: &MetricGraph, other: &Self) -> Self {
        self.combine(g, other, |a, b| a - b)
    }

    /// Pointwise minimum; new knots are inserted where the two cross.
    pub fn min(&self, g: &MetricGraph, other: &Self) -> Self {
        let mut with_cross = self.clone();
        for e in 0..g.num_edges() {
            let diff = self.sub(g, other).knots(g, e);
            let mut extra = Vec::new();
            for w in diff.windows(2) {
                let (t0, d0) = &w[0];
                let (t1, d1) = &w[1];
                if (d0.is_positive() && d1.is_negative()) || (d0.is_negative() && d1.is_positive()) {
                    extra.push(t0 + (t1 - t0) * d0 / (d0 - d1));
                }
            }
            if !extra.is_empty() {
                let mut knots: Vec<(Q, Q)> = with_cross.interior[e].clone();
                for t in extra {
                    let p = Point::Interior {
                        edge: e,
                        offset: t.clone(),
                    };
                    knots.push((t, self.value(g, &p)));
                }
                knots.sort();
                with_cross.interior[e] = knots;
            }
        }
        with_cross.combine(g, other, |a, b| a.min(b).clone())
    }

    pub fn scale(&self, k: &Q) -> Self {
        Self {
            vertex_values: self.vertex_values.iter().map(|v| v * k).collect(),
            interior: self
                .interior
                .iter()
                .map(|ks| ks.iter().map(|(t, v)| (t.clone(), v * k)).collect())
                .collect(),
        }
    }

    pub fn shift(&self, c: &Q) -> Self {
        Self {
            vertex_values: self.vertex_values.iter().map(|v| v + c).collect(),
            interior: self
                .interior
                .iter()
                .map(|ks| ks.iter().map(|(t, v)| (t.clone(), v + c)).collect())
                .collect(),
        }
    }

    pub fn max_value(&self) -> Q {
        self.all_values().max().cloned().unwrap_or_else(Q::zero)
    }

    pub fn min_value(&self) -> Q {
        self.all_values().min().cloned().unwrap_or_else(Q::zero)
    }

    fn all_values(&self) -> impl Iterator<Item = &Q> {
        self.vertex_values
            .iter()
            .chain(self.interior.iter().flatten().map(|(_, v)| v))
    }

    pub fn to_spec(&self, g: &MetricGraph) -> PLFunctionSpec {
        PLFunctionSpec {
            vertices: (0..g.num_vertices())
                .map(|x| (g.vertex(x).id.clone(), QString(self.vertex_values[x].clone())))
                .collect(),
            edges: (0..g.num_edges())
                .filter(|&e| !self.interior[e].is_empty())
                .map(|e| EdgeKnots {
                    edge: g.edge(e).id.clone(),
                    knots: self.interior[e]
                        .iter()
                        .map(|(t, v)| Knot {
                            offset: t.clone(),
                            value: v.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QString(#[serde(with = "serde_q")] pub Q);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Knot {
    #[serde(with = "serde_q")]
    pub offset: Q,
    #[serde(with = "serde_q")]
    pub value: Q,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeKnots {
    pub edge: String,
    pub knots: Vec<Knot>,
}

/// `{"vertices":{"x":"0","y":"1/2"},"edges":[{"edge":"e0","knots":[{"offset":"1/3","value":"2"}]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PLFunctionSpec {
    pub vertices: BTreeMap<String, QString>,
    #[serde(default)]
    pub edges: Vec<EdgeKnots>,
}

impl PLFunctionSpec {
    pub fn resolve(&self, g: &MetricGraph) -> Result<PLFunction, PlError> {
        let mut values = vec![None; g.num_vertices()];
        for (id, v) in &self.vertices {
            values[g.vertex_id(id)?] = Some(v.0.clone());
        }
        let values: Vec<Q> = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| GraphError::UnknownVertex(g.vertex(i).id.clone())))
            .collect::<Result<_, _>>()?;
        let mut interior = vec![Vec::new(); g.num_edges()];
        for ek in &self.edges {
            interior[g.edge_id(&ek.edge)?] = ek
                .knots
                .iter()
                .map(|k| (k.offset.clone(), k.value.clone()))
                .collect();
        }
        PLFunction::new(g, values, interior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{q, qr};

    #[test]
    fn slopes_and_laplacian_on_a_path() {
        // path v0 -1- v1 -1- v2, slope 1 on the first edge only
        let g = fixtures::path(&[q(1), q(1)]);
        let f = PLFunction::from_vertex_values(&g, vec![q(0), q(1), q(1)]).unwrap();
        let atoms = f.laplacian_atoms(&g);
        assert_eq!(atoms.get(&Point::Vertex(0)), Some(&q(-1)));
        assert_eq!(atoms.get(&Point::Vertex(1)), Some(&q(1)));
        assert_eq!(atoms.len(), 2);
    }

    #[test]
    fn interior_knot_value_and_slope() {
        let g = fixtures::path(&[q(2)]);
        let f = PLFunction::new(&g, vec![q(0), q(0)], vec![vec![(q(1), q(1))]]).unwrap();
        let mid = g.point_on_edge(0, qr(1, 2)).unwrap();
        assert_eq!(f.value(&g, &mid), qr(1, 2));
        let top = g.point_on_edge(0, q(1)).unwrap();
        for d in g.tangent_directions(&top) {
            assert_eq!(f.slope(&g, &d), q(-1));
        }
        assert_eq!(f.laplacian_atoms(&g).get(&top), Some(&q(2)));
    }

    #[test]
    fn min_inserts_crossings() {
        let g = fixtures::path(&[q(2)]);
        let a = PLFunction::from_vertex_values(&g, vec![q(0), q(2)]).unwrap();
        let b = PLFunction::from_vertex_values(&g, vec![q(2), q(0)]).unwrap();
        let m = a.min(&g, &b);
        assert_eq!(m.interior_knots(0), &[(q(1), q(1))]);
        assert_eq!(m.max_value(), q(1));
    }
}
