//! Augmented metric graphs: simple graph models with rational edge lengths
//! and a genus attached to every vertex.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::divisor::Divisor;
use crate::rational::{fmt_q, serde_q, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("duplicate vertex id {0:?}")]
    DuplicateVertex(String),
    #[error("duplicate edge id {0:?}")]
    DuplicateEdge(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("unknown edge {0:?}")]
    UnknownEdge(String),
    #[error("edge {0:?} is a loop; subdivide it into a path of simple edges")]
    Loop(String),
    #[error("edges {0:?} and {1:?} are parallel; subdivide one of them")]
    ParallelEdge(String, String),
    #[error("edge {edge:?} has non-positive length {length}")]
    NonPositiveLength { edge: String, length: String },
    #[error("graph is disconnected (vertex {0:?} is unreachable)")]
    Disconnected(String),
    #[error("offset {offset} is outside edge {edge:?} of length {length}")]
    OffsetOutOfRange {
        edge: String,
        offset: String,
        length: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: String,
    pub genus: u32,
}

/// An edge of the model, oriented from `u` (offset 0) to `v` (offset `length`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub u: usize,
    pub v: usize,
    pub length: Q,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// A point of the metric graph in canonical form: endpoint offsets are
/// always reported as `Vertex`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Point {
    Vertex(usize),
    Interior { edge: usize, offset: Q },
}

/// An outgoing unit tangent vector at `base`, pointing into `edge`.
/// `forward` means the direction of increasing offset (towards `edge.v`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TangentDirection {
    pub base: Point,
    pub edge: usize,
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    incident: Vec<Vec<usize>>,
    vertex_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
}

impl MetricGraph {
    /// Builds and validates a graph.
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let g = Self::assemble(vertices, edges)?;
        g.check_connected()?;
        Ok(g)
    }

    /// Same checks as [`MetricGraph::new`] except connectivity.
    pub(crate) fn assemble(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        if vertices.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut vertex_index = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if vertex_index.insert(v.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateVertex(v.id.clone()));
            }
        }
        let mut edge_index = HashMap::new();
        let mut seen_pairs: HashMap<(usize, usize), usize> = HashMap::new();
        let mut incident = vec![Vec::new(); vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.u >= vertices.len() || e.v >= vertices.len() {
                return Err(GraphError::UnknownVertex(format!("#{}", e.u.max(e.v))));
            }
            if edge_index.insert(e.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateEdge(e.id.clone()));
            }
            if e.u == e.v {
                return Err(GraphError::Loop(e.id.clone()));
            }
            if !e.length.is_positive() {
                return Err(GraphError::NonPositiveLength {
                    edge: e.id.clone(),
                    length: fmt_q(&e.length),
                });
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if let Some(&j) = seen_pairs.get(&key) {
                return Err(GraphError::ParallelEdge(edges[j].id.clone(), e.id.clone()));
            }
            seen_pairs.insert(key, i);
            incident[e.u].push(i);
            incident[e.v].push(i);
        }
        Ok(Self {
            vertices,
            edges,
            incident,
            vertex_index,
            edge_index,
        })
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let comp = self.components();
        match comp.iter().position(|&c| c != 0) {
            Some(i) => Err(GraphError::Disconnected(self.vertices[i].id.clone())),
            None => Ok(()),
        }
    }

    /// Component label per vertex, labels assigned in vertex order.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.vertices.len()];
        let mut next = 0;
        for s in 0..self.vertices.len() {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                for &e in &self.incident[x] {
                    let y = self.edges[e].other(x);
                    if label[y] == usize::MAX {
                        label[y] = next;
                        queue.push_back(y);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, i: usize) -> &Vertex {
        &self.vertices[i]
    }

    pub fn edge(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge indices incident to vertex `x`, in increasing order.
    pub fn incident(&self, x: usize) -> &[usize] {
        &self.incident[x]
    }

    pub fn valence(&self, x: usize) -> usize {
        self.incident[x].len()
    }

    pub fn vertex_id(&self, id: &str) -> Result<usize, GraphError> {
        self.vertex_index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownVertex(id.to_string()))
    }

    pub fn edge_id(&self, id: &str) -> Result<usize, GraphError> {
        self.edge_index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownEdge(id.to_string()))
    }

    /// The edge joining `a` and `b`, if any.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.incident[a]
            .iter()
            .copied()
            .find(|&e| self.edges[e].other(a) == b)
    }

    pub fn total_length(&self) -> Q {
        self.edges.iter().map(|e| e.length.clone()).sum()
    }

    /// `(g(Γ), g)`: first Betti number and total genus.
    pub fn genus(&self) -> (i64, i64) {
        let comps = self.components().into_iter().max().map_or(0, |m| m + 1) as i64;
        let betti = self.edges.len() as i64 - self.vertices.len() as i64 + comps;
        let total = betti + self.vertices.iter().map(|v| v.genus as i64).sum::<i64>();
        (betti, total)
    }

    /// `K_X = Σ (2g_x − 2 + val(x)) (x)`.
    pub fn canonical_divisor(&self) -> Divisor {
        let mut d = Divisor::zero();
        for x in 0..self.vertices.len() {
            let c = 2 * self.vertices[x].genus as i64 - 2 + self.valence(x) as i64;
            d.add_at(Point::Vertex(x), c);
        }
        d
    }

    /// `K_Γ = Σ (val(x) − 2) (x)`, the canonical divisor of the bare metric graph.
    pub fn graph_canonical_divisor(&self) -> Divisor {
        let mut d = Divisor::zero();
        for x in 0..self.vertices.len() {
            d.add_at(Point::Vertex(x), self.valence(x) as i64 - 2);
        }
        d
    }

    /// `K_g = Σ g_x (x)`.
    pub fn genus_divisor(&self) -> Divisor {
        let mut d = Divisor::zero();
        for (x, v) in self.vertices.iter().enumerate() {
            d.add_at(Point::Vertex(x), v.genus as i64);
        }
        d
    }

    /// Canonicalises `(edge, offset)`; endpoints become vertices.
    pub fn point_on_edge(&self, edge: usize, offset: Q) -> Result<Point, GraphError> {
        let e = &self.edges[edge];
        if offset.is_negative() || offset > e.length {
            return Err(GraphError::OffsetOutOfRange {
                edge: e.id.clone(),
                offset: fmt_q(&offset),
                length: fmt_q(&e.length),
            });
        }
        if offset.is_zero() {
            Ok(Point::Vertex(e.u))
        } else if offset == e.length {
            Ok(Point::Vertex(e.v))
        } else {
            Ok(Point::Interior { edge, offset })
        }
    }

    /// Checks that `p` is a canonical point of this graph.
    pub fn check_point(&self, p: &Point) -> Result<(), GraphError> {
        match p {
            Point::Vertex(x) if *x < self.vertices.len() => Ok(()),
            Point::Vertex(x) => Err(GraphError::UnknownVertex(format!("#{x}"))),
            Point::Interior { edge, offset } => {
                let e = self
                    .edges
                    .get(*edge)
                    .ok_or_else(|| GraphError::UnknownEdge(format!("#{edge}")))?;
                if offset.is_positive() && *offset < e.length {
                    Ok(())
                } else {
                    Err(GraphError::OffsetOutOfRange {
                        edge: e.id.clone(),
                        offset: fmt_q(offset),
                        length: fmt_q(&e.length),
                    })
                }
            }
        }
    }

    pub fn valence_of(&self, p: &Point) -> usize {
        match p {
            Point::Vertex(x) => self.valence(*x),
            Point::Interior { .. } => 2,
        }
    }

    pub fn genus_at(&self, p: &Point) -> u32 {
        match p {
            Point::Vertex(x) => self.vertices[*x].genus,
            Point::Interior { .. } => 0,
        }
    }

    /// Outgoing tangent directions at `p`, ordered by edge id (and backward
    /// before forward on an edge interior).
    pub fn tangent_directions(&self, p: &Point) -> Vec<TangentDirection> {
        match p {
            Point::Vertex(x) => self.incident[*x]
                .iter()
                .map(|&e| TangentDirection {
                    base: p.clone(),
                    edge: e,
                    forward: self.edges[e].u == *x,
                })
                .collect(),
            Point::Interior { edge, .. } => vec![
                TangentDirection {
                    base: p.clone(),
                    edge: *edge,
                    forward: false,
                },
                TangentDirection {
                    base: p.clone(),
                    edge: *edge,
                    forward: true,
                },
            ],
        }
    }

    /// Offset of `p` along `edge`, if `p` lies on the closed edge.
    pub fn offset_on(&self, p: &Point, edge: usize) -> Option<Q> {
        let e = &self.edges[edge];
        match p {
            Point::Vertex(x) if *x == e.u => Some(Q::zero()),
            Point::Vertex(x) if *x == e.v => Some(e.length.clone()),
            Point::Interior { edge: pe, offset } if *pe == edge => Some(offset.clone()),
            _ => None,
        }
    }

    pub fn point_name(&self, p: &Point) -> String {
        match p {
            Point::Vertex(x) => self.vertices[*x].id.clone(),
            Point::Interior { edge, offset } => {
                format!("{}@{}", self.edges[*edge].id, fmt_q(offset))
            }
        }
    }

    /// Parses `x` (vertex id) or `e@p/q` (edge id and offset).
    pub fn parse_point(&self, s: &str) -> Result<Point, GraphError> {
        match s.split_once('@') {
            Some((e, off)) => {
                let edge = self.edge_id(e)?;
                let offset = crate::rational::parse_q(off).map_err(|_| {
                    GraphError::OffsetOutOfRange {
                        edge: e.to_string(),
                        offset: off.to_string(),
                        length: fmt_q(&self.edges[edge].length),
                    }
                })?;
                self.point_on_edge(edge, offset)
            }
            None => Ok(Point::Vertex(self.vertex_id(s)?)),
        }
    }

    /// The metric graph `Γ ∖ e` (open edge removed); may be disconnected.
    pub fn without_edge(&self, edge: usize) -> MetricGraph {
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != edge)
            .map(|(_, e)| e.clone())
            .collect();
        Self::assemble(self.vertices.clone(), edges).expect("sub-model of a valid model")
    }

    /// Whether removing the open edge disconnects the graph.
    pub fn is_bridge(&self, edge: usize) -> bool {
        let comps = self.without_edge(edge).components();
        let e = &self.edges[edge];
        comps[e.u] != comps[e.v]
    }

    /// Subdivides the model so that every point of `points` becomes a vertex.
    pub fn refine<'a>(&self, points: impl IntoIterator<Item = &'a Point>) -> Refinement {
        let mut cuts: BTreeMap<usize, BTreeSet<Q>> = BTreeMap::new();
        for p in points {
            if let Point::Interior { edge, offset } = p {
                cuts.entry(*edge).or_default().insert(offset.clone());
            }
        }
        Refinement::build(self, &cuts)
    }

    /// Subdivides every edge into equal pieces of length at most `step`.
    pub fn refine_uniform(&self, step: &Q) -> Refinement {
        let mut cuts: BTreeMap<usize, BTreeSet<Q>> = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            let k = crate::rational::ceil_int(&(&e.length / step));
            let k: i64 = num_traits::ToPrimitive::to_i64(&k).unwrap_or(1).max(1);
            let set = cuts.entry(i).or_default();
            for j in 1..k {
                set.insert(&e.length * Q::new(j.into(), k.into()));
            }
        }
        Refinement::build(self, &cuts)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            vertices: self
                .vertices
                .iter()
                .map(|v| VertexSpec {
                    id: v.id.clone(),
                    genus: v.genus,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    id: Some(e.id.clone()),
                    u: self.vertices[e.u].id.clone(),
                    v: self.vertices[e.v].id.clone(),
                    length: e.length.clone(),
                })
                .collect(),
        }
    }
}

/// A subdivision of a model together with the maps between the two.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub graph: MetricGraph,
    /// For every refined edge: original edge and the offset interval it covers.
    pub pieces: Vec<(usize, Q, Q)>,
    /// For every refined vertex: the original point it sits on.
    pub origin: Vec<Point>,
    vertex_of: HashMap<Point, usize>,
    /// Per original edge: refined edge indices in order of increasing offset.
    chains: Vec<Vec<usize>>,
}

impl Refinement {
    fn build(g: &MetricGraph, cuts: &BTreeMap<usize, BTreeSet<Q>>) -> Self {
        let mut vertices = g.vertices.clone();
        let mut origin: Vec<Point> = (0..g.vertices.len()).map(Point::Vertex).collect();
        let mut edges = Vec::new();
        let mut pieces = Vec::new();
        let mut chains = Vec::new();
        for (i, e) in g.edges.iter().enumerate() {
            let mut stops: Vec<(usize, Q)> = vec![(e.u, Q::zero())];
            if let Some(set) = cuts.get(&i) {
                for t in set {
                    if t.is_positive() && *t < e.length {
                        origin.push(Point::Interior {
                            edge: i,
                            offset: t.clone(),
                        });
                        vertices.push(Vertex {
                            id: format!("{}@{}", e.id, fmt_q(t)),
                            genus: 0,
                        });
                        stops.push((vertices.len() - 1, t.clone()));
                    }
                }
            }
            stops.push((e.v, e.length.clone()));
            let split = stops.len() > 2;
            let mut chain = Vec::new();
            for (k, w) in stops.windows(2).enumerate() {
                let id = if split {
                    format!("{}#{}", e.id, k)
                } else {
                    e.id.clone()
                };
                chain.push(edges.len());
                edges.push(Edge {
                    id,
                    u: w[0].0,
                    v: w[1].0,
                    length: &w[1].1 - &w[0].1,
                });
                pieces.push((i, w[0].1.clone(), w[1].1.clone()));
            }
            chains.push(chain);
        }
        let vertex_of = origin
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        let graph = MetricGraph::assemble(vertices, edges).expect("subdivision of a valid model");
        Self {
            graph,
            pieces,
            origin,
            vertex_of,
            chains,
        }
    }

    /// Refined vertex sitting at an original point, if the point was cut.
    pub fn vertex_at(&self, p: &Point) -> Option<usize> {
        self.vertex_of.get(p).copied()
    }

    /// Maps an original point to the corresponding point of the refinement.
    pub fn forward(&self, p: &Point) -> Point {
        if let Some(&v) = self.vertex_of.get(p) {
            return Point::Vertex(v);
        }
        match p {
            Point::Vertex(x) => Point::Vertex(*x),
            Point::Interior { edge, offset } => {
                for &re in &self.chains[*edge] {
                    let (_, a, b) = &self.pieces[re];
                    if a < offset && offset < b {
                        return Point::Interior {
                            edge: re,
                            offset: offset - a,
                        };
                    }
                }
                unreachable!("offset lies inside its edge")
            }
        }
    }

    /// Maps a point of the refinement back to the original model.
    pub fn back(&self, p: &Point) -> Point {
        match p {
            Point::Vertex(v) => self.origin[*v].clone(),
            Point::Interior { edge, offset } => {
                let (e, a, _) = &self.pieces[*edge];
                Point::Interior {
                    edge: *e,
                    offset: a + offset,
                }
            }
        }
    }

    /// Refined edges covering original edge `e`, in offset order.
    pub fn chain(&self, e: usize) -> &[usize] {
        &self.chains[e]
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VertexSpec {
    pub id: String,
    #[serde(default)]
    pub genus: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub u: String,
    pub v: String,
    #[serde(with = "serde_q")]
    pub length: Q,
}

/// `{"vertices":[{"id":"x","genus":0}],"edges":[{"u":"x","v":"y","length":"3/2"}]}`.
/// Edges without an `id` are named `e0`, `e1`, ... by position.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphSpec {
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<EdgeSpec>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<MetricGraph, GraphError> {
        let vertices: Vec<Vertex> = self
            .vertices
            .iter()
            .map(|v| Vertex {
                id: v.id.clone(),
                genus: v.genus,
            })
            .collect();
        let index: HashMap<&str, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.as_str(), i))
            .collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| GraphError::UnknownVertex(id.to_string()))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            edges.push(Edge {
                id: e.id.clone().unwrap_or_else(|| format!("e{i}")),
                u: lookup(&e.u)?,
                v: lookup(&e.v)?,
                length: e.length.clone(),
            });
        }
        MetricGraph::new(vertices, edges)
    }
}

/// Validates a graph description, reporting the first violated invariant.
pub fn validate(spec: &GraphSpec) -> Result<(), GraphError> {
    spec.build().map(|_| ())
}

/// `{"vertex":"x"}` or `{"edge":"e","offset":"p/q"}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PointSpec {
    Vertex {
        vertex: String,
    },
    Edge {
        edge: String,
        #[serde(with = "serde_q")]
        offset: Q,
    },
}

impl PointSpec {
    pub fn resolve(&self, g: &MetricGraph) -> Result<Point, GraphError> {
        match self {
            PointSpec::Vertex { vertex } => Ok(Point::Vertex(g.vertex_id(vertex)?)),
            PointSpec::Edge { edge, offset } => g.point_on_edge(g.edge_id(edge)?, offset.clone()),
        }
    }

    pub fn of(g: &MetricGraph, p: &Point) -> Self {
        match p {
            Point::Vertex(x) => PointSpec::Vertex {
                vertex: g.vertex(*x).id.clone(),
            },
            Point::Interior { edge, offset } => PointSpec::Edge {
                edge: g.edge(*edge).id.clone(),
                offset: offset.clone(),
            },
        }
    }
}
