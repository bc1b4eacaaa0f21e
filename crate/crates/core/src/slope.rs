//! Rank functions on hypercubes and slope structures on metric graphs.
//!
//! A rank function lives on `Box^d_r = {0..=r}^d`. A slope structure of
//! width `r` attaches `r + 1` sorted slopes to every arc of a model and a
//! rank function to every vertex, whose coordinates follow the vertex's
//! incident edges in edge order.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::Divisor;
use crate::graph::{GraphError, MetricGraph, Point, Refinement, TangentDirection};
use crate::plfunction::PLFunction;
use crate::rational::{q, Q};
use crate::reduction::div;

// ---------------------------------------------------------------------------
// Rank functions
// ---------------------------------------------------------------------------

/// The first axiom a candidate table violates.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RankAxiom {
    #[error("table has {got} entries, expected {expected}")]
    Size { expected: usize, got: usize },
    #[error("value {value} at {at:?} is outside [-1, r]")]
    Range { at: Vec<usize>, value: i64 },
    #[error("not decreasing between {lo:?} and {hi:?}")]
    Decreasing { lo: Vec<usize>, hi: Vec<usize> },
    #[error("normalisation fails at {0:?}")]
    Normalisation(Vec<usize>),
    #[error("supermodularity fails for {0:?} and {1:?}")]
    Supermodular(Vec<usize>, Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFunction {
    dim: usize,
    width: usize,
    table: Vec<i64>,
}

impl RankFunction {
    /// Builds and validates a table indexed in mixed radix `r + 1`, first
    /// coordinate fastest.
    pub fn from_table(dim: usize, width: usize, table: Vec<i64>) -> Result<Self, RankAxiom> {
        let rho = Self { dim, width, table };
        rho.check()?;
        Ok(rho)
    }

    /// `max(−1, r − Σ i)`.
    pub fn standard(dim: usize, width: usize) -> Self {
        let mut rho = Self {
            dim,
            width,
            table: Vec::new(),
        };
        rho.table = rho
            .points()
            .map(|i| (width as i64 - i.iter().sum::<usize>() as i64).max(-1))
            .collect();
        rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn size(&self) -> usize {
        (self.width + 1).pow(self.dim as u32)
    }

    fn index(&self, i: &[usize]) -> usize {
        i.iter()
            .rev()
            .fold(0, |acc, &c| acc * (self.width + 1) + c)
    }

    fn point(&self, mut k: usize) -> Vec<usize> {
        (0..self.dim)
            .map(|_| {
                let c = k % (self.width + 1);
                k /= self.width + 1;
                c
            })
            .collect()
    }

    /// All lattice points of the box, in table order.
    pub fn points(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size()).map(|k| self.point(k))
    }

    pub fn get(&self, i: &[usize]) -> i64 {
        self.table[self.index(i)]
    }

    pub fn check(&self) -> Result<(), RankAxiom> {
        let r = self.width;
        if self.table.len() != self.size() {
            return Err(RankAxiom::Size {
                expected: self.size(),
                got: self.table.len(),
            });
        }
        for i in self.points() {
            let v = self.get(&i);
            if v < -1 || v > r as i64 {
                return Err(RankAxiom::Range { at: i, value: v });
            }
        }
        for i in self.points() {
            for m in 0..self.dim {
                if i[m] < r {
                    let mut j = i.clone();
                    j[m] += 1;
                    if self.get(&j) > self.get(&i) {
                        return Err(RankAxiom::Decreasing { lo: i, hi: j });
                    }
                }
            }
        }
        let zero = vec![0; self.dim];
        if self.get(&zero) != r as i64 {
            return Err(RankAxiom::Normalisation(zero));
        }
        if r > 0 {
            for m in 0..self.dim {
                let mut e = zero.clone();
                e[m] = 1;
                if self.get(&e) != r as i64 - 1 {
                    return Err(RankAxiom::Normalisation(e));
                }
            }
        }
        let pts: Vec<Vec<usize>> = self.points().collect();
        for a in &pts {
            for b in &pts {
                let join: Vec<usize> = a.iter().zip(b).map(|(x, y)| *x.max(y)).collect();
                let meet: Vec<usize> = a.iter().zip(b).map(|(x, y)| *x.min(y)).collect();
                if self.get(a) + self.get(b) > self.get(&join) + self.get(&meet) {
                    return Err(RankAxiom::Supermodular(a.clone(), b.clone()));
                }
            }
        }
        Ok(())
    }

    /// `i` with `ρ(i) ≥ 0` dropping by one in every in-range direction.
    pub fn jumps(&self) -> BTreeSet<Vec<usize>> {
        self.points()
            .filter(|i| self.is_jump(i))
            .collect()
    }

    pub fn is_jump(&self, i: &[usize]) -> bool {
        let v = self.get(i);
        v >= 0
            && (0..self.dim).all(|m| {
                if i[m] == self.width {
                    return true;
                }
                let mut j = i.to_vec();
                j[m] += 1;
                self.get(&j) == v - 1
            })
    }

    /// Reconstructs a rank function from its jump set.
    pub fn from_jumps(
        dim: usize,
        width: usize,
        jumps: &BTreeSet<Vec<usize>>,
    ) -> Result<Self, RankAxiom> {
        let mut rho = Self {
            dim,
            width,
            table: vec![-1; (width + 1).pow(dim as u32)],
        };
        let mut order: Vec<&Vec<usize>> = jumps.iter().collect();
        order.sort_by_key(|j| std::cmp::Reverse(j.iter().sum::<usize>()));
        let mut at_jump: BTreeMap<Vec<usize>, i64> = BTreeMap::new();
        let above = |at_jump: &BTreeMap<Vec<usize>, i64>, i: &[usize]| {
            at_jump
                .iter()
                .filter(|(j, _)| j.iter().zip(i).all(|(a, b)| a >= b))
                .map(|(_, &v)| v)
                .max()
                .unwrap_or(-1)
        };
        for j in order {
            let v = match (0..dim).find(|&m| j[m] < width) {
                None => 0,
                Some(m) => {
                    let mut up = j.clone();
                    up[m] += 1;
                    1 + above(&at_jump, &up)
                }
            };
            at_jump.insert(j.clone(), v);
        }
        for k in 0..rho.size() {
            let i = rho.point(k);
            rho.table[k] = above(&at_jump, &i);
        }
        rho.check()?;
        Ok(rho)
    }

    /// `ρ(i) = dim(F¹_{i_1} ∩ … ∩ Fᵈ_{i_d}) − 1` from a table of
    /// intersection dimensions (same indexing as [`RankFunction::from_table`]).
    pub fn from_filtrations(dim: usize, width: usize, dims: &[i64]) -> Result<Self, RankAxiom> {
        Self::from_table(dim, width, dims.iter().map(|d| d - 1).collect())
    }
}

/// `max(−1, r − Σ i)`.
pub fn standard_rank(dim: usize, width: usize) -> RankFunction {
    RankFunction::standard(dim, width)
}

// ---------------------------------------------------------------------------
// Slope structures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SlopeError {
    #[error("arc {arc} has {got} slopes, expected {expected}")]
    Length {
        arc: String,
        expected: usize,
        got: usize,
    },
    #[error("slopes on arc {0} are not strictly increasing")]
    Unsorted(String),
    #[error("antisymmetry fails on edge {0}")]
    Antisymmetry(String),
    #[error("vertex {vertex}: rank function has dimension {got}, valence is {expected}")]
    Dimension {
        vertex: String,
        expected: usize,
        got: usize,
    },
    #[error("vertex {vertex}: rank function width {got}, structure width {expected}")]
    Width {
        vertex: String,
        expected: usize,
        got: usize,
    },
    #[error("vertex {vertex}: {axiom}")]
    Rank { vertex: String, axiom: RankAxiom },
    #[error("no arc {0}")]
    UnknownArc(String),
    #[error("point {0} is not on the grid")]
    NotOnGrid(String),
    #[error("search exceeded {cap} states (explored {explored}); use a coarser grid or raise the cap")]
    SearchTooLarge { explored: usize, cap: usize },
    #[error("divisor with this structure is not a g^r_d on the grid (fails for E = {0})")]
    NotGrd(String),
    #[error("function is not affine on model edge {0}")]
    NotAffine(String),
    #[error("function slope {slope} on edge {edge} is not an integer")]
    NonInteger { edge: String, slope: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Per-edge slope lists in both orientations plus a rank function per vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlopeStructure {
    width: usize,
    /// `(u→v, v→u)` per model edge.
    arcs: Vec<(Vec<i64>, Vec<i64>)>,
    ranks: Vec<RankFunction>,
}

fn arc_name(g: &MetricGraph, e: usize, forward: bool) -> String {
    let edge = g.edge(e);
    let (a, b) = if forward { (edge.u, edge.v) } else { (edge.v, edge.u) };
    format!("{}->{}", g.vertex(a).id, g.vertex(b).id)
}

impl SlopeStructure {
    pub fn new(
        g: &MetricGraph,
        width: usize,
        arcs: Vec<(Vec<i64>, Vec<i64>)>,
        ranks: Vec<RankFunction>,
    ) -> Result<Self, SlopeError> {
        let s = Self { width, arcs, ranks };
        s.validate(g)?;
        Ok(s)
    }

    /// Structure with the given forward slopes (backward ones derived by
    /// antisymmetry) and standard rank functions everywhere.
    pub fn with_standard_ranks(
        g: &MetricGraph,
        width: usize,
        forward: Vec<Vec<i64>>,
    ) -> Result<Self, SlopeError> {
        let arcs = forward
            .into_iter()
            .map(|f| {
                let b: Vec<i64> = f.iter().rev().map(|s| -s).collect();
                (f, b)
            })
            .collect();
        let ranks = (0..g.num_vertices())
            .map(|x| RankFunction::standard(g.valence(x), width))
            .collect();
        Self::new(g, width, arcs, ranks)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rank_at(&self, x: usize) -> &RankFunction {
        &self.ranks[x]
    }

    pub fn set_rank(&mut self, x: usize, rho: RankFunction) {
        self.ranks[x] = rho;
    }

    /// Slopes along `(edge, forward)`.
    pub fn arc(&self, edge: usize, forward: bool) -> &[i64] {
        let (f, b) = &self.arcs[edge];
        if forward {
            f
        } else {
            b
        }
    }

    /// Slopes along a tangent direction at a vertex or an edge point.
    pub fn along(&self, dir: &TangentDirection) -> &[i64] {
        self.arc(dir.edge, dir.forward)
    }

    pub fn validate(&self, g: &MetricGraph) -> Result<(), SlopeError> {
        let r = self.width;
        if self.arcs.len() != g.num_edges() {
            return Err(SlopeError::UnknownArc(format!(
                "{} arcs for {} edges",
                self.arcs.len(),
                g.num_edges()
            )));
        }
        for (e, (f, b)) in self.arcs.iter().enumerate() {
            for (list, fw) in [(f, true), (b, false)] {
                if list.len() != r + 1 {
                    return Err(SlopeError::Length {
                        arc: arc_name(g, e, fw),
                        expected: r + 1,
                        got: list.len(),
                    });
                }
                if list.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SlopeError::Unsorted(arc_name(g, e, fw)));
                }
            }
            if (0..=r).any(|i| f[i] + b[r - i] != 0) {
                return Err(SlopeError::Antisymmetry(g.edge(e).id.clone()));
            }
        }
        for x in 0..g.num_vertices() {
            let rho = &self.ranks[x];
            let vertex = g.vertex(x).id.clone();
            if rho.dim() != g.valence(x) {
                return Err(SlopeError::Dimension {
                    vertex,
                    expected: g.valence(x),
                    got: rho.dim(),
                });
            }
            if rho.width() != r {
                return Err(SlopeError::Width {
                    vertex,
                    expected: r,
                    got: rho.width(),
                });
            }
            rho.check()
                .map_err(|axiom| SlopeError::Rank { vertex, axiom })?;
        }
        Ok(())
    }

    /// Subtracts the slopes of `f` (affine on every model edge) from every
    /// arc list; index-based jump sets are unchanged.
    pub fn shift(&self, g: &MetricGraph, f: &PLFunction) -> Result<Self, SlopeError> {
        let sigma = edge_slopes(g, f)?;
        let arcs = self
            .arcs
            .iter()
            .zip(&sigma)
            .map(|((fw, bw), s)| {
                (
                    fw.iter().map(|v| v - s).collect(),
                    bw.iter().map(|v| v + s).collect(),
                )
            })
            .collect();
        let out = Self {
            width: self.width,
            arcs,
            ranks: self.ranks.clone(),
        };
        debug_assert!(out.validate(g).is_ok());
        Ok(out)
    }

    /// Index vector of outgoing slopes at vertex `x`, or `None` if some
    /// slope is not in its arc list.
    fn index_vector(&self, g: &MetricGraph, x: usize, slopes: &[i64]) -> Option<Vec<usize>> {
        g.incident(x)
            .iter()
            .zip(slopes)
            .map(|(&e, s)| {
                let fw = g.edge(e).u == x;
                self.arc(e, fw).iter().position(|v| v == s)
            })
            .collect()
    }

    /// Whether `f` is compatible: every outgoing slope lies in its arc list,
    /// slope indices never increase along an edge, and at every vertex the
    /// index vector is a jump.
    pub fn is_compatible(&self, g: &MetricGraph, f: &PLFunction) -> bool {
        for e in 0..g.num_edges() {
            let fw = self.arc(e, true);
            let mut prev: Option<usize> = None;
            for w in f.knots(g, e).windows(2) {
                let s = (&w[1].1 - &w[0].1) / (&w[1].0 - &w[0].0);
                if !s.is_integer() {
                    return false;
                }
                let s = s.to_integer();
                let Some(i) = fw.iter().position(|v| num_bigint::BigInt::from(*v) == s) else {
                    return false;
                };
                if prev.is_some_and(|p| i > p) {
                    return false;
                }
                prev = Some(i);
            }
        }
        for x in 0..g.num_vertices() {
            let slopes: Vec<i64> = g
                .tangent_directions(&Point::Vertex(x))
                .iter()
                .map(|d| integer(&f.slope(g, d)))
                .collect();
            match self.index_vector(g, x, &slopes) {
                Some(idx) if self.ranks[x].is_jump(&idx) => {}
                _ => return false,
            }
        }
        true
    }

    pub fn to_spec(&self, g: &MetricGraph) -> SlopeStructureSpec {
        let mut arcs = Vec::new();
        for (e, (f, b)) in self.arcs.iter().enumerate() {
            arcs.push(ArcSpec {
                arc: arc_name(g, e, true),
                slopes: f.clone(),
            });
            arcs.push(ArcSpec {
                arc: arc_name(g, e, false),
                slopes: b.clone(),
            });
        }
        let vertices = (0..g.num_vertices())
            .filter(|&x| self.ranks[x] != RankFunction::standard(g.valence(x), self.width))
            .map(|x| VertexJumps {
                vertex: g.vertex(x).id.clone(),
                jumps: self.ranks[x].jumps().into_iter().collect(),
            })
            .collect();
        SlopeStructureSpec {
            r: self.width,
            arcs,
            vertices,
        }
    }
}

fn integer(x: &Q) -> i64 {
    use num_traits::ToPrimitive;
    x.to_integer().to_i64().expect("integer slope")
}

/// The slope of `f` along every model edge (u → v); `f` must be affine on
/// each edge with integer slopes.
fn edge_slopes(g: &MetricGraph, f: &PLFunction) -> Result<Vec<i64>, SlopeError> {
    (0..g.num_edges())
        .map(|e| {
            let k = f.knots(g, e);
            if k.len() != 2 {
                return Err(SlopeError::NotAffine(g.edge(e).id.clone()));
            }
            let s = (&k[1].1 - &k[0].1) / (&k[1].0 - &k[0].0);
            if !s.is_integer() {
                return Err(SlopeError::NonInteger {
                    edge: g.edge(e).id.clone(),
                    slope: crate::rational::fmt_q(&s),
                });
            }
            Ok(integer(&s))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Grid-restricted search over compatible functions
// ---------------------------------------------------------------------------

/// Default bound on explored search states.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// Called on every complete assignment (edge options, vertex potentials).
type Visitor<'a> = dyn FnMut(&Search, &[Option<usize>], &[Option<Q>]) -> bool + 'a;

#[derive(Debug, Clone)]
struct EdgeOption {
    first: usize,
    last: usize,
    delta: Q,
    seq: Vec<usize>,
}

struct Search<'a> {
    g: &'a MetricGraph,
    grid: &'a Refinement,
    s: &'a SlopeStructure,
    d: Vec<i64>,
    e: Vec<i64>,
    order: Vec<usize>,
    options: Vec<Vec<EdgeOption>>,
    /// Vertices whose incident edges are all assigned after step `k`.
    complete_after: Vec<Vec<usize>>,
    cap: usize,
    explored: usize,
}

/// Per-vertex values on grid vertices, from a divisor on the original graph.
fn on_grid(grid: &Refinement, d: &Divisor) -> Result<Vec<i64>, SlopeError> {
    let mut out = vec![0; grid.graph.num_vertices()];
    for (p, &c) in d.iter() {
        let v = grid
            .vertex_at(p)
            .ok_or_else(|| SlopeError::NotOnGrid(format!("{p:?}")))?;
        out[v] += c;
    }
    Ok(out)
}

impl<'a> Search<'a> {
    fn new(
        g: &'a MetricGraph,
        grid: &'a Refinement,
        s: &'a SlopeStructure,
        d: &Divisor,
        e: &Divisor,
        dedupe: bool,
        cap: usize,
    ) -> Result<Self, SlopeError> {
        let dv = on_grid(grid, d)?;
        let ev = on_grid(grid, e)?;
        // breadth-first edge order so every edge after the first touches a
        // vertex that already has a potential
        let mut order = Vec::new();
        let mut seen_v = vec![false; g.num_vertices()];
        let mut seen_e = vec![false; g.num_edges()];
        let mut queue = std::collections::VecDeque::new();
        for root in 0..g.num_vertices() {
            if seen_v[root] {
                continue;
            }
            seen_v[root] = true;
            queue.push_back(root);
            while let Some(x) = queue.pop_front() {
                for &ed in g.incident(x) {
                    if !seen_e[ed] {
                        seen_e[ed] = true;
                        order.push(ed);
                    }
                    let y = g.edge(ed).other(x);
                    if !seen_v[y] {
                        seen_v[y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        let mut remaining: Vec<usize> = (0..g.num_vertices()).map(|x| g.valence(x)).collect();
        let mut complete_after = vec![Vec::new(); order.len()];
        for (k, &ed) in order.iter().enumerate() {
            for x in [g.edge(ed).u, g.edge(ed).v] {
                remaining[x] -= 1;
                if remaining[x] == 0 {
                    complete_after[k].push(x);
                }
            }
        }
        let mut search = Self {
            g,
            grid,
            s,
            d: dv,
            e: ev,
            order,
            options: Vec::new(),
            complete_after,
            cap,
            explored: 0,
        };
        search.options = (0..g.num_edges())
            .map(|ed| search.edge_options(ed, dedupe))
            .collect();
        Ok(search)
    }

    fn edge_options(&self, ed: usize, dedupe: bool) -> Vec<EdgeOption> {
        let chain = self.grid.chain(ed);
        let slopes = self.s.arc(ed, true);
        let r = self.s.width();
        let lens: Vec<&Q> = chain.iter().map(|&c| &self.grid.graph.edge(c).length).collect();
        let inner: Vec<usize> = chain[..chain.len() - 1]
            .iter()
            .map(|&c| self.grid.graph.edge(c).v)
            .collect();
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut seq = Vec::with_capacity(chain.len());
        #[allow(clippy::too_many_arguments)]
        fn rec(
            this: &Search,
            slopes: &[i64],
            lens: &[&Q],
            inner: &[usize],
            r: usize,
            seq: &mut Vec<usize>,
            delta: Q,
            dedupe: bool,
            seen: &mut BTreeSet<(usize, usize, Q)>,
            out: &mut Vec<EdgeOption>,
        ) {
            let t = seq.len();
            if t == lens.len() {
                let key = (seq[0], seq[t - 1], delta.clone());
                if !dedupe || seen.insert(key) {
                    out.push(EdgeOption {
                        first: seq[0],
                        last: seq[t - 1],
                        delta,
                        seq: seq.clone(),
                    });
                }
                return;
            }
            for i in 0..=r {
                if t > 0 {
                    let z = inner[t - 1];
                    let prev = seq[t - 1];
                    if i > prev || ((prev - i) as i64) < this.e[z] {
                        continue;
                    }
                    if this.d[z] - this.e[z] + slopes[prev] - slopes[i] < 0 {
                        continue;
                    }
                }
                seq.push(i);
                let nd = &delta + q(slopes[i]) * lens[t];
                rec(this, slopes, lens, inner, r, seq, nd, dedupe, seen, out);
                seq.pop();
            }
        }
        rec(
            self,
            slopes,
            &lens,
            &inner,
            r,
            &mut seq,
            Q::zero(),
            dedupe,
            &mut seen,
            &mut out,
        );
        out
    }

    fn vertex_ok(&self, x: usize, chosen: &[Option<usize>]) -> bool {
        let r = self.s.width();
        let mut idx = Vec::with_capacity(self.g.valence(x));
        let mut slope_sum = 0i64;
        for &ed in self.g.incident(x) {
            let opt = &self.options[ed][chosen[ed].expect("incident edge assigned")];
            if self.g.edge(ed).u == x {
                idx.push(opt.first);
                slope_sum += self.s.arc(ed, true)[opt.first];
            } else {
                idx.push(r - opt.last);
                slope_sum += self.s.arc(ed, false)[r - opt.last];
            }
        }
        let rho = self.s.rank_at(x);
        rho.is_jump(&idx) && rho.get(&idx) >= self.e[x] && self.d[x] - self.e[x] - slope_sum >= 0
    }

    /// Depth-first search; `visit` returns `true` to stop.
    fn run(
        &mut self,
        visit: &mut Visitor<'_>,
    ) -> Result<bool, SlopeError> {
        let mut chosen = vec![None; self.g.num_edges()];
        let mut pot: Vec<Option<Q>> = vec![None; self.g.num_vertices()];
        if let Some(&first) = self.order.first() {
            pot[self.g.edge(first).u] = Some(Q::zero());
        } else {
            // no edges: a single vertex
            pot[0] = Some(Q::zero());
            let ok = (0..self.g.num_vertices()).all(|x| self.vertex_ok(x, &chosen));
            return Ok(ok && visit(self, &chosen, &pot));
        }
        self.dfs(0, &mut chosen, &mut pot, visit)
    }

    fn dfs(
        &mut self,
        k: usize,
        chosen: &mut Vec<Option<usize>>,
        pot: &mut Vec<Option<Q>>,
        visit: &mut Visitor<'_>,
    ) -> Result<bool, SlopeError> {
        if k == self.order.len() {
            return Ok(visit(self, chosen, pot));
        }
        let ed = self.order[k];
        let (u, v) = (self.g.edge(ed).u, self.g.edge(ed).v);
        for oi in 0..self.options[ed].len() {
            self.explored += 1;
            if self.explored > self.cap {
                return Err(SlopeError::SearchTooLarge {
                    explored: self.explored,
                    cap: self.cap,
                });
            }
            let delta = self.options[ed][oi].delta.clone();
            let mut set = None;
            match (&pot[u], &pot[v]) {
                (Some(pu), Some(pv)) => {
                    if pv - pu != delta {
                        continue;
                    }
                }
                (Some(pu), None) => {
                    pot[v] = Some(pu + &delta);
                    set = Some(v);
                }
                (None, Some(pv)) => {
                    pot[u] = Some(pv - &delta);
                    set = Some(u);
                }
                (None, None) => unreachable!("edge order keeps the search connected"),
            }
            chosen[ed] = Some(oi);
            let ok = self.complete_after[k]
                .iter()
                .all(|&x| self.vertex_ok(x, chosen));
            if ok && self.dfs(k + 1, chosen, pot, visit)? {
                return Ok(true);
            }
            chosen[ed] = None;
            if let Some(x) = set {
                pot[x] = None;
            }
        }
        Ok(false)
    }

    /// The function encoded by a complete assignment, on the original graph.
    fn function(&self, chosen: &[Option<usize>], pot: &[Option<Q>]) -> PLFunction {
        let vertex_values: Vec<Q> = pot.iter().map(|p| p.clone().expect("potential set")).collect();
        let mut interior = vec![Vec::new(); self.g.num_edges()];
        for ed in 0..self.g.num_edges() {
            let opt = &self.options[ed][chosen[ed].expect("assigned")];
            let chain = self.grid.chain(ed);
            let slopes = self.s.arc(ed, true);
            let mut val = vertex_values[self.g.edge(ed).u].clone();
            for (t, &c) in chain.iter().enumerate().take(chain.len() - 1) {
                val += q(slopes[opt.seq[t]]) * &self.grid.graph.edge(c).length;
                interior[ed].push((self.grid.pieces[c].2.clone(), val.clone()));
            }
        }
        PLFunction::new(self.g, vertex_values, interior)
            .expect("grid knots are ordered")
            .simplified(self.g)
    }
}

/// Effective divisors of degree `r` supported on grid vertices.
fn effective_divisors(grid: &Refinement, r: usize) -> Vec<Divisor> {
    let n = grid.graph.num_vertices();
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(n: usize, r: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, r, i, cur, out);
            cur.pop();
        }
    }
    let mut idx = Vec::new();
    rec(n, r, 0, &mut cur, &mut idx);
    for c in idx {
        out.push(Divisor::from_pairs(
            c.into_iter().map(|v| (grid.origin[v].clone(), 1)),
        ));
    }
    out
}

/// Refinement of `g` containing `points` and the support of `d`.
pub fn grid_for(g: &MetricGraph, d: &Divisor, points: &[Point]) -> Refinement {
    let mut pts: Vec<Point> = points.to_vec();
    pts.extend(d.support().cloned());
    g.refine(pts.iter())
}

/// A compatible `f` with `D + div(f) − E ≥ 0` and `ρ_x(δ_x f) ≥ E(x)`
/// everywhere, searched among functions affine on grid sub-edges.
pub fn certificate(
    g: &MetricGraph,
    d: &Divisor,
    s: &SlopeStructure,
    e: &Divisor,
    grid: &Refinement,
    cap: usize,
) -> Result<Option<PLFunction>, SlopeError> {
    let mut search = Search::new(g, grid, s, d, e, true, cap)?;
    let mut found = None;
    search.run(&mut |this, chosen, pot| {
        found = Some(this.function(chosen, pot));
        true
    })?;
    Ok(found)
}

/// Property (*): every effective `E` of degree `r` on the grid admits a
/// certificate. Returns the first failing `E`, if any.
pub fn grd_failure(
    g: &MetricGraph,
    d: &Divisor,
    s: &SlopeStructure,
    grid: &Refinement,
    cap: usize,
) -> Result<Option<Divisor>, SlopeError> {
    s.validate(g)?;
    let es = effective_divisors(grid, s.width());
    let results: Vec<Result<Option<Divisor>, SlopeError>> = es
        .par_iter()
        .map(|e| Ok(certificate(g, d, s, e, grid, cap)?.is_none().then(|| e.clone())))
        .collect();
    for r in results {
        if let Some(e) = r? {
            return Ok(Some(e));
        }
    }
    Ok(None)
}

pub fn is_grd(
    g: &MetricGraph,
    d: &Divisor,
    s: &SlopeStructure,
    grid: &Refinement,
    cap: usize,
) -> Result<bool, SlopeError> {
    Ok(grd_failure(g, d, s, grid, cap)?.is_none())
}

/// All compatible `f` with `D + div(f) ≥ 0` on the grid, normalised to
/// vanish at `v`.
pub fn compatible_functions(
    g: &MetricGraph,
    d: &Divisor,
    s: &SlopeStructure,
    v: &Point,
    grid: &Refinement,
    cap: usize,
) -> Result<Vec<PLFunction>, SlopeError> {
    let mut search = Search::new(g, grid, s, d, &Divisor::zero(), false, cap)?;
    let mut out = Vec::new();
    search.run(&mut |this, chosen, pot| {
        let f = this.function(chosen, pot);
        let fv = f.value(this.g, v);
        out.push(f.shift(&-fv));
        false
    })?;
    Ok(out)
}

/// The reduced divisor `D_v = D + div(f_v)` with `f_v` the pointwise
/// minimum of all normalised compatible functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureReduction {
    pub divisor: Divisor,
    pub witness: PLFunction,
    /// `D(v) − Σ_ν s^ν_0`.
    pub predicted: i64,
}

pub fn reduced_wrt(
    g: &MetricGraph,
    d: &Divisor,
    s: &SlopeStructure,
    v: &Point,
    grid_points: &[Point],
    cap: usize,
) -> Result<StructureReduction, SlopeError> {
    let mut pts = grid_points.to_vec();
    pts.push(v.clone());
    let grid = grid_for(g, d, &pts);
    if let Some(e) = grd_failure(g, d, s, &grid, cap)? {
        return Err(SlopeError::NotGrd(e.display(g)));
    }
    let fs = compatible_functions(g, d, s, v, &grid, cap)?;
    let mut it = fs.into_iter();
    let first = it.next().expect("a g^r_d has compatible functions");
    let fv = it.fold(first, |acc, f| acc.min(g, &f));
    let dv = d + &div(g, &fv).expect("integer slopes");
    let s0: i64 = g.tangent_directions(v).iter().map(|dir| s.along(dir)[0]).sum();
    Ok(StructureReduction {
        divisor: dv,
        witness: fv,
        predicted: d.get(v) - s0,
    })
}

/// Whether `(D1, S1) = (D2 + div f, S2 − slope f)` for some `f` affine on
/// model edges; returns such an `f` (normalised at vertex 0).
pub fn equivalence(
    g: &MetricGraph,
    d1: &Divisor,
    s1: &SlopeStructure,
    d2: &Divisor,
    s2: &SlopeStructure,
) -> Option<PLFunction> {
    if s1.width() != s2.width() {
        return None;
    }
    let sigma: Vec<i64> = (0..g.num_edges())
        .map(|e| s2.arc(e, true)[0] - s1.arc(e, true)[0])
        .collect();
    for (e, sg) in sigma.iter().enumerate() {
        let ok_f = s1.arc(e, true).iter().zip(s2.arc(e, true)).all(|(a, b)| *a == b - sg);
        let ok_b = s1.arc(e, false).iter().zip(s2.arc(e, false)).all(|(a, b)| *a == b + sg);
        if !ok_f || !ok_b {
            return None;
        }
    }
    if (0..g.num_vertices()).any(|x| s1.rank_at(x) != s2.rank_at(x)) {
        return None;
    }
    // integrate the edge slopes; cycles must close
    let mut pot: Vec<Option<Q>> = vec![None; g.num_vertices()];
    pot[0] = Some(Q::zero());
    let mut stack = vec![0usize];
    while let Some(x) = stack.pop() {
        for &e in g.incident(x) {
            let edge = g.edge(e);
            let px = pot[x].clone().expect("visited");
            let step = q(sigma[e]) * &edge.length;
            let (y, py) = if edge.u == x {
                (edge.v, px + step)
            } else {
                (edge.u, px - step)
            };
            match &pot[y] {
                Some(old) if *old != py => return None,
                Some(_) => {}
                None => {
                    pot[y] = Some(py);
                    stack.push(y);
                }
            }
        }
    }
    let f = PLFunction::from_vertex_values(g, pot.into_iter().map(|p| p.expect("connected")).collect())
        .expect("vertex values");
    let moved = d2 + &div(g, &f).ok()?;
    (moved == *d1).then_some(f)
}

pub fn is_equivalent(
    g: &MetricGraph,
    d1: &Divisor,
    s1: &SlopeStructure,
    d2: &Divisor,
    s2: &SlopeStructure,
) -> bool {
    equivalence(g, d1, s1, d2, s2).is_some()
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArcSpec {
    /// `"x->y"`.
    pub arc: String,
    pub slopes: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VertexJumps {
    pub vertex: String,
    pub jumps: Vec<Vec<usize>>,
}

/// `{"r":1,"arcs":[{"arc":"x->y","slopes":[0,1]}],"vertices":[{"vertex":"x","jumps":[[0,0],[1,1]]}]}`.
/// Vertices not listed get the standard rank function; an arc may be given
/// in one orientation only.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SlopeStructureSpec {
    pub r: usize,
    pub arcs: Vec<ArcSpec>,
    #[serde(default)]
    pub vertices: Vec<VertexJumps>,
}

impl SlopeStructureSpec {
    pub fn resolve(&self, g: &MetricGraph) -> Result<SlopeStructure, SlopeError> {
        let r = self.r;
        let mut fw: Vec<Option<Vec<i64>>> = vec![None; g.num_edges()];
        let mut bw: Vec<Option<Vec<i64>>> = vec![None; g.num_edges()];
        for a in &self.arcs {
            let (from, to) = a
                .arc
                .split_once("->")
                .ok_or_else(|| SlopeError::UnknownArc(a.arc.clone()))?;
            let (x, y) = (g.vertex_id(from.trim())?, g.vertex_id(to.trim())?);
            let e = g
                .edge_between(x, y)
                .ok_or_else(|| SlopeError::UnknownArc(a.arc.clone()))?;
            if g.edge(e).u == x {
                fw[e] = Some(a.slopes.clone());
            } else {
                bw[e] = Some(a.slopes.clone());
            }
        }
        let neg_rev = |v: &Vec<i64>| v.iter().rev().map(|s| -s).collect::<Vec<i64>>();
        let mut arcs = Vec::with_capacity(g.num_edges());
        for e in 0..g.num_edges() {
            let pair = match (&fw[e], &bw[e]) {
                (Some(f), Some(b)) => (f.clone(), b.clone()),
                (Some(f), None) => (f.clone(), neg_rev(f)),
                (None, Some(b)) => (neg_rev(b), b.clone()),
                (None, None) => return Err(SlopeError::UnknownArc(arc_name(g, e, true))),
            };
            arcs.push(pair);
        }
        let mut ranks: Vec<RankFunction> = (0..g.num_vertices())
            .map(|x| RankFunction::standard(g.valence(x), r))
            .collect();
        for vj in &self.vertices {
            let x = g.vertex_id(&vj.vertex)?;
            let jumps: BTreeSet<Vec<usize>> = vj.jumps.iter().cloned().collect();
            ranks[x] = RankFunction::from_jumps(g.valence(x), r, &jumps).map_err(|axiom| {
                SlopeError::Rank {
                    vertex: vj.vertex.clone(),
                    axiom,
                }
            })?;
        }
        SlopeStructure::new(g, r, arcs, ranks)
    }
}
