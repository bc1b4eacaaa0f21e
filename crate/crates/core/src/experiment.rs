//! The equidistribution experiment: surrogate slope data from classical
//! reduced divisors, the normalised Weierstrass measures `μ_n`, per-edge
//! resistance law rows, and distances to the canonical admissible measure.
//!
//! In surrogate mode the minimum slopes along every tangent direction are
//! read off the witness of the classical `x`-reduced divisor of `n D`.
//! They stand in for slope data of an actual curve; every report says so.

use std::collections::BTreeMap;

use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::{Divisor, DivisorSpec};
use crate::graph::{GraphError, GraphSpec, MetricGraph, Point, Refinement, TangentDirection};
use crate::linalg::SymmetricFactor;
use crate::measure::{Measure, MeasureSpec};
use crate::okounkov::{fekete_limits, sminmax_gap, width_defect, FeketeReport, OkounkovError, SlopeFamily};
use crate::potential::{foster_terms, grounded_laplacian, zhang_measure, PotentialError};
use crate::rational::{fmt_q, q, qr, serde_q, to_f64, Q};
use crate::reduction::{complete_slopes, reduce, ReduceError, Reduction};
use crate::weierstrass::{
    midpoint_parts, reduce_weierstrass, weierstrass_parts, DirectionSlopes, SlopeData, VertexSlopes,
    WeierstrassError, WeierstrassParts,
};

pub const SURROGATE_LABEL: &str =
    "tropical-surrogate: minimum slopes come from classical reduced divisors, not from a curve";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("divisor must have positive degree, got {0}")]
    NonPositiveDegree(i64),
    #[error("graph has genus 0; the canonical admissible measure is undefined")]
    ZeroGenus,
    #[error("n range {0}..={1} is empty")]
    EmptyRange(u64, u64),
    #[error("n d = {nd} is below the genus {g} at n = {n}")]
    BelowGenus { n: u64, nd: i64, g: i64 },
    #[error("explicit mode: no slope data for n = {0}")]
    MissingSlopes(u64),
    #[error("explicit mode: slope data for n = {n} has r = {got}, expected n d − g = {expected}")]
    WrongRank { n: u64, got: usize, expected: i64 },
    #[error("measures have different masses {0} and {1}")]
    UnequalMass(String, String),
    #[error("comparison grid h must be positive")]
    BadGrid,
    #[error("mass of W_n at n = {n} is off by {err}, above the tolerance {tol}")]
    MassDeviation { n: u64, err: String, tol: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Weierstrass(#[from] WeierstrassError),
    #[error(transparent)]
    Okounkov(#[from] OkounkovError),
}

// ---------------------------------------------------------------------------
// Surrogate slopes and μ_n
// ---------------------------------------------------------------------------

/// Direction on the original graph matching a refined edge at a refined
/// vertex.
fn original_direction(r: &Refinement, x: usize, re: usize) -> TangentDirection {
    let (e, _, _) = r.pieces[re];
    TangentDirection {
        base: r.origin[x].clone(),
        edge: e,
        forward: r.graph.edge(re).u == x,
    }
}

fn arc_id(m: &MetricGraph, x: usize, re: usize) -> String {
    format!("{}->{}", m.vertex(x).id, m.vertex(m.edge(re).other(x)).id)
}

/// Minimum slopes of `|n D|` at every vertex of a refinement of `g`, from
/// the classical reduced divisors. Also returns `D_{n,x}(x)` per vertex.
pub fn surrogate_slopes_on(
    g: &MetricGraph,
    r: &Refinement,
    d: &Divisor,
    n: u64,
) -> Result<(SlopeData, Vec<i64>), ExperimentError> {
    let nd = d.scale(n as i64);
    let (_, genus) = g.genus();
    let deg = nd.degree();
    if deg < genus {
        return Err(ExperimentError::BelowGenus { n, nd: deg, g: genus });
    }
    let m = &r.graph;
    let per_vertex: Vec<Result<(VertexSlopes, i64), ExperimentError>> = (0..m.num_vertices())
        .into_par_iter()
        .map(|x| {
            let p = &r.origin[x];
            let red = reduce(g, &nd, p)?;
            let directions = m
                .incident(x)
                .iter()
                .map(|&re| {
                    let s = red.witness.slope(g, &original_direction(r, x, re));
                    DirectionSlopes::min_only(arc_id(m, x, re), s.to_integer().to_i64().expect("slope"))
                })
                .collect();
            let v = VertexSlopes {
                id: m.vertex(x).id.clone(),
                d_x: d.get(p),
                g_x: g.genus_at(p),
                directions,
            };
            Ok((v, red.divisor.get(p)))
        })
        .collect();
    let mut vertices = Vec::with_capacity(per_vertex.len());
    let mut coeffs = Vec::with_capacity(per_vertex.len());
    for item in per_vertex {
        let (v, c) = item?;
        vertices.push(v);
        coeffs.push(c);
    }
    Ok((
        SlopeData {
            n,
            r: (deg - genus) as usize,
            vertices,
        },
        coeffs,
    ))
}

/// [`surrogate_slopes_on`] with the graph as its own model.
pub fn surrogate_slopes(g: &MetricGraph, d: &Divisor, n: u64) -> Result<SlopeData, ExperimentError> {
    let r = g.refine(std::iter::empty());
    Ok(surrogate_slopes_on(g, &r, d, n)?.0)
}

/// `W_n / (g (r_n + 1)²)` as a measure on `g`, with the decomposition kept.
#[derive(Debug, Clone)]
pub struct WeierstrassMeasure {
    pub measure: Measure,
    pub parts: WeierstrassParts,
    pub degree: Q,
    pub mass_error: Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    TropicalSurrogate,
    Explicit,
}

/// Assembles `μ_n` from slope data on the model `r` of `g`.
pub fn mu_n(
    g: &MetricGraph,
    r: &Refinement,
    data: &SlopeData,
    mode: Mode,
) -> Result<WeierstrassMeasure, ExperimentError> {
    let (_, genus) = g.genus();
    if genus == 0 {
        return Err(ExperimentError::ZeroGenus);
    }
    let parts = match mode {
        Mode::TropicalSurrogate => midpoint_parts(&r.graph, data)?,
        Mode::Explicit => weierstrass_parts(&r.graph, data)?,
    };
    let total = parts.total();
    let r1 = q(data.r as i64 + 1);
    let norm = q(genus) * &r1 * &r1;
    let degree = total.degree();
    let mass_error = (&degree / &norm - q(1)).abs();
    let tol = q(2) / &r1;
    if mass_error > tol {
        return Err(ExperimentError::MassDeviation {
            n: data.n,
            err: fmt_q(&mass_error),
            tol: fmt_q(&tol),
        });
    }
    let mut measure = Measure::zero();
    for (p, c) in total.iter() {
        measure.add_atom(r.back(p), c / &norm);
    }
    Ok(WeierstrassMeasure {
        measure,
        parts,
        degree,
        mass_error,
    })
}

// ---------------------------------------------------------------------------
// Measure comparison
// ---------------------------------------------------------------------------

fn density_at(m: &Measure, e: usize, t: &Q) -> Q {
    m.densities(e)
        .iter()
        .find(|(a, b, _)| a <= t && t < b)
        .map(|(_, _, c)| c.clone())
        .unwrap_or_else(Q::zero)
}

/// Oscillation `max φ − min φ` of the solution of `Δφ = μ − ν`.
pub fn potential_oscillation(g: &MetricGraph, mu: &Measure, nu: &Measure) -> Result<Q, ExperimentError> {
    check_masses(mu, nu)?;
    let diff = mu.sub(nu);
    let mut pts = diff.special_points(g);
    pts.sort();
    pts.dedup();
    let r = g.refine(pts.iter());
    let m = &r.graph;
    let nv = m.num_vertices();
    // constant density of μ − ν on every refined edge
    let dens: Vec<Q> = (0..m.num_edges())
        .map(|re| {
            let (e, a, b) = &r.pieces[re];
            density_at(&diff, *e, &((a + b) / q(2)))
        })
        .collect();
    let mut rhs: Vec<Q> = (0..nv).map(|x| diff.atom(&r.origin[x])).collect();
    for (re, c) in dens.iter().enumerate() {
        let half = c * &m.edge(re).length / q(2);
        rhs[m.edge(re).u] += &half;
        rhs[m.edge(re).v] += &half;
    }
    rhs[0] = Q::zero();
    let factor = SymmetricFactor::new(grounded_laplacian(m, &[0])).expect("connected graph");
    let phi = factor.solve(&rhs);
    let mut hi = phi.iter().max().cloned().unwrap_or_else(Q::zero);
    let mut lo = phi.iter().min().cloned().unwrap_or_else(Q::zero);
    for (re, c) in dens.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let edge = m.edge(re);
        let l = &edge.length;
        let (a, b) = (&phi[edge.u], &phi[edge.v]);
        // φ(t) = a + (b − a) t/ℓ + c t (ℓ − t)/2 has φ' = 0 at t*
        let t = l / q(2) + (b - a) / (c * l);
        if t.is_positive() && &t < l {
            let v = a + (b - a) * &t / l + c * &t * (l - &t) / q(2);
            hi = hi.max(v.clone());
            lo = lo.min(v);
        }
    }
    Ok(hi - lo)
}

/// `Σ |μ(cell) − ν(cell)|` over cells: every vertex, and `⌈ℓ/h⌉` equal
/// half-open pieces of the interior of every edge.
pub fn binned_l1(g: &MetricGraph, mu: &Measure, nu: &Measure, h: &Q) -> Result<Q, ExperimentError> {
    check_masses(mu, nu)?;
    if !h.is_positive() {
        return Err(ExperimentError::BadGrid);
    }
    let diff = mu.sub(nu);
    let mut total = Q::zero();
    let mut bins: Vec<Vec<Q>> = Vec::with_capacity(g.num_edges());
    let mut widths = Vec::with_capacity(g.num_edges());
    for e in 0..g.num_edges() {
        let l = &g.edge(e).length;
        let k = crate::rational::ceil_int(&(l / h)).to_usize().expect("bin count");
        let w = l / q(k as i64);
        bins.push(
            (0..k)
                .map(|i| {
                    let a = &w * q(i as i64);
                    let b = &w * q(i as i64 + 1);
                    diff.density_mass(e, &a, &b)
                })
                .collect(),
        );
        widths.push(w);
    }
    for (p, c) in diff.atoms() {
        match p {
            Point::Vertex(_) => total += c.abs(),
            Point::Interior { edge, offset } => {
                let i = crate::rational::floor_int(&(offset / &widths[*edge]))
                    .to_usize()
                    .expect("bin index");
                bins[*edge][i] += c;
            }
        }
    }
    for b in bins.iter().flatten() {
        total += b.abs();
    }
    Ok(total)
}

fn check_masses(mu: &Measure, nu: &Measure) -> Result<(), ExperimentError> {
    let (a, b) = (mu.mass(), nu.mass());
    if a != b {
        return Err(ExperimentError::UnequalMass(fmt_q(&a), fmt_q(&b)));
    }
    Ok(())
}

/// `(potential oscillation, binned ℓ1)`.
pub fn compare_measures(
    g: &MetricGraph,
    mu: &Measure,
    nu: &Measure,
    h: &Q,
) -> Result<(Q, Q), ExperimentError> {
    Ok((potential_oscillation(g, mu, nu)?, binned_l1(g, mu, nu, h)?))
}

// ---------------------------------------------------------------------------
// Per-edge rows
// ---------------------------------------------------------------------------

/// Witness-level predicates for one edge `e = [x, y]` at one `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeInequalities {
    /// Both slope bounds on `f_{n,y} − f_{n,x}`.
    pub claim: bool,
    pub ineq1: bool,
    pub ineq2: bool,
    pub ineq3: bool,
    pub ineq4: bool,
}

impl EdgeInequalities {
    pub fn all(&self) -> bool {
        self.claim && self.ineq1 && self.ineq2 && self.ineq3 && self.ineq4
    }
}

fn edge_inequalities(
    g: &MetricGraph,
    e: usize,
    n: u64,
    d: i64,
    red_x: &Reduction,
    red_y: &Reduction,
) -> EdgeInequalities {
    let (_, genus) = g.genus();
    let edge = g.edge(e);
    let (px, py) = (Point::Vertex(edge.u), Point::Vertex(edge.v));
    let to_y = TangentDirection {
        base: px.clone(),
        edge: e,
        forward: true,
    };
    let to_x = TangentDirection {
        base: py.clone(),
        edge: e,
        forward: false,
    };
    let int = |v: Q| v.to_integer().to_i64().expect("slope");
    let s_y = int(red_x.witness.slope(g, &to_y));
    let s_x = int(red_y.witness.slope(g, &to_x));
    let t = s_x + s_y;
    let f = red_y.witness.sub(g, &red_x.witness);
    let at_y = int(f.slope(g, &to_x));
    let at_x = int(f.slope(g, &to_y));
    let claim = (t - genus..=t).contains(&at_y) && (-t..=-t + genus).contains(&at_x);
    let nd = n as i64 * d;
    let band = nd + t - 3 * genus..=nd + t;
    let (dx, dy) = (&red_x.divisor, &red_y.divisor);
    let a_y = dy.get(&py) - dx.get(&py) + at_y;
    let a_x = dx.get(&px) - dy.get(&px) - at_x;
    // points off the closed edge
    let off_edge = |p: &Point| match p {
        Point::Vertex(z) => *z != edge.u && *z != edge.v,
        Point::Interior { edge: f, .. } => *f != e,
    };
    let mut support: Vec<&Point> = dx.support().chain(dy.support()).filter(|p| off_edge(p)).collect();
    support.sort();
    support.dedup();
    let a_z: Vec<i64> = support.iter().map(|p| dy.get(p) - dx.get(p)).collect();
    let sum: i64 = a_z.iter().sum();
    EdgeInequalities {
        claim,
        ineq1: band.contains(&a_y),
        ineq2: band.contains(&a_x),
        ineq3: a_z.iter().all(|a| a.abs() <= genus),
        ineq4: sum.abs() <= 2 * genus,
    }
}

/// One row per original edge and `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub edge: String,
    /// `s^{ν_x}_{n,0} + s^{ν_y}_{n,0}`.
    pub t_n: i64,
    /// `1 + t_n / (n d)`.
    #[serde(with = "serde_q")]
    pub lhs_pr5: Q,
    /// `ℓ_e / (ℓ_e + ρ_e)`, zero on bridges.
    #[serde(with = "serde_q")]
    pub target: Q,
    #[serde(with = "serde_q")]
    pub deviation: Q,
    pub bridge: bool,
    /// Witness predicates (surrogate mode only).
    pub inequalities: Option<EdgeInequalities>,
}

/// Surrogate rows for one `n`.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    pub n: u64,
    /// One row per edge, in edge order.
    pub rows: Vec<ConvergenceRow>,
    /// `D_{n,x}(x)` for every vertex `x`.
    pub reduced_at_base: Vec<i64>,
}

/// Surrogate rows for every `n` in `range`.
pub fn pr5_table(
    g: &MetricGraph,
    d: &Divisor,
    range: std::ops::RangeInclusive<u64>,
) -> Result<Vec<EdgeTable>, ExperimentError> {
    let deg = d.degree();
    if deg <= 0 {
        return Err(ExperimentError::NonPositiveDegree(deg));
    }
    let targets = foster_terms(g);
    let ns: Vec<u64> = range.collect();
    ns.par_iter()
        .map(|&n| {
            let nd = d.scale(n as i64);
            let reds: Vec<Reduction> = (0..g.num_vertices())
                .map(|x| reduce(g, &nd, &Point::Vertex(x)))
                .collect::<Result<_, _>>()?;
            let rows = (0..g.num_edges())
                .map(|e| {
                    let edge = g.edge(e);
                    let (rx, ry) = (&reds[edge.u], &reds[edge.v]);
                    let ineq = edge_inequalities(g, e, n, deg, rx, ry);
                    let to_y = TangentDirection {
                        base: Point::Vertex(edge.u),
                        edge: e,
                        forward: true,
                    };
                    let to_x = TangentDirection {
                        base: Point::Vertex(edge.v),
                        edge: e,
                        forward: false,
                    };
                    let t = rx.witness.slope(g, &to_y) + ry.witness.slope(g, &to_x);
                    row(g, e, n, deg, t.to_integer().to_i64().expect("slope"), &targets[e], Some(ineq))
                })
                .collect();
            let reduced_at_base = (0..g.num_vertices())
                .map(|x| reds[x].divisor.get(&Point::Vertex(x)))
                .collect();
            Ok(EdgeTable {
                n,
                rows,
                reduced_at_base,
            })
        })
        .collect()
}

fn row(
    g: &MetricGraph,
    e: usize,
    n: u64,
    d: i64,
    t: i64,
    target: &Q,
    inequalities: Option<EdgeInequalities>,
) -> ConvergenceRow {
    let lhs = q(1) + qr(t, n as i64 * d);
    ConvergenceRow {
        n,
        edge: g.edge(e).id.clone(),
        t_n: t,
        deviation: (&lhs - target).abs(),
        lhs_pr5: lhs,
        target: target.clone(),
        bridge: g.is_bridge(e),
        inequalities,
    }
}

/// Rows from explicit slope data (minimum slopes only).
pub fn pr5_rows_from_data(
    g: &MetricGraph,
    data: &SlopeData,
    d: i64,
) -> Result<Vec<ConvergenceRow>, ExperimentError> {
    let targets = foster_terms(g);
    let mins: BTreeMap<&str, Option<i64>> = data
        .vertices
        .iter()
        .flat_map(|v| v.directions.iter().map(|dir| (dir.arc.as_str(), dir.min())))
        .collect();
    (0..g.num_edges())
        .map(|e| {
            let edge = g.edge(e);
            let (x, y) = (&g.vertex(edge.u).id, &g.vertex(edge.v).id);
            let get = |arc: String| {
                mins.get(arc.as_str())
                    .copied()
                    .flatten()
                    .ok_or(WeierstrassError::MissingPartner(arc))
            };
            let t = get(format!("{x}->{y}"))? + get(format!("{y}->{x}"))?;
            Ok(row(g, e, data.n, d, t, &targets[e], None))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Configuration and report
// ---------------------------------------------------------------------------

fn default_h() -> Q {
    qr(1, 4)
}
fn default_step() -> Q {
    qr(1, 128)
}
fn default_ratio() -> Q {
    q(5)
}
fn default_l1() -> Q {
    qr(1, 10)
}
fn default_slack() -> i64 {
    3
}
fn default_okounkov() -> u64 {
    40
}
fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub graph: GraphSpec,
    pub divisor: DivisorSpec,
    /// Smallest `n`; defaults to the first with `n d ≥ g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<u64>,
    pub n_max: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Explicit mode: full slope data, one entry per `n`.
    #[serde(default)]
    pub slopes: Vec<SlopeData>,
    /// Bin length for the binned ℓ1 statistic.
    #[serde(default = "default_h", with = "serde_q")]
    pub h: Q,
    /// Surrogate mode: spacing of the model on which `μ_n` lives.
    #[serde(default = "default_step", with = "serde_q")]
    pub model_step: Q,
    /// Values of `n` at which `μ_n` is assembled and compared; empty means
    /// `n_max` only.
    #[serde(default)]
    pub snapshots: Vec<u64>,
    /// Required decrease of the potential oscillation between the first and
    /// last snapshot.
    #[serde(default = "default_ratio", with = "serde_q")]
    pub osc_ratio: Q,
    /// Binned ℓ1 bound at the last snapshot.
    #[serde(default = "default_l1", with = "serde_q")]
    pub l1_max: Q,
    /// Rows must satisfy `|lhs − target| ≤ slack · g / n`.
    #[serde(default = "default_slack")]
    pub pr5_slack: i64,
    /// Largest `n` for the per-direction slope-range families.
    #[serde(default = "default_okounkov")]
    pub okounkov_n_max: u64,
}

impl ExperimentConfig {
    pub fn surrogate(graph: GraphSpec, divisor: DivisorSpec, n_max: u64) -> Self {
        Self {
            name: default_name(),
            graph,
            divisor,
            n_min: None,
            n_max,
            mode: Mode::TropicalSurrogate,
            slopes: Vec::new(),
            h: default_h(),
            model_step: default_step(),
            snapshots: Vec::new(),
            osc_ratio: default_ratio(),
            l1_max: default_l1(),
            pr5_slack: default_slack(),
            okounkov_n_max: default_okounkov(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartDegrees {
    #[serde(with = "serde_q")]
    pub divisor: Q,
    #[serde(with = "serde_q")]
    pub genus: Q,
    #[serde(with = "serde_q")]
    pub valence: Q,
    #[serde(with = "serde_q")]
    pub slopes: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub n: u64,
    pub r_n: usize,
    #[serde(with = "serde_q")]
    pub deg_w: Q,
    #[serde(with = "serde_q")]
    pub mass_err: Q,
    #[serde(with = "serde_q")]
    pub osc_phi: Q,
    #[serde(with = "serde_q")]
    pub l1_binned: Q,
    /// `μ_n` mass on the interiors of bridges.
    #[serde(with = "serde_q")]
    pub bridge_interior_mass: Q,
    pub parts: PartDegrees,
    pub mu_n: MeasureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionStats {
    pub vertex: String,
    pub edge: String,
    pub forward: bool,
    pub fekete: FeketeReport,
    #[serde(with = "serde_q")]
    pub width_defect: Q,
    #[serde(with = "serde_q")]
    pub sminmax_gap: Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn skipped(name: &str, detail: &str) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub mode: Mode,
    pub label: String,
    pub genus: i64,
    pub degree: i64,
    pub n_min: u64,
    pub n_max: u64,
    pub rows: Vec<ConvergenceRow>,
    pub snapshots: Vec<Snapshot>,
    pub mu_ad: MeasureSpec,
    pub okounkov: Vec<DirectionStats>,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Columns `n, edge, lhs_pr5, target, osc_phi, l1_binned, deg_Wn,
    /// mass_err`; measure columns are filled on snapshot rows only.
    pub fn to_csv(&self) -> String {
        let snaps: BTreeMap<u64, &Snapshot> = self.snapshots.iter().map(|s| (s.n, s)).collect();
        let f = |x: &Q| format!("{:.12}", to_f64(x));
        let mut out = String::from("n,edge,lhs_pr5,target,osc_phi,l1_binned,deg_Wn,mass_err\n");
        for r in &self.rows {
            let tail = match snaps.get(&r.n) {
                Some(s) => format!("{},{},{},{}", f(&s.osc_phi), f(&s.l1_binned), f(&s.deg_w), f(&s.mass_err)),
                None => ",,,".into(),
            };
            out += &format!("{},{},{},{},{}\n", r.n, r.edge, f(&r.lhs_pr5), f(&r.target), tail);
        }
        out
    }
}

fn bridge_interior_mass(g: &MetricGraph, m: &Measure) -> Q {
    let bridges: Vec<usize> = (0..g.num_edges()).filter(|&e| g.is_bridge(e)).collect();
    let mut total = Q::zero();
    for (p, c) in m.atoms() {
        if let Point::Interior { edge, .. } = p {
            if bridges.contains(edge) {
                total += c;
            }
        }
    }
    for &e in &bridges {
        total += m.density_mass(e, &Q::zero(), &g.edge(e).length);
    }
    total
}

fn okounkov_stats(
    g: &MetricGraph,
    d: &Divisor,
    genus: i64,
    n_max: u64,
) -> Result<Vec<DirectionStats>, ExperimentError> {
    let deg = d.degree();
    let dirs: Vec<TangentDirection> = (0..g.num_vertices())
        .flat_map(|x| g.tangent_directions(&Point::Vertex(x)))
        .collect();
    dirs.par_iter()
        .map(|dir| {
            let mut lists = BTreeMap::new();
            for n in 1..=n_max {
                let range = complete_slopes(g, &d.scale(n as i64), dir)?;
                // ranks below zero leave the series empty; Fekete needs 1..=N
                let Some(range) = range else {
                    return Ok(None);
                };
                lists.insert(n, range.values());
            }
            let fam = SlopeFamily::new(deg, genus, lists)?;
            let x = match dir.base {
                Point::Vertex(x) => x,
                _ => unreachable!("vertex directions"),
            };
            Ok(Some(DirectionStats {
                vertex: g.vertex(x).id.clone(),
                edge: g.edge(dir.edge).id.clone(),
                forward: dir.forward,
                fekete: fekete_limits(&fam)?,
                width_defect: width_defect(&fam, n_max)?,
                sminmax_gap: sminmax_gap(&fam, n_max)?,
            }))
        })
        .collect::<Result<Vec<Option<DirectionStats>>, ExperimentError>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// Runs the whole experiment; output depends only on the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, ExperimentError> {
    let g = cfg.graph.build()?;
    let d = cfg.divisor.resolve(&g)?;
    let deg = d.degree();
    if deg <= 0 {
        return Err(ExperimentError::NonPositiveDegree(deg));
    }
    let (_, genus) = g.genus();
    if genus == 0 {
        return Err(ExperimentError::ZeroGenus);
    }
    let n_min = cfg.n_min.unwrap_or(((genus + deg - 1) / deg).max(1) as u64);
    if n_min == 0 || n_min > cfg.n_max {
        return Err(ExperimentError::EmptyRange(n_min, cfg.n_max));
    }
    if (n_min as i64) * deg < genus {
        return Err(ExperimentError::BelowGenus {
            n: n_min,
            nd: n_min as i64 * deg,
            g: genus,
        });
    }
    let mu_ad = zhang_measure(&g)?;
    let gq = q(genus);
    let mut verdicts = Vec::new();
    let mut snapshots = Vec::new();
    let rows: Vec<ConvergenceRow>;
    let mut okounkov = Vec::new();

    match cfg.mode {
        Mode::TropicalSurrogate => {
            let table = pr5_table(&g, &d, n_min..=cfg.n_max)?;
            let mut consistent = true;
            let mut all_rows = Vec::new();
            for t in table {
                let nd = t.n as i64 * deg;
                consistent &= t.reduced_at_base.iter().all(|&c| nd - genus <= c && c <= nd);
                all_rows.extend(t.rows);
            }
            rows = all_rows;
            verdicts.push(Verdict::new(
                "surrogate-consistency",
                consistent,
                "n d − g ≤ D_{n,x}(x) ≤ n d at every model vertex".into(),
            ));
            let ineq_ok = rows
                .iter()
                .all(|r| r.inequalities.as_ref().is_none_or(EdgeInequalities::all));
            verdicts.push(Verdict::new(
                "claim-and-inequalities",
                ineq_ok,
                "slope claim and the four witness inequalities on every edge".into(),
            ));
            // μ_n on a fine model
            let mut pts = g.refine_uniform(&cfg.model_step).origin;
            pts.extend(d.support().cloned());
            let model = g.refine(pts.iter());
            let ns = snapshot_ns(cfg, n_min);
            let built: Vec<Result<Snapshot, ExperimentError>> = ns
                .par_iter()
                .map(|&n| {
                    let (data, own) = surrogate_slopes_on(&g, &model, &d, n)?;
                    let nd = n as i64 * deg;
                    if own.iter().any(|&c| c < nd - genus || c > nd) {
                        return Ok(None);
                    }
                    snapshot(&g, &model, &data, Mode::TropicalSurrogate, &mu_ad, &cfg.h).map(Some)
                })
                .map(|r| r.and_then(|s| s.ok_or(ExperimentError::BelowGenus { n: 0, nd: 0, g: genus })))
                .collect();
            for s in built {
                snapshots.push(s?);
            }
            okounkov = okounkov_stats(&g, &d, genus, cfg.okounkov_n_max.min(cfg.n_max))?;
        }
        Mode::Explicit => {
            let model = g.refine(std::iter::empty());
            let mut all_rows = Vec::new();
            for n in n_min..=cfg.n_max {
                let data = cfg
                    .slopes
                    .iter()
                    .find(|s| s.n == n)
                    .ok_or(ExperimentError::MissingSlopes(n))?;
                let expected = n as i64 * deg - genus;
                if data.r as i64 != expected {
                    return Err(ExperimentError::WrongRank {
                        n,
                        got: data.r,
                        expected,
                    });
                }
                // full data must also pass the exact reduction
                reduce_weierstrass(&g, data)?;
                all_rows.extend(pr5_rows_from_data(&g, data, deg)?);
                snapshots.push(snapshot(&g, &model, data, Mode::Explicit, &mu_ad, &cfg.h)?);
            }
            rows = all_rows;
            verdicts.push(Verdict::skipped(
                "surrogate-consistency",
                "explicit mode carries no reduced divisors",
            ));
        }
    }

    let bound_ok = rows
        .iter()
        .all(|r| r.deviation <= q(cfg.pr5_slack) * &gq / q(r.n as i64));
    verdicts.push(Verdict::new(
        "pr5-bound",
        bound_ok,
        format!("|lhs − ℓ/(ℓ+ρ)| ≤ {} g / n on every row", cfg.pr5_slack),
    ));
    // bounded |n d + t_n| must only happen on bridges; an edge is judged
    // once n d ℓ/(ℓ+ρ) clears the 3g slack twice over
    let nd = cfg.n_max as i64 * deg;
    let judged: Vec<&ConvergenceRow> = rows
        .iter()
        .filter(|r| r.n == cfg.n_max && !r.bridge && &r.target * q(nd) > q(6 * genus))
        .collect();
    let offenders: Vec<String> = judged
        .iter()
        .filter(|r| (nd + r.t_n).abs() <= 3 * genus)
        .map(|r| r.edge.clone())
        .collect();
    verdicts.push(if judged.is_empty() {
        Verdict::skipped(
            "bounded-case-only-on-bridges",
            "n_max too small to separate bounded from growing |n d + t_n|",
        )
    } else {
        Verdict::new(
            "bounded-case-only-on-bridges",
            offenders.is_empty(),
            if offenders.is_empty() {
                format!("{} non-bridge edges grow past 3g at n_max", judged.len())
            } else {
                format!("finding: bounded on non-bridge edges {}", offenders.join(", "))
            },
        )
    });
    let mass_ok = snapshots.iter().all(|s| s.mass_err <= q(2) / q(s.r_n as i64 + 1));
    verdicts.push(Verdict::new(
        "mass",
        mass_ok,
        "deg W_n within 2g(r_n+1) of g(r_n+1)^2".into(),
    ));
    match (snapshots.first(), snapshots.last()) {
        (Some(a), Some(b)) if snapshots.len() >= 2 => {
            let ratio_ok = a.osc_phi >= &cfg.osc_ratio * &b.osc_phi;
            let l1_ok = b.l1_binned < cfg.l1_max;
            verdicts.push(Verdict::new(
                "equidistribution-trend",
                ratio_ok && l1_ok,
                format!(
                    "osc {} at n = {} vs {} at n = {} (needs factor {}); l1 {} (needs < {})",
                    fmt_f(&a.osc_phi),
                    a.n,
                    fmt_f(&b.osc_phi),
                    b.n,
                    fmt_q(&cfg.osc_ratio),
                    fmt_f(&b.l1_binned),
                    fmt_q(&cfg.l1_max)
                ),
            ));
        }
        _ => verdicts.push(Verdict::skipped(
            "equidistribution-trend",
            "needs at least two snapshots",
        )),
    }
    if (0..g.num_edges()).any(|e| g.is_bridge(e)) {
        match snapshots.last() {
            Some(s) => verdicts.push(Verdict::new(
                "bridge-interior-mass",
                s.bridge_interior_mass.abs() < cfg.l1_max,
                format!("μ_n mass {} on bridge interiors at n = {}", fmt_f(&s.bridge_interior_mass), s.n),
            )),
            None => verdicts.push(Verdict::skipped("bridge-interior-mass", "no snapshot")),
        }
    }

    Ok(Report {
        name: cfg.name.clone(),
        mode: cfg.mode,
        label: match cfg.mode {
            Mode::TropicalSurrogate => SURROGATE_LABEL.into(),
            Mode::Explicit => "explicit: slope data supplied by the caller".into(),
        },
        genus,
        degree: deg,
        n_min,
        n_max: cfg.n_max,
        rows,
        snapshots,
        mu_ad: mu_ad.to_spec(&g),
        okounkov,
        verdicts,
    })
}

fn fmt_f(x: &Q) -> String {
    format!("{:.6}", to_f64(x))
}

fn snapshot_ns(cfg: &ExperimentConfig, n_min: u64) -> Vec<u64> {
    let mut ns: Vec<u64> = cfg
        .snapshots
        .iter()
        .copied()
        .filter(|n| (n_min..=cfg.n_max).contains(n))
        .collect();
    if ns.is_empty() {
        ns.push(cfg.n_max);
    }
    ns.sort_unstable();
    ns.dedup();
    ns
}

fn snapshot(
    g: &MetricGraph,
    model: &Refinement,
    data: &SlopeData,
    mode: Mode,
    mu_ad: &Measure,
    h: &Q,
) -> Result<Snapshot, ExperimentError> {
    let w = mu_n(g, model, data, mode)?;
    // compare unit-mass measures; the surrogate can be off by mass_err
    let mass = w.measure.mass();
    let normalised = w.measure.scale(&(q(1) / &mass));
    let (osc, l1) = compare_measures(g, &normalised, mu_ad, h)?;
    Ok(Snapshot {
        n: data.n,
        r_n: data.r,
        deg_w: w.degree,
        mass_err: w.mass_error,
        osc_phi: osc,
        l1_binned: l1,
        bridge_interior_mass: bridge_interior_mass(g, &w.measure),
        parts: PartDegrees {
            divisor: w.parts.divisor_term.degree(),
            genus: w.parts.genus_term.degree(),
            valence: w.parts.valence_term.degree(),
            slopes: w.parts.slope_term.degree(),
        },
        mu_n: w.measure.to_spec(g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn circle12() -> MetricGraph {
        fixtures::circle(&q(1), &q(2))
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let g = circle12();
        let mu = zhang_measure(&g).unwrap();
        assert_eq!(compare_measures(&g, &mu, &mu, &qr(1, 4)).unwrap(), (q(0), q(0)));
    }

    #[test]
    fn path_diracs() {
        let g = fixtures::path(&[qr(3, 2), qr(1, 2)]);
        let a = Measure::dirac(Point::Vertex(0));
        let b = Measure::dirac(Point::Vertex(2));
        let (osc, l1) = compare_measures(&g, &a, &b, &qr(1, 4)).unwrap();
        assert_eq!(osc, q(2));
        assert_eq!(l1, q(2));
        let (osc2, l12) = compare_measures(&g, &b, &a, &qr(1, 4)).unwrap();
        assert_eq!((osc2, l12), (q(2), q(2)));
    }

    #[test]
    fn circle_uniform_against_an_atom() {
        // L/8 from the closed-form potential t²/(2L) − t/2
        let g = circle12();
        let uniform = zhang_measure(&g).unwrap();
        let atom = Measure::dirac(Point::Vertex(0));
        let (osc, l1) = compare_measures(&g, &atom, &uniform, &qr(1, 4)).unwrap();
        assert_eq!(osc, qr(3, 8));
        assert_eq!(l1, q(2));
        let off = Measure::dirac(g.point_on_edge(0, qr(1, 3)).unwrap());
        assert_eq!(potential_oscillation(&g, &off, &uniform).unwrap(), qr(3, 8));
    }

    #[test]
    fn unequal_masses_are_rejected() {
        let g = circle12();
        let a = Measure::dirac(Point::Vertex(0));
        let b = a.scale(&q(2));
        assert!(matches!(
            compare_measures(&g, &a, &b, &qr(1, 4)),
            Err(ExperimentError::UnequalMass(..))
        ));
    }

    #[test]
    fn binned_cells() {
        let g = fixtures::path(&[q(1)]);
        let mut a = Measure::zero();
        a.add_atom(g.point_on_edge(0, qr(1, 4)).unwrap(), q(1));
        let mut b = Measure::zero();
        b.add_density(0, q(0), qr(1, 2), q(2));
        // bins [0,1/4), [1/4,1/2), ...: a sits in the second bin
        assert_eq!(binned_l1(&g, &a, &b, &qr(1, 4)).unwrap(), q(1));
        assert_eq!(binned_l1(&g, &a, &b, &qr(1, 2)).unwrap(), q(0));
    }

    #[test]
    fn surrogate_at_divisor_point_is_trivial() {
        // D = 2(x): at x the divisor is already reduced
        let g = circle12();
        let d = Divisor::point(Point::Vertex(0), 2);
        let data = surrogate_slopes(&g, &d, 3).unwrap();
        let x = &data.vertices[0];
        assert!(x.directions.iter().all(|dir| dir.min() == Some(0)));
        assert_eq!(data.r, 5);
    }

    #[test]
    fn surrogate_bounds_on_circle() {
        // L = 3, D = (p), base at distance 1: D_q(q) ≥ n d − g
        let g = circle12();
        let d = Divisor::point(Point::Vertex(0), 1);
        for n in 1..=12u64 {
            let r = g.refine(std::iter::empty());
            let (data, own) = surrogate_slopes_on(&g, &r, &d, n).unwrap();
            for (v, c) in data.vertices.iter().zip(&own) {
                let s: i64 = v.directions.iter().map(|x| x.min().unwrap()).sum();
                assert_eq!(n as i64 * v.d_x - s, *c);
                assert!((n as i64 - 1..=n as i64).contains(c));
            }
        }
    }

    #[test]
    fn surrogate_mass_is_exact() {
        let g = fixtures::theta();
        let d = Divisor::point(Point::Vertex(0), 1);
        let model = g.refine_uniform(&qr(1, 2));
        let (data, _) = surrogate_slopes_on(&g, &model, &d, 6).unwrap();
        let w = mu_n(&g, &model, &data, Mode::TropicalSurrogate).unwrap();
        assert_eq!(w.measure.mass(), q(1));
        assert_eq!(w.mass_error, q(0));
    }

    #[test]
    fn explicit_mode_on_the_pencil() {
        let (g, d, s) = fixtures::g12_circle();
        let data = SlopeData::from_structure(&g, &d, &s);
        let mut cfg = ExperimentConfig::surrogate(g.to_spec(), d.to_spec(&g), 1);
        cfg.mode = Mode::Explicit;
        cfg.slopes = vec![data];
        let rep = run_experiment(&cfg).unwrap();
        assert_eq!(rep.snapshots[0].deg_w, q(4));
        assert_eq!(rep.snapshots[0].mass_err, q(0));
        assert_eq!(rep.rows.len(), 3);
    }

    #[test]
    fn bridge_rows_on_dumbbell() {
        let g = fixtures::dumbbell();
        let d = Divisor::point(Point::Vertex(0), 1);
        let table = pr5_table(&g, &d, 2..=30).unwrap();
        let b = g.edge_id("bridge").unwrap();
        for t in &table {
            let r = &t.rows[b];
            assert!(r.bridge);
            assert_eq!(r.target, q(0));
            assert!(r.deviation <= qr(6, r.n as i64));
        }
    }

    #[test]
    fn report_is_deterministic() {
        let g = circle12();
        let d = Divisor::point(Point::Vertex(0), 1);
        let mut cfg = ExperimentConfig::surrogate(g.to_spec(), d.to_spec(&g), 8);
        cfg.snapshots = vec![4, 8];
        cfg.model_step = qr(1, 4);
        cfg.okounkov_n_max = 6;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with("n,edge,lhs_pr5,target,osc_phi,l1_binned,deg_Wn,mass_err\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn comparison_is_symmetric(g in fixtures::strategy::graph(5, 2), a in 0usize..5, t in 1i64..4) {
            let e = g.num_edges() - 1;
            let mu = Measure::dirac(Point::Vertex(a % g.num_vertices()));
            let nu = Measure::dirac(g.point_on_edge(e, &g.edge(e).length * qr(t, 4)).unwrap());
            let h = qr(1, 3);
            let ab = compare_measures(&g, &mu, &nu, &h).unwrap();
            prop_assert_eq!(&ab, &compare_measures(&g, &nu, &mu, &h).unwrap());
            prop_assert!(ab.0.is_positive() && ab.1 <= q(2));
        }

        #[test]
        fn surrogate_stays_within_genus_of_nd(g in fixtures::strategy::graph(4, 2), n in 1u64..6) {
            let genus = g.genus().1;
            prop_assume!(genus > 0);
            let d = Divisor::point(Point::Vertex(0), genus);
            let r = g.refine(std::iter::empty());
            let (data, own) = surrogate_slopes_on(&g, &r, &d, n).unwrap();
            let nd = n as i64 * genus;
            for (v, c) in data.vertices.iter().zip(&own) {
                let s: i64 = v.directions.iter().map(|x| x.min().unwrap()).sum();
                prop_assert_eq!(n as i64 * v.d_x - s, *c);
                prop_assert!(nd - genus <= *c && *c <= nd);
            }
        }
    }
}
