//! Exit gate: one PASS/FAIL line per acceptance criterion.
//!
//! Runs without the libtest harness so the lines always print; the process
//! exits non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skeleta::experiment::{pr5_table, run_experiment, ExperimentConfig, Report};
use skeleta::graph::{Edge, Vertex};
use skeleta::okounkov::{ks_uniformity, sminmax_gap, width_defect, SlopeFamily};
use skeleta::potential::{foster_terms, green_function, laplacian, verify_admissibility, zhang_measure};
use skeleta::rank::RankSolver;
use skeleta::rational::{fmt_q, q, qr, to_f64, Q};
use skeleta::reduction::complete_slopes;
use skeleta::weierstrass::{local_weight, reduce_weierstrass, wronskian_order, SlopeData};
use skeleta::{fixtures, Divisor, Measure, MetricGraph, Point, TangentDirection};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Connected simple graph on at most `max_v` vertices with rational
/// lengths and, occasionally, positive vertex genus.
fn random_graph(rng: &mut ChaCha8Rng, max_v: usize) -> MetricGraph {
    let n = rng.gen_range(2..=max_v);
    let mut pairs = BTreeSet::new();
    for child in 1..n {
        pairs.insert((rng.gen_range(0..child), child));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let vertices = (0..n)
        .map(|i| Vertex {
            id: format!("v{i}"),
            genus: u32::from(rng.gen_ratio(1, 6)),
        })
        .collect();
    let edges = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (u, v))| Edge {
            id: format!("e{i}"),
            u,
            v,
            length: qr(rng.gen_range(1..=9), rng.gen_range(1..=4)),
        })
        .collect();
    MetricGraph::new(vertices, edges).expect("generated graph is valid")
}

fn random_point(rng: &mut ChaCha8Rng, g: &MetricGraph) -> Point {
    if rng.gen_bool(0.5) {
        Point::Vertex(rng.gen_range(0..g.num_vertices()))
    } else {
        let e = rng.gen_range(0..g.num_edges());
        let k = rng.gen_range(1..8);
        g.point_on_edge(e, &g.edge(e).length * qr(k, 8)).expect("inside the edge")
    }
}

/// 100 graphs of positive genus (the admissible measure needs `g ≥ 1`).
fn corpus() -> Vec<MetricGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    std::iter::repeat_with(|| random_graph(&mut rng, 8))
        .filter(|g| g.genus().1 > 0)
        .take(100)
        .collect()
}

fn c1_mass_and_foster() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for (i, g) in corpus().iter().enumerate() {
        let mu = zhang_measure(g).expect("positive genus");
        let foster: Q = foster_terms(g).iter().sum();
        if mu.mass() != q(1) || foster != q(g.genus().0) {
            bad.push(i);
        }
    }
    let t = start.elapsed();
    outcome(
        bad.is_empty() && t < Duration::from_secs(10),
        format!("100 graphs, failures {bad:?}, {}", secs(t)),
    )
}

fn c2_canonical_degree() -> Outcome {
    let bad: Vec<usize> = corpus()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.canonical_divisor().degree() != 2 * g.genus().1 - 2)
        .map(|(i, _)| i)
        .collect();
    outcome(bad.is_empty(), format!("100 graphs, failures {bad:?}"))
}

fn c3_green_laplacian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    let mut done = 0;
    while done < 50 {
        let g = random_graph(&mut rng, 6);
        let (x, z) = (random_point(&mut rng, &g), random_point(&mut rng, &g));
        if x == z {
            continue;
        }
        let f = green_function(&g, &z, &x).expect("valid points");
        let expected = Measure::dirac(x).sub(&Measure::dirac(z));
        if laplacian(&g, &f) != expected {
            bad += 1;
        }
        done += 1;
    }
    outcome(bad == 0, format!("50 triples, {bad} mismatches"))
}

fn c4_admissibility() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["circle", "theta", "dumbbell"] {
        let g = fixtures::by_name(name).expect("fixture");
        let mu = zhang_measure(&g).expect("genus > 0");
        let samples = vec![
            Point::Vertex(0),
            Point::Vertex(1),
            g.point_on_edge(0, &g.edge(0).length * qr(1, 3)).unwrap(),
            g.point_on_edge(1, &g.edge(1).length * qr(1, 2)).unwrap(),
            g.point_on_edge(2, &g.edge(2).length * qr(3, 4)).unwrap(),
        ];
        let (c, ok) = verify_admissibility(&g, &g.canonical_divisor(), &mu, &samples).expect("kernel");
        pass &= ok;
        lines.push(format!("{name}: {}", if ok { fmt_q(&-c) } else { "varies".into() }));
    }
    outcome(pass, lines.join(", "))
}

fn c5_riemann_roch() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut bad = 0;
    for name in ["circle", "theta"] {
        let g = fixtures::by_name(name).unwrap();
        let k = g.graph_canonical_divisor();
        let genus = g.genus().0;
        let mut solver = RankSolver::on_vertices(&g);
        let n = g.num_vertices() as u32;
        for code in 0..5i64.pow(n) {
            let mut c = code;
            let d = Divisor::from_pairs((0..g.num_vertices()).map(|i| {
                let v = c % 5 - 2;
                c /= 5;
                (Point::Vertex(i), v)
            }));
            let lhs = solver.rank(&d).unwrap() - solver.rank(&(&k - &d)).unwrap();
            if lhs != d.degree() - genus + 1 {
                bad += 1;
            }
            checked += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        bad == 0 && t < Duration::from_secs(120),
        format!("{checked} divisors, {bad} violations, {}", secs(t)),
    )
}

fn c6_wronskian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    for _ in 0..500 {
        let r = rng.gen_range(0..=4usize);
        let mut pool: Vec<i64> = (0..=12).collect();
        let mut s = Vec::with_capacity(r + 1);
        for _ in 0..=r {
            s.push(pool.swap_remove(rng.gen_range(0..pool.len())));
        }
        s.sort_unstable();
        let ord = wronskian_order(&s).unwrap() as i64;
        let expected = s.iter().sum::<i64>() - (r * (r + 1) / 2) as i64;
        if ord != expected || local_weight(&s).unwrap() != expected {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("500 sequences, {bad} mismatches"))
}

fn c7_weierstrass_degree() -> Outcome {
    let mut cases: Vec<(String, MetricGraph, SlopeData)> = Vec::new();
    let (g, d, s) = fixtures::g12_circle();
    cases.push(("pencil".into(), g.clone(), SlopeData::from_structure(&g, &d, &s)));
    let cycle = fixtures::circle(&q(1), &q(2));
    for n in 1..=8u64 {
        let (m, data) = fixtures::circle_complete_series(&cycle, 0, n);
        cases.push((format!("circle n={n}"), m, data));
    }
    let mut bad = Vec::new();
    for (name, g, data) in &cases {
        // the stored form must round-trip before use
        let text = serde_json::to_string(data).unwrap();
        let data: SlopeData = serde_json::from_str(&text).unwrap();
        let w = reduce_weierstrass(g, &data).unwrap();
        let r1 = data.r as i64 + 1;
        if w.degree() != g.genus().1 * r1 * r1 || !w.is_effective() {
            bad.push(name.clone());
        }
    }
    outcome(bad.is_empty(), format!("{} fixtures, failures {bad:?}", cases.len()))
}

fn c8_pr5() -> Outcome {
    let start = Instant::now();
    let mut worst_circle = Q::zero();
    let mut pass = true;
    let circle = fixtures::circle(&q(1), &q(2));
    for p in 0..circle.num_vertices() {
        let d = Divisor::point(Point::Vertex(p), 1);
        for t in pr5_table(&circle, &d, 1..=200).unwrap() {
            for r in t.rows {
                let e = circle.edge_id(&r.edge).unwrap();
                let target = &circle.edge(e).length / q(3);
                let dev = (&r.lhs_pr5 - &target).abs() * q(r.n as i64);
                pass &= target == r.target && dev <= q(3);
                worst_circle = worst_circle.max(dev);
            }
        }
    }
    let dumbbell = fixtures::dumbbell();
    let bridge = dumbbell.edge_id("bridge").unwrap();
    let mut worst_bridge = Q::zero();
    for p in ["a", "a1", "b2"] {
        let d = Divisor::point(Point::Vertex(dumbbell.vertex_id(p).unwrap()), 1);
        for t in pr5_table(&dumbbell, &d, 2..=200).unwrap() {
            let r = &t.rows[bridge];
            let dev = r.lhs_pr5.abs() * q(r.n as i64);
            pass &= r.target.is_zero() && dev <= q(6);
            worst_bridge = worst_bridge.max(dev);
        }
    }
    let t = start.elapsed();
    outcome(
        pass && t < Duration::from_secs(300),
        format!(
            "max n·|dev| circle {} (≤ 3), bridge {} (≤ 6), {}",
            fmt_q(&worst_circle),
            fmt_q(&worst_bridge),
            secs(t)
        ),
    )
}

fn equidist_config(name: &str, vertex: &str) -> ExperimentConfig {
    let g = fixtures::by_name(name).unwrap();
    let d = Divisor::point(Point::Vertex(g.vertex_id(vertex).unwrap()), 1);
    let mut cfg = ExperimentConfig::surrogate(g.to_spec(), d.to_spec(&g), 200);
    cfg.name = name.into();
    cfg.snapshots = vec![20, 50, 100, 200];
    cfg.okounkov_n_max = 20;
    cfg
}

fn c9_equidistribution(reports: &[Report]) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for rep in reports {
        let first = rep.snapshots.iter().find(|s| s.n == 20).unwrap();
        let last = rep.snapshots.iter().find(|s| s.n == 200).unwrap();
        let ratio = &first.osc_phi / &last.osc_phi;
        let ok = ratio >= q(5) && last.l1_binned < qr(1, 10);
        pass &= ok;
        lines.push(format!(
            "{}: osc ratio {:.1}, l1 {:.4}",
            rep.name,
            to_f64(&ratio),
            to_f64(&last.l1_binned)
        ));
    }
    outcome(pass, lines.join("; "))
}

/// Slope lists of `|n (p)|` along a direction at distance `a` from `p`
/// on the circle, from the complete linear series itself.
fn circle_family(n_max: u64, a: &Q) -> SlopeFamily {
    let g = fixtures::circle(&q(1), &q(2));
    let base = g.point_on_edge(0, a.clone()).unwrap();
    let dir = TangentDirection {
        base,
        edge: 0,
        forward: false,
    };
    let lists = (1..=n_max)
        .map(|n| {
            let range = complete_slopes(&g, &Divisor::point(Point::Vertex(0), n as i64), &dir)
                .unwrap()
                .unwrap();
            (n, range.values())
        })
        .collect();
    SlopeFamily::new(1, 1, lists).unwrap()
}

fn check<'a>(pass: &mut bool, failed: &mut BTreeSet<&'a str>, name: &'a str, ok: bool) {
    if !ok {
        failed.insert(name);
    }
    *pass &= ok;
}

fn c10_okounkov() -> Outcome {
    let mut pass = true;
    let mut failed: BTreeSet<&str> = BTreeSet::new();
    let mut notes = Vec::new();
    // width on full lists: circle directions, the stored series and the pencil
    let total = q(3);
    let ns = [5u64, 10, 20, 40];
    for a in [qr(1, 3), qr(1, 2), qr(3, 4)] {
        let fam = circle_family(40, &a);
        for n in 1..=40 {
            check(&mut pass, &mut failed, "1", width_defect(&fam, n).unwrap().abs() <= qr(2, n as i64));
        }
        // KS to uniform on the limiting interval [−(L − a)/L, a/L]
        let lo = -(&total - &a) / &total;
        let hi = &lo + q(1);
        let ks: Vec<Q> = ns.iter().map(|&n| ks_uniformity(&fam, n, &lo, &hi).unwrap()).collect();
        // lattice atoms of mass 1/n: a trend, not strict at every step
        let decreasing = ks.windows(2).all(|w| w[1] <= w[0])
            && ks[ks.len() - 1] < ks[0]
            && ns.iter().zip(&ks).all(|(&n, k)| *k <= qr(1, n as i64));
        check(&mut pass, &mut failed, "2", decreasing);
        let gaps: Vec<Q> = ns.iter().map(|&n| sminmax_gap(&fam, n).unwrap().abs()).collect();
        check(&mut pass, &mut failed, "3", gaps.windows(2).all(|w| w[1] <= w[0]));
        notes.push(format!("a={}: KS {:?}", fmt_q(&a), ks.iter().map(fmt_q).collect::<Vec<_>>()));
    }
    let cycle = fixtures::circle(&q(1), &q(2));
    for n in 1..=8u64 {
        let (_, data) = fixtures::circle_complete_series(&cycle, 0, n);
        for v in &data.vertices {
            for dir in &v.directions {
                let s = dir.slopes.as_ref().unwrap();
                let w = q(s[s.len() - 1] - s[0]) / q(n as i64);
                check(&mut pass, &mut failed, "4", (w - q(1)).abs() <= qr(2, n as i64));
            }
        }
    }
    let (g, d, s) = fixtures::g12_circle();
    let pencil = SlopeData::from_structure(&g, &d, &s);
    for v in &pencil.vertices {
        for dir in &v.directions {
            let s = dir.slopes.as_ref().unwrap();
            check(&mut pass, &mut failed, "5", (q(s[s.len() - 1] - s[0]) - q(2)).abs() <= q(2));
        }
    }
    // arithmetic families: the gap shrinks along n
    for (d, g) in [(1, 1), (3, 2)] {
        let fam = SlopeFamily::arithmetic(d, g, 40);
        let gaps: Vec<Q> = ns.iter().map(|&n| sminmax_gap(&fam, n).unwrap().abs()).collect();
        check(&mut pass, &mut failed, "6", gaps.windows(2).all(|w| w[1] <= w[0]));
        let ks: Vec<Q> = ns
            .iter()
            .map(|&n| ks_uniformity(&fam, n, &q(0), &q(d)).unwrap())
            .collect();
        check(&mut pass, &mut failed, "7", ks.windows(2).all(|w| w[1] < w[0]));
    }
    if !failed.is_empty() {
        notes.push(format!("failed checks {failed:?}"));
    }
    outcome(pass, notes.join("; "))
}

fn c11_determinism() -> Outcome {
    let mut cfg = equidist_config("dumbbell", "a");
    cfg.n_max = 60;
    cfg.snapshots = vec![20, 60];
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    let same = a.to_json() == b.to_json() && a.to_csv() == b.to_csv();
    outcome(same, format!("{} JSON bytes", a.to_json().len()))
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() -> ExitCode {
    let reports: Vec<Report> = [("circle", "x"), ("theta", "a"), ("dumbbell", "a")]
        .iter()
        .map(|(g, v)| run_experiment(&equidist_config(g, v)).expect("experiment runs"))
        .collect();
    let criteria: Vec<Criterion> = vec![
        ("exact mass one and Foster identity", Box::new(c1_mass_and_foster)),
        ("canonical degree 2g − 2", Box::new(c2_canonical_degree)),
        ("Green function Laplacian", Box::new(c3_green_laplacian)),
        ("admissibility constant", Box::new(c4_admissibility)),
        ("Riemann–Roch on vertex divisors", Box::new(c5_riemann_roch)),
        ("Wronskian order law", Box::new(c6_wronskian)),
        ("Weierstrass degree identity", Box::new(c7_weierstrass_degree)),
        ("per-edge resistance law", Box::new(c8_pr5)),
        ("equidistribution trend", Box::new(|| c9_equidistribution(&reports))),
        ("slope interval width and uniformity", Box::new(c10_okounkov)),
        ("deterministic reports", Box::new(c11_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag}: {name} ({})", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
