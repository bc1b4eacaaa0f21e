use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use skeleta::experiment::{pr5_table, run_experiment, surrogate_slopes_on, ExperimentConfig};
use skeleta::potential::{resistance, zhang_measure};
use skeleta::rank::RankSolver;
use skeleta::rational::{q, qr};
use skeleta::reduction::reduce;
use skeleta::weierstrass::{midpoint_weierstrass, wronskian_order};
use skeleta::{fixtures, Divisor, Point};

fn potential(c: &mut Criterion) {
    let theta = fixtures::theta();
    let refined = theta.refine_uniform(&qr(1, 8)).graph;
    c.bench_function("zhang_measure/theta", |b| b.iter(|| zhang_measure(black_box(&theta))));
    c.bench_function("resistance/theta_refined", |b| {
        b.iter(|| resistance(&refined, &Point::Vertex(0), &Point::Vertex(1)))
    });
}

fn reduction(c: &mut Criterion) {
    let theta = fixtures::theta();
    let mut group = c.benchmark_group("reduce/theta");
    for n in [10i64, 50, 200] {
        let d = Divisor::point(Point::Vertex(0), n);
        let at = theta.point_on_edge(5, qr(3, 7)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| {
            b.iter(|| reduce(&theta, d, &at))
        });
    }
    group.finish();
    let circle = fixtures::circle(&q(1), &q(2));
    c.bench_function("rank/circle_degree3", |b| {
        b.iter(|| RankSolver::on_vertices(&circle).rank(&Divisor::point(Point::Vertex(1), 3)))
    });
}

fn weierstrass(c: &mut Criterion) {
    c.bench_function("wronskian_order/r4", |b| {
        b.iter(|| wronskian_order(black_box(&[0, 2, 5, 9, 12])))
    });
    let theta = fixtures::theta();
    let model = theta.refine_uniform(&qr(1, 16));
    let d = Divisor::point(Point::Vertex(0), 1);
    let (data, _) = surrogate_slopes_on(&theta, &model, &d, 50).unwrap();
    c.bench_function("surrogate_slopes/theta_n50", |b| {
        b.iter(|| surrogate_slopes_on(&theta, &model, &d, 50))
    });
    c.bench_function("midpoint_weierstrass/theta_n50", |b| {
        b.iter(|| midpoint_weierstrass(&model.graph, &data))
    });
}

fn experiment(c: &mut Criterion) {
    let dumbbell = fixtures::dumbbell();
    let d = Divisor::point(Point::Vertex(0), 1);
    c.bench_function("pr5_table/dumbbell_n100", |b| b.iter(|| pr5_table(&dumbbell, &d, 2..=100)));
    let circle = fixtures::circle(&q(1), &q(2));
    let mut cfg = ExperimentConfig::surrogate(circle.to_spec(), d.to_spec(&circle), 50);
    cfg.snapshots = vec![10, 50];
    cfg.okounkov_n_max = 10;
    let mut group = c.benchmark_group("run_experiment");
    group.sample_size(10);
    group.bench_function("circle_n50", |b| b.iter(|| run_experiment(&cfg)));
    group.finish();
}

criterion_group!(benches, potential, reduction, weierstrass, experiment);
criterion_main!(benches);
