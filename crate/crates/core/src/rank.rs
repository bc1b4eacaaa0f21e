//! Rank of divisors with test divisors restricted to a finite grid.
//!
//! The answer is exact whenever the grid is rank-determining (for instance
//! the vertex set of any simple model) and a lower bound otherwise.

use std::collections::HashMap;

use crate::divisor::Divisor;
use crate::graph::{MetricGraph, Point};
use crate::reduction::{reduce, ReduceError};

pub struct RankSolver<'g> {
    g: &'g MetricGraph,
    grid: Vec<Point>,
    base: Point,
    memo: HashMap<Divisor, i64>,
}

impl<'g> RankSolver<'g> {
    /// Reduces with respect to the first grid point.
    pub fn new(g: &'g MetricGraph, grid: Vec<Point>) -> Self {
        assert!(!grid.is_empty(), "rank grid must be nonempty");
        let base = grid[0].clone();
        Self {
            g,
            grid,
            base,
            memo: HashMap::new(),
        }
    }

    /// Vertex set of the model.
    pub fn on_vertices(g: &'g MetricGraph) -> Self {
        Self::new(g, (0..g.num_vertices()).map(Point::Vertex).collect())
    }

    pub fn rank(&mut self, d: &Divisor) -> Result<i64, ReduceError> {
        if d.degree() < 0 {
            return Ok(-1);
        }
        let reduced = reduce(self.g, d, &self.base)?.divisor;
        if reduced.get(&self.base) < 0 {
            return Ok(-1);
        }
        if let Some(&r) = self.memo.get(&reduced) {
            return Ok(r);
        }
        let mut best = reduced.degree();
        for x in self.grid.clone() {
            let mut e = reduced.clone();
            e.add_at(x, -1);
            best = best.min(self.rank(&e)? + 1);
            if best == 0 {
                break;
            }
        }
        self.memo.insert(reduced, best);
        Ok(best)
    }
}

/// `rank(D)` with test divisors supported on `grid`.
pub fn rank(g: &MetricGraph, d: &Divisor, grid: &[Point]) -> Result<i64, ReduceError> {
    RankSolver::new(g, grid.to_vec()).rank(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{q, qr};
    use proptest::prelude::*;

    fn vertices(g: &MetricGraph) -> Vec<Point> {
        (0..g.num_vertices()).map(Point::Vertex).collect()
    }

    #[test]
    fn circle_ranks() {
        let c = fixtures::circle(&q(1), &q(2));
        let p = c.point_on_edge(1, qr(1, 3)).unwrap();
        let mut grid = vertices(&c);
        grid.push(p.clone());
        assert_eq!(rank(&c, &Divisor::point(p.clone(), -1), &grid).unwrap(), -1);
        assert_eq!(rank(&c, &Divisor::point(p.clone(), 1), &grid).unwrap(), 0);
        assert_eq!(rank(&c, &Divisor::point(p.clone(), 2), &grid).unwrap(), 1);
        // degree 0 but not principal
        let mut d = Divisor::point(p, 1);
        d.add_at(Point::Vertex(0), -1);
        assert_eq!(rank(&c, &d, &grid).unwrap(), -1);
        assert_eq!(rank(&c, &Divisor::zero(), &grid).unwrap(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn riemann_roch_on_random_graphs(
            g in fixtures::strategy::graph(4, 2),
            coeffs in prop::collection::vec(-2i64..3, 4),
        ) {
            let n = g.num_vertices();
            let d = Divisor::from_pairs((0..n).map(|i| (Point::Vertex(i), coeffs[i])));
            let k = g.graph_canonical_divisor();
            let mut solver = RankSolver::on_vertices(&g);
            let lhs = solver.rank(&d).unwrap() - solver.rank(&(&k - &d)).unwrap();
            prop_assert_eq!(lhs, d.degree() - g.genus().0 + 1);
        }
    }
}
