//! Exact linear solvers over the rationals.
//!
//! [`solve_dense`] is fraction-free Bareiss elimination. [`SymmetricFactor`]
//! eliminates a sparse symmetric positive definite system (grounded graph
//! Laplacians) in minimum-degree order and can be reused for many
//! right-hand sides.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::rational::Q;

/// Solves `a x = b`; `None` if `a` is singular.
pub fn solve_dense(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let n = a.len();
    assert_eq!(b.len(), n, "right-hand side length");
    // clear denominators row by row
    let mut m: Vec<Vec<BigInt>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            assert_eq!(row.len(), n, "square matrix");
            let l = row
                .iter()
                .chain(std::iter::once(bi))
                .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            row.iter()
                .chain(std::iter::once(bi))
                .map(|x| (x * Q::from_integer(l.clone())).to_integer())
                .collect()
        })
        .collect();
    let mut prev = BigInt::one();
    for k in 0..n {
        let p = (k..n).find(|&i| !m[i][k].is_zero())?;
        m.swap(k, p);
        for i in k + 1..n {
            for j in k + 1..=n {
                let v = (&m[k][k] * &m[i][j] - &m[i][k] * &m[k][j]) / &prev;
                m[i][j] = v;
            }
            m[i][k] = BigInt::zero();
        }
        prev = m[k][k].clone();
    }
    let mut x = vec![Q::zero(); n];
    for k in (0..n).rev() {
        let mut s = Q::from_integer(m[k][n].clone());
        for j in k + 1..n {
            s -= Q::from_integer(m[k][j].clone()) * &x[j];
        }
        x[k] = s / Q::from_integer(m[k][k].clone());
    }
    Some(x)
}

/// Determinant by Bareiss elimination.
pub fn determinant(a: &[Vec<BigInt>]) -> BigInt {
    let n = a.len();
    let mut m = a.to_vec();
    let mut prev = BigInt::one();
    let mut sign = BigInt::one();
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !m[i][k].is_zero()) else {
            return BigInt::zero();
        };
        if p != k {
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (&m[k][k] * &m[i][j] - &m[i][k] * &m[k][j]) / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    if n == 0 {
        BigInt::one()
    } else {
        sign * &m[n - 1][n - 1]
    }
}

/// Pivot index, pivot value and the off-diagonal entries of its row.
type Step = (usize, Q, Vec<(usize, Q)>);

/// LDLᵀ-style elimination of a sparse symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricFactor {
    n: usize,
    steps: Vec<Step>,
}

impl SymmetricFactor {
    /// `rows[i]` holds the nonzero entries of row `i` (both triangles).
    /// Returns `None` if a zero pivot is met.
    pub fn new(mut rows: Vec<BTreeMap<usize, Q>>) -> Option<Self> {
        let n = rows.len();
        let mut queue: BTreeSet<(usize, usize)> =
            rows.iter().enumerate().map(|(i, r)| (r.len(), i)).collect();
        let mut done = vec![false; n];
        let mut steps = Vec::with_capacity(n);
        while let Some((_, k)) = queue.pop_first() {
            let row = std::mem::take(&mut rows[k]);
            let pivot = row.get(&k).cloned().unwrap_or_else(Q::zero);
            if pivot.is_zero() {
                return None;
            }
            done[k] = true;
            let nb: Vec<(usize, Q)> = row
                .into_iter()
                .filter(|(j, v)| *j != k && !v.is_zero())
                .collect();
            for (i, aik) in &nb {
                queue.remove(&(rows[*i].len(), *i));
                rows[*i].remove(&k);
                let f = aik / &pivot;
                for (j, akj) in &nb {
                    let e = rows[*i].entry(*j).or_insert_with(Q::zero);
                    *e -= &f * akj;
                    if e.is_zero() && i != j {
                        rows[*i].remove(j);
                    }
                }
            }
            for (i, _) in &nb {
                if !done[*i] {
                    queue.insert((rows[*i].len(), *i));
                }
            }
            steps.push((k, pivot, nb));
        }
        Some(Self { n, steps })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[Q]) -> Vec<Q> {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let mut y = b.to_vec();
        for (k, p, nb) in &self.steps {
            if y[*k].is_zero() {
                continue;
            }
            let t = &y[*k] / p;
            for (i, a) in nb {
                y[*i] -= a * &t;
            }
        }
        let mut x = vec![Q::zero(); self.n];
        for (k, p, nb) in self.steps.iter().rev() {
            let mut s = y[*k].clone();
            for (j, a) in nb {
                s -= a * &x[*j];
            }
            x[*k] = s / p;
        }
        x
    }
}

/// Rank of a rational matrix.
pub fn matrix_rank(a: &[Vec<Q>]) -> usize {
    let mut m = a.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != rank && !row[c].is_zero() {
                let f = &row[c] / &pivot[c];
                for (x, y) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *x -= &f * y;
                }
            }
        }
        rank += 1;
    }
    rank
}
