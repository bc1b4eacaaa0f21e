//! Families of slope sequences indexed by `n`: Fekete limits, the
//! normalised empirical measures `η_n`, and their distance to uniform.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{q, qr, Q};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OkounkovError {
    #[error("list for n = {0} is not strictly increasing")]
    NotStrict(u64),
    #[error("no list for n = {0}")]
    Missing(u64),
    #[error("lists must cover 1..=N contiguously; {0} is missing")]
    Gap(u64),
    #[error("s_(n+m),0 > s_n,0 + s_m,0 at n = {n}, m = {m}")]
    Subadditivity { n: u64, m: u64 },
    #[error("s_n,max + s_m,max > s_(n+m),max at n = {n}, m = {m}")]
    Superadditivity { n: u64, m: u64 },
    #[error("interval must have positive length")]
    EmptyInterval,
    #[error("family is empty")]
    Empty,
}

/// Sorted slope lists `S_n` along one direction, for the series `|n D|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlopeFamily {
    pub d: i64,
    pub g: i64,
    /// Keyed by `n` (decimal strings in JSON).
    #[serde(with = "keyed_by_n")]
    pub lists: BTreeMap<u64, Vec<i64>>,
}

mod keyed_by_n {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<u64, Vec<i64>>, s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u64, Vec<i64>>, D::Error> {
        BTreeMap::<String, Vec<i64>>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| Ok((k.parse().map_err(D::Error::custom)?, v)))
            .collect()
    }
}

impl SlopeFamily {
    pub fn new(d: i64, g: i64, lists: BTreeMap<u64, Vec<i64>>) -> Result<Self, OkounkovError> {
        let f = Self { d, g, lists };
        f.validate()?;
        Ok(f)
    }

    /// `s_{n,i} = i` for `i = 0..=n d − g`.
    pub fn arithmetic(d: i64, g: i64, n_max: u64) -> Self {
        let lists = (1..=n_max)
            .map(|n| (n, (0..=(n as i64 * d - g).max(0)).collect()))
            .collect();
        Self { d, g, lists }
    }

    pub fn validate(&self) -> Result<(), OkounkovError> {
        for (&n, l) in &self.lists {
            if l.is_empty() || l.windows(2).any(|w| w[0] >= w[1]) {
                return Err(OkounkovError::NotStrict(n));
            }
        }
        Ok(())
    }

    pub fn list(&self, n: u64) -> Result<&[i64], OkounkovError> {
        self.lists
            .get(&n)
            .map(Vec::as_slice)
            .ok_or(OkounkovError::Missing(n))
    }

    /// Adds `c n` to every entry of `S_n`.
    pub fn translate(&self, c: i64) -> Self {
        let lists = self
            .lists
            .iter()
            .map(|(&n, l)| (n, l.iter().map(|s| s + c * n as i64).collect()))
            .collect();
        Self {
            d: self.d,
            g: self.g,
            lists,
        }
    }
}

/// Fekete bracketing of the end points of the limiting interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeketeReport {
    pub n_max: u64,
    /// `s_{N,0} / N` at the largest `N`.
    #[serde(with = "crate::rational::serde_q")]
    pub s_min_estimate: Q,
    /// `s_{N,r_N} / N` at the largest `N`.
    #[serde(with = "crate::rational::serde_q")]
    pub s_max_estimate: Q,
    /// `min_n s_{n,0}/n`, an upper bound for the lower end.
    #[serde(with = "crate::rational::serde_q")]
    pub s_min_upper: Q,
    /// `max_n s_{n,r_n}/n`, a lower bound for the upper end.
    #[serde(with = "crate::rational::serde_q")]
    pub s_max_lower: Q,
    pub pairs_checked: usize,
}

pub fn fekete_limits(family: &SlopeFamily) -> Result<FeketeReport, OkounkovError> {
    family.validate()?;
    let n_max = *family.lists.keys().next_back().ok_or(OkounkovError::Empty)?;
    for n in 1..=n_max {
        if !family.lists.contains_key(&n) {
            return Err(OkounkovError::Gap(n));
        }
    }
    let lo = |n: u64| family.lists[&n][0];
    let hi = |n: u64| *family.lists[&n].last().expect("nonempty");
    let mut pairs = 0;
    for n in 1..=n_max {
        for m in n..=n_max - n {
            pairs += 1;
            if lo(n + m) > lo(n) + lo(m) {
                return Err(OkounkovError::Subadditivity { n, m });
            }
            if hi(n) + hi(m) > hi(n + m) {
                return Err(OkounkovError::Superadditivity { n, m });
            }
        }
    }
    let ratio = |v: i64, n: u64| qr(v, n as i64);
    Ok(FeketeReport {
        n_max,
        s_min_estimate: ratio(lo(n_max), n_max),
        s_max_estimate: ratio(hi(n_max), n_max),
        s_min_upper: (1..=n_max).map(|n| ratio(lo(n), n)).min().expect("nonempty"),
        s_max_lower: (1..=n_max).map(|n| ratio(hi(n), n)).max().expect("nonempty"),
        pairs_checked: pairs,
    })
}

/// Atoms `(s/n, 1/|S_n|)`, in increasing position.
pub fn eta_n(family: &SlopeFamily, n: u64) -> Result<Vec<(Q, Q)>, OkounkovError> {
    let l = family.list(n)?;
    let w = qr(1, l.len() as i64);
    Ok(l.iter().map(|&s| (qr(s, n as i64), w.clone())).collect())
}

/// `(s_{n,r_n} − s_{n,0})/n − d`.
pub fn width_defect(family: &SlopeFamily, n: u64) -> Result<Q, OkounkovError> {
    let l = family.list(n)?;
    Ok(qr(l[l.len() - 1] - l[0], n as i64) - q(family.d))
}

/// Kolmogorov–Smirnov distance between atoms (sorted by position, total
/// mass 1) and the uniform law on `[a, b]`.
pub fn ks_to_uniform(atoms: &[(Q, Q)], a: &Q, b: &Q) -> Result<Q, OkounkovError> {
    if b <= a {
        return Err(OkounkovError::EmptyInterval);
    }
    let u = |x: &Q| -> Q {
        if x <= a {
            Q::zero()
        } else if x >= b {
            q(1)
        } else {
            (x - a) / (b - a)
        }
    };
    let mut best = Q::zero();
    let mut cdf = Q::zero();
    for (x, w) in atoms {
        let ux = u(x);
        let before = (&cdf - &ux).abs();
        cdf += w;
        let after = (&cdf - &ux).abs();
        best = best.max(before).max(after);
    }
    Ok(best)
}

pub fn ks_uniformity(family: &SlopeFamily, n: u64, a: &Q, b: &Q) -> Result<Q, OkounkovError> {
    ks_to_uniform(&eta_n(family, n)?, a, b)
}

/// `∫ |F − U|` between atoms (sorted, mass 1) and the uniform law on
/// `[a, b]`.
pub fn w1_to_uniform(atoms: &[(Q, Q)], a: &Q, b: &Q) -> Result<Q, OkounkovError> {
    if b <= a {
        return Err(OkounkovError::EmptyInterval);
    }
    let len = b - a;
    // break points of both CDFs
    let mut xs: Vec<Q> = atoms.iter().map(|(x, _)| x.clone()).collect();
    xs.push(a.clone());
    xs.push(b.clone());
    xs.sort();
    xs.dedup();
    let u = |x: &Q| -> Q {
        if x <= a {
            Q::zero()
        } else if x >= b {
            q(1)
        } else {
            (x - a) / &len
        }
    };
    let mut total = Q::zero();
    let mut cdf = Q::zero();
    let mut k = 0;
    for w in xs.windows(2) {
        while k < atoms.len() && atoms[k].0 <= w[0] {
            cdf += &atoms[k].1;
            k += 1;
        }
        // on (w0, w1) the atomic CDF is constant and U is affine
        let (u0, u1) = (u(&w[0]) - &cdf, u(&w[1]) - &cdf);
        let h = &w[1] - &w[0];
        total += if u0.is_negative() == u1.is_negative() || u0.is_zero() || u1.is_zero() {
            (u0.abs() + u1.abs()) / q(2) * &h
        } else {
            // sign change: two triangles
            let (p, m) = (u0.abs(), u1.abs());
            (&p * &p + &m * &m) / (q(2) * (&p + &m)) * &h
        };
    }
    Ok(total)
}

/// `(s_0 + s_r)/(2 n d) − Σ s / (n d (r + 1))`.
pub fn sminmax_gap(family: &SlopeFamily, n: u64) -> Result<Q, OkounkovError> {
    let l = family.list(n)?;
    let nd = q(n as i64 * family.d);
    let ends = q(l[0] + l[l.len() - 1]) / (q(2) * &nd);
    let mean = q(l.iter().sum()) / (&nd * q(l.len() as i64));
    Ok(ends - mean)
}
