//! Numerical Lie-closure rank of the control generators in one sector.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{commutator, CMat, C64, I};
use crate::propagator::Cavity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub charge: usize,
    pub dim: usize,
    /// Real dimension of the generated Lie algebra.
    pub rank: usize,
    /// `d² − 1`, the dimension of `su(d)`.
    pub traceless_dim: usize,
    pub full: bool,
}

const TOL: f64 = 1e-10;

fn flatten(m: &CMat) -> Vec<f64> {
    m.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unflatten(v: &[f64], d: usize) -> CMat {
    CMat::from_iterator(d, d, v.chunks(2).map(|c| C64::new(c[0], c[1])))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal real basis grown by Gram-Schmidt.
struct RealSpan {
    basis: Vec<Vec<f64>>,
}

impl RealSpan {
    /// Adds `v` if it is independent of the span; returns the new unit
    /// vector when it was added.
    fn insert(&mut self, mut v: Vec<f64>) -> Option<Vec<f64>> {
        let n0 = dot(&v, &v).sqrt();
        if n0 < TOL {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= n0);
        for _ in 0..2 {
            for b in &self.basis {
                let c = dot(b, &v);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n < TOL {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= n);
        self.basis.push(v.clone());
        Some(v)
    }
}

/// Rank of the real Lie algebra generated by `iH_shg, iH_x, iH_y` on
/// sector `k` under repeated commutators.
pub fn controllability_check(cavity: &Cavity, k: usize) -> Result<ControllabilityReport> {
    let sec = cavity.sector(k)?;
    let d = sec.dim();
    let traceless_dim = d * d - 1;
    let mut span = RealSpan { basis: Vec::new() };
    let mut fresh: Vec<Vec<f64>> = [&sec.shg, &sec.x, &sec.y]
        .iter()
        .filter_map(|h| span.insert(flatten(&(*h * I))))
        .collect();
    while !fresh.is_empty() && span.basis.len() < d * d {
        let mut next = Vec::new();
        for f in &fresh {
            let fm = unflatten(f, d);
            let mut j = 0;
            while j < span.basis.len() {
                let b = unflatten(&span.basis[j], d);
                if let Some(v) = span.insert(flatten(&commutator(&fm, &b))) {
                    next.push(v);
                }
                j += 1;
            }
        }
        fresh = next;
    }
    let rank = span.basis.len();
    Ok(ControllabilityReport { charge: k, dim: d, rank, traceless_dim, full: rank >= traceless_dim })
}
