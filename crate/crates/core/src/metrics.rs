//! Distances between empirical samples and reference laws.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::rng::RngStream;

/// Default cap on the sample size accepted by [`w1_multi`].
pub const ASSIGNMENT_CAP: usize = 4096;

/// Sub-nodes per atom interval in quantile-coupling integrals.
pub const QUANTILE_SUBNODES: usize = 64;

/// Uniform empirical measure on sorted real atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure1D {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure1D {
    pub fn new(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("empirical measure needs at least one atom"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("empirical measure atoms must be finite"));
        }
        atoms.sort_by(f64::total_cmp);
        Ok(EmpiricalMeasure1D { atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `m × d` sample stored row-major, with the stream that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    data: Vec<f64>,
    m: usize,
    d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<RngStream>,
}

impl EmpiricalSample {
    pub fn new(data: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("empirical sample needs m >= 1"));
        }
        if data.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("empirical sample entries must be finite"));
        }
        Ok(EmpiricalSample {
            data,
            m,
            d,
            provenance: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged sample rows"));
        }
        Self::new(rows.concat(), rows.len(), d)
    }

    pub fn with_provenance(mut self, stream: RngStream) -> Self {
        self.provenance = Some(stream);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.data[i * self.d + j]).collect()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Standard normal quantile.
pub fn normal_quantile(u: f64) -> f64 {
    standard_normal().inverse_cdf(u)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `W₁` between equal-size empirical measures: sorted matching.
pub fn w1_1d(x: &EmpiricalMeasure1D, y: &EmpiricalMeasure1D) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let s: f64 = x.atoms.iter().zip(&y.atoms).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / x.len() as f64)
}

/// `∫₀¹ |F_x⁻¹(u) − q(u)| du` with `sub` midpoint nodes in each atom interval.
pub fn w1_quantile_coupling(x: &EmpiricalMeasure1D, sub: usize, q: impl Fn(f64) -> f64) -> f64 {
    let m = x.len();
    let sub = sub.max(1);
    let h = 1.0 / (m * sub) as f64;
    let mut total = 0.0;
    for (i, &a) in x.atoms.iter().enumerate() {
        for s in 0..sub {
            let u = ((i * sub + s) as f64 + 0.5) * h;
            total += (a - q(u)).abs();
        }
    }
    total * h
}

/// Quantile-coupling `W₁` to `N(mean, sd²)` by the midpoint rule at
/// `u_i = (i − ½)/m`.
pub fn w1_1d_vs_gaussian(x: &EmpiricalMeasure1D, mean: f64, sd: f64) -> Result<f64> {
    w1_1d_vs_gaussian_refined(x, mean, sd, 1)
}

/// As [`w1_1d_vs_gaussian`] with `sub` midpoint nodes per atom interval,
/// which resolves the Gaussian tails for small `m`.
pub fn w1_1d_vs_gaussian_refined(x: &EmpiricalMeasure1D, mean: f64, sd: f64, sub: usize) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::invalid(format!("sd must be positive, got {sd}")));
    }
    let n = standard_normal();
    Ok(w1_quantile_coupling(x, sub, |u| mean + sd * n.inverse_cdf(u)))
}

/// Exact `W₁` between equal-size samples in `ℝ^d` with Euclidean cost,
/// via a shortest-augmenting-path assignment.
pub fn w1_multi(x: &EmpiricalSample, y: &EmpiricalSample) -> Result<f64> {
    w1_multi_capped(x, y, ASSIGNMENT_CAP)
}

pub fn w1_multi_capped(x: &EmpiricalSample, y: &EmpiricalSample, cap: usize) -> Result<f64> {
    if x.d != y.d {
        return Err(Error::DimensionMismatch {
            expected: x.d,
            found: y.d,
        });
    }
    if x.m != y.m {
        return Err(Error::DimensionMismatch {
            expected: x.m,
            found: y.m,
        });
    }
    if x.m > cap {
        return Err(Error::CapExceeded {
            what: "assignment sample size",
            value: x.m,
            cap,
        });
    }
    let m = x.m;
    let mut cost = vec![0.0; m * m];
    for i in 0..m {
        let xi = x.row(i);
        for j in 0..m {
            let yj = y.row(j);
            cost[i * m + j] = xi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    }
    let assignment = solve_assignment(&cost, m);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    Ok(total / m as f64)
}

/// Minimum-cost perfect matching on a dense `m × m` cost matrix; returns the
/// column assigned to each row. Dijkstra-style augmentation with row and
/// column potentials, `O(m³)` worst case.
pub fn solve_assignment(cost: &[f64], m: usize) -> Vec<usize> {
    assert_eq!(cost.len(), m * m);
    // 1-based arrays with a virtual column 0, as in the classical scheme.
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * m..i0 * m];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; m];
    for j in 1..=m {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Histogram estimate of `d_TV(x, N(mean, sd²))` on `bins` equal-width cells
/// spanning `mean ± 6 sd` plus the two outer tails.
pub fn tv_1d(x: &EmpiricalMeasure1D, mean: f64, sd: f64, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::invalid("tv_1d needs at least 2 bins"));
    }
    if !(sd > 0.0) {
        return Err(Error::invalid(format!("sd must be positive, got {sd}")));
    }
    let lo = -6.0;
    let width = 12.0 / bins as f64;
    let mut counts = vec![0usize; bins + 2];
    for &a in &x.atoms {
        let z = (a - mean) / sd;
        let cell = if z < lo {
            0
        } else if z >= -lo {
            bins + 1
        } else {
            1 + (((z - lo) / width) as usize).min(bins - 1)
        };
        counts[cell] += 1;
    }
    let m = x.len() as f64;
    let mut total = 0.0;
    for (cell, &c) in counts.iter().enumerate() {
        let (a, b) = match cell {
            0 => (f64::NEG_INFINITY, lo),
            c if c == bins + 1 => (-lo, f64::INFINITY),
            c => (lo + (c - 1) as f64 * width, lo + c as f64 * width),
        };
        let p = normal_cdf(b) - normal_cdf(a);
        total += (c as f64 / m - p).abs();
    }
    Ok((0.5 * total).clamp(0.0, 1.0))
}

/// `⌈m^{1/3}⌉`, at least 2.
pub fn default_bins(m: usize) -> usize {
    ((m as f64).cbrt().ceil() as usize).max(2)
}

/// Semicircle density `(1/2π)√(4 − t²)` on `[−2, 2]`.
pub fn semicircle_density(t: f64) -> f64 {
    if t.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - t * t).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// `F(t) = ½ + t√(4−t²)/(4π) + arcsin(t/2)/π`.
pub fn semicircle_cdf(t: f64) -> Result<f64> {
    if !(-2.0..=2.0).contains(&t) {
        return Err(Error::invalid(format!("semicircle cdf argument {t} outside [-2,2]")));
    }
    let pi = std::f64::consts::PI;
    let v = 0.5 + t * (4.0 - t * t).max(0.0).sqrt() / (4.0 * pi) + (t / 2.0).asin() / pi;
    Ok(v.clamp(0.0, 1.0))
}

/// Inverse of [`semicircle_cdf`] by bisection to `1e-12`.
pub fn semicircle_quantile(u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("semicircle quantile level {u} outside [0,1]")));
    }
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if semicircle_cdf(mid)? < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which way [`semicircle_cdf_quantile`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Cdf,
    Quantile,
}

pub fn semicircle_cdf_quantile(x: f64, direction: Direction) -> Result<f64> {
    match direction {
        Direction::Cdf => semicircle_cdf(x),
        Direction::Quantile => semicircle_quantile(x),
    }
}

/// `W₁(eigs, ρ_sc)` by quantile coupling with 64 sub-nodes per atom.
pub fn w1_spectral_semicircle(eigs: &EmpiricalMeasure1D) -> f64 {
    w1_quantile_coupling(eigs, QUANTILE_SUBNODES, |u| {
        semicircle_quantile(u).expect("midpoints lie in (0,1)")
    })
}

/// Empirical spectral measure of `scale · A`.
pub fn spectral_measure(a: &HermitianMatrix, scale: f64) -> Result<EmpiricalMeasure1D> {
    EmpiricalMeasure1D::new(a.eigenvalues().into_iter().map(|v| scale * v).collect())
}
