//! Sampling and comparison steps shared by the runners.

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{marginal_vector, CoefficientFrame, Field, Spectrum};
use crate::metrics::{default_bins, tv_1d, w1_1d_vs_gaussian_refined, w1_multi, EmpiricalMeasure1D, EmpiricalSample, QUANTILE_SUBNODES};
use crate::rng::{Rng, RngStream};
use crate::samplers::{haar_rows, isospectral, isospectral_entry_marginal};
use crate::stats::{chunked, chunked_range, Moments};
use crate::C64;

/// Draws per parallel chunk for per-draw costs of a millisecond or more.
pub(crate) const HEAVY_CHUNK: usize = 32;

/// Most frequent eigenvalue and the shifts `λ_k − c` of the others.
pub(crate) fn mode_split(spectrum: &Spectrum) -> (f64, Vec<f64>) {
    let sorted = spectrum.sorted();
    let (mut c, mut best, mut i) = (sorted[0], 0, 0);
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > best {
            best = j - i;
            c = sorted[i];
        }
        i = j;
    }
    let weights = spectrum.values().iter().filter(|&&l| l != c).map(|&l| l - c).collect();
    (c, weights)
}

enum MarginalPath {
    /// Principal block on the touched rows.
    Entries { rows: Vec<usize> },
    /// `A = cI + Σ_k w_k u_k u_k*` with `r = |w|` Haar vectors.
    LowRank { c: f64, weights: Vec<f64> },
    Full,
}

fn choose_path(spectrum: &Spectrum, frame: &CoefficientFrame) -> MarginalPath {
    if let Some(rows) = frame.entry_rows() {
        return MarginalPath::Entries { rows };
    }
    let (c, weights) = mode_split(spectrum);
    if weights.len() * frame.d().max(1) < spectrum.len() {
        MarginalPath::LowRank { c, weights }
    } else {
        MarginalPath::Full
    }
}

fn one_marginal(
    spectrum: &Spectrum,
    frame: &CoefficientFrame,
    field: Field,
    path: &MarginalPath,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    match path {
        MarginalPath::Entries { rows } => {
            let block = isospectral_entry_marginal(spectrum, rows, field, rng)?;
            let pos = |i: usize| rows.binary_search(&i).expect("row in block");
            Ok(frame
                .entries()
                .expect("entry frame")
                .iter()
                .map(|p| p.read(|r, c| block.get(pos(r), pos(c))))
                .collect())
        }
        MarginalPath::LowRank { c, weights } => {
            let n = spectrum.len();
            let vecs = haar_rows(n, weights.len(), field, rng)?;
            let us: Vec<DVector<C64>> = (0..weights.len()).map(|k| DVector::from_vec(vecs.vector(k))).collect();
            Ok(frame
                .matrices()
                .iter()
                .map(|b| {
                    let quad: f64 = us
                        .iter()
                        .zip(weights)
                        .map(|(u, w)| w * (u.adjoint() * (b.matrix() * u))[(0, 0)].re)
                        .sum();
                    c * b.trace() + quad
                })
                .collect())
        }
        MarginalPath::Full => {
            let a = isospectral(spectrum, field, rng)?;
            marginal_vector(&a, frame)
        }
    }
}

/// `m` draws of `X = (tr A B_i)_i` for `A = U Λ U*`, row-major `m × d`.
///
/// Entry frames read a principal block built from `|rows|` Haar rows; other
/// frames use `A = cI + Σ_k (λ_k − c) u_k u_k*` when few eigenvalues differ
/// from the most frequent one `c`, and a full Haar matrix otherwise.
pub fn sample_marginals(
    spectrum: &Spectrum,
    frame: &CoefficientFrame,
    field: Field,
    m: usize,
    stream: RngStream,
) -> Result<Vec<f64>> {
    if frame.d() == 0 {
        return Ok(Vec::new());
    }
    if frame.n() != spectrum.len() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.len(),
            found: frame.n(),
        });
    }
    let path = choose_path(spectrum, frame);
    let chunks = chunked(stream, m, HEAVY_CHUNK, |rng, count| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count * frame.d());
        for _ in 0..count {
            out.extend(one_marginal(spectrum, frame, field, &path, rng)?);
        }
        Ok(out)
    });
    Ok(chunks.into_iter().collect::<Result<Vec<_>>>()?.concat())
}

/// `m × d` standard Gaussian draws, row-major.
pub fn gaussian_sample(m: usize, d: usize, stream: RngStream) -> Vec<f64> {
    chunked(stream, m * d, 1 << 14, |rng, count| {
        (0..count).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>()
    })
    .concat()
}

/// `W₁` between a sample and `N(0, I_d)`: quantile coupling for `d = 1`,
/// optimal assignment against a fresh Gaussian sample of equal size from
/// `reference` otherwise.
pub fn w1_to_standard_gaussian(values: &[f64], m: usize, d: usize, reference: RngStream) -> Result<f64> {
    if d == 1 {
        let x = EmpiricalMeasure1D::new(values.to_vec())?;
        return w1_1d_vs_gaussian_refined(&x, 0.0, 1.0, QUANTILE_SUBNODES);
    }
    let x = EmpiricalSample::new(values.to_vec(), m, d)?;
    let y = EmpiricalSample::new(gaussian_sample(m, d, reference), m, d)?;
    w1_multi(&x, &y)
}

/// Histogram total variation to `N(0, 1)`.
pub fn tv_to_standard_gaussian(values: &[f64]) -> Result<f64> {
    let x = EmpiricalMeasure1D::new(values.to_vec())?;
    tv_1d(&x, 0.0, 1.0, default_bins(values.len()))
}

/// Distances of exactly Gaussian samples to `N(0, I_d)` by the same
/// estimators: the finite-sample bias and spread of `W₁` (and TV for
/// `d = 1`) at the given `(m, d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianControl {
    pub replicas: usize,
    pub w1_bias: f64,
    pub w1_sd: f64,
    pub tv_bias: Option<f64>,
    pub tv_sd: Option<f64>,
}

impl GaussianControl {
    pub fn run(m: usize, d: usize, replicas: usize, stream: RngStream) -> Result<Self> {
        if replicas < 2 {
            return Err(Error::Config("control_replicas must be >= 2".into()));
        }
        let rows = chunked_range(stream, replicas, 1, |_, r, _| -> Result<(f64, Option<f64>)> {
            let s = stream.child(r as u64);
            let g = gaussian_sample(m, d, s.fork("sample"));
            let w1 = w1_to_standard_gaussian(&g, m, d, s.fork("reference"))?;
            let tv = if d == 1 { Some(tv_to_standard_gaussian(&g)?) } else { None };
            Ok((w1, tv))
        });
        let mut w1 = Moments::new();
        let mut tv = Moments::new();
        for row in rows {
            let (a, b) = row?;
            w1.push(a);
            if let Some(b) = b {
                tv.push(b);
            }
        }
        let has_tv = tv.count() > 0;
        Ok(GaussianControl {
            replicas,
            w1_bias: w1.mean(),
            w1_sd: w1.variance().sqrt(),
            tv_bias: has_tv.then(|| tv.mean()),
            tv_sd: has_tv.then(|| tv.variance().sqrt()),
        })
    }

    /// `3 (bias + sd)` for `W₁`.
    pub fn w1_allowance(&self) -> f64 {
        3.0 * (self.w1_bias + self.w1_sd)
    }

    /// `3 (bias + sd)` for TV, when computed.
    pub fn tv_allowance(&self) -> Option<f64> {
        Some(3.0 * (self.tv_bias? + self.tv_sd?))
    }

    pub fn record(&self, report: &mut super::ExperimentReport) {
        report.measure("control_w1_bias", self.w1_bias);
        report.measure("control_w1_sd", self.w1_sd);
        if let (Some(b), Some(s)) = (self.tv_bias, self.tv_sd) {
            report.measure("control_tv_bias", b);
            report.measure("control_tv_sd", s);
        }
    }
}

/// Sample correlation of columns `i` and `j` of a row-major `m × d` sample.
pub(crate) fn correlation(values: &[f64], d: usize, i: usize, j: usize) -> f64 {
    let m = values.len() / d;
    let mean = |c: usize| (0..m).map(|r| values[r * d + c]).sum::<f64>() / m as f64;
    let (mi, mj) = (mean(i), mean(j));
    let (mut sij, mut sii, mut sjj) = (0.0, 0.0, 0.0);
    for r in 0..m {
        let a = values[r * d + i] - mi;
        let b = values[r * d + j] - mj;
        sij += a * b;
        sii += a * a;
        sjj += b * b;
    }
    sij / (sii * sjj).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{entry_frame, EntrySelector};
    use crate::experiments::tensor_frame;

    #[test]
    fn low_rank_path_matches_full_matrix() {
        // Same Haar vectors, both constructions.
        let spectrum = Spectrum::new(vec![2.0, 2.0, 2.0, -1.0, 0.5, 2.0, 2.0, 2.0]).unwrap();
        let frame = tensor_frame(8, 2).unwrap();
        let (c, weights) = mode_split(&spectrum);
        assert_eq!(c, 2.0);
        assert_eq!(weights, vec![-3.0, -1.5]);
        let stream = RngStream::new(3, 3);
        let x = one_marginal(&spectrum, &frame, Field::Complex, &MarginalPath::LowRank { c, weights: weights.clone() }, &mut stream.rng()).unwrap();
        let vecs = haar_rows(8, 2, Field::Complex, &mut stream.rng()).unwrap();
        let mut a = crate::CMatrix::identity(8, 8) * C64::new(c, 0.0);
        for (k, w) in weights.iter().enumerate() {
            let u = DVector::from_vec(vecs.vector(k));
            a += (&u * u.adjoint()) * C64::new(*w, 0.0);
        }
        let a = crate::linalg::HermitianMatrix::from_matrix(a, Field::Complex);
        let direct = marginal_vector(&a, &frame).unwrap();
        for (p, q) in x.iter().zip(&direct) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut e = a.eigenvalues();
        e.sort_by(f64::total_cmp);
        for (p, q) in e.iter().zip(spectrum.sorted()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn entry_path_and_full_path_agree_in_law() {
        let spectrum = Spectrum::pm_sqrt_n(6).unwrap();
        let picks: Vec<EntrySelector> = ["R 1 2", "I 2 4"].iter().map(|s| s.parse().unwrap()).collect();
        let (entries, _) = entry_frame(6, &picks, Field::Complex).unwrap();
        let plain = CoefficientFrame::new(entries.matrices().to_vec()).unwrap();
        let m = 20_000;
        let a = sample_marginals(&spectrum, &entries, Field::Complex, m, RngStream::new(1, 0)).unwrap();
        let b = sample_marginals(&spectrum, &plain, Field::Complex, m, RngStream::new(1, 1)).unwrap();
        // Second moments: ‖Λ‖²_HS/(n²−1) = 36/35 for each coordinate.
        for (vals, label) in [(&a, "entries"), (&b, "full")] {
            for j in 0..2 {
                let mut mom = Moments::new();
                vals.iter().skip(j).step_by(2).for_each(|x| mom.push(x * x));
                assert!(mom.z_score(36.0 / 35.0).abs() < 5.0, "{label} coordinate {j}");
            }
        }
    }

    #[test]
    fn control_is_deterministic_and_positive() {
        let a = GaussianControl::run(500, 1, 4, RngStream::new(2, 2)).unwrap();
        let b = GaussianControl::run(500, 1, 4, RngStream::new(2, 2)).unwrap();
        assert_eq!(a, b);
        assert!(a.w1_bias > 0.0 && a.tv_bias.unwrap() > 0.0);
        let c = GaussianControl::run(200, 2, 3, RngStream::new(2, 2)).unwrap();
        assert!(c.tv_bias.is_none() && c.w1_bias > 0.0);
        assert!(GaussianControl::run(10, 1, 1, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn correlation_of_identical_columns() {
        let v = vec![1.0, 1.0, 2.0, 2.0, 4.0, 4.0];
        assert!((correlation(&v, 2, 0, 1) - 1.0).abs() < 1e-12);
    }
}
