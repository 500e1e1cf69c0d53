//! Random generation: Haar unitaries and orthogonal frames, sphere vectors,
//! Gaussian ensembles, isospectral matrices, induced states, exchangeable
//! perturbations and invariant-ensemble eigenvalues.
//!
//! All samplers draw from a caller-supplied generator; build it from an
//! [`RngStream`](crate::RngStream) for reproducibility.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{partial_trace_second, Field, HermitianMatrix, Spectrum};
use crate::{CMatrix, C64};

/// Largest `n` for which a full `n × n` Haar matrix is materialized.
pub const FULL_HAAR_CAP: usize = 16384;

/// Largest `n s` accepted by [`induced_state`].
pub const INDUCED_STATE_CAP: usize = 1 << 22;

/// Frames with more vectors than this use Cholesky QR on dense products;
/// smaller ones use classical Gram–Schmidt with reorthogonalization.
const CGS_MAX_VECTORS: usize = 8;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard Gaussian scalar: `N(0,1)` for real, `N(0,½) + i N(0,½)` for complex.
pub fn gaussian_scalar<R: Rng + ?Sized>(field: Field, rng: &mut R) -> C64 {
    match field {
        Field::Real => C64::new(normal(rng), 0.0),
        Field::Complex => {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            C64::new(h * normal(rng), h * normal(rng))
        }
    }
}

/// Haar-distributed `n × n` unitary (complex) or orthogonal (real) matrix.
///
/// QR of a Gaussian matrix, with `Q` right-multiplied by the phases of
/// `diag(R)` so the factorization is the one with positive `r_ii`.
pub fn haar_matrix<R: Rng + ?Sized>(n: usize, field: Field, rng: &mut R) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::invalid("haar_matrix needs n >= 1"));
    }
    if n > FULL_HAAR_CAP {
        return Err(Error::CapExceeded {
            what: "full Haar dimension",
            value: n,
            cap: FULL_HAAR_CAP,
        });
    }
    // Fill column by column so the draw order matches `haar_rows`.
    let mut g = CMatrix::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            g[(r, c)] = gaussian_scalar(field, rng);
        }
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..n {
        let d = r[(c, c)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { C64::new(1.0, 0.0) };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    Ok(q)
}

/// `r` orthonormal vectors in `F^n`, distributed as the first `r` columns
/// (equivalently, rows) of a Haar matrix. Stored column-major as an `n × r`
/// split real/imaginary pair.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarFrame {
    field: Field,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl HaarFrame {
    pub fn n(&self) -> usize {
        self.re.nrows()
    }

    pub fn r(&self) -> usize {
        self.re.ncols()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// Component `i` of vector `k`.
    pub fn get(&self, i: usize, k: usize) -> C64 {
        C64::new(self.re[(i, k)], self.im[(i, k)])
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.n()).map(|i| self.get(i, k)).collect()
    }

    /// The `n × r` matrix with the vectors as columns.
    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.n(), self.r(), |i, k| self.get(i, k))
    }

    /// `‖V* V − I‖_max`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = gram(&self.re, &self.im, self.field);
        let mut worst: f64 = 0.0;
        for a in 0..self.r() {
            for b in 0..self.r() {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((C64::new(g.0[(a, b)], g.1[(a, b)]) - target).norm());
            }
        }
        worst
    }

    /// `Σ_k w_k |v_k(i)|²` for each `i`: the diagonal of `Σ_k w_k v_k v_k*`.
    pub fn weighted_row_norms(&self, weights: &[f64]) -> Vec<f64> {
        assert_eq!(weights.len(), self.r());
        let mut out = vec![0.0; self.n()];
        for (k, &w) in weights.iter().enumerate() {
            let re = self.re.column(k);
            let im = self.im.column(k);
            for (o, (x, y)) in out.iter_mut().zip(re.iter().zip(im.iter())) {
                *o += w * (x * x + y * y);
            }
        }
        out
    }

    /// `M_{ab} = Σ_i x_a(i) λ_i conj(x_b(i))` where `x_a` is the `a`-th row
    /// of the `r × n` matrix whose rows are the frame vectors.
    pub fn weighted_gram_rows(&self, weights: &[f64]) -> CMatrix {
        assert_eq!(weights.len(), self.n());
        let r = self.r();
        let mut out = CMatrix::zeros(r, r);
        for a in 0..r {
            let (ar, ai) = (self.re.column(a), self.im.column(a));
            for b in a..r {
                let (br, bi) = (self.re.column(b), self.im.column(b));
                let mut sr = 0.0;
                let mut si = 0.0;
                for i in 0..self.n() {
                    let w = weights[i];
                    // x_a(i) conj(x_b(i))
                    sr += w * (ar[i] * br[i] + ai[i] * bi[i]);
                    si += w * (ai[i] * br[i] - ar[i] * bi[i]);
                }
                out[(a, b)] = C64::new(sr, si);
                out[(b, a)] = C64::new(sr, -si);
            }
        }
        out
    }
}

/// `(Re, Im)` of `X* X` for `X = re + i im`.
fn gram(re: &DMatrix<f64>, im: &DMatrix<f64>, field: Field) -> (DMatrix<f64>, DMatrix<f64>) {
    let ret = re.transpose();
    match field {
        Field::Real => {
            let g = &ret * re;
            let z = DMatrix::zeros(g.nrows(), g.ncols());
            (g, z)
        }
        Field::Complex => {
            let imt = im.transpose();
            (&ret * re + &imt * im, &ret * im - &imt * re)
        }
    }
}

/// `r` Haar-distributed orthonormal vectors in `F^n` at cost `O(n r²)`.
///
/// Gram–Schmidt with positive normalizations applied to `r` i.i.d. Gaussian
/// vectors; large frames compute the same factorization as Cholesky QR
/// (two passes) on dense products.
pub fn haar_rows<R: Rng + ?Sized>(n: usize, r: usize, field: Field, rng: &mut R) -> Result<HaarFrame> {
    if n == 0 || r == 0 {
        return Err(Error::invalid("haar_rows needs n >= 1 and r >= 1"));
    }
    if r > n {
        return Err(Error::invalid(format!("haar_rows: r = {r} exceeds n = {n}")));
    }
    let mut re = DMatrix::<f64>::zeros(n, r);
    let mut im = DMatrix::<f64>::zeros(n, r);
    for k in 0..r {
        for i in 0..n {
            let z = gaussian_scalar(field, rng);
            re[(i, k)] = z.re;
            im[(i, k)] = z.im;
        }
    }
    if r <= CGS_MAX_VECTORS {
        cgs2(&mut re, &mut im, field)?;
    } else if cholesky_qr(&mut re, &mut im, field).is_err() || cholesky_qr(&mut re, &mut im, field).is_err() {
        return Err(Error::Numeric("Cholesky QR failed on a Gaussian frame".into()));
    }
    Ok(HaarFrame { field, re, im })
}

fn cgs2(re: &mut DMatrix<f64>, im: &mut DMatrix<f64>, field: Field) -> Result<()> {
    let n = re.nrows();
    for k in 0..re.ncols() {
        for _ in 0..2 {
            for j in 0..k {
                // c = <v_k, v_j> = Σ v_k conj(v_j)
                let mut cr = 0.0;
                let mut ci = 0.0;
                for i in 0..n {
                    let (a, b) = (re[(i, k)], im[(i, k)]);
                    let (c, d) = (re[(i, j)], im[(i, j)]);
                    cr += a * c + b * d;
                    ci += b * c - a * d;
                }
                if field == Field::Real {
                    ci = 0.0;
                }
                for i in 0..n {
                    let (c, d) = (re[(i, j)], im[(i, j)]);
                    re[(i, k)] -= cr * c - ci * d;
                    im[(i, k)] -= cr * d + ci * c;
                }
            }
        }
        let norm = (0..n)
            .map(|i| re[(i, k)].powi(2) + im[(i, k)].powi(2))
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numeric("degenerate Gaussian frame".into()));
        }
        for i in 0..n {
            re[(i, k)] /= norm;
            im[(i, k)] /= norm;
        }
    }
    Ok(())
}

/// One pass of `X <- X R⁻¹` with `R*R = X*X`, `R` upper triangular with
/// positive diagonal.
fn cholesky_qr(re: &mut DMatrix<f64>, im: &mut DMatrix<f64>, field: Field) -> Result<()> {
    let (gr, gi) = gram(re, im, field);
    let r = gr.ncols();
    let g = CMatrix::from_fn(r, r, |a, b| C64::new(gr[(a, b)], gi[(a, b)]));
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Numeric("Gram matrix not positive definite".into()))?;
    // X R⁻¹ = X L^{-*} with G = L L*.
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&CMatrix::identity(r, r))
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let rinv = linv.adjoint();
    let (rr, ri) = split(&rinv);
    match field {
        Field::Real => {
            *re = &*re * rr;
        }
        Field::Complex => {
            let new_re = &*re * &rr - &*im * &ri;
            let new_im = &*re * &ri + &*im * &rr;
            *re = new_re;
            *im = new_im;
        }
    }
    Ok(())
}

fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

/// Uniform unit vector in `F^n`.
pub fn sphere_uniform<R: Rng + ?Sized>(n: usize, field: Field, rng: &mut R) -> Result<Vec<C64>> {
    if n == 0 {
        return Err(Error::invalid("sphere_uniform needs n >= 1"));
    }
    loop {
        let mut v: Vec<C64> = (0..n).map(|_| gaussian_scalar(field, rng)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|z| *z /= norm);
            return Ok(v);
        }
    }
}

/// GUE (complex) or GOE (real, `√2` times a standard Gaussian in `M_n^sa(ℝ)`).
pub fn gaussian_ensemble<R: Rng + ?Sized>(n: usize, field: Field, rng: &mut R) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::invalid("gaussian_ensemble needs n >= 1"));
    }
    let diag_sd = match field {
        Field::Real => std::f64::consts::SQRT_2,
        Field::Complex => 1.0,
    };
    let mut m = CMatrix::zeros(n, n);
    for r in 0..n {
        m[(r, r)] = C64::new(diag_sd * normal(rng), 0.0);
        for c in r + 1..n {
            let z = match field {
                Field::Real => C64::new(normal(rng), 0.0),
                Field::Complex => gaussian_scalar(Field::Complex, rng),
            };
            m[(r, c)] = z;
            m[(c, r)] = z.conj();
        }
    }
    Ok(HermitianMatrix::from_matrix(m, field))
}

/// `U Λ U*` with `U` Haar on `U(n)` or `O(n)`.
pub fn isospectral<R: Rng + ?Sized>(spectrum: &Spectrum, field: Field, rng: &mut R) -> Result<HermitianMatrix> {
    let u = haar_matrix(spectrum.len(), field, rng)?;
    Ok(conjugate_diagonal(&u, spectrum.values(), field))
}

/// `U diag(λ) U*`.
pub fn conjugate_diagonal(u: &CMatrix, lambda: &[f64], field: Field) -> HermitianMatrix {
    let mut ul = u.clone();
    for (c, &l) in lambda.iter().enumerate() {
        ul.column_mut(c).scale_mut(l);
    }
    HermitianMatrix::from_matrix(ul * u.adjoint(), field)
}

/// The principal block of `U Λ U*` on `rows`, from `|rows|` rows of `U`:
/// `a_jk = Σ_i u_ji λ_i conj(u_ki)`. Block index `a` corresponds to `rows[a]`.
pub fn isospectral_entry_marginal<R: Rng + ?Sized>(
    spectrum: &Spectrum,
    rows: &[usize],
    field: Field,
    rng: &mut R,
) -> Result<HermitianMatrix> {
    let n = spectrum.len();
    if let Some(&bad) = rows.iter().find(|&&j| j >= n) {
        return Err(Error::invalid(format!("row index {bad} out of range for n={n}")));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != rows.len() {
        return Err(Error::invalid("isospectral_entry_marginal: repeated row index"));
    }
    let frame = haar_rows(n, rows.len(), field, rng)?;
    Ok(HermitianMatrix::from_matrix(
        frame.weighted_gram_rows(spectrum.values()),
        field,
    ))
}

/// Diagonal of `U Λ U*` without forming `U`.
///
/// With `c` the most frequent eigenvalue, `A = cI + Σ_k (λ_k − c) u_k u_k*`
/// over the remaining eigenvalues, so only that many Haar vectors are drawn.
pub fn isospectral_diagonal<R: Rng + ?Sized>(spectrum: &Spectrum, field: Field, rng: &mut R) -> Result<Vec<f64>> {
    let n = spectrum.len();
    let sorted = spectrum.sorted();
    let mut c = sorted[0];
    let mut best = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > best {
            best = j - i;
            c = sorted[i];
        }
        i = j;
    }
    let weights: Vec<f64> = spectrum
        .values()
        .iter()
        .filter(|&&l| l != c)
        .map(|&l| l - c)
        .collect();
    if weights.is_empty() {
        return Ok(vec![c; n]);
    }
    let frame = haar_rows(n, weights.len(), field, rng)?;
    Ok(frame
        .weighted_row_norms(&weights)
        .into_iter()
        .map(|v| c + v)
        .collect())
}

/// `ρ = tr₂(Z Z*)` for `Z` uniform on the unit sphere of `ℂ^n ⊗ ℂ^s`.
pub fn induced_state<R: Rng + ?Sized>(n: usize, s: usize, rng: &mut R) -> Result<HermitianMatrix> {
    if n == 0 || s == 0 {
        return Err(Error::invalid("induced_state needs n, s >= 1"));
    }
    let ns = n.checked_mul(s).unwrap_or(usize::MAX);
    if ns > INDUCED_STATE_CAP {
        return Err(Error::CapExceeded {
            what: "induced state n*s",
            value: ns,
            cap: INDUCED_STATE_CAP,
        });
    }
    let z = sphere_uniform(ns, Field::Complex, rng)?;
    // tr₂(ZZ*)_{ab} = Σ_c z_{(a,c)} conj(z_{(b,c)}): a Gram product of the
    // n × s reshaping, so the ns × ns outer product is never formed.
    let zm = CMatrix::from_fn(n, s, |a, c| z[a * s + c]);
    let rho = &zm * zm.adjoint();
    if ns <= 64 {
        let outer = CMatrix::from_fn(ns, ns, |p, q| z[p] * z[q].conj());
        debug_assert!((partial_trace_second(&outer, n, s)?.matrix() - &rho).norm() < 1e-12);
    }
    Ok(HermitianMatrix::from_matrix(rho, Field::Complex))
}

/// The rotation `R_ε` restricted to its nontrivial `2 × 2` block.
pub fn rotation_block(epsilon: f64) -> [[f64; 2]; 2] {
    let c = (1.0 - epsilon * epsilon).sqrt();
    [[c, epsilon], [-epsilon, c]]
}

/// `V R_ε V* = I + K (R₂ − I₂) K*` with `K` the first two columns of a Haar
/// `V`; only `K` is sampled.
pub fn small_rotation<R: Rng + ?Sized>(n: usize, epsilon: f64, field: Field, rng: &mut R) -> Result<CMatrix> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if n < 2 {
        return Err(Error::invalid("exchangeable perturbation needs n >= 2"));
    }
    let k = haar_rows(n, 2, field, rng)?.to_matrix();
    Ok(rotation_from_frame(&k, epsilon))
}

/// `I + K (R₂ − I₂) K*` for an `n × 2` orthonormal `K`.
pub fn rotation_from_frame(k: &CMatrix, epsilon: f64) -> CMatrix {
    let r = rotation_block(epsilon);
    let m = CMatrix::from_fn(2, 2, |a, b| {
        C64::new(r[a][b] - if a == b { 1.0 } else { 0.0 }, 0.0)
    });
    let n = k.nrows();
    CMatrix::identity(n, n) + k * m * k.adjoint()
}

/// `U V R_ε V*` with fresh Haar `V` of the field of `U`.
pub fn exchangeable_perturbation<R: Rng + ?Sized>(
    u: &CMatrix,
    epsilon: f64,
    field: Field,
    rng: &mut R,
) -> Result<CMatrix> {
    if !u.is_square() {
        return Err(Error::invalid("exchangeable_perturbation needs a square U"));
    }
    Ok(u * small_rotation(u.nrows(), epsilon, field, rng)?)
}

/// Polynomial potential `V(x) = Σ_k c_k x^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Potential {
    pub coefficients: Vec<f64>,
}

impl Potential {
    /// `V(x) = x²`: the GUE scaled by `1/√(2n)`.
    pub fn quadratic() -> Self {
        Potential {
            coefficients: vec![0.0, 0.0, 1.0],
        }
    }

    pub fn is_quadratic(&self) -> bool {
        let c = &self.coefficients;
        c.len() >= 3 && c[0] == 0.0 && c[1] == 0.0 && c[2] == 1.0 && c[3..].iter().all(|&v| v == 0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }
}

impl Default for Potential {
    fn default() -> Self {
        Potential::quadratic()
    }
}

/// Eigenvalue law `∝ Π_{i<j} |λ_i − λ_j|² exp(−n Σ V(λ_i))`, sampled by
/// componentwise random-walk Metropolis. One step updates one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvariantEnsembleSpec {
    pub potential: Potential,
    pub n: usize,
    /// Total single-coordinate steps for one draw, including burn-in.
    pub mcmc_steps: usize,
    pub mcmc_step_size: f64,
    pub burn_in: usize,
}

impl Default for InvariantEnsembleSpec {
    fn default() -> Self {
        InvariantEnsembleSpec::new(8, Potential::quadratic())
    }
}

impl InvariantEnsembleSpec {
    /// Defaults: step `1/√n`, burn-in `10⁴ n`, then `10 n` more steps.
    pub fn new(n: usize, potential: Potential) -> Self {
        let burn_in = 10_000 * n;
        InvariantEnsembleSpec {
            potential,
            n,
            mcmc_steps: burn_in + 10 * n,
            mcmc_step_size: 1.0 / (n.max(1) as f64).sqrt(),
            burn_in,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("invariant ensemble needs n >= 1"));
        }
        if self.mcmc_steps <= self.burn_in {
            return Err(Error::invalid("mcmc_steps must exceed burn_in"));
        }
        if !(self.mcmc_step_size > 0.0 && self.mcmc_step_size.is_finite()) {
            return Err(Error::invalid("mcmc_step_size must be positive"));
        }
        if self.potential.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("potential coefficients must be finite"));
        }
        Ok(())
    }
}

/// A Metropolis chain on the eigenvalue vector.
pub struct LogGasChain<'a> {
    spec: &'a InvariantEnsembleSpec,
    state: Vec<f64>,
    cursor: usize,
    accepted: u64,
    proposed: u64,
}

impl<'a> LogGasChain<'a> {
    /// Starts from `n` evenly spaced points in `[-1, 1]`.
    pub fn new(spec: &'a InvariantEnsembleSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n;
        let state = (0..n)
            .map(|i| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 })
            .collect();
        Ok(LogGasChain {
            spec,
            state,
            cursor: 0,
            accepted: 0,
            proposed: 0,
        })
    }

    /// Systematic-scan single-coordinate updates.
    pub fn step<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) -> Result<()> {
        let n = self.spec.n;
        let nf = n as f64;
        for _ in 0..steps {
            let i = self.cursor;
            self.cursor = (self.cursor + 1) % n;
            let old = self.state[i];
            let new = old + self.spec.mcmc_step_size * normal(rng);
            let dv = self.spec.potential.value(new) - self.spec.potential.value(old);
            if !dv.is_finite() {
                return Err(Error::Numeric(format!("potential not finite near {new}")));
            }
            let mut delta = -nf * dv;
            for (j, &x) in self.state.iter().enumerate() {
                if j != i {
                    delta += 2.0 * ((new - x).abs().ln() - (old - x).abs().ln());
                }
            }
            self.proposed += 1;
            let u: f64 = rng.random();
            if u.ln() < delta {
                self.state[i] = new;
                self.accepted += 1;
            }
        }
        Ok(())
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One eigenvalue draw: the chain state after `mcmc_steps` steps.
pub fn invariant_ensemble_eigs<R: Rng + ?Sized>(spec: &InvariantEnsembleSpec, rng: &mut R) -> Result<Spectrum> {
    let mut chain = LogGasChain::new(spec)?;
    chain.step(spec.mcmc_steps, rng)?;
    Spectrum::new(chain.state().to_vec())
}

/// `draws` eigenvalue vectors from one chain: burn-in, then one draw every
/// `thin` steps.
pub fn invariant_ensemble_chain<R: Rng + ?Sized>(
    spec: &InvariantEnsembleSpec,
    draws: usize,
    thin: usize,
    rng: &mut R,
) -> Result<Vec<Spectrum>> {
    let mut chain = LogGasChain::new(spec)?;
    chain.step(spec.burn_in, rng)?;
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        chain.step(thin.max(1), rng)?;
        out.push(Spectrum::new(chain.state().to_vec())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Moments;
    use crate::RngStream;

    fn rng(id: u64) -> crate::rng::Rng {
        RngStream::new(11, id).rng()
    }

    fn unitarity_defect(u: &CMatrix) -> f64 {
        let n = u.nrows();
        (u * u.adjoint() - CMatrix::identity(n, n)).norm()
    }

    #[test]
    fn haar_matrix_is_unitary() {
        let mut g = rng(1);
        for n in [1, 2, 5, 17] {
            for field in [Field::Real, Field::Complex] {
                let u = haar_matrix(n, field, &mut g).unwrap();
                assert!(unitarity_defect(&u) < 1e-10);
                if field == Field::Real {
                    assert!(u.iter().all(|z| z.im == 0.0));
                }
            }
        }
        assert!(haar_matrix(0, Field::Complex, &mut g).is_err());
        assert!(matches!(
            haar_matrix(FULL_HAAR_CAP + 1, Field::Real, &mut g),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn haar_phase_is_uniform_in_dimension_one() {
        let mut g = rng(2);
        let mut m = Moments::default();
        let mut m2 = Moments::default();
        for _ in 0..200_000 {
            let u = haar_matrix(1, Field::Complex, &mut g).unwrap()[(0, 0)];
            let t = (u.arg() + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
            m.push(t - 0.5);
            m2.push((2.0 * std::f64::consts::PI * t).cos());
        }
        assert!(m.z_score(0.0).abs() < 4.0);
        assert!(m2.z_score(0.0).abs() < 4.0);
    }

    #[test]
    fn haar_first_entry_second_moment() {
        let mut g = rng(3);
        let mut m = Moments::default();
        for _ in 0..100_000 {
            let u = haar_matrix(5, Field::Complex, &mut g).unwrap();
            m.push(u[(0, 0)].norm_sqr());
        }
        assert!(m.z_score(0.2).abs() < 4.0, "z = {}", m.z_score(0.2));
    }

    #[test]
    fn haar_rows_orthonormal_both_paths() {
        let mut g = rng(4);
        for (n, r) in [(4, 1), (4, 4), (50, 3), (64, 20), (300, 150), (40, 40)] {
            for field in [Field::Real, Field::Complex] {
                let f = haar_rows(n, r, field, &mut g).unwrap();
                assert!(f.orthonormality_defect() < 1e-10, "n={n} r={r} {field:?}");
            }
        }
        assert!(haar_rows(3, 4, Field::Complex, &mut g).is_err());
    }

    #[test]
    fn cholesky_path_matches_gram_schmidt() {
        // Same Gaussian input, both factorizations: identical Q up to rounding.
        let mut g = rng(5);
        let (n, r) = (30, 12);
        let mut re = DMatrix::from_fn(n, r, |_, _| normal(&mut g));
        let mut im = DMatrix::from_fn(n, r, |_, _| normal(&mut g));
        let (mut re2, mut im2) = (re.clone(), im.clone());
        cgs2(&mut re, &mut im, Field::Complex).unwrap();
        cholesky_qr(&mut re2, &mut im2, Field::Complex).unwrap();
        cholesky_qr(&mut re2, &mut im2, Field::Complex).unwrap();
        assert!((&re - &re2).amax() < 1e-10);
        assert!((&im - &im2).amax() < 1e-10);
    }

    #[test]
    fn haar_rows_sphere_moment() {
        let mut g = rng(6);
        let n = 7;
        let mut m = Moments::default();
        for _ in 0..100_000 {
            let f = haar_rows(n, 1, Field::Complex, &mut g).unwrap();
            m.push(f.get(0, 0).norm_sqr());
        }
        assert!(m.z_score(1.0 / n as f64).abs() < 4.0);
    }

    #[test]
    fn haar_rows_joint_moment_matches_full_matrix() {
        // E |u_11|² |u_12|² from two rows vs from full matrices.
        let n = 4;
        let mut a = Moments::default();
        let mut b = Moments::default();
        let mut g = rng(7);
        for _ in 0..100_000 {
            let f = haar_rows(n, 2, Field::Complex, &mut g).unwrap();
            a.push(f.get(0, 0).norm_sqr() * f.get(0, 1).norm_sqr());
            let u = haar_matrix(n, Field::Complex, &mut g).unwrap();
            b.push(u[(0, 0)].norm_sqr() * u[(0, 1)].norm_sqr());
        }
        let se = (a.se().powi(2) + b.se().powi(2)).sqrt();
        assert!((a.mean() - b.mean()).abs() < 5.0 * se);
        // Both equal E|z1|²|z2|² = 1/(n(n+1)).
        assert!(a.z_score(1.0 / 20.0).abs() < 5.0);
    }

    #[test]
    fn sphere_moments() {
        let mut g = rng(8);
        let n = 4;
        let (mut m2, mut m4, mut cross_re, mut cross_im) =
            (Moments::default(), Moments::default(), Moments::default(), Moments::default());
        for _ in 0..200_000 {
            let z = sphere_uniform(n, Field::Complex, &mut g).unwrap();
            let norm: f64 = z.iter().map(|v| v.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            m2.push(z[0].norm_sqr());
            m4.push(z[0].norm_sqr().powi(2));
            let c = z[0] * z[1].conj();
            cross_re.push(c.re);
            cross_im.push(c.im);
        }
        assert!(m2.z_score(0.25).abs() < 4.0);
        assert!(m4.z_score(2.0 / 20.0).abs() < 4.0);
        assert!(cross_re.z_score(0.0).abs() < 4.0);
        assert!(cross_im.z_score(0.0).abs() < 4.0);
    }

    #[test]
    fn gaussian_ensemble_variances() {
        let mut g = rng(9);
        let (mut d, mut off, mut goe) = (Moments::default(), Moments::default(), Moments::default());
        for _ in 0..100_000 {
            let h = gaussian_ensemble(3, Field::Complex, &mut g).unwrap();
            d.push(h.get(0, 0).re.powi(2));
            off.push(h.get(0, 1).re.powi(2));
            let o = gaussian_ensemble(3, Field::Real, &mut g).unwrap();
            goe.push(o.get(0, 0).re.powi(2));
        }
        assert!(d.z_score(1.0).abs() < 4.0);
        assert!(off.z_score(0.5).abs() < 4.0);
        assert!(goe.z_score(2.0).abs() < 4.0);
    }

    #[test]
    fn isospectral_preserves_spectrum() {
        let mut g = rng(10);
        let s = Spectrum::new(vec![3.0, -1.0, 0.5, 0.5, 2.0, -4.0, 1.0, 0.0]).unwrap();
        for field in [Field::Real, Field::Complex] {
            let a = isospectral(&s, field, &mut g).unwrap();
            let eig = a.eigenvalues();
            for (x, y) in eig.iter().zip(s.sorted()) {
                assert!((x - y).abs() < 1e-9 * s.op_norm());
            }
        }
        let c = Spectrum::new(vec![2.5; 5]).unwrap();
        let a = isospectral(&c, Field::Complex, &mut g).unwrap();
        assert!((a.matrix() - CMatrix::identity(5, 5) * C64::new(2.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn isospectral_mean_is_scalar() {
        let mut g = rng(11);
        let s = Spectrum::new(vec![1.0, 2.0, -0.5]).unwrap();
        let target = s.trace() / 3.0;
        let mut m: Vec<Moments> = vec![Moments::default(); 9];
        for _ in 0..50_000 {
            let a = isospectral(&s, Field::Complex, &mut g).unwrap();
            for r in 0..3 {
                for c in 0..3 {
                    m[r * 3 + c].push(a.get(r, c).re);
                }
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                let t = if r == c { target } else { 0.0 };
                assert!(m[r * 3 + c].z_score(t).abs() < 4.5);
            }
        }
    }

    #[test]
    fn entry_marginal_full_block_has_spectrum() {
        let mut g = rng(12);
        let s = Spectrum::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let a = isospectral_entry_marginal(&s, &[0, 1, 2, 3], Field::Complex, &mut g).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(s.sorted()) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(isospectral_entry_marginal(&s, &[0, 0], Field::Complex, &mut g).is_err());
    }

    #[test]
    fn entry_marginal_mean_and_variance() {
        let mut g = rng(13);
        let s = Spectrum::new(vec![1.0, 2.0, 0.0, -0.5, 4.0]).unwrap();
        let mut m = Moments::default();
        for _ in 0..100_000 {
            m.push(isospectral_entry_marginal(&s, &[0], Field::Complex, &mut g).unwrap().get(0, 0).re);
        }
        assert!(m.z_score(s.trace() / 5.0).abs() < 4.0);

        let n = 1024;
        let s = Spectrum::pm_sqrt_n(n).unwrap();
        let scale = ((n * n - 1) as f64) / s.hs_norm_sq();
        let mut v = Moments::default();
        for _ in 0..20_000 {
            let b = isospectral_entry_marginal(&s, &[0, 1], Field::Complex, &mut g).unwrap();
            v.push(scale * 2.0 * b.get(0, 1).re.powi(2));
        }
        assert!(v.z_score(1.0).abs() < 5.0, "z = {}", v.z_score(1.0));
    }

    #[test]
    fn diagonal_fast_path_matches_full() {
        let s = Spectrum::new(vec![2.0, 2.0, 2.0, -1.0, 0.5]).unwrap();
        let mut g = rng(14);
        let mut a = Moments::default();
        let mut b = Moments::default();
        for _ in 0..50_000 {
            let d = isospectral_diagonal(&s, Field::Complex, &mut g).unwrap();
            assert!((d.iter().sum::<f64>() - s.trace()).abs() < 1e-10);
            a.push(d[0] * d[0]);
            let full = isospectral(&s, Field::Complex, &mut g).unwrap();
            b.push(full.get(0, 0).re.powi(2));
        }
        let se = (a.se().powi(2) + b.se().powi(2)).sqrt();
        assert!((a.mean() - b.mean()).abs() < 5.0 * se);
        let c = Spectrum::new(vec![1.5; 4]).unwrap();
        assert_eq!(isospectral_diagonal(&c, Field::Real, &mut g).unwrap(), vec![1.5; 4]);
    }

    #[test]
    fn induced_state_properties() {
        let mut g = rng(15);
        let rho = induced_state(3, 1, &mut g).unwrap();
        let eig = rho.eigenvalues();
        assert!((eig[2] - 1.0).abs() < 1e-12 && eig[0].abs() < 1e-12);
        let mut m = [Moments::default(), Moments::default(), Moments::default()];
        for _ in 0..50_000 {
            let rho = induced_state(2, 2, &mut g).unwrap();
            assert!((rho.trace() - 1.0).abs() < 1e-12);
            assert!(rho.eigenvalues()[0] > -1e-12);
            m[0].push(rho.get(0, 0).re);
            m[1].push(rho.get(0, 1).re);
            m[2].push(rho.get(0, 1).im);
        }
        assert!(m[0].z_score(0.5).abs() < 4.0);
        assert!(m[1].z_score(0.0).abs() < 4.0);
        assert!(m[2].z_score(0.0).abs() < 4.0);
        assert!(induced_state(1 << 12, 1 << 11, &mut g).is_err());
    }

    #[test]
    fn exchangeable_perturbation_small_and_unitary() {
        let mut g = rng(16);
        let u = haar_matrix(6, Field::Complex, &mut g).unwrap();
        let eps = 1e-3;
        let w = exchangeable_perturbation(&u, eps, Field::Complex, &mut g).unwrap();
        assert!(unitarity_defect(&w) < 1e-10);
        assert!((&w - &u).norm() <= 3.0 * eps);
        assert!(exchangeable_perturbation(&u, 1.0, Field::Complex, &mut g).is_err());
        assert!(exchangeable_perturbation(&u, 0.0, Field::Complex, &mut g).is_err());
    }

    #[test]
    fn potential_polynomial() {
        let p = Potential {
            coefficients: vec![1.0, -2.0, 0.0, 0.5],
        };
        assert_eq!(p.value(2.0), 1.0 - 4.0 + 4.0);
        assert_eq!(p.derivative(2.0), -2.0 + 1.5 * 4.0);
        assert!(Potential::quadratic().is_quadratic());
        assert!(!p.is_quadratic());
    }

    #[test]
    fn invariant_ensemble_one_dimensional_gaussian() {
        let spec = InvariantEnsembleSpec {
            potential: Potential::quadratic(),
            n: 1,
            mcmc_steps: 1001,
            mcmc_step_size: 1.0,
            burn_in: 1000,
        };
        let mut g = rng(17);
        let draws = invariant_ensemble_chain(&spec, 50_000, 5, &mut g).unwrap();
        let mut m = Moments::default();
        for d in &draws {
            m.push(d.values()[0].powi(2));
        }
        // Autocorrelated draws: allow a wider band than i.i.d.
        assert!((m.mean() - 0.5).abs() < 0.03, "mean {}", m.mean());
        let bad = InvariantEnsembleSpec { mcmc_steps: 10, burn_in: 10, ..spec };
        assert!(invariant_ensemble_eigs(&bad, &mut g).is_err());
    }
}
