//! Closed-form expectations over the unitary group and the complex unit
//! sphere. Indices are 0-based.
//!
//! Notation: `⟨x, y⟩ = Σ x_i conj(y_i)`, `Z` uniform on the unit sphere of
//! `ℂ^n`, `U` Haar on `U(n)`, `A = U Λ U*`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{trace_product, HermitianMatrix, Spectrum, STRUCT_TOL};
use crate::{CMatrix, C64};

fn need_n_ge_2(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("oracle needs n >= 2, got {n}")));
    }
    Ok(())
}

fn cubic(n: usize) -> f64 {
    let n = n as f64;
    (n - 1.0) * n * (n + 1.0)
}

/// `E[u_ij u_kl conj(u_il) conj(u_kj)]`.
pub fn unitary_degree4_moment(i: usize, j: usize, k: usize, l: usize, n: usize) -> Result<f64> {
    need_n_ge_2(n)?;
    if [i, j, k, l].iter().any(|&x| x >= n) {
        return Err(Error::invalid("index out of range"));
    }
    let d_ik = (i == k) as u8 as f64;
    let d_jl = (j == l) as u8 as f64;
    let nf = n as f64;
    Ok((nf * d_ik + nf * d_jl - d_ik * d_jl - 1.0) / cubic(n))
}

/// `E A² = (‖Λ‖²_HS / n) I`.
pub fn expected_a_squared(spectrum: &Spectrum) -> HermitianMatrix {
    let n = spectrum.len();
    let c = spectrum.hs_norm_sq() / n as f64;
    HermitianMatrix::diagonal(&vec![c; n], crate::linalg::Field::Real)
}

/// `E tr(A B A C) = ‖Λ‖²_HS / ((n−1)n(n+1)) · [n (tr B)(tr C) − tr(BC)]`.
///
/// Valid for `tr Λ = 0`; for general `Λ` use [`expected_tr_abac_general`].
pub fn expected_tr_abac(spectrum: &Spectrum, b: &HermitianMatrix, c: &HermitianMatrix) -> Result<f64> {
    let n = spectrum.len();
    need_n_ge_2(n)?;
    check_dim(b, n)?;
    check_dim(c, n)?;
    let bracket = n as f64 * b.trace() * c.trace() - trace_product(b.matrix(), c.matrix()).re;
    Ok(spectrum.hs_norm_sq() / cubic(n) * bracket)
}

/// `E tr(A B A C)` without the trace-zero assumption on `Λ`, from the
/// degree-2 Weingarten function with `p₁ = tr Λ`, `p₂ = ‖Λ‖²_HS`.
pub fn expected_tr_abac_general(spectrum: &Spectrum, b: &HermitianMatrix, c: &HermitianMatrix) -> Result<f64> {
    let n = spectrum.len();
    need_n_ge_2(n)?;
    check_dim(b, n)?;
    check_dim(c, n)?;
    let nf = n as f64;
    let p1 = spectrum.trace();
    let p2 = spectrum.hs_norm_sq();
    let tb = b.trace();
    let tc = c.trace();
    let tbc = trace_product(b.matrix(), c.matrix()).re;
    // Σ_{σ,τ ∈ S₂} Wg(στ⁻¹): row pairings give tr(BC) or trB trC, column
    // pairings give p₁² or p₂.
    let wg_id = 1.0 / (nf * nf - 1.0);
    let wg_tr = -1.0 / (nf * (nf * nf - 1.0));
    let e = (p1 * p1 * tbc + p2 * tb * tc) * wg_id + (p1 * p1 * tb * tc + p2 * tbc) * wg_tr;
    Ok(e)
}

fn check_dim(m: &HermitianMatrix, n: usize) -> Result<()> {
    if m.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.dim(),
        });
    }
    Ok(())
}

/// `E[tr(QF) tr(QG)] = 2/((n−1)n(n+1)) · [(tr F)(tr G) − n tr(FG)]` for
/// `Q = v₁v₂* − v₂v₁*` built from two Haar columns.
pub fn expected_trqf_trqg(f: &CMatrix, g: &CMatrix) -> Result<C64> {
    let n = f.nrows();
    need_n_ge_2(n)?;
    if !f.is_square() || g.shape() != f.shape() {
        return Err(Error::invalid("F and G must be square of equal size"));
    }
    let bracket = f.trace() * g.trace() - trace_product(f, g) * n as f64;
    Ok(bracket * (2.0 / cubic(n)))
}

/// `E[Q F Q] = 2/((n−1)n(n+1)) · F − 2 (tr F)/(n²−1) · I`.
///
/// For `tr F = 0` this is `2F/((n−1)n(n+1))`.
pub fn expected_qfq(f: &CMatrix) -> Result<CMatrix> {
    let n = f.nrows();
    need_n_ge_2(n)?;
    let nf = n as f64;
    let shift = f.trace() * (2.0 / (nf * nf - 1.0));
    Ok(f * C64::new(2.0 / cubic(n), 0.0) - CMatrix::identity(n, n) * shift)
}

/// `E[|Z₁|^{α₁} ⋯ |Z_n|^{α_n}] = Γ(β₁)⋯Γ(β_n) Γ(n) / Γ(β)` with
/// `β_j = α_j/2 + 1`, `β = Σ β_j`. Exponents must be even.
pub fn sphere_abs_moment(alphas: &[u32]) -> Result<f64> {
    let n = alphas.len();
    if n == 0 {
        return Err(Error::invalid("sphere_abs_moment needs n >= 1"));
    }
    if let Some(a) = alphas.iter().find(|&&a| a % 2 != 0) {
        return Err(Error::invalid(format!("odd exponent {a}")));
    }
    let betas = alphas.iter().map(|&a| a as f64 / 2.0 + 1.0);
    let beta: f64 = betas.clone().sum();
    let log = betas.map(ln_gamma).sum::<f64>() + ln_gamma(n as f64) - ln_gamma(beta);
    Ok(log.exp())
}

/// `E[Z_{i₁}⋯Z_{i_k} conj(Z_{j₁})⋯conj(Z_{j_k})]` on the unit sphere of `ℂ^n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentQuery {
    pub top: Vec<usize>,
    pub bottom: Vec<usize>,
    pub n: usize,
}

/// Zero unless the index multisets agree; otherwise
/// `Π_i (mult i)! / (n(n+1)⋯(n+k−1))`.
pub fn sphere_mixed_moment(q: &MomentQuery) -> Result<f64> {
    if q.n == 0 {
        return Err(Error::invalid("sphere_mixed_moment needs n >= 1"));
    }
    if q.top.iter().chain(&q.bottom).any(|&i| i >= q.n) {
        return Err(Error::invalid("moment index out of range"));
    }
    if q.top.len() != q.bottom.len() {
        return Ok(0.0);
    }
    let mut top = q.top.clone();
    let mut bottom = q.bottom.clone();
    top.sort_unstable();
    bottom.sort_unstable();
    if top != bottom {
        return Ok(0.0);
    }
    let k = top.len();
    // Accumulate in logs: both factorials and the rising factorial overflow.
    let mut log = 0.0;
    let mut run = 1usize;
    for w in 1..=k {
        if w < k && top[w] == top[w - 1] {
            run += 1;
        } else {
            log += ln_gamma(run as f64 + 1.0);
            run = 1;
        }
    }
    let nf = q.n as f64;
    log -= ln_gamma(nf + k as f64) - ln_gamma(nf);
    Ok(log.exp())
}

fn require_traceless(m: &HermitianMatrix) -> Result<()> {
    let t = m.trace();
    if t.abs() > STRUCT_TOL * m.hs_norm().max(1.0) {
        return Err(Error::NotTraceless(t));
    }
    Ok(())
}

/// `E[⟨BZ,Z⟩⟨CZ,Z⟩] = tr(BC) / (n(n+1))` for traceless `B, C`.
pub fn quad_form_cov(b: &HermitianMatrix, c: &HermitianMatrix) -> Result<f64> {
    if b.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: c.dim(),
        });
    }
    require_traceless(b)?;
    require_traceless(c)?;
    let n = b.dim() as f64;
    Ok(trace_product(b.matrix(), c.matrix()).re / (n * (n + 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deg4Kind {
    /// `E⟨BZ,CZ⟩²`
    Sq,
    /// `E|⟨BZ,CZ⟩|²`
    AbsSq,
    /// `E[⟨BZ,CZ⟩⟨BZ,Z⟩⟨CZ,Z⟩]`
    Cross,
    /// `E[⟨BZ,Z⟩²⟨CZ,Z⟩²]`
    Full,
}

impl Deg4Kind {
    pub const ALL: [Deg4Kind; 4] = [Deg4Kind::Sq, Deg4Kind::AbsSq, Deg4Kind::Cross, Deg4Kind::Full];

    pub fn name(&self) -> &'static str {
        match self {
            Deg4Kind::Sq => "sq",
            Deg4Kind::AbsSq => "abs_sq",
            Deg4Kind::Cross => "cross",
            Deg4Kind::Full => "full",
        }
    }
}

/// Degree-4 and degree-6/8 quadratic-form moments on the complex sphere.
///
/// Each is `Σ_σ Π_cycles tr(…)` over the symmetric group, divided by the
/// rising factorial `n(n+1)⋯`; `Cross` and `Full` drop the terms that vanish
/// for traceless inputs.
pub fn quad_form_deg4(b: &HermitianMatrix, c: &HermitianMatrix, which: Deg4Kind) -> Result<f64> {
    if b.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: c.dim(),
        });
    }
    let n = b.dim() as f64;
    let bm = b.matrix();
    let cm = c.matrix();
    let bc = bm * cm;
    let tr_bc = bc.trace().re;
    let tr_bcbc = trace_product(&bc, &bc).re;
    let tr_bbcc = trace_product(&(bm * bm), &(cm * cm)).re;
    match which {
        Deg4Kind::Sq => Ok((tr_bc * tr_bc + tr_bcbc) / (n * (n + 1.0))),
        Deg4Kind::AbsSq => Ok((tr_bbcc + tr_bc * tr_bc) / (n * (n + 1.0))),
        Deg4Kind::Cross => {
            require_traceless(b)?;
            require_traceless(c)?;
            Ok((tr_bc * tr_bc + tr_bbcc + tr_bcbc) / (n * (n + 1.0) * (n + 2.0)))
        }
        Deg4Kind::Full => {
            require_traceless(b)?;
            require_traceless(c)?;
            let tb2 = trace_product(bm, bm).re;
            let tc2 = trace_product(cm, cm).re;
            Ok((tb2 * tc2 + 4.0 * tr_bbcc + 2.0 * tr_bc * tr_bc + 2.0 * tr_bcbc)
                / (n * (n + 1.0) * (n + 2.0) * (n + 3.0)))
        }
    }
}
