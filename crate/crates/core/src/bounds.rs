//! Right-hand sides of the normal-approximation and semicircle bounds, with
//! the ingredient quantities that enter them.
//!
//! Spectra are passed raw; recentering to `Λ̃` happens here.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram_and_shift, AffineData, CoefficientFrame, Field, HermitianMatrix, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    /// `W₁` bound for `U(n)` conjugation.
    MarginalComplex,
    /// `W₁` bound for `O(n)` conjugation.
    MarginalReal,
    /// Single-coefficient total-variation bound, complex.
    MarginalTvComplex,
    /// Single-coefficient total-variation bound, real.
    MarginalTvReal,
    /// Non-normalized coefficients with an affine Gaussian target.
    Affine,
    /// Rank-one spectrum (uniform sphere vector).
    RankOne,
    /// Induced random density matrices.
    InducedState,
    /// Joint law of scaled matrix entries.
    Entries,
    /// Principal `k × k` truncation vs GUE and its spectral measure.
    SubmatrixSemicircle,
    /// Unitarily invariant random matrices.
    Invariant,
}

/// Unspecified universal constants, all defaulting to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub c_r1: f64,
    pub c_dallaporta: f64,
    pub kappa_invariant: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            c_r1: 1.0,
            c_dallaporta: 1.0,
            kappa_invariant: 1.0,
        }
    }
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_r1", self.c_r1),
            ("c_dallaporta", self.c_dallaporta),
            ("kappa_invariant", self.kappa_invariant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("constant {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// An evaluated bound. `value` already includes any configured constant;
/// `symbolic` then shows it as `C·<multiplier>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem_id: TheoremId,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbolic: Option<String>,
    pub ingredients: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(theorem_id: TheoremId, value: f64) -> Self {
        BoundReport {
            theorem_id,
            value,
            symbolic: None,
            ingredients: BTreeMap::new(),
        }
    }

    fn with(mut self, name: &str, v: f64) -> Self {
        self.ingredients.insert(name.to_string(), v);
        self
    }

    fn symbolic(mut self, constant: &str, multiplier: f64) -> Self {
        self.symbolic = Some(format!("{constant}·{multiplier:.6}"));
        self
    }

    pub fn ingredient(&self, name: &str) -> Option<f64> {
        self.ingredients.get(name).copied()
    }

    /// Factor applied to `X` before comparing with the Gaussian.
    pub fn scaling(&self) -> Option<f64> {
        self.ingredient("scaling")
    }

    /// Whether the bound exceeds 1 and so says nothing about a `W₁` of
    /// order-one variables.
    pub fn is_vacuous(&self) -> bool {
        self.value > 1.0
    }

    /// Nonnegative value and finite ingredients.
    pub fn check(&self) -> Result<()> {
        if !(self.value >= 0.0) || !self.value.is_finite() {
            return Err(Error::Numeric(format!("bound value {} not finite and nonnegative", self.value)));
        }
        if let Some((k, v)) = self.ingredients.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("ingredient {k} = {v}")));
        }
        Ok(())
    }
}

struct Centered {
    n: f64,
    hs: f64,
    op: f64,
}

fn centered(spectrum: &Spectrum) -> Result<Centered> {
    if spectrum.is_scalar() {
        return Err(Error::ScalarSpectrum);
    }
    let t = spectrum.recentered();
    Ok(Centered {
        n: spectrum.len() as f64,
        hs: t.hs_norm(),
        op: t.op_norm(),
    })
}

fn require_orthonormal_traceless(frame: &CoefficientFrame) -> Result<()> {
    if !frame.is_orthonormal() || !frame.is_traceless() {
        return Err(Error::invalid("coefficient frame must be orthonormal and traceless"));
    }
    Ok(())
}

/// Leading factor `8√n` (complex) or `8√2 √(n−1)(n+2)/n` (real).
fn t0_factor(n: f64, field: Field) -> f64 {
    match field {
        Field::Complex => 8.0 * n.sqrt(),
        Field::Real => 8.0 * std::f64::consts::SQRT_2 * (n - 1.0).sqrt() * (n + 2.0) / n,
    }
}

/// `√(n²−1)/‖Λ̃‖_HS` (complex) or `√((n−1)(n+2))/(√2 ‖Λ̃‖_HS)` (real).
fn t0_scaling(n: f64, hs: f64, field: Field) -> f64 {
    match field {
        Field::Complex => (n * n - 1.0).sqrt() / hs,
        Field::Real => ((n - 1.0) * (n + 2.0)).sqrt() / (std::f64::consts::SQRT_2 * hs),
    }
}

/// `W₁(scaling · X, g)` bound for an orthonormal traceless frame:
/// `factor · (‖Λ̃‖²_op/‖Λ̃‖²_HS) · Σ ‖B_i‖²_op`.
pub fn bound_t0(spectrum: &Spectrum, frame: &CoefficientFrame, field: Field) -> Result<BoundReport> {
    require_orthonormal_traceless(frame)?;
    let c = centered(spectrum)?;
    let ratio = c.op * c.op / (c.hs * c.hs);
    let sum_op_sq = frame.sum_op_sq();
    let factor = t0_factor(c.n, field);
    let value = factor * ratio * sum_op_sq;
    let srank_form = if frame.d() == 0 {
        0.0
    } else {
        factor / (c.hs * c.hs / (c.op * c.op)) * frame.sum_inv_srank()?
    };
    let id = match field {
        Field::Complex => TheoremId::MarginalComplex,
        Field::Real => TheoremId::MarginalReal,
    };
    Ok(BoundReport::new(id, value)
        .with("n", c.n)
        .with("d", frame.d() as f64)
        .with("hs_tilde", c.hs)
        .with("op_tilde", c.op)
        .with("srank_tilde", c.hs * c.hs / (c.op * c.op))
        .with("sum_op_sq", sum_op_sq)
        .with("srank_form", srank_form)
        .with("scaling", t0_scaling(c.n, c.hs, field)))
}

/// Total-variation bound for a single coefficient: twice the `W₁` bound.
pub fn bound_t0_tv(spectrum: &Spectrum, b: &HermitianMatrix, field: Field) -> Result<BoundReport> {
    let frame = CoefficientFrame::new(vec![b.clone()])?;
    let w1 = bound_t0(spectrum, &frame, field)?;
    let id = match field {
        Field::Complex => TheoremId::MarginalTvComplex,
        Field::Real => TheoremId::MarginalTvReal,
    };
    let mut r = BoundReport::new(id, 2.0 * w1.value);
    r.ingredients = w1.ingredients;
    Ok(r)
}

/// Gaussian target for the affine bound: `scale · Σ^{1/2} g + shift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTarget {
    /// `‖Λ̃‖_HS / √(n²−1)`
    pub scale: f64,
    pub data: AffineData,
}

/// `W₁(X, target) ≤ (8d/√(n−1)) ‖Σ^{1/2}‖_op ‖Λ̃‖²_op / ‖Λ̃‖_HS` for arbitrary
/// self-adjoint coefficients.
pub fn bound_affine(spectrum: &Spectrum, raw: &[HermitianMatrix]) -> Result<(BoundReport, AffineTarget)> {
    let c = centered(spectrum)?;
    let data = gram_and_shift(raw, spectrum)?;
    let d = raw.len() as f64;
    let sqrt_sigma_op = data.sqrt_sigma_op();
    let value = 8.0 * d / (c.n - 1.0).sqrt() * sqrt_sigma_op * c.op * c.op / c.hs;
    let scale = c.hs / (c.n * c.n - 1.0).sqrt();
    let report = BoundReport::new(TheoremId::Affine, value)
        .with("n", c.n)
        .with("d", d)
        .with("hs_tilde", c.hs)
        .with("op_tilde", c.op)
        .with("sqrt_sigma_op", sqrt_sigma_op)
        .with("target_scale", scale);
    Ok((report, AffineTarget { scale, data }))
}

/// `c_r1 Σ ‖B_j‖₄²` (rank-one spectrum) or `(c_r1/√s) Σ ‖B_j‖₄²` (induced
/// states), together with the weaker `Σ 1/√srank B_j` form.
pub fn statistic_quartic(
    frame: &CoefficientFrame,
    n: usize,
    s: Option<usize>,
    constants: &ConstantsConfig,
) -> Result<BoundReport> {
    require_orthonormal_traceless(frame)?;
    constants.validate()?;
    if frame.d() > 0 && frame.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: frame.n(),
        });
    }
    let nf = n as f64;
    let sum4 = frame.sum_schatten4_sq();
    let weak: f64 = frame
        .matrices()
        .iter()
        .map(|b| b.stable_rank().map(|r| 1.0 / r.sqrt()))
        .sum::<Result<f64>>()?;
    let (id, divisor, scaling) = match s {
        None => (TheoremId::RankOne, 1.0, (nf * (nf + 1.0)).sqrt()),
        Some(0) => return Err(Error::invalid("s must be >= 1")),
        Some(s) => {
            let sf = s as f64;
            (TheoremId::InducedState, sf.sqrt(), (nf * (nf * sf + 1.0)).sqrt())
        }
    };
    let multiplier = sum4 / divisor;
    let mut r = BoundReport::new(id, constants.c_r1 * multiplier)
        .symbolic("C", multiplier)
        .with("n", nf)
        .with("d", frame.d() as f64)
        .with("sum_schatten4_sq", sum4)
        .with("weak_form", constants.c_r1 * weak / divisor)
        .with("c_r1", constants.c_r1)
        .with("scaling", scaling);
    if let Some(s) = s {
        r = r.with("s", s as f64);
    }
    Ok(r)
}

fn require_traceless_spectrum(spectrum: &Spectrum) -> Result<()> {
    let t = spectrum.trace();
    if t.abs() > 1e-10 * spectrum.hs_norm().max(1.0) {
        return Err(Error::NonzeroTrace(t));
    }
    if spectrum.op_norm() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(())
}

/// `9 d √n / srank Λ` for `d` scaled entries of a traceless-spectrum matrix.
pub fn bound_entries(spectrum: &Spectrum, d: usize) -> Result<BoundReport> {
    require_traceless_spectrum(spectrum)?;
    let n = spectrum.len() as f64;
    let srank = spectrum.stable_rank()?;
    let hs = spectrum.hs_norm();
    Ok(BoundReport::new(TheoremId::Entries, 9.0 * d as f64 * n.sqrt() / srank)
        .with("n", n)
        .with("d", d as f64)
        .with("srank", srank)
        .with("hs", hs)
        .with("scaling", (n * n - 1.0).sqrt() / hs))
}

/// Submatrix-vs-GUE bound `18 k² √n / srank Λ` (the report value), the
/// semicircle expectation bound `+ C √(log k)/k`, and the tail bound at `t`.
pub fn bound_submatrix_semicircle(
    spectrum: &Spectrum,
    k: usize,
    t: f64,
    constants: &ConstantsConfig,
) -> Result<BoundReport> {
    require_traceless_spectrum(spectrum)?;
    constants.validate()?;
    let n = spectrum.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must lie in [1, n], got {k}")));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("t must be nonnegative, got {t}")));
    }
    let nf = n as f64;
    let kf = k as f64;
    let srank = spectrum.stable_rank()?;
    let hs = spectrum.hs_norm();
    let sub = 18.0 * kf * kf * nf.sqrt() / srank;
    let log_term = kf.ln().max(0.0).sqrt() / kf;
    let expectation = sub + constants.c_dallaporta * log_term;
    let tail = (-kf * kf * srank * t * t / (48.0 * nf)).exp();
    let tail_sharp = (-kf * kf * srank * t * t * nf / (48.0 * (nf * nf - 1.0))).exp();
    Ok(BoundReport::new(TheoremId::SubmatrixSemicircle, sub)
        .with("n", nf)
        .with("k", kf)
        .with("t", t)
        .with("srank", srank)
        .with("hs", hs)
        .with("scaling", (nf * nf - 1.0).sqrt() / hs)
        .with("semicircle_expectation", expectation)
        .with("semicircle_log_term", log_term)
        .with("c_dallaporta", constants.c_dallaporta)
        .with("tail_probability", tail)
        .with("tail_probability_sharp", tail_sharp)
        .with("turning_point_k", turning_point(constants.c_dallaporta, srank, nf)))
}

/// Solves `k³ = C srank √(log k) / (36 √n)` by fixed-point iteration: the
/// scale beyond which the `k²` term dominates the expectation bound.
pub fn turning_point(c: f64, srank: f64, n: f64) -> f64 {
    let a = c * srank / (36.0 * n.sqrt());
    let mut k = std::f64::consts::E;
    for _ in 0..200 {
        let next = (a * k.ln().max(1e-12).sqrt()).cbrt().max(std::f64::consts::E);
        if (next - k).abs() <= 1e-12 * k {
            return next;
        }
        k = next;
    }
    k
}

/// Bounds for unitarily invariant ensembles from spectrum samples.
///
/// Report value: the bound for `(√(n²−1)/E‖Ã‖_HS) X`, i.e.
/// `8√n/E‖Ã‖_HS · E(‖Ã‖²_op/‖Ã‖_HS) · Σ 1/srank B_i + √d E|‖Ã‖_HS − E‖Ã‖_HS| / E‖Ã‖_HS`.
pub fn bound_invariant(
    lambda_samples: &[Spectrum],
    frame: &CoefficientFrame,
    constants: &ConstantsConfig,
) -> Result<BoundReport> {
    if lambda_samples.len() < 2 {
        return Err(Error::invalid("bound_invariant needs at least 2 spectrum samples"));
    }
    require_orthonormal_traceless(frame)?;
    constants.validate()?;
    let n = lambda_samples[0].len();
    if lambda_samples.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("spectrum samples of different sizes"));
    }
    let nf = n as f64;
    let count = lambda_samples.len() as f64;
    let mut hs = Vec::with_capacity(lambda_samples.len());
    let mut op2_over_hs = 0.0;
    for s in lambda_samples {
        let c = centered(s)?;
        hs.push(c.hs);
        op2_over_hs += c.op * c.op / c.hs;
    }
    op2_over_hs /= count;
    let e_hs = hs.iter().sum::<f64>() / count;
    let fluct = hs.iter().map(|h| (h - e_hs).abs()).sum::<f64>() / count;
    let inv_srank = frame.sum_inv_srank()?;
    let d = frame.d() as f64;
    let bound1 = 8.0 / nf.sqrt() * op2_over_hs * inv_srank;
    let main = 8.0 * nf.sqrt() / e_hs * op2_over_hs * inv_srank;
    let fluct_term = d.sqrt() * fluct / e_hs;
    let corollary = constants.kappa_invariant / nf.sqrt() * inv_srank;
    Ok(BoundReport::new(TheoremId::Invariant, main + fluct_term)
        .with("n", nf)
        .with("d", d)
        .with("samples", count)
        .with("e_hs_tilde", e_hs)
        .with("e_op2_over_hs", op2_over_hs)
        .with("e_abs_hs_deviation", fluct)
        .with("sum_inv_srank", inv_srank)
        .with("bound_unscaled", bound1)
        .with("main_term", main)
        .with("fluctuation_term", fluct_term)
        .with("corollary_form", corollary)
        .with("kappa_invariant", constants.kappa_invariant)
        .with("scaling", (nf * nf - 1.0).sqrt() / e_hs))
}
