//! Self-adjoint matrices, spectra, coefficient frames and the basic
//! Hilbert–Schmidt geometry of `M_n^sa(F)`.

use std::borrow::Cow;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CMatrix, C64};

/// Relative tolerance for structural invariants (orthonormality, trace).
pub const STRUCT_TOL: f64 = 1e-10;

/// Relative size of the Hermitian correction above which a constructed
/// matrix is flagged as not having been self-adjoint on input.
pub const SYMMETRIZE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

// ---------------------------------------------------------------------------
// Spectrum

/// Eigenvalues `λ_1..λ_n` of the diagonal matrix `Λ`, in the order given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Spectrum::new(values)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Self {
        s.values
    }
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("spectrum must have n >= 1 values"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("spectrum value {i} is not finite")));
        }
        Ok(Spectrum { values })
    }

    /// `n/2` values `+c` followed by `n/2` values `-c` (n even).
    pub fn pm_split(n: usize, c: f64) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::invalid(format!("pm split needs even n >= 2, got {n}")));
        }
        let mut v = vec![c; n / 2];
        v.extend(std::iter::repeat_n(-c, n / 2));
        Spectrum::new(v)
    }

    /// The `±√n` split.
    pub fn pm_sqrt_n(n: usize) -> Result<Self> {
        Spectrum::pm_split(n, (n as f64).sqrt())
    }

    /// `(1, 0, ..., 0)`: a pure state.
    pub fn rank_one(n: usize) -> Result<Self> {
        let mut v = vec![0.0; n];
        if n > 0 {
            v[0] = 1.0;
        }
        Spectrum::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn trace(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn hs_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn hs_norm(&self) -> f64 {
        self.hs_norm_sq().sqrt()
    }

    pub fn op_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn schatten(&self, p: f64) -> Result<f64> {
        schatten_of(&self.values, p)
    }

    /// `Λ̃ = Λ - (tr Λ / n) I`.
    pub fn recentered(&self) -> Spectrum {
        let mean = self.trace() / self.len() as f64;
        Spectrum {
            values: self.values.iter().map(|v| v - mean).collect(),
        }
    }

    /// True when all eigenvalues coincide (to 1e-12 relative).
    pub fn is_scalar(&self) -> bool {
        let scale = self.op_norm().max(f64::MIN_POSITIVE);
        self.recentered().op_norm() <= 1e-12 * scale
    }

    pub fn stable_rank(&self) -> Result<f64> {
        let op = self.op_norm();
        if op == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        Ok(self.hs_norm_sq() / (op * op))
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn to_matrix(&self, field: Field) -> HermitianMatrix {
        HermitianMatrix::diagonal(&self.values, field)
    }
}

fn schatten_of(eigs: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!("Schatten exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(eigs.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let max = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(0.0);
    }
    // Scale by the max to keep large p finite.
    let s: f64 = eigs.iter().map(|v| (v.abs() / max).powf(p)).sum();
    Ok(max * s.powf(1.0 / p))
}

// ---------------------------------------------------------------------------
// HermitianMatrix

/// Dense self-adjoint matrix over ℝ or ℂ.
///
/// Storage is always complex; for [`Field::Real`] the imaginary parts are
/// zero. Construction symmetrizes the input (`B <- (B + B*)/2`); `valid`
/// records whether the correction stayed within `1e-8 ‖B‖_HS`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct HermitianMatrix {
    field: Field,
    data: CMatrix,
    valid: bool,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    n: usize,
    field: Field,
    re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    im: Option<Vec<f64>>,
}

impl TryFrom<MatrixJson> for HermitianMatrix {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        let n = j.n;
        if j.re.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: j.re.len(),
            });
        }
        let im = match (&j.im, j.field) {
            (Some(im), _) if im.len() != n * n => {
                return Err(Error::DimensionMismatch {
                    expected: n * n,
                    found: im.len(),
                })
            }
            (Some(im), _) => im.clone(),
            (None, _) => vec![0.0; n * n],
        };
        let data = CMatrix::from_fn(n, n, |r, c| C64::new(j.re[r * n + c], im[r * n + c]));
        Ok(HermitianMatrix::from_matrix(data, j.field))
    }
}

impl From<HermitianMatrix> for MatrixJson {
    fn from(h: HermitianMatrix) -> Self {
        let n = h.dim();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                re.push(h.data[(r, c)].re);
                im.push(h.data[(r, c)].im);
            }
        }
        MatrixJson {
            n,
            field: h.field,
            re,
            im: (h.field == Field::Complex).then_some(im),
        }
    }
}

impl HermitianMatrix {
    /// Symmetrizes `m` and records whether it was self-adjoint to 1e-8.
    /// Real-field inputs also have their imaginary parts dropped.
    pub fn from_matrix(m: CMatrix, field: Field) -> Self {
        assert!(m.is_square(), "HermitianMatrix needs a square matrix");
        let norm = m.norm();
        let mut sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        if field == Field::Real {
            sym.iter_mut().for_each(|z| z.im = 0.0);
        }
        for i in 0..sym.nrows() {
            sym[(i, i)].im = 0.0;
        }
        let correction = (&sym - &m).norm();
        HermitianMatrix {
            field,
            valid: correction <= SYMMETRIZE_TOL * norm.max(f64::MIN_POSITIVE),
            data: sym,
        }
    }

    /// Wraps a matrix already known to be self-adjoint (e.g. `U Λ U*`),
    /// only cleaning rounding drift.
    pub(crate) fn from_exact(m: CMatrix, field: Field) -> Self {
        Self::from_matrix(m, field)
    }

    pub fn zeros(n: usize, field: Field) -> Self {
        HermitianMatrix {
            field,
            data: CMatrix::zeros(n, n),
            valid: true,
        }
    }

    pub fn identity(n: usize, field: Field) -> Self {
        HermitianMatrix {
            field,
            data: CMatrix::identity(n, n),
            valid: true,
        }
    }

    pub fn diagonal(values: &[f64], field: Field) -> Self {
        let n = values.len();
        let mut data = CMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            data[(i, i)] = C64::new(v, 0.0);
        }
        HermitianMatrix {
            field,
            data,
            valid: true,
        }
    }

    /// Matrix unit `E_jk + E_kj` style constructor from a real closure.
    pub fn from_real_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self::from_matrix(CMatrix::from_fn(n, n, |r, c| C64::new(f(r, c), 0.0)), Field::Real)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// Whether the input to the constructor was self-adjoint to 1e-8.
    pub fn is_valid(&self) -> bool {
        self.valid
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[(r, c)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)].re).sum()
    }

    pub fn hs_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        if n == 0 {
            return Vec::new();
        }
        let zero = C64::new(0.0, 0.0);
        let diagonal = (0..n).all(|c| (0..n).all(|r| r == c || self.data[(r, c)] == zero));
        // Rows and columns that vanish contribute zero eigenvalues.
        let support: Vec<usize> = (0..n).filter(|&r| (0..n).any(|c| self.data[(r, c)] != zero)).collect();
        let mut v: Vec<f64> = if diagonal {
            (0..n).map(|i| self.data[(i, i)].re).collect()
        } else if 2 * support.len() < n {
            let k = support.len();
            let block = CMatrix::from_fn(k, k, |r, c| self.data[(support[r], support[c])]);
            let mut v = HermitianMatrix { data: block, field: self.field, valid: self.valid }.eigenvalues();
            v.resize(n, 0.0);
            v
        } else if self.field == Field::Real {
            let re = DMatrix::<f64>::from_fn(n, n, |r, c| self.data[(r, c)].re);
            SymmetricEigen::new(re).eigenvalues.iter().copied().collect()
        } else {
            SymmetricEigen::new(self.data.clone())
                .eigenvalues
                .iter()
                .copied()
                .collect()
        };
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn schatten_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::invalid(format!("Schatten exponent must be >= 1, got {p}")));
        }
        if p == 2.0 {
            return Ok(self.hs_norm());
        }
        schatten_of(&self.eigenvalues(), p)
    }

    pub fn op_norm(&self) -> f64 {
        schatten_of(&self.eigenvalues(), f64::INFINITY).unwrap_or(0.0)
    }

    /// `‖A‖²_HS / ‖A‖²_op`.
    pub fn stable_rank(&self) -> Result<f64> {
        let op = self.op_norm();
        if op == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        let hs = self.hs_norm();
        Ok(hs * hs / (op * op))
    }

    /// `B - (tr B / n) I`.
    pub fn traceless(&self) -> HermitianMatrix {
        let n = self.dim();
        let shift = self.trace() / n as f64;
        let mut data = self.data.clone();
        for i in 0..n {
            data[(i, i)] -= C64::new(shift, 0.0);
        }
        HermitianMatrix {
            field: self.field,
            data,
            valid: self.valid,
        }
    }

    pub fn scaled(&self, c: f64) -> HermitianMatrix {
        HermitianMatrix {
            field: self.field,
            data: &self.data * C64::new(c, 0.0),
            valid: self.valid,
        }
    }

    pub fn add(&self, other: &HermitianMatrix) -> Result<HermitianMatrix> {
        check_dims(self, other)?;
        Ok(HermitianMatrix {
            field: join_field(self.field, other.field),
            data: &self.data + &other.data,
            valid: self.valid && other.valid,
        })
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Result<HermitianMatrix> {
        self.add(&other.scaled(-1.0))
    }

    /// Matrix product (not self-adjoint in general).
    pub fn mul(&self, other: &HermitianMatrix) -> CMatrix {
        &self.data * &other.data
    }

    /// `W A W*`; the field becomes complex unless `W` is real.
    pub fn conjugate_by(&self, w: &CMatrix) -> HermitianMatrix {
        let field = if self.field == Field::Real && w.iter().all(|z| z.im == 0.0) {
            Field::Real
        } else {
            Field::Complex
        };
        HermitianMatrix::from_exact(w * &self.data * w.adjoint(), field)
    }

    /// Tensor product `self ⊗ other` with row-major index `(a, c) -> a * s + c`.
    pub fn kron(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix {
            field: join_field(self.field, other.field),
            data: self.data.kronecker(&other.data),
            valid: self.valid && other.valid,
        }
    }

    pub fn with_field(mut self, field: Field) -> HermitianMatrix {
        if field == Field::Real {
            self.data.iter_mut().for_each(|z| z.im = 0.0);
        }
        self.field = field;
        self
    }
}

fn join_field(a: Field, b: Field) -> Field {
    if a == Field::Real && b == Field::Real {
        Field::Real
    } else {
        Field::Complex
    }
}

fn check_dims(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `tr(A B*) = tr(AB)`: the real Hilbert–Schmidt inner product.
pub fn hs_inner(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    check_dims(a, b)?;
    Ok(trace_product(a.matrix(), b.matrix()).re)
}

/// `tr(XY)` for square matrices, in O(n²).
pub fn trace_product(x: &CMatrix, y: &CMatrix) -> C64 {
    let n = x.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            acc += x[(a, b)] * y[(b, a)];
        }
    }
    acc
}

pub fn schatten_norm(a: &HermitianMatrix, p: f64) -> Result<f64> {
    a.schatten_norm(p)
}

pub fn stable_rank(a: &HermitianMatrix) -> Result<f64> {
    a.stable_rank()
}

pub fn traceless(b: &HermitianMatrix) -> HermitianMatrix {
    b.traceless()
}

// ---------------------------------------------------------------------------
// Coefficient frames

/// An entry selector for [`entry_frame`], with 0-based indices.
///
/// Text form (1-based, as in configs): `"D j"`, `"R j k"`, `"I j k"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EntrySelector {
    /// `a_jj`
    Diagonal(usize),
    /// `√2 Re a_jk`, j < k
    Real(usize, usize),
    /// `√2 Im a_jk`, j < k
    Imag(usize, usize),
}

impl TryFrom<String> for EntrySelector {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EntrySelector> for String {
    fn from(e: EntrySelector) -> String {
        e.to_string()
    }
}

impl std::str::FromStr for EntrySelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let idx = |p: &str| -> Result<usize> {
            let v: usize = p
                .parse()
                .map_err(|_| Error::invalid(format!("bad index {p:?} in selector {s:?}")))?;
            v.checked_sub(1)
                .ok_or_else(|| Error::invalid(format!("selector indices are 1-based: {s:?}")))
        };
        match parts.as_slice() {
            ["D", j] => Ok(EntrySelector::Diagonal(idx(j)?)),
            ["R", j, k] => Ok(EntrySelector::Real(idx(j)?, idx(k)?)),
            ["I", j, k] => Ok(EntrySelector::Imag(idx(j)?, idx(k)?)),
            _ => Err(Error::invalid(format!("unrecognized entry selector {s:?}"))),
        }
    }
}

impl std::fmt::Display for EntrySelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            EntrySelector::Diagonal(j) => write!(f, "D {}", j + 1),
            EntrySelector::Real(j, k) => write!(f, "R {} {}", j + 1, k + 1),
            EntrySelector::Imag(j, k) => write!(f, "I {} {}", j + 1, k + 1),
        }
    }
}

impl EntrySelector {
    pub fn indices(&self) -> Vec<usize> {
        match *self {
            EntrySelector::Diagonal(j) => vec![j],
            EntrySelector::Real(j, k) | EntrySelector::Imag(j, k) => vec![j, k],
        }
    }

    /// Reads the selected coordinate from an entry accessor.
    pub fn read(&self, entry: impl Fn(usize, usize) -> C64) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        match *self {
            EntrySelector::Diagonal(j) => entry(j, j).re,
            EntrySelector::Real(j, k) => s2 * entry(j, k).re,
            EntrySelector::Imag(j, k) => s2 * entry(j, k).im,
        }
    }

    /// `‖B‖²_op`, `‖B‖₄²` and `srank B` of the selector matrix.
    fn norms(&self) -> (f64, f64, f64) {
        match self {
            EntrySelector::Diagonal(_) => (1.0, 1.0, 1.0),
            _ => (0.5, std::f64::consts::FRAC_1_SQRT_2, 2.0),
        }
    }

    pub fn matrix(&self, n: usize) -> HermitianMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = CMatrix::zeros(n, n);
        let field = match *self {
            EntrySelector::Diagonal(j) => {
                m[(j, j)] = C64::new(1.0, 0.0);
                Field::Real
            }
            EntrySelector::Real(j, k) => {
                m[(j, k)] = C64::new(h, 0.0);
                m[(k, j)] = C64::new(h, 0.0);
                Field::Real
            }
            // tr(A B) = √2 Im a_jk for B = (i/√2)(E_jk - E_kj)
            EntrySelector::Imag(j, k) => {
                m[(j, k)] = C64::new(0.0, h);
                m[(k, j)] = C64::new(0.0, -h);
                Field::Complex
            }
        };
        HermitianMatrix {
            field,
            data: m,
            valid: true,
        }
    }
}

/// An ordered list of `d` self-adjoint coefficient matrices, all `n × n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFrame {
    n: usize,
    /// Empty for entry frames, whose matrices are built on demand.
    matrices: Vec<HermitianMatrix>,
    orthonormal: bool,
    traceless: bool,
    /// Set when the frame was built by [`entry_frame`]; enables the
    /// row-sampling fast path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<EntrySelector>>,
}

impl CoefficientFrame {
    /// Builds a frame and measures its orthonormality and tracelessness.
    pub fn new(matrices: Vec<HermitianMatrix>) -> Result<Self> {
        let n = matrices.first().map(|m| m.dim()).unwrap_or(0);
        for m in &matrices {
            if m.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.dim(),
                });
            }
        }
        let mut orthonormal = true;
        for i in 0..matrices.len() {
            for j in 0..=i {
                let g = hs_inner(&matrices[i], &matrices[j])?;
                let target = if i == j { 1.0 } else { 0.0 };
                if (g - target).abs() > STRUCT_TOL {
                    orthonormal = false;
                }
            }
        }
        let traceless = matrices
            .iter()
            .all(|m| m.trace().abs() <= STRUCT_TOL * n as f64);
        Ok(CoefficientFrame {
            n,
            matrices,
            orthonormal,
            traceless,
            entries: None,
        })
    }

    pub fn empty() -> Self {
        CoefficientFrame {
            n: 0,
            matrices: Vec::new(),
            orthonormal: true,
            traceless: true,
            entries: None,
        }
    }

    /// The coefficient matrices; dense copies for entry frames.
    pub fn matrices(&self) -> Cow<'_, [HermitianMatrix]> {
        match &self.entries {
            Some(es) => Cow::Owned(es.iter().map(|e| e.matrix(self.n)).collect()),
            None => Cow::Borrowed(&self.matrices),
        }
    }

    pub fn d(&self) -> usize {
        self.entries.as_ref().map_or(self.matrices.len(), |e| e.len())
    }

    /// Matrix dimension, 0 for an empty frame.
    pub fn n(&self) -> usize {
        if self.d() == 0 {
            0
        } else {
            self.n
        }
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn is_traceless(&self) -> bool {
        self.traceless
    }

    pub fn entries(&self) -> Option<&[EntrySelector]> {
        self.entries.as_deref()
    }

    /// Sorted, deduplicated row indices touched by an entry frame.
    pub fn entry_rows(&self) -> Option<Vec<usize>> {
        self.entries.as_ref().map(|es| {
            let mut rows: Vec<usize> = es.iter().flat_map(|e| e.indices()).collect();
            rows.sort_unstable();
            rows.dedup();
            rows
        })
    }

    /// `Σ ‖B_i‖²_op`.
    pub fn sum_op_sq(&self) -> f64 {
        if let Some(es) = &self.entries {
            return es.iter().map(|e| e.norms().0).sum();
        }
        self.matrices.iter().map(|b| b.op_norm().powi(2)).sum()
    }

    /// `Σ ‖B_i‖₄²`.
    pub fn sum_schatten4_sq(&self) -> f64 {
        if let Some(es) = &self.entries {
            return es.iter().map(|e| e.norms().1).sum();
        }
        self.matrices
            .iter()
            .map(|b| b.schatten_norm(4.0).unwrap_or(0.0).powi(2))
            .sum()
    }

    /// `Σ 1 / srank B_i`.
    pub fn sum_inv_srank(&self) -> Result<f64> {
        if let Some(es) = &self.entries {
            return Ok(es.iter().map(|e| 1.0 / e.norms().2).sum());
        }
        self.matrices
            .iter()
            .map(|b| b.stable_rank().map(|s| 1.0 / s))
            .sum()
    }
}

/// Gram matrix and shift of an affine (non-normalized) coefficient family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineData {
    /// `Σ_ij = tr B̃_i B̃_j`, `d × d`, row-major.
    pub sigma: Vec<Vec<f64>>,
    /// `v_i = (1/n)(tr Λ)(tr B_i)`.
    pub shift: Vec<f64>,
}

impl AffineData {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let d = self.sigma.len();
        DMatrix::from_fn(d, d, |i, j| self.sigma[i][j])
    }

    /// Eigenvalues of Σ, ascending.
    pub fn sigma_eigenvalues(&self) -> Vec<f64> {
        if self.sigma.is_empty() {
            return Vec::new();
        }
        let mut v: Vec<f64> = SymmetricEigen::new(self.sigma_matrix())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `‖Σ^{1/2}‖_op`.
    pub fn sqrt_sigma_op(&self) -> f64 {
        self.sigma_eigenvalues()
            .last()
            .map(|v| v.max(0.0).sqrt())
            .unwrap_or(0.0)
    }

    /// Symmetric square root of Σ (negative rounding eigenvalues clamped).
    pub fn sqrt_sigma(&self) -> DMatrix<f64> {
        let d = self.sigma.len();
        if d == 0 {
            return DMatrix::zeros(0, 0);
        }
        let eig = SymmetricEigen::new(self.sigma_matrix());
        let mut root = DMatrix::zeros(d, d);
        for k in 0..d {
            let w = eig.eigenvalues[k].max(0.0).sqrt();
            let v = eig.eigenvectors.column(k);
            root += v * v.transpose() * w;
        }
        root
    }
}

/// `X_i = tr(A B_i)`.
pub fn marginal_vector(a: &HermitianMatrix, frame: &CoefficientFrame) -> Result<Vec<f64>> {
    if frame.d() > 0 && frame.n() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: frame.n(),
        });
    }
    if let Some(es) = frame.entries() {
        return Ok(es.iter().map(|e| e.read(|r, c| a.get(r, c))).collect());
    }
    frame
        .matrices()
        .iter()
        .map(|b| {
            if b.dim() != a.dim() {
                return Err(Error::DimensionMismatch {
                    expected: a.dim(),
                    found: b.dim(),
                });
            }
            Ok(trace_product(a.matrix(), b.matrix()).re)
        })
        .collect()
}

/// Coefficient frame picking diagonal entries and scaled real/imaginary parts
/// of above-diagonal entries, together with its affine data `Σ = I_d - J_r/n`
/// (with `r` the number of diagonal picks) and zero shift.
///
/// Selectors keep their given order; `Σ` is computed for that order.
pub fn entry_frame(
    n: usize,
    picks: &[EntrySelector],
    field: Field,
) -> Result<(CoefficientFrame, AffineData)> {
    for (i, p) in picks.iter().enumerate() {
        match *p {
            EntrySelector::Diagonal(j) if j >= n => {
                return Err(Error::invalid(format!("selector {p} out of range for n={n}")))
            }
            EntrySelector::Real(j, k) | EntrySelector::Imag(j, k) => {
                if j >= k {
                    return Err(Error::invalid(format!("selector {p} needs j < k")));
                }
                if k >= n {
                    return Err(Error::invalid(format!("selector {p} out of range for n={n}")));
                }
                if matches!(p, EntrySelector::Imag(..)) && field == Field::Real {
                    return Err(Error::invalid(format!(
                        "imaginary selector {p} in a real-field frame"
                    )));
                }
            }
            _ => {}
        }
        if picks[..i].contains(p) {
            return Err(Error::invalid(format!("duplicate selector {p}")));
        }
    }
    let d = picks.len();
    let mut sigma = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let di = matches!(picks[i], EntrySelector::Diagonal(_));
            let dj = matches!(picks[j], EntrySelector::Diagonal(_));
            sigma[i][j] = if i == j { 1.0 } else { 0.0 } - if di && dj { 1.0 / n as f64 } else { 0.0 };
        }
    }
    let traceless = !picks.iter().any(|p| matches!(p, EntrySelector::Diagonal(_)));
    let frame = CoefficientFrame {
        n,
        matrices: Vec::new(),
        orthonormal: true,
        traceless,
        entries: Some(picks.to_vec()),
    };
    Ok((
        frame,
        AffineData {
            sigma,
            shift: vec![0.0; d],
        },
    ))
}

/// `Σ_ij = tr B̃_i B̃_j` and `v_i = (1/n)(tr Λ)(tr B_i)`.
pub fn gram_and_shift(raw: &[HermitianMatrix], spectrum: &Spectrum) -> Result<AffineData> {
    let n = spectrum.len();
    for b in raw {
        if b.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.dim(),
            });
        }
    }
    let centered: Vec<HermitianMatrix> = raw.iter().map(|b| b.traceless()).collect();
    let d = raw.len();
    let mut sigma = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let g = hs_inner(&centered[i], &centered[j])?;
            sigma[i][j] = g;
            sigma[j][i] = g;
        }
    }
    let tr_l = spectrum.trace();
    let shift = raw.iter().map(|b| tr_l * b.trace() / n as f64).collect();
    Ok(AffineData { sigma, shift })
}

/// Gram–Schmidt in the Hilbert–Schmidt inner product after traceless
/// recentering. Fails with the offending index when a residual falls below
/// `1e-10` relative to its input.
pub fn orthonormalize_traceless(raw: &[HermitianMatrix]) -> Result<CoefficientFrame> {
    let mut out: Vec<HermitianMatrix> = Vec::with_capacity(raw.len());
    for (index, b) in raw.iter().enumerate() {
        if let Some(first) = out.first() {
            if first.dim() != b.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: b.dim(),
                });
            }
        }
        let mut v = b.traceless();
        // Two passes for numerical orthogonality.
        for _ in 0..2 {
            for q in &out {
                let c = hs_inner(&v, q)?;
                v = v.sub(&q.scaled(c))?;
            }
        }
        let norm = v.hs_norm();
        let scale = b.hs_norm().max(f64::MIN_POSITIVE);
        if norm <= STRUCT_TOL * scale {
            return Err(Error::RankDeficient {
                index,
                residual: norm,
            });
        }
        out.push(v.scaled(1.0 / norm).traceless());
    }
    let mut frame = CoefficientFrame::new(out)?;
    frame.orthonormal = true;
    frame.traceless = true;
    Ok(frame)
}

/// Partial trace over the second tensor factor of an `ns × ns` matrix:
/// `(tr₂ M)_ab = Σ_c M_{(a,c),(b,c)}` with `(a, c) -> a s + c`.
pub fn partial_trace_second(m: &CMatrix, n: usize, s: usize) -> Result<HermitianMatrix> {
    if !m.is_square() || n == 0 || s == 0 || m.nrows() != n * s {
        return Err(Error::invalid(format!(
            "partial trace: dimension {}x{} is not {n}*{s}",
            m.nrows(),
            m.ncols()
        )));
    }
    let out = CMatrix::from_fn(n, n, |a, b| {
        (0..s).map(|c| m[(a * s + c, b * s + c)]).sum::<C64>()
    });
    Ok(HermitianMatrix::from_exact(out, Field::Complex))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    fn diag(v: &[f64]) -> HermitianMatrix {
        HermitianMatrix::diagonal(v, Field::Real)
    }

    #[test]
    fn traceless_examples() {
        assert!(traceless(&HermitianMatrix::identity(4, Field::Real)).hs_norm() < 1e-15);
        assert_eq!(traceless(&diag(&[1.0, -1.0])), diag(&[1.0, -1.0]));
        assert_eq!(traceless(&diag(&[2.0, 0.0])), diag(&[1.0, -1.0]));
    }

    #[test]
    fn sparse_eigenvalue_paths_agree_with_dense() {
        // Supported on rows {1, 4} of 6: reduced path.
        let mut m = CMatrix::zeros(6, 6);
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(1, 4)] = C64::new(0.3, -0.7);
        m[(4, 1)] = C64::new(0.3, 0.7);
        m[(4, 4)] = C64::new(-1.0, 0.0);
        let a = HermitianMatrix::from_matrix(m.clone(), Field::Complex);
        let dense: Vec<f64> = {
            let mut v: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        };
        for (x, y) in a.eigenvalues().iter().zip(&dense) {
            assert!(close(*x, *y, 1e-13));
        }
        assert_eq!(diag(&[3.0, -1.0, 2.0]).eigenvalues(), vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn hs_inner_examples() {
        let i2 = HermitianMatrix::identity(2, Field::Real);
        let z = diag(&[1.0, -1.0]);
        assert_eq!(hs_inner(&i2, &i2).unwrap(), 2.0);
        assert_eq!(hs_inner(&z, &i2).unwrap(), 0.0);
        assert_eq!(hs_inner(&z, &z).unwrap(), 2.0);
        let i3 = HermitianMatrix::identity(3, Field::Real);
        assert!(matches!(hs_inner(&i2, &i3), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn schatten_examples() {
        let i3 = HermitianMatrix::identity(3, Field::Real);
        assert!(close(schatten_norm(&i3, 2.0).unwrap(), 3f64.sqrt(), 1e-14));
        assert!(close(schatten_norm(&diag(&[3.0, 4.0]), f64::INFINITY).unwrap(), 4.0, 1e-14));
        let v = schatten_norm(&diag(&[1.0, 1.0, -1.0, -1.0]), 4.0).unwrap();
        assert!(close(v, 4f64.powf(0.25), 1e-14));
        assert!(schatten_norm(&i3, 0.5).is_err());
    }

    #[test]
    fn stable_rank_examples() {
        assert!(close(stable_rank(&HermitianMatrix::identity(5, Field::Real)).unwrap(), 5.0, 1e-12));
        let mut e = vec![0.0; 4];
        e[0] = 1.0;
        assert!(close(stable_rank(&diag(&e)).unwrap(), 1.0, 1e-12));
        let s = Spectrum::pm_sqrt_n(8).unwrap();
        assert!(close(stable_rank(&s.to_matrix(Field::Real)).unwrap(), 8.0, 1e-10));
        assert!(matches!(stable_rank(&HermitianMatrix::zeros(3, Field::Real)), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn marginal_vector_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let frame = CoefficientFrame::new(vec![diag(&[h, -h])]).unwrap();
        assert!(frame.is_orthonormal() && frame.is_traceless());
        let x = marginal_vector(&HermitianMatrix::identity(2, Field::Real), &frame).unwrap();
        assert!(close(x[0], 0.0, 1e-15));
        let x = marginal_vector(&diag(&[1.0, -1.0]), &frame).unwrap();
        assert!(close(x[0], 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn entry_frame_examples() {
        let (f, a) = entry_frame(3, &["R 1 2".parse().unwrap()], Field::Complex).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(f.matrices()[0].get(0, 1), C64::new(h, 0.0));
        assert_eq!(f.matrices()[0].get(1, 0), C64::new(h, 0.0));
        assert_eq!(a.sigma, vec![vec![1.0]]);
        assert!(f.is_traceless());

        let (f, a) = entry_frame(3, &["D 1".parse().unwrap()], Field::Complex).unwrap();
        assert_eq!(f.matrices()[0].get(0, 0), C64::new(1.0, 0.0));
        assert!(close(a.sigma[0][0], 1.0 - 1.0 / 3.0, 1e-15));
        assert!(!f.is_traceless());

        let picks = ["D 1", "D 2"].map(|s| s.parse().unwrap());
        let (_, a) = entry_frame(4, &picks, Field::Complex).unwrap();
        let ev = a.sigma_eigenvalues();
        assert!(close(ev[0], 0.5, 1e-14) && close(ev[1], 1.0, 1e-14));
    }

    #[test]
    fn entry_frame_errors() {
        let r12: EntrySelector = "R 1 2".parse().unwrap();
        assert!(entry_frame(3, &[r12, r12], Field::Complex).is_err());
        assert!(entry_frame(3, &[EntrySelector::Real(1, 0)], Field::Complex).is_err());
        assert!(entry_frame(3, &["I 1 2".parse().unwrap()], Field::Real).is_err());
        assert!("X 1".parse::<EntrySelector>().is_err());
        assert!("D 0".parse::<EntrySelector>().is_err());
    }

    #[test]
    fn entry_frame_reads_entries() {
        let picks: Vec<EntrySelector> = ["D 2", "R 1 3", "I 2 3"].iter().map(|s| s.parse().unwrap()).collect();
        let (frame, _) = entry_frame(3, &picks, Field::Complex).unwrap();
        let a = HermitianMatrix::from_matrix(
            CMatrix::from_fn(3, 3, |r, c| {
                let base = C64::new((r + 2 * c) as f64, (r as f64 - c as f64) * 0.7);
                if r == c { C64::new(base.re, 0.0) } else { base }
            }),
            Field::Complex,
        );
        let x = marginal_vector(&a, &frame).unwrap();
        for (p, xi) in picks.iter().zip(&x) {
            assert!(close(p.read(|r, c| a.get(r, c)), *xi, 1e-12));
        }
    }

    #[test]
    fn gram_and_shift_examples() {
        let s13 = Spectrum::new(vec![1.0, 3.0]).unwrap();
        let a = gram_and_shift(&[HermitianMatrix::identity(2, Field::Real)], &s13).unwrap();
        assert!(close(a.sigma[0][0], 0.0, 1e-15));
        assert!(close(a.shift[0], 4.0, 1e-15));

        let e11 = diag(&[1.0, 0.0]);
        let a = gram_and_shift(&[e11], &s13).unwrap();
        assert!(close(a.sigma[0][0], 0.5, 1e-15));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let frame = [diag(&[h, -h, 0.0]), diag(&[0.0, h, -h])];
        let frame = orthonormalize_traceless(&frame).unwrap();
        let a = gram_and_shift(&frame.matrices(), &Spectrum::new(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(a.sigma[i][j], if i == j { 1.0 } else { 0.0 }, 1e-12));
            }
            assert!(close(a.shift[i], 0.0, 1e-12));
        }
    }

    #[test]
    fn orthonormalize_examples() {
        let f = orthonormalize_traceless(&[diag(&[1.0, -1.0])]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((f.matrices()[0].matrix() - diag(&[h, -h]).matrix()).norm() < 1e-15);

        let err = orthonormalize_traceless(&[HermitianMatrix::identity(3, Field::Real)]);
        assert!(matches!(err, Err(Error::RankDeficient { index: 0, .. })));

        let f = orthonormalize_traceless(&[diag(&[1.0, -1.0, 0.0]), diag(&[1.0, 1.0, -2.0])]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let g = hs_inner(&f.matrices()[i], &f.matrices()[j]).unwrap();
                assert!(close(g, if i == j { 1.0 } else { 0.0 }, 1e-12));
            }
        }
        assert!(f.is_orthonormal() && f.is_traceless());

        // I and diag(2,0) recenter to multiples of one another.
        let err = orthonormalize_traceless(&[diag(&[1.0, -1.0]), diag(&[2.0, 0.0])]);
        assert!(matches!(err, Err(Error::RankDeficient { index: 1, .. })));
    }

    #[test]
    fn partial_trace_examples() {
        let a = HermitianMatrix::from_matrix(
            CMatrix::from_fn(2, 2, |r, c| C64::new((r + c) as f64, if r < c { 1.0 } else if r > c { -1.0 } else { 0.0 })),
            Field::Complex,
        );
        let b = diag(&[0.5, 2.0, -1.0]);
        let pt = partial_trace_second(a.kron(&b).matrix(), 2, 3).unwrap();
        assert!((pt.matrix() - a.scaled(b.trace()).matrix()).norm() < 1e-14);

        let pt = partial_trace_second(&CMatrix::identity(6, 6), 2, 3).unwrap();
        assert!((pt.matrix() - CMatrix::identity(2, 2) * C64::new(3.0, 0.0)).norm() < 1e-15);

        assert!(partial_trace_second(&CMatrix::identity(5, 5), 2, 3).is_err());
    }

    #[test]
    fn hermitian_construction_flags_drift() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        let h = HermitianMatrix::from_matrix(m, Field::Real);
        assert!(!h.is_valid());
        assert_eq!(h.get(0, 1), h.get(1, 0));
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(1e-12, 0.0);
        assert!(HermitianMatrix::from_matrix(m, Field::Real).is_valid());
    }

    #[test]
    fn json_round_trip() {
        let a = HermitianMatrix::from_matrix(
            CMatrix::from_fn(2, 2, |r, c| C64::new((r + c) as f64 * 1.5, if r == 0 && c == 1 { 0.5 } else if r == 1 && c == 0 { -0.5 } else { 0.0 })),
            Field::Complex,
        );
        let s = serde_json::to_string(&a).unwrap();
        assert!(s.contains("\"im\""));
        let back: HermitianMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        let r = diag(&[1.0, 2.0]);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"n":2,"field":"real","re":[1.0,0.0,0.0,2.0]}"#);
        let sp: Spectrum = serde_json::from_str("[1.0, -1.0]").unwrap();
        assert_eq!(sp.values(), &[1.0, -1.0]);
        assert!(serde_json::from_str::<Spectrum>("[]").is_err());
    }
}
