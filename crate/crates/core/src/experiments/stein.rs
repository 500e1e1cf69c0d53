//! Conditional drift and covariance of the exchangeable pair `(A, A_ε)`.
//!
//! `A_ε = U V_ε Λ V_ε* U*` with `V_ε = I + K (R_ε − I) K*` and `K` two Haar
//! columns. Each draw of `K` is used with `+ε` and `−ε`; the pair average
//! cancels the first-order term exactly, leaving the `ε²` drift.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{trace_product, Field, HermitianMatrix, Spectrum};
use crate::oracles::{expected_a_squared, expected_tr_abac_general};
use crate::samplers::{conjugate_diagonal, haar_matrix, haar_rows, rotation_from_frame};
use crate::stats::{chunked, Moments, MomentsVec, DEFAULT_CHUNK};
use crate::{CMatrix, C64};

use super::{ExperimentConfig, ExperimentReport, Table, ThresholdProvenance};

/// `V Λ V* − Λ` for `V = I + E`, as `EΛ + ΛE* + EΛE*`.
fn rotated_difference(e: &CMatrix, lambda: &[f64]) -> CMatrix {
    let mut el = e.clone();
    for (c, &l) in lambda.iter().enumerate() {
        el.column_mut(c).scale_mut(l);
    }
    let elh = el.adjoint();
    &el + &elh + &el * e.adjoint()
}

/// Hermitian matrix ↔ `n²` real parameters: real parts on and above the
/// diagonal, then imaginary parts above it.
fn to_params(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in j..n {
            out.push(m[(j, k)].re);
        }
    }
    for j in 0..n {
        for k in j + 1..n {
            out.push(m[(j, k)].im);
        }
    }
    out
}

fn from_params(p: &[f64], n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    let mut it = p.iter();
    for j in 0..n {
        for k in j..n {
            let v = *it.next().expect("n² params");
            m[(j, k)].re = v;
            m[(k, j)].re = v;
        }
    }
    for j in 0..n {
        for k in j + 1..n {
            let v = *it.next().expect("n² params");
            m[(j, k)].im = v;
            m[(k, j)].im = -v;
        }
    }
    m
}

fn op_norm(m: &CMatrix) -> f64 {
    HermitianMatrix::from_matrix(m.clone(), Field::Complex).op_norm()
}

/// `2/((n−1)(n+1)) · tr[A²BᵢBⱼ + A²BⱼBᵢ − 2ABᵢABⱼ]`.
pub fn covariance_target(a: &CMatrix, frame: &[HermitianMatrix]) -> DMatrix<f64> {
    let n = a.nrows() as f64;
    let a2 = a * a;
    let d = frame.len();
    let c = 2.0 / ((n - 1.0) * (n + 1.0));
    DMatrix::from_fn(d, d, |i, j| {
        let (bi, bj) = (frame[i].matrix(), frame[j].matrix());
        let t = trace_product(&a2, &(bi * bj)) + trace_product(&a2, &(bj * bi)) - trace_product(&(a * bi), &(a * bj)) * 2.0;
        c * t.re
    })
}

/// Checks, at a fixed Haar `U`:
/// - drift: `‖E[A_ε − A]/ε² + (2n/(n²−1)) Ã‖_op / ‖(2n/(n²−1)) Ã‖_op ≤ 5ε + 5·SE`;
/// - covariance: every entry of `E[(X_ε − X)(X_ε − X)ᵀ]/ε²` within
///   `5 SE + ε max|T|` of the closed form `T`;
/// - the closed form averaged over `U` against the oracle route, for
///   `B = Λ̃/‖Λ̃‖_HS`.
pub fn verify_stein_conditions(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = cfg.n;
    let eps = cfg.epsilon;
    if !(2..=64).contains(&n) {
        return Err(Error::Config(format!("stein check needs 2 <= n <= 64, got {n}")));
    }
    if !(eps > 1e-4 && eps < 1e-2) {
        return Err(Error::Config(format!("epsilon must lie in (1e-4, 1e-2), got {eps}")));
    }
    if cfg.field != Field::Complex {
        return Err(Error::Config("closed forms are for the unitary group; use field = complex".into()));
    }
    let spectrum = cfg.resolve_spectrum()?;
    let frame = cfg.resolve_frame()?;
    if frame.n() != 0 && frame.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: frame.n(),
        });
    }
    let bs = frame.matrices();
    let d = bs.len();
    let lambda = spectrum.values().to_vec();
    let u = haar_matrix(n, Field::Complex, &mut cfg.rng.fork("u").rng())?;
    let a = conjugate_diagonal(&u, &lambda, Field::Complex);
    let nf = n as f64;
    let alpha = 2.0 * nf / (nf * nf - 1.0);
    let drift_target = a.traceless().matrix() * C64::new(-alpha, 0.0);
    let cov_target = covariance_target(a.matrix(), &bs);

    let mut report = ExperimentReport::new(cfg);
    report.measure("alpha", alpha);
    report.measure("sigma_sq", spectrum.hs_norm_sq() / (nf * nf - 1.0));
    report.measure("trace_lambda", spectrum.trace());

    if spectrum.is_scalar() {
        // V (cI) V* = cI: the pair is constant and both sides vanish.
        report.measure("drift_abs_error", 0.0);
        report.measure("covariance_max_abs", 0.0);
        report.check_le("drift_zero", "drift_abs_error", 0.0, ThresholdProvenance::Derived);
        report.check_le("covariance_zero", "covariance_max_abs", 0.0, ThresholdProvenance::Derived);
        report.headline("drift_abs_error");
        report.note("scalar spectrum: A_ε = A identically");
        return Ok(report);
    }

    let cov_pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let um = u.clone();
    let uh = u.adjoint();
    let parts = chunked(cfg.rng.fork("pairs"), cfg.m, DEFAULT_CHUNK, |rng, count| -> Result<(MomentsVec, MomentsVec)> {
        let mut drift = MomentsVec::new(n * n);
        let mut cov = MomentsVec::new(cov_pairs.len());
        let mut xs = [vec![0.0; d], vec![0.0; d]];
        for _ in 0..count {
            let k = haar_rows(n, 2, Field::Complex, rng)?.to_matrix();
            let mut mean_diff = CMatrix::zeros(n, n);
            for (s, sign) in [1.0, -1.0].into_iter().enumerate() {
                let e = rotation_from_frame(&k, sign * eps) - CMatrix::identity(n, n);
                let diff = &um * rotated_difference(&e, &lambda) * &uh;
                for (i, b) in bs.iter().enumerate() {
                    xs[s][i] = trace_product(&diff, b.matrix()).re / eps;
                }
                mean_diff += diff;
            }
            mean_diff *= C64::new(0.5 / (eps * eps), 0.0);
            drift.push(&to_params(&mean_diff));
            let prods: Vec<f64> = cov_pairs
                .iter()
                .map(|&(i, j)| 0.5 * (xs[0][i] * xs[0][j] + xs[1][i] * xs[1][j]))
                .collect();
            cov.push(&prods);
        }
        Ok((drift, cov))
    });
    let mut drift = MomentsVec::new(n * n);
    let mut cov = MomentsVec::new(cov_pairs.len());
    for p in parts {
        let (a, b) = p?;
        drift.merge(&a);
        cov.merge(&b);
    }

    let est = from_params(&drift.0.iter().map(|m| m.mean()).collect::<Vec<_>>(), n);
    let se = from_params(&drift.0.iter().map(|m| m.se()).collect::<Vec<_>>(), n);
    let target_op = op_norm(&drift_target);
    let rel_err = op_norm(&(&est - &drift_target)) / target_op;
    // Frobenius norm of the entrywise standard errors bounds the spread of
    // the operator-norm error.
    let rel_se = se.norm() / target_op;
    report.measure("drift_rel_error", rel_err);
    report.measure("drift_rel_se", rel_se);
    report.measure("drift_target_op", target_op);
    report.check_le("drift", "drift_rel_error", 5.0 * eps + 5.0 * rel_se, ThresholdProvenance::Derived);
    report.headline("drift_rel_error");

    if d > 0 {
        let t_max = cov_target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut ratio: f64 = 0.0;
        let mut err = DMatrix::<f64>::zeros(d, d);
        let mut table = Table::new(&["i", "j", "estimate", "se", "target", "z"]);
        for (&(i, j), mom) in cov_pairs.iter().zip(&cov.0) {
            let t = cov_target[(i, j)];
            let diff = mom.mean() - t;
            err[(i, j)] = diff;
            err[(j, i)] = diff;
            ratio = ratio.max(diff.abs() / (5.0 * mom.se() + eps * t_max));
            table.push(vec![i as f64, j as f64, mom.mean(), mom.se(), t, mom.z_score(t)]);
        }
        report.replicas = table;
        let err_op = err.symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let t_op = cov_target.symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        report.measure("covariance_error_op", err_op);
        report.measure("covariance_target_op", t_op);
        report.measure("covariance_error_ratio", ratio);
        report.check_le("covariance", "covariance_error_ratio", 1.0, ThresholdProvenance::Derived);
    }

    cross_check_averaged_covariance(cfg, &spectrum, &mut report)?;
    Ok(report)
}

/// `E_U` of the closed-form covariance for `B = Λ̃/‖Λ̃‖_HS`, by Monte Carlo
/// over `U` and by `E A² = (‖Λ‖²/n) I` with the `E tr(ABAB)` oracle.
fn cross_check_averaged_covariance(cfg: &ExperimentConfig, spectrum: &Spectrum, report: &mut ExperimentReport) -> Result<()> {
    let n = spectrum.len();
    let nf = n as f64;
    let tl = spectrum.recentered();
    let b = tl.to_matrix(Field::Complex).scaled(1.0 / tl.hs_norm());
    let c = 2.0 / ((nf - 1.0) * (nf + 1.0));
    let b2 = b.matrix() * b.matrix();
    let ea2 = expected_a_squared(spectrum);
    let oracle = c * (2.0 * trace_product(ea2.matrix(), &b2).re - 2.0 * expected_tr_abac_general(spectrum, &b, &b)?);
    let draws = (cfg.m / 100).max(10_000);
    let lambda = spectrum.values().to_vec();
    let parts = chunked(cfg.rng.fork("average_u"), draws, DEFAULT_CHUNK, |rng, count| -> Result<Moments> {
        let mut m = Moments::new();
        for _ in 0..count {
            let u = haar_matrix(n, Field::Complex, rng)?;
            let a = conjugate_diagonal(&u, &lambda, Field::Complex);
            m.push(covariance_target(a.matrix(), std::slice::from_ref(&b))[(0, 0)]);
        }
        Ok(m)
    });
    let mut m = Moments::new();
    for p in parts {
        m.merge(&p?);
    }
    report.measure("averaged_covariance_mc", m.mean());
    report.measure("averaged_covariance_oracle", oracle);
    report.measure("averaged_covariance_abs_z", m.z_score(oracle).abs());
    report.check_le(
        "averaged_covariance_two_routes",
        "averaged_covariance_abs_z",
        cfg.tolerances.z,
        ThresholdProvenance::Derived,
    );
    Ok(())
}
