//! Spectra of principal truncations against GUE and the semicircle.

use crate::bounds::bound_submatrix_semicircle;
use crate::error::{Error, Result};
use crate::linalg::{Field, Spectrum};
use crate::metrics::{w1_1d, w1_spectral_semicircle, EmpiricalMeasure1D};
use crate::rng::RngStream;
use crate::samplers::{gaussian_ensemble, isospectral_entry_marginal};
use crate::stats::{chunked_range, Moments};

use super::{ExperimentConfig, ExperimentReport, Table, ThresholdProvenance};

/// Largest truncation size.
pub const MAX_K: usize = 64;

struct Replica {
    /// Eigenvalues of `k^{-1/2} M`, ascending.
    truncation: Vec<f64>,
    /// Eigenvalues of `k^{-1/2} G` for a `k × k` GUE draw, ascending.
    gue: Vec<f64>,
}

/// `M = (√(n²−1)/‖Λ‖_HS) · A[..k, ..k]` from `k` Haar rows.
fn replicas(spectrum: &Spectrum, k: usize, count: usize, field: Field, stream: RngStream) -> Result<Vec<Replica>> {
    let n = spectrum.len() as f64;
    let scale = (n * n - 1.0).sqrt() / spectrum.hs_norm() / (k as f64).sqrt();
    let rows: Vec<usize> = (0..k).collect();
    chunked_range(stream, count, 1, |_, r, _| -> Result<Replica> {
        let s = stream.child(r as u64);
        let block = isospectral_entry_marginal(spectrum, &rows, field, &mut s.fork("truncation").rng())?;
        let mut truncation: Vec<f64> = block.eigenvalues().into_iter().map(|v| v * scale).collect();
        truncation.sort_by(f64::total_cmp);
        let g = gaussian_ensemble(k, field, &mut s.fork("gue").rng())?;
        let inv = 1.0 / (k as f64).sqrt();
        let mut gue: Vec<f64> = g.eigenvalues().into_iter().map(|v| v * inv).collect();
        gue.sort_by(f64::total_cmp);
        Ok(Replica { truncation, gue })
    })
    .into_iter()
    .collect()
}

fn pooled(reps: &[Replica], pick: impl Fn(&Replica) -> &[f64]) -> Result<EmpiricalMeasure1D> {
    EmpiricalMeasure1D::new(reps.iter().flat_map(|r| pick(r).iter().copied()).collect())
}

/// Eigenvalues of the scaled `k × k` truncation, pooled over replicas,
/// against pooled `k × k` GUE eigenvalues (`w1_1d`), and the mean per-replica
/// distance to the semicircle. The theorem bound is reported; when it
/// exceeds 1 the assertions fall back to the fixed tolerances.
pub fn run_submatrix_semicircle(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let spectrum = cfg.resolve_spectrum()?;
    let k = cfg.k;
    if k == 0 || k > MAX_K || k > spectrum.len() {
        return Err(Error::Config(format!("k must lie in [1, min(n, {MAX_K})], got {k}")));
    }
    if cfg.replicas == 0 {
        return Err(Error::Config("replicas must be >= 1".into()));
    }
    let bound = bound_submatrix_semicircle(&spectrum, k, cfg.t, &cfg.constants)?;
    let reps = replicas(&spectrum, k, cfg.replicas, cfg.field, cfg.rng.fork("replicas"))?;

    let mut report = ExperimentReport::new(cfg);
    let mut table = Table::new(&["replica", "w1_semicircle", "w1_gue", "min_eig", "max_eig"]);
    let mut sc = Moments::new();
    for (r, rep) in reps.iter().enumerate() {
        let t = EmpiricalMeasure1D::new(rep.truncation.clone())?;
        let g = EmpiricalMeasure1D::new(rep.gue.clone())?;
        let w_sc = w1_spectral_semicircle(&t);
        sc.push(w_sc);
        table.push(vec![r as f64, w_sc, w1_1d(&t, &g)?, rep.truncation[0], rep.truncation[k - 1]]);
    }
    report.replicas = table;
    let pooled_t = pooled(&reps, |r| &r.truncation)?;
    let pooled_g = pooled(&reps, |r| &r.gue)?;
    let pooled_w1 = w1_1d(&pooled_t, &pooled_g)?;
    report.measure("pooled_w1_gue", pooled_w1);
    report.measure("mean_w1_semicircle", sc.mean());
    report.measure("se_w1_semicircle", sc.se());
    report.measure("gue_pooled_w1_semicircle", w1_spectral_semicircle(&pooled_g));
    report.measure("bound", bound.value);
    report.measure("semicircle_expectation_bound", bound.ingredient("semicircle_expectation").unwrap_or(f64::NAN));
    report.measure("tail_probability_bound", bound.ingredient("tail_probability").unwrap_or(f64::NAN));
    report.measure("turning_point_k", bound.ingredient("turning_point_k").unwrap_or(f64::NAN));
    report.headline("pooled_w1_gue");

    if k == 1 {
        report.note("k = 1: single entry, distances reported only");
        report.report_le("pooled_gue", "pooled_w1_gue", cfg.tolerances.pooled_w1);
        report.report_le("semicircle", "mean_w1_semicircle", cfg.tolerances.semicircle_w1);
    } else {
        if bound.is_vacuous() {
            report.note(format!(
                "bound {:.4} exceeds 1: vacuous at this scale; asserting fixed tolerances instead",
                bound.value
            ));
            report.report_le("w1_within_bound", "pooled_w1_gue", bound.value);
        } else {
            report.check_le("w1_within_bound", "pooled_w1_gue", bound.value, ThresholdProvenance::PaperBound);
        }
        report.check_le("pooled_gue", "pooled_w1_gue", cfg.tolerances.pooled_w1, ThresholdProvenance::Derived);
        report.check_le("semicircle", "mean_w1_semicircle", cfg.tolerances.semicircle_w1, ThresholdProvenance::Derived);
    }

    if let Some(contrast) = &cfg.contrast {
        let other = contrast.resolve(spectrum.len())?;
        let other_bound = bound_submatrix_semicircle(&other, k, cfg.t, &cfg.constants)?;
        let other_reps = replicas(&other, k, cfg.replicas, cfg.field, cfg.rng.fork("contrast"))?;
        let mut osc = Moments::new();
        for rep in &other_reps {
            osc.push(w1_spectral_semicircle(&EmpiricalMeasure1D::new(rep.truncation.clone())?));
        }
        let other_pooled = w1_1d(&pooled(&other_reps, |r| &r.truncation)?, &pooled_g)?;
        report.measure("contrast_mean_w1_semicircle", osc.mean());
        report.measure("contrast_pooled_w1_gue", other_pooled);
        report.measure("contrast_srank", other_bound.ingredient("srank").unwrap_or(f64::NAN));
        report.measure("contrast_minus_main", osc.mean() - sc.mean());
        report.check_ge("contrast_farther", "contrast_minus_main", 0.0, ThresholdProvenance::ReportedOnly);
    }
    report.keep_sample("eigenvalues", 1, pooled_t.atoms().to_vec(), cfg.rng.fork("replicas"));
    report.bound = Some(bound);
    Ok(report)
}
