//! Monte Carlo validation of the closed-form unitary and sphere moments.

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_traceless, trace_product, Field, HermitianMatrix, Spectrum};
use crate::oracles::{
    expected_qfq, expected_tr_abac, expected_tr_abac_general, expected_trqf_trqg, quad_form_cov, quad_form_deg4,
    sphere_abs_moment, sphere_mixed_moment, unitary_degree4_moment, Deg4Kind, MomentQuery,
};
use crate::samplers::{conjugate_diagonal, gaussian_ensemble, haar_matrix};
use crate::stats::{chunked, MomentsVec, DEFAULT_CHUNK};
use crate::{CMatrix, C64};

use super::{ExperimentConfig, ExperimentReport, Table, ThresholdProvenance};

const DEG4_PATTERNS: [(usize, usize, usize, usize); 5] = [(0, 0, 0, 0), (0, 0, 1, 0), (0, 1, 0, 0), (0, 0, 1, 1), (0, 1, 1, 0)];

struct Inputs {
    n: usize,
    lambda: Vec<f64>,
    b: HermitianMatrix,
    c: HermitianMatrix,
    /// `B + I/2`, for the trace-dependent terms of the `Q` moments.
    f: CMatrix,
    abs_patterns: Vec<Vec<u32>>,
}

fn abs_patterns(n: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for head in [vec![4], vec![2, 2], vec![4, 2], vec![2, 2, 2]] {
        if head.len() <= n {
            let mut a = head.clone();
            a.resize(n, 0);
            out.push(a);
        }
    }
    out
}

/// Names and exact values, in the order produced by [`estimates`].
fn targets(inp: &Inputs, spectrum: &Spectrum) -> Result<Vec<(String, f64)>> {
    let n = inp.n;
    let mut t = Vec::new();
    for (i, j, k, l) in DEG4_PATTERNS {
        t.push((format!("u4_{i}{j}{k}{l}"), unitary_degree4_moment(i, j, k, l, n)?));
    }
    let ea2 = crate::oracles::expected_a_squared(spectrum);
    t.push(("a2_00".into(), ea2.get(0, 0).re));
    t.push(("a2_01_re".into(), ea2.get(0, 1).re));
    t.push(("tr_abac".into(), expected_tr_abac_general(spectrum, &inp.b, &inp.c)?));
    t.push(("tr_qf_tr_qg".into(), expected_trqf_trqg(&inp.f, inp.c.matrix())?.re));
    let qfq = expected_qfq(&inp.f)?;
    t.push(("qfq_00_re".into(), qfq[(0, 0)].re));
    t.push(("qfq_01_re".into(), qfq[(0, 1)].re));
    t.push(("qfq_01_im".into(), qfq[(0, 1)].im));
    for a in &inp.abs_patterns {
        let label: Vec<String> = a.iter().take_while(|&&x| x > 0).map(|x| x.to_string()).collect();
        t.push((format!("sphere_abs_{}", label.join("_")), sphere_abs_moment(a)?));
    }
    t.push((
        "sphere_mixed_001_010".into(),
        sphere_mixed_moment(&MomentQuery {
            top: vec![0, 0, 1],
            bottom: vec![0, 1, 0],
            n,
        })?,
    ));
    t.push((
        "sphere_mixed_01_00".into(),
        sphere_mixed_moment(&MomentQuery {
            top: vec![0, 1],
            bottom: vec![0, 0],
            n,
        })?,
    ));
    t.push(("quad_cov".into(), quad_form_cov(&inp.b, &inp.c)?));
    for kind in Deg4Kind::ALL {
        t.push((format!("quad_{}", kind.name()), quad_form_deg4(&inp.b, &inp.c, kind)?));
    }
    Ok(t)
}

fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

fn apply(m: &CMatrix, z: &[C64]) -> Vec<C64> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)] * z[c]).sum()).collect()
}

/// One draw of every estimator, from a single Haar `U`. The sphere vector
/// is the first column of `U` and `Q` is built from the first two.
fn estimates(inp: &Inputs, u: &CMatrix) -> Vec<f64> {
    let n = inp.n;
    let mut out = Vec::with_capacity(32);
    for (i, j, k, l) in DEG4_PATTERNS {
        out.push((u[(i, j)] * u[(k, l)] * u[(i, l)].conj() * u[(k, j)].conj()).re);
    }
    let a = conjugate_diagonal(u, &inp.lambda, Field::Complex);
    let am = a.matrix();
    let a2 = am * am;
    out.push(a2[(0, 0)].re);
    out.push(a2[(0, 1)].re);
    let ab = am * inp.b.matrix();
    let ac = am * inp.c.matrix();
    out.push(trace_product(&ab, &ac).re);
    let v1 = u.column(0);
    let v2 = u.column(1);
    let q = &v1 * v2.adjoint() - &v2 * v1.adjoint();
    let tqf = trace_product(&q, &inp.f);
    let tqg = trace_product(&q, inp.c.matrix());
    out.push((tqf * tqg).re);
    let qfq = &q * &inp.f * &q;
    out.push(qfq[(0, 0)].re);
    out.push(qfq[(0, 1)].re);
    out.push(qfq[(0, 1)].im);
    let z: Vec<C64> = (0..n).map(|i| u[(i, 0)]).collect();
    let p: Vec<f64> = z.iter().map(|w| w.norm_sqr()).collect();
    for alpha in &inp.abs_patterns {
        out.push(alpha.iter().zip(&p).map(|(&e, &x)| x.powi(e as i32 / 2)).product());
    }
    out.push((z[0] * z[0] * z[1] * z[0].conj() * z[1].conj() * z[0].conj()).re);
    out.push((z[0] * z[1] * z[0].conj() * z[0].conj()).re);
    let bz = apply(inp.b.matrix(), &z);
    let cz = apply(inp.c.matrix(), &z);
    let qb = inner(&bz, &z).re;
    let qc = inner(&cz, &z).re;
    out.push(qb * qc);
    let bc = inner(&bz, &cz);
    for kind in Deg4Kind::ALL {
        out.push(match kind {
            Deg4Kind::Sq => (bc * bc).re,
            Deg4Kind::AbsSq => bc.norm_sqr(),
            Deg4Kind::Cross => (bc * qb * qc).re,
            Deg4Kind::Full => qb * qb * qc * qc,
        });
    }
    out
}

/// Compares every closed-form moment with its Monte Carlo mean; passes iff
/// all `|z| ≤ tolerances.z`. Also checks two exact identities of the
/// `E tr(ABAC)` formulas.
pub fn verify_moment_oracles(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let n = cfg.n;
    if !(2..=64).contains(&n) {
        return Err(Error::Config(format!("oracle validation needs 2 <= n <= 64, got {n}")));
    }
    if cfg.field != Field::Complex {
        return Err(Error::Config("closed-form moments are for the unitary group; use field = complex".into()));
    }
    let spectrum = cfg.resolve_spectrum()?;
    let mut coef_rng = cfg.rng.fork("coefficients").rng();
    let raw = vec![
        gaussian_ensemble(n, Field::Complex, &mut coef_rng)?,
        gaussian_ensemble(n, Field::Complex, &mut coef_rng)?,
    ];
    let frame = orthonormalize_traceless(&raw)?;
    let (b, c) = (frame.matrices()[0].clone(), frame.matrices()[1].clone());
    let f = b.matrix() + CMatrix::identity(n, n) * C64::new(0.5, 0.0);
    let inp = Inputs {
        n,
        lambda: spectrum.values().to_vec(),
        b,
        c,
        f,
        abs_patterns: abs_patterns(n),
    };
    let targets = targets(&inp, &spectrum)?;

    let sample_stream = cfg.rng.fork("samples");
    let parts = chunked(sample_stream, cfg.m, DEFAULT_CHUNK, |rng, count| -> Result<MomentsVec> {
        let mut acc = MomentsVec::new(targets.len());
        for _ in 0..count {
            let u = haar_matrix(n, Field::Complex, rng)?;
            acc.push(&estimates(&inp, &u));
        }
        Ok(acc)
    });
    let mut acc = MomentsVec::new(targets.len());
    for p in parts {
        acc.merge(&p?);
    }

    let mut report = ExperimentReport::new(cfg);
    let mut table = Table::new(&["estimate", "se", "target", "z"]);
    let mut max_z: f64 = 0.0;
    for ((name, target), mom) in targets.iter().zip(&acc.0) {
        let z = mom.z_score(*target);
        max_z = max_z.max(z.abs());
        table.push_labeled(name, vec![mom.mean(), mom.se(), *target, z]);
        report.measure(&format!("z.{name}"), z);
    }
    report.replicas = table;
    report.measure("max_abs_z", max_z);
    report.headline("max_abs_z");
    report.check_le("all_oracles_within_z", "max_abs_z", cfg.tolerances.z, ThresholdProvenance::Derived);

    // Scalar spectrum: E tr(ABAC) = c² tr(BC) exactly.
    let c0 = 1.5;
    let scalar = Spectrum::new(vec![c0; n])?;
    let direct = c0 * c0 * trace_product(inp.b.matrix(), inp.c.matrix()).re;
    let gap = (expected_tr_abac_general(&scalar, &inp.b, &inp.c)? - direct).abs();
    report.measure("scalar_abac_gap", gap);
    report.check_le("scalar_abac_identity", "scalar_abac_gap", 1e-10, ThresholdProvenance::Derived);
    let recentered = spectrum.recentered();
    let stated = expected_tr_abac(&recentered, &inp.b, &inp.c)?;
    let general = expected_tr_abac_general(&recentered, &inp.b, &inp.c)?;
    report.measure("traceless_abac_gap", (stated - general).abs());
    report.check_le("traceless_abac_identity", "traceless_abac_gap", 1e-10, ThresholdProvenance::Derived);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run, Scenario, Status};

    #[test]
    fn small_run_passes_and_is_reproducible() {
        let mut cfg = ExperimentConfig::defaults(Scenario::Oracles);
        cfg.m = 20_000;
        let a = run(&cfg).unwrap();
        assert_eq!(a.status, Status::Pass, "{:?}", a.replicas);
        let b = run(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        cfg.rng.stream_id = 1;
        let c = run(&cfg).unwrap();
        assert_eq!(c.status, Status::Pass);
        assert_ne!(a.measured["z.tr_abac"], c.measured["z.tr_abac"]);
    }

    #[test]
    fn estimator_count_matches_targets() {
        for n in [2, 3, 5] {
            let spectrum = Spectrum::new((0..n).map(|i| i as f64).collect()).unwrap();
            let b = HermitianMatrix::diagonal(&vec![0.0; n], Field::Complex);
            let inp = Inputs {
                n,
                lambda: spectrum.values().to_vec(),
                b: b.clone(),
                c: b,
                f: CMatrix::identity(n, n),
                abs_patterns: abs_patterns(n),
            };
            let u = CMatrix::identity(n, n);
            assert_eq!(estimates(&inp, &u).len(), targets(&inp, &spectrum).unwrap().len());
        }
    }

    #[test]
    fn rejects_out_of_scope() {
        let mut cfg = ExperimentConfig::defaults(Scenario::Oracles);
        cfg.n = 65;
        cfg.spectrum = crate::experiments::SpectrumSpec::Ladder { offset: 0.0 };
        assert!(run(&cfg).is_err());
        cfg.n = 3;
        cfg.field = Field::Real;
        assert!(run(&cfg).is_err());
    }
}
