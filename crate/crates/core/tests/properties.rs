use isospec::bounds::{bound_entries, bound_t0};
use isospec::linalg::{
    entry_frame, hs_inner, marginal_vector, partial_trace_second, traceless, CoefficientFrame, EntrySelector, Field,
    HermitianMatrix, Spectrum,
};
use isospec::metrics::{w1_1d, w1_multi, EmpiricalMeasure1D, EmpiricalSample};
use isospec::oracles::{sphere_abs_moment, sphere_mixed_moment, MomentQuery};
use isospec::samplers::{gaussian_ensemble, haar_matrix, induced_state, isospectral};
use isospec::stats::{chunked, with_workers};
use isospec::{RngStream, C64};
use proptest::prelude::*;

fn field() -> impl Strategy<Value = Field> {
    prop_oneof![Just(Field::Real), Just(Field::Complex)]
}

fn random_hermitian(n: usize, field: Field, seed: u64) -> HermitianMatrix {
    gaussian_ensemble(n, field, &mut RngStream::new(seed, 1).rng()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_chain(n in 1usize..9, f in field(), seed in any::<u64>()) {
        let a = random_hermitian(n, f, seed);
        let op = a.op_norm();
        let s4 = a.schatten_norm(4.0).unwrap();
        let hs = a.hs_norm();
        prop_assert!(op <= s4 * (1.0 + 1e-12) && s4 <= hs * (1.0 + 1e-12));
        let sr = a.stable_rank().unwrap();
        prop_assert!(sr >= 1.0 - 1e-12 && sr <= n as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn traceless_is_an_orthogonal_projection(n in 1usize..8, f in field(), seed in any::<u64>(), c in -3.0f64..3.0) {
        let b = random_hermitian(n, f, seed);
        let g = random_hermitian(n, f, seed.wrapping_add(1));
        let t = traceless(&b);
        prop_assert!((traceless(&t).matrix() - t.matrix()).norm() < 1e-12);
        prop_assert!(hs_inner(&t, &HermitianMatrix::identity(n, f)).unwrap().abs() < 1e-12);
        let lhs = traceless(&b.scaled(c).add(&g).unwrap());
        let rhs = t.scaled(c).add(&traceless(&g)).unwrap();
        prop_assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-12);
    }

    #[test]
    fn entry_frames_are_exactly_orthonormal(n in 2usize..7, picks in proptest::collection::vec((0usize..7, 0usize..7, 0u8..3), 1..6)) {
        let mut sel: Vec<EntrySelector> = Vec::new();
        for (j, k, kind) in picks {
            let (j, k) = (j % n, k % n);
            let s = match kind {
                0 => EntrySelector::Diagonal(j),
                _ if j == k => continue,
                1 => EntrySelector::Real(j.min(k), j.max(k)),
                _ => EntrySelector::Imag(j.min(k), j.max(k)),
            };
            if !sel.contains(&s) {
                sel.push(s);
            }
        }
        prop_assume!(!sel.is_empty());
        let (frame, _) = entry_frame(n, &sel, Field::Complex).unwrap();
        prop_assert!(frame.is_orthonormal());
        let ms = frame.matrices();
        for i in 0..ms.len() {
            for j in 0..ms.len() {
                let g = hs_inner(&ms[i], &ms[j]).unwrap();
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - target).abs() < 1e-15);
            }
        }
        let dense = CoefficientFrame::new(ms.to_vec()).unwrap();
        prop_assert!((frame.sum_op_sq() - dense.sum_op_sq()).abs() < 1e-12);
        prop_assert!((frame.sum_schatten4_sq() - dense.sum_schatten4_sq()).abs() < 1e-12);
        prop_assert!((frame.sum_inv_srank().unwrap() - dense.sum_inv_srank().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_is_linear_and_trace_preserving(n in 1usize..4, s in 1usize..4, seed in any::<u64>(), c in -2.0f64..2.0) {
        let x = random_hermitian(n, Field::Complex, seed);
        let y = random_hermitian(s, Field::Complex, seed ^ 7);
        let m1 = random_hermitian(n * s, Field::Complex, seed ^ 11);
        let m2 = random_hermitian(n * s, Field::Complex, seed ^ 13);
        let kron = x.kron(&y);
        let pt = partial_trace_second(kron.matrix(), n, s).unwrap();
        let expected = x.matrix() * C64::new(y.trace(), 0.0);
        prop_assert!((pt.matrix() - expected).norm() < 1e-10);
        let comb = m1.matrix() * C64::new(c, 0.0) + m2.matrix();
        let lhs = partial_trace_second(&comb, n, s).unwrap();
        let rhs = partial_trace_second(m1.matrix(), n, s).unwrap().matrix() * C64::new(c, 0.0)
            + partial_trace_second(m2.matrix(), n, s).unwrap().matrix();
        prop_assert!((lhs.matrix() - rhs).norm() < 1e-10);
        prop_assert!(close(lhs.trace(), comb.trace().re, 1e-12));
    }

    #[test]
    fn marginals_are_conjugation_invariant(n in 2usize..7, d in 1usize..4, seed in any::<u64>()) {
        let a = random_hermitian(n, Field::Complex, seed);
        let bs: Vec<HermitianMatrix> = (0..d).map(|i| random_hermitian(n, Field::Complex, seed ^ (i as u64 + 100))).collect();
        let w = haar_matrix(n, Field::Complex, &mut RngStream::new(seed, 9).rng()).unwrap();
        let frame = CoefficientFrame::new(bs.clone()).unwrap();
        let conj = CoefficientFrame::new(bs.iter().map(|b| b.conjugate_by(&w)).collect()).unwrap();
        let x = marginal_vector(&a, &frame).unwrap();
        let y = marginal_vector(&a.conjugate_by(&w), &conj).unwrap();
        for (p, q) in x.iter().zip(&y) {
            prop_assert!(close(*p, *q, 1e-10));
        }
    }

    #[test]
    fn isospectral_preserves_spectrum(n in 1usize..9, f in field(), seed in any::<u64>()) {
        let mut r = RngStream::new(seed, 2).rng();
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let spectrum = Spectrum::new(values).unwrap();
        let a = isospectral(&spectrum, f, &mut r).unwrap();
        for (p, q) in a.eigenvalues().iter().zip(spectrum.sorted()) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn induced_states_are_density_matrices(n in 1usize..6, s in 1usize..6, seed in any::<u64>()) {
        let rho = induced_state(n, s, &mut RngStream::new(seed, 3).rng()).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(rho.eigenvalues()[0] > -1e-12);
    }

    #[test]
    fn w1_metric_axioms(m in 1usize..40, seed in any::<u64>()) {
        let mut r = RngStream::new(seed, 4).rng();
        let mut draw = || EmpiricalMeasure1D::new((0..m).map(|_| r.random_range(-5.0..5.0)).collect()).unwrap();
        let (x, y, z) = (draw(), draw(), draw());
        let xy = w1_1d(&x, &y).unwrap();
        prop_assert_eq!(xy, w1_1d(&y, &x).unwrap());
        prop_assert!(xy <= w1_1d(&x, &z).unwrap() + w1_1d(&z, &y).unwrap() + 1e-10);
        prop_assert_eq!(w1_1d(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn w1_multi_beats_identity_coupling(m in 1usize..30, d in 1usize..4, seed in any::<u64>()) {
        let mut r = RngStream::new(seed, 5).rng();
        let mut data = || (0..m * d).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let (a, b) = (data(), data());
        let identity: f64 = (0..m)
            .map(|i| (0..d).map(|j| (a[i * d + j] - b[i * d + j]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>() / m as f64;
        let x = EmpiricalSample::new(a, m, d).unwrap();
        let y = EmpiricalSample::new(b, m, d).unwrap();
        prop_assert!(w1_multi(&x, &y).unwrap() <= identity + 1e-12);
    }

    #[test]
    fn bounds_are_affine_invariant_in_the_spectrum(n in 3usize..10, seed in any::<u64>(), c in 0.1f64..10.0, neg in any::<bool>(), shift in -5.0f64..5.0) {
        let mut r = RngStream::new(seed, 6).rng();
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let spectrum = Spectrum::new(values.clone()).unwrap();
        let c = if neg { -c } else { c };
        let moved = Spectrum::new(values.iter().map(|v| c * v + shift).collect()).unwrap();
        let raw: Vec<HermitianMatrix> = (0..2).map(|i| random_hermitian(n, Field::Complex, seed ^ (i + 50))).collect();
        let frame = isospec::linalg::orthonormalize_traceless(&raw).unwrap();
        let a = bound_t0(&spectrum, &frame, Field::Complex).unwrap();
        let b = bound_t0(&moved, &frame, Field::Complex).unwrap();
        prop_assert!(a.value >= 0.0);
        prop_assert!(close(a.value, b.value, 1e-9));
        // Operator-norm and stable-rank forms coincide for unit-norm coefficients.
        prop_assert!(close(a.value, a.ingredient("srank_form").unwrap(), 1e-12));
        let centered = spectrum.recentered();
        let e1 = bound_entries(&centered, 2).unwrap();
        let e2 = bound_entries(&Spectrum::new(centered.values().iter().map(|v| c * v).collect()).unwrap(), 2).unwrap();
        prop_assert!(close(e1.value, e2.value, 1e-9));
    }

    #[test]
    fn sphere_moments_agree_on_diagonal_queries(n in 1usize..5, exps in proptest::collection::vec(0u32..3, 1..5)) {
        let mut alphas: Vec<u32> = exps.iter().map(|e| 2 * e).collect();
        alphas.resize(n, 0);
        alphas.truncate(n);
        let idx: Vec<usize> = alphas.iter().enumerate().flat_map(|(i, &a)| std::iter::repeat(i).take(a as usize / 2)).collect();
        let q = MomentQuery { top: idx.clone(), bottom: idx, n };
        prop_assert!(close(sphere_abs_moment(&alphas).unwrap(), sphere_mixed_moment(&q).unwrap(), 1e-12));
    }

    #[test]
    fn chunked_results_do_not_depend_on_workers(total in 0usize..300, chunk in 1usize..40, seed in any::<u64>()) {
        let run = || chunked(RngStream::new(seed, 8), total, chunk, |rng, count| {
            (0..count).map(|_| rng.random::<u64>()).collect::<Vec<_>>()
        });
        let a = with_workers(1, run);
        let b = with_workers(3, run);
        prop_assert_eq!(a.concat().len(), total);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn degree_one_multivariate_w1_matches_quantile_coupling() {
    let mut r = RngStream::new(1, 1).rng();
    for _ in 0..20 {
        let m = r.random_range(1..50);
        let a: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let one = w1_1d(&EmpiricalMeasure1D::new(a.clone()).unwrap(), &EmpiricalMeasure1D::new(b.clone()).unwrap()).unwrap();
        let multi = w1_multi(&EmpiricalSample::new(a, m, 1).unwrap(), &EmpiricalSample::new(b, m, 1).unwrap()).unwrap();
        assert!((one - multi).abs() < 1e-10);
    }
}
