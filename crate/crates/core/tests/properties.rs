use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use proptest::prelude::*;

use hybss::beamform::mvdr_weights;
use hybss::metrics::{fw_seg_snr, si_sdr, SegmentalConfig};
use hybss::noise_fields::{limit_condition, HermitianCovariance};
use hybss::subspace::{eig2x2_hermitian, pca_step, FramePair, PcaTracker};

type C = Complex64;

fn complex() -> impl Strategy<Value = C> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C::new(re, im))
}

fn psd(q: usize) -> impl Strategy<Value = DMatrix<C>> {
    (prop::collection::vec(complex(), q * q), 1e-3f64..1.0).prop_map(move |(v, load)| {
        let a = DMatrix::from_vec(q, q, v);
        let mut r = &a * a.adjoint();
        for i in 0..q {
            r[(i, i)] += C::new(load, 0.0);
        }
        (&r + r.adjoint()) * C::new(0.5, 0.0)
    })
}

fn system() -> impl Strategy<Value = (DMatrix<C>, DVector<C>)> {
    (2usize..=6).prop_flat_map(|q| {
        (
            psd(q),
            prop::collection::vec(complex(), q).prop_filter("nonzero steering", |d| d.iter().any(|z| z.norm() > 1e-3)),
        )
            .prop_map(|(r, d)| (r, DVector::from_vec(d)))
    })
}

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mvdr_is_distortionless((r, d) in system()) {
        let w = mvdr_weights(&HermitianCovariance::new(r).unwrap(), &d).unwrap();
        prop_assert!((w.w.dotc(&d) - C::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn mvdr_beats_any_distortionless_perturbation((r, d) in system(), seed in prop::collection::vec(complex(), 6)) {
        let w = mvdr_weights(&HermitianCovariance::new(r.clone()).unwrap(), &d).unwrap().w;
        // Project a random vector onto the constraint's null space.
        let v = DVector::from_iterator(d.len(), seed.into_iter().take(d.len()));
        let v = &v - &d * (d.dotc(&v) / d.dotc(&d));
        let w2 = &w + v;
        let p = |w: &DVector<C>| (w.adjoint() * &r * w)[(0, 0)].re;
        prop_assert!(p(&w) <= p(&w2) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn mvdr_is_invariant_to_covariance_scale((r, d) in system(), s in 1e-6f64..1e6) {
        let w1 = mvdr_weights(&HermitianCovariance::new(r.clone()).unwrap(), &d).unwrap().w;
        let w2 = mvdr_weights(&HermitianCovariance::new(r * C::new(s, 0.0)).unwrap(), &d).unwrap().w;
        prop_assert!((&w1 - &w2).norm() <= 1e-8 * w1.norm());
    }

    #[test]
    fn condition_limiting_meets_the_cap(r in (2usize..=6).prop_flat_map(psd), cap in 1.5f64..1e4) {
        let limited = limit_condition(&HermitianCovariance::new(r).unwrap(), cap).unwrap();
        let e = limited.eigenvalues();
        prop_assert!(e[0] / e[e.len() - 1] <= cap * (1.0 + 1e-9));
    }

    #[test]
    fn eig2x2_reconstructs_and_orders(a in -5.0f64..5.0, c in -5.0f64..5.0, b in complex()) {
        let m = Matrix2::new(C::new(a, 0.0), b, b.conj(), C::new(c, 0.0));
        let e = eig2x2_hermitian(&m).unwrap();
        prop_assert!(e.values[0] >= e.values[1]);
        let err: f64 = (e.reconstruct() - m).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err < 1e-12 * (1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max)));
        let [u, v] = e.vectors;
        prop_assert!((u[0].conj() * v[0] + u[1].conj() * v[1]).norm() < 1e-12);
    }

    #[test]
    fn pca_output_never_gains_energy(
        frames in prop::collection::vec((prop::collection::vec(complex(), 16), prop::collection::vec(complex(), 16)), 1..12),
    ) {
        let mut t = PcaTracker::new(0.08, 0.005).unwrap();
        for (h, i) in frames {
            let z = FramePair::new(h, i).unwrap();
            let r = pca_step(&mut t, &z).unwrap();
            let out = FramePair::new(r.y_out, r.y_ss_iso).unwrap();
            prop_assert!(out.frobenius_norm() <= z.frobenius_norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn si_sdr_ignores_estimate_gain(x in signal(400), n in signal(400), g in 0.01f64..100.0) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1.0);
        let y: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + 0.3 * b).collect();
        let yg: Vec<f64> = y.iter().map(|v| v * g).collect();
        prop_assert!((si_sdr(&x, &y).unwrap() - si_sdr(&x, &yg).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn fw_seg_snr_stays_within_the_clip_range(x in signal(2000), n in signal(2000), k in 0.0f64..3.0) {
        let y: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + k * b).collect();
        let v = fw_seg_snr(&x, &y, &SegmentalConfig::new(10_000.0)).unwrap();
        prop_assert!(v.is_finite() && (-10.0..=35.0).contains(&v));
    }
}

#[test]
fn fw_seg_snr_falls_as_noise_rises() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..20_000)
        .map(|i| (i as f64 * 0.07).sin() + 0.5 * rng.gen_range(-1.0..1.0))
        .collect();
    let n: Vec<f64> = (0..20_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let cfg = SegmentalConfig::new(10_000.0);
    let scores: Vec<f64> = (0..10)
        .map(|k| {
            let g = 0.01 * 2f64.powi(k);
            let y: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + g * b).collect();
            fw_seg_snr(&x, &y, &cfg).unwrap()
        })
        .collect();
    assert!(scores.windows(2).all(|w| w[1] < w[0]), "{scores:?}");
}
