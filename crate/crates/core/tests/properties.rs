use csmri_core::coils::{adjoint_multicoil, forward_multicoil};
use csmri_core::fourier::{fft2c, ifft2c, inner};
use csmri_core::masking::{apply_mask, make_equispaced_mask, make_mask, make_random_mask, MaskKind, MaskPolicy};
use csmri_core::phantom::make_sensitivities;
use csmri_core::regularizers::{reg_value, Regularizer};
use csmri_core::wavelet::{dwt2_forward, dwt2_inverse};
use csmri_core::{Acquisition, CropSpec, ImageVolume, KSpaceVolume, RealVolume, C64};
use ndarray::{Array2, Array3, Array4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn random_array4(dim: (usize, usize, usize, usize), seed: u64) -> Array4<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_fn(dim, |_| random_c(&mut rng))
}

fn random_plane(h: usize, w: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((h, w), |_| random_c(&mut rng))
}

fn norm<'a>(it: impl IntoIterator<Item = &'a C64>) -> f64 {
    it.into_iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dist(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fourier_parseval(h in 2usize..24, w in 2usize..24, seed: u64) {
        let x = ImageVolume::new(random_array4((2, 1, h, w), seed)).unwrap();
        let k = fft2c(&x);
        let (a, b) = (norm(x.data().iter()), norm(k.data().iter()));
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn fourier_linearity(h in 2usize..20, w in 2usize..20, seed: u64, ar in -2.0f64..2.0, bi in -2.0f64..2.0) {
        let x = random_array4((1, 1, h, w), seed);
        let y = random_array4((1, 1, h, w), seed.wrapping_add(1));
        let (a, b) = (C64::new(ar, 0.5), C64::new(0.3, bi));
        let combo = ImageVolume::new(&x * a + &y * b).unwrap();
        let lhs = fft2c(&combo);
        let fx = fft2c(&ImageVolume::new(x).unwrap());
        let fy = fft2c(&ImageVolume::new(y).unwrap());
        let rhs = fx.data() * a + fy.data() * b;
        let err = norm(lhs.data().iter().zip(rhs.iter()).map(|(p, q)| p - q).collect::<Vec<_>>().iter());
        prop_assert!(err <= 1e-10 * norm(rhs.iter()).max(1.0));
    }

    #[test]
    fn fourier_adjoint(h in 2usize..20, w in 2usize..20, seed: u64) {
        let x = ImageVolume::new(random_array4((1, 1, h, w), seed)).unwrap();
        let y = KSpaceVolume::new(random_array4((1, 1, h, w), seed ^ 0xabc), Acquisition::SYNTHETIC).unwrap();
        let lhs = inner(fft2c(&x).data().iter(), y.data().iter());
        let rhs = inner(x.data().iter(), ifft2c(&y).data().iter());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn multicoil_adjoint(n_c in 1usize..6, seed: u64) {
        let (h, w) = (12, 10);
        let s = make_sensitivities(h, w, n_c, seed);
        let m = ImageVolume::new(random_array4((2, 1, h, w), seed)).unwrap();
        let y = KSpaceVolume::new(random_array4((2, n_c, h, w), seed ^ 7), Acquisition::SYNTHETIC).unwrap();
        let lhs = inner(forward_multicoil(&m, &s).unwrap().data().iter(), y.data().iter());
        let rhs = inner(m.data().iter(), adjoint_multicoil(&y, &s).unwrap().data().iter());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn crop_idempotent_and_value_preserving(h in 1usize..30, w in 1usize..30, oh in 1usize..30, ow in 1usize..30) {
        prop_assume!(oh <= h && ow <= w);
        let v = RealVolume::new(Array3::from_shape_fn((2, h, w), |(s, i, j)| (s * 10_000 + i * 100 + j) as f64)).unwrap();
        let spec = CropSpec::new(oh, ow);
        let once = v.center_crop(spec).unwrap();
        prop_assert_eq!(&once.center_crop(spec).unwrap(), &once);
        let (r0, c0) = ((h - oh) / 2, (w - ow) / 2);
        for s in 0..2 {
            for i in 0..oh {
                for j in 0..ow {
                    prop_assert_eq!(once.data()[[s, i, j]], v.data()[[s, i + r0, j + c0]]);
                }
            }
        }
    }

    #[test]
    fn mask_projection_idempotent(seed: u64, equi: bool) {
        let kind = if equi { MaskKind::Equispaced } else { MaskKind::Random };
        let mask = make_mask(32, MaskPolicy::canonical(4, kind), seed).unwrap();
        let k = KSpaceVolume::new(random_array4((2, 2, 6, 32), seed), Acquisition::SYNTHETIC).unwrap();
        let once = apply_mask(&k, &mask).unwrap();
        prop_assert_eq!(&apply_mask(&once, &mask).unwrap(), &once);
    }

    #[test]
    fn masks_regenerate_and_keep_centre(seed: u64, w in 40usize..400, r in prop::sample::select(vec![4usize, 8])) {
        let policy = MaskPolicy::canonical(r, MaskKind::Random);
        let a = make_random_mask(w, policy, seed).unwrap();
        prop_assert_eq!(&a, &make_random_mask(w, policy, seed).unwrap());
        let centre = a.center_range();
        prop_assert_eq!(centre.len(), a.num_low_frequency);
        prop_assert!(centre.clone().all(|c| a.keep[c]));
        prop_assert!(a.kept_count() >= 1 && a.kept_count() <= w);
    }

    #[test]
    fn equispaced_gaps_are_stride(seed: u64, w in 40usize..400, r in prop::sample::select(vec![4usize, 8])) {
        let m = make_equispaced_mask(w, MaskPolicy::canonical(r, MaskKind::Equispaced), seed).unwrap();
        let centre = m.center_range();
        let outside: Vec<usize> = (0..w).filter(|&c| m.keep[c] && !centre.contains(&c)).collect();
        for pair in outside.windows(2) {
            let abuts = (pair[0]..=pair[1]).any(|c| centre.contains(&c));
            if !abuts {
                prop_assert_eq!(pair[1] - pair[0], r);
            }
        }
    }

    #[test]
    fn wavelet_perfect_reconstruction(h in 8usize..=128, w in 8usize..=128, levels in 1usize..=4, seed: u64) {
        let x = random_plane(h, w, seed);
        let back = dwt2_inverse(&dwt2_forward(x.view(), levels).unwrap()).unwrap();
        prop_assert!(dist(&back, &x) <= 1e-10 * norm(x.iter()));
    }

    #[test]
    fn wavelet_orthonormal(k in 3u32..=6, levels in 1usize..=3, seed: u64) {
        let n = 1usize << k;
        let (a, b) = (random_plane(n, n, seed), random_plane(n, n, seed ^ 99));
        let (pa, pb) = (dwt2_forward(a.view(), levels).unwrap(), dwt2_forward(b.view(), levels).unwrap());
        let direct = inner(a.iter(), b.iter());
        let coeffs = inner(pa.all_coefficients(), pb.all_coefficients());
        prop_assert!((direct - coeffs).norm() <= 1e-9 * direct.norm().max(1.0));
    }

    #[test]
    fn prox_nonexpansive(seed: u64, t in 0.01f64..0.5, which in 0usize..3) {
        let reg = [Regularizer::L1, Regularizer::wavelet(), Regularizer::tv()][which];
        let (x, y) = (random_plane(16, 16, seed), random_plane(16, 16, seed ^ 5));
        let (px, py) = (reg.prox(x.view(), t).unwrap(), reg.prox(y.view(), t).unwrap());
        let slack = if which == 2 { 1e-3 } else { 1e-12 };
        prop_assert!(dist(&px, &py) <= dist(&x, &y) * (1.0 + slack));
    }

    #[test]
    fn penalties_positively_homogeneous(seed: u64, a in 0.0f64..5.0, which in 0usize..3) {
        let reg = [Regularizer::L1, Regularizer::wavelet(), Regularizer::tv()][which];
        let m = ImageVolume::new(random_array4((2, 1, 16, 16), seed)).unwrap();
        let scaled = ImageVolume::new(m.data() * C64::new(a, 0.0)).unwrap();
        let (v, va) = (reg_value(&reg, &m), reg_value(&reg, &scaled));
        prop_assert!((va - a * v).abs() <= 1e-10 * (a * v).max(1.0));
    }
}
