//! Multiscale Daubechies-2 (four-tap) discrete wavelet transform.
//!
//! Separable, periodically extended and orthonormal. Planes whose extents are
//! not multiples of `2^levels` are zero-padded at the high-index end of each
//! axis before analysis; the inverse removes the padding again.

use std::ops::{Add, Mul};

use ndarray::{s, Array2, ArrayView2, Axis};
use num_traits::Zero;

use crate::error::{CoreError, Result};
use crate::C64;

/// Default decomposition depth.
pub const DEFAULT_LEVELS: usize = 4;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// DB2 analysis low-pass taps, unit ℓ₂ norm.
pub const DB2_LOWPASS: [f64; 4] = [
    (1.0 + SQRT3) / (4.0 * std::f64::consts::SQRT_2),
    (3.0 + SQRT3) / (4.0 * std::f64::consts::SQRT_2),
    (3.0 - SQRT3) / (4.0 * std::f64::consts::SQRT_2),
    (1.0 - SQRT3) / (4.0 * std::f64::consts::SQRT_2),
];

/// Quadrature-mirror high-pass taps `g[t] = (-1)^t h[3 - t]`.
pub const DB2_HIGHPASS: [f64; 4] = [DB2_LOWPASS[3], -DB2_LOWPASS[2], DB2_LOWPASS[1], -DB2_LOWPASS[0]];

/// Scalar types the transform operates on.
pub trait Sample: Copy + Zero + Add<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn modulus(self) -> f64;
}

impl Sample for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Sample for C64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Detail subbands of one level. The first letter refers to the filter
/// applied along the height axis, the second to the width axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands<T> {
    pub lh: Array2<T>,
    pub hl: Array2<T>,
    pub hh: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid<T> {
    /// Finest level first.
    pub details: Vec<DetailBands<T>>,
    /// Coarsest low-pass band.
    pub approx: Array2<T>,
    /// Extents before padding.
    pub original: (usize, usize),
    /// Extents after padding to a multiple of `2^levels`.
    pub padded: (usize, usize),
}

impl<T: Sample> WaveletPyramid<T> {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn coefficient_count(&self) -> usize {
        self.approx.len() + self.details.iter().map(|d| d.lh.len() + d.hl.len() + d.hh.len()).sum::<usize>()
    }

    pub fn detail_coefficients(&self) -> impl Iterator<Item = &T> {
        self.details.iter().flat_map(|d| d.lh.iter().chain(d.hl.iter()).chain(d.hh.iter()))
    }

    pub fn all_coefficients(&self) -> impl Iterator<Item = &T> {
        self.approx.iter().chain(self.detail_coefficients())
    }

    /// A pyramid of zeros with the layout of `self`.
    pub fn zeros_like(&self) -> Self {
        WaveletPyramid {
            details: self
                .details
                .iter()
                .map(|d| DetailBands {
                    lh: Array2::zeros(d.lh.dim()),
                    hl: Array2::zeros(d.hl.dim()),
                    hh: Array2::zeros(d.hh.dim()),
                })
                .collect(),
            approx: Array2::zeros(self.approx.dim()),
            original: self.original,
            padded: self.padded,
        }
    }
}

fn analyze_1d<T: Sample>(x: &[T], lo: &mut [T], hi: &mut [T]) {
    let n = x.len();
    for k in 0..n / 2 {
        let mut a = T::zero();
        let mut d = T::zero();
        for t in 0..4 {
            let v = x[(2 * k + t) % n];
            a = a + v * DB2_LOWPASS[t];
            d = d + v * DB2_HIGHPASS[t];
        }
        lo[k] = a;
        hi[k] = d;
    }
}

fn synthesize_1d<T: Sample>(lo: &[T], hi: &[T], x: &mut [T]) {
    let n = x.len();
    x.iter_mut().for_each(|v| *v = T::zero());
    for k in 0..n / 2 {
        for t in 0..4 {
            let idx = (2 * k + t) % n;
            x[idx] = x[idx] + lo[k] * DB2_LOWPASS[t] + hi[k] * DB2_HIGHPASS[t];
        }
    }
}

/// One analysis step along `axis`; returns (low, high) halves.
fn split_axis<T: Sample>(a: ArrayView2<'_, T>, axis: usize) -> (Array2<T>, Array2<T>) {
    let (h, w) = a.dim();
    let half = if axis == 0 { (h / 2, w) } else { (h, w / 2) };
    let mut lo = Array2::zeros(half);
    let mut hi = Array2::zeros(half);
    let n = a.len_of(Axis(axis));
    let mut buf = vec![T::zero(); n];
    let mut lb = vec![T::zero(); n / 2];
    let mut hb = vec![T::zero(); n / 2];
    for ((lane, mut l), mut hgh) in a
        .lanes(Axis(axis))
        .into_iter()
        .zip(lo.lanes_mut(Axis(axis)))
        .zip(hi.lanes_mut(Axis(axis)))
    {
        buf.iter_mut().zip(lane.iter()).for_each(|(b, &v)| *b = v);
        analyze_1d(&buf, &mut lb, &mut hb);
        l.iter_mut().zip(&lb).for_each(|(d, &v)| *d = v);
        hgh.iter_mut().zip(&hb).for_each(|(d, &v)| *d = v);
    }
    (lo, hi)
}

fn merge_axis<T: Sample>(lo: ArrayView2<'_, T>, hi: ArrayView2<'_, T>, axis: usize) -> Array2<T> {
    let (h, w) = lo.dim();
    let full = if axis == 0 { (2 * h, w) } else { (h, 2 * w) };
    let mut out = Array2::zeros(full);
    let n = out.len_of(Axis(axis));
    let mut buf = vec![T::zero(); n];
    let mut lb = vec![T::zero(); n / 2];
    let mut hb = vec![T::zero(); n / 2];
    for ((mut lane, l), hg) in out
        .lanes_mut(Axis(axis))
        .into_iter()
        .zip(lo.lanes(Axis(axis)))
        .zip(hi.lanes(Axis(axis)))
    {
        lb.iter_mut().zip(l.iter()).for_each(|(d, &v)| *d = v);
        hb.iter_mut().zip(hg.iter()).for_each(|(d, &v)| *d = v);
        synthesize_1d(&lb, &hb, &mut buf);
        lane.iter_mut().zip(&buf).for_each(|(d, &v)| *d = v);
    }
    out
}

fn padded_extent(n: usize, levels: usize) -> usize {
    let block = 1usize << levels;
    n.div_ceil(block) * block
}

/// Separable multilevel DB2 analysis.
///
/// Each axis must hold at least `2^(levels - 1)` samples.
pub fn dwt2_forward<T: Sample>(plane: ArrayView2<'_, T>, levels: usize) -> Result<WaveletPyramid<T>> {
    let (h, w) = plane.dim();
    if levels == 0 || levels >= usize::BITS as usize - 1 || h < (1 << (levels - 1)) || w < (1 << (levels - 1)) || h == 0 || w == 0 {
        return Err(CoreError::TooManyLevels { levels, height: h, width: w });
    }
    let (ph, pw) = (padded_extent(h, levels), padded_extent(w, levels));
    let mut current = Array2::zeros((ph, pw));
    current.slice_mut(s![..h, ..w]).assign(&plane);

    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (low_w, high_w) = split_axis(current.view(), 1);
        let (ll, hl) = split_axis(low_w.view(), 0);
        let (lh, hh) = split_axis(high_w.view(), 0);
        details.push(DetailBands { lh, hl, hh });
        current = ll;
    }
    Ok(WaveletPyramid { details, approx: current, original: (h, w), padded: (ph, pw) })
}

/// Inverse of [`dwt2_forward`], including removal of the padding.
pub fn dwt2_inverse<T: Sample>(p: &WaveletPyramid<T>) -> Result<Array2<T>> {
    let levels = p.levels();
    if levels == 0 {
        return Err(CoreError::MalformedPyramid("no detail levels".into()));
    }
    let (ph, pw) = p.padded;
    let block = 1usize << levels;
    if ph % block != 0 || pw % block != 0 || p.original.0 > ph || p.original.1 > pw {
        return Err(CoreError::MalformedPyramid(format!(
            "padded extents {ph}x{pw} inconsistent with {levels} levels and original {:?}",
            p.original
        )));
    }
    if p.approx.dim() != (ph >> levels, pw >> levels) {
        return Err(CoreError::MalformedPyramid(format!(
            "approximation band {:?}, expected {:?}",
            p.approx.dim(),
            (ph >> levels, pw >> levels)
        )));
    }
    for (l, d) in p.details.iter().enumerate() {
        let expected = (ph >> (l + 1), pw >> (l + 1));
        if d.lh.dim() != expected || d.hl.dim() != expected || d.hh.dim() != expected {
            return Err(CoreError::MalformedPyramid(format!("level {l} subbands do not match {expected:?}")));
        }
    }
    let mut current = p.approx.clone();
    for d in p.details.iter().rev() {
        let low_w = merge_axis(current.view(), d.hl.view(), 0);
        let high_w = merge_axis(d.lh.view(), d.hh.view(), 0);
        current = merge_axis(low_w.view(), high_w.view(), 1);
    }
    Ok(current.slice(s![..p.original.0, ..p.original.1]).to_owned())
}

/// `sign(c) · max(|c| − t, 0)`, phase preserving for complex samples.
pub fn soft_threshold<T: Sample>(c: T, t: f64) -> T {
    let m = c.modulus();
    if m <= t || m == 0.0 {
        T::zero()
    } else {
        c * ((m - t) / m)
    }
}

/// Soft-thresholds every detail coefficient; the approximation band is kept.
pub fn soft_threshold_pyramid<T: Sample>(p: &WaveletPyramid<T>, t: f64) -> Result<WaveletPyramid<T>> {
    if t < 0.0 || t.is_nan() {
        return Err(CoreError::NegativeThreshold(t));
    }
    let shrink = |a: &Array2<T>| a.mapv(|c| soft_threshold(c, t));
    Ok(WaveletPyramid {
        details: p
            .details
            .iter()
            .map(|d| DetailBands { lh: shrink(&d.lh), hl: shrink(&d.hl), hh: shrink(&d.hh) })
            .collect(),
        approx: p.approx.clone(),
        original: p.original,
        padded: p.padded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(h: usize, w: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.gen_range(-1.0..1.0))
    }

    fn energy<T: Sample>(it: impl Iterator<Item = T>) -> f64 {
        it.map(|c| c.modulus().powi(2)).sum::<f64>()
    }

    #[test]
    fn filter_normalization() {
        let lo: f64 = DB2_LOWPASS.iter().map(|h| h * h).sum();
        let sum: f64 = DB2_LOWPASS.iter().sum();
        assert!((lo - 1.0).abs() < 1e-15);
        assert!((sum - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(DB2_HIGHPASS.iter().sum::<f64>().abs() < 1e-15);
        let moment: f64 = DB2_HIGHPASS.iter().enumerate().map(|(t, g)| t as f64 * g).sum();
        assert!(moment.abs() < 1e-15);
    }

    #[test]
    fn constant_plane_has_no_detail() {
        let c = Array2::from_elem((32, 32), 0.75);
        let p = dwt2_forward(c.view(), 3).unwrap();
        assert!(p.detail_coefficients().all(|d| d.abs() <= 1e-12));
        let total = energy(p.approx.iter().copied());
        assert!((total - energy(c.iter().copied())).abs() < 1e-10);
    }

    #[test]
    fn energy_preserved_on_random_plane() {
        let x = random_plane(32, 32, 1);
        let p = dwt2_forward(x.view(), 3).unwrap();
        let a = energy(p.all_coefficients().copied()).sqrt();
        let b = energy(x.iter().copied()).sqrt();
        assert!((a - b).abs() < 1e-10 * b);
        assert_eq!(p.coefficient_count(), 32 * 32);
    }

    #[test]
    fn one_level_matches_convolution_oracle() {
        // standard DB2 scaling-filter taps
        let h = [0.482_962_913_144_534_16, 0.836_516_303_737_807_9, 0.224_143_868_042_013_4, -0.129_409_522_551_260_37];
        let g = [h[3], -h[2], h[1], -h[0]];
        let x = random_plane(8, 8, 2);
        let p = dwt2_forward(x.view(), 1).unwrap();
        let band = |fh: &[f64; 4], fw: &[f64; 4], k: usize, l: usize| {
            let mut acc = 0.0;
            for t in 0..4 {
                for u in 0..4 {
                    acc += fh[t] * fw[u] * x[[(2 * k + t) % 8, (2 * l + u) % 8]];
                }
            }
            acc
        };
        for k in 0..4 {
            for l in 0..4 {
                assert!((p.approx[[k, l]] - band(&h, &h, k, l)).abs() < 1e-12);
                assert!((p.details[0].lh[[k, l]] - band(&h, &g, k, l)).abs() < 1e-12);
                assert!((p.details[0].hl[[k, l]] - band(&g, &h, k, l)).abs() < 1e-12);
                assert!((p.details[0].hh[[k, l]] - band(&g, &g, k, l)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_non_dyadic() {
        let x = random_plane(64, 48, 3);
        let p = dwt2_forward(x.view(), 4).unwrap();
        let back = dwt2_inverse(&p).unwrap();
        let err = back.iter().zip(x.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);

        let odd = random_plane(37, 23, 4);
        let p = dwt2_forward(odd.view(), 3).unwrap();
        assert_eq!(p.padded, (40, 24));
        let back = dwt2_inverse(&p).unwrap();
        assert_eq!(back.dim(), (37, 23));
        assert!(back.iter().zip(odd.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn complex_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((24, 16), |_| C64::new(rng.gen(), rng.gen()));
        let back = dwt2_inverse(&dwt2_forward(x.view(), 2).unwrap()).unwrap();
        assert!(back.iter().zip(x.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn zero_pyramid_gives_zero_plane() {
        let p = dwt2_forward(random_plane(16, 16, 6).view(), 2).unwrap().zeros_like();
        assert!(dwt2_inverse(&p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_atom_round_trip() {
        let mut p = dwt2_forward(Array2::<f64>::zeros((32, 32)).view(), 3).unwrap();
        p.approx[[1, 2]] = 1.0;
        let atom = dwt2_inverse(&p).unwrap();
        assert!((energy(atom.iter().copied()) - 1.0).abs() < 1e-12);
        let again = dwt2_forward(atom.view(), 3).unwrap();
        for ((k, l), &v) in again.approx.indexed_iter() {
            let expected = if (k, l) == (1, 2) { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12);
        }
        assert!(again.detail_coefficients().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn ramp_interior_details_vanish() {
        let x = Array2::from_shape_fn((32, 32), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64 + 1.0);
        let p = dwt2_forward(x.view(), 1).unwrap();
        let d = &p.details[0];
        // filters at k touch samples 2k..2k+3; skip the wrapped last row/column
        for k in 0..15 {
            for l in 0..15 {
                assert!(d.lh[[k, l]].abs() < 1e-10);
                assert!(d.hl[[k, l]].abs() < 1e-10);
                assert!(d.hh[[k, l]].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn level_limits() {
        let x = Array2::<f64>::zeros((8, 8));
        assert!(dwt2_forward(x.view(), 0).is_err());
        assert!(dwt2_forward(x.view(), 4).is_ok());
        assert!(matches!(dwt2_forward(x.view(), 5), Err(CoreError::TooManyLevels { .. })));
    }

    #[test]
    fn malformed_pyramid_rejected() {
        let mut p = dwt2_forward(random_plane(16, 16, 7).view(), 2).unwrap();
        p.details[1].hh = Array2::zeros((3, 3));
        assert!(matches!(dwt2_inverse(&p), Err(CoreError::MalformedPyramid(_))));
    }

    #[test]
    fn threshold_definition() {
        assert!((soft_threshold(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(soft_threshold(-0.1, 0.2), 0.0);
        assert!((soft_threshold(-0.5, 0.2) + 0.3).abs() < 1e-15);
        let z = soft_threshold(C64::new(3.0, 4.0), 1.0);
        assert!((z - C64::new(2.4, 3.2)).norm() < 1e-15);
        assert_eq!(soft_threshold(C64::new(0.0, 0.0), 0.0), C64::new(0.0, 0.0));
    }

    #[test]
    fn threshold_pyramid_keeps_approx() {
        let x = random_plane(16, 16, 8);
        let p = dwt2_forward(x.view(), 2).unwrap();
        assert_eq!(soft_threshold_pyramid(&p, 0.0).unwrap(), p);
        let q = soft_threshold_pyramid(&p, 10.0).unwrap();
        assert_eq!(q.approx, p.approx);
        assert!(q.detail_coefficients().all(|&d| d == 0.0));
        assert!(soft_threshold_pyramid(&p, -1.0).is_err());
    }

    #[test]
    fn threshold_is_scalar_prox() {
        // grid search of t|c| + (c - v)^2 / 2
        for &(v, t) in &[(0.5, 0.2), (-0.1, 0.2), (1.3, 0.7), (-2.0, 0.5)] {
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..=40_000 {
                let c = -3.0 + i as f64 * 1.5e-4;
                let obj = t * c.abs() + 0.5 * (c - v) * (c - v);
                if obj < best.0 {
                    best = (obj, c);
                }
            }
            assert!((soft_threshold(v, t) - best.1).abs() < 2e-4);
        }
    }
}
