//! Multi-coil measurement model and coil combination.
//!
//! The forward model maps an image `m` to per-coil k-space
//! `y_i = fft2c(S_i ⊙ m)`. Root-sum-of-squares combines coil images
//! pixelwise; the emulated single-coil (ESC) route fits one complex weight per
//! coil so that `Σ α_i m̃_i` matches the RSS image in the least-squares sense.

use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis, Zip};
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::fourier::{fft2c, ifft2c, CenteredFft2};
use crate::masking::{apply_mask_inplace, SamplingMask};
use crate::tensor::{CropSpec, ImageVolume, KSpaceVolume, RealVolume};
use crate::C64;

/// Relative support threshold for sensitivity normalization.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

/// Condition number above which an ESC Gram matrix is reported as rank deficient.
pub const ESC_CONDITION_LIMIT: f64 = 1e12;

/// Minimum calibration lines needed by [`estimate_sensitivities`].
pub const MIN_CALIBRATION_LINES: usize = 4;

/// Default half-cosine taper width (columns per side) for calibration.
pub const DEFAULT_CALIBRATION_TAPER: usize = 4;

/// Per-coil complex sensitivity maps `(coils, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySet {
    pub maps: Array3<C64>,
    pub normalized: bool,
}

impl SensitivitySet {
    /// Unit sensitivity for a single coil.
    pub fn identity(height: usize, width: usize) -> Self {
        SensitivitySet {
            maps: Array3::from_elem((1, height, width), C64::new(1.0, 0.0)),
            normalized: true,
        }
    }

    pub fn coil_count(&self) -> usize {
        self.maps.dim().0
    }

    pub fn spatial(&self) -> (usize, usize) {
        let (_, h, w) = self.maps.dim();
        (h, w)
    }

    /// Rescales so that `Σ_i |S_i|² = 1` wherever the RSS exceeds
    /// `SUPPORT_THRESHOLD * max RSS`; other pixels are zeroed.
    pub fn normalize(maps: Array3<C64>) -> Self {
        let rss = rss_of_stack(maps.view());
        let max = rss.iter().copied().fold(0.0, f64::max);
        let floor = SUPPORT_THRESHOLD * max;
        let mut maps = maps;
        for mut coil in maps.outer_iter_mut() {
            Zip::from(&mut coil).and(&rss).for_each(|z, &r| {
                *z = if r > floor && r > 0.0 { *z / r } else { C64::new(0.0, 0.0) };
            });
        }
        SensitivitySet { maps, normalized: true }
    }

    /// `Σ_i |S_i(x)|²` at every pixel.
    pub fn energy(&self) -> Array2<f64> {
        let (_, h, w) = self.maps.dim();
        let mut out = Array2::zeros((h, w));
        for coil in self.maps.outer_iter() {
            Zip::from(&mut out).and(&coil).for_each(|o, z| *o += z.norm_sqr());
        }
        out
    }
}

fn rss_of_stack(stack: ArrayView3<'_, C64>) -> Array2<f64> {
    let (_, h, w) = stack.dim();
    let mut acc = Array2::<f64>::zeros((h, w));
    for coil in stack.outer_iter() {
        Zip::from(&mut acc).and(&coil).for_each(|a, z| *a += z.norm_sqr());
    }
    acc.mapv_inplace(f64::sqrt);
    acc
}

fn check_single_image(m: &ImageVolume, s: &SensitivitySet) -> Result<()> {
    let (_, c, h, w) = m.dim();
    let (sh, sw) = s.spatial();
    if c != 1 || (h, w) != (sh, sw) {
        return Err(CoreError::ShapeMismatch {
            expected: vec![m.dim().0, 1, sh, sw],
            actual: vec![m.dim().0, c, h, w],
        });
    }
    Ok(())
}

/// Coil images `S_i ⊙ m` for every slice.
pub fn coil_images(m: &ImageVolume, s: &SensitivitySet) -> Result<ImageVolume> {
    check_single_image(m, s)?;
    let (sl, _, h, w) = m.dim();
    let nc = s.coil_count();
    let mut out = Array4::zeros((sl, nc, h, w));
    for (mut dst, src) in out.outer_iter_mut().zip(m.data().outer_iter()) {
        let img = src.index_axis(Axis(0), 0);
        for (mut d, map) in dst.outer_iter_mut().zip(s.maps.outer_iter()) {
            Zip::from(&mut d).and(&map).and(&img).for_each(|d, &sv, &mv| *d = sv * mv);
        }
    }
    Ok(ImageVolume::from_array(out))
}

/// `y_i = fft2c(S_i ⊙ m)` for each coil; the same maps apply to every slice.
pub fn forward_multicoil(m: &ImageVolume, s: &SensitivitySet) -> Result<KSpaceVolume> {
    Ok(fft2c(&coil_images(m, s)?))
}

/// `Σ_i conj(S_i) ⊙ ifft2c(y_i)`, the adjoint of [`forward_multicoil`].
pub fn adjoint_multicoil(y: &KSpaceVolume, s: &SensitivitySet) -> Result<ImageVolume> {
    let (sl, nc, h, w) = y.dim();
    if nc != s.coil_count() || (h, w) != s.spatial() {
        return Err(CoreError::ShapeMismatch {
            expected: vec![sl, s.coil_count(), s.spatial().0, s.spatial().1],
            actual: vec![sl, nc, h, w],
        });
    }
    let imgs = ifft2c(y);
    let mut out = Array4::zeros((sl, 1, h, w));
    for (mut dst, src) in out.outer_iter_mut().zip(imgs.data().outer_iter()) {
        let mut acc = dst.index_axis_mut(Axis(0), 0);
        for (coil, map) in src.outer_iter().zip(s.maps.outer_iter()) {
            Zip::from(&mut acc).and(&coil).and(&map).for_each(|a, &z, &sv| *a += sv.conj() * z);
        }
    }
    Ok(ImageVolume::from_array(out))
}

/// Pixelwise `sqrt(Σ_i |m̃_i|²)` over the coil axis.
pub fn rss_combine(coil_images: &ImageVolume) -> RealVolume {
    let (sl, _, h, w) = coil_images.dim();
    let mut out = ndarray::Array3::zeros((sl, h, w));
    for (mut dst, src) in out.outer_iter_mut().zip(coil_images.data().outer_iter()) {
        dst.assign(&rss_of_stack(src));
    }
    RealVolume::from_array(out)
}

/// Inverse transform per coil, RSS combination, then center crop.
pub fn rss_reconstruction(y: &KSpaceVolume, crop: CropSpec) -> Result<RealVolume> {
    rss_combine(&ifft2c(y)).center_crop(crop)
}

/// Fitted ESC weights with the diagnostics of the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EscCoefficients {
    pub alpha: Vec<C64>,
    /// Condition number of the (unregularized) Gram matrix.
    pub condition: f64,
    /// Set when `condition` exceeds [`ESC_CONDITION_LIMIT`]; the ridge term
    /// still yields a solution.
    pub rank_deficient: bool,
    /// `||Σ α_i m̃_i − target||₂` at the returned weights.
    pub residual: f64,
}

/// Least-squares complex weights `α = argmin ||Σ α_i m̃_i − target||₂²` over
/// all slices jointly, with ridge `1e-9 · trace(G) / n_c`.
pub fn fit_esc(coil_images: &ImageVolume, target: &RealVolume) -> Result<EscCoefficients> {
    let (sl, nc, h, w) = coil_images.dim();
    if target.dim() != (sl, h, w) {
        return Err(CoreError::ShapeMismatch {
            expected: vec![sl, h, w],
            actual: vec![target.dim().0, target.dim().1, target.dim().2],
        });
    }
    let data = coil_images.data();
    // Accumulate per slice, then reduce in slice order.
    let per_slice: Vec<(DMatrix<C64>, DVector<C64>)> = (0..sl)
        .into_par_iter()
        .map(|s| {
            let mut gram = DMatrix::<C64>::zeros(nc, nc);
            let mut rhs = DVector::<C64>::zeros(nc);
            let coils = data.slice(s![s, .., .., ..]);
            let t = target.data().slice(s![s, .., ..]);
            for j in 0..nc {
                let cj = coils.index_axis(Axis(0), j);
                for k in j..nc {
                    let ck = coils.index_axis(Axis(0), k);
                    let g: C64 = cj.iter().zip(ck.iter()).map(|(a, b)| a.conj() * b).sum();
                    gram[(j, k)] = g;
                    gram[(k, j)] = g.conj();
                }
                rhs[j] = cj.iter().zip(t.iter()).map(|(a, &b)| a.conj() * b).sum();
            }
            (gram, rhs)
        })
        .collect();
    let mut gram = DMatrix::<C64>::zeros(nc, nc);
    let mut rhs = DVector::<C64>::zeros(nc);
    for (g, r) in &per_slice {
        gram += g;
        rhs += r;
    }

    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e.abs()), hi.max(e.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    let trace: f64 = (0..nc).map(|i| gram[(i, i)].re).sum();
    let ridge = 1e-9 * trace / nc as f64;
    let mut reg = gram;
    for i in 0..nc {
        reg[(i, i)] += C64::new(ridge, 0.0);
    }
    let alpha: Vec<C64> = if trace > 0.0 {
        match reg.clone().cholesky() {
            Some(ch) => ch.solve(&rhs).iter().copied().collect(),
            None => reg
                .lu()
                .solve(&rhs)
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|| vec![C64::new(0.0, 0.0); nc]),
        }
    } else {
        vec![C64::new(0.0, 0.0); nc]
    };

    let residual = esc_residual(coil_images, target, &alpha);
    Ok(EscCoefficients { alpha, condition, rank_deficient: condition > ESC_CONDITION_LIMIT, residual })
}

/// `||Σ α_i m̃_i − target||₂` over the whole volume.
pub fn esc_residual(coil_images: &ImageVolume, target: &RealVolume, alpha: &[C64]) -> f64 {
    let mut acc = 0.0;
    for (coils, t) in coil_images.data().outer_iter().zip(target.data().outer_iter()) {
        let mut comb = Array2::<C64>::zeros(t.dim());
        for (coil, &a) in coils.outer_iter().zip(alpha) {
            Zip::from(&mut comb).and(&coil).for_each(|c, &z| *c += a * z);
        }
        acc += comb.iter().zip(t.iter()).map(|(c, &tv)| (c - tv).norm_sqr()).sum::<f64>();
    }
    acc.sqrt()
}

/// Single-coil k-space `Σ_i α_i y_i`, coil axis retained with extent 1.
pub fn esc_kspace(coil_kspace: &KSpaceVolume, alpha: &EscCoefficients) -> Result<KSpaceVolume> {
    let (sl, nc, h, w) = coil_kspace.dim();
    if alpha.alpha.len() != nc {
        return Err(CoreError::ShapeMismatch { expected: vec![nc], actual: vec![alpha.alpha.len()] });
    }
    let mut out = Array4::zeros((sl, 1, h, w));
    for (mut dst, src) in out.outer_iter_mut().zip(coil_kspace.data().outer_iter()) {
        let mut acc = dst.index_axis_mut(Axis(0), 0);
        for (coil, &a) in src.outer_iter().zip(&alpha.alpha) {
            Zip::from(&mut acc).and(&coil).for_each(|d, &z| *d += a * z);
        }
    }
    Ok(KSpaceVolume::from_array(out, coil_kspace.acquisition))
}

/// Low-pass calibration: per slice, inverse-transform the central block of
/// each coil and divide by the RSS of those low-resolution images.
///
/// `smoothing_width > 0` tapers the outer `smoothing_width` columns on each
/// side of the calibration block with a half-cosine ramp; 0 keeps the plain
/// rectangular window. Returns one map set per slice.
pub fn estimate_sensitivities(
    y: &KSpaceVolume,
    mask: &SamplingMask,
    smoothing_width: usize,
) -> Result<Vec<SensitivitySet>> {
    let (_, _, h, w) = y.dim();
    if mask.width() != w {
        return Err(CoreError::MaskLengthMismatch { mask: mask.width(), width: w });
    }
    if mask.num_low_frequency < MIN_CALIBRATION_LINES {
        return Err(CoreError::TooFewCalibrationLines {
            needed: MIN_CALIBRATION_LINES,
            found: mask.num_low_frequency,
        });
    }
    let centre = mask.center_range();
    let taper = calibration_window(centre.clone(), w, smoothing_width);
    let fft = CenteredFft2::new(h, w);
    let mut calib = y.data().clone();
    let keep: Vec<bool> = (0..w).map(|c| centre.contains(&c)).collect();
    apply_mask_inplace(&mut calib, &keep)?;

    let sets = calib
        .outer_iter()
        .into_par_iter()
        .map(|slice| {
            let mut low = Array3::<C64>::zeros(slice.dim());
            for (mut dst, coil) in low.outer_iter_mut().zip(slice.outer_iter()) {
                let mut tapered = coil.to_owned();
                for (c, &t) in taper.iter().enumerate() {
                    if t != 1.0 {
                        tapered.column_mut(c).mapv_inplace(|z| z * t);
                    }
                }
                dst.assign(&fft.inverse(tapered.view()));
            }
            SensitivitySet::normalize(low)
        })
        .collect();
    Ok(sets)
}

fn calibration_window(centre: std::ops::Range<usize>, width: usize, smoothing: usize) -> Vec<f64> {
    let mut win = vec![1.0; width];
    let n = centre.len();
    let ramp = smoothing.min(n / 2);
    for k in 0..ramp {
        // half-cosine from ~0 at the block edge up to 1 inside
        let t = 0.5 * (1.0 - (std::f64::consts::PI * (k as f64 + 1.0) / (ramp as f64 + 1.0)).cos());
        win[centre.start + k] = t;
        win[centre.end - 1 - k] = t;
    }
    win
}

/// Sensitivity maps of one slice: either a shared set or one set per slice.
pub fn maps_for_slice(sets: &[SensitivitySet], slice: usize) -> &SensitivitySet {
    if sets.len() == 1 {
        &sets[0]
    } else {
        &sets[slice]
    }
}

/// Applies `S_i` of one slice to a plane.
pub(crate) fn apply_maps(maps: ArrayView3<'_, C64>, img: ArrayView2<'_, C64>) -> Array3<C64> {
    let mut out = Array3::zeros(maps.dim());
    for (mut d, map) in out.outer_iter_mut().zip(maps.outer_iter()) {
        Zip::from(&mut d).and(&map).and(&img).for_each(|d, &s, &m| *d = s * m);
    }
    out
}
