//! Reconstruction algorithms.
//!
//! * zero-filled inverse transform (magnitude, RSS for coil stacks)
//! * unregularized multi-coil least squares by conjugate gradients
//! * compressed sensing: proximal gradient on
//!   `½ Σ_i ||P F(S_i m) − y_i||² + λ R(m)`, one independent solve per slice
//!
//! With normalized sensitivities and the unitary transform the data term has
//! a Lipschitz-1 gradient, so the default step of 1 needs no backtracking in
//! exact arithmetic; backtracking still guards inexact (TV) proximal maps.

use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coils::{apply_maps, maps_for_slice, rss_combine, SensitivitySet};
use crate::error::{CoreError, Result};
use crate::fourier::{ifft2c, CenteredFft2};
use crate::masking::{apply_mask_inplace, SamplingMask};
use crate::regularizers::Regularizer;
use crate::tensor::{CropSpec, ImageVolume, KSpaceVolume, RealVolume};
use crate::C64;

/// Backtracking gives up once the step has shrunk by this factor.
const MIN_STEP_FRACTION: f64 = 1e-12;

/// Consecutive residual increases tolerated by conjugate gradients.
const CG_DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub regularizer: Regularizer,
    pub step: f64,
    pub backtracking: bool,
    /// Stop when both the relative objective change and the relative
    /// iterate change fall below `tol`.
    pub tol: f64,
    /// FISTA momentum. The objective trace is then no longer monotone.
    pub accelerated: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            lambda: 0.01,
            max_iters: 200,
            regularizer: Regularizer::default(),
            step: 1.0,
            backtracking: true,
            tol: 1e-6,
            accelerated: false,
        }
    }
}

impl SolveConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        SolveConfig { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(CoreError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CoreError::InvalidConfig(format!("lambda {} must be finite and ≥ 0", self.lambda)));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(CoreError::InvalidConfig(format!("step {} must be positive", self.step)));
        }
        if !(self.tol >= 0.0) {
            return Err(CoreError::InvalidConfig(format!("tol {} must be ≥ 0", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Objective at the initial point followed by one entry per iteration.
    pub objective: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Step size in effect when the solve returned.
    pub final_step: f64,
}

/// Result of a compressed-sensing solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Cropped magnitude image.
    pub image: RealVolume,
    /// Uncropped complex estimate, coil extent 1.
    pub estimate: ImageVolume,
    /// One trace per slice, in slice order.
    pub traces: Vec<SolveTrace>,
}

/// The masked encoding operator of a single slice.
#[derive(Debug, Clone)]
pub struct SliceOperator<'a> {
    fft: &'a CenteredFft2,
    maps: Option<ArrayView3<'a, C64>>,
    keep: &'a [bool],
}

impl<'a> SliceOperator<'a> {
    /// `None` maps means a single coil with unit sensitivity.
    pub fn new(fft: &'a CenteredFft2, maps: Option<ArrayView3<'a, C64>>, keep: &'a [bool]) -> Self {
        SliceOperator { fft, maps, keep }
    }

    pub fn coil_count(&self) -> usize {
        self.maps.map_or(1, |m| m.dim().0)
    }

    /// `P F(S_i x)` for every coil.
    pub fn forward(&self, x: ArrayView2<'_, C64>) -> Array3<C64> {
        let (h, w) = x.dim();
        let mut out = match self.maps {
            None => {
                let mut out = Array3::zeros((1, h, w));
                out.index_axis_mut(Axis(0), 0).assign(&self.fft.forward(x));
                out
            }
            Some(maps) => {
                let mut coils = apply_maps(maps, x);
                for mut c in coils.outer_iter_mut() {
                    let k = self.fft.forward(c.view());
                    c.assign(&k);
                }
                coils
            }
        };
        mask_columns(&mut out, self.keep);
        out
    }

    /// `Σ_i conj(S_i) F⁻¹(P r_i)`.
    pub fn adjoint(&self, r: &Array3<C64>) -> Array2<C64> {
        let mut masked = r.clone();
        mask_columns(&mut masked, self.keep);
        match self.maps {
            None => self.fft.inverse(masked.index_axis(Axis(0), 0)),
            Some(maps) => {
                let (_, h, w) = r.dim();
                let mut acc = Array2::zeros((h, w));
                for (coil, map) in masked.outer_iter().zip(maps.outer_iter()) {
                    let img = self.fft.inverse(coil);
                    Zip::from(&mut acc).and(&img).and(&map).for_each(|a, &z, &s| *a += s.conj() * z);
                }
                acc
            }
        }
    }
}

fn mask_columns(a: &mut Array3<C64>, keep: &[bool]) {
    for (c, &k) in keep.iter().enumerate() {
        if !k {
            a.index_axis_mut(Axis(2), c).fill(C64::new(0.0, 0.0));
        }
    }
}

fn sq_norm<'a>(it: impl IntoIterator<Item = &'a C64>) -> f64 {
    it.into_iter().map(|z| z.norm_sqr()).sum()
}

/// One slice of the regularized least-squares problem.
#[derive(Debug, Clone)]
pub struct SliceProblem<'a> {
    pub op: SliceOperator<'a>,
    pub y: ArrayView3<'a, C64>,
    pub regularizer: Regularizer,
    pub lambda: f64,
}

impl<'a> SliceProblem<'a> {
    /// `A x − y`.
    pub fn residual(&self, x: ArrayView2<'_, C64>) -> Array3<C64> {
        let mut r = self.op.forward(x);
        Zip::from(&mut r).and(&self.y).for_each(|r, &y| *r -= y);
        r
    }

    pub fn data_term(&self, x: ArrayView2<'_, C64>) -> f64 {
        0.5 * sq_norm(self.residual(x).iter())
    }

    pub fn objective(&self, x: ArrayView2<'_, C64>) -> f64 {
        self.objective_with_residual(x).0
    }

    fn objective_with_residual(&self, x: ArrayView2<'_, C64>) -> (f64, Array3<C64>) {
        let r = self.residual(x);
        let mut f = 0.5 * sq_norm(r.iter());
        if self.lambda > 0.0 {
            f += self.lambda * self.regularizer.value(x);
        }
        (f, r)
    }

    /// `Aᴴ(A x − y)`.
    pub fn gradient(&self, x: ArrayView2<'_, C64>) -> Array2<C64> {
        self.op.adjoint(&self.residual(x))
    }

    /// `prox_{step·λ R}(x − step · ∇f(x))`.
    pub fn prox_step(&self, x: ArrayView2<'_, C64>, grad: &Array2<C64>, step: f64) -> Result<Array2<C64>> {
        let moved = Zip::from(&x).and(grad).map_collect(|&x, &g| x - g * step);
        self.regularizer.prox(moved.view(), step * self.lambda)
    }

    /// `||x − prox(x − step ∇f(x))||₂ / ||x||₂`.
    pub fn fixed_point_residual(&self, x: ArrayView2<'_, C64>, step: f64) -> Result<f64> {
        let z = self.prox_step(x, &self.gradient(x), step)?;
        let num = Zip::from(&z).and(&x).fold(0.0, |acc, a, b| acc + (a - b).norm_sqr()).sqrt();
        let den = sq_norm(x.iter()).sqrt();
        Ok(if den > 0.0 { num / den } else { num })
    }

    /// Proximal gradient from `x0`.
    pub fn solve(&self, x0: Array2<C64>, cfg: &SolveConfig) -> Result<(Array2<C64>, SolveTrace)> {
        if cfg.accelerated {
            self.solve_accelerated(x0, cfg)
        } else {
            self.solve_monotone(x0, cfg)
        }
    }

    fn solve_monotone(&self, x0: Array2<C64>, cfg: &SolveConfig) -> Result<(Array2<C64>, SolveTrace)> {
        let mut x = x0;
        let (mut f, mut resid) = self.objective_with_residual(x.view());
        let mut trace = SolveTrace { objective: vec![f], iterations_run: 0, converged: false, final_step: cfg.step };
        let mut step = cfg.step;
        for _ in 0..cfg.max_iters {
            let grad = self.op.adjoint(&resid);
            let accepted = loop {
                let z = self.prox_step(x.view(), &grad, step)?;
                let (fz, rz) = self.objective_with_residual(z.view());
                if !cfg.backtracking || fz <= f {
                    break Some((z, fz, rz));
                }
                step *= 0.5;
                if step < cfg.step * MIN_STEP_FRACTION {
                    break None;
                }
            };
            let Some((z, fz, rz)) = accepted else {
                // no descent at any step size: x is stationary to working precision
                trace.converged = true;
                break;
            };
            let dx = Zip::from(&z).and(&x).fold(0.0, |acc, a, b| acc + (a - b).norm_sqr()).sqrt();
            let xn = sq_norm(z.iter()).sqrt();
            let rel_obj = if f > 0.0 { (f - fz).abs() / f } else { 0.0 };
            let rel_dx = if xn > 0.0 { dx / xn } else { dx };
            x = z;
            f = fz;
            resid = rz;
            trace.objective.push(f);
            trace.iterations_run += 1;
            if rel_obj < cfg.tol && rel_dx < cfg.tol {
                trace.converged = true;
                break;
            }
        }
        trace.final_step = step;
        Ok((x, trace))
    }

    fn solve_accelerated(&self, x0: Array2<C64>, cfg: &SolveConfig) -> Result<(Array2<C64>, SolveTrace)> {
        let mut x = x0.clone();
        let mut x_prev = x0;
        let mut t = 1.0f64;
        let mut trace = SolveTrace {
            objective: vec![self.objective(x.view())],
            iterations_run: 0,
            converged: false,
            final_step: cfg.step,
        };
        let mut step = cfg.step;
        for _ in 0..cfg.max_iters {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let yk = Zip::from(&x).and(&x_prev).map_collect(|&a, &b| a + (a - b) * beta);
            let ry = self.residual(yk.view());
            let fy = 0.5 * sq_norm(ry.iter());
            let grad = self.op.adjoint(&ry);
            let z = loop {
                let z = self.prox_step(yk.view(), &grad, step)?;
                if !cfg.backtracking {
                    break z;
                }
                let diff = Zip::from(&z).and(&yk).map_collect(|&a, &b| a - b);
                let lin: f64 = grad.iter().zip(diff.iter()).map(|(g, d)| (g.conj() * d).re).sum();
                let bound = fy + lin + sq_norm(diff.iter()) / (2.0 * step);
                if self.data_term(z.view()) <= bound * (1.0 + 1e-12) || step < cfg.step * MIN_STEP_FRACTION {
                    break z;
                }
                step *= 0.5;
            };
            let fz = self.objective(z.view());
            let prev_f = *trace.objective.last().expect("initial objective");
            let dx = Zip::from(&z).and(&x).fold(0.0, |acc, a, b| acc + (a - b).norm_sqr()).sqrt();
            let xn = sq_norm(z.iter()).sqrt();
            x_prev = std::mem::replace(&mut x, z);
            t = t_next;
            trace.objective.push(fz);
            trace.iterations_run += 1;
            let rel_obj = if prev_f > 0.0 { (prev_f - fz).abs() / prev_f } else { 0.0 };
            let rel_dx = if xn > 0.0 { dx / xn } else { dx };
            if rel_obj < cfg.tol && rel_dx < cfg.tol {
                trace.converged = true;
                break;
            }
        }
        trace.final_step = step;
        Ok((x, trace))
    }
}

fn single_coil_magnitude(estimate: &ImageVolume, crop: CropSpec) -> Result<RealVolume> {
    estimate.magnitude().center_crop(crop)
}

/// `C(|F⁻¹(P y)|)`; coil stacks are RSS-combined before cropping.
///
/// When `mask` is given it is applied first, otherwise `y` is taken as
/// already masked.
pub fn zero_filled(y: &KSpaceVolume, mask: Option<&SamplingMask>, crop: CropSpec) -> Result<RealVolume> {
    let mut data = y.data().clone();
    if let Some(m) = mask {
        apply_mask_inplace(&mut data, &m.keep)?;
    }
    let imgs = ifft2c(&KSpaceVolume::from_array(data, y.acquisition));
    if y.coil_count() == 1 {
        single_coil_magnitude(&imgs, crop)
    } else {
        rss_combine(&imgs).center_crop(crop)
    }
}

fn check_maps(y: &KSpaceVolume, sets: &[SensitivitySet]) -> Result<()> {
    let (sl, nc, h, w) = y.dim();
    if sets.is_empty() || (sets.len() != 1 && sets.len() != sl) {
        return Err(CoreError::ShapeMismatch { expected: vec![sl], actual: vec![sets.len()] });
    }
    for s in sets {
        if s.coil_count() != nc || s.spatial() != (h, w) {
            return Err(CoreError::ShapeMismatch {
                expected: vec![nc, h, w],
                actual: vec![s.coil_count(), s.spatial().0, s.spatial().1],
            });
        }
    }
    Ok(())
}

fn check_mask(y: &KSpaceVolume, mask: &SamplingMask) -> Result<()> {
    if mask.width() != y.width() {
        return Err(CoreError::MaskLengthMismatch { mask: mask.width(), width: y.width() });
    }
    Ok(())
}

fn run_slices(
    y: &KSpaceVolume,
    sets: Option<&[SensitivitySet]>,
    mask: &SamplingMask,
    cfg: &SolveConfig,
    crop: CropSpec,
) -> Result<Reconstruction> {
    cfg.validate()?;
    check_mask(y, mask)?;
    let (sl, _, h, w) = y.dim();
    let fft = CenteredFft2::new(h, w);
    let mut masked = y.data().clone();
    apply_mask_inplace(&mut masked, &mask.keep)?;

    let solved: Vec<Result<(Array2<C64>, SolveTrace)>> = (0..sl)
        .into_par_iter()
        .map(|s| {
            let maps = sets.map(|sets| maps_for_slice(sets, s).maps.view());
            let op = SliceOperator::new(&fft, maps, &mask.keep);
            let y_s = masked.slice(s![s, .., .., ..]);
            let x0 = op.adjoint(&y_s.to_owned());
            let problem = SliceProblem { op, y: y_s, regularizer: cfg.regularizer, lambda: cfg.lambda };
            problem.solve(x0, cfg)
        })
        .collect();

    let mut estimate = Array4::zeros((sl, 1, h, w));
    let mut traces = Vec::with_capacity(sl);
    for (s, r) in solved.into_iter().enumerate() {
        let (x, trace) = r?;
        estimate.slice_mut(s![s, 0, .., ..]).assign(&x);
        traces.push(trace);
    }
    let estimate = ImageVolume::from_array(estimate);
    let image = single_coil_magnitude(&estimate, crop)?;
    Ok(Reconstruction { image, estimate, traces })
}

/// Single-coil compressed sensing, started from the zero-filled image.
pub fn cs_reconstruct_singlecoil(
    y: &KSpaceVolume,
    mask: &SamplingMask,
    cfg: &SolveConfig,
    crop: CropSpec,
) -> Result<Reconstruction> {
    if y.coil_count() != 1 {
        return Err(CoreError::ShapeMismatch {
            expected: vec![y.slices(), 1, y.height(), y.width()],
            actual: vec![y.slices(), y.coil_count(), y.height(), y.width()],
        });
    }
    run_slices(y, None, mask, cfg, crop)
}

/// Multi-coil compressed sensing, started from the adjoint image.
///
/// `sets` holds either one map set shared by all slices or one per slice.
pub fn cs_reconstruct_multicoil(
    y: &KSpaceVolume,
    sets: &[SensitivitySet],
    mask: &SamplingMask,
    cfg: &SolveConfig,
    crop: CropSpec,
) -> Result<Reconstruction> {
    check_maps(y, sets)?;
    run_slices(y, Some(sets), mask, cfg, crop)
}

/// Conjugate gradients on the normal equations of
/// `min_m Σ_i ||P F(S_i m) − y_i||²`, started from zero.
///
/// Returns the cropped magnitude; fails if the normal residual grows for ten
/// consecutive iterations.
pub fn least_squares_multicoil(
    y: &KSpaceVolume,
    sets: &[SensitivitySet],
    mask: &SamplingMask,
    iters: usize,
    crop: CropSpec,
) -> Result<RealVolume> {
    Ok(least_squares_estimate(y, sets, mask, iters)?.magnitude().center_crop(crop)?)
}

/// Uncropped complex least-squares estimate behind [`least_squares_multicoil`].
pub fn least_squares_estimate(
    y: &KSpaceVolume,
    sets: &[SensitivitySet],
    mask: &SamplingMask,
    iters: usize,
) -> Result<ImageVolume> {
    check_maps(y, sets)?;
    check_mask(y, mask)?;
    let (sl, _, h, w) = y.dim();
    let fft = CenteredFft2::new(h, w);
    let mut masked = y.data().clone();
    apply_mask_inplace(&mut masked, &mask.keep)?;
    let solved: Vec<Result<Array2<C64>>> = (0..sl)
        .into_par_iter()
        .map(|s| {
            let op = SliceOperator::new(&fft, Some(maps_for_slice(sets, s).maps.view()), &mask.keep);
            cgls(&op, masked.slice(s![s, .., .., ..]), iters)
        })
        .collect();
    let mut out = Array4::zeros((sl, 1, h, w));
    for (s, r) in solved.into_iter().enumerate() {
        out.slice_mut(s![s, 0, .., ..]).assign(&r?);
    }
    Ok(ImageVolume::from_array(out))
}

fn cgls(op: &SliceOperator<'_>, y: ArrayView3<'_, C64>, iters: usize) -> Result<Array2<C64>> {
    let (_, h, w) = y.dim();
    let mut x = Array2::<C64>::zeros((h, w));
    let mut r = y.to_owned();
    let mut s = op.adjoint(&r);
    let mut p = s.clone();
    let mut gamma = sq_norm(s.iter());
    let gamma0 = gamma;
    let mut growth = 0;
    for it in 0..iters {
        if gamma <= 1e-28 * gamma0 || gamma == 0.0 {
            break;
        }
        let q = op.forward(p.view());
        let qq = sq_norm(q.iter());
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        Zip::from(&mut x).and(&p).for_each(|x, &p| *x += p * alpha);
        Zip::from(&mut r).and(&q).for_each(|r, &q| *r -= q * alpha);
        s = op.adjoint(&r);
        let gamma_next = sq_norm(s.iter());
        if !gamma_next.is_finite() {
            return Err(CoreError::Diverged { iterations: it + 1 });
        }
        if gamma_next > gamma {
            growth += 1;
            if growth >= CG_DIVERGENCE_WINDOW {
                return Err(CoreError::Diverged { iterations: it + 1 });
            }
        } else {
            growth = 0;
        }
        let beta = gamma_next / gamma;
        Zip::from(&mut p).and(&s).for_each(|p, &s| *p = s + *p * beta);
        gamma = gamma_next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::forward_multicoil;
    use crate::fourier::fft2c;
    use crate::masking::{make_random_mask, MaskKind, MaskPolicy};
    use crate::metrics::nmse;
    use crate::phantom::{acquire, make_phantom, make_sensitivities, AcquisitionSpec, PhantomSpec};
    use crate::tensor::Acquisition;

    fn phantom_kspace(n: usize, coils: usize, sigma: f64) -> (RealVolume, KSpaceVolume, SensitivitySet) {
        let m = make_phantom(&PhantomSpec::shepp_logan(n, n, 1));
        let s = make_sensitivities(n, n, coils, 4);
        let y = acquire(&ImageVolume::from_real(&m), &s, &AcquisitionSpec { coils, noise_sigma: sigma, sensitivity_seed: 4 }, 9).unwrap();
        (m, y, s)
    }

    fn single_coil(m: &RealVolume) -> KSpaceVolume {
        fft2c(&ImageVolume::from_real(m))
    }

    #[test]
    fn config_validation() {
        assert!(SolveConfig::default().validate().is_ok());
        assert!(SolveConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SolveConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_filled_full_mask_is_plain_magnitude() {
        let (m, _, _) = phantom_kspace(32, 1, 0.0);
        let y = single_coil(&m);
        let crop = CropSpec::square(24);
        let zf = zero_filled(&y, Some(&SamplingMask::full(32)), crop).unwrap();
        let direct = ifft2c(&y).magnitude().center_crop(crop).unwrap();
        assert_eq!(zf, direct);
        let zero = KSpaceVolume::zeros((1, 4, 16, 16), Acquisition::SYNTHETIC);
        assert!(zero_filled(&zero, None, CropSpec::square(8)).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda_zero_full_sampling_exact_at_start() {
        let (m, _, _) = phantom_kspace(32, 1, 0.0);
        let y = single_coil(&m);
        let cfg = SolveConfig { lambda: 0.0, max_iters: 5, ..Default::default() };
        let rec = cs_reconstruct_singlecoil(&y, &SamplingMask::full(32), &cfg, CropSpec::square(32)).unwrap();
        let t = &rec.traces[0];
        assert!(t.objective[0] <= 1e-20, "{}", t.objective[0]);
        assert!(t.objective.iter().all(|&f| (f - t.objective[0]).abs() <= 1e-20));
        let direct = ifft2c(&y).magnitude();
        let err = rec.image.abs_diff(&direct).iter().copied().fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_image() {
        let y = KSpaceVolume::zeros((2, 1, 16, 16), Acquisition::SYNTHETIC);
        let mask = make_random_mask(16, MaskPolicy::new(4, 0.125, MaskKind::Random), 0).unwrap();
        for reg in [Regularizer::L1, Regularizer::wavelet(), Regularizer::tv()] {
            let cfg = SolveConfig { lambda: 0.1, regularizer: reg, ..Default::default() };
            let rec = cs_reconstruct_singlecoil(&y, &mask, &cfg, CropSpec::square(16)).unwrap();
            assert!(rec.image.data().iter().all(|&v| v == 0.0));
            assert!(rec.traces.iter().all(|t| t.converged));
        }
    }

    #[test]
    fn monotone_trace_and_improvement() {
        let (m, y, _) = phantom_kspace(48, 1, 0.01);
        let mask = make_random_mask(48, MaskPolicy::canonical(4, MaskKind::Random), 3).unwrap();
        let cfg = SolveConfig { lambda: 0.01, max_iters: 100, ..Default::default() };
        let rec = cs_reconstruct_singlecoil(&y, &mask, &cfg, CropSpec::square(48)).unwrap();
        let t = &rec.traces[0];
        assert!(t.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(t.objective.last().unwrap() <= &t.objective[0]);
        let zf = zero_filled(&y, Some(&mask), CropSpec::square(48)).unwrap();
        let target = ifft2c(&y).magnitude();
        assert!(nmse(&rec.image, &target).unwrap() < nmse(&zf, &target).unwrap());
        let _ = m;
    }

    #[test]
    fn multicoil_reduces_to_singlecoil() {
        let (m, _, _) = phantom_kspace(32, 1, 0.0);
        let y = single_coil(&m);
        let mask = make_random_mask(32, MaskPolicy::canonical(4, MaskKind::Random), 8).unwrap();
        let cfg = SolveConfig { lambda: 0.01, max_iters: 30, ..Default::default() };
        let a = cs_reconstruct_singlecoil(&y, &mask, &cfg, CropSpec::square(32)).unwrap();
        let b = cs_reconstruct_multicoil(&y, &[SensitivitySet::identity(32, 32)], &mask, &cfg, CropSpec::square(32)).unwrap();
        assert_eq!(a.traces.len(), b.traces.len());
        for (ta, tb) in a.traces.iter().zip(&b.traces) {
            assert_eq!(ta.objective.len(), tb.objective.len());
            for (fa, fb) in ta.objective.iter().zip(&tb.objective) {
                assert!((fa - fb).abs() <= 1e-12 * fa.abs().max(1.0));
            }
        }
    }

    #[test]
    fn multicoil_near_exact_inverse_at_tiny_lambda() {
        let (m, y, s) = phantom_kspace(32, 4, 0.0);
        let cfg = SolveConfig { lambda: 1e-6, ..Default::default() };
        let rec = cs_reconstruct_multicoil(&y, &[s], &SamplingMask::full(32), &cfg, CropSpec::square(32)).unwrap();
        assert!(nmse(&rec.image, &m).unwrap() <= 1e-3);
    }

    #[test]
    fn least_squares_full_sampling() {
        let (m, y, s) = phantom_kspace(32, 4, 0.0);
        let rec = least_squares_multicoil(&y, &[s], &SamplingMask::full(32), 10, CropSpec::square(32)).unwrap();
        assert!(nmse(&rec, &m).unwrap() < 1e-6);

        let y1 = single_coil(&m);
        let rec1 = least_squares_multicoil(&y1, &[SensitivitySet::identity(32, 32)], &SamplingMask::full(32), 10, CropSpec::square(32)).unwrap();
        let direct = ifft2c(&y1).magnitude();
        assert!(rec1.abs_diff(&direct).iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn least_squares_descends_from_zero() {
        let (_, y, s) = phantom_kspace(32, 4, 0.02);
        let mask = make_random_mask(32, MaskPolicy::canonical(4, MaskKind::Random), 2).unwrap();
        let est = least_squares_estimate(&y, std::slice::from_ref(&s), &mask, 30).unwrap();
        let masked = crate::masking::apply_mask(&y, &mask).unwrap();
        let fwd = crate::masking::apply_mask(&forward_multicoil(&est, &s).unwrap(), &mask).unwrap();
        let resid: f64 = fwd.data().iter().zip(masked.data().iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let zero_resid: f64 = masked.data().iter().map(|z| z.norm_sqr()).sum();
        assert!(resid <= zero_resid);
    }

    #[test]
    fn fixed_point_at_convergence() {
        let (_, y, _) = phantom_kspace(32, 1, 0.01);
        let mask = make_random_mask(32, MaskPolicy::canonical(4, MaskKind::Random), 5).unwrap();
        let cfg = SolveConfig { lambda: 0.02, regularizer: Regularizer::L1, max_iters: 20000, tol: 1e-5, ..Default::default() };
        let fft = CenteredFft2::new(32, 32);
        let masked = crate::masking::apply_mask(&y, &mask).unwrap();
        let op = SliceOperator::new(&fft, None, &mask.keep);
        let ys = masked.data().slice(s![0, .., .., ..]);
        let problem = SliceProblem { op: op.clone(), y: ys, regularizer: cfg.regularizer, lambda: cfg.lambda };
        let x0 = op.adjoint(&ys.to_owned());
        let (x, trace) = problem.solve(x0, &cfg).unwrap();
        assert!(trace.converged);
        assert!(problem.fixed_point_residual(x.view(), trace.final_step).unwrap() <= 10.0 * cfg.tol);
    }

    #[test]
    fn optimal_value_non_decreasing_in_lambda() {
        let (_, y, _) = phantom_kspace(32, 1, 0.01);
        let mask = make_random_mask(32, MaskPolicy::canonical(4, MaskKind::Random), 4).unwrap();
        let mut last = f64::NEG_INFINITY;
        for lambda in [1e-4, 1e-3, 1e-2, 1e-1] {
            let cfg = SolveConfig { lambda, ..Default::default() };
            let rec = cs_reconstruct_singlecoil(&y, &mask, &cfg, CropSpec::square(32)).unwrap();
            let v = *rec.traces[0].objective.last().unwrap();
            assert!(v >= last, "V({lambda}) = {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn accelerated_variant_reaches_lower_objective_quickly() {
        let (_, y, _) = phantom_kspace(32, 1, 0.01);
        let mask = make_random_mask(32, MaskPolicy::canonical(4, MaskKind::Random), 6).unwrap();
        let base = SolveConfig { lambda: 0.01, max_iters: 40, regularizer: Regularizer::wavelet(), ..Default::default() };
        let plain = cs_reconstruct_singlecoil(&y, &mask, &base, CropSpec::square(32)).unwrap();
        let fast = cs_reconstruct_singlecoil(&y, &mask, &SolveConfig { accelerated: true, ..base }, CropSpec::square(32)).unwrap();
        let fp = *plain.traces[0].objective.last().unwrap();
        let ff = *fast.traces[0].objective.last().unwrap();
        assert!(ff <= fp * 1.001, "fista {ff} vs pg {fp}");
    }

    #[test]
    fn deterministic_traces() {
        let (_, y, s) = phantom_kspace(32, 3, 0.01);
        let mask = make_random_mask(32, MaskPolicy::canonical(4, MaskKind::Random), 7).unwrap();
        let cfg = SolveConfig { max_iters: 20, ..Default::default() };
        let a = cs_reconstruct_multicoil(&y, std::slice::from_ref(&s), &mask, &cfg, CropSpec::square(32)).unwrap();
        let b = cs_reconstruct_multicoil(&y, &[s], &mask, &cfg, CropSpec::square(32)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_errors() {
        let y = KSpaceVolume::zeros((1, 2, 8, 8), Acquisition::SYNTHETIC);
        let mask = SamplingMask::full(8);
        assert!(cs_reconstruct_singlecoil(&y, &mask, &SolveConfig::default(), CropSpec::square(8)).is_err());
        assert!(cs_reconstruct_multicoil(&y, &[SensitivitySet::identity(8, 8)], &mask, &SolveConfig::default(), CropSpec::square(8)).is_err());
        assert!(cs_reconstruct_multicoil(&y, &[], &mask, &SolveConfig::default(), CropSpec::square(8)).is_err());
    }
}
