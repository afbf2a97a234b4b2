//! Sparsity regularizers and their proximal maps.
//!
//! All three penalties act on complex planes through the complex modulus, so
//! thresholding shrinks magnitudes and leaves phase untouched.

use ndarray::{Array2, ArrayView2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tensor::ImageVolume;
use crate::wavelet::{dwt2_forward, dwt2_inverse, soft_threshold, soft_threshold_pyramid, DEFAULT_LEVELS};
use crate::C64;

/// Default number of dual iterations for the TV proximal map.
pub const DEFAULT_TV_INNER_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regularizer {
    /// `||m||₁`
    L1,
    /// `||Ψ m||₁` over the DB2 detail coefficients.
    Wavelet { levels: usize },
    /// Isotropic total variation with forward differences.
    Tv { inner_iters: usize },
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer::Tv { inner_iters: DEFAULT_TV_INNER_ITERS }
    }
}

impl Regularizer {
    pub fn wavelet() -> Self {
        Regularizer::Wavelet { levels: DEFAULT_LEVELS }
    }

    pub fn tv() -> Self {
        Regularizer::default()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::L1 => "l1",
            Regularizer::Wavelet { .. } => "wavelet",
            Regularizer::Tv { .. } => "tv",
        }
    }

    /// Penalty value of one plane.
    pub fn value(&self, plane: ArrayView2<'_, C64>) -> f64 {
        match *self {
            Regularizer::L1 => plane.iter().map(|z| z.norm()).sum(),
            Regularizer::Wavelet { levels } => {
                let levels = usable_levels(plane.dim(), levels);
                dwt2_forward(plane, levels)
                    .expect("levels clamped to plane size")
                    .detail_coefficients()
                    .map(|c| c.norm())
                    .sum()
            }
            Regularizer::Tv { .. } => tv_value(plane),
        }
    }

    /// `argmin_z t·R(z) + ½||z − plane||²`.
    ///
    /// Exact for L1 and for the wavelet penalty on dyadic extents; the TV map
    /// runs `inner_iters` accelerated dual projection steps from zero.
    pub fn prox(&self, plane: ArrayView2<'_, C64>, t: f64) -> Result<Array2<C64>> {
        if t < 0.0 || t.is_nan() {
            return Err(CoreError::NegativeThreshold(t));
        }
        if t == 0.0 {
            return Ok(plane.to_owned());
        }
        Ok(match *self {
            Regularizer::L1 => plane.mapv(|z| soft_threshold(z, t)),
            Regularizer::Wavelet { levels } => {
                let levels = usable_levels(plane.dim(), levels);
                let p = dwt2_forward(plane, levels)?;
                dwt2_inverse(&soft_threshold_pyramid(&p, t)?)?
            }
            Regularizer::Tv { inner_iters } => tv_prox(plane, t, inner_iters),
        })
    }
}

/// Largest level count `≤ requested` that the plane supports.
fn usable_levels((h, w): (usize, usize), requested: usize) -> usize {
    let max = (usize::BITS - h.min(w).max(1).leading_zeros()) as usize;
    requested.clamp(1, max.max(1))
}

/// Sum of the penalty over every plane of the volume.
pub fn reg_value(r: &Regularizer, m: &ImageVolume) -> f64 {
    let mut total = 0.0;
    for slice in m.data().outer_iter() {
        for plane in slice.outer_iter() {
            total += r.value(plane);
        }
    }
    total
}

/// Plane-wise proximal map over the volume.
pub fn reg_prox(r: &Regularizer, m: &ImageVolume, t: f64) -> Result<ImageVolume> {
    let mut out = m.data().clone();
    let results: Vec<Result<()>> = out
        .outer_iter_mut()
        .into_par_iter()
        .map(|mut slice| {
            for mut plane in slice.outer_iter_mut() {
                let z = r.prox(plane.view(), t)?;
                plane.assign(&z);
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ImageVolume::from_array(out))
}

/// Forward differences along height and width, zero past the last index.
pub fn gradient(x: ArrayView2<'_, C64>) -> (Array2<C64>, Array2<C64>) {
    let (h, w) = x.dim();
    let mut dv = Array2::zeros((h, w));
    let mut dh = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let v = x[[i, j]];
            if i + 1 < h {
                dv[[i, j]] = x[[i + 1, j]] - v;
            }
            if j + 1 < w {
                dh[[i, j]] = x[[i, j + 1]] - v;
            }
        }
    }
    (dv, dh)
}

/// Discrete divergence, the negative adjoint of [`gradient`].
pub fn divergence(pv: &Array2<C64>, ph: &Array2<C64>) -> Array2<C64> {
    let (h, w) = pv.dim();
    let zero = C64::new(0.0, 0.0);
    Array2::from_shape_fn((h, w), |(i, j)| {
        let v = if h == 1 {
            zero
        } else if i == 0 {
            pv[[i, j]]
        } else if i + 1 == h {
            -pv[[i - 1, j]]
        } else {
            pv[[i, j]] - pv[[i - 1, j]]
        };
        let hz = if w == 1 {
            zero
        } else if j == 0 {
            ph[[i, j]]
        } else if j + 1 == w {
            -ph[[i, j - 1]]
        } else {
            ph[[i, j]] - ph[[i, j - 1]]
        };
        v + hz
    })
}

/// `Σ_{i,j} sqrt(|m_{i+1,j} − m_{i,j}|² + |m_{i,j+1} − m_{i,j}|²)`.
pub fn tv_value(plane: ArrayView2<'_, C64>) -> f64 {
    let (dv, dh) = gradient(plane);
    Zip::from(&dv).and(&dh).fold(0.0, |acc, a, b| acc + (a.norm_sqr() + b.norm_sqr()).sqrt())
}

/// Row-major divergence of `(pv, ph)` into `out`; same stencil as [`divergence`].
fn divergence_flat(pv: &[C64], ph: &[C64], h: usize, w: usize, out: &mut [C64]) {
    let zero = C64::new(0.0, 0.0);
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let v = (if i + 1 < h { pv[k] } else { zero }) - (if i > 0 { pv[k - w] } else { zero });
            let hz = (if j + 1 < w { ph[k] } else { zero }) - (if j > 0 { ph[k - 1] } else { zero });
            out[k] = v + hz;
        }
    }
}

/// Fast gradient projection on the dual of the TV denoising problem.
fn tv_prox(m: ArrayView2<'_, C64>, t: f64, iters: usize) -> Array2<C64> {
    let (h, w) = m.dim();
    let n = h * w;
    let m: Vec<C64> = m.iter().copied().collect();
    let zero = C64::new(0.0, 0.0);
    let mut pv = vec![zero; n];
    let mut ph = vec![zero; n];
    let mut rv = vec![zero; n];
    let mut rh = vec![zero; n];
    let mut nv = vec![zero; n];
    let mut nh = vec![zero; n];
    let mut u = vec![zero; n];
    let mut tk = 1.0f64;
    let step = 1.0 / (8.0 * t);
    for _ in 0..iters {
        // p = Proj(r + step * grad(t div r - m))
        divergence_flat(&rv, &rh, h, w, &mut u);
        for (u, &mv) in u.iter_mut().zip(&m) {
            *u = *u * t - mv;
        }
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                let gv = if i + 1 < h { u[k + w] - u[k] } else { zero };
                let gh = if j + 1 < w { u[k + 1] - u[k] } else { zero };
                let a = rv[k] + gv * step;
                let b = rh[k] + gh * step;
                let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
                let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
                nv[k] = a * scale;
                nh[k] = b * scale;
            }
        }
        let tk1 = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let beta = (tk - 1.0) / tk1;
        for k in 0..n {
            rv[k] = nv[k] + (nv[k] - pv[k]) * beta;
            rh[k] = nh[k] + (nh[k] - ph[k]) * beta;
        }
        std::mem::swap(&mut pv, &mut nv);
        std::mem::swap(&mut ph, &mut nh);
        tk = tk1;
    }
    divergence_flat(&pv, &ph, h, w, &mut u);
    let out: Vec<C64> = m.iter().zip(&u).map(|(&mv, &d)| mv - d * t).collect();
    Array2::from_shape_vec((h, w), out).expect("plane shape")
}
