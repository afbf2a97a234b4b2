//! Volume-level image quality metrics on real magnitude volumes.
//!
//! All metrics are computed over the whole volume (every slice at once), not
//! averaged per slice, except SSIM which averages its window scores over all
//! slices. Summation runs in row-major order so results are bit-reproducible.

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tensor::{Acquisition, RealVolume};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Standard deviation of the optional Gaussian SSIM window.
pub const SSIM_GAUSSIAN_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimWindow {
    /// Box window, every sample weighted 1/49.
    #[default]
    Uniform,
    /// Normalized Gaussian weights with σ = 1.5.
    Gaussian,
}

impl SsimWindow {
    fn weights(self) -> Array2<f64> {
        let n = SSIM_WINDOW;
        match self {
            SsimWindow::Uniform => Array2::from_elem((n, n), 1.0 / (n * n) as f64),
            SsimWindow::Gaussian => {
                let c = (n / 2) as f64;
                let g = Array2::from_shape_fn((n, n), |(i, j)| {
                    let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
                    (-d2 / (2.0 * SSIM_GAUSSIAN_SIGMA * SSIM_GAUSSIAN_SIGMA)).exp()
                });
                let total = g.sum();
                g / total
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SsimOptions {
    pub window: SsimWindow,
    /// Dynamic range `L`; `None` uses the maximum of the reference volume.
    pub data_range: Option<f64>,
}

fn check_shapes(vhat: &RealVolume, v: &RealVolume) -> Result<()> {
    if vhat.dim() != v.dim() {
        let (a, b, c) = v.dim();
        let (x, y, z) = vhat.dim();
        return Err(CoreError::ShapeMismatch { expected: vec![a, b, c], actual: vec![x, y, z] });
    }
    Ok(())
}

fn squared_error(vhat: &RealVolume, v: &RealVolume) -> f64 {
    vhat.data().iter().zip(v.data().iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `||vhat − v||² / ||v||²`.
pub fn nmse(vhat: &RealVolume, v: &RealVolume) -> Result<f64> {
    check_shapes(vhat, v)?;
    let denom: f64 = v.data().iter().map(|x| x * x).sum();
    if denom == 0.0 {
        return Err(CoreError::ZeroReference);
    }
    Ok(squared_error(vhat, v) / denom)
}

/// `10 log₁₀(max(v)² / MSE)` in dB; `f64::INFINITY` when the volumes agree.
pub fn psnr(vhat: &RealVolume, v: &RealVolume) -> Result<f64> {
    check_shapes(vhat, v)?;
    let n = v.data().len();
    if n == 0 {
        return Err(CoreError::ZeroReference);
    }
    let mse = squared_error(vhat, v) / n as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = v.max();
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Sum of absolute differences.
pub fn l1_error(vhat: &RealVolume, v: &RealVolume) -> Result<f64> {
    check_shapes(vhat, v)?;
    Ok(vhat.data().iter().zip(v.data().iter()).map(|(a, b)| (a - b).abs()).sum())
}

/// Mean SSIM over all interior 7×7 windows of all slices, uniform window,
/// `L = max(v)`.
pub fn ssim(vhat: &RealVolume, v: &RealVolume) -> Result<f64> {
    ssim_with(vhat, v, SsimOptions::default())
}

pub fn ssim_with(vhat: &RealVolume, v: &RealVolume, opts: SsimOptions) -> Result<f64> {
    check_shapes(vhat, v)?;
    let (sl, h, w) = v.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(CoreError::TooSmallForWindow { height: h, width: w, window: SSIM_WINDOW });
    }
    if sl == 0 {
        return Err(CoreError::ZeroReference);
    }
    let range = opts.data_range.unwrap_or_else(|| v.max());
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let weights = opts.window.weights();
    let per_slice: Vec<f64> = (0..sl)
        .into_par_iter()
        .map(|s| {
            ssim_slice_sum(
                vhat.data().slice(s![s, .., ..]),
                v.data().slice(s![s, .., ..]),
                weights.view(),
                c1,
                c2,
            )
        })
        .collect();
    let windows = sl * (h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1);
    Ok(per_slice.iter().sum::<f64>() / windows as f64)
}

/// SSIM of one window from its weighted moments.
fn window_score(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, c1: f64, c2: f64) -> f64 {
    let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
    let den = (mx * mx + my * my + c1) * (vx + vy + c2);
    num / den
}

fn ssim_slice_sum(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, wts: ArrayView2<'_, f64>, c1: f64, c2: f64) -> f64 {
    let (h, w) = x.dim();
    let n = SSIM_WINDOW;
    let mut total = 0.0;
    for i in 0..=h - n {
        for j in 0..=w - n {
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let wt = wts[[a, b]];
                    mx += wt * x[[i + a, j + b]];
                    my += wt * y[[i + a, j + b]];
                }
            }
            // centred second pass keeps flat windows free of cancellation error
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let wt = wts[[a, b]];
                    let p = x[[i + a, j + b]] - mx;
                    let q = y[[i + a, j + b]] - my;
                    vx += wt * p * p;
                    vy += wt * q * q;
                    cxy += wt * p * q;
                }
            }
            total += window_score(mx, my, vx, vy, cxy, c1, c2);
        }
    }
    total
}

/// The four metrics for one reconstruction against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub nmse: f64,
    /// May be `+inf`; serialized as the string `"inf"`.
    #[serde(with = "infinite_as_string")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub l1: f64,
}

impl MetricValues {
    pub fn compute(vhat: &RealVolume, v: &RealVolume) -> Result<Self> {
        Ok(MetricValues {
            nmse: nmse(vhat, v)?,
            psnr_db: psnr(vhat, v)?,
            ssim: ssim(vhat, v)?,
            l1: l1_error(vhat, v)?,
        })
    }
}

/// Per-volume metric record with its grouping keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub volume_id: String,
    pub acquisition: Acquisition,
    pub acceleration: u32,
    pub track: String,
    #[serde(flatten)]
    pub values: MetricValues,
}

/// Serializes infinite values as `"inf"` / `"-inf"` and accepts either
/// numbers or those strings back.
pub mod infinite_as_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match NumOrStr::deserialize(d)? {
            NumOrStr::Num(v) => Ok(v),
            NumOrStr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => other.parse().map_err(|_| de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}
