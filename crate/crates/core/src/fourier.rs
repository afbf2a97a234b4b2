//! Centered, unitary 2-D discrete Fourier transforms.
//!
//! `fft2c` places the zero-frequency coefficient at `(H / 2, W / 2)` (integer
//! division) and scales by `1 / sqrt(H * W)`; `ifft2c` is its exact inverse and
//! adjoint. Both are computed as shift → transform → shift, the same centered
//! layout BART uses for its CFL files.

use std::sync::Arc;

use ndarray::{Array2, Array4, ArrayD, ArrayView2, Axis, IxDyn, Zip};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};
use crate::tensor::{Acquisition, ComplexTensor, ImageVolume, KSpaceVolume};
use crate::C64;

/// Planned centered transform for a fixed `height x width` plane.
#[derive(Clone)]
pub struct CenteredFft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for CenteredFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenteredFft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl CenteredFft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        CenteredFft2 {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            scale: 1.0 / ((height * width) as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, plane: ArrayView2<'_, C64>) -> Array2<C64> {
        self.transform(plane, false)
    }

    pub fn inverse(&self, plane: ArrayView2<'_, C64>) -> Array2<C64> {
        self.transform(plane, true)
    }

    fn transform(&self, plane: ArrayView2<'_, C64>, inverse: bool) -> Array2<C64> {
        let (h, w) = (self.height, self.width);
        assert_eq!(plane.dim(), (h, w), "plane shape does not match planned transform");
        let (hc, wc) = (h / 2, w / 2);

        // ifftshift while gathering into row-major scratch
        let mut rows = vec![C64::new(0.0, 0.0); h * w];
        for i in 0..h {
            let src = plane.row((i + hc) % h);
            let dst = &mut rows[i * w..(i + 1) * w];
            for j in 0..w {
                dst[j] = src[(j + wc) % w];
            }
        }
        let (row_fft, col_fft) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row_fft.process(&mut rows);

        let mut cols = vec![C64::new(0.0, 0.0); h * w];
        for i in 0..h {
            for j in 0..w {
                cols[j * h + i] = rows[i * w + j];
            }
        }
        col_fft.process(&mut cols);

        // fftshift on the way out
        let mut out = Array2::zeros((h, w));
        for j in 0..w {
            let oj = (j + wc) % w;
            for i in 0..h {
                out[[(i + hc) % h, oj]] = cols[j * h + i] * self.scale;
            }
        }
        out
    }
}

fn map_planes(data: &Array4<C64>, inverse: bool) -> Array4<C64> {
    let (_, _, h, w) = data.dim();
    let fft = CenteredFft2::new(h, w);
    let mut out = Array4::zeros(data.dim());
    out.outer_iter_mut()
        .into_par_iter()
        .zip(data.outer_iter().into_par_iter())
        .for_each(|(mut dst, src)| {
            for (mut d, s) in dst.outer_iter_mut().zip(src.outer_iter()) {
                d.assign(&fft.transform(s, inverse));
            }
        });
    out
}

/// Centered unitary forward transform of every `(slice, coil)` plane.
///
/// The result is labelled [`Acquisition::SYNTHETIC`]; callers that know the
/// protocol overwrite the public `acquisition` field.
pub fn fft2c(img: &ImageVolume) -> KSpaceVolume {
    KSpaceVolume::from_array(map_planes(img.data(), false), Acquisition::SYNTHETIC)
}

/// Centered unitary inverse transform of every `(slice, coil)` plane.
pub fn ifft2c(k: &KSpaceVolume) -> ImageVolume {
    ImageVolume::from_array(map_planes(k.data(), true))
}

fn shifted_tensor(t: &ComplexTensor, axis_bitmask: u32, inverse: bool) -> Result<ComplexTensor> {
    let rank = t.shape().len();
    if rank < 32 && axis_bitmask >> rank != 0 {
        return Err(CoreError::InvalidBitmask { mask: axis_bitmask, rank });
    }
    let src = t.as_array();
    let mut out = src.clone();
    for axis in 0..rank {
        if axis_bitmask & (1 << axis) == 0 {
            continue;
        }
        let n = src.shape()[axis];
        if n == 0 {
            continue;
        }
        let shift = (if inverse { n - n / 2 } else { n / 2 }) % n;
        if shift == 0 {
            continue;
        }
        out = roll_axis(&out, axis, shift);
    }
    Ok(ComplexTensor::new(out).expect("shifting preserves finiteness"))
}

fn roll_axis(a: &ArrayD<C64>, axis: usize, shift: usize) -> ArrayD<C64> {
    let n = a.shape()[axis];
    let mut out = ArrayD::zeros(IxDyn(a.shape()));
    for i in 0..n {
        let dst = (i + shift) % n;
        Zip::from(out.index_axis_mut(Axis(axis), dst))
            .and(a.index_axis(Axis(axis), i))
            .for_each(|d, &s| *d = s);
    }
    out
}

/// Rotates every axis selected by `axis_bitmask` (bit k = axis k) forward by
/// `floor(extent / 2)`; the same convention as `bart fftshift`.
pub fn fftshift_axes(t: &ComplexTensor, axis_bitmask: u32) -> Result<ComplexTensor> {
    shifted_tensor(t, axis_bitmask, false)
}

/// Inverse of [`fftshift_axes`]; identical to it on even extents.
pub fn ifftshift_axes(t: &ComplexTensor, axis_bitmask: u32) -> Result<ComplexTensor> {
    shifted_tensor(t, axis_bitmask, true)
}

/// Complex inner product `<a, b> = Σ conj(a) b`.
pub fn inner<'a>(a: impl IntoIterator<Item = &'a C64>, b: impl IntoIterator<Item = &'a C64>) -> C64 {
    a.into_iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_plane(h: usize, w: usize, seed: u64) -> Array2<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    /// Direct centered DFT sum, independent of the shift/FFT route.
    fn naive_centered_dft(x: &Array2<C64>, sign: f64) -> Array2<C64> {
        let (h, w) = x.dim();
        let (hc, wc) = ((h / 2) as f64, (w / 2) as f64);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        Array2::from_shape_fn((h, w), |(k, l)| {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..h {
                for n in 0..w {
                    let phase = sign
                        * 2.0
                        * PI
                        * ((k as f64 - hc) * (m as f64 - hc) / h as f64
                            + (l as f64 - wc) * (n as f64 - wc) / w as f64);
                    acc += x[[m, n]] * C64::from_polar(1.0, phase);
                }
            }
            acc * scale
        })
    }

    fn rel_err(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn impulse_maps_to_constant() {
        let mut x = Array2::zeros((8, 8));
        x[[4, 4]] = C64::new(1.0, 0.0);
        let k = CenteredFft2::new(8, 8).forward(x.view());
        for z in k.iter() {
            assert!((z - C64::new(0.125, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_maps_to_center_delta() {
        let x = Array2::from_elem((4, 4), C64::new(1.0, 0.0));
        let k = CenteredFft2::new(4, 4).forward(x.view());
        for ((i, j), z) in k.indexed_iter() {
            let expected = if (i, j) == (2, 2) { 4.0 } else { 0.0 };
            assert!((z - C64::new(expected, 0.0)).norm() < 1e-14, "({i},{j}) = {z}");
        }
    }

    #[test]
    fn constant_spectrum_maps_to_center_impulse() {
        let k = Array2::from_elem((6, 5), C64::new(1.0, 0.0));
        let x = CenteredFft2::new(6, 5).inverse(k.view());
        let peak = (30.0f64).sqrt();
        for ((i, j), z) in x.indexed_iter() {
            let expected = if (i, j) == (3, 2) { peak } else { 0.0 };
            assert!((z - C64::new(expected, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_naive_dft() {
        for &(h, w) in &[(16, 16), (7, 10), (9, 5)] {
            let x = random_plane(h, w, 11);
            let fast = CenteredFft2::new(h, w).forward(x.view());
            let slow = naive_centered_dft(&x, -1.0);
            assert!(rel_err(&fast, &slow) < 1e-10, "{h}x{w}");
        }
    }

    #[test]
    fn inverse_matches_naive_dft() {
        let x = random_plane(16, 16, 12);
        let fast = CenteredFft2::new(16, 16).inverse(x.view());
        let slow = naive_centered_dft(&x, 1.0);
        assert!(rel_err(&fast, &slow) < 1e-10);
    }

    #[test]
    fn round_trip_identity() {
        for &(h, w) in &[(32, 32), (15, 8), (3, 7)] {
            let x = random_plane(h, w, 3);
            let f = CenteredFft2::new(h, w);
            let back = f.inverse(f.forward(x.view()).view());
            assert!(rel_err(&back, &x) < 1e-12);
        }
    }

    #[test]
    fn volume_transforms_are_per_plane() {
        let mut data = Array4::zeros((2, 3, 8, 6));
        for s in 0..2 {
            for c in 0..3 {
                data.slice_mut(ndarray::s![s, c, .., ..]).assign(&random_plane(8, 6, (s * 3 + c) as u64));
            }
        }
        let img = ImageVolume::new(data.clone()).unwrap();
        let k = fft2c(&img);
        let f = CenteredFft2::new(8, 6);
        let direct = f.forward(data.slice(ndarray::s![1, 2, .., ..]));
        assert_eq!(k.data().slice(ndarray::s![1, 2, .., ..]), direct);
        let back = ifft2c(&k);
        let err: f64 = back.data().iter().zip(data.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn shift_one_axis() {
        let t = ComplexTensor::from_shape_vec(&[4], (0..4).map(|i| C64::new(i as f64, 0.0)).collect()).unwrap();
        let s = fftshift_axes(&t, 1).unwrap();
        let got: Vec<f64> = s.as_array().iter().map(|z| z.re).collect();
        assert_eq!(got, vec![2.0, 3.0, 0.0, 1.0]);
        assert_eq!(fftshift_axes(&t, 0).unwrap(), t);
    }

    #[test]
    fn shift_matches_permutation_oracle() {
        let vals: Vec<C64> = (0..15).map(|i| C64::new(i as f64, -(i as f64))).collect();
        let t = ComplexTensor::from_shape_vec(&[3, 5], vals).unwrap();
        let s = fftshift_axes(&t, 3).unwrap();
        let a = t.as_array();
        let b = s.as_array();
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(b[[(i + 1) % 3, (j + 2) % 5]], a[[i, j]]);
            }
        }
        assert_eq!(ifftshift_axes(&s, 3).unwrap(), t);
    }

    #[test]
    fn shift_twice_is_identity_on_even_extents() {
        let vals: Vec<C64> = (0..24).map(|i| C64::new(i as f64, 0.0)).collect();
        let t = ComplexTensor::from_shape_vec(&[4, 6], vals).unwrap();
        let twice = fftshift_axes(&fftshift_axes(&t, 3).unwrap(), 3).unwrap();
        assert_eq!(twice, t);
    }

    #[test]
    fn shift_rejects_out_of_rank_bits() {
        let t = ComplexTensor::from_shape_vec(&[2, 2], vec![C64::new(0.0, 0.0); 4]).unwrap();
        assert!(matches!(fftshift_axes(&t, 4), Err(CoreError::InvalidBitmask { .. })));
    }

    #[test]
    fn inner_product_conjugates_first_argument() {
        let a = Array1::from(vec![C64::new(0.0, 1.0)]);
        let b = Array1::from(vec![C64::new(0.0, 1.0)]);
        assert_eq!(inner(a.iter(), b.iter()), C64::new(1.0, 0.0));
    }
}
