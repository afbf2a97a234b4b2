//! Ellipse phantoms, smooth coil sensitivities and noisy acquisition.
//!
//! Coordinates are normalized to `[-1, 1]` on both axes with `x` running
//! along the width and `y` pointing up (row 0 is `y ≈ 1`).

use std::f64::consts::PI;

use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coils::{forward_multicoil, SensitivitySet};
use crate::error::{CoreError, Result};
use crate::tensor::{Acquisition, ImageVolume, KSpaceVolume, RealVolume};
use crate::C64;

/// Gaussian width of each coil profile in normalized units.
pub const COIL_PROFILE_WIDTH: f64 = 1.0;
/// Distance of coil centres from the image centre.
pub const COIL_RADIUS: f64 = 1.2;
/// Phase ramp slope across the field, radians per normalized unit.
pub const COIL_PHASE_SLOPE: f64 = PI / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    /// Counter-clockwise rotation in radians.
    pub rotation: f64,
    /// Added to every pixel inside the ellipse.
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center_x, y - self.center_y);
        let (sin, cos) = self.rotation.sin_cos();
        let u = (dx * cos + dy * sin) / self.semi_x;
        let v = (-dx * sin + dy * cos) / self.semi_y;
        u * u + v * v <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub slices: usize,
    pub ellipses: Vec<Ellipse>,
    /// Maximum random displacement of every ellipse but the first, per slice.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn modified_shepp_logan() -> Vec<Ellipse> {
    let deg = PI / 180.0;
    [
        (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
        (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
        (0.22, 0.0, 0.11, 0.31, -18.0 * deg, -0.2),
        (-0.22, 0.0, 0.16, 0.41, 18.0 * deg, -0.2),
        (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
        (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
        (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
        (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
        (0.0, -0.606, 0.023, 0.023, 0.0, 0.1),
        (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
    ]
    .into_iter()
    .map(|(center_x, center_y, semi_x, semi_y, rotation, intensity)| Ellipse {
        center_x,
        center_y,
        semi_x,
        semi_y,
        rotation,
        intensity,
    })
    .collect()
}

impl PhantomSpec {
    /// Modified Shepp-Logan head geometry without jitter.
    pub fn shepp_logan(height: usize, width: usize, slices: usize) -> Self {
        PhantomSpec { height, width, slices, ellipses: modified_shepp_logan(), jitter: 0.0, seed: 0 }
    }

    pub fn with_jitter(self, jitter: f64, seed: u64) -> Self {
        PhantomSpec { jitter, seed, ..self }
    }
}

/// Normalized coordinate of pixel centre `(i, j)`.
pub fn pixel_coords(i: usize, j: usize, height: usize, width: usize) -> (f64, f64) {
    let x = 2.0 * (j as f64 + 0.5) / width as f64 - 1.0;
    let y = 1.0 - 2.0 * (i as f64 + 0.5) / height as f64;
    (x, y)
}

/// Ellipses for one slice: semi-axes shrink towards the ends of the stack and
/// inner ellipses are displaced by up to `jitter`.
fn slice_ellipses(spec: &PhantomSpec, slice: usize, rng: &mut ChaCha8Rng) -> Vec<Ellipse> {
    let z = if spec.slices > 1 { 2.0 * slice as f64 / (spec.slices - 1) as f64 - 1.0 } else { 0.0 };
    let shrink = (1.0 - 0.25 * z * z).sqrt();
    spec.ellipses
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let (dx, dy) = if k > 0 && spec.jitter > 0.0 {
                (rng.gen_range(-spec.jitter..=spec.jitter), rng.gen_range(-spec.jitter..=spec.jitter))
            } else {
                (0.0, 0.0)
            };
            Ellipse {
                center_x: e.center_x * shrink + dx,
                center_y: e.center_y * shrink + dy,
                semi_x: e.semi_x * shrink,
                semi_y: e.semi_y * shrink,
                ..*e
            }
        })
        .collect()
}

/// Sums the intensities of all ellipses containing each pixel centre, then
/// clamps at zero.
pub fn make_phantom(spec: &PhantomSpec) -> RealVolume {
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Array3::zeros((spec.slices, h, w));
    for (s, mut plane) in data.axis_iter_mut(Axis(0)).enumerate() {
        let ellipses = slice_ellipses(spec, s, &mut rng);
        for i in 0..h {
            for j in 0..w {
                let (x, y) = pixel_coords(i, j, h, w);
                let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
                plane[[i, j]] = v.max(0.0);
            }
        }
    }
    RealVolume::from_array(data)
}

/// `n_coils` Gaussian profiles centred at equally spaced angles around the
/// field, each with a linear phase ramp, normalized to `Σ|S_i|² = 1`.
///
/// The seed rotates the coil ring and sets a constant phase per coil.
pub fn make_sensitivities(height: usize, width: usize, n_coils: usize, seed: u64) -> SensitivitySet {
    assert!(n_coils >= 1, "at least one coil");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ring_offset = rng.gen_range(0.0..2.0 * PI);
    let coils: Vec<(f64, f64, f64, f64)> = (0..n_coils)
        .map(|c| {
            let angle = ring_offset + 2.0 * PI * c as f64 / n_coils as f64;
            let phase0 = rng.gen_range(-PI..PI);
            (COIL_RADIUS * angle.cos(), COIL_RADIUS * angle.sin(), angle, phase0)
        })
        .collect();
    let two_w2 = 2.0 * COIL_PROFILE_WIDTH * COIL_PROFILE_WIDTH;
    let maps = Array3::from_shape_fn((n_coils, height, width), |(c, i, j)| {
        let (x, y) = pixel_coords(i, j, height, width);
        let (cx, cy, angle, phase0) = coils[c];
        let d2 = (x - cx).powi(2) + (y - cy).powi(2);
        let mag = (-d2 / two_w2).exp();
        let phase = phase0 + COIL_PHASE_SLOPE * (x * angle.cos() + y * angle.sin());
        C64::from_polar(mag, phase)
    });
    SensitivitySet::normalize(maps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub coils: usize,
    /// Standard deviation of each real and imaginary noise component.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub sensitivity_seed: u64,
}

/// `y_i = F(S_i m) + n_i` with i.i.d. circular complex Gaussian noise.
///
/// Noise is drawn in `(slice, coil, row, column)` order, real part first.
pub fn acquire(m: &ImageVolume, s: &SensitivitySet, a: &AcquisitionSpec, seed: u64) -> Result<KSpaceVolume> {
    if a.coils == 0 || a.coils != s.coil_count() {
        return Err(CoreError::ShapeMismatch { expected: vec![s.coil_count()], actual: vec![a.coils] });
    }
    if !(a.noise_sigma >= 0.0) || !a.noise_sigma.is_finite() {
        return Err(CoreError::InvalidConfig(format!("noise_sigma {} must be finite and ≥ 0", a.noise_sigma)));
    }
    let clean = forward_multicoil(m, s)?;
    if a.noise_sigma == 0.0 {
        return Ok(clean);
    }
    let normal = Normal::new(0.0, a.noise_sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = clean.into_data();
    for z in data.iter_mut() {
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        *z += C64::new(re, im);
    }
    Ok(KSpaceVolume::from_array(data, Acquisition::SYNTHETIC))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::rss_reconstruction;
    use crate::metrics::nmse;
    use crate::tensor::CropSpec;

    #[test]
    fn empty_spec_is_zero() {
        let spec = PhantomSpec { height: 8, width: 6, slices: 2, ellipses: vec![], jitter: 0.0, seed: 0 };
        let m = make_phantom(&spec);
        assert_eq!(m.dim(), (2, 8, 6));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_ellipse_matches_quadratic_form() {
        let e = Ellipse { center_x: 0.1, center_y: -0.2, semi_x: 0.7, semi_y: 0.4, rotation: 0.3, intensity: 1.0 };
        let spec = PhantomSpec { height: 40, width: 30, slices: 1, ellipses: vec![e], jitter: 0.0, seed: 0 };
        let m = make_phantom(&spec);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        for i in 0..40 {
            for j in 0..30 {
                let x = (2 * j + 1) as f64 / 30.0 - 1.0;
                let y = 1.0 - (2 * i + 1) as f64 / 40.0;
                let (dx, dy) = (x - 0.1, y + 0.2);
                let q = ((dx * c + dy * s) / 0.7).powi(2) + ((-dx * s + dy * c) / 0.4).powi(2);
                let expected = if q <= 1.0 { 1.0 } else { 0.0 };
                assert_eq!(m.data()[[0, i, j]], expected, "pixel ({i}, {j})");
            }
        }
    }

    #[test]
    fn phantom_deterministic_nonnegative_and_varies_across_slices() {
        let spec = PhantomSpec::shepp_logan(48, 40, 3).with_jitter(0.02, 9);
        let a = make_phantom(&spec);
        assert_eq!(a, make_phantom(&spec));
        assert!(a.is_nonnegative());
        assert!(a.max() > 0.0);
        let d = a.data();
        assert_ne!(d.index_axis(Axis(0), 0), d.index_axis(Axis(0), 1));
    }

    #[test]
    fn single_coil_sensitivity_is_unit_magnitude() {
        let s = make_sensitivities(16, 12, 1, 3);
        assert!(s.maps.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sensitivities_normalized_and_smooth() {
        for n_c in [2, 4, 8, 15] {
            let s = make_sensitivities(64, 64, n_c, n_c as u64);
            for &e in s.energy().iter() {
                assert!((e - 1.0).abs() < 1e-6);
            }
            let mut worst = 0.0f64;
            for coil in s.maps.outer_iter() {
                for i in 0..63 {
                    for j in 0..63 {
                        let gi = coil[[i + 1, j]] - coil[[i, j]];
                        let gj = coil[[i, j + 1]] - coil[[i, j]];
                        worst = worst.max((gi.norm_sqr() + gj.norm_sqr()).sqrt());
                    }
                }
            }
            assert!(worst <= 0.1, "{n_c} coils: gradient {worst}");
        }
    }

    #[test]
    fn noiseless_acquisition_is_forward_model() {
        let m = ImageVolume::from_real(&make_phantom(&PhantomSpec::shepp_logan(32, 24, 2)));
        let s = make_sensitivities(32, 24, 4, 1);
        let a = AcquisitionSpec { coils: 4, noise_sigma: 0.0, sensitivity_seed: 1 };
        let y = acquire(&m, &s, &a, 5).unwrap();
        assert_eq!(y, forward_multicoil(&m, &s).unwrap());
        let rec = rss_reconstruction(&y, CropSpec::new(32, 24)).unwrap();
        assert!(nmse(&rec, &m.magnitude()).unwrap() <= 1e-8);
        let wrong = AcquisitionSpec { coils: 3, ..a };
        assert!(acquire(&m, &s, &wrong, 5).is_err());
    }

    fn noise_of(sigma: f64, seed: u64) -> Vec<C64> {
        let m = ImageVolume::from_real(&make_phantom(&PhantomSpec::shepp_logan(160, 160, 1)));
        let s = make_sensitivities(160, 160, 2, 0);
        let clean = forward_multicoil(&m, &s).unwrap();
        let a = AcquisitionSpec { coils: 2, noise_sigma: sigma, sensitivity_seed: 0 };
        let noisy = acquire(&m, &s, &a, seed).unwrap();
        noisy.data().iter().zip(clean.data().iter()).map(|(a, b)| a - b).collect()
    }

    #[test]
    fn noise_standard_deviation() {
        let sigma = 0.05;
        let n = noise_of(sigma, 17);
        assert!(n.len() * 2 >= 100_000);
        let parts: Vec<f64> = n.iter().flat_map(|z| [z.re, z.im]).collect();
        let mean = parts.iter().sum::<f64>() / parts.len() as f64;
        let var = parts.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / parts.len() as f64;
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.02, "std {}", var.sqrt());
        assert_eq!(n, noise_of(sigma, 17));
    }

    #[test]
    fn noise_norm_scales_with_sigma() {
        let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let trials = 8;
        let (mut a, mut b) = (0.0, 0.0);
        for t in 0..trials {
            a += norm(&noise_of(0.01, 100 + t));
            b += norm(&noise_of(0.02, 200 + t));
        }
        let ratio = b / a;
        assert!((ratio / 2.0 - 1.0).abs() < 0.03, "ratio {ratio}");
    }
}
