//! Shared volume types.
//!
//! Every volume is stored densely in row-major order with axes
//! `(slice, coil, height, width)`. Single-coil data keeps a coil axis of
//! extent 1 so that one code path serves both tracks.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array, Array3, Array4, ArrayBase, ArrayD, ArrayView4, Axis, Data, Dimension, IxDyn, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::C64;

/// Acquisition protocol label carried by each volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Acquisition {
    PD,
    PDFS,
    AXT1,
    AXT1POST,
    AXT2,
    AXFLAIR,
    SYNTHETIC,
}

impl Acquisition {
    pub fn as_str(self) -> &'static str {
        match self {
            Acquisition::PD => "PD",
            Acquisition::PDFS => "PDFS",
            Acquisition::AXT1 => "AXT1",
            Acquisition::AXT1POST => "AXT1POST",
            Acquisition::AXT2 => "AXT2",
            Acquisition::AXFLAIR => "AXFLAIR",
            Acquisition::SYNTHETIC => "SYNTHETIC",
        }
    }
}

impl fmt::Display for Acquisition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Acquisition {
    type Err = CoreError;

    /// Accepts the short labels as well as the scanner protocol names found in
    /// released knee files (`CORPD_FBK`, `CORPDFS_FBK`).
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        Ok(match upper.as_str() {
            "PD" | "CORPD" | "CORPD_FBK" => Acquisition::PD,
            "PDFS" | "CORPDFS" | "CORPDF" | "CORPDFS_FBK" => Acquisition::PDFS,
            "AXT1" => Acquisition::AXT1,
            "AXT1POST" => Acquisition::AXT1POST,
            "AXT2" => Acquisition::AXT2,
            "AXFLAIR" => Acquisition::AXFLAIR,
            "SYNTHETIC" => Acquisition::SYNTHETIC,
            _ => return Err(CoreError::InvalidVolume(format!("unknown acquisition label {s:?}"))),
        })
    }
}

/// Dense complex tensor of arbitrary rank with finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor(ArrayD<C64>);

impl ComplexTensor {
    pub fn new(data: ArrayD<C64>) -> Result<Self> {
        if let Some(idx) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::InvalidVolume(format!("non-finite sample at flat index {idx}")));
        }
        Ok(ComplexTensor(data.as_standard_layout().into_owned()))
    }

    pub fn from_shape_vec(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::ShapeMismatch {
                expected: shape.to_vec(),
                actual: vec![data.len()],
            });
        }
        let arr = ArrayD::from_shape_vec(IxDyn(shape), data).expect("extent product checked");
        Self::new(arr)
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn as_array(&self) -> &ArrayD<C64> {
        &self.0
    }

    pub fn into_array(self) -> ArrayD<C64> {
        self.0
    }
}

/// Output extents of a center crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub out_height: usize,
    pub out_width: usize,
}

impl CropSpec {
    pub fn new(out_height: usize, out_width: usize) -> Self {
        CropSpec { out_height, out_width }
    }

    pub fn square(side: usize) -> Self {
        CropSpec::new(side, side)
    }
}

/// Crops the last two axes to `crop`, keeping the centered window.
///
/// The window starts at `(extent - out) / 2` (floor), so when the excess is odd
/// the window reaches one pixel further toward low indices. This keeps the
/// centered-FFT origin `extent / 2` at `out / 2` after cropping.
pub fn center_crop<A, S, D>(a: &ArrayBase<S, D>, crop: CropSpec) -> Result<Array<A, D>>
where
    A: Clone,
    S: Data<Elem = A>,
    D: Dimension,
{
    let nd = a.ndim();
    assert!(nd >= 2, "center_crop needs at least two axes");
    let (h, w) = (a.shape()[nd - 2], a.shape()[nd - 1]);
    if crop.out_height > h || crop.out_width > w || crop.out_height == 0 || crop.out_width == 0 {
        return Err(CoreError::DimensionTooSmall {
            height: h,
            width: w,
            out_height: crop.out_height,
            out_width: crop.out_width,
        });
    }
    let r0 = (h - crop.out_height) / 2;
    let c0 = (w - crop.out_width) / 2;
    let mut view = a.view();
    view.slice_axis_inplace(Axis(nd - 2), (r0..r0 + crop.out_height).into());
    view.slice_axis_inplace(Axis(nd - 1), (c0..c0 + crop.out_width).into());
    Ok(view.as_standard_layout().into_owned())
}

/// A single invariant violation found by [`validate_volume`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks the k-space volume invariants and reports every violation found.
pub fn validate_volume(data: ArrayView4<'_, C64>) -> Vec<Violation> {
    let mut out = Vec::new();
    let (slices, coils, h, w) = data.dim();
    if slices == 0 {
        out.push(Violation { message: "slice count ≥ 1 (axis 0 is empty)".into() });
    }
    if coils == 0 {
        out.push(Violation { message: "coil count ≥ 1 (axis 1 is empty)".into() });
    }
    if h < 2 {
        out.push(Violation { message: format!("H ≥ 2 (axis 2 has extent {h})") });
    }
    if w < 2 {
        out.push(Violation { message: format!("W ≥ 2 (axis 3 has extent {w})") });
    }
    for (flat, z) in data.iter().enumerate() {
        if !z.re.is_finite() || !z.im.is_finite() {
            let (sl, c, rem) = (flat / (coils * h * w), (flat / (h * w)) % coils, flat % (h * w));
            out.push(Violation {
                message: format!(
                    "non-finite sample at flat index {flat} (slice {sl}, coil {c}, row {}, col {})",
                    rem / w,
                    rem % w
                ),
            });
        }
    }
    out
}

/// Multi-coil (or single-coil, coil extent 1) k-space measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceVolume {
    data: Array4<C64>,
    pub acquisition: Acquisition,
}

impl KSpaceVolume {
    pub fn new(data: Array4<C64>, acquisition: Acquisition) -> Result<Self> {
        let violations = validate_volume(data.view());
        if let Some(v) = violations.first() {
            return Err(CoreError::InvalidVolume(v.message.clone()));
        }
        Ok(Self::from_array(data.as_standard_layout().into_owned(), acquisition))
    }

    pub(crate) fn from_array(data: Array4<C64>, acquisition: Acquisition) -> Self {
        KSpaceVolume { data, acquisition }
    }

    pub fn zeros(dim: (usize, usize, usize, usize), acquisition: Acquisition) -> Self {
        KSpaceVolume { data: Array4::zeros(dim), acquisition }
    }

    pub fn data(&self) -> &Array4<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<C64> {
        self.data
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn slices(&self) -> usize {
        self.data.dim().0
    }

    pub fn coil_count(&self) -> usize {
        self.data.dim().1
    }

    pub fn height(&self) -> usize {
        self.data.dim().2
    }

    pub fn width(&self) -> usize {
        self.data.dim().3
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_volume(self.data.view())
    }
}

/// Complex image-domain volume `(slice, coil, height, width)`.
///
/// Reconstructed images (one per slice) use a coil extent of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    data: Array4<C64>,
}

impl ImageVolume {
    pub fn new(data: Array4<C64>) -> Result<Self> {
        if let Some(idx) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::InvalidVolume(format!("non-finite sample at flat index {idx}")));
        }
        Ok(Self::from_array(data.as_standard_layout().into_owned()))
    }

    pub(crate) fn from_array(data: Array4<C64>) -> Self {
        ImageVolume { data }
    }

    /// Lifts a real volume `(slice, height, width)` to a complex single-coil volume.
    pub fn from_real(v: &RealVolume) -> Self {
        let (sl, h, w) = v.dim();
        let data = v
            .data()
            .mapv(|x| C64::new(x, 0.0))
            .into_shape((sl, 1, h, w))
            .expect("contiguous reshape");
        ImageVolume { data }
    }

    pub fn data(&self) -> &Array4<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<C64> {
        self.data
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    /// Pointwise modulus of a single-coil volume; panics on multi-coil input.
    pub fn magnitude(&self) -> RealVolume {
        let (sl, c, h, w) = self.data.dim();
        assert_eq!(c, 1, "magnitude() expects a single-coil image; use rss_combine for coil stacks");
        let data = self
            .data
            .mapv(|z| z.norm())
            .into_shape((sl, h, w))
            .expect("contiguous reshape");
        RealVolume { data }
    }

    pub fn center_crop(&self, crop: CropSpec) -> Result<ImageVolume> {
        Ok(ImageVolume { data: center_crop(&self.data, crop)? })
    }
}

/// Real-valued volume `(slice, height, width)`: magnitude images, ground
/// truths and externally produced reconstructions.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVolume {
    data: Array3<f64>,
}

impl RealVolume {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if let Some(idx) = data.iter().position(|x| !x.is_finite()) {
            return Err(CoreError::InvalidVolume(format!("non-finite sample at flat index {idx}")));
        }
        Ok(RealVolume { data: data.as_standard_layout().into_owned() })
    }

    pub(crate) fn from_array(data: Array3<f64>) -> Self {
        RealVolume { data }
    }

    pub fn zeros(dim: (usize, usize, usize)) -> Self {
        RealVolume { data: Array3::zeros(dim) }
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    /// Euclidean norm over the whole volume.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest entry (negative infinity for an empty volume).
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn center_crop(&self, crop: CropSpec) -> Result<RealVolume> {
        Ok(RealVolume { data: center_crop(&self.data, crop)? })
    }

    /// Applies the same slice permutation to the volume.
    pub fn permute_slices(&self, order: &[usize]) -> RealVolume {
        let mut out = Array3::zeros(self.data.dim());
        for (dst, &src) in order.iter().enumerate() {
            out.slice_mut(s![dst, .., ..]).assign(&self.data.slice(s![src, .., ..]));
        }
        RealVolume { data: out }
    }

    pub fn scaled(&self, a: f64) -> RealVolume {
        RealVolume { data: self.data.mapv(|x| a * x) }
    }

    /// Elementwise `|self - other|`, shapes must agree.
    pub fn abs_diff(&self, other: &RealVolume) -> Array3<f64> {
        Zip::from(&self.data).and(&other.data).map_collect(|a, b| (a - b).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn crop_knee_geometry() {
        let a = Array2::from_shape_fn((640, 368), |(i, j)| (i * 1000 + j) as f64);
        let c = center_crop(&a, CropSpec::square(320)).unwrap();
        assert_eq!(c.dim(), (320, 320));
        assert_eq!(c[[0, 0]], a[[160, 24]]);
        assert_eq!(c[[319, 319]], a[[479, 343]]);
    }

    #[test]
    fn crop_identity() {
        let a = Array2::from_shape_fn((320, 320), |(i, j)| (i as f64).sin() + j as f64);
        assert_eq!(center_crop(&a, CropSpec::square(320)).unwrap(), a);
    }

    #[test]
    fn crop_enumeration_oracle() {
        let a = Array2::from_shape_fn((5, 5), |(i, j)| (10 * i + j) as f64);
        let c = center_crop(&a, CropSpec::square(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c[[i, j]], (10 * (i + 1) + (j + 1)) as f64);
            }
        }
    }

    #[test]
    fn crop_odd_excess_reaches_low_side() {
        let a = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let c = center_crop(&a, CropSpec::new(4, 1)).unwrap();
        assert_eq!(c.column(0).to_vec(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn crop_too_large_is_error() {
        let a = Array2::<f64>::zeros((4, 4));
        assert!(matches!(
            center_crop(&a, CropSpec::new(5, 4)),
            Err(CoreError::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn crop_is_idempotent_on_volumes() {
        let a = Array3::from_shape_fn((2, 11, 9), |(s, i, j)| (s * 100 + i * 10 + j) as f64);
        let c = CropSpec::new(6, 5);
        let once = center_crop(&a, c).unwrap();
        let twice = center_crop(&once, c).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn validate_well_formed() {
        let v = Array4::<C64>::zeros((2, 15, 640, 368));
        assert!(validate_volume(v.view()).is_empty());
    }

    #[test]
    fn validate_reports_nan_index() {
        let mut v = Array4::<C64>::zeros((1, 2, 4, 4));
        v[[0, 1, 2, 3]] = C64::new(f64::NAN, 0.0);
        let viol = validate_volume(v.view());
        assert_eq!(viol.len(), 1);
        assert!(viol[0].message.contains("flat index 27"), "{}", viol[0]);
    }

    #[test]
    fn validate_reports_short_height() {
        let v = Array4::<C64>::zeros((1, 1, 1, 4));
        let viol = validate_volume(v.view());
        assert_eq!(viol.len(), 1);
        assert!(viol[0].message.starts_with("H ≥ 2"));
    }

    #[test]
    fn acquisition_labels_parse() {
        assert_eq!("CORPD_FBK".parse::<Acquisition>().unwrap(), Acquisition::PD);
        assert_eq!("CORPDFS_FBK".parse::<Acquisition>().unwrap(), Acquisition::PDFS);
        assert_eq!("axflair".parse::<Acquisition>().unwrap(), Acquisition::AXFLAIR);
        assert!("XYZ".parse::<Acquisition>().is_err());
    }

    #[test]
    fn complex_tensor_rejects_inf() {
        let err = ComplexTensor::from_shape_vec(&[2], vec![C64::new(1.0, 0.0), C64::new(0.0, f64::INFINITY)]);
        assert!(err.is_err());
    }
}
