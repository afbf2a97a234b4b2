//! HDF5 volume files.
//!
//! Layout (all names exact):
//!
//! | item | shape | type |
//! |------|-------|------|
//! | `kspace` | `(slices, coils, H, W, 2)` or `(slices, H, W, 2)` for one coil | f32 |
//! | `reconstruction_rss`, `reconstruction_esc` | `(slices, h, w)` | f32 |
//! | `mask` | `(W,)` | u8 |
//!
//! Complex samples are stored as a trailing axis of two f32 values (real,
//! imaginary); the `kspace` dataset carries a `complex_layout` attribute
//! saying so. File attributes: `acquisition`, `patient_id`, `norm`, `max`,
//! `acceleration`, `num_low_frequency` and optionally `ismrmrd_header`
//! (kept as an opaque string). The mask dataset also records `mask_kind`,
//! `mask_seed` and `center_fraction`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use csmri_core::masking::{MaskKind, SamplingMask};
use csmri_core::{Acquisition, KSpaceVolume, RealVolume, C64};
use hdf5::types::VarLenUnicode;
use hdf5::{Dataset, File, Location};
use ndarray::{Array3, Array4, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};

/// Value of the `complex_layout` attribute on `kspace`.
pub const COMPLEX_LAYOUT: &str = "float32 pairs (real, imag) in trailing axis";

/// Dataset name used for externally produced reconstructions.
pub const RECONSTRUCTION_DATASET: &str = "reconstruction";

/// Relative tolerance for the `norm` and `max` attributes.
pub const TARGET_STAT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Track {
    #[serde(rename = "singlecoil")]
    SingleCoil,
    #[serde(rename = "multicoil")]
    MultiCoil,
}

impl Track {
    pub fn as_str(self) -> &'static str {
        match self {
            Track::SingleCoil => "singlecoil",
            Track::MultiCoil => "multicoil",
        }
    }

    /// Dataset holding the ground truth of this track.
    pub fn target_name(self) -> &'static str {
        match self {
            Track::SingleCoil => "reconstruction_esc",
            Track::MultiCoil => "reconstruction_rss",
        }
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Track {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "singlecoil" => Ok(Track::SingleCoil),
            "multicoil" => Ok(Track::MultiCoil),
            other => Err(format!("unknown track {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeAttributes {
    pub acquisition: Acquisition,
    pub patient_id: String,
    /// Euclidean norm of the target volume (ground-truth files only).
    pub norm: Option<f64>,
    /// Largest entry of the target volume (ground-truth files only).
    pub max: Option<f64>,
    pub acceleration: Option<u32>,
    pub num_low_frequency: Option<usize>,
    pub ismrmrd_header: Option<String>,
}

impl VolumeAttributes {
    pub fn new(acquisition: Acquisition, patient_id: impl Into<String>) -> Self {
        VolumeAttributes {
            acquisition,
            patient_id: patient_id.into(),
            norm: None,
            max: None,
            acceleration: None,
            num_low_frequency: None,
            ismrmrd_header: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeRecord {
    pub kspace: KSpaceVolume,
    pub reconstruction_rss: Option<RealVolume>,
    pub reconstruction_esc: Option<RealVolume>,
    pub mask: Option<SamplingMask>,
    pub attributes: VolumeAttributes,
}

impl VolumeRecord {
    /// Single-coil files have one coil; everything else is multi-coil.
    pub fn track(&self) -> Track {
        if self.kspace.coil_count() == 1 {
            Track::SingleCoil
        } else {
            Track::MultiCoil
        }
    }

    pub fn target(&self) -> Option<&RealVolume> {
        match self.track() {
            Track::SingleCoil => self.reconstruction_esc.as_ref(),
            Track::MultiCoil => self.reconstruction_rss.as_ref(),
        }
    }

    /// Fills `norm` and `max` from the track's target.
    pub fn set_target_stats(&mut self) {
        if let Some(t) = self.target() {
            let (n, m) = (t.norm(), t.max());
            self.attributes.norm = Some(n);
            self.attributes.max = Some(m);
        }
    }

    /// Test-style records (mask present) carry the mask, `acceleration` and
    /// `num_low_frequency` and no ground truth; ground-truth records carry the
    /// track's target with matching `norm` and `max`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let width = self.kspace.width();
        if let Some(mask) = &self.mask {
            if self.reconstruction_rss.is_some() || self.reconstruction_esc.is_some() {
                return Err("masked (test) record must not carry ground truth".into());
            }
            if self.attributes.norm.is_some() || self.attributes.max.is_some() {
                return Err("masked (test) record must not carry norm/max".into());
            }
            if mask.width() != width {
                return Err(format!("mask length {} differs from k-space width {width}", mask.width()));
            }
            match self.attributes.acceleration {
                Some(a) if a as usize == mask.acceleration_nominal => {}
                other => return Err(format!("acceleration attribute {other:?} does not match mask")),
            }
            match self.attributes.num_low_frequency {
                Some(n) if n == mask.num_low_frequency => {}
                other => return Err(format!("num_low_frequency attribute {other:?} does not match mask")),
            }
            return Ok(());
        }
        let name = self.track().target_name();
        let target = self.target().ok_or_else(|| format!("ground-truth record lacks {name}"))?;
        let (norm, max) = match (self.attributes.norm, self.attributes.max) {
            (Some(n), Some(m)) => (n, m),
            _ => return Err("ground-truth record lacks norm/max".into()),
        };
        let close = |a: f64, b: f64| (a - b).abs() <= TARGET_STAT_TOLERANCE * b.abs().max(f64::MIN_POSITIVE);
        if !close(norm, target.norm()) {
            return Err(format!("norm attribute {norm} differs from ||{name}|| = {}", target.norm()));
        }
        if !close(max, target.max()) {
            return Err(format!("max attribute {max} differs from max({name}) = {}", target.max()));
        }
        for gt in [&self.reconstruction_rss, &self.reconstruction_esc].into_iter().flatten() {
            if gt.dim().0 != self.kspace.slices() {
                return Err(format!("ground truth has {} slices, k-space has {}", gt.dim().0, self.kspace.slices()));
            }
        }
        Ok(())
    }
}

/// Rounds every sample to the nearest f32, as stored on disk.
pub fn quantize(v: &RealVolume) -> RealVolume {
    RealVolume::new(v.data().mapv(|x| x as f32 as f64)).expect("finite input stays finite")
}

fn h5<T>(path: &Path, r: hdf5::Result<T>) -> Result<T> {
    r.map_err(|source| IoError::Container { path: path.to_path_buf(), source })
}

fn open_file(path: &Path) -> Result<File> {
    // failures are reported through the returned error, not the library's stderr trace
    hdf5::silence_errors(true);
    h5(path, File::open(path))
}

fn write_real(file: &File, path: &Path, name: &str, v: &RealVolume) -> Result<()> {
    let data = v.data().mapv(|x| x as f32);
    let ds = h5(path, file.new_dataset::<f32>().shape(data.shape()).create(name))?;
    h5(path, ds.write(&data))
}

fn write_str_attr(loc: &Location, path: &Path, name: &str, value: &str) -> Result<()> {
    let v = VarLenUnicode::from_str(value).map_err(|e| IoError::AttributeType {
        path: path.to_path_buf(),
        name: name.into(),
        detail: e.to_string(),
    })?;
    let attr = h5(path, loc.new_attr::<VarLenUnicode>().create(name))?;
    h5(path, attr.write_scalar(&v))
}

fn write_attr<T: hdf5::H5Type>(loc: &Location, path: &Path, name: &str, value: T) -> Result<()> {
    let attr = h5(path, loc.new_attr::<T>().create(name))?;
    h5(path, attr.write_scalar(&value))
}

/// Validates the record and writes it.
pub fn write_volume(record: &VolumeRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    record
        .validate()
        .map_err(|reason| IoError::InvalidRecord { path: path.to_path_buf(), reason })?;
    let file = h5(path, File::create(path))?;

    let k = record.kspace.data();
    let (sl, nc, h, w) = k.dim();
    let mut shape = vec![sl];
    if nc != 1 {
        shape.push(nc);
    }
    shape.extend([h, w, 2]);
    let mut flat = Vec::with_capacity(k.len() * 2);
    for z in k.iter() {
        flat.push(z.re as f32);
        flat.push(z.im as f32);
    }
    let data = ArrayD::from_shape_vec(IxDyn(&shape), flat).expect("shape matches sample count");
    let ds = h5(path, file.new_dataset::<f32>().shape(data.shape()).create("kspace"))?;
    h5(path, ds.write(&data))?;
    write_str_attr(&ds, path, "complex_layout", COMPLEX_LAYOUT)?;

    if let Some(v) = &record.reconstruction_rss {
        write_real(&file, path, "reconstruction_rss", v)?;
    }
    if let Some(v) = &record.reconstruction_esc {
        write_real(&file, path, "reconstruction_esc", v)?;
    }
    if let Some(mask) = &record.mask {
        let keep: Vec<u8> = mask.keep.iter().map(|&b| b as u8).collect();
        let ds = h5(path, file.new_dataset::<u8>().shape(keep.len()).create("mask"))?;
        h5(path, ds.write(&keep))?;
        write_str_attr(&ds, path, "mask_kind", mask.kind.as_str())?;
        write_attr(&ds, path, "mask_seed", mask.seed)?;
        write_attr(&ds, path, "center_fraction", mask.center_fraction)?;
    }

    let a = &record.attributes;
    write_str_attr(&file, path, "acquisition", a.acquisition.as_str())?;
    write_str_attr(&file, path, "patient_id", &a.patient_id)?;
    if let Some(n) = a.norm {
        write_attr(&file, path, "norm", n)?;
    }
    if let Some(m) = a.max {
        write_attr(&file, path, "max", m)?;
    }
    if let Some(r) = a.acceleration {
        write_attr(&file, path, "acceleration", r as i64)?;
    }
    if let Some(n) = a.num_low_frequency {
        write_attr(&file, path, "num_low_frequency", n as i64)?;
    }
    if let Some(hdr) = &a.ismrmrd_header {
        write_str_attr(&file, path, "ismrmrd_header", hdr)?;
    }
    h5(path, file.flush())
}

fn has_attr(loc: &Location, name: &str) -> bool {
    loc.attr_names().map(|n| n.iter().any(|a| a == name)).unwrap_or(false)
}

fn read_str_attr(loc: &Location, path: &Path, name: &str) -> Result<Option<String>> {
    if !has_attr(loc, name) {
        return Ok(None);
    }
    let attr = h5(path, loc.attr(name))?;
    if let Ok(v) = attr.read_scalar::<VarLenUnicode>() {
        return Ok(Some(v.as_str().to_string()));
    }
    attr.read_scalar::<hdf5::types::VarLenAscii>()
        .map(|v| Some(v.as_str().to_string()))
        .map_err(|e| IoError::AttributeType {
            path: path.to_path_buf(),
            name: name.into(),
            detail: format!("expected a string: {e}"),
        })
}

fn read_num_attr<T: hdf5::H5Type>(loc: &Location, path: &Path, name: &str) -> Result<Option<T>> {
    if !has_attr(loc, name) {
        return Ok(None);
    }
    let attr = h5(path, loc.attr(name))?;
    attr.read_scalar::<T>().map(Some).map_err(|e| IoError::AttributeType {
        path: path.to_path_buf(),
        name: name.into(),
        detail: format!("expected a numeric scalar: {e}"),
    })
}

fn require<T>(v: Option<T>, path: &Path, name: &str) -> Result<T> {
    v.ok_or_else(|| IoError::MissingAttribute { path: path.to_path_buf(), name: name.into() })
}

fn open_dataset(file: &File, path: &Path, name: &str) -> Result<Option<Dataset>> {
    if !file.link_exists(name) {
        return Ok(None);
    }
    h5(path, file.dataset(name)).map(Some)
}

fn read_real(ds: &Dataset, path: &Path, name: &str) -> Result<RealVolume> {
    let shape = ds.shape();
    if shape.len() != 3 {
        return Err(IoError::ShapeMismatch {
            path: path.to_path_buf(),
            name: name.into(),
            expected: "(slices, height, width)".into(),
            found: shape,
        });
    }
    let data: Array3<f32> = h5(path, ds.read::<f32, ndarray::Ix3>())?;
    RealVolume::new(data.mapv(f64::from)).map_err(IoError::from)
}

/// Reads a volume file, inferring the track from the rank of `kspace`.
pub fn read_volume(path: impl AsRef<Path>) -> Result<VolumeRecord> {
    read_volume_inner(path.as_ref(), None)
}

/// Reads a volume file and fails with a shape mismatch if its `kspace`
/// layout does not belong to `track`.
pub fn read_volume_as(path: impl AsRef<Path>, track: Track) -> Result<VolumeRecord> {
    read_volume_inner(path.as_ref(), Some(track))
}

fn read_volume_inner(path: &Path, track: Option<Track>) -> Result<VolumeRecord> {
    let file = open_file(path)?;
    let missing = |name: &str| IoError::MissingDataset { path: path.to_path_buf(), name: name.into() };

    let ds = open_dataset(&file, path, "kspace")?.ok_or_else(|| missing("kspace"))?;
    let shape = ds.shape();
    let rank_track = match shape.len() {
        4 => Some(Track::SingleCoil),
        5 => Some(Track::MultiCoil),
        _ => None,
    };
    let bad_shape = |expected: &str| IoError::ShapeMismatch {
        path: path.to_path_buf(),
        name: "kspace".into(),
        expected: expected.into(),
        found: shape.clone(),
    };
    let file_track = match rank_track {
        Some(t) if *shape.last().expect("non-empty") == 2 => t,
        _ => return Err(bad_shape("(slices, [coils,] height, width, 2)")),
    };
    if let Some(t) = track {
        if t != file_track {
            return Err(bad_shape(match t {
                Track::SingleCoil => "(slices, height, width, 2) for a single-coil file",
                Track::MultiCoil => "(slices, coils, height, width, 2) for a multi-coil file",
            }));
        }
    }
    let raw: ArrayD<f32> = h5(path, ds.read_dyn::<f32>())?;
    let (sl, nc, h, w) = match file_track {
        Track::SingleCoil => (shape[0], 1, shape[1], shape[2]),
        Track::MultiCoil => (shape[0], shape[1], shape[2], shape[3]),
    };
    let flat = raw.as_standard_layout();
    let samples: Vec<C64> = flat
        .as_slice()
        .expect("standard layout")
        .chunks_exact(2)
        .map(|p| C64::new(f64::from(p[0]), f64::from(p[1])))
        .collect();
    let kdata = Array4::from_shape_vec((sl, nc, h, w), samples).expect("sample count matches shape");

    let acquisition_label = require(read_str_attr(&file, path, "acquisition")?, path, "acquisition")?;
    let acquisition = Acquisition::from_str(&acquisition_label).map_err(|e| IoError::AttributeType {
        path: path.to_path_buf(),
        name: "acquisition".into(),
        detail: e.to_string(),
    })?;
    let kspace = KSpaceVolume::new(kdata, acquisition)?;

    let reconstruction_rss = match open_dataset(&file, path, "reconstruction_rss")? {
        Some(ds) => Some(read_real(&ds, path, "reconstruction_rss")?),
        None => None,
    };
    let reconstruction_esc = match open_dataset(&file, path, "reconstruction_esc")? {
        Some(ds) => Some(read_real(&ds, path, "reconstruction_esc")?),
        None => None,
    };

    let attributes = VolumeAttributes {
        acquisition,
        patient_id: require(read_str_attr(&file, path, "patient_id")?, path, "patient_id")?,
        norm: read_num_attr::<f64>(&file, path, "norm")?,
        max: read_num_attr::<f64>(&file, path, "max")?,
        acceleration: read_num_attr::<i64>(&file, path, "acceleration")?.map(|v| v as u32),
        num_low_frequency: read_num_attr::<i64>(&file, path, "num_low_frequency")?.map(|v| v as usize),
        ismrmrd_header: read_str_attr(&file, path, "ismrmrd_header")?,
    };

    let mask = match open_dataset(&file, path, "mask")? {
        Some(ds) => {
            let keep: Vec<u8> = h5(path, ds.read_raw::<u8>())?;
            let kind_label = read_str_attr(&ds, path, "mask_kind")?.unwrap_or_else(|| "random".into());
            let kind = MaskKind::from_str(&kind_label)?;
            let acceleration = require(attributes.acceleration, path, "acceleration")? as usize;
            let num_low = require(attributes.num_low_frequency, path, "num_low_frequency")?;
            let center_fraction = read_num_attr::<f64>(&ds, path, "center_fraction")?
                .unwrap_or(num_low as f64 / keep.len().max(1) as f64);
            Some(SamplingMask {
                keep: keep.iter().map(|&b| b != 0).collect(),
                acceleration_nominal: acceleration,
                center_fraction,
                kind,
                seed: read_num_attr::<u64>(&ds, path, "mask_seed")?.unwrap_or(0),
                num_low_frequency: num_low,
            })
        }
        None => None,
    };

    let record = VolumeRecord { kspace, reconstruction_rss, reconstruction_esc, mask, attributes };
    record
        .validate()
        .map_err(|reason| IoError::InvalidRecord { path: path.to_path_buf(), reason })?;
    Ok(record)
}

/// Writes a magnitude reconstruction as the f32 dataset `reconstruction`.
pub fn write_reconstruction(path: impl AsRef<Path>, v: &RealVolume) -> Result<()> {
    let path = path.as_ref();
    let file = h5(path, File::create(path))?;
    write_real(&file, path, RECONSTRUCTION_DATASET, v)?;
    h5(path, file.flush())
}

/// Reads the `reconstruction` dataset of an externally produced file.
pub fn read_reconstruction(path: impl AsRef<Path>) -> Result<RealVolume> {
    let path = path.as_ref();
    let file = open_file(path)?;
    let ds = open_dataset(&file, path, RECONSTRUCTION_DATASET)?.ok_or_else(|| IoError::MissingDataset {
        path: path.to_path_buf(),
        name: RECONSTRUCTION_DATASET.into(),
    })?;
    read_real(&ds, path, RECONSTRUCTION_DATASET)
}

/// Reads only the ground truth of `track` from a volume file.
pub fn read_target(path: impl AsRef<Path>, track: Track) -> Result<RealVolume> {
    let path = path.as_ref();
    let file = open_file(path)?;
    let name = track.target_name();
    let ds = open_dataset(&file, path, name)?
        .ok_or_else(|| IoError::MissingDataset { path: path.to_path_buf(), name: name.into() })?;
    read_real(&ds, path, name)
}

/// Slice count and in-plane extent of a volume's `kspace` without loading it.
pub fn kspace_shape(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let file = open_file(path)?;
    let ds = open_dataset(&file, path, "kspace")?
        .ok_or_else(|| IoError::MissingDataset { path: path.to_path_buf(), name: "kspace".into() })?;
    Ok(ds.shape())
}

#[cfg(test)]
mod tests {
    use super::*;
    use csmri_core::masking::{make_random_mask, MaskPolicy};
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f32_c(rng: &mut ChaCha8Rng) -> C64 {
        C64::new(rng.gen::<f32>() as f64 - 0.5, rng.gen::<f32>() as f64 - 0.5)
    }

    fn record(coils: usize, seed: u64) -> VolumeRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = Array4::from_shape_fn((2, coils, 8, 12), |_| f32_c(&mut rng));
        let gt = RealVolume::new(Array3::from_shape_fn((2, 6, 6), |_| rng.gen::<f32>() as f64)).unwrap();
        let mut r = VolumeRecord {
            kspace: KSpaceVolume::new(k, Acquisition::PDFS).unwrap(),
            reconstruction_rss: Some(gt.clone()),
            reconstruction_esc: if coils == 1 { Some(gt.scaled(0.5)) } else { None },
            mask: None,
            attributes: VolumeAttributes::new(Acquisition::PDFS, "patient-7"),
        };
        r.set_target_stats();
        r
    }

    #[test]
    fn track_labels() {
        assert_eq!("multicoil".parse::<Track>().unwrap(), Track::MultiCoil);
        assert_eq!("single_coil".parse::<Track>().unwrap(), Track::SingleCoil);
        assert_eq!(Track::SingleCoil.target_name(), "reconstruction_esc");
    }

    #[test]
    fn validation_rules() {
        let r = record(3, 1);
        assert!(r.validate().is_ok());

        let mut bad = r.clone();
        bad.attributes.norm = Some(bad.attributes.norm.unwrap() * 1.01);
        assert!(bad.validate().unwrap_err().contains("norm"));

        let mut test = r.clone();
        test.mask = Some(make_random_mask(12, MaskPolicy::new(4, 0.25, MaskKind::Random), 0).unwrap());
        assert!(test.validate().unwrap_err().contains("ground truth"));
        test.reconstruction_rss = None;
        test.attributes.norm = None;
        test.attributes.max = None;
        assert!(test.validate().is_err());
        test.attributes.acceleration = Some(4);
        test.attributes.num_low_frequency = Some(3);
        assert!(test.validate().is_ok());
    }
}
