//! Phantom corpora on disk.
//!
//! A corpus directory holds one sub-directory per track (`singlecoil/`,
//! `multicoil/`) with one `<id>.h5` container per volume. Multi-coil volumes
//! are written to both tracks: the coil data with its RSS target, and an
//! emulated single-coil version with its ESC target. Volumes acquired with a
//! single coil appear only in the single-coil track.

use std::fs;
use std::path::{Path, PathBuf};

use csmri_core::coils::{esc_kspace, fit_esc, rss_combine, rss_reconstruction};
use csmri_core::fourier::ifft2c;
use csmri_core::masking::{apply_mask, make_mask, MaskPolicy};
use csmri_core::phantom::{acquire, make_phantom, make_sensitivities, AcquisitionSpec, PhantomSpec};
use csmri_core::{Acquisition, CropSpec, ImageVolume};
use csmri_io::container::quantize;
use csmri_io::{read_volume_as, write_volume, Track, VolumeAttributes, VolumeRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};
use crate::seeds::{derive_seed, mask_seed};

/// One explicitly listed phantom volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub id: String,
    #[serde(default = "synthetic")]
    pub acquisition: Acquisition,
    pub phantom: PhantomSpec,
    pub scan: AcquisitionSpec,
    #[serde(default)]
    pub noise_seed: u64,
}

fn synthetic() -> Acquisition {
    Acquisition::SYNTHETIC
}

/// Shorthand for `count` jittered Shepp-Logan volumes sharing one geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedVolumes {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub slices: usize,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "one")]
    pub coils: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
    /// Labels assigned round-robin; defaults to `SYNTHETIC`.
    #[serde(default)]
    pub acquisitions: Vec<Acquisition>,
}

fn one() -> usize {
    1
}

fn default_prefix() -> String {
    "phantom".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    #[serde(default)]
    pub seed: u64,
    /// Target crop `[height, width]`; defaults to the full image.
    #[serde(default)]
    pub crop: Option<[usize; 2]>,
    #[serde(default)]
    pub generate: Option<GeneratedVolumes>,
    #[serde(default)]
    pub volumes: Vec<VolumeSpec>,
}

impl CorpusConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| BenchError::Config { path: path.to_path_buf(), detail: e.to_string() })
    }

    /// Generated volumes followed by the explicit ones. Per-volume seeds are
    /// derived from the corpus seed and the volume id.
    pub fn expand(&self) -> Result<Vec<VolumeSpec>> {
        let mut out = Vec::new();
        if let Some(g) = &self.generate {
            for i in 0..g.count {
                let id = format!("{}_{i:03}", g.id_prefix);
                let acquisition = if g.acquisitions.is_empty() {
                    Acquisition::SYNTHETIC
                } else {
                    g.acquisitions[i % g.acquisitions.len()]
                };
                out.push(VolumeSpec {
                    acquisition,
                    phantom: PhantomSpec::shepp_logan(g.height, g.width, g.slices)
                        .with_jitter(g.jitter, derive_seed(self.seed, &format!("{id}/phantom"))),
                    scan: AcquisitionSpec {
                        coils: g.coils,
                        noise_sigma: g.noise_sigma,
                        sensitivity_seed: derive_seed(self.seed, &format!("{id}/coils")),
                    },
                    noise_seed: derive_seed(self.seed, &format!("{id}/noise")),
                    id,
                });
            }
        }
        out.extend(self.volumes.iter().cloned());
        let mut ids: Vec<&str> = out.iter().map(|v| v.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(BenchError::InvalidCorpus(format!("duplicate volume id {:?}", w[0])));
        }
        for v in &out {
            if v.id.is_empty() || v.id.contains(['/', '\\']) {
                return Err(BenchError::InvalidCorpus(format!("volume id {:?} is not a plain file stem", v.id)));
            }
        }
        Ok(out)
    }

    fn crop_for(&self, height: usize, width: usize) -> CropSpec {
        match self.crop {
            Some([h, w]) => CropSpec::new(h, w),
            None => CropSpec::new(height, width),
        }
    }
}

pub fn track_dir(corpus: &Path, track: Track) -> PathBuf {
    corpus.join(track.as_str())
}

/// `(id, path)` of every container in a track, sorted by id. A missing track
/// directory is an empty track.
pub fn list_volumes(corpus: &Path, track: Track) -> Result<Vec<(String, PathBuf)>> {
    let dir = track_dir(corpus, track);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path = entry.map_err(io_err(&dir))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("h5") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Ground-truth records of one phantom volume, multi-coil first when present.
pub fn simulate_volume(spec: &VolumeSpec, crop: CropSpec) -> Result<Vec<VolumeRecord>> {
    let p = &spec.phantom;
    let truth = ImageVolume::from_real(&make_phantom(p));
    let maps = make_sensitivities(p.height, p.width, spec.scan.coils, spec.scan.sensitivity_seed);
    let y = acquire(&truth, &maps, &spec.scan, spec.noise_seed)?;

    let mut records = Vec::new();
    let single_k = if y.coil_count() > 1 {
        let mut multi = VolumeRecord {
            reconstruction_rss: Some(quantize(&rss_reconstruction(&y, crop)?)),
            reconstruction_esc: None,
            mask: None,
            attributes: VolumeAttributes::new(spec.acquisition, spec.id.clone()),
            kspace: y.clone(),
        };
        multi.set_target_stats();
        records.push(multi);
        let coil_images = ifft2c(&y);
        let alpha = fit_esc(&coil_images, &rss_combine(&coil_images))?;
        esc_kspace(&y, &alpha)?
    } else {
        y
    };
    let mut single = VolumeRecord {
        reconstruction_rss: None,
        reconstruction_esc: Some(quantize(&rss_reconstruction(&single_k, crop)?)),
        mask: None,
        attributes: VolumeAttributes::new(spec.acquisition, spec.id.clone()),
        kspace: single_k,
    };
    single.set_target_stats();
    records.push(single);
    Ok(records)
}

/// Writes the corpus described by `cfg` under `out`; returns the volume ids.
pub fn simulate(cfg: &CorpusConfig, out: &Path) -> Result<Vec<String>> {
    let specs = cfg.expand()?;
    for track in [Track::SingleCoil, Track::MultiCoil] {
        let dir = track_dir(out, track);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    specs
        .par_iter()
        .map(|spec| {
            let crop = cfg.crop_for(spec.phantom.height, spec.phantom.width);
            for record in simulate_volume(spec, crop)? {
                let path = track_dir(out, record.track()).join(format!("{}.h5", spec.id));
                write_volume(&record, &path)?;
            }
            Ok(spec.id.clone())
        })
        .collect()
}

/// Writes test-style copies of a track: masked k-space plus mask, without
/// ground truth. Each volume's mask seed comes from `seed` and its id.
pub fn mask_corpus(corpus: &Path, track: Track, policy: MaskPolicy, seed: u64, out: &Path) -> Result<Vec<String>> {
    let dir = track_dir(out, track);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    list_volumes(corpus, track)?
        .par_iter()
        .map(|(id, path)| {
            let record = read_volume_as(path, track)?;
            let mask = make_mask(record.kspace.width(), policy, mask_seed(seed, id))?;
            let mut attributes = record.attributes.clone();
            attributes.norm = None;
            attributes.max = None;
            attributes.acceleration = Some(policy.acceleration as u32);
            attributes.num_low_frequency = Some(mask.num_low_frequency);
            let masked = VolumeRecord {
                kspace: apply_mask(&record.kspace, &mask)?,
                reconstruction_rss: None,
                reconstruction_esc: None,
                mask: Some(mask),
                attributes,
            };
            write_volume(&masked, dir.join(format!("{id}.h5")))?;
            Ok(id.clone())
        })
        .collect()
}
