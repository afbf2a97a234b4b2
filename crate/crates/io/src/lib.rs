//! File formats for MRI benchmark data.
//!
//! * [`container`]: hierarchical HDF5 volume files with `kspace`,
//!   `reconstruction_rss`, `reconstruction_esc` and `mask` datasets
//! * [`cfl`]: BART-style `.hdr`/`.cfl` pairs
//! * [`split`]: train/validation/test manifests

pub mod cfl;
pub mod container;
pub mod error;
pub mod split;

pub use cfl::{read_cfl, write_cfl};
pub use container::{
    read_reconstruction, read_volume, read_volume_as, write_reconstruction, write_volume, Track,
    VolumeAttributes, VolumeRecord,
};
pub use error::{IoError, Result};
pub use split::{build_split, ManifestEntry, Split, SplitManifest};
