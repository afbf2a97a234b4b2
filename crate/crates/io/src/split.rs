//! Train / validation / test split manifests.
//!
//! On disk a manifest is tab-separated text with a header line and one volume
//! per line: `id  split  kind  R  f  seed`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use csmri_core::masking::{MaskKind, MaskPolicy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};

pub const MANIFEST_HEADER: &str = "id\tsplit\tkind\tR\tf\tseed";

/// Accelerations a manifest entry is drawn from, with equal probability.
pub const SPLIT_ACCELERATIONS: [usize; 2] = [4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub kind: MaskKind,
    pub acceleration: usize,
    pub center_fraction: f64,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn policy(&self) -> MaskPolicy {
        MaskPolicy::new(self.acceleration, self.center_fraction, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitManifest {
    pub entries: Vec<ManifestEntry>,
}

/// Largest-remainder apportionment of `n` items over `fractions`; ties in
/// the remainder go to the earlier split.
pub fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).expect("finite fractions").then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Shuffles `ids` with the seed and assigns them to train / validation / test
/// in that order. Every entry also gets a random-mask policy with R drawn
/// from {4, 8} and its own mask seed.
///
/// Entries are listed in the order of `ids`.
pub fn build_split(ids: &[String], fractions: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(IoError::InvalidFractions(format!("{fractions:?} must be in [0, 1] and sum to 1")));
    }
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(IoError::DuplicateId(id.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng);
    let counts = apportion(ids.len(), fractions);
    let mut split_of = vec![Split::Train; ids.len()];
    let mut pos = 0;
    for (split, &count) in Split::ALL.iter().zip(&counts) {
        for &i in &order[pos..pos + count] {
            split_of[i] = *split;
        }
        pos += count;
    }
    let entries = ids
        .iter()
        .zip(split_of)
        .map(|(id, split)| {
            let acceleration = SPLIT_ACCELERATIONS[rng.gen_range(0..SPLIT_ACCELERATIONS.len())];
            let policy = MaskPolicy::canonical(acceleration, MaskKind::Random);
            ManifestEntry {
                id: id.clone(),
                split,
                kind: policy.kind,
                acceleration,
                center_fraction: policy.center_fraction,
                seed: rng.gen(),
            }
        })
        .collect();
    Ok(SplitManifest { entries })
}

impl SplitManifest {
    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |e| e.split == split).map(|e| e.id.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.id, e.split, e.kind, e.acceleration, e.center_fraction, e.seed
            ));
        }
        out
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, detail: String| IoError::Manifest { path: path.to_path_buf(), line, detail };
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            if line.trim().is_empty() || (n == 0 && line.trim() == MANIFEST_HEADER) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(err(line_no, format!("expected 6 columns, found {}", cols.len())));
            }
            let entry = ManifestEntry {
                id: cols[0].to_string(),
                split: cols[1].parse().map_err(|e| err(line_no, e))?,
                kind: cols[2].parse().map_err(|e: csmri_core::CoreError| err(line_no, e.to_string()))?,
                acceleration: cols[3].parse().map_err(|_| err(line_no, format!("bad R {:?}", cols[3])))?,
                center_fraction: cols[4].parse().map_err(|_| err(line_no, format!("bad f {:?}", cols[4])))?,
                seed: cols[5].parse().map_err(|_| err(line_no, format!("bad seed {:?}", cols[5])))?,
            };
            if !seen.insert(entry.id.clone()) {
                return Err(IoError::DuplicateId(entry.id));
            }
            entries.push(entry);
        }
        Ok(SplitManifest { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
    }

    /// Loads a manifest; with `data_dir` set, every `<data_dir>/<id>.h5` must
    /// exist.
    pub fn load(path: impl AsRef<Path>, data_dir: Option<&Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
        let manifest = Self::parse_tsv(&text, path)?;
        if let Some(dir) = data_dir {
            for e in &manifest.entries {
                let file = dir.join(format!("{}.h5", e.id));
                if !file.is_file() {
                    return Err(IoError::Io {
                        path: file,
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "manifest entry has no volume file"),
                    });
                }
            }
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion(1000, [0.7, 0.15, 0.15]), [700, 150, 150]);
        assert_eq!(apportion(10, [1.0, 0.0, 0.0]), [10, 0, 0]);
        assert_eq!(apportion(10, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]), [4, 3, 3]);
        assert_eq!(apportion(7, [0.5, 0.25, 0.25]), [3, 2, 2]);
    }

    #[test]
    fn split_labels() {
        assert_eq!("val".parse::<Split>().unwrap(), Split::Validation);
        assert!("challenge".parse::<Split>().is_err());
    }
}
