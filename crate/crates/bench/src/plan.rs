//! Declarative experiment plans.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csmri_core::masking::MaskKind;
use csmri_core::solver::SolveConfig;
use csmri_io::Track;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};

/// Accelerations a plan may request.
pub const SUPPORTED_ACCELERATIONS: [usize; 2] = [4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nmse,
    Psnr,
    Ssim,
    L1,
}

impl Metric {
    pub const TABLE: [Metric; 3] = [Metric::Nmse, Metric::Psnr, Metric::Ssim];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Nmse => "NMSE",
            Metric::Psnr => "PSNR",
            Metric::Ssim => "SSIM",
            Metric::L1 => "L1",
        }
    }

    /// Whether a smaller value is better.
    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Nmse | Metric::L1)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nmse" => Ok(Metric::Nmse),
            "psnr" => Ok(Metric::Psnr),
            "ssim" => Ok(Metric::Ssim),
            "l1" => Ok(Metric::L1),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub corpus: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub tracks: Vec<Track>,
    pub accelerations: Vec<usize>,
    #[serde(default = "default_kinds")]
    pub mask_kinds: Vec<MaskKind>,
    pub lambdas: Vec<f64>,
    /// Solver settings shared by every cell; its `lambda` is replaced by the
    /// grid value.
    #[serde(default)]
    pub solver: SolveConfig,
    /// Adds a zero-filled baseline row per (track, acceleration, mask kind).
    #[serde(default = "yes")]
    pub zero_filled: bool,
    /// Writes every reconstruction under `<output>/reconstructions`.
    #[serde(default)]
    pub save_reconstructions: bool,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_kinds() -> Vec<MaskKind> {
    vec![MaskKind::Random]
}

fn default_metrics() -> Vec<Metric> {
    Metric::TABLE.to_vec()
}

fn yes() -> bool {
    true
}

/// One solver configuration applied to one slice of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub track: Track,
    pub acceleration: usize,
    pub mask_kind: MaskKind,
    pub lambda: f64,
}

impl ExperimentPlan {
    pub fn new(corpus: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            corpus: corpus.into(),
            output: output.into(),
            seed: 0,
            tracks: vec![Track::SingleCoil],
            accelerations: SUPPORTED_ACCELERATIONS.to_vec(),
            mask_kinds: default_kinds(),
            lambdas: vec![1e-4, 1e-3, 1e-2, 1e-1],
            solver: SolveConfig::default(),
            zero_filled: true,
            save_reconstructions: false,
            metrics: default_metrics(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let plan = Self::from_toml(&text).map_err(|detail| BenchError::Config { path: path.to_path_buf(), detail })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan fields are all representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::InvalidPlan(m));
        if self.tracks.is_empty() || self.accelerations.is_empty() || self.mask_kinds.is_empty() {
            return bad("tracks, accelerations and mask_kinds must be non-empty".into());
        }
        if self.lambdas.is_empty() && !self.zero_filled {
            return bad("nothing to run: empty lambda grid and no zero-filled baseline".into());
        }
        if let Some(r) = self.accelerations.iter().find(|r| !SUPPORTED_ACCELERATIONS.contains(r)) {
            return bad(format!("acceleration {r} not in {SUPPORTED_ACCELERATIONS:?}"));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return bad(format!("lambda {l} must be finite and ≥ 0"));
        }
        if self.metrics.is_empty() {
            return bad("metric set is empty".into());
        }
        for (name, dup) in [
            ("tracks", has_duplicates(&self.tracks)),
            ("accelerations", has_duplicates(&self.accelerations)),
            ("mask_kinds", has_duplicates(&self.mask_kinds)),
            ("metrics", has_duplicates(&self.metrics)),
            ("lambdas", self.lambdas.iter().enumerate().any(|(i, a)| self.lambdas[..i].contains(a))),
        ] {
            if dup {
                return bad(format!("{name} contains duplicates"));
            }
        }
        self.solver.validate()?;
        Ok(())
    }

    /// Every (track, acceleration, mask kind, λ) cell in execution order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.cell_count());
        for &track in &self.tracks {
            for &acceleration in &self.accelerations {
                for &mask_kind in &self.mask_kinds {
                    for &lambda in &self.lambdas {
                        out.push(Cell { track, acceleration, mask_kind, lambda });
                    }
                }
            }
        }
        out
    }

    pub fn cell_count(&self) -> usize {
        self.tracks.len() * self.accelerations.len() * self.mask_kinds.len() * self.lambdas.len()
    }

    pub fn solver_for(&self, lambda: f64) -> SolveConfig {
        self.solver.with_lambda(lambda)
    }
}

fn has_duplicates<T: Ord + Clone>(xs: &[T]) -> bool {
    let mut v = xs.to_vec();
    v.sort();
    v.windows(2).any(|w| w[0] == w[1])
}
