//! Cartesian undersampling masks over the k-space width (phase-encode) axis.
//!
//! Every mask keeps a contiguous block of `num_low_frequency` central columns
//! and then adds further columns either at random or on a regular grid.
//! Masks are generated with [`ChaCha8Rng`] seeded from a 64-bit seed, so a
//! mask is fully determined by `(width, policy, seed)` on every platform.
//!
//! Random visit order: one `f64` draw per non-center column, in ascending
//! column index. Equispaced: a single offset draw in `0..R`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tensor::KSpaceVolume;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Random,
    Equispaced,
}

impl MaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::Random => "random",
            MaskKind::Equispaced => "equispaced",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskKind {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(MaskKind::Random),
            "equispaced" | "equidistant" => Ok(MaskKind::Equispaced),
            other => Err(CoreError::InfeasiblePolicy(format!("unknown mask kind {other:?}"))),
        }
    }
}

/// Acceleration factor, center fraction and construction rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub acceleration: usize,
    pub center_fraction: f64,
    pub kind: MaskKind,
}

impl MaskPolicy {
    pub fn new(acceleration: usize, center_fraction: f64, kind: MaskKind) -> Self {
        MaskPolicy { acceleration, center_fraction, kind }
    }

    /// The standard pairing: 8% central lines at 4x, 4% at 8x.
    ///
    /// Other accelerations fall back to `0.32 / R`, which reproduces both
    /// canonical pairs.
    pub fn canonical(acceleration: usize, kind: MaskKind) -> Self {
        let center_fraction = match acceleration {
            4 => 0.08,
            8 => 0.04,
            r => 0.32 / r.max(1) as f64,
        };
        MaskPolicy { acceleration, center_fraction, kind }
    }

    /// `round_half_up(center_fraction * width)`.
    pub fn num_low_frequency(&self, width: usize) -> usize {
        (self.center_fraction * width as f64 + 0.5).floor() as usize
    }

    /// Bernoulli keep probability of a non-center column for random masks.
    pub fn random_keep_probability(&self, width: usize) -> f64 {
        let num_low = self.num_low_frequency(width) as f64;
        let w = width as f64;
        if num_low >= w {
            return 1.0;
        }
        ((w / self.acceleration as f64 - num_low) / (w - num_low)).clamp(0.0, 1.0)
    }

    fn check_feasible(&self, width: usize) -> Result<usize> {
        if self.acceleration == 0 {
            return Err(CoreError::InfeasiblePolicy("acceleration must be at least 1".into()));
        }
        if !(self.center_fraction > 0.0 && self.center_fraction <= 1.0) {
            return Err(CoreError::InfeasiblePolicy(format!(
                "center fraction {} outside (0, 1]",
                self.center_fraction
            )));
        }
        if width < self.acceleration {
            return Err(CoreError::InfeasiblePolicy(format!(
                "width {width} smaller than acceleration {}",
                self.acceleration
            )));
        }
        let num_low = self.num_low_frequency(width);
        let target = width as f64 / self.acceleration as f64;
        if num_low == 0 || num_low > width || target < num_low as f64 {
            return Err(CoreError::InfeasiblePolicy(format!(
                "width {width} at {}x cannot hold {num_low} central lines",
                self.acceleration
            )));
        }
        Ok(num_low)
    }
}

/// One keep flag per k-space column plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub keep: Vec<bool>,
    pub acceleration_nominal: usize,
    pub center_fraction: f64,
    pub kind: MaskKind,
    pub seed: u64,
    pub num_low_frequency: usize,
}

impl SamplingMask {
    pub fn width(&self) -> usize {
        self.keep.len()
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Column range `[start, start + num_low_frequency)` of the central block.
    pub fn center_range(&self) -> std::ops::Range<usize> {
        center_range(self.width(), self.num_low_frequency)
    }

    /// A mask keeping only the central block.
    pub fn center_only(&self) -> SamplingMask {
        let range = self.center_range();
        let keep = (0..self.width()).map(|c| range.contains(&c)).collect();
        SamplingMask { keep, ..self.clone() }
    }

    /// A fully sampled mask of the given width.
    pub fn full(width: usize) -> SamplingMask {
        SamplingMask {
            keep: vec![true; width],
            acceleration_nominal: 1,
            center_fraction: 1.0,
            kind: MaskKind::Equispaced,
            seed: 0,
            num_low_frequency: width,
        }
    }

    pub fn policy(&self) -> MaskPolicy {
        MaskPolicy::new(self.acceleration_nominal, self.center_fraction, self.kind)
    }
}

/// Central block placement: contains the zero-frequency column `width / 2`.
pub fn center_range(width: usize, num_low: usize) -> std::ops::Range<usize> {
    let start = (width + 1 - num_low.min(width)) / 2;
    start..start + num_low.min(width)
}

/// Keeps the central block and every other column with probability
/// `(W/R - num_low) / (W - num_low)`.
pub fn make_random_mask(width: usize, policy: MaskPolicy, seed: u64) -> Result<SamplingMask> {
    let num_low = policy.check_feasible(width)?;
    let p = policy.random_keep_probability(width);
    let center = center_range(width, num_low);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = (0..width)
        .map(|c| {
            if center.contains(&c) {
                true
            } else {
                rng.gen::<f64>() < p
            }
        })
        .collect();
    Ok(SamplingMask {
        keep,
        acceleration_nominal: policy.acceleration,
        center_fraction: policy.center_fraction,
        kind: MaskKind::Random,
        seed,
        num_low_frequency: num_low,
    })
}

/// Keeps columns `offset + k * R` for a seed-derived `offset` in `0..R`,
/// unioned with the central block.
pub fn make_equispaced_mask(width: usize, policy: MaskPolicy, seed: u64) -> Result<SamplingMask> {
    policy.check_feasible(width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(0..policy.acceleration);
    let mut mask = equispaced_mask_with_offset(width, policy, offset)?;
    mask.seed = seed;
    Ok(mask)
}

/// Equispaced construction with an explicit grid offset.
pub fn equispaced_mask_with_offset(width: usize, policy: MaskPolicy, offset: usize) -> Result<SamplingMask> {
    let num_low = policy.check_feasible(width)?;
    let r = policy.acceleration;
    if offset >= r {
        return Err(CoreError::InfeasiblePolicy(format!("offset {offset} not below acceleration {r}")));
    }
    let center = center_range(width, num_low);
    let keep = (0..width)
        .map(|c| center.contains(&c) || (c >= offset && (c - offset) % r == 0))
        .collect();
    Ok(SamplingMask {
        keep,
        acceleration_nominal: r,
        center_fraction: policy.center_fraction,
        kind: MaskKind::Equispaced,
        seed: 0,
        num_low_frequency: num_low,
    })
}

/// Dispatches on `policy.kind`.
pub fn make_mask(width: usize, policy: MaskPolicy, seed: u64) -> Result<SamplingMask> {
    match policy.kind {
        MaskKind::Random => make_random_mask(width, policy, seed),
        MaskKind::Equispaced => make_equispaced_mask(width, policy, seed),
    }
}

/// The projection `P`: zeros every unsampled column in every slice and coil.
pub fn apply_mask(k: &KSpaceVolume, mask: &SamplingMask) -> Result<KSpaceVolume> {
    let mut data: Array4<C64> = k.data().clone();
    apply_mask_inplace(&mut data, &mask.keep)?;
    Ok(KSpaceVolume::from_array(data, k.acquisition))
}

pub(crate) fn apply_mask_inplace(data: &mut Array4<C64>, keep: &[bool]) -> Result<()> {
    let width = data.dim().3;
    if keep.len() != width {
        return Err(CoreError::MaskLengthMismatch { mask: keep.len(), width });
    }
    for (c, &k) in keep.iter().enumerate() {
        if !k {
            data.index_axis_mut(Axis(3), c).fill(C64::new(0.0, 0.0));
        }
    }
    Ok(())
}

/// `W / kept columns`.
pub fn achieved_acceleration(mask: &SamplingMask) -> f64 {
    mask.width() as f64 / mask.kept_count() as f64
}
