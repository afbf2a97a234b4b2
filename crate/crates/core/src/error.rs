use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("crop {out_height}x{out_width} larger than input {height}x{width}")]
    DimensionTooSmall {
        height: usize,
        width: usize,
        out_height: usize,
        out_width: usize,
    },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("shift bitmask {mask:#b} selects an axis beyond rank {rank}")]
    InvalidBitmask { mask: u32, rank: usize },

    #[error("infeasible mask policy: {0}")]
    InfeasiblePolicy(String),

    #[error("mask length {mask} does not match k-space width {width}")]
    MaskLengthMismatch { mask: usize, width: usize },

    #[error("sensitivity estimation needs at least {needed} calibration lines, mask has {found}")]
    TooFewCalibrationLines { needed: usize, found: usize },

    #[error("wavelet levels {levels} invalid for {height}x{width} plane")]
    TooManyLevels {
        levels: usize,
        height: usize,
        width: usize,
    },

    #[error("malformed wavelet pyramid: {0}")]
    MalformedPyramid(String),

    #[error("negative threshold or step: {0}")]
    NegativeThreshold(f64),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("solver diverged after {iterations} iterations")]
    Diverged { iterations: usize },

    #[error("reference volume is identically zero")]
    ZeroReference,

    #[error("image {height}x{width} smaller than the {window}x{window} SSIM window")]
    TooSmallForWindow {
        height: usize,
        width: usize,
        window: usize,
    },
}
