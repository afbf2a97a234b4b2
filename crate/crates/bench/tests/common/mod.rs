#![allow(dead_code)]

use std::path::Path;

use csmri_bench::{simulate, CorpusConfig, ExperimentPlan, GeneratedVolumes};
use csmri_core::masking::MaskKind;
use csmri_core::regularizers::Regularizer;
use csmri_core::solver::SolveConfig;
use csmri_core::Acquisition;
use csmri_io::Track;

pub fn generated(count: usize, height: usize, width: usize, slices: usize, coils: usize) -> GeneratedVolumes {
    GeneratedVolumes {
        count,
        height,
        width,
        slices,
        jitter: 0.03,
        coils,
        noise_sigma: 0.0,
        id_prefix: "phantom".into(),
        acquisitions: vec![],
    }
}

/// Four-coil 72×104 volumes with two slices, targets cropped to 64×96. The
/// width leaves at least four calibration lines at 8×.
pub fn small_config(count: usize) -> CorpusConfig {
    let mut g = generated(count, 72, 104, 2, 4);
    g.noise_sigma = 1e-3;
    g.acquisitions = vec![Acquisition::PD, Acquisition::PDFS];
    CorpusConfig { seed: 5, crop: Some([64, 96]), generate: Some(g), volumes: vec![] }
}

pub fn small_corpus(dir: &Path, count: usize) -> CorpusConfig {
    let cfg = small_config(count);
    simulate(&cfg, dir).unwrap();
    cfg
}

pub fn quick_plan(corpus: &Path, output: &Path) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(corpus, output);
    plan.tracks = vec![Track::SingleCoil, Track::MultiCoil];
    plan.mask_kinds = vec![MaskKind::Random, MaskKind::Equispaced];
    plan.lambdas = vec![1e-3, 1e-2];
    // cheap settings: these tests exercise the plumbing, not convergence
    plan.solver = SolveConfig { max_iters: 8, regularizer: Regularizer::Tv { inner_iters: 10 }, ..SolveConfig::default() };
    plan.seed = 9;
    plan
}
