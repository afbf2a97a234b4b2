//! Plan execution and external scoring.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use csmri_core::coils::{estimate_sensitivities, DEFAULT_CALIBRATION_TAPER};
use csmri_core::masking::{make_mask, MaskKind, MaskPolicy, SamplingMask};
use csmri_core::metrics::MetricValues;
use csmri_core::solver::{cs_reconstruct_multicoil, cs_reconstruct_singlecoil, zero_filled};
use csmri_core::{CropSpec, RealVolume};
use csmri_io::{read_reconstruction, read_volume_as, write_reconstruction, Track, VolumeRecord};
use log::{info, warn};
use rayon::prelude::*;

use crate::corpus::list_volumes;
use crate::error::{io_err, BenchError, Result};
use crate::plan::{ExperimentPlan, Metric};
use crate::report::emit_all;
use crate::seeds::mask_seed;
use crate::table::{Failure, GroupKey, Method, ResultTable, SolveSummary, VolumeResult};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const PLAN_FILE: &str = "plan.toml";
pub const RECONSTRUCTIONS_DIR: &str = "reconstructions";

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub table: ResultTable,
    pub records: Vec<VolumeResult>,
}

type VolumeOutcome = (Vec<VolumeResult>, Vec<Failure>, Vec<(PathBuf, RealVolume)>);

fn failure(track: Track, id: &str, context: impl Into<String>, err: impl ToString) -> Failure {
    Failure { track, volume_id: id.to_string(), context: context.into(), error: err.to_string() }
}

fn cell_context(r: usize, kind: MaskKind, method: &Method) -> String {
    format!("R={r} {kind} {method}")
}

/// Runs every cell of the plan over one volume. Failures are collected per
/// cell; a volume that cannot be read fails all of its cells at once.
fn run_volume(plan: &ExperimentPlan, track: Track, id: &str, path: &Path) -> VolumeOutcome {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut saved = Vec::new();
    let record = match read_volume_as(path, track) {
        Ok(r) => r,
        Err(e) => return (results, vec![failure(track, id, "read", e)], saved),
    };
    let Some(target) = record.target().cloned() else {
        return (results, vec![failure(track, id, "read", "volume has no ground truth for this track")], saved);
    };
    let (_, th, tw) = target.dim();
    let crop = CropSpec::new(th, tw);

    for &r in &plan.accelerations {
        for &kind in &plan.mask_kinds {
            let key = GroupKey { track, acceleration: r as u32, mask_kind: kind };
            let mask = match make_mask(record.kspace.width(), MaskPolicy::canonical(r, kind), mask_seed(plan.seed, id)) {
                Ok(m) => m,
                Err(e) => {
                    failures.push(failure(track, id, format!("R={r} {kind} mask"), e));
                    continue;
                }
            };
            let mut emit = |method: Method, outcome: Result<(RealVolume, Option<SolveSummary>)>| {
                let context = cell_context(r, kind, &method);
                let scored = outcome.and_then(|(image, summary)| {
                    let values = MetricValues::compute(&image, &target)?;
                    Ok((image, values, summary))
                });
                match scored {
                    Ok((image, values, summary)) => {
                        if plan.save_reconstructions {
                            let dir = plan
                                .output
                                .join(RECONSTRUCTIONS_DIR)
                                .join(track.as_str())
                                .join(format!("R{r}_{kind}"))
                                .join(method.slug());
                            saved.push((dir.join(format!("{id}.h5")), image));
                        }
                        let mut result = VolumeResult::new(&key, method, id, record.attributes.acquisition, values);
                        result.solve = summary;
                        results.push(result);
                    }
                    Err(e) => failures.push(failure(track, id, context, e)),
                }
            };

            if plan.zero_filled {
                let zf = zero_filled(&record.kspace, Some(&mask), crop).map(|v| (v, None)).map_err(BenchError::from);
                emit(Method::ZeroFilled, zf);
            }
            if plan.lambdas.is_empty() {
                continue;
            }
            let solved = solve_cells(plan, &record, &mask, crop);
            for (lambda, outcome) in plan.lambdas.iter().zip(solved) {
                let method = Method::Cs { regularizer: plan.solver.regularizer.name().to_string(), lambda: *lambda };
                emit(method, outcome);
            }
        }
    }
    (results, failures, saved)
}

fn solve_cells(
    plan: &ExperimentPlan,
    record: &VolumeRecord,
    mask: &SamplingMask,
    crop: CropSpec,
) -> Vec<Result<(RealVolume, Option<SolveSummary>)>> {
    let maps = match record.track() {
        Track::SingleCoil => None,
        Track::MultiCoil => match estimate_sensitivities(&record.kspace, mask, DEFAULT_CALIBRATION_TAPER) {
            Ok(m) => Some(m),
            Err(e) => {
                let msg = format!("sensitivity estimation: {e}");
                return plan.lambdas.iter().map(|_| Err(BenchError::InvalidCorpus(msg.clone()))).collect();
            }
        },
    };
    plan.lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = plan.solver_for(lambda);
            let recon = match &maps {
                None => cs_reconstruct_singlecoil(&record.kspace, mask, &cfg, crop)?,
                Some(sets) => cs_reconstruct_multicoil(&record.kspace, sets, mask, &cfg, crop)?,
            };
            let summary = SolveSummary::from_traces(&recon.traces);
            Ok((recon.image, Some(summary)))
        })
        .collect()
}

/// Runs the plan, writes `records.jsonl`, the resolved plan and the reports
/// into `plan.output`, and returns the table.
///
/// Volumes run in parallel; results are merged in (track, acceleration, mask
/// kind, method, volume) order so the files do not depend on scheduling.
pub fn run_plan(plan: &ExperimentPlan) -> Result<RunOutput> {
    plan.validate()?;
    if !plan.corpus.is_dir() {
        return Err(BenchError::InvalidPlan(format!("corpus {} is not a directory", plan.corpus.display())));
    }
    let mut work = Vec::new();
    for &track in &plan.tracks {
        for (id, path) in list_volumes(&plan.corpus, track)? {
            work.push((track, id, path));
        }
    }
    if work.is_empty() {
        warn!("corpus {} holds no volumes for the requested tracks", plan.corpus.display());
    }
    info!("{} volumes × {} cells", work.len(), plan.cell_count());

    let outcomes: Vec<VolumeOutcome> =
        work.par_iter().map(|(track, id, path)| run_volume(plan, *track, id, path)).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut saved = Vec::new();
    for (r, f, s) in outcomes {
        records.extend(r);
        failures.extend(f);
        saved.extend(s);
    }
    records.sort_by(|a, b| a.order(b));
    for f in &failures {
        warn!("{} {} [{}]: {}", f.track, f.volume_id, f.context, f.error);
    }
    let table = ResultTable::aggregate(&records, plan.metrics.clone(), failures);

    fs::create_dir_all(&plan.output).map_err(io_err(&plan.output))?;
    let plan_path = plan.output.join(PLAN_FILE);
    fs::write(&plan_path, plan.to_toml()).map_err(io_err(&plan_path))?;
    write_records(&plan.output.join(RECORDS_FILE), &records)?;
    for (path, image) in &saved {
        let dir = path.parent().expect("reconstruction paths have a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_reconstruction(path, image)?;
    }
    emit_all(&table, &plan.output)?;
    Ok(RunOutput { table, records })
}

/// Writes one JSON record per line, in the given order.
pub fn write_records(path: &Path, records: &[VolumeResult]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&out).map_err(io_err(path))
}

pub fn read_records(path: &Path) -> Result<Vec<VolumeResult>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::Table {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", n + 1),
            })
        })
        .collect()
}

/// Grouping keys under which externally produced reconstructions are scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalRun {
    pub recon_dir: PathBuf,
    pub model: String,
    pub track: Track,
    pub acceleration: u32,
    pub mask_kind: MaskKind,
}

/// Scores `<recon_dir>/<id>.h5` against the ground truth of every corpus
/// volume of the run's track.
///
/// Both volumes are center-cropped to `crop` (default: the target extents).
/// Missing files and shape mismatches become failures; the other volumes are
/// still scored.
pub fn score_external(run: &ExternalRun, corpus: &Path, crop: Option<CropSpec>) -> Result<RunOutput> {
    let volumes = list_volumes(corpus, run.track)?;
    if volumes.is_empty() {
        warn!("corpus {} holds no {} volumes", corpus.display(), run.track);
    }
    let key = GroupKey { track: run.track, acceleration: run.acceleration, mask_kind: run.mask_kind };
    let method = Method::External { model: run.model.clone() };
    let context = format!("R={} {} {}", run.acceleration, run.mask_kind, run.model);

    let outcomes: Vec<std::result::Result<VolumeResult, Failure>> = volumes
        .par_iter()
        .map(|(id, path)| {
            let fail = |e: String| failure(run.track, id, context.clone(), e);
            let recon_path = run.recon_dir.join(format!("{id}.h5"));
            if !recon_path.is_file() {
                return Err(fail("missing reconstruction".into()));
            }
            let record = read_volume_as(path, run.track).map_err(|e| fail(e.to_string()))?;
            let target = record.target().ok_or_else(|| fail("volume has no ground truth for this track".into()))?;
            let recon = read_reconstruction(&recon_path).map_err(|e| fail(e.to_string()))?;
            let (_, th, tw) = target.dim();
            let crop = crop.unwrap_or(CropSpec::new(th, tw));
            let target = target.center_crop(crop).map_err(|e| fail(format!("target: {e}")))?;
            let recon = recon.center_crop(crop).map_err(|e| fail(format!("reconstruction: {e}")))?;
            if recon.dim() != target.dim() {
                return Err(fail(format!(
                    "shape mismatch: reconstruction {:?}, target {:?}",
                    recon.dim(),
                    target.dim()
                )));
            }
            let values = MetricValues::compute(&recon, &target).map_err(|e| fail(e.to_string()))?;
            Ok(VolumeResult::new(&key, method.clone(), id, record.attributes.acquisition, values))
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => {
                warn!("{} [{}]: {}", f.volume_id, f.context, f.error);
                failures.push(f);
            }
        }
    }
    records.sort_by(|a, b| a.order(b));
    let table = ResultTable::aggregate(&records, Metric::TABLE.to_vec(), failures);
    Ok(RunOutput { table, records })
}

/// Writes records and all report formats of an evaluation into `out`.
pub fn save_evaluation(output: &RunOutput, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_records(&out.join(RECORDS_FILE), &output.records)?;
    emit_all(&output.table, out)?;
    Ok(())
}
