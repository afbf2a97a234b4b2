//! Per-volume records and the aggregated result table.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use csmri_core::masking::MaskKind;
use csmri_core::metrics::{infinite_as_string, MetricValues};
use csmri_core::Acquisition;
use csmri_io::Track;
use serde::{Deserialize, Serialize};

use crate::plan::Metric;

/// Label of the group that pools all acquisitions.
pub const ALL_ACQUISITIONS: &str = "all";

/// Objective increases smaller than this fraction of the previous value are
/// treated as rounding.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    ZeroFilled,
    Cs { regularizer: String, lambda: f64 },
    External { model: String },
}

impl Method {
    fn rank(&self) -> u8 {
        match self {
            Method::ZeroFilled => 0,
            Method::Cs { .. } => 1,
            Method::External { .. } => 2,
        }
    }

    /// Total order: zero-filled, then CS by regularizer and λ, then external
    /// models by name.
    pub fn order(&self, other: &Method) -> Ordering {
        self.rank().cmp(&other.rank()).then_with(|| match (self, other) {
            (Method::Cs { regularizer: ra, lambda: la }, Method::Cs { regularizer: rb, lambda: lb }) => {
                ra.cmp(rb).then(la.total_cmp(lb))
            }
            (Method::External { model: a }, Method::External { model: b }) => a.cmp(b),
            _ => Ordering::Equal,
        })
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Method::Cs { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    /// File-system friendly name, used for reconstruction directories.
    pub fn slug(&self) -> String {
        match self {
            Method::ZeroFilled => "zero-filled".into(),
            Method::Cs { regularizer, lambda } => format!("{regularizer}_lambda_{lambda:e}"),
            Method::External { model } => model.replace(['/', '\\', ' '], "_"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::ZeroFilled => f.write_str("zero-filled"),
            Method::Cs { regularizer, lambda } => write!(f, "{regularizer} lambda={lambda:e}"),
            Method::External { model } => f.write_str(model),
        }
    }
}

/// Metrics of one reconstructed volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeResult {
    pub track: Track,
    pub acceleration: u32,
    pub mask_kind: MaskKind,
    #[serde(flatten)]
    pub method: Method,
    pub volume_id: String,
    pub acquisition: Acquisition,
    pub nmse: f64,
    #[serde(with = "infinite_as_string")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub l1: f64,
    /// Solver diagnostics, absent for non-iterative methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    /// Sum over slices of the final objective value.
    pub final_objective: f64,
    /// Largest iteration count over slices.
    pub iterations: usize,
    pub converged_slices: usize,
    /// Objective increases beyond [`MONOTONE_SLACK`], summed over slices.
    pub objective_increases: usize,
}

impl SolveSummary {
    pub fn from_traces(traces: &[csmri_core::solver::SolveTrace]) -> Self {
        SolveSummary {
            final_objective: traces.iter().map(|t| *t.objective.last().unwrap_or(&0.0)).sum(),
            iterations: traces.iter().map(|t| t.iterations_run).max().unwrap_or(0),
            converged_slices: traces.iter().filter(|t| t.converged).count(),
            objective_increases: traces.iter().map(|t| count_increases(&t.objective)).sum(),
        }
    }
}

pub fn count_increases(trace: &[f64]) -> usize {
    trace.windows(2).filter(|w| w[1] - w[0] > MONOTONE_SLACK * w[0].abs()).count()
}

impl VolumeResult {
    pub fn new(
        key: &GroupKey,
        method: Method,
        volume_id: impl Into<String>,
        acquisition: Acquisition,
        values: MetricValues,
    ) -> Self {
        VolumeResult {
            track: key.track,
            acceleration: key.acceleration,
            mask_kind: key.mask_kind,
            method,
            volume_id: volume_id.into(),
            acquisition,
            nmse: values.nmse,
            psnr_db: values.psnr_db,
            ssim: values.ssim,
            l1: values.l1,
            solve: None,
        }
    }

    pub fn value(&self, m: Metric) -> f64 {
        match m {
            Metric::Nmse => self.nmse,
            Metric::Psnr => self.psnr_db,
            Metric::Ssim => self.ssim,
            Metric::L1 => self.l1,
        }
    }

    /// Deterministic record order: track, acceleration, mask kind, method,
    /// volume id.
    pub fn order(&self, other: &Self) -> Ordering {
        (self.track, self.acceleration, self.mask_kind)
            .cmp(&(other.track, other.acceleration, other.mask_kind))
            .then_with(|| self.method.order(&other.method))
            .then_with(|| self.volume_id.cmp(&other.volume_id))
    }
}

/// (track, acceleration, mask kind) of a record or row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupKey {
    pub track: Track,
    pub acceleration: u32,
    pub mask_kind: MaskKind,
}

/// A volume that could not be processed for some cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Failure {
    pub track: Track,
    pub volume_id: String,
    pub context: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BestFlags {
    pub nmse: bool,
    pub psnr: bool,
    pub ssim: bool,
}

impl BestFlags {
    pub fn get(&self, m: Metric) -> bool {
        match m {
            Metric::Nmse => self.nmse,
            Metric::Psnr => self.psnr,
            Metric::Ssim => self.ssim,
            Metric::L1 => false,
        }
    }

    fn set(&mut self, m: Metric) {
        match m {
            Metric::Nmse => self.nmse = true,
            Metric::Psnr => self.psnr = true,
            Metric::Ssim => self.ssim = true,
            Metric::L1 => {}
        }
    }
}

/// Mean metrics of one method over the volumes of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub track: Track,
    pub acceleration: u32,
    pub mask_kind: MaskKind,
    /// Acquisition label, or [`ALL_ACQUISITIONS`].
    pub acquisition: String,
    #[serde(flatten)]
    pub method: Method,
    pub volumes: usize,
    pub nmse: f64,
    /// Mean over volumes with finite PSNR; infinite only when every volume
    /// is reconstructed exactly.
    #[serde(with = "infinite_as_string")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub l1: f64,
    /// Volumes left out of the PSNR mean because their PSNR is infinite.
    pub psnr_infinite: usize,
    pub best: BestFlags,
}

impl TableRow {
    pub fn key(&self) -> GroupKey {
        GroupKey { track: self.track, acceleration: self.acceleration, mask_kind: self.mask_kind }
    }

    pub fn value(&self, m: Metric) -> f64 {
        match m {
            Metric::Nmse => self.nmse,
            Metric::Psnr => self.psnr_db,
            Metric::Ssim => self.ssim,
            Metric::L1 => self.l1,
        }
    }

    fn order(&self, other: &Self) -> Ordering {
        self.key()
            .cmp(&other.key())
            .then_with(|| acquisition_order(&self.acquisition, &other.acquisition))
            .then_with(|| self.method.order(&other.method))
    }
}

fn acquisition_order(a: &str, b: &str) -> Ordering {
    (a != ALL_ACQUISITIONS, a).cmp(&(b != ALL_ACQUISITIONS, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    /// Columns shown in text and delimited reports.
    pub metrics: Vec<Metric>,
    pub rows: Vec<TableRow>,
    pub failures: Vec<Failure>,
}

/// Unweighted mean of each metric over `records`.
pub fn mean_row(records: &[&VolumeResult]) -> (f64, f64, f64, f64, usize) {
    let n = records.len() as f64;
    let nmse = records.iter().map(|r| r.nmse).sum::<f64>() / n;
    let ssim = records.iter().map(|r| r.ssim).sum::<f64>() / n;
    let l1 = records.iter().map(|r| r.l1).sum::<f64>() / n;
    let finite: Vec<f64> = records.iter().map(|r| r.psnr_db).filter(|p| p.is_finite()).collect();
    let infinite = records.len() - finite.len();
    let psnr = if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    (nmse, psnr, ssim, l1, infinite)
}

impl ResultTable {
    /// Groups records by (track, acceleration, mask kind, acquisition,
    /// method) and averages each group. An `all` row pools acquisitions; per
    /// acquisition rows are added when a group holds more than one label.
    pub fn aggregate(records: &[VolumeResult], metrics: Vec<Metric>, mut failures: Vec<Failure>) -> Self {
        let mut sorted: Vec<&VolumeResult> = records.iter().collect();
        sorted.sort_by(|a, b| a.order(b));

        let mut groups: BTreeMap<GroupKey, Vec<&VolumeResult>> = BTreeMap::new();
        for r in sorted {
            let key = GroupKey { track: r.track, acceleration: r.acceleration, mask_kind: r.mask_kind };
            groups.entry(key).or_default().push(r);
        }

        let mut rows = Vec::new();
        for (key, members) in &groups {
            let labels: BTreeSet<Acquisition> = members.iter().map(|r| r.acquisition).collect();
            let mut subsets: Vec<(String, Vec<&VolumeResult>)> = vec![(ALL_ACQUISITIONS.to_string(), members.clone())];
            if labels.len() > 1 {
                for label in labels {
                    let sub = members.iter().filter(|r| r.acquisition == label).copied().collect();
                    subsets.push((label.to_string(), sub));
                }
            }
            for (acquisition, subset) in subsets {
                let mut methods: Vec<&Method> = Vec::new();
                for r in &subset {
                    if !methods.contains(&&r.method) {
                        methods.push(&r.method);
                    }
                }
                methods.sort_by(|a, b| a.order(b));
                for method in methods {
                    let of_method: Vec<&VolumeResult> = subset.iter().filter(|r| &r.method == method).copied().collect();
                    let (nmse, psnr_db, ssim, l1, psnr_infinite) = mean_row(&of_method);
                    rows.push(TableRow {
                        track: key.track,
                        acceleration: key.acceleration,
                        mask_kind: key.mask_kind,
                        acquisition: acquisition.clone(),
                        method: method.clone(),
                        volumes: of_method.len(),
                        nmse,
                        psnr_db,
                        ssim,
                        l1,
                        psnr_infinite,
                        best: BestFlags::default(),
                    });
                }
            }
        }
        rows.sort_by(|a, b| a.order(b));
        mark_best(&mut rows);
        failures.sort();
        ResultTable { metrics, rows, failures }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Flags the extremum of NMSE (min), PSNR and SSIM (max) within every
/// (track, acceleration, mask kind, acquisition) group. Ties are all flagged;
/// NaN never wins.
pub fn mark_best(rows: &mut [TableRow]) {
    let mut groups: BTreeMap<(GroupKey, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry((r.key(), r.acquisition.clone())).or_default().push(i);
    }
    for r in rows.iter_mut() {
        r.best = BestFlags::default();
    }
    for members in groups.values() {
        for m in Metric::TABLE {
            let values = members.iter().map(|&i| rows[i].value(m)).filter(|v| !v.is_nan());
            let best = if m.lower_is_better() {
                values.fold(f64::INFINITY, f64::min)
            } else {
                values.fold(f64::NEG_INFINITY, f64::max)
            };
            for &i in members {
                if rows[i].value(m) == best {
                    rows[i].best.set(m);
                }
            }
        }
    }
}
