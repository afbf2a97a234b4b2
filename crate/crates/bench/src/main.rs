use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csmri_bench::run::save_evaluation;
use csmri_bench::{
    emit_all, emit_report, load_table, mask_corpus, run_plan, score_external, simulate, BenchError, CorpusConfig,
    ExperimentPlan, ExternalRun, ReportFormat,
};
use csmri_core::masking::{MaskKind, MaskPolicy};
use csmri_core::CropSpec;
use csmri_io::Track;
use log::{info, warn};

#[derive(Parser)]
#[command(name = "csmri-bench", version, about = "Accelerated MRI reconstruction benchmark")]
struct Cli {
    /// Root seed; overrides the seed in config and plan files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom corpus from a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write masked, test-style copies of a corpus track.
    Mask {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "singlecoil")]
        track: Track,
        #[arg(long, default_value_t = 4)]
        acceleration: usize,
        #[arg(long, default_value = "random")]
        kind: MaskKind,
        /// Defaults to the canonical fraction for the acceleration.
        #[arg(long)]
        center_fraction: Option<f64>,
    },
    /// Run a reconstruction plan.
    Reconstruct {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Score reconstructions produced elsewhere against corpus ground truth.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        recon_dir: PathBuf,
        #[arg(long, default_value = "singlecoil")]
        track: Track,
        #[arg(long, default_value_t = 4)]
        acceleration: u32,
        #[arg(long, default_value = "random")]
        kind: MaskKind,
        #[arg(long, default_value = "external")]
        model: String,
        /// Crop as HEIGHTxWIDTH; defaults to the target extents.
        #[arg(long, value_parser = parse_crop)]
        crop: Option<CropSpec>,
    },
    /// Re-render a structured report.
    Report {
        #[arg(long)]
        table: PathBuf,
        /// text, delimited, structured or all.
        #[arg(long, default_value = "all")]
        format: String,
    },
}

fn parse_crop(s: &str) -> Result<CropSpec, String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HEIGHTxWIDTH")?;
    let h = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    Ok(CropSpec::new(h, w))
}

fn run(cli: Cli) -> Result<(), BenchError> {
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Simulate { config } => {
            let mut cfg = CorpusConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = out("corpus");
            let ids = simulate(&cfg, &dir)?;
            info!("wrote {} volumes to {}", ids.len(), dir.display());
        }
        Command::Mask { corpus, track, acceleration, kind, center_fraction } => {
            let policy = match center_fraction {
                Some(f) => MaskPolicy::new(acceleration, f, kind),
                None => MaskPolicy::canonical(acceleration, kind),
            };
            let dir = out("masked");
            let ids = mask_corpus(&corpus, track, policy, cli.seed.unwrap_or(0), &dir)?;
            info!("wrote {} masked volumes to {}", ids.len(), dir.display());
        }
        Command::Reconstruct { plan } => {
            let mut plan = ExperimentPlan::load(&plan)?;
            if let Some(s) = cli.seed {
                plan.seed = s;
            }
            if let Some(o) = &cli.out {
                plan.output = o.clone();
            }
            let output = run_plan(&plan)?;
            report_summary(output.table.rows.len(), output.table.failures.len(), &plan.output);
        }
        Command::Evaluate { corpus, recon_dir, track, acceleration, kind, model, crop } => {
            let run = ExternalRun { recon_dir, model, track, acceleration, mask_kind: kind };
            let output = score_external(&run, &corpus, crop)?;
            let dir = out("evaluation");
            save_evaluation(&output, &dir)?;
            report_summary(output.table.rows.len(), output.table.failures.len(), &dir);
        }
        Command::Report { table, format } => {
            let t = load_table(&table)?;
            let dir = out("report");
            if format.eq_ignore_ascii_case("all") {
                emit_all(&t, &dir)?;
            } else {
                let f: ReportFormat = format.parse().map_err(BenchError::InvalidPlan)?;
                emit_report(&t, f, &dir)?;
            }
        }
    }
    Ok(())
}

fn report_summary(rows: usize, failures: usize, dir: &std::path::Path) {
    if rows == 0 {
        warn!("empty result table");
    }
    if failures > 0 {
        warn!("{failures} volume failures, see the report in {}", dir.display());
    }
    info!("{rows} table rows written to {}", dir.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
