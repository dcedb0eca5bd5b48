//! `rangekit bench`: per-stage latency of the preprocessing pipeline.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use rangekit::backends::{GeometricBaseline, GeometricBaselineConfig, Segmenter};
use rangekit::bench::{run_pipeline, BenchConfig, LatencyReport, ScanSource, HEADROOM_BUDGET_MS};
use rangekit::dataset::{decode_point_cloud, encode_point_cloud};
use rangekit::normals::compute_normals;
use rangekit::projection::build_range_image;
use rangekit::synthetic::{enclosure, urban_block, SceneLabels};

use crate::inputs::ScanDir;
use crate::records::{print_records, save_records};
use crate::settings::thread_cap;
use crate::{CommonArgs, Outcome, Settings};

pub const MIN_WARMUP: usize = 10;
pub const DEFAULT_REPETITIONS: usize = 100;
pub const DEFAULT_SYNTHETIC_SCANS: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    #[default]
    Geometric,
    None,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Scans to time; synthetic scans of the model are generated when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub synthetic_scans: Option<usize>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Budget for the mean per-scan stage sum [default: 25].
    #[arg(long)]
    pub budget_ms: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Untimed passes before measuring (at least 10).
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Exit nonzero when the budget is missed.
    #[arg(long)]
    pub enforce_budget: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// One output line: a stage, the per-scan total, or parallel throughput.
#[derive(Debug, Serialize, PartialEq)]
pub struct BenchRecord {
    pub record: &'static str,
    pub stage: String,
    pub mean_ms: Option<f64>,
    pub median_ms: Option<f64>,
    pub p99_ms: Option<f64>,
    pub scans: usize,
    pub fps: Option<f64>,
    pub budget_ms: Option<f64>,
    pub passed: Option<bool>,
    pub threads: usize,
}

pub fn latency_records(report: &LatencyReport) -> Vec<BenchRecord> {
    let mut out: Vec<BenchRecord> = report
        .stages
        .iter()
        .map(|s| BenchRecord {
            record: "stage",
            stage: s.stage.clone(),
            mean_ms: Some(s.mean_ms),
            median_ms: Some(s.median_ms),
            p99_ms: Some(s.p99_ms),
            scans: report.scans_processed,
            fps: None,
            budget_ms: None,
            passed: None,
            threads: 1,
        })
        .collect();
    out.push(BenchRecord {
        record: "total",
        stage: "total".into(),
        mean_ms: Some(report.total.mean_ms),
        median_ms: Some(report.total.median_ms),
        p99_ms: Some(report.total.p99_ms),
        scans: report.scans_processed,
        fps: Some(report.fps),
        budget_ms: Some(report.budget_ms),
        passed: Some(report.passed),
        threads: 1,
    });
    out
}

fn synthetic_source(settings: &Settings, count: usize) -> anyhow::Result<ScanSource> {
    let schema = &settings.schema;
    let index = |n: &str| schema.class_index(n).unwrap_or(0);
    let labels = SceneLabels {
        ground: index("road"),
        wall: index("building"),
        object: index("car"),
    };
    let mut scans = Vec::with_capacity(count);
    for k in 0..count {
        let scene = if k % 2 == 0 { enclosure(labels) } else { urban_block(labels) };
        scans.push(encode_point_cloud(&scene.scan(&settings.model)?.cloud));
    }
    Ok(ScanSource::Memory(scans))
}

/// Wall-clock scans per second with every pass running concurrently.
fn throughput(
    source: &ScanSource,
    settings: &Settings,
    segmenter: Option<&dyn Segmenter>,
    passes: usize,
) -> anyhow::Result<BenchRecord> {
    let threads = thread_cap()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let one = |k: usize| -> anyhow::Result<()> {
        let cloud = match source {
            ScanSource::Memory(v) => decode_point_cloud(&v[k % v.len()])?.cloud,
            ScanSource::Files(v) => decode_point_cloud(&std::fs::read(&v[k % v.len()])?)?.cloud,
        };
        let image = build_range_image(&cloud, &settings.model)?;
        let normals = compute_normals(&image);
        if let Some(s) = segmenter {
            s.segment(&image, &normals)?;
        }
        Ok(())
    };
    let t = Instant::now();
    pool.install(|| (0..passes).into_par_iter().try_for_each(one))?;
    let secs = t.elapsed().as_secs_f64();
    Ok(BenchRecord {
        record: "throughput",
        stage: "total".into(),
        mean_ms: None,
        median_ms: None,
        p99_ms: None,
        scans: passes,
        fps: Some(passes as f64 / secs),
        budget_ms: None,
        passed: None,
        threads,
    })
}

pub fn run(args: &BenchArgs) -> anyhow::Result<Outcome> {
    let settings = Settings::resolve(&args.common)?;
    let file = &settings.config.bench;
    let repetitions = args.repetitions.or(file.repetitions).unwrap_or(DEFAULT_REPETITIONS);
    let warmup = args.warmup.or(file.warmup).unwrap_or(MIN_WARMUP);
    let budget_ms = args.budget_ms.or(file.budget_ms).unwrap_or(HEADROOM_BUDGET_MS);
    let enforce = args.enforce_budget || file.enforce_budget.unwrap_or(false);
    let backend = match (args.backend, file.backend.as_deref()) {
        (Some(b), _) => b,
        (None, Some(name)) => Backend::from_str(name, true).map_err(|e| anyhow::anyhow!("bench.backend: {e}"))?,
        (None, None) => Backend::default(),
    };
    if repetitions == 0 {
        bail!("--repetitions must be at least 1");
    }
    if warmup < MIN_WARMUP {
        bail!("--warmup must be at least {MIN_WARMUP}");
    }
    if !(budget_ms.is_finite() && budget_ms > 0.0) {
        bail!("--budget-ms must be positive");
    }

    let source = match &args.input {
        Some(dir) => {
            let scans = ScanDir::open(dir)?;
            if scans.stems.is_empty() {
                bail!("no .bin scans found in {}", dir.display());
            }
            ScanSource::Files(scans.stems.iter().map(|s| scans.scan_path(s)).collect())
        }
        None => {
            let n = args.synthetic_scans.or(file.synthetic_scans).unwrap_or(DEFAULT_SYNTHETIC_SCANS);
            if n == 0 {
                bail!("--synthetic-scans must be at least 1");
            }
            synthetic_source(&settings, n)?
        }
    };
    let baseline = match backend {
        Backend::Geometric => Some(GeometricBaseline::new(
            GeometricBaselineConfig::for_schema(&settings.schema).context("geometric backend")?,
        )?),
        Backend::None => None,
    };
    let segmenter = baseline.as_ref().map(|b| b as &dyn Segmenter);
    let cfg = BenchConfig {
        warmup,
        repetitions,
        budget_ms,
        ..BenchConfig::default()
    };
    let report = run_pipeline(&source, &settings.model, segmenter, &cfg)?;
    let mut records = latency_records(&report);
    if settings.parallel {
        records.push(throughput(&source, &settings, segmenter, repetitions)?);
    }
    print_records(settings.format, &records)?;
    if settings.output_given {
        save_records(&settings.output, "bench", settings.format, &records)?;
    }
    Ok(Outcome {
        failures: Vec::new(),
        budget_missed: enforce && !report.passed,
    })
}
