//! Per-stage latency measurement of the preprocessing pipeline.
//!
//! Stages are timed with a monotonic clock, warmup iterations are dropped, and
//! the mean of the per-scan stage sum is compared to a millisecond budget.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::backends::Segmenter;
use crate::dataset::decode_point_cloud;
use crate::error::{Error, Result};
use crate::normals::{compute_normals_with, NormalConfig};
use crate::projection::{build_range_image, SphericalProjectionModel};

/// Tolerable latency of a standalone segmentation block (20+ FPS).
pub const STANDALONE_BUDGET_MS: f64 = 50.0;
/// Budget with headroom left for downstream decision systems (40+ FPS).
pub const HEADROOM_BUDGET_MS: f64 = 25.0;

pub const STAGE_INGEST: &str = "ingest";
pub const STAGE_PROJECT: &str = "project";
pub const STAGE_NORMALS: &str = "normals";
pub const STAGE_SEGMENT: &str = "segment";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageStats {
    pub stage: String,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
}

impl StageStats {
    pub fn from_samples(stage: impl Into<String>, samples_ms: &[f64]) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::EmptyInput("no timing samples"));
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Ok(Self {
            stage: stage.into(),
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p99_ms: percentile_nearest_rank(&sorted, 0.99),
        })
    }
}

/// Nearest-rank percentile of ascending `sorted`.
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    pub stages: Vec<StageStats>,
    /// Statistics of the per-scan sum over all stages.
    pub total: StageStats,
    pub scans_processed: usize,
    pub fps: f64,
    pub budget_ms: f64,
    pub passed: bool,
}

impl LatencyReport {
    /// `per_stage[k][i]` is the time of stage `k` on measured scan `i`.
    pub fn from_samples(names: &[&str], per_stage: &[Vec<f64>], budget_ms: f64) -> Result<Self> {
        let scans = per_stage.first().map_or(0, Vec::len);
        if scans == 0 {
            return Err(Error::EmptyInput("no scans were measured"));
        }
        if names.len() != per_stage.len() || per_stage.iter().any(|s| s.len() != scans) {
            return Err(Error::InvalidArgument("ragged stage samples".into()));
        }
        let stages = names
            .iter()
            .zip(per_stage)
            .map(|(n, s)| StageStats::from_samples(*n, s))
            .collect::<Result<Vec<_>>>()?;
        let totals: Vec<f64> = (0..scans)
            .map(|i| per_stage.iter().map(|s| s[i]).sum())
            .collect();
        let total = StageStats::from_samples("total", &totals)?;
        Ok(Self {
            fps: 1000.0 / total.mean_ms,
            passed: total.mean_ms <= budget_ms,
            stages,
            total,
            scans_processed: scans,
            budget_ms,
        })
    }

    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

/// Where the benchmark reads its scans from; in-memory sources time only the
/// decode step as ingest.
#[derive(Clone, Debug)]
pub enum ScanSource {
    Memory(Vec<Vec<u8>>),
    Files(Vec<PathBuf>),
}

impl ScanSource {
    fn len(&self) -> usize {
        match self {
            ScanSource::Memory(v) => v.len(),
            ScanSource::Files(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub warmup: usize,
    pub repetitions: usize,
    pub budget_ms: f64,
    pub normals: NormalConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup: 10,
            repetitions: 100,
            budget_ms: HEADROOM_BUDGET_MS,
            normals: NormalConfig::default(),
        }
    }
}

fn read_into(path: &std::path::Path, buf: &mut Vec<u8>) -> std::io::Result<()> {
    use std::io::Read;
    buf.clear();
    std::fs::File::open(path)?.read_to_end(buf)?;
    Ok(())
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs `warmup + repetitions` single-threaded pipeline passes, cycling over
/// the source scans, and reports the measured passes.
pub fn run_pipeline(
    source: &ScanSource,
    model: &SphericalProjectionModel,
    segmenter: Option<&dyn Segmenter>,
    cfg: &BenchConfig,
) -> Result<LatencyReport> {
    if source.len() == 0 {
        return Err(Error::EmptyInput("no scans to benchmark"));
    }
    if cfg.repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
    }
    let mut names = vec![STAGE_INGEST, STAGE_PROJECT, STAGE_NORMALS];
    if segmenter.is_some() {
        names.push(STAGE_SEGMENT);
    }
    let mut samples = vec![Vec::with_capacity(cfg.repetitions); names.len()];
    // A streaming reader keeps its buffer between scans.
    let mut buf = Vec::new();
    for iter in 0..cfg.warmup + cfg.repetitions {
        let k = iter % source.len();
        let t = Instant::now();
        let cloud = match source {
            ScanSource::Memory(v) => decode_point_cloud(&v[k])?.cloud,
            ScanSource::Files(v) => {
                read_into(&v[k], &mut buf).map_err(|e| Error::from(e).in_file(&v[k]))?;
                decode_point_cloud(&buf).map_err(|e| e.in_file(&v[k]))?.cloud
            }
        };
        let t_ingest = ms_since(t);

        let t = Instant::now();
        let image = build_range_image(&cloud, model)?;
        let t_project = ms_since(t);

        let t = Instant::now();
        let normals = compute_normals_with(&image, &cfg.normals);
        let t_normals = ms_since(t);

        let t_segment = match segmenter {
            Some(s) => {
                let t = Instant::now();
                let seg = s.segment(&image, &normals)?;
                std::hint::black_box(&seg);
                Some(ms_since(t))
            }
            None => None,
        };
        std::hint::black_box(&normals);

        if iter >= cfg.warmup {
            samples[0].push(t_ingest);
            samples[1].push(t_project);
            samples[2].push(t_normals);
            if let Some(s) = t_segment {
                samples[3].push(s);
            }
        }
    }
    LatencyReport::from_samples(&names, &samples, cfg.budget_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::GeometricBaseline;
    use crate::dataset::encode_point_cloud;
    use crate::projection::SensorPreset;
    use crate::synthetic::{enclosure, SceneLabels};

    #[test]
    fn stats_on_known_samples() {
        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = StageStats::from_samples("x", &samples).unwrap();
        assert_eq!(s.mean_ms, 50.5);
        assert_eq!(s.median_ms, 50.5);
        assert_eq!(s.p99_ms, 99.0);
        let s = StageStats::from_samples("x", &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.median_ms, s.p99_ms), (2.0, 3.0));
        assert!(StageStats::from_samples("x", &[]).is_err());
    }

    #[test]
    fn budget_comparison() {
        let r = LatencyReport::from_samples(&["a", "b"], &[vec![5.0; 4], vec![7.0; 4]], 25.0).unwrap();
        assert!(r.passed);
        assert_eq!(r.total.mean_ms, 12.0);
        assert!((r.fps - 1000.0 / 12.0).abs() < 1e-12);
        let r = LatencyReport::from_samples(&["a"], &[vec![30.0]], 25.0).unwrap();
        assert!(!r.passed);
        assert!(LatencyReport::from_samples(&["a"], &[vec![]], 25.0).is_err());
    }

    #[test]
    fn pipeline_reports_each_stage() {
        let model = SphericalProjectionModel::preset(SensorPreset::Hdl64_512);
        let labels = SceneLabels { ground: 8, wall: 12, object: 0 };
        let scan = enclosure(labels).scan(&model).unwrap();
        let source = ScanSource::Memory(vec![encode_point_cloud(&scan.cloud)]);
        let seg = GeometricBaseline::new(Default::default()).unwrap();
        let cfg = BenchConfig {
            warmup: 2,
            repetitions: 5,
            ..BenchConfig::default()
        };
        let r = run_pipeline(&source, &model, Some(&seg), &cfg).unwrap();
        assert_eq!(r.scans_processed, 5);
        let names: Vec<_> = r.stages.iter().map(|s| s.stage.as_str()).collect();
        assert_eq!(names, ["ingest", "project", "normals", "segment"]);
        assert!(r.total.p99_ms >= r.total.median_ms && r.total.median_ms >= 0.0);
    }

    #[test]
    fn pipeline_rejects_empty_and_zero_reps() {
        let model = SphericalProjectionModel::preset(SensorPreset::Hdl64_512);
        let cfg = BenchConfig::default();
        assert!(run_pipeline(&ScanSource::Memory(vec![]), &model, None, &cfg).is_err());
        let cfg = BenchConfig {
            repetitions: 0,
            ..cfg
        };
        let src = ScanSource::Memory(vec![vec![0; 16]]);
        assert!(run_pipeline(&src, &model, None, &cfg).is_err());
    }
}
