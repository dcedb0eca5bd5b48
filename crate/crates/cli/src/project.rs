//! `rangekit project`: per-scan reflectivity, normal and label panels.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use rangekit::backends::{network_input, GeometricBaseline, GeometricBaselineConfig, Segmenter};
use rangekit::dataset::{project_cloud_labels, read_labels, read_point_cloud};
use rangekit::normals::compute_normals;
use rangekit::projection::build_range_image;
use rangekit::render::{save_png, ScanPanels};

use crate::inputs::ScanDir;
use crate::records::print_records;
use crate::{CommonArgs, Outcome, Settings};

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Sequence directory (with velodyne/) or a directory of .bin scans.
    pub input: PathBuf,
    /// Also write the 8-channel network input as `<stem>_input.bin`
    /// (f32 little-endian, channel-major).
    #[arg(long)]
    pub dump_channels: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Serialize)]
pub struct ProjectRecord {
    pub scan: String,
    pub width: usize,
    pub height: usize,
    pub points: usize,
    pub valid_pixels: usize,
    pub valid_normals: usize,
    /// `ground-truth` or the backend that produced the label panel.
    pub labels: String,
}

pub fn run(args: &ProjectArgs) -> anyhow::Result<Outcome> {
    let settings = Settings::resolve(&args.common)?;
    let scans = ScanDir::open(&args.input)?;
    if scans.stems.is_empty() {
        bail!("no .bin scans found in {}", args.input.display());
    }
    std::fs::create_dir_all(&settings.output)
        .with_context(|| format!("creating {}", settings.output.display()))?;
    let baseline = GeometricBaselineConfig::for_schema(&settings.schema).and_then(GeometricBaseline::new);

    let process = |stem: &String| -> anyhow::Result<ProjectRecord> {
        let cloud = read_point_cloud(scans.scan_path(stem))?;
        let image = build_range_image(&cloud, &settings.model)?;
        let normals = compute_normals(&image);
        let (labels, source) = match scans.existing_label(stem) {
            Some(path) => {
                let raw = read_labels(&path, cloud.len(), &settings.schema)?;
                let train = settings.schema.remap_to_train(&raw)?;
                let img = project_cloud_labels(&train, &cloud, &image, settings.schema.ignore_index())?;
                (img, "ground-truth".to_string())
            }
            None => {
                let b = baseline
                    .as_ref()
                    .map_err(|e| anyhow::anyhow!("no labels and no geometric baseline for this schema: {e}"))?;
                (b.segment(&image, &normals)?.labels, b.descriptor().name)
            }
        };
        let panels = ScanPanels::render(&image, &normals, &labels, &settings.schema);
        let out = |suffix: &str| settings.output.join(format!("{stem}_{suffix}"));
        save_png(out("reflectivity.png"), &panels.reflectivity)?;
        save_png(out("normals.png"), &panels.normals)?;
        save_png(out("labels.png"), &panels.labels)?;
        save_png(out("stacked.png"), &panels.stacked())?;
        if args.dump_channels {
            let tensor = network_input(&image, &normals)?;
            let path = out("input.bin");
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            for v in tensor {
                f.write_all(&v.to_le_bytes())?;
            }
            f.flush().with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(ProjectRecord {
            scan: stem.clone(),
            width: image.width(),
            height: image.height(),
            points: cloud.len(),
            valid_pixels: image.valid_count(),
            valid_normals: normals.valid_count(),
            labels: source,
        })
    };

    let results: Vec<_> = settings.install(|| {
        if settings.parallel {
            scans.stems.par_iter().map(process).collect()
        } else {
            scans.stems.iter().map(process).collect()
        }
    })?;
    let mut outcome = Outcome::default();
    let mut records = Vec::new();
    for (stem, r) in scans.stems.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => outcome.failures.push(format!("scan {stem}: {e:#}")),
        }
    }
    print_records(settings.format, &records)?;
    Ok(outcome)
}
