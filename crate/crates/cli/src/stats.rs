//! `rangekit stats`: per-class point counts of labeled sequences.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use rangekit::dataset::{read_labels, ClassDistribution, POINT_RECORD_BYTES};
use rangekit::render::{distribution_chart, save_png};
use rangekit::ClassSchema;

use crate::inputs::ScanDir;
use crate::records::{print_records, save_records};
use crate::{CommonArgs, Outcome, Settings};

pub const POOLED: &str = "pooled";

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// One or more sequence directories (velodyne/ and labels/).
    #[arg(required = true)]
    pub sequences: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ClassRecord {
    pub sequence: String,
    pub class_name: String,
    pub count: u64,
    pub frequency: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SequenceRecord {
    pub sequence: String,
    pub scans: usize,
    pub points: u64,
    /// Points carrying a train class (the ignore label excluded).
    pub labeled_points: u64,
}

fn class_records(sequence: &str, dist: &ClassDistribution, schema: &ClassSchema) -> Vec<ClassRecord> {
    dist.counts()
        .iter()
        .zip(dist.frequencies())
        .enumerate()
        .map(|(k, (&count, frequency))| ClassRecord {
            sequence: sequence.to_string(),
            class_name: schema.class_name(k as u16).unwrap_or("?").to_string(),
            count,
            frequency,
        })
        .collect()
}

/// Points of a scan, from the size of its record file.
fn point_count(path: &std::path::Path) -> anyhow::Result<usize> {
    let len = std::fs::metadata(path).with_context(|| format!("reading {}", path.display()))?.len() as usize;
    if !len.is_multiple_of(POINT_RECORD_BYTES) {
        bail!("{} is not a whole number of point records", path.display());
    }
    Ok(len / POINT_RECORD_BYTES)
}

pub fn run(args: &StatsArgs) -> anyhow::Result<Outcome> {
    let settings = Settings::resolve(&args.common)?;
    let schema = &settings.schema;
    let mut outcome = Outcome::default();
    let mut class_rows = Vec::new();
    let mut sequence_rows = Vec::new();
    let mut pooled = ClassDistribution::new(schema.num_classes());
    let mut pooled_scans = 0;
    let mut pooled_points = 0;

    for dir in &args.sequences {
        let seq = ScanDir::open(dir)?;
        let per_scan = |stem: &String| -> anyhow::Result<(usize, ClassDistribution)> {
            let label = seq.label_path(stem);
            if !label.is_file() {
                bail!("missing label file {}", label.display());
            }
            let n = point_count(&seq.scan_path(stem))?;
            let raw = read_labels(&label, n, schema)?;
            let mut d = ClassDistribution::new(schema.num_classes());
            d.add(&schema.remap_to_train(&raw)?);
            Ok((n, d))
        };
        let results: Vec<_> = settings.install(|| {
            if settings.parallel {
                seq.stems.par_iter().map(per_scan).collect()
            } else {
                seq.stems.iter().map(per_scan).collect()
            }
        })?;
        let mut dist = ClassDistribution::new(schema.num_classes());
        let mut points = 0u64;
        for (stem, r) in seq.stems.iter().zip(results) {
            match r {
                Ok((n, d)) => {
                    points += n as u64;
                    dist.merge(&d);
                }
                Err(e) => outcome.failures.push(format!("sequence {} scan {stem}: {e:#}", seq.name)),
            }
        }
        class_rows.extend(class_records(&seq.name, &dist, schema));
        sequence_rows.push(SequenceRecord {
            sequence: seq.name.clone(),
            scans: seq.stems.len(),
            points,
            labeled_points: dist.total(),
        });
        pooled.merge(&dist);
        pooled_scans += seq.stems.len();
        pooled_points += points;
    }
    if args.sequences.len() > 1 {
        class_rows.extend(class_records(POOLED, &pooled, schema));
        sequence_rows.push(SequenceRecord {
            sequence: POOLED.into(),
            scans: pooled_scans,
            points: pooled_points,
            labeled_points: pooled.total(),
        });
    }

    let out = &settings.output;
    save_records(out, "distribution", settings.format, &class_rows)?;
    save_records(out, "scans", settings.format, &sequence_rows)?;
    save_png(out.join("distribution.png"), &distribution_chart(&pooled, schema))?;
    print_records(settings.format, &sequence_rows)?;
    Ok(outcome)
}
