//! `rangekit eval`: IoU of prediction files against ground-truth labels.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use rangekit::backends::load_predictions;
use rangekit::dataset::{project_labels, read_labels_unchecked, read_point_cloud};
use rangekit::evaluation::{ConfusionMatrix, EvalReport};
use rangekit::projection::build_range_image;
use rangekit::ClassSchema;

use crate::inputs::{LabelDir, ScanDir};
use crate::records::save_records;
use crate::{CommonArgs, Outcome, Settings};

/// Column order of the results table.
pub const DEFAULT_CLASSES: [&str; 9] = [
    "car",
    "person",
    "road",
    "sidewalk",
    "building",
    "vegetation",
    "terrain",
    "pole",
    "traffic-indicator",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Domain {
    /// Score every labeled point.
    #[default]
    Points,
    /// Score range-image pixels (nearest point per pixel).
    Pixels,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Label files holding predicted train indices (or a sequence with predictions/).
    #[arg(long)]
    pub predictions: PathBuf,
    /// Ground-truth sequence (labels/, plus velodyne/ for the pixel domain).
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long, value_enum)]
    pub domain: Option<Domain>,
    /// Comma-separated class names for the table and the selected mIoU.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct IouRecord {
    pub class: String,
    pub iou: Option<f64>,
    pub support: u64,
}

/// Stems present on one side only, as an error message.
pub fn stem_mismatch(predicted: &[String], truth: &[String]) -> Option<String> {
    let p: BTreeSet<_> = predicted.iter().collect();
    let t: BTreeSet<_> = truth.iter().collect();
    let join = |s: Vec<&&String>| s.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(", ");
    let no_pred: Vec<_> = t.difference(&p).collect();
    let no_truth: Vec<_> = p.difference(&t).collect();
    let mut msg = String::new();
    if !no_pred.is_empty() {
        let _ = write!(msg, "missing predictions for: {}", join(no_pred));
    }
    if !no_truth.is_empty() {
        if !msg.is_empty() {
            msg.push_str("; ");
        }
        let _ = write!(msg, "missing ground truth for: {}", join(no_truth));
    }
    (!msg.is_empty()).then_some(msg)
}

/// Train indices of the requested class names. Names from the default list
/// that the schema lacks are skipped; explicitly requested ones are an error.
pub fn resolve_classes(schema: &ClassSchema, requested: Option<&[String]>) -> anyhow::Result<Vec<(String, usize)>> {
    match requested {
        Some(names) => names
            .iter()
            .map(|n| {
                schema
                    .class_index(n)
                    .map(|i| (n.clone(), usize::from(i)))
                    .with_context(|| format!("class {n:?} is not in the schema"))
            })
            .collect(),
        None => Ok(DEFAULT_CLASSES
            .iter()
            .filter_map(|&n| match schema.class_index(n) {
                Some(i) => Some((n.to_string(), usize::from(i))),
                None => {
                    log::warn!("schema has no class {n:?}; left out of the table");
                    None
                }
            })
            .collect()),
    }
}

/// Percent IoU per selected class plus the selected mIoU, one column each.
pub fn format_table(report: &EvalReport, classes: &[(String, usize)]) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
    let mut header = Vec::new();
    let mut values = Vec::new();
    for (name, idx) in classes {
        header.push(name.clone());
        values.push(pct(report.class_scores()[*idx].iou()));
    }
    let indices: Vec<usize> = classes.iter().map(|c| c.1).collect();
    header.push("mIoU".into());
    values.push(pct(report.miou_over(&indices)));
    let widths: Vec<usize> = header.iter().zip(&values).map(|(h, v)| h.len().max(v.len())).collect();
    let row = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let present = report.class_scores().iter().filter(|s| s.iou().is_some()).count();
    format!(
        "{}\n{}\nmIoU over all {present} present classes: {}\n",
        row(&header),
        row(&values),
        pct(report.miou())
    )
}

pub fn records(report: &EvalReport, schema: &ClassSchema, classes: &[(String, usize)]) -> Vec<IouRecord> {
    let mut out: Vec<IouRecord> = report
        .class_scores()
        .iter()
        .enumerate()
        .map(|(k, s)| IouRecord {
            class: schema.class_name(k as u16).unwrap_or("?").to_string(),
            iou: s.iou(),
            support: s.support(),
        })
        .collect();
    let total = report.class_scores().iter().map(|s| s.support()).sum();
    let indices: Vec<usize> = classes.iter().map(|c| c.1).collect();
    out.push(IouRecord {
        class: "mIoU(selected)".into(),
        iou: report.miou_over(&indices),
        support: total,
    });
    out.push(IouRecord {
        class: "mIoU(all)".into(),
        iou: report.miou(),
        support: total,
    });
    out
}

pub fn run(args: &EvalArgs) -> anyhow::Result<Outcome> {
    let settings = Settings::resolve(&args.common)?;
    let schema = &settings.schema;
    let domain = match (args.domain, settings.config.eval.domain.as_deref()) {
        (Some(d), _) => d,
        (None, Some(name)) => Domain::from_str(name, true).map_err(|e| anyhow::anyhow!("eval.domain: {e}"))?,
        (None, None) => Domain::default(),
    };
    let requested = args.classes.clone().or_else(|| settings.config.eval.classes.clone());
    let classes = resolve_classes(schema, requested.as_deref())?;

    let truth = LabelDir::open(&args.ground_truth, "labels")?;
    let preds = LabelDir::open(&args.predictions, "predictions")?;
    if let Some(msg) = stem_mismatch(&preds.stems, &truth.stems) {
        bail!("prediction and ground-truth file sets differ: {msg}");
    }
    if truth.stems.is_empty() {
        bail!("no .label files in {}", args.ground_truth.display());
    }
    let scans = match domain {
        Domain::Pixels => Some(ScanDir::open(&args.ground_truth)?),
        Domain::Points => None,
    };
    let c = schema.num_classes();

    let per_scan = |stem: &String| -> anyhow::Result<ConfusionMatrix> {
        let raw = read_labels_unchecked(truth.path(stem), None)?;
        let gt = schema.remap_to_train(&raw).with_context(|| format!("{}", truth.path(stem).display()))?;
        let pred = load_predictions(preds.path(stem), gt.len(), c, schema.ignore_index())?;
        let mut cm = ConfusionMatrix::new(c);
        match &scans {
            None => cm.add_labels(&pred, &gt)?,
            Some(scans) => {
                let cloud = read_point_cloud(scans.scan_path(stem))?;
                if cloud.len() != gt.len() {
                    bail!("scan has {} points but labels have {}", cloud.len(), gt.len());
                }
                let image = build_range_image(&cloud, &settings.model)?;
                let ignore = schema.ignore_index();
                cm.add_images(&project_labels(&pred, &image, ignore)?, &project_labels(&gt, &image, ignore)?)?;
            }
        }
        Ok(cm)
    };
    let results: Vec<_> = settings.install(|| {
        if settings.parallel {
            truth.stems.par_iter().map(per_scan).collect()
        } else {
            truth.stems.iter().map(per_scan).collect()
        }
    })?;

    let mut outcome = Outcome::default();
    let mut total = ConfusionMatrix::new(c);
    for (stem, r) in truth.stems.iter().zip(results) {
        match r {
            Ok(cm) => total.merge(&cm)?,
            Err(e) => outcome.failures.push(format!("scan {stem}: {e:#}")),
        }
    }
    let report = total.report();
    print!("{}", format_table(&report, &classes));
    if settings.output_given {
        let path = save_records(&settings.output, "eval", settings.format, &records(&report, schema, &classes))?;
        log::info!("wrote {}", path.display());
    }
    Ok(outcome)
}
