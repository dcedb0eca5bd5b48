mod common;

use std::path::Path;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangekit::backends::write_predictions;
use rangekit::ClassSchema;

fn write_preds(dir: &Path, per_scan: &[Vec<u16>]) {
    std::fs::create_dir_all(dir).unwrap();
    for (k, p) in per_scan.iter().enumerate() {
        write_predictions(dir.join(format!("{k:06}.label")), p).unwrap();
    }
}

fn iou_rows(out: &Path) -> Vec<(String, Option<f64>, u64)> {
    csv_rows(&std::fs::read_to_string(out.join("eval.csv")).unwrap())
        .iter()
        .map(|r| (r[0].to_string(), r[1].parse().ok(), r[2].parse().unwrap()))
        .collect()
}

#[test]
fn perfect_predictions_score_100() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    let truth = write_sequence(&seq, 3, 500, 20);
    let ignore = ClassSchema::semantic_thab().ignore_index();
    let preds: Vec<Vec<u16>> = truth
        .iter()
        .map(|t| t.iter().map(|&l| if l == ignore { 0 } else { l }).collect())
        .collect();
    write_preds(&tmp.path().join("pred"), &preds);
    let out = out_dir(tmp.path());
    let o = rangekit(&[
        "eval",
        "--predictions",
        path(&tmp.path().join("pred")),
        "--ground-truth",
        path(&seq),
        "--output",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    let header: Vec<_> = lines[0].split('|').map(str::trim).collect();
    assert_eq!(&header[..5], ["car", "person", "road", "sidewalk", "building"], "{text}");
    assert_eq!(*header.last().unwrap(), "mIoU");
    assert!(lines[1].trim_end().ends_with("100.00"), "{text}");
    assert!(lines[2].ends_with(": 100.00"), "{text}");
    for (name, iou, _) in iou_rows(&out) {
        assert!(iou.is_none() || iou == Some(1.0), "{name}");
    }
}

#[test]
fn single_scan_matches_tally_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    let truth = write_sequence(&seq, 1, 4000, 21);
    let schema = ClassSchema::semantic_thab();
    let c = schema.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    // Agree often enough that most classes have a nonzero intersection.
    let pred: Vec<u16> = truth[0]
        .iter()
        .map(|&t| {
            if t != schema.ignore_index() && rng.gen_bool(0.5) {
                t
            } else {
                rng.gen_range(0..c as u16)
            }
        })
        .collect();
    write_preds(&tmp.path().join("pred"), std::slice::from_ref(&pred));
    let out = out_dir(tmp.path());
    let o = rangekit(&[
        "eval",
        "--predictions",
        path(&tmp.path().join("pred")),
        "--ground-truth",
        path(&seq),
        "--output",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let rows = iou_rows(&out);
    let mut present = Vec::new();
    for k in 0..c as u16 {
        let (mut tp, mut fp, mut fn_, mut support) = (0u64, 0u64, 0u64, 0u64);
        for (&p, &t) in pred.iter().zip(&truth[0]) {
            if t == schema.ignore_index() {
                continue;
            }
            match (p == k, t == k) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
            support += u64::from(t == k);
        }
        let union = tp + fp + fn_;
        let expect = (union > 0).then(|| tp as f64 / union as f64);
        let (name, iou, sup) = &rows[usize::from(k)];
        assert_eq!(name, schema.class_name(k).unwrap());
        assert_eq!(*iou, expect, "{name}");
        assert_eq!(*sup, support, "{name}");
        present.extend(expect);
    }
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    let all = rows.iter().find(|r| r.0 == "mIoU(all)").unwrap();
    assert!((all.1.unwrap() - miou).abs() < 1e-12);
}

#[test]
fn disjoint_stems_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    write_sequence(&seq, 2, 10, 23);
    let pred = tmp.path().join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    write_predictions(pred.join("000007.label"), &[0; 10]).unwrap();
    let o = rangekit(&["eval", "--predictions", path(&pred), "--ground-truth", path(&seq)]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("missing predictions for: 000000, 000001"), "{err}");
    assert!(err.contains("missing ground truth for: 000007"), "{err}");
}

#[test]
fn pixel_domain_and_explicit_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("seq");
    let truth = write_sequence(&seq, 2, 3000, 24);
    let schema = ClassSchema::semantic_thab();
    let preds: Vec<Vec<u16>> = truth
        .iter()
        .map(|t| t.iter().map(|&l| if l == schema.ignore_index() { 0 } else { l }).collect())
        .collect();
    write_preds(&tmp.path().join("pred"), &preds);
    let o = rangekit(&[
        "eval",
        "--predictions",
        path(&tmp.path().join("pred")),
        "--ground-truth",
        path(&seq),
        "--domain",
        "pixels",
        "--classes",
        "road,car",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let header: Vec<_> = text.lines().next().unwrap().split('|').map(str::trim).collect();
    assert_eq!(header, ["road", "car", "mIoU"]);
    assert!(text.lines().nth(1).unwrap().trim_end().ends_with("100.00"));

    let bad = rangekit(&[
        "eval",
        "--predictions",
        path(&tmp.path().join("pred")),
        "--ground-truth",
        path(&seq),
        "--classes",
        "road,spaceship",
    ]);
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("spaceship"));
}
