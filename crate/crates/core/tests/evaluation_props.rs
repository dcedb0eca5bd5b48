use proptest::prelude::*;

use rangekit::dataset::LabelImage;
use rangekit::evaluation::{cross_entropy, tversky, ConfusionMatrix, LossParams, ProbabilityImage};

const IGNORE: u16 = 255;

fn label_pair(classes: u16, n: usize) -> impl Strategy<Value = (Vec<u16>, Vec<u16>)> {
    (
        prop::collection::vec(prop_oneof![9 => 0..classes, 1 => Just(IGNORE)], n),
        prop::collection::vec(0..classes, n),
    )
}

fn image(labels: Vec<u16>) -> LabelImage {
    let n = labels.len();
    LabelImage::new(n, 1, labels, vec![true; n], IGNORE).unwrap()
}

/// Row-normalized random weights as a probability image of `n x 1` pixels.
fn probabilities(classes: usize, n: usize) -> impl Strategy<Value = ProbabilityImage> {
    prop::collection::vec(0.01f64..1.0, classes * n).prop_map(move |raw| {
        let data = raw
            .chunks(classes)
            .flat_map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(move |r| r / s).collect::<Vec<_>>()
            })
            .collect();
        ProbabilityImage::new(n, 1, classes, data).unwrap()
    })
}

proptest! {
    /// Splitting a set of scans in any way and merging the partial matrices
    /// gives the matrix of the whole set.
    #[test]
    fn accumulation_is_associative(
        scans in prop::collection::vec(label_pair(5, 24), 1..6),
        split in any::<prop::sample::Index>(),
    ) {
        let imgs: Vec<_> = scans.into_iter().map(|(t, p)| (image(p), image(t))).collect();
        let mut whole = ConfusionMatrix::new(5);
        for (p, t) in &imgs {
            whole.add_images(p, t).unwrap();
        }
        let k = split.index(imgs.len() + 1);
        let (mut left, mut right) = (ConfusionMatrix::new(5), ConfusionMatrix::new(5));
        for (p, t) in &imgs[..k] {
            left.add_images(p, t).unwrap();
        }
        for (p, t) in imgs[k..].iter().rev() {
            right.add_images(p, t).unwrap();
        }
        right.merge(&left).unwrap();
        prop_assert_eq!(&right, &whole);
        let scored: u64 = imgs.iter().map(|(_, t)| t.labels().iter().filter(|&&l| l != IGNORE).count() as u64).sum();
        prop_assert_eq!(whole.total(), scored);
    }

    #[test]
    fn iou_is_bounded((truth, pred) in label_pair(7, 64)) {
        let report = ConfusionMatrix::new(7).accumulate(&image(pred), &image(truth.clone())).unwrap().report();
        for (c, s) in report.class_scores().iter().enumerate() {
            match s.iou() {
                Some(v) => prop_assert!((0.0..=1.0).contains(&v)),
                None => prop_assert_eq!(s.union(), 0, "class {}", c),
            }
        }
        if let Some(m) = report.miou() {
            prop_assert!((0.0..=1.0).contains(&m));
        }
        let perfect = ConfusionMatrix::new(7)
            .accumulate(&image(truth.iter().map(|&t| if t == IGNORE { 0 } else { t }).collect()), &image(truth.clone()))
            .unwrap()
            .report();
        prop_assert!(perfect.miou().is_none_or(|m| m == 1.0));
    }

    /// Cross-entropy is a mean over pixels, so shuffling pixels keeps it.
    #[test]
    fn cross_entropy_ignores_pixel_order(
        (probs, truth) in (probabilities(4, 30), prop::collection::vec(prop_oneof![0u16..4, Just(IGNORE)], 30)),
        shift in 0usize..30,
    ) {
        let weights = [1.0, 0.5, 2.0, 1.5];
        let a = cross_entropy(&probs, &image(truth.clone()), &weights).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..30).map(|i| probs.pixel(i).to_vec()).collect();
        rows.rotate_left(shift);
        let mut labels = truth.clone();
        labels.rotate_left(shift);
        let moved = ProbabilityImage::new(30, 1, 4, rows.concat()).unwrap();
        let b = cross_entropy(&moved, &image(labels), &weights).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(a >= 0.0);
    }

    /// Raising beta weighs the (always positive) soft false negatives more.
    #[test]
    fn tversky_grows_with_beta(
        (probs, truth) in (probabilities(3, 20), prop::collection::vec(0u16..3, 20)),
        b0 in 0.0f64..1.0, step in 0.05f64..1.0,
    ) {
        let truth = image(truth);
        let mut params = LossParams::new(3);
        params.beta = b0;
        let low = tversky(&probs, &truth, &params).unwrap();
        params.beta = b0 + step;
        let high = tversky(&probs, &truth, &params).unwrap();
        prop_assert!(high > low);
        prop_assert!((0.0..=1.0).contains(&low) && high <= 1.0);
    }
}

#[test]
fn out_of_range_prediction_on_scored_pixel_is_an_error() {
    let mut cm = ConfusionMatrix::new(3);
    assert!(cm.add_labels(&[3], &[0]).is_err());
    assert!(cm.add_labels(&[IGNORE], &[1]).is_err());
    cm.add_labels(&[7], &[IGNORE]).unwrap();
    assert_eq!(cm.total(), 0);
}
