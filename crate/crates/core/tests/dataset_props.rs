use proptest::prelude::*;

use rangekit::dataset::{
    class_distribution, decode_labels, decode_point_cloud, encode_labels, encode_point_cloud,
    ClassDistribution, ClassSchema, PointLabels, TrainIndex,
};
use rangekit::PointCloud;

fn train_labels(schema: &ClassSchema) -> impl Strategy<Value = TrainIndex> {
    let n = schema.num_classes() as TrainIndex;
    prop_oneof![9 => 0..n, 1 => Just(schema.ignore_index())]
}

proptest! {
    #[test]
    fn point_records_round_trip(
        records in prop::collection::vec((prop::array::uniform3(-1e4f32..1e4), 0.0f32..=1.0), 0..200),
    ) {
        let (points, refl): (Vec<_>, Vec<_>) = records.into_iter().unzip();
        let cloud = PointCloud::new(points, refl).unwrap();
        let bytes = encode_point_cloud(&cloud);
        prop_assert_eq!(bytes.len(), 16 * cloud.len());
        let back = decode_point_cloud(&bytes).unwrap();
        prop_assert_eq!(back.clamped, 0);
        prop_assert_eq!(&back.cloud, &cloud);
        prop_assert_eq!(encode_point_cloud(&back.cloud), bytes);
    }

    #[test]
    fn label_words_round_trip(words in prop::collection::vec(any::<u32>(), 0..200)) {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        let labels = decode_labels(&bytes, words.len()).unwrap();
        for (k, w) in words.iter().enumerate() {
            prop_assert_eq!(u32::from(labels.semantic[k]), w & 0xffff);
            prop_assert_eq!(u32::from(labels.instance[k]), w >> 16);
        }
        prop_assert_eq!(encode_labels(&labels), bytes);
    }

    #[test]
    fn truncated_scans_are_rejected(n in 0usize..20, extra in 1usize..16) {
        prop_assert!(decode_point_cloud(&vec![0u8; 16 * n + extra]).is_err());
    }

    #[test]
    fn remap_then_inverse_is_stable(seed_labels in prop::collection::vec(any::<prop::sample::Index>(), 1..200)) {
        let schema = ClassSchema::semantic_thab();
        let raw: Vec<u16> = seed_labels.iter().map(|i| schema.entries()[i.index(schema.entries().len())].raw_id).collect();
        let train = schema.remap_to_train(&PointLabels::from_semantic(raw)).unwrap();
        prop_assert!(train.iter().all(|&t| schema.is_train_or_ignore(t)));
        let again = schema.remap_to_train(&PointLabels::from_semantic(schema.inverse_remap(&train).unwrap())).unwrap();
        prop_assert_eq!(again, train);
    }

    /// Pooled counts equal the sum over scans, in any scan order.
    #[test]
    fn distribution_is_additive_and_order_free(
        scans in prop::collection::vec(prop::collection::vec(train_labels(&ClassSchema::semantic_thab()), 0..100), 1..8),
        rotation in 0usize..8,
    ) {
        let schema = ClassSchema::semantic_thab();
        let pooled = class_distribution(scans.iter().map(Vec::as_slice), &schema);
        let mut summed = ClassDistribution::new(schema.num_classes());
        for s in &scans {
            let mut one = ClassDistribution::new(schema.num_classes());
            one.add(s);
            summed.merge(&one);
        }
        prop_assert_eq!(&pooled, &summed);
        let mut rotated = scans.clone();
        rotated.rotate_left(rotation % scans.len());
        prop_assert_eq!(&class_distribution(rotated.iter().map(Vec::as_slice), &schema), &pooled);
        let scored = scans.iter().flatten().filter(|&&l| l != schema.ignore_index()).count() as u64;
        prop_assert_eq!(pooled.total(), scored);
        if scored > 0 {
            prop_assert!((pooled.frequencies().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
