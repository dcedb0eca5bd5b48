use rangekit::backends::{
    load_predictions, network_input, write_predictions, GeometricBaseline, GeometricBaselineConfig,
    PrecomputedPredictions, Segmenter, INPUT_CHANNELS,
};
use rangekit::dataset::{
    project_cloud_labels, read_labels, read_point_cloud, write_labels, write_point_cloud, ClassSchema,
    PointLabels, Sequence,
};
use rangekit::evaluation::ConfusionMatrix;
use rangekit::normals::compute_normals;
use rangekit::projection::{build_range_image, SensorPreset, SphericalProjectionModel};
use rangekit::synthetic::{enclosure, urban_block, SceneLabels, SyntheticScan};

fn labels(schema: &ClassSchema) -> SceneLabels {
    SceneLabels {
        ground: schema.class_index("road").unwrap(),
        wall: schema.class_index("building").unwrap(),
        object: schema.class_index("car").unwrap(),
    }
}

fn scans(schema: &ClassSchema) -> Vec<(SphericalProjectionModel, SyntheticScan)> {
    let mut out = Vec::new();
    for preset in SensorPreset::ALL {
        let m = SphericalProjectionModel::preset(preset);
        out.push((m, urban_block(labels(schema)).scan(&m).unwrap()));
        out.push((m, enclosure(labels(schema)).scan(&m).unwrap()));
    }
    out
}

#[test]
fn backends_keep_dims_and_valid_mask() {
    let schema = ClassSchema::semantic_thab();
    let baseline = GeometricBaseline::new(GeometricBaselineConfig::for_schema(&schema).unwrap()).unwrap();
    for (m, scan) in scans(&schema) {
        let img = build_range_image(&scan.cloud, &m).unwrap();
        let normals = compute_normals(&img);
        let precomputed = PrecomputedPredictions::new(scan.labels.clone(), schema.num_classes(), 255);
        let backends: [&dyn Segmenter; 2] = [&baseline, &precomputed];
        for b in backends {
            let seg = b.segment(&img, &normals).unwrap();
            assert_eq!(seg.labels.dims(), img.dims(), "{}", b.descriptor().name);
            assert_eq!(seg.labels.valid(), img.valid(), "{}", b.descriptor().name);
            for (i, &l) in seg.labels.labels().iter().enumerate() {
                assert_eq!(img.valid()[i], l != 255);
            }
            if let Some(p) = &seg.probabilities {
                assert_eq!(p.dims(), img.dims());
            }
            assert_eq!(b.segment(&img, &normals).unwrap(), seg, "{} is not deterministic", b.descriptor().name);
        }
    }
}

#[test]
fn precomputed_predictions_reproduce_the_truth() {
    let schema = ClassSchema::semantic_thab();
    let m = SphericalProjectionModel::preset(SensorPreset::Hdl64_512);
    let scan = urban_block(labels(&schema)).scan(&m).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("000000.label");
    write_predictions(&path, &scan.labels).unwrap();
    assert_eq!(load_predictions(&path, scan.cloud.len(), 19, 255).unwrap(), scan.labels);
    assert!(load_predictions(&path, scan.cloud.len() + 1, 19, 255).is_err());

    let img = build_range_image(&scan.cloud, &m).unwrap();
    let normals = compute_normals(&img);
    let seg = PrecomputedPredictions::from_file(&path, scan.cloud.len(), &schema)
        .unwrap()
        .segment(&img, &normals)
        .unwrap();
    let truth = project_cloud_labels(&scan.labels, &scan.cloud, &img, 255).unwrap();
    let report = ConfusionMatrix::new(19).accumulate(&seg.labels, &truth).unwrap().report();
    assert_eq!(report.miou(), Some(1.0));
}

#[test]
fn network_input_is_channel_major() {
    let schema = ClassSchema::semantic_thab();
    let m = SphericalProjectionModel::preset(SensorPreset::Hdl64_512);
    let scan = enclosure(labels(&schema)).scan(&m).unwrap();
    let img = build_range_image(&scan.cloud, &m).unwrap();
    let normals = compute_normals(&img);
    let t = network_input(&img, &normals).unwrap();
    let plane = img.width() * img.height();
    assert_eq!(t.len(), INPUT_CHANNELS.len() * plane);
    let i = img.index(100, 30);
    assert!(img.valid()[i] && normals.valid()[i]);
    assert_eq!(t[i], img.reflectivity()[i]);
    assert_eq!(t[plane + i], img.range()[i]);
    assert_eq!([t[2 * plane + i], t[3 * plane + i], t[4 * plane + i]], img.xyz()[i]);
    assert_eq!([t[5 * plane + i], t[6 * plane + i], t[7 * plane + i]], normals.normals()[i]);
}

/// Files on disk through to a nonzero mIoU, for every preset.
#[test]
fn sequence_smoke() {
    let schema = ClassSchema::semantic_thab();
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("velodyne")).unwrap();
    std::fs::create_dir_all(dir.path().join("labels")).unwrap();
    let all = scans(&schema);
    for (k, (_, scan)) in all.iter().enumerate() {
        write_point_cloud(dir.path().join(format!("velodyne/{k:06}.bin")), &scan.cloud).unwrap();
        let raw = schema.inverse_remap(&scan.labels).unwrap();
        write_labels(dir.path().join(format!("labels/{k:06}.label")), &PointLabels::from_semantic(raw)).unwrap();
    }
    let seq = Sequence::open(dir.path()).unwrap();
    assert_eq!(seq.len(), all.len());
    let cfg = GeometricBaselineConfig::for_schema(&schema).unwrap();
    let baseline = GeometricBaseline::new(cfg).unwrap();
    for (stem, (m, _)) in seq.stems().iter().zip(&all) {
        let cloud = read_point_cloud(seq.scan_path(stem)).unwrap();
        let raw = read_labels(seq.label_path(stem), cloud.len(), &schema).unwrap();
        let train = schema.remap_to_train(&raw).unwrap();
        let img = build_range_image(&cloud, m).unwrap();
        let normals = compute_normals(&img);
        let pred = baseline.segment(&img, &normals).unwrap().labels;
        let truth = project_cloud_labels(&train, &cloud, &img, 255).unwrap();
        let miou = ConfusionMatrix::new(19).accumulate(&pred, &truth).unwrap().report().miou();
        assert!(miou.unwrap() > 0.0, "scan {stem}");
    }
}
