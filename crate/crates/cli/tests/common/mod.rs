#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rangekit::dataset::{write_labels, write_point_cloud, PointLabels};
use rangekit::{ClassSchema, PointCloud};

pub fn rangekit(args: &[&str]) -> Output {
    rangekit_env(args, &[])
}

pub fn rangekit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rangekit"));
    cmd.args(args).env_remove("RANGEKIT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("run rangekit")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Random points around the sensor, far enough out to be valid.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            let r = rng.gen_range(2.0..40.0f32);
            let phi = rng.gen_range(-3.1..3.1f32);
            let z = rng.gen_range(-0.15..0.15f32) * r;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    let refl = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    PointCloud::new(points, refl).unwrap()
}

/// Random train indices, including some ignored points.
pub fn random_train(rng: &mut ChaCha8Rng, n: usize, schema: &ClassSchema) -> Vec<u16> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                schema.ignore_index()
            } else {
                rng.gen_range(0..schema.num_classes() as u16)
            }
        })
        .collect()
}

/// Writes `velodyne/` and `labels/` for `scans` scans; returns the train
/// labels actually written.
pub fn write_sequence(root: &Path, scans: usize, points: usize, seed: u64) -> Vec<Vec<u16>> {
    let schema = ClassSchema::semantic_thab();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::fs::create_dir_all(root.join("velodyne")).unwrap();
    std::fs::create_dir_all(root.join("labels")).unwrap();
    let mut all = Vec::new();
    for k in 0..scans {
        let stem = format!("{k:06}");
        let cloud = random_cloud(&mut rng, points);
        let train = random_train(&mut rng, points, &schema);
        let raw: Vec<u16> = train.iter().map(|&t| schema.representative_raw(t).unwrap()).collect();
        write_point_cloud(root.join("velodyne").join(format!("{stem}.bin")), &cloud).unwrap();
        write_labels(
            root.join("labels").join(format!("{stem}.label")),
            &PointLabels::from_semantic(raw),
        )
        .unwrap();
        all.push(train);
    }
    all
}

pub fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap())
        .collect()
}

pub fn out_dir(tmp: &Path) -> PathBuf {
    tmp.join("out")
}
