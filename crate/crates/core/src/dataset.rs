//! SemanticKITTI-compatible scan and label files, the class schema, and
//! class-frequency statistics.
//!
//! Scans are packed little-endian `f32` records `(x, y, z, reflectivity)`.
//! Label files hold one little-endian `u32` per point: the low 16 bits are the
//! semantic id, the high 16 bits the instance id. Neither format has a header.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::projection::{PointCloud, RangeImage};

/// Contiguous class index used for scoring.
pub type TrainIndex = u16;

pub const POINT_RECORD_BYTES: usize = 16;
pub const LABEL_RECORD_BYTES: usize = 4;

/// A decoded scan plus the number of reflectivity values clamped into `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedCloud {
    pub cloud: PointCloud,
    pub clamped: usize,
}

pub fn decode_point_cloud(bytes: &[u8]) -> Result<DecodedCloud> {
    if !bytes.len().is_multiple_of(POINT_RECORD_BYTES) {
        return Err(Error::Truncated {
            offset: bytes.len() - bytes.len() % POINT_RECORD_BYTES,
            record_size: POINT_RECORD_BYTES,
        });
    }
    let n = bytes.len() / POINT_RECORD_BYTES;
    let mut points = Vec::with_capacity(n);
    let mut reflectivity = Vec::with_capacity(n);
    let mut clamped = 0;
    for (record, chunk) in bytes.chunks_exact(POINT_RECORD_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(chunk[4 * k..4 * k + 4].try_into().unwrap());
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && r.is_finite()) {
            return Err(Error::NonFinite { record });
        }
        let rc = r.clamp(0.0, 1.0);
        if rc != r {
            clamped += 1;
        }
        points.push([x, y, z]);
        reflectivity.push(rc);
    }
    Ok(DecodedCloud {
        cloud: PointCloud::from_checked(points, reflectivity),
        clamped,
    })
}

pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_RECORD_BYTES);
    for (p, r) in cloud.points().iter().zip(cloud.reflectivity()) {
        for v in [p[0], p[1], p[2], *r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    let decoded = decode_point_cloud(&bytes).map_err(|e| e.in_file(path))?;
    if decoded.clamped > 0 {
        log::warn!(
            "{}: clamped {} reflectivity values into [0, 1]",
            path.display(),
            decoded.clamped
        );
    }
    Ok(decoded.cloud)
}

pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_point_cloud(cloud)).map_err(|e| Error::from(e).in_file(path))
}

/// Raw per-point semantic and instance ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PointLabels {
    pub semantic: Vec<u16>,
    pub instance: Vec<u16>,
}

impl PointLabels {
    pub fn new(semantic: Vec<u16>, instance: Vec<u16>) -> Result<Self> {
        if semantic.len() != instance.len() {
            return Err(Error::CountMismatch {
                expected: semantic.len(),
                found: instance.len(),
            });
        }
        Ok(Self { semantic, instance })
    }

    /// Semantic-only labels with zero instance ids.
    pub fn from_semantic(semantic: Vec<u16>) -> Self {
        let instance = vec![0; semantic.len()];
        Self { semantic, instance }
    }

    pub fn len(&self) -> usize {
        self.semantic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantic.is_empty()
    }
}

/// Splits label words without consulting a schema.
pub fn decode_labels(bytes: &[u8], expected_count: usize) -> Result<PointLabels> {
    if bytes.len() != expected_count * LABEL_RECORD_BYTES {
        return Err(Error::CountMismatch {
            expected: expected_count,
            found: bytes.len() / LABEL_RECORD_BYTES,
        });
    }
    let (semantic, instance) = bytes
        .chunks_exact(LABEL_RECORD_BYTES)
        .map(|c| {
            let word = u32::from_le_bytes(c.try_into().unwrap());
            ((word & 0xFFFF) as u16, (word >> 16) as u16)
        })
        .unzip();
    Ok(PointLabels { semantic, instance })
}

pub fn encode_labels(labels: &PointLabels) -> Vec<u8> {
    labels
        .semantic
        .iter()
        .zip(&labels.instance)
        .flat_map(|(&s, &i)| (u32::from(s) | (u32::from(i) << 16)).to_le_bytes())
        .collect()
}

/// Reads a label file and checks every semantic id against `schema`.
pub fn read_labels(
    path: impl AsRef<Path>,
    expected_count: usize,
    schema: &ClassSchema,
) -> Result<PointLabels> {
    let path = path.as_ref();
    let labels = read_labels_unchecked(path, expected_count)?;
    schema.check_known(&labels.semantic).map_err(|e| e.in_file(path))?;
    Ok(labels)
}

/// Reads a label file without schema validation; with `expected_count = None`
/// the count is taken from the file length.
pub fn read_labels_unchecked(
    path: impl AsRef<Path>,
    expected_count: impl Into<Option<usize>>,
) -> Result<PointLabels> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    if bytes.len() % LABEL_RECORD_BYTES != 0 {
        return Err(Error::Truncated {
            offset: bytes.len() - bytes.len() % LABEL_RECORD_BYTES,
            record_size: LABEL_RECORD_BYTES,
        }
        .in_file(path));
    }
    let count = expected_count
        .into()
        .unwrap_or(bytes.len() / LABEL_RECORD_BYTES);
    decode_labels(&bytes, count).map_err(|e| e.in_file(path))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &PointLabels) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_labels(labels)).map_err(|e| Error::from(e).in_file(path))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaEntry {
    pub raw_id: u16,
    pub name: String,
    pub color: [u8; 3],
    pub train_index: Option<TrainIndex>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainClass {
    pub name: String,
    pub color: [u8; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    ignore_index: TrainIndex,
    #[serde(rename = "class")]
    classes: Vec<ClassRow>,
    #[serde(rename = "label")]
    labels: Vec<LabelRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassRow {
    name: String,
    color: [u8; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRow {
    id: u16,
    name: String,
    color: [u8; 3],
    train: Option<String>,
}

/// Raw-id to train-index mapping with names and display colors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSchema {
    entries: Vec<SchemaEntry>,
    classes: Vec<TrainClass>,
    ignore_index: TrainIndex,
    by_raw: HashMap<u16, usize>,
}

const SEMANTIC_THAB: &str = include_str!("../schemas/semantic-thab.toml");
const SEMANTIC_KITTI: &str = include_str!("../schemas/semantic-kitti.toml");

impl ClassSchema {
    /// SemanticKITTI classes with `traffic-indicator` in place of
    /// `traffic-sign`; lane markings count as traffic indicators.
    pub fn semantic_thab() -> Self {
        Self::from_toml(SEMANTIC_THAB).expect("bundled schema parses")
    }

    /// Stock SemanticKITTI learning map.
    pub fn semantic_kitti() -> Self {
        Self::from_toml(SEMANTIC_KITTI).expect("bundled schema parses")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let classes: Vec<TrainClass> = file
            .classes
            .into_iter()
            .map(|c| TrainClass {
                name: c.name,
                color: c.color,
            })
            .collect();
        if classes.is_empty() {
            return Err(Error::Schema("no train classes".into()));
        }
        if usize::from(file.ignore_index) < classes.len() {
            return Err(Error::Schema(format!(
                "ignore_index {} collides with a train class",
                file.ignore_index
            )));
        }
        let class_index: HashMap<&str, TrainIndex> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.as_str(), i as TrainIndex))
            .collect();
        if class_index.len() != classes.len() {
            return Err(Error::Schema("duplicate train class name".into()));
        }
        let mut entries = Vec::with_capacity(file.labels.len());
        let mut by_raw = HashMap::new();
        for row in file.labels {
            let train_index = match &row.train {
                Some(name) => Some(*class_index.get(name.as_str()).ok_or_else(|| {
                    Error::Schema(format!("label {} maps to unknown class {name:?}", row.id))
                })?),
                None => None,
            };
            if by_raw.insert(row.id, entries.len()).is_some() {
                return Err(Error::Schema(format!("duplicate raw id {}", row.id)));
            }
            entries.push(SchemaEntry {
                raw_id: row.id,
                name: row.name,
                color: row.color,
                train_index,
            });
        }
        let used: BTreeSet<_> = entries.iter().filter_map(|e| e.train_index).collect();
        if used.len() != classes.len() {
            return Err(Error::Schema("some train classes have no raw label".into()));
        }
        Ok(Self {
            entries,
            classes,
            ignore_index: file.ignore_index,
            by_raw,
        })
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn classes(&self) -> &[TrainClass] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn ignore_index(&self) -> TrainIndex {
        self.ignore_index
    }

    pub fn entry(&self, raw_id: u16) -> Option<&SchemaEntry> {
        self.by_raw.get(&raw_id).map(|&i| &self.entries[i])
    }

    pub fn class_name(&self, index: TrainIndex) -> Option<&str> {
        self.classes.get(usize::from(index)).map(|c| c.name.as_str())
    }

    pub fn class_color(&self, index: TrainIndex) -> Option<[u8; 3]> {
        self.classes.get(usize::from(index)).map(|c| c.color)
    }

    pub fn class_index(&self, name: &str) -> Option<TrainIndex> {
        self.classes
            .iter()
            .position(|c| c.name == name)
            .map(|i| i as TrainIndex)
    }

    /// Train index of a raw id; ignored ids map to `ignore_index`.
    pub fn train_index(&self, raw_id: u16) -> Option<TrainIndex> {
        self.entry(raw_id)
            .map(|e| e.train_index.unwrap_or(self.ignore_index))
    }

    /// First raw id listed for a train class, or the first ignored raw id for
    /// `ignore_index`.
    pub fn representative_raw(&self, index: TrainIndex) -> Option<u16> {
        let want = (index != self.ignore_index).then_some(index);
        self.entries
            .iter()
            .find(|e| e.train_index == want)
            .map(|e| e.raw_id)
    }

    fn check_known(&self, raw: &[u16]) -> Result<()> {
        let unknown: BTreeSet<u32> = raw
            .iter()
            .filter(|id| !self.by_raw.contains_key(id))
            .map(|&id| u32::from(id))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownLabel {
                ids: unknown.into_iter().collect(),
            })
        }
    }

    pub fn remap_to_train(&self, labels: &PointLabels) -> Result<Vec<TrainIndex>> {
        self.check_known(&labels.semantic)?;
        Ok(labels
            .semantic
            .iter()
            .map(|&id| self.train_index(id).unwrap())
            .collect())
    }

    /// Maps train indices back to a representative raw id each.
    pub fn inverse_remap(&self, train: &[TrainIndex]) -> Result<Vec<u16>> {
        train
            .iter()
            .map(|&t| {
                self.representative_raw(t).ok_or_else(|| {
                    Error::InvalidArgument(format!("train index {t} is not in the schema"))
                })
            })
            .collect()
    }

    /// True when `index` is a train class or the ignore marker.
    pub fn is_train_or_ignore(&self, index: TrainIndex) -> bool {
        usize::from(index) < self.classes.len() || index == self.ignore_index
    }
}

pub fn remap_to_train(labels: &PointLabels, schema: &ClassSchema) -> Result<Vec<TrainIndex>> {
    schema.remap_to_train(labels)
}

/// Per-pixel train indices aligned with a range image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelImage {
    width: usize,
    height: usize,
    labels: Vec<TrainIndex>,
    valid: Vec<bool>,
    ignore_index: TrainIndex,
}

impl LabelImage {
    /// Labels of invalid pixels are overwritten with `ignore_index`.
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<TrainIndex>,
        valid: Vec<bool>,
        ignore_index: TrainIndex,
    ) -> Result<Self> {
        let n = width * height;
        if labels.len() != n || valid.len() != n {
            return Err(Error::CountMismatch {
                expected: n,
                found: labels.len().min(valid.len()),
            });
        }
        let mut labels = labels;
        for (l, v) in labels.iter_mut().zip(&valid) {
            if !v {
                *l = ignore_index;
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            valid,
            ignore_index,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[TrainIndex] {
        &self.labels
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn ignore_index(&self) -> TrainIndex {
        self.ignore_index
    }

    pub fn get(&self, u: usize, v: usize) -> TrainIndex {
        self.labels[v * self.width + u]
    }
}

/// Pixel labels follow the point that won each pixel in `image`.
pub fn project_labels(
    labels: &[TrainIndex],
    image: &RangeImage,
    ignore_index: TrainIndex,
) -> Result<LabelImage> {
    let n = image.width() * image.height();
    let mut out = vec![ignore_index; n];
    for (i, slot) in out.iter_mut().enumerate() {
        if let Some(src) = image.source_index(i) {
            *slot = *labels.get(src).ok_or(Error::CountMismatch {
                expected: src + 1,
                found: labels.len(),
            })?;
        }
    }
    LabelImage::new(image.width(), image.height(), out, image.valid().to_vec(), ignore_index)
}

/// Checked variant that also requires `labels.len()` to match the source cloud.
pub fn project_cloud_labels(
    labels: &[TrainIndex],
    cloud: &PointCloud,
    image: &RangeImage,
    ignore_index: TrainIndex,
) -> Result<LabelImage> {
    if labels.len() != cloud.len() {
        return Err(Error::CountMismatch {
            expected: cloud.len(),
            found: labels.len(),
        });
    }
    project_labels(labels, image, ignore_index)
}

/// Exact per-class point counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDistribution {
    counts: Vec<u64>,
}

impl ClassDistribution {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![0; num_classes],
        }
    }

    /// Counts every label below the class count; anything else is ignored.
    pub fn add(&mut self, labels: &[TrainIndex]) {
        for &l in labels {
            if let Some(c) = self.counts.get_mut(usize::from(l)) {
                *c += 1;
            }
        }
    }

    pub fn add_image(&mut self, image: &LabelImage) {
        for (&l, &v) in image.labels.iter().zip(&image.valid) {
            if v {
                if let Some(c) = self.counts.get_mut(usize::from(l)) {
                    *c += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &ClassDistribution) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Relative frequencies; all zero when nothing was counted.
    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total();
        self.counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect()
    }

    /// CSV with columns `class_name,count,frequency`.
    pub fn to_csv(&self, schema: &ClassSchema) -> String {
        let mut out = String::from("class_name,count,frequency\n");
        for (i, (c, f)) in self.counts.iter().zip(self.frequencies()).enumerate() {
            let name = schema.class_name(i as TrainIndex).unwrap_or("?");
            out.push_str(&format!("{name},{c},{f:.8}\n"));
        }
        out
    }
}

/// Distribution over a set of per-scan train-index arrays.
pub fn class_distribution<'a>(
    scans: impl IntoIterator<Item = &'a [TrainIndex]>,
    schema: &ClassSchema,
) -> ClassDistribution {
    let mut dist = ClassDistribution::new(schema.num_classes());
    for s in scans {
        dist.add(s);
    }
    dist
}

/// A sequence directory laid out as `velodyne/NNNNNN.bin` and
/// `labels/NNNNNN.label`.
#[derive(Clone, Debug)]
pub struct Sequence {
    root: PathBuf,
    stems: Vec<String>,
}

impl Sequence {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let dir = root.join("velodyne");
        let stems = list_stems(&dir, "bin").map_err(|e| e.in_file(&dir))?;
        Ok(Self { root, stems })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn name(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.root.display().to_string())
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    pub fn len(&self) -> usize {
        self.stems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stems.is_empty()
    }

    pub fn scan_path(&self, stem: &str) -> PathBuf {
        self.root.join("velodyne").join(format!("{stem}.bin"))
    }

    pub fn label_path(&self, stem: &str) -> PathBuf {
        self.root.join("labels").join(format!("{stem}.label"))
    }
}

/// Sorted file stems with the given extension in `dir`.
pub fn list_stems(dir: &Path, extension: &str) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == extension) {
            if let Some(stem) = path.file_stem() {
                stems.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

/// Zero-padded six-digit scan stem.
pub fn scan_stem(index: usize) -> String {
    format!("{index:06}")
}
