//! Locating scans and label files. A directory is either a sequence
//! (`velodyne/`, `labels/`, `predictions/` subdirectories) or a flat
//! directory holding the files directly.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use rangekit::dataset::list_stems;

#[derive(Clone, Debug)]
pub struct ScanDir {
    pub name: String,
    scans: PathBuf,
    labels: PathBuf,
    pub stems: Vec<String>,
}

fn dir_name(dir: &Path) -> String {
    dir.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dir.display().to_string())
}

impl ScanDir {
    pub fn open(dir: &Path) -> anyhow::Result<Self> {
        if !dir.is_dir() {
            bail!("{} is not a directory", dir.display());
        }
        let (scans, labels) = if dir.join("velodyne").is_dir() {
            (dir.join("velodyne"), dir.join("labels"))
        } else {
            (dir.to_path_buf(), dir.to_path_buf())
        };
        let stems = list_stems(&scans, "bin").with_context(|| format!("listing {}", scans.display()))?;
        Ok(Self {
            name: dir_name(dir),
            scans,
            labels,
            stems,
        })
    }

    pub fn scan_path(&self, stem: &str) -> PathBuf {
        self.scans.join(format!("{stem}.bin"))
    }

    /// Where the label file of `stem` belongs, whether or not it exists.
    pub fn label_path(&self, stem: &str) -> PathBuf {
        self.labels.join(format!("{stem}.label"))
    }

    pub fn existing_label(&self, stem: &str) -> Option<PathBuf> {
        Some(self.label_path(stem)).filter(|p| p.is_file())
    }
}

/// The `.label` files of a directory, looked up in `subdir` when present.
#[derive(Clone, Debug)]
pub struct LabelDir {
    pub root: PathBuf,
    dir: PathBuf,
    pub stems: Vec<String>,
}

impl LabelDir {
    pub fn open(root: &Path, subdir: &str) -> anyhow::Result<Self> {
        if !root.is_dir() {
            bail!("{} is not a directory", root.display());
        }
        let dir = if root.join(subdir).is_dir() {
            root.join(subdir)
        } else {
            root.to_path_buf()
        };
        let stems = list_stems(&dir, "label").with_context(|| format!("listing {}", dir.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            dir,
            stems,
        })
    }

    pub fn path(&self, stem: &str) -> PathBuf {
        self.dir.join(format!("{stem}.label"))
    }
}
