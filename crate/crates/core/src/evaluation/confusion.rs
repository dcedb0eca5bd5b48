use crate::dataset::{LabelImage, TrainIndex};
use crate::error::{Error, Result};

/// `counts[gt][pred]` over scored pixels, rows are ground truth.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.classes..(truth + 1) * self.classes]
            .iter()
            .sum()
    }

    pub fn column_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    /// Returns a new matrix with the image pair added.
    pub fn accumulate(&self, predicted: &LabelImage, truth: &LabelImage) -> Result<Self> {
        let mut out = self.clone();
        out.add_images(predicted, truth)?;
        Ok(out)
    }

    pub fn add_images(&mut self, predicted: &LabelImage, truth: &LabelImage) -> Result<()> {
        if predicted.dims() != truth.dims() {
            return Err(Error::DimensionMismatch {
                left: predicted.dims(),
                right: truth.dims(),
            });
        }
        // LabelImage already stores ignore_index on invalid pixels.
        self.add_labels(predicted.labels(), truth.labels())
    }

    /// Tallies paired label arrays. Truth values outside `[0, C)` are skipped;
    /// a scored pixel with a prediction outside `[0, C)` is an error.
    pub fn add_labels(&mut self, predicted: &[TrainIndex], truth: &[TrainIndex]) -> Result<()> {
        if predicted.len() != truth.len() {
            return Err(Error::CountMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let c = self.classes;
        let mut delta = vec![0u64; c * c];
        for (i, (&p, &t)) in predicted.iter().zip(truth).enumerate() {
            let (p, t) = (usize::from(p), usize::from(t));
            if t >= c {
                continue;
            }
            if p >= c {
                return Err(Error::InvalidArgument(format!(
                    "prediction {p} at index {i} is not a train class (C = {c})"
                )));
            }
            delta[t * c + p] += 1;
        }
        for (a, d) in self.counts.iter_mut().zip(delta) {
            *a += d;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::CountMismatch {
                expected: self.classes,
                found: other.classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn report(&self) -> EvalReport {
        let classes = (0..self.classes)
            .map(|k| {
                let tp = self.get(k, k);
                ClassScore {
                    true_positive: tp,
                    false_positive: self.column_sum(k) - tp,
                    false_negative: self.row_sum(k) - tp,
                }
            })
            .collect();
        EvalReport { classes }
    }
}

/// Integer tallies for one class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ClassScore {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

impl ClassScore {
    pub fn union(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative
    }

    /// Ground-truth pixel count.
    pub fn support(&self) -> u64 {
        self.true_positive + self.false_negative
    }

    /// `None` when the class appears in neither truth nor prediction.
    pub fn iou(&self) -> Option<f64> {
        let union = self.union();
        (union > 0).then(|| self.true_positive as f64 / union as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    classes: Vec<ClassScore>,
}

impl EvalReport {
    pub fn class_scores(&self) -> &[ClassScore] {
        &self.classes
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        self.classes.iter().map(ClassScore::iou).collect()
    }

    /// Mean IoU over classes with a nonzero union, `None` if there are none.
    pub fn miou(&self) -> Option<f64> {
        mean(self.classes.iter().filter_map(ClassScore::iou))
    }

    /// Mean IoU over a fixed class list, skipping listed classes that are
    /// absent from both truth and prediction.
    pub fn miou_over(&self, classes: &[usize]) -> Option<f64> {
        mean(
            classes
                .iter()
                .filter_map(|&c| self.classes.get(c).and_then(ClassScore::iou)),
        )
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Convenience wrapper for [`ConfusionMatrix::report`].
pub fn iou(cm: &ConfusionMatrix) -> EvalReport {
    cm.report()
}
