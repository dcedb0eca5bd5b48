use crate::dataset::LabelImage;
use crate::error::{Error, Result};

/// Tolerance on the per-pixel probability sum.
pub const SIMPLEX_TOLERANCE: f64 = 1e-5;
/// Floor applied before taking logarithms in the cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

/// Per-pixel class probabilities, stored pixel-major (`data[pixel * C + c]`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityImage {
    width: usize,
    height: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbabilityImage {
    pub fn new(width: usize, height: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidArgument("zero classes".into()));
        }
        if data.len() != width * height * classes {
            return Err(Error::CountMismatch {
                expected: width * height * classes,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            classes,
            data,
        })
    }

    /// One-hot lifting of hard labels; pixels outside `[0, C)` get a uniform row.
    pub fn one_hot(labels: &LabelImage, classes: usize) -> Result<Self> {
        let n = labels.width() * labels.height();
        let mut data = vec![0.0; n * classes];
        for (i, &l) in labels.labels().iter().enumerate() {
            let row = &mut data[i * classes..(i + 1) * classes];
            match row.get_mut(usize::from(l)) {
                Some(p) => *p = 1.0,
                None => row.fill(1.0 / classes as f64),
            }
        }
        Self::new(labels.width(), labels.height(), classes, data)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossParams {
    /// Tversky false-positive weight.
    pub alpha: f64,
    /// Tversky false-negative weight.
    pub beta: f64,
    pub lambda_ce: f64,
    pub lambda_tv: f64,
    /// Per-class cross-entropy weights.
    pub class_weights: Vec<f64>,
    /// Stabilizer added to numerator and denominator of the Tversky index.
    pub smooth: f64,
}

impl LossParams {
    /// Defaults: `alpha = 0.3`, `beta = 0.7`, unit mixing and class weights,
    /// `smooth = 1e-6`.
    pub fn new(classes: usize) -> Self {
        Self {
            alpha: 0.3,
            beta: 0.7,
            lambda_ce: 1.0,
            lambda_tv: 1.0,
            class_weights: vec![1.0; classes],
            smooth: 1e-6,
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        let nonneg = [self.alpha, self.beta, self.lambda_ce, self.lambda_tv]
            .iter()
            .chain(&self.class_weights)
            .all(|v| v.is_finite() && *v >= 0.0);
        if !nonneg {
            return Err(Error::InvalidArgument(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        if self.alpha + self.beta <= 0.0 || self.lambda_ce + self.lambda_tv <= 0.0 {
            return Err(Error::InvalidArgument(
                "alpha + beta and lambda_ce + lambda_tv must be positive".into(),
            ));
        }
        if !(self.smooth > 0.0 && self.smooth.is_finite()) {
            return Err(Error::InvalidArgument("smooth must be positive".into()));
        }
        if self.class_weights.len() != classes {
            return Err(Error::CountMismatch {
                expected: classes,
                found: self.class_weights.len(),
            });
        }
        Ok(())
    }
}

/// Checks alignment and simplex constraints, returning the scored pixel indices.
fn scored_pixels(probs: &ProbabilityImage, truth: &LabelImage) -> Result<Vec<usize>> {
    if probs.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            left: probs.dims(),
            right: truth.dims(),
        });
    }
    let c = probs.classes;
    let mut scored = Vec::new();
    for (i, (&l, &v)) in truth.labels().iter().zip(truth.valid()).enumerate() {
        let row = probs.pixel(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE || row.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::NotNormalized { pixel: i, sum });
        }
        if v && usize::from(l) < c {
            scored.push(i);
        }
    }
    Ok(scored)
}

/// Mean over scored pixels of `-w[gt] * ln(max(p[gt], 1e-12))`; zero when no
/// pixel is scored.
pub fn cross_entropy(probs: &ProbabilityImage, truth: &LabelImage, weights: &[f64]) -> Result<f64> {
    if weights.len() != probs.classes {
        return Err(Error::CountMismatch {
            expected: probs.classes,
            found: weights.len(),
        });
    }
    let scored = scored_pixels(probs, truth)?;
    if scored.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = scored
        .iter()
        .map(|&i| {
            let gt = usize::from(truth.labels()[i]);
            -weights[gt] * probs.pixel(i)[gt].max(LOG_FLOOR).ln()
        })
        .sum();
    Ok(total / scored.len() as f64)
}

/// Soft TP/FP/FN per class plus whether the class occurs in the truth.
struct SoftCounts {
    tp: Vec<f64>,
    fp: Vec<f64>,
    fn_: Vec<f64>,
    present: Vec<bool>,
}

fn soft_counts(probs: &ProbabilityImage, truth: &LabelImage) -> Result<SoftCounts> {
    let scored = scored_pixels(probs, truth)?;
    let c = probs.classes;
    let mut counts = SoftCounts {
        tp: vec![0.0; c],
        fp: vec![0.0; c],
        fn_: vec![0.0; c],
        present: vec![false; c],
    };
    for i in scored {
        let gt = usize::from(truth.labels()[i]);
        counts.present[gt] = true;
        for (k, &p) in probs.pixel(i).iter().enumerate() {
            if k == gt {
                counts.tp[k] += p;
                counts.fn_[k] += 1.0 - p;
            } else {
                counts.fp[k] += p;
            }
        }
    }
    Ok(counts)
}

fn mean_over_present(counts: &SoftCounts, index: impl Fn(usize) -> f64) -> f64 {
    let (sum, n) = (0..counts.tp.len())
        .filter(|&k| counts.present[k])
        .fold((0.0, 0usize), |(s, n), k| (s + index(k), n + 1));
    if n == 0 {
        0.0
    } else {
        1.0 - sum / n as f64
    }
}

/// `1 - mean_c (TP + s) / (TP + alpha FP + beta FN + s)` over classes present
/// in the truth.
pub fn tversky(probs: &ProbabilityImage, truth: &LabelImage, params: &LossParams) -> Result<f64> {
    params.validate(probs.classes)?;
    let k = soft_counts(probs, truth)?;
    let s = params.smooth;
    Ok(mean_over_present(&k, |c| {
        (k.tp[c] + s) / (k.tp[c] + params.alpha * k.fp[c] + params.beta * k.fn_[c] + s)
    }))
}

/// `1 - mean_c 2 (TP + s) / (2 TP + FP + FN + 2 s)`; this places the stabilizer
/// so that it coincides with [`tversky`] at `alpha = beta = 0.5`.
pub fn soft_dice(probs: &ProbabilityImage, truth: &LabelImage, smooth: f64) -> Result<f64> {
    let k = soft_counts(probs, truth)?;
    Ok(mean_over_present(&k, |c| {
        2.0 * (k.tp[c] + smooth) / (2.0 * k.tp[c] + k.fp[c] + k.fn_[c] + 2.0 * smooth)
    }))
}

pub fn combined_loss(probs: &ProbabilityImage, truth: &LabelImage, params: &LossParams) -> Result<f64> {
    params.validate(probs.classes)?;
    let mut loss = 0.0;
    if params.lambda_ce != 0.0 {
        loss += params.lambda_ce * cross_entropy(probs, truth, &params.class_weights)?;
    }
    if params.lambda_tv != 0.0 {
        loss += params.lambda_tv * tversky(probs, truth, params)?;
    }
    Ok(loss)
}
