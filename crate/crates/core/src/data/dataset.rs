use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix, Targets};

/// Samples in rows, with class labels or real-valued targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    targets: Targets,
}

impl Dataset {
    pub fn new(features: Matrix, targets: Targets) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Invalid("dataset has no samples".into()));
        }
        if features.rows() != targets.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} targets",
                features.rows(),
                targets.len()
            )));
        }
        if let Targets::Classes { labels, classes } = &targets {
            if let Some(bad) = labels.iter().find(|&&l| l >= *classes) {
                return Err(Error::Invalid(format!("label {bad} outside 0..{classes}")));
            }
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    /// Number of classes, or `None` for real-valued targets.
    pub fn classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { classes, .. } => Some(*classes),
            Targets::Values(_) => None,
        }
    }

    /// Rows `indices`, in that order, as a training batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        if let Some(bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Invalid(format!(
                "sample {bad} outside a dataset of {}",
                self.len()
            )));
        }
        Batch::new(
            self.features.select_rows(indices),
            self.targets.select(indices),
        )
    }

    /// A new dataset made of rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let b = self.batch(indices)?;
        Dataset::new(b.inputs, b.targets)
    }

    /// The whole dataset as one batch.
    pub fn all(&self) -> Batch {
        Batch {
            inputs: self.features.clone(),
            targets: self.targets.clone(),
        }
    }

    /// Concatenates the rows of several datasets of the same kind.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for p in parts {
            if p.dim() != first.dim() || p.classes() != first.classes() {
                return Err(Error::Shape("datasets of different kinds".into()));
            }
            rows.extend_from_slice(p.features.as_slice());
            match &p.targets {
                Targets::Classes { labels: l, .. } => labels.extend_from_slice(l),
                Targets::Values(v) => {
                    if v.cols() != first.targets.width() {
                        return Err(Error::Shape("target widths differ".into()));
                    }
                    values.extend_from_slice(v.as_slice())
                }
            }
        }
        let n = rows.len() / first.dim();
        let targets = match &first.targets {
            Targets::Classes { classes, .. } => Targets::Classes {
                labels,
                classes: *classes,
            },
            Targets::Values(v) => Targets::Values(Matrix::from_vec(n, v.cols(), values)?),
        };
        Dataset::new(Matrix::from_vec(n, first.dim(), rows)?, targets)
    }
}

/// Gaussian blobs, one per class, stored class by class. Centers are
/// random unit vectors scaled by 2; `spread` is the per-coordinate noise std.
pub fn gen_synthetic_classification(
    d: usize,
    classes: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || per_class == 0 || d == 0 {
        return Err(Error::Invalid(
            "need d ≥ 1, at least 2 classes and 1 sample per class".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Invalid(format!(
            "spread {spread} must be nonnegative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.iter().map(|x| 2.0 * x / norm).collect();
            }
        })
        .collect();
    let noise = Normal::new(0.0, spread).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut features = Vec::with_capacity(classes * per_class * d);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(c.iter().map(|x| x + noise.sample(&mut rng)));
            labels.push(k);
        }
    }
    Dataset::new(
        Matrix::from_vec(classes * per_class, d, features)?,
        Targets::Classes { labels, classes },
    )
}

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: "truncated header".into(),
        })
}

/// Reads an IDX image file (`0x00000803`) and label file (`0x00000801`).
/// Pixels are scaled to `[0, 1]`; images are flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let fmt = |path: &Path, reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(fmt(
            images_path,
            format!("magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let pixels = rows * cols;
    let body = &images[16..];
    if body.len() < count * pixels {
        return Err(fmt(
            images_path,
            format!(
                "{} pixel bytes for {count} images of {rows}x{cols}",
                body.len()
            ),
        ));
    }

    let magic = be_u32(&labels, 0, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(fmt(
            labels_path,
            format!("magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = be_u32(&labels, 4, labels_path)? as usize;
    let label_body = &labels[8..];
    if label_body.len() < label_count {
        return Err(fmt(
            labels_path,
            format!("{} label bytes for {label_count} labels", label_body.len()),
        ));
    }
    if label_count != count {
        return Err(fmt(
            labels_path,
            format!("{label_count} labels for {count} images"),
        ));
    }
    if count == 0 || pixels == 0 {
        return Err(fmt(images_path, "no image data".into()));
    }

    let features: Vec<f64> = body[..count * pixels]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    let labels: Vec<usize> = label_body[..count]
        .iter()
        .map(|&b| usize::from(b))
        .collect();
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(
        Matrix::from_vec(count, pixels, features)?,
        Targets::Classes {
            labels,
            classes: classes.max(2),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_counts_and_labels() {
        let ds = gen_synthetic_classification(3, 2, 5, 0.1, 1).unwrap();
        assert_eq!(ds.len(), 10);
        let labels = ds.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 5);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 5);
    }

    #[test]
    fn zero_spread_collapses_onto_centers() {
        let ds = gen_synthetic_classification(4, 3, 6, 0.0, 2).unwrap();
        for k in 0..3 {
            let first = ds.features().row(k * 6).to_vec();
            let norm: f64 = first.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 2.0).abs() < 1e-12);
            for r in k * 6..(k + 1) * 6 {
                assert_eq!(ds.features().row(r), first.as_slice());
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = gen_synthetic_classification(5, 4, 7, 0.5, 11).unwrap();
        let b = gen_synthetic_classification(5, 4, 7, 0.5, 11).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_classification(5, 4, 7, 0.5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_rejects_one_class() {
        assert!(gen_synthetic_classification(2, 1, 3, 0.1, 0).is_err());
    }

    #[test]
    fn batch_selects_rows_in_order() {
        let ds = gen_synthetic_classification(2, 2, 2, 0.3, 4).unwrap();
        let b = ds.batch(&[3, 0]).unwrap();
        assert_eq!(b.inputs.row(0), ds.features().row(3));
        assert_eq!(b.targets.len(), 2);
        assert!(ds.batch(&[4]).is_err());
    }
}
