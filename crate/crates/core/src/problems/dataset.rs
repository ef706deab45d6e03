use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ProblemError;

/// Dense feature matrix (row-major, one row per sample) with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self, ProblemError> {
        if n_features == 0 {
            return Err(ProblemError::InvalidDataset("zero features".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(ProblemError::InvalidDataset(format!(
                "{} feature values for {} samples of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(ProblemError::InvalidDataset(format!(
                "non-finite feature in sample {}",
                pos / n_features
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(ProblemError::InvalidDataset(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    /// Affine map `x -> (x - mean) / std` applied to every feature.
    pub fn standardized(&self, mean: f64, std: f64) -> Self {
        Self {
            features: self.features.iter().map(|x| (x - mean) / std).collect(),
            ..self.clone()
        }
    }

    /// One scalar feature per sample, single class. Used by quadratic toys.
    pub fn from_scalars(values: &[f64]) -> Result<Self, ProblemError> {
        Self::new(values.to_vec(), vec![0; values.len()], 1, 1)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self, sample: usize) -> &[f64] {
        &self.features[sample * self.n_features..(sample + 1) * self.n_features]
    }

    pub fn label(&self, sample: usize) -> usize {
        self.labels[sample]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copy of the listed samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.features(i));
        }
        Self {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }

    /// First `count` samples (or all of them if fewer exist).
    pub fn head(&self, count: usize) -> Self {
        let idx: Vec<usize> = (0..count.min(self.n_samples())).collect();
        self.subset(&idx)
    }

    /// Gaussian class clusters: `mu_c ~ N(0, separation^2 I)` and
    /// `x = mu_label + N(0, I)`. Labels cycle through the classes so every
    /// class holds `samples / classes` points (up to rounding).
    pub fn synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Self, ProblemError> {
        let SyntheticSpec {
            samples,
            features,
            classes,
            separation,
        } = *spec;
        if classes == 0 || samples == 0 {
            return Err(ProblemError::InvalidDataset(
                "synthetic data needs samples and classes".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<f64> = (0..classes * features)
            .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut xs = Vec::with_capacity(samples * features);
        let mut labels = Vec::with_capacity(samples);
        for i in 0..samples {
            let c = i % classes;
            labels.push(c);
            for j in 0..features {
                xs.push(centers[c * features + j] + rng.sample::<f64, _>(StandardNormal));
            }
        }
        Self::new(xs, labels, features, classes)
    }
}

/// Parameters of [`Dataset::synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub features: usize,
    pub classes: usize,
    pub separation: f64,
}
