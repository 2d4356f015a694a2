//! L2-regularized logistic regression fit by full-batch gradient descent.
//!
//! Stands in for the linear-kernel SVM of the original protocol: same linear
//! hypothesis class, no external dependency. Features are standardized
//! internally so the fixed learning rate behaves across embedding scales.
//! Full-batch updates make the fit deterministic and invariant to example
//! order and dataset duplication.

use crate::error::{DseError, Result};
use crate::trainer::sigmoid;

#[derive(Debug, Clone)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 500,
            learning_rate: 2.0,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl LinearClassifier {
    fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.mean[i]) * self.scale[i];
        }
    }

    /// Signed distance from the decision boundary (in standardized space).
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; x.len()];
        self.standardize(x, &mut z);
        self.bias
            + self
                .weights
                .iter()
                .zip(&z)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        if self.decision(x) >= 0.0 {
            1
        } else {
            0
        }
    }
}

pub fn train_linear_classifier(
    features: &[Vec<f64>],
    labels: &[u8],
    cfg: &ClassifierConfig,
) -> Result<LinearClassifier> {
    assert_eq!(features.len(), labels.len());
    if features.is_empty() {
        return Err(DseError::EmptyCorpus);
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(DseError::SingleClass);
    }
    let n = features.len();
    let d = features[0].len();

    let mut mean = vec![0.0; d];
    for x in features {
        for i in 0..d {
            mean[i] += x[i];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut variance = vec![0.0; d];
    for x in features {
        for i in 0..d {
            let c = x[i] - mean[i];
            variance[i] += c * c;
        }
    }
    let scale: Vec<f64> = variance
        .iter()
        .map(|v| {
            let sd = (v / n as f64).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();

    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|x| {
            (0..d)
                .map(|i| (x[i] - mean[i]) * scale[i])
                .collect::<Vec<f64>>()
        })
        .collect();

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut grad_w = vec![0.0; d];
    for _ in 0..cfg.epochs {
        grad_w.fill(0.0);
        let mut grad_b = 0.0;
        for (x, &y) in standardized.iter().zip(labels) {
            let z = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            let err = sigmoid(z) - y as f64;
            for i in 0..d {
                grad_w[i] += err * x[i];
            }
            grad_b += err;
        }
        let inv_n = 1.0 / n as f64;
        for i in 0..d {
            weights[i] -= cfg.learning_rate * (grad_w[i] * inv_n + cfg.l2 * weights[i]);
        }
        bias -= cfg.learning_rate * grad_b * inv_n;
    }

    Ok(LinearClassifier {
        weights,
        bias,
        mean,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_reaches_perfect_training_accuracy() {
        let features = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        let labels = vec![0, 1];
        let clf = train_linear_classifier(&features, &labels, &ClassifierConfig::default()).unwrap();
        for (x, &y) in features.iter().zip(&labels) {
            assert_eq!(clf.predict(x), y);
        }
    }

    #[test]
    fn zero_features_predict_majority() {
        let features = vec![vec![0.0, 0.0]; 5];
        let labels = vec![1, 1, 1, 0, 0];
        let clf = train_linear_classifier(&features, &labels, &ClassifierConfig::default()).unwrap();
        assert_eq!(clf.predict(&[0.0, 0.0]), 1);

        let labels = vec![0, 0, 0, 1, 1];
        let clf = train_linear_classifier(&features, &labels, &ClassifierConfig::default()).unwrap();
        assert_eq!(clf.predict(&[0.0, 0.0]), 0);
    }

    #[test]
    fn single_class_is_an_error() {
        let features = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            train_linear_classifier(&features, &[1, 1], &ClassifierConfig::default()),
            Err(DseError::SingleClass)
        ));
    }

    #[test]
    fn duplication_preserves_boundary_direction() {
        let features = vec![
            vec![0.1, 1.0],
            vec![0.3, -0.5],
            vec![-0.8, 0.2],
            vec![-0.2, -0.9],
        ];
        let labels = vec![1, 1, 0, 0];
        let cfg = ClassifierConfig::default();
        let once = train_linear_classifier(&features, &labels, &cfg).unwrap();

        let mut doubled = features.clone();
        doubled.extend(features.iter().cloned());
        let mut doubled_labels = labels.clone();
        doubled_labels.extend(labels.iter().copied());
        let twice = train_linear_classifier(&doubled, &doubled_labels, &cfg).unwrap();

        let dot: f64 = once.weights.iter().zip(&twice.weights).map(|(a, b)| a * b).sum();
        let na: f64 = once.weights.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = twice.weights.iter().map(|b| b * b).sum::<f64>().sqrt();
        let cosine = dot / (na * nb);
        assert!(cosine > 1.0 - 1e-9, "cosine = {cosine}");
        assert!((na - nb).abs() / na < 1e-9);
    }

    #[test]
    fn deterministic_across_runs() {
        let features = vec![vec![0.5, -1.0], vec![-0.5, 1.0], vec![1.5, 0.3], vec![-1.1, -0.4]];
        let labels = vec![1, 0, 1, 0];
        let cfg = ClassifierConfig::default();
        let a = train_linear_classifier(&features, &labels, &cfg).unwrap();
        let b = train_linear_classifier(&features, &labels, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }
}
