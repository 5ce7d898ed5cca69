//! Linear one-vs-rest SVM baseline trained with Pegasos-style
//! stochastic subgradient steps on the hinge loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{argmax, multi_label_f1, single_label_f1, F1Report};

use super::encoders::TextFeatures;
use super::model::{EncodedExample, LabelMode, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub mode: LabelMode,
    /// Margin penalty; the regularizer is `1 / (C n)`.
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl SvmConfig {
    pub fn new(mode: LabelMode) -> Self {
        SvmConfig {
            mode,
            c: 1.0,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub config: SvmConfig,
    /// One weight row per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

fn features(ex: &EncodedExample) -> Result<Vec<f64>> {
    let TextFeatures::Dense(t) = &ex.text else {
        return Err(Error::config("text", "the SVM baseline needs dense text features"));
    };
    Ok(t.iter().chain(&ex.image_vec).copied().collect())
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

impl LinearSvm {
    pub fn train(config: SvmConfig, train: &[EncodedExample]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("training set".into()));
        }
        if !(config.c > 0.0) {
            return Err(Error::config("c", "must be positive"));
        }
        let xs: Vec<Vec<f64>> = train.iter().map(features).collect::<Result<_>>()?;
        let dim = xs[0].len();
        if let Some(x) = xs.iter().find(|x| x.len() != dim) {
            return Err(Error::dims("svm features", dim, x.len()));
        }
        let bits: Vec<[bool; NUM_CLASSES]> = train.iter().map(|ex| ex.target.bits()).collect();
        let lambda = 1.0 / (config.c * train.len() as f64);
        let mut weights = vec![vec![0.0; dim]; NUM_CLASSES];
        let mut bias = vec![0.0; NUM_CLASSES];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for class in 0..NUM_CLASSES {
            let w = &mut weights[class];
            let b = &mut bias[class];
            let mut t = 0usize;
            for _ in 0..config.epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    let y = if bits[i][class] { 1.0 } else { -1.0 };
                    let margin = y * (dot(w, &xs[i]) + *b);
                    let shrink = 1.0 - eta * lambda;
                    w.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for (v, &xv) in w.iter_mut().zip(&xs[i]) {
                            *v += eta * y * xv;
                        }
                        *b += eta * y;
                    }
                }
            }
        }
        Ok(LinearSvm {
            config,
            weights,
            bias,
        })
    }

    pub fn decision(&self, ex: &EncodedExample) -> Result<Vec<f64>> {
        let x = features(ex)?;
        let dim = self.weights[0].len();
        if x.len() != dim {
            return Err(Error::dims("svm features", dim, x.len()));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, &x) + b)
            .collect())
    }

    pub fn evaluate(&self, test: &[EncodedExample]) -> Result<F1Report> {
        if test.is_empty() {
            return Err(Error::EmptyDataset("test set".into()));
        }
        let scores: Vec<Vec<f64>> = test.iter().map(|ex| self.decision(ex)).collect::<Result<_>>()?;
        match self.config.mode {
            LabelMode::SingleLabel => {
                let gold: Vec<usize> = test
                    .iter()
                    .map(|ex| ex.target.class_index().ok_or_else(|| Error::config("mode", "multi-label target")))
                    .collect::<Result<_>>()?;
                let pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
                single_label_f1(&gold, &pred, NUM_CLASSES)
            }
            LabelMode::MultiLabel => {
                let gold: Vec<Vec<bool>> = test.iter().map(|ex| ex.target.bits().to_vec()).collect();
                let pred: Vec<Vec<bool>> = scores
                    .iter()
                    .map(|s| s.iter().map(|&v| v > 0.0).collect())
                    .collect();
                multi_label_f1(&gold, &pred)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::model::Target;
    use crate::labelmap::SingleLabel;

    #[test]
    fn separates_one_hot_classes() {
        let data: Vec<EncodedExample> = (0..24)
            .map(|i| {
                let mut v = vec![0.0; 7];
                v[i % 6] = 1.0;
                v[6] = (i % 3) as f64;
                EncodedExample {
                    pair_id: i.to_string(),
                    text: TextFeatures::Dense(v),
                    image_vec: vec![],
                    target: Target::Single(SingleLabel::from_index(i % 6).unwrap()),
                }
            })
            .collect();
        let mut cfg = SvmConfig::new(LabelMode::SingleLabel);
        cfg.epochs = 50;
        let svm = LinearSvm::train(cfg, &data).unwrap();
        assert_eq!(svm.evaluate(&data).unwrap().weighted, 1.0);
        assert_eq!(svm, LinearSvm::train(cfg, &data).unwrap());
    }
}
