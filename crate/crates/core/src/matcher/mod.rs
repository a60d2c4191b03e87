//! Pair matcher producing a representation vector, a match confidence and a
//! prediction for every candidate pair.
//!
//! The built-in [`BaselineMatcher`] is a one-hidden-layer network over hashed
//! n-gram features ([`features`]); its hidden activation plays the role of the
//! pair representation. Encodings produced elsewhere can be brought in through
//! the JSON Lines exchange format in [`exchange`].

pub mod exchange;
pub mod features;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CandidatePair, Label};
use crate::error::{Error, Result};
use crate::eval::f1_counts;
use features::{featurize, SparseFeatures};

pub use exchange::{export_encodings, import_encodings};

/// Confidence at or above which a pair is predicted to match.
pub const MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEncoding {
    pub pair_id: String,
    pub representation: Vec<f64>,
    /// Probability of match in [0, 1].
    pub confidence: f64,
    pub prediction: Label,
}

impl PairEncoding {
    pub fn new(pair_id: impl Into<String>, representation: Vec<f64>, confidence: f64) -> Self {
        Self {
            pair_id: pair_id.into(),
            representation,
            confidence,
            prediction: predict(confidence),
        }
    }

    /// Confidence in the pair's own predicted label: φ for predicted matches,
    /// 1 − φ for predicted non-matches.
    pub fn label_confidence(&self) -> f64 {
        if self.prediction == 1 {
            self.confidence
        } else {
            1.0 - self.confidence
        }
    }
}

pub fn predict(confidence: f64) -> Label {
    (confidence >= MATCH_THRESHOLD) as Label
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Number of hash buckets for the sparse input.
    pub feature_space_size: usize,
    pub n_gram_length: usize,
    /// Width of the hidden layer, i.e. the representation dimension.
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Input weights start uniform in `±init_scale`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            feature_space_size: 1 << 18,
            n_gram_length: 3,
            hidden_dim: 64,
            epochs: 20,
            learning_rate: 0.05,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_space_size == 0 || self.n_gram_length == 0 || self.hidden_dim == 0 || self.epochs == 0 {
            return Err(Error::Config("matcher counts must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineMatcher {
    config: MatcherConfig,
    /// Row-major `feature_space_size × hidden_dim`.
    input_weights: Vec<f32>,
    hidden_bias: Vec<f32>,
    output_weights: Vec<f32>,
    output_bias: f32,
    /// Mean training loss before the first epoch followed by one entry per epoch.
    pub loss_history: Vec<f64>,
    /// Validation F1 of the selected epoch, when a validation set was supplied.
    pub validation_f1: Option<f64>,
    pub selected_epoch: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

impl BaselineMatcher {
    fn init(config: &MatcherConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.hidden_dim;
        let input_weights = (0..config.feature_space_size * d)
            .map(|_| rng.gen_range(-1.0f32..1.0) * config.init_scale as f32)
            .collect();
        let scale = 1.0 / (d as f32).sqrt();
        let output_weights = (0..d).map(|_| rng.gen_range(-scale..scale)).collect();
        Self {
            config: config.clone(),
            input_weights,
            hidden_bias: vec![0.0; d],
            output_weights,
            output_bias: 0.0,
            loss_history: Vec::new(),
            validation_f1: None,
            selected_epoch: 0,
        }
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.config
    }

    fn hidden(&self, x: &SparseFeatures) -> Vec<f32> {
        let d = self.config.hidden_dim;
        let mut pre = self.hidden_bias.clone();
        for &(i, v) in &x.entries {
            let row = &self.input_weights[i as usize * d..(i as usize + 1) * d];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += v * w;
            }
        }
        pre.iter_mut().for_each(|p| *p = p.tanh());
        pre
    }

    fn forward(&self, x: &SparseFeatures) -> (Vec<f32>, f64) {
        let h = self.hidden(x);
        let logit: f32 = self.output_bias + h.iter().zip(&self.output_weights).map(|(a, b)| a * b).sum::<f32>();
        (h, sigmoid(logit as f64))
    }

    fn sgd_step(&mut self, x: &SparseFeatures, y: f64, lr: f32) {
        let d = self.config.hidden_dim;
        let (h, p) = self.forward(x);
        let delta_out = (p - y) as f32;
        let mut delta_hidden = vec![0f32; d];
        for j in 0..d {
            delta_hidden[j] = delta_out * self.output_weights[j] * (1.0 - h[j] * h[j]);
            self.output_weights[j] -= lr * delta_out * h[j];
        }
        self.output_bias -= lr * delta_out;
        for &(i, v) in &x.entries {
            let row = &mut self.input_weights[i as usize * d..(i as usize + 1) * d];
            for (w, g) in row.iter_mut().zip(&delta_hidden) {
                *w -= lr * v * g;
            }
        }
        for (b, g) in self.hidden_bias.iter_mut().zip(&delta_hidden) {
            *b -= lr * g;
        }
    }

    fn mean_loss(&self, examples: &[(SparseFeatures, f64)]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        examples.iter().map(|(x, y)| bce(self.forward(x).1, *y)).sum::<f64>() / examples.len() as f64
    }

    fn features(&self, pair: &CandidatePair) -> SparseFeatures {
        featurize(pair, self.config.feature_space_size, self.config.n_gram_length)
    }

    pub fn confidence(&self, pair: &CandidatePair) -> f64 {
        self.forward(&self.features(pair)).1
    }

    pub fn encode(&self, pair: &CandidatePair) -> PairEncoding {
        let (h, p) = self.forward(&self.features(pair));
        PairEncoding::new(pair.pair_id.clone(), h.into_iter().map(f64::from).collect(), p)
    }
}

/// Train a fresh matcher on `labeled ∪ weak`. When `validation` is non-empty the
/// parameters of the epoch with the best validation F1 are kept (earliest on ties).
pub fn train_baseline(
    labeled: &[(&CandidatePair, Label)],
    weak: &[(&CandidatePair, Label)],
    validation: &[&CandidatePair],
    config: &MatcherConfig,
) -> Result<BaselineMatcher> {
    config.validate()?;
    let positives = labeled.iter().filter(|(_, y)| *y == 1).count();
    let negatives = labeled.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::ColdStart { positives, negatives });
    }

    let space = config.feature_space_size;
    let n = config.n_gram_length;
    let examples: Vec<(SparseFeatures, f64)> = labeled
        .iter()
        .chain(weak)
        .map(|(p, y)| (featurize(p, space, n), *y as f64))
        .collect();
    let val: Vec<(SparseFeatures, Label)> = validation
        .iter()
        .filter_map(|p| p.ground_truth.map(|y| (featurize(p, space, n), y)))
        .collect();

    let mut model = BaselineMatcher::init(config);
    let mut history = vec![model.mean_loss(&examples)];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let lr = config.learning_rate as f32;
    let mut best: Option<(f64, usize, BaselineMatcher)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = &examples[i];
            model.sgd_step(x, *y, lr);
        }
        history.push(model.mean_loss(&examples));
        if !val.is_empty() {
            let (tp, fp, fn_) = val.iter().fold((0, 0, 0), |acc, (x, y)| {
                let pred = predict(model.forward(x).1);
                f1_counts(acc, pred, *y)
            });
            let f1 = crate::eval::f1_from_counts(tp, fp, fn_).2;
            if best.as_ref().map_or(true, |(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, model.clone()));
            }
        }
    }

    let mut model = match best {
        Some((f1, epoch, mut chosen)) => {
            chosen.validation_f1 = Some(f1);
            chosen.selected_epoch = epoch;
            chosen
        }
        None => {
            model.selected_epoch = config.epochs;
            model
        }
    };
    model.loss_history = history;
    Ok(model)
}

/// Encode every pair; output order follows input order.
pub fn encode_all(matcher: &BaselineMatcher, pairs: &[CandidatePair]) -> Vec<PairEncoding> {
    pairs.iter().map(|p| matcher.encode(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn small_config() -> MatcherConfig {
        MatcherConfig {
            feature_space_size: 1 << 14,
            hidden_dim: 16,
            epochs: 10,
            ..MatcherConfig::default()
        }
    }

    fn synthetic(n: usize, seed: u64) -> Vec<CandidatePair> {
        generate(&SynthConfig {
            n_pairs: n,
            positive_rate: 0.5,
            seed,
            ..SynthConfig::default()
        })
    }

    fn labeled(pairs: &[CandidatePair]) -> Vec<(&CandidatePair, Label)> {
        pairs.iter().map(|p| (p, p.ground_truth.unwrap())).collect()
    }

    #[test]
    fn seed_sized_training_beats_chance_on_training_set() {
        let pairs = synthetic(100, 1);
        let data = labeled(&pairs);
        let m = train_baseline(&data, &[], &[], &small_config()).unwrap();
        let correct = data.iter().filter(|(p, y)| predict(m.confidence(p)) == *y).count();
        assert!(correct as f64 / data.len() as f64 > 0.5, "accuracy {correct}/100");
    }

    #[test]
    fn cold_start_is_rejected() {
        let pairs = synthetic(20, 2);
        assert!(matches!(
            train_baseline(&[], &[], &[], &small_config()),
            Err(Error::ColdStart { positives: 0, negatives: 0 })
        ));
        let negatives: Vec<_> = labeled(&pairs).into_iter().filter(|(_, y)| *y == 0).collect();
        assert!(matches!(
            train_baseline(&negatives, &[], &[], &small_config()),
            Err(Error::ColdStart { positives: 0, .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let pairs = synthetic(60, 3);
        let data = labeled(&pairs);
        let a = encode_all(&train_baseline(&data, &[], &[], &small_config()).unwrap(), &pairs);
        let b = encode_all(&train_baseline(&data, &[], &[], &small_config()).unwrap(), &pairs);
        assert_eq!(a, b);
    }

    #[test]
    fn encodings_are_finite_and_consistent() {
        let pairs = synthetic(60, 4);
        let m = train_baseline(&labeled(&pairs), &[], &[], &small_config()).unwrap();
        let enc = encode_all(&m, &pairs);
        assert_eq!(enc.len(), pairs.len());
        for (e, p) in enc.iter().zip(&pairs) {
            assert_eq!(e.pair_id, p.pair_id);
            assert_eq!(e.representation.len(), 16);
            assert!(e.representation.iter().all(|v| v.is_finite()));
            assert!((0.0..=1.0).contains(&e.confidence));
            assert_eq!(e.prediction == 1, e.confidence >= 0.5);
        }
    }

    #[test]
    fn self_pairs_score_above_mean_confidence() {
        let pairs = synthetic(200, 5);
        let m = train_baseline(&labeled(&pairs), &[], &[], &small_config()).unwrap();
        let mean = pairs.iter().map(|p| m.confidence(p)).sum::<f64>() / pairs.len() as f64;
        let identity: Vec<CandidatePair> = pairs[..50]
            .iter()
            .map(|p| CandidatePair {
                right: p.left.clone(),
                ..p.clone()
            })
            .collect();
        let self_mean = identity.iter().map(|p| m.confidence(p)).sum::<f64>() / identity.len() as f64;
        assert!(self_mean > mean, "identity {self_mean} vs mean {mean}");
    }

    #[test]
    fn loss_does_not_increase_with_small_learning_rate() {
        let pairs = synthetic(80, 6);
        let cfg = MatcherConfig {
            learning_rate: 0.01,
            ..small_config()
        };
        let m = train_baseline(&labeled(&pairs), &[], &[], &cfg).unwrap();
        assert_eq!(m.loss_history.len(), cfg.epochs + 1);
        assert!(m.loss_history.last().unwrap() <= m.loss_history.first().unwrap());
    }

    #[test]
    fn validation_selects_an_epoch() {
        let pairs = synthetic(120, 7);
        let (train, val) = pairs.split_at(80);
        let val: Vec<&CandidatePair> = val.iter().collect();
        let m = train_baseline(&labeled(train), &[], &val, &small_config()).unwrap();
        assert!(m.validation_f1.is_some());
        assert!((1..=10).contains(&m.selected_epoch));
    }

    #[test]
    fn config_validation() {
        assert!(MatcherConfig { learning_rate: 0.0, ..small_config() }.validate().is_err());
        assert!(MatcherConfig { hidden_dim: 0, ..small_config() }.validate().is_err());
        assert!(small_config().validate().is_ok());
    }
}
