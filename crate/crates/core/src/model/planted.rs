//! Synthetic ground truth: a seeded mixture over (group, label) cells and a
//! planted classifier whose per-group error rates are known exactly.
//!
//! Features for a sample with label `y` are `margin·e_y + U[-spread, spread]^d`
//! with `margin = 2·spread + 1`, so the coordinate-argmax inner model is always
//! correct on the generating distribution. The planted model wraps that inner
//! model with per-group flip rates, which makes each group's true risk equal
//! its configured rate.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};

use super::{BiasedWrapper, Dataset, GroupId, Label, LinearModel, ModelError, ModelSpec, Sample};
use crate::fixed::Fixed;
use crate::micro::Micro;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub num_groups: usize,
    pub num_labels: usize,
    pub dimension: usize,
    /// Population weight of each (group, label) cell, indexed `[g][y]`.
    pub weights: Vec<Vec<f64>>,
    /// True error rate of the planted model on each group.
    pub error_rates: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_spread() -> f64 {
    1.0
}

/// Analytic fairness gaps of the planted model on the configured population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueGaps {
    pub ore: f64,
    pub eo: f64,
    pub dp: f64,
}

#[derive(Debug, Clone)]
pub struct PlantedDraw {
    pub dataset: Dataset,
    pub model: ModelSpec,
    pub true_gaps: TrueGaps,
}

impl PlantedConfig {
    /// Uniform weights over all cells.
    pub fn balanced(num_groups: usize, num_labels: usize, dimension: usize, error_rates: Vec<f64>, seed: u64) -> Self {
        let w = 1.0 / (num_groups * num_labels) as f64;
        PlantedConfig {
            num_groups,
            num_labels,
            dimension,
            weights: vec![vec![w; num_labels]; num_groups],
            error_rates,
            seed,
            spread: default_spread(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PlantedConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_groups == 0 || self.num_labels < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "need |G| >= 1 and |Y| >= 2, got {} and {}",
                self.num_groups, self.num_labels
            )));
        }
        if self.num_groups > GroupId::MAX as usize + 1 || self.num_labels > Label::MAX as usize + 1 {
            return Err(ModelError::InvalidConfig("cardinality too large".into()));
        }
        if self.dimension < self.num_labels {
            return Err(ModelError::InvalidConfig(format!(
                "dimension {} must be at least |Y| = {}",
                self.dimension, self.num_labels
            )));
        }
        if !(self.spread > 0.0 && self.spread <= 1000.0) {
            return Err(ModelError::InvalidConfig(format!("spread {}", self.spread)));
        }
        if self.weights.len() != self.num_groups || self.weights.iter().any(|row| row.len() != self.num_labels) {
            return Err(ModelError::InvalidWeights("weights must be |G| x |Y|".into()));
        }
        if self.weights.iter().flatten().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(ModelError::InvalidWeights("negative or non-finite weight".into()));
        }
        let total: f64 = self.weights.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        if self.error_rates.len() != self.num_groups {
            return Err(ModelError::InvalidWeights("one error rate per group required".into()));
        }
        if self.error_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(ModelError::InvalidWeights("error rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn rates(&self) -> Vec<Micro> {
        self.error_rates.iter().map(|&r| Micro::from_f64_rounded(r)).collect()
    }

    fn group_weight(&self, g: usize) -> f64 {
        self.weights[g].iter().sum()
    }

    fn stream(&self, domain: &str) -> ChaCha20Rng {
        let mut h = Sha3_256::new();
        h.update(b"faircert/planted/");
        h.update(domain.as_bytes());
        h.update(self.seed.to_le_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }

    fn model_seed(&self) -> u64 {
        let mut rng = self.stream("model");
        rng.gen()
    }

    /// The planted classifier: coordinate argmax wrapped with the configured
    /// per-group flip rates.
    pub fn planted_model(&self) -> Result<ModelSpec, ModelError> {
        self.validate()?;
        let inner = LinearModel::coordinate_argmax(self.dimension, self.num_labels)?;
        Ok(BiasedWrapper::new(inner.into(), self.rates(), self.model_seed())?.into())
    }

    /// The same distribution's perfect classifier (no flips).
    pub fn oracle_model(&self) -> Result<ModelSpec, ModelError> {
        self.validate()?;
        Ok(LinearModel::coordinate_argmax(self.dimension, self.num_labels)?.into())
    }

    pub fn true_gaps(&self) -> Result<TrueGaps, ModelError> {
        self.validate()?;
        let rates: Vec<f64> = self.rates().iter().map(|r| r.to_f64()).collect();
        let present: Vec<usize> = (0..self.num_groups).filter(|&g| self.group_weight(g) > 0.0).collect();
        let spread = |values: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if lo.is_finite() {
                hi - lo
            } else {
                0.0
            }
        };
        let ore = spread(&mut present.iter().map(|&g| rates[g]));
        let eo = (0..self.num_labels)
            .map(|y| spread(&mut present.iter().filter(|&&g| self.weights[g][y] > 0.0).map(|&g| rates[g])))
            .fold(0.0, f64::max);
        let others = (self.num_labels - 1) as f64;
        let dp = (0..self.num_labels)
            .map(|y| {
                spread(&mut present.iter().map(|&g| {
                    let p = self.weights[g][y] / self.group_weight(g);
                    p * (1.0 - rates[g]) + (1.0 - p) * rates[g] / others
                }))
            })
            .fold(0.0, f64::max);
        Ok(TrueGaps { ore, eo, dp })
    }

    fn draw_features(&self, rng: &mut ChaCha20Rng, label: Label) -> Vec<Fixed> {
        let margin = 2.0 * self.spread + 1.0;
        (0..self.dimension)
            .map(|j| {
                let noise = rng.gen_range(-self.spread..=self.spread);
                let v = if j == label as usize { margin + noise } else { noise };
                Fixed::from_f64(v)
            })
            .collect()
    }

    fn draw_label(&self, rng: &mut ChaCha20Rng, row: &[f64]) -> Label {
        let total: f64 = row.iter().sum();
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (y, w) in row.iter().enumerate() {
            acc += w;
            if u < acc && *w > 0.0 {
                return y as Label;
            }
        }
        row.iter().rposition(|w| *w > 0.0).unwrap_or(0) as Label
    }

    /// `m` i.i.d. draws from the configured mixture.
    pub fn sample(&self, m: usize) -> Result<Dataset, ModelError> {
        self.validate()?;
        if m == 0 {
            return Err(ModelError::InvalidConfig("m must be at least 1".into()));
        }
        let mut rng = self.stream("data");
        let cells: Vec<f64> = self.weights.iter().flatten().copied().collect();
        let mut samples = Vec::with_capacity(m);
        for _ in 0..m {
            let cell = self.draw_label(&mut rng, &cells) as usize;
            let (g, y) = (cell / self.num_labels, (cell % self.num_labels) as Label);
            let features = self.draw_features(&mut rng, y);
            samples.push(Sample::new(features, g as GroupId, y));
        }
        Dataset::new(self.dimension, self.num_groups, self.num_labels, samples)
    }

    /// Exactly `per_group[g]` samples from each group, labels drawn from the
    /// group's conditional label distribution. Samples are emitted in group
    /// order.
    pub fn sample_stratified(&self, per_group: &[usize]) -> Result<Dataset, ModelError> {
        self.validate()?;
        if per_group.len() != self.num_groups {
            return Err(ModelError::InvalidConfig("one count per group required".into()));
        }
        let mut rng = self.stream("stratified");
        let mut samples = Vec::with_capacity(per_group.iter().sum());
        for (g, &n) in per_group.iter().enumerate() {
            if n > 0 && self.group_weight(g) <= 0.0 {
                return Err(ModelError::InvalidWeights(format!("group {g} has zero weight")));
            }
            for _ in 0..n {
                let y = self.draw_label(&mut rng, &self.weights[g]);
                let features = self.draw_features(&mut rng, y);
                samples.push(Sample::new(features, g as GroupId, y));
            }
        }
        Dataset::new(self.dimension, self.num_groups, self.num_labels, samples)
    }
}

/// Draws `m` samples and returns them with the planted model and its
/// analytic gaps.
pub fn generate_planted(config: &PlantedConfig, m: usize) -> Result<PlantedDraw, ModelError> {
    Ok(PlantedDraw {
        dataset: config.sample(m)?,
        model: config.planted_model()?,
        true_gaps: config.true_gaps()?,
    })
}
