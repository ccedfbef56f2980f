//! Black-box classifiers with deterministic fixed-point reference
//! implementations, and their canonical byte encoding.
//!
//! Canonical bytes: `"FAIRM1"` ‖ architecture id (1 B) ‖ dimension u32 LE ‖
//! num_labels u32 LE ‖ architecture parameters. Linear parameters are one row
//! per label, `w_y[0..d]` followed by `b_y`, each an i32 LE Q16.16 value.
//! Lookup tables carry an entry count, the default label and one row per
//! entry (key features then label). A biased wrapper carries the inner
//! model's full canonical bytes, per-group flip rates as u32 LE micro-units
//! and an 8-byte LE seed.

mod dataset;
pub mod planted;

use std::collections::BTreeMap;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha3::{Digest, Sha3_256};
use thiserror::Error;

pub use dataset::{Dataset, GroupId, Label, Sample};

use crate::codec::{DecodeError, Reader, Writer};
use crate::fixed::{dot_with_bias, Fixed};
use crate::micro::{Micro, MICRO_SCALE};

pub const MODEL_MAGIC: &[u8; 6] = b"FAIRM1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("id out of range: {0}")]
    IdOutOfRange(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model bytes: {0}")]
    Malformed(#[from] DecodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    ThresholdLinear,
    LookupTable,
    BiasedWrapper,
}

impl Architecture {
    pub fn id(self) -> u8 {
        match self {
            Architecture::ThresholdLinear => 1,
            Architecture::LookupTable => 2,
            Architecture::BiasedWrapper => 3,
        }
    }

    fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Architecture::ThresholdLinear),
            2 => Some(Architecture::LookupTable),
            3 => Some(Architecture::BiasedWrapper),
            _ => None,
        }
    }
}

/// Per-label affine scores `⟨w_y, x⟩ + b_y`; predicts the argmax, lowest
/// label on ties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearModel {
    dimension: usize,
    num_labels: usize,
    /// `num_labels` rows of `dimension + 1` values; the last one is the bias.
    rows: Vec<Fixed>,
}

impl LinearModel {
    pub fn new(weights: Vec<Vec<Fixed>>, biases: Vec<Fixed>) -> Result<Self, ModelError> {
        let num_labels = weights.len();
        if num_labels == 0 || biases.len() != num_labels {
            return Err(ModelError::InvalidWeights(format!(
                "{} weight rows, {} biases",
                num_labels,
                biases.len()
            )));
        }
        let dimension = weights[0].len();
        let mut rows = Vec::with_capacity(num_labels * (dimension + 1));
        for (w, b) in weights.into_iter().zip(biases) {
            if w.len() != dimension {
                return Err(ModelError::InvalidWeights("ragged weight rows".into()));
            }
            rows.extend(w);
            rows.push(b);
        }
        Ok(LinearModel {
            dimension,
            num_labels,
            rows,
        })
    }

    pub fn zeros(dimension: usize, num_labels: usize) -> Self {
        LinearModel {
            dimension,
            num_labels,
            rows: vec![Fixed::ZERO; num_labels * (dimension + 1)],
        }
    }

    /// `w_y = e_y`, zero bias: predicts the label whose coordinate is largest
    /// among the first `num_labels` coordinates.
    pub fn coordinate_argmax(dimension: usize, num_labels: usize) -> Result<Self, ModelError> {
        if dimension < num_labels {
            return Err(ModelError::InvalidConfig(format!(
                "dimension {dimension} < num_labels {num_labels}"
            )));
        }
        let mut m = Self::zeros(dimension, num_labels);
        for y in 0..num_labels {
            m.rows[y * (dimension + 1) + y] = Fixed::ONE;
        }
        Ok(m)
    }

    pub fn parameters(&self) -> &[Fixed] {
        &self.rows
    }

    pub fn parameters_mut(&mut self) -> &mut [Fixed] {
        &mut self.rows
    }

    pub fn score(&self, label: usize, features: &[Fixed]) -> Fixed {
        let row = &self.rows[label * (self.dimension + 1)..(label + 1) * (self.dimension + 1)];
        dot_with_bias(features, &row[..self.dimension], row[self.dimension])
    }

    fn predict(&self, features: &[Fixed]) -> Label {
        let mut best = 0usize;
        let mut best_score = self.score(0, features);
        for y in 1..self.num_labels {
            let s = self.score(y, features);
            if s > best_score {
                best = y;
                best_score = s;
            }
        }
        best as Label
    }
}

/// A finite table from exact feature vectors to labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupModel {
    dimension: usize,
    num_labels: usize,
    default_label: Label,
    entries: BTreeMap<Vec<Fixed>, Label>,
}

impl LookupModel {
    pub fn new(
        dimension: usize,
        num_labels: usize,
        default_label: Label,
        entries: impl IntoIterator<Item = (Vec<Fixed>, Label)>,
    ) -> Result<Self, ModelError> {
        if default_label as usize >= num_labels {
            return Err(ModelError::IdOutOfRange(format!("default label {default_label}")));
        }
        let mut map = BTreeMap::new();
        for (k, v) in entries {
            if k.len() != dimension {
                return Err(ModelError::DimensionMismatch {
                    expected: dimension,
                    actual: k.len(),
                });
            }
            if v as usize >= num_labels {
                return Err(ModelError::IdOutOfRange(format!("label {v}")));
            }
            map.insert(k, v);
        }
        Ok(LookupModel {
            dimension,
            num_labels,
            default_label,
            entries: map,
        })
    }

    fn predict(&self, features: &[Fixed]) -> Label {
        self.entries.get(features).copied().unwrap_or(self.default_label)
    }
}

/// Wraps an inner model and replaces its prediction, per group, with a
/// different label at a configured rate. The coin for each query is derived
/// from the seed, the group and the feature bytes, so the wrapper is still a
/// deterministic function of its input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasedWrapper {
    inner: Box<ModelSpec>,
    flip_rates: Vec<Micro>,
    seed: u64,
}

impl BiasedWrapper {
    pub fn new(inner: ModelSpec, flip_rates: Vec<Micro>, seed: u64) -> Result<Self, ModelError> {
        if matches!(inner, ModelSpec::BiasedWrapper(_)) {
            return Err(ModelError::InvalidConfig("nested biased wrappers".into()));
        }
        if flip_rates.is_empty() {
            return Err(ModelError::InvalidConfig("a biased wrapper needs at least one group".into()));
        }
        if let Some(r) = flip_rates.iter().find(|r| !r.is_closed_unit()) {
            return Err(ModelError::InvalidWeights(format!("flip rate {r} > 1")));
        }
        if inner.num_labels() < 2 && flip_rates.iter().any(|r| *r > Micro::ZERO) {
            return Err(ModelError::InvalidConfig("cannot flip a single-label model".into()));
        }
        Ok(BiasedWrapper {
            inner: Box::new(inner),
            flip_rates,
            seed,
        })
    }

    pub fn inner(&self) -> &ModelSpec {
        &self.inner
    }

    pub fn flip_rates(&self) -> &[Micro] {
        &self.flip_rates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn predict(&self, sample_features: &[Fixed], group: GroupId) -> Result<Label, ModelError> {
        let inner = self.inner.predict_features(sample_features, group)?;
        let rate = *self
            .flip_rates
            .get(group as usize)
            .ok_or_else(|| ModelError::IdOutOfRange(format!("group {group} has no flip rate")))?;
        if rate == Micro::ZERO {
            return Ok(inner);
        }
        let mut hasher = Sha3_256::new();
        hasher.update(b"faircert/flip/v1");
        hasher.update(self.seed.to_le_bytes());
        hasher.update(group.to_le_bytes());
        for f in sample_features {
            hasher.update(f.to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(hasher.finalize().into());
        let coin = ((rng.next_u64() as u128 * MICRO_SCALE as u128) >> 64) as u32;
        if coin >= rate.units() {
            return Ok(inner);
        }
        let labels = self.inner.num_labels() as u64;
        let shift = 1 + rng.next_u64() % (labels - 1);
        Ok(((inner as u64 + shift) % labels) as Label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    ThresholdLinear(LinearModel),
    LookupTable(LookupModel),
    BiasedWrapper(BiasedWrapper),
}

impl ModelSpec {
    pub fn architecture(&self) -> Architecture {
        match self {
            ModelSpec::ThresholdLinear(_) => Architecture::ThresholdLinear,
            ModelSpec::LookupTable(_) => Architecture::LookupTable,
            ModelSpec::BiasedWrapper(_) => Architecture::BiasedWrapper,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            ModelSpec::ThresholdLinear(m) => m.dimension,
            ModelSpec::LookupTable(m) => m.dimension,
            ModelSpec::BiasedWrapper(m) => m.inner.dimension(),
        }
    }

    pub fn num_labels(&self) -> usize {
        match self {
            ModelSpec::ThresholdLinear(m) => m.num_labels,
            ModelSpec::LookupTable(m) => m.num_labels,
            ModelSpec::BiasedWrapper(m) => m.inner.num_labels(),
        }
    }

    /// Number of 32-bit parameter words, recursively.
    pub fn parameter_count(&self) -> usize {
        match self {
            ModelSpec::ThresholdLinear(m) => m.rows.len(),
            ModelSpec::LookupTable(m) => 1 + m.entries.len() * (m.dimension + 1),
            ModelSpec::BiasedWrapper(m) => m.inner.parameter_count() + m.flip_rates.len() + 2,
        }
    }

    pub fn predict(&self, sample: &Sample) -> Result<Label, ModelError> {
        self.predict_features(&sample.features, sample.group)
    }

    pub fn predict_features(&self, features: &[Fixed], group: GroupId) -> Result<Label, ModelError> {
        if features.len() != self.dimension() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dimension(),
                actual: features.len(),
            });
        }
        match self {
            ModelSpec::ThresholdLinear(m) => Ok(m.predict(features)),
            ModelSpec::LookupTable(m) => Ok(m.predict(features)),
            ModelSpec::BiasedWrapper(m) => m.predict(features, group),
        }
    }

    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<Label>, ModelError> {
        dataset.samples().iter().map(|s| self.predict(s)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    fn encode_into(&self, w: &mut Writer) {
        w.bytes(MODEL_MAGIC)
            .u8(self.architecture().id())
            .u32(self.dimension() as u32)
            .u32(self.num_labels() as u32);
        match self {
            ModelSpec::ThresholdLinear(m) => {
                for p in &m.rows {
                    w.i32(p.to_bits());
                }
            }
            ModelSpec::LookupTable(m) => {
                w.u32(m.entries.len() as u32).i32(m.default_label as i32);
                for (k, v) in &m.entries {
                    for f in k {
                        w.i32(f.to_bits());
                    }
                    w.i32(*v as i32);
                }
            }
            ModelSpec::BiasedWrapper(m) => {
                m.inner.encode_into(w);
                for r in &m.flip_rates {
                    w.u32(r.units());
                }
                w.u64(m.seed);
            }
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader::new(bytes);
        let model = Self::decode_from(&mut r, true)?;
        r.finish()?;
        Ok(model)
    }

    fn decode_from(r: &mut Reader<'_>, top_level: bool) -> Result<Self, ModelError> {
        r.expect_magic(MODEL_MAGIC)?;
        let arch = Architecture::from_id(r.u8()?).ok_or(DecodeError::InvalidValue("architecture id"))?;
        let dimension = r.u32()? as usize;
        let num_labels = r.u32()? as usize;
        if num_labels == 0 || num_labels > Label::MAX as usize + 1 {
            return Err(DecodeError::InvalidValue("num_labels").into());
        }
        match arch {
            Architecture::ThresholdLinear => {
                let n = num_labels
                    .checked_mul(dimension + 1)
                    .filter(|n| n.saturating_mul(4) <= r.remaining())
                    .ok_or(DecodeError::Truncated {
                        offset: r.position(),
                        needed: 4,
                    })?;
                let rows = (0..n).map(|_| r.i32().map(Fixed::from_bits)).collect::<Result<_, _>>()?;
                Ok(ModelSpec::ThresholdLinear(LinearModel {
                    dimension,
                    num_labels,
                    rows,
                }))
            }
            Architecture::LookupTable => {
                let count = r.u32()? as usize;
                let default = r.i32()?;
                let default = Label::try_from(default).map_err(|_| DecodeError::InvalidValue("default label"))?;
                if count.saturating_mul((dimension + 1) * 4) > r.remaining() {
                    return Err(DecodeError::Truncated {
                        offset: r.position(),
                        needed: count * (dimension + 1) * 4 - r.remaining(),
                    }
                    .into());
                }
                let mut entries = Vec::with_capacity(count);
                for _ in 0..count {
                    let key = (0..dimension).map(|_| r.i32().map(Fixed::from_bits)).collect::<Result<Vec<_>, _>>()?;
                    let label = Label::try_from(r.i32()?).map_err(|_| DecodeError::InvalidValue("label"))?;
                    entries.push((key, label));
                }
                let prev_len = entries.len();
                let model = LookupModel::new(dimension, num_labels, default, entries)?;
                if model.entries.len() != prev_len {
                    return Err(DecodeError::InvalidValue("duplicate lookup key").into());
                }
                Ok(ModelSpec::LookupTable(model))
            }
            Architecture::BiasedWrapper => {
                let inner = Self::decode_from(r, false)?;
                if inner.dimension() != dimension || inner.num_labels() != num_labels {
                    return Err(DecodeError::InvalidValue("wrapper header").into());
                }
                // The wrapper is the outermost encoding, so the rates fill
                // everything between the inner model and the trailing seed.
                if !top_level || r.remaining() < 8 || !(r.remaining() - 8).is_multiple_of(4) {
                    return Err(DecodeError::InvalidValue("flip rate block").into());
                }
                let groups = (r.remaining() - 8) / 4;
                let flip_rates = (0..groups).map(|_| r.u32().map(Micro::from_units)).collect::<Result<_, _>>()?;
                let seed = r.u64()?;
                Ok(ModelSpec::BiasedWrapper(BiasedWrapper::new(inner, flip_rates, seed)?))
            }
        }
    }
}

impl From<LinearModel> for ModelSpec {
    fn from(m: LinearModel) -> Self {
        ModelSpec::ThresholdLinear(m)
    }
}

impl From<LookupModel> for ModelSpec {
    fn from(m: LookupModel) -> Self {
        ModelSpec::LookupTable(m)
    }
}

impl From<BiasedWrapper> for ModelSpec {
    fn from(m: BiasedWrapper) -> Self {
        ModelSpec::BiasedWrapper(m)
    }
}
