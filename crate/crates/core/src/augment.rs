//! Seeded, group- and label-preserving randomized transformations of test
//! samples.
//!
//! Each augmentation (additive Gaussian noise, coordinate masking) is invoked
//! independently with probability `invoke_prob · degree`. All randomness for
//! sample `i` comes from a ChaCha20 stream keyed by SHA3-256 of the master seed
//! and `i`, so the output depends only on (config, sample, index).

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::fixed::Fixed;
use crate::micro::{Micro, MICRO_SCALE};
use crate::model::{Dataset, Sample};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AugmentError {
    #[error("invalid augmentor configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentorConfig {
    pub master_seed: u64,
    /// Standard deviation of the additive per-coordinate noise.
    pub noise_sigma: Fixed,
    /// Per-coordinate zeroing probability once masking is invoked.
    pub mask_prob: Micro,
    /// Probability that each augmentation is invoked on a sample.
    pub invoke_prob: Micro,
    /// Scales `invoke_prob`.
    pub degree: Micro,
}

/// Wire size of the configuration without its seed.
pub const PUBLIC_CONFIG_LEN: usize = 16;

impl AugmentorConfig {
    pub fn new(
        master_seed: u64,
        noise_sigma: Fixed,
        mask_prob: Micro,
        invoke_prob: Micro,
        degree: Micro,
    ) -> Result<Self, AugmentError> {
        let c = AugmentorConfig {
            master_seed,
            noise_sigma,
            mask_prob,
            invoke_prob,
            degree,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn identity(master_seed: u64) -> Self {
        AugmentorConfig {
            master_seed,
            noise_sigma: Fixed::ZERO,
            mask_prob: Micro::ZERO,
            invoke_prob: Micro::ONE,
            degree: Micro::ONE,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.noise_sigma < Fixed::ZERO {
            return Err(AugmentError::InvalidConfig("noise sigma is negative".into()));
        }
        for (name, p) in [("mask_prob", self.mask_prob), ("invoke_prob", self.invoke_prob), ("degree", self.degree)] {
            if !p.is_closed_unit() {
                return Err(AugmentError::InvalidConfig(format!("{name}={p} not in [0,1]")));
            }
        }
        Ok(())
    }

    pub fn with_seed(self, master_seed: u64) -> Self {
        AugmentorConfig { master_seed, ..self }
    }

    /// sigma i32 ‖ mask u32 ‖ invoke u32 ‖ degree u32, all LE. The seed is
    /// withheld so it can be revealed after the model is committed.
    pub fn encode_public(&self, w: &mut Writer) {
        w.i32(self.noise_sigma.to_bits())
            .u32(self.mask_prob.units())
            .u32(self.invoke_prob.units())
            .u32(self.degree.units());
    }

    pub fn decode_public(r: &mut Reader<'_>, master_seed: u64) -> Result<Self, DecodeError> {
        let noise_sigma = Fixed::from_bits(r.i32()?);
        let mask_prob = Micro::from_units(r.u32()?);
        let invoke_prob = Micro::from_units(r.u32()?);
        let degree = Micro::from_units(r.u32()?);
        AugmentorConfig::new(master_seed, noise_sigma, mask_prob, invoke_prob, degree)
            .map_err(|_| DecodeError::InvalidValue("augmentor config"))
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.master_seed);
        self.encode_public(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let seed = r.u64()?;
        Self::decode_public(r, seed)
    }

    fn stream(&self, index: u64) -> ChaCha20Rng {
        let mut h = Sha3_256::new();
        h.update(b"faircert/aug/v1");
        h.update(self.master_seed.to_le_bytes());
        h.update(index.to_le_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

/// Uniform draw in [0, scale) from a 64-bit word, exact in integers.
fn scaled_coin(rng: &mut ChaCha20Rng, scale: u64) -> u64 {
    ((rng.next_u64() as u128 * scale as u128) >> 64) as u64
}

fn unit_open_closed(rng: &mut ChaCha20Rng) -> f64 {
    // (0, 1]
    1.0 - (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1 = unit_open_closed(rng);
    let u2 = unit_open_closed(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Augments one sample. Group and label are copied unchanged.
pub fn augment(config: &AugmentorConfig, sample: &Sample, index: u64) -> Sample {
    let mut rng = config.stream(index);
    let scale = MICRO_SCALE as u64 * MICRO_SCALE as u64;
    let invoke = config.invoke_prob.units() as u64 * config.degree.units() as u64;
    let noise_on = scaled_coin(&mut rng, scale) < invoke;
    let mask_on = scaled_coin(&mut rng, scale) < invoke;

    let mut features = sample.features.clone();
    if noise_on && config.noise_sigma > Fixed::ZERO {
        let sigma = config.noise_sigma.to_f64();
        for f in &mut features {
            *f = f.saturating_add(Fixed::from_f64(sigma * standard_normal(&mut rng)));
        }
    }
    if mask_on && config.mask_prob > Micro::ZERO {
        for f in &mut features {
            if scaled_coin(&mut rng, MICRO_SCALE as u64) < config.mask_prob.units() as u64 {
                *f = Fixed::ZERO;
            }
        }
    }
    Sample {
        features,
        group: sample.group,
        label: sample.label,
    }
}

/// Sample `i` of the output is `augment(config, sample_i, i)`.
pub fn augment_dataset(config: &AugmentorConfig, dataset: &Dataset) -> Dataset {
    let samples: Vec<Sample> = dataset
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| augment(config, s, i as u64))
        .collect();
    dataset
        .with_samples(samples)
        .expect("augmentation preserves dimension and ids")
}
