use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::codec::{DecodeError, Reader, Writer};
use crate::fixed::Fixed;

pub type GroupId = u16;
pub type Label = u16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<Fixed>,
    pub group: GroupId,
    pub label: Label,
}

impl Sample {
    pub fn new(features: Vec<Fixed>, group: GroupId, label: Label) -> Self {
        Sample { features, group, label }
    }

    pub fn feature_bytes(&self) -> Vec<u8> {
        self.features.iter().flat_map(|f| f.to_le_bytes()).collect()
    }
}

/// An ordered, labelled, group-annotated sample set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    dimension: usize,
    num_groups: usize,
    num_labels: usize,
    samples: Vec<Sample>,
}

#[derive(Deserialize)]
struct RawDataset {
    dimension: usize,
    num_groups: usize,
    num_labels: usize,
    samples: Vec<Sample>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = ModelError;
    fn try_from(raw: RawDataset) -> Result<Self, Self::Error> {
        Dataset::new(raw.dimension, raw.num_groups, raw.num_labels, raw.samples)
    }
}

impl Dataset {
    pub fn new(
        dimension: usize,
        num_groups: usize,
        num_labels: usize,
        samples: Vec<Sample>,
    ) -> Result<Self, ModelError> {
        if num_groups == 0 || num_labels == 0 || num_groups > GroupId::MAX as usize + 1 || num_labels > Label::MAX as usize + 1 {
            return Err(ModelError::InvalidConfig(format!(
                "cardinalities |G|={num_groups}, |Y|={num_labels}"
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dimension {
                return Err(ModelError::DimensionMismatch {
                    expected: dimension,
                    actual: s.features.len(),
                });
            }
            if s.group as usize >= num_groups || s.label as usize >= num_labels {
                return Err(ModelError::IdOutOfRange(format!(
                    "sample {i}: group {} label {}",
                    s.group, s.label
                )));
            }
        }
        Ok(Dataset {
            dimension,
            num_groups,
            num_labels,
            samples,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn group_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_groups];
        for s in &self.samples {
            counts[s.group as usize] += 1;
        }
        counts
    }

    pub fn cell_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_groups * self.num_labels];
        for s in &self.samples {
            counts[s.group as usize * self.num_labels + s.label as usize] += 1;
        }
        counts
    }

    /// Same samples, stably sorted by group id. This is the public ordering
    /// the certification circuit hard-wires its per-group sums against.
    pub fn canonical_order(&self) -> Dataset {
        let mut samples = self.samples.clone();
        samples.sort_by_key(|s| s.group);
        Dataset { samples, ..self.clone_header() }
    }

    pub fn with_samples(&self, samples: Vec<Sample>) -> Result<Dataset, ModelError> {
        Dataset::new(self.dimension, self.num_groups, self.num_labels, samples)
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            dimension: self.dimension,
            num_groups: self.num_groups,
            num_labels: self.num_labels,
            samples: Vec::new(),
        }
    }

    /// dimension, |G|, |Y|, count as u32 LE ‖ per sample: group u16, label u16,
    /// features as i32 LE Q16.16.
    pub fn encode_into(&self, w: &mut Writer) {
        w.u32(self.dimension as u32)
            .u32(self.num_groups as u32)
            .u32(self.num_labels as u32)
            .u32(self.samples.len() as u32);
        for s in &self.samples {
            w.u16(s.group).u16(s.label);
            for f in &s.features {
                w.i32(f.to_bits());
            }
        }
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Dataset, DecodeError> {
        let dimension = r.u32()? as usize;
        let num_groups = r.u32()? as usize;
        let num_labels = r.u32()? as usize;
        let count = r.u32()? as usize;
        let per_sample = 4 + 4 * dimension;
        if per_sample.checked_mul(count).is_none_or(|n| n > r.remaining()) {
            return Err(DecodeError::Truncated {
                offset: r.position(),
                needed: per_sample.saturating_mul(count).saturating_sub(r.remaining()),
            });
        }
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let group = r.u16()?;
            let label = r.u16()?;
            let features = (0..dimension)
                .map(|_| r.i32().map(Fixed::from_bits))
                .collect::<Result<_, _>>()?;
            samples.push(Sample { features, group, label });
        }
        Dataset::new(dimension, num_groups, num_labels, samples).map_err(|_| DecodeError::InvalidValue("dataset"))
    }
}
