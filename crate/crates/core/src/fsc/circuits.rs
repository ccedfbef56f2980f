//! The certification and inference circuits.
//!
//! The certification decision never divides. For every compared pair of
//! groups with public denominators `n0`, `n1`, the largest numerator `k` for
//! which a gap of `k/(n0·n1)` would still pass is computed from public data
//! (spec and counts). The private part is then a single integer comparison
//! `|e0·n1 − e1·n0| ≤ k`. Because the pass predicate is monotone in the gap,
//! this agrees exactly with the host-side rational decision.

use super::AbortReason;
use crate::augment::{augment_dataset, AugmentorConfig};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{merkle_root, sha3, ModelDigest};
use crate::fairness::{gap_admissible, FairnessMetric, FairnessSpec, GroupRiskTable, Rational, TestMode};
use crate::fixed::Fixed;
use crate::model::{Dataset, GroupId, Label, ModelSpec};

/// The regulator's private input to the certification circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestBundle {
    pub spec: FairnessSpec,
    pub dataset: Dataset,
    /// Applied to the (canonically ordered) dataset before evaluation.
    pub augmentor: Option<AugmentorConfig>,
    /// SHA3-256 of the model bytes the server committed to.
    pub commitment: Option<[u8; 32]>,
}

impl TestBundle {
    /// spec ‖ flag ‖ [augmentor config] ‖ flag ‖ [commitment] ‖ dataset.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.spec.encode_into(&mut w);
        match &self.augmentor {
            Some(c) => {
                w.u8(1);
                c.encode(&mut w);
            }
            None => {
                w.u8(0);
            }
        }
        match &self.commitment {
            Some(c) => {
                w.u8(1).bytes(c);
            }
            None => {
                w.u8(0);
            }
        }
        self.dataset.encode_into(&mut w);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let spec = FairnessSpec::decode_from(&mut r)?;
        let augmentor = match r.u8()? {
            0 => None,
            1 => Some(AugmentorConfig::decode(&mut r)?),
            _ => return Err(DecodeError::InvalidValue("augmentor flag")),
        };
        let commitment = match r.u8()? {
            0 => None,
            1 => Some(r.array()?),
            _ => return Err(DecodeError::InvalidValue("commitment flag")),
        };
        let dataset = Dataset::decode_from(&mut r)?;
        r.finish()?;
        if (spec.mode() == TestMode::Augmented) != augmentor.is_some() {
            return Err(DecodeError::InvalidValue("augmentor presence"));
        }
        Ok(TestBundle {
            spec,
            dataset,
            augmentor,
            commitment,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CertOutput {
    pub passed: bool,
    pub digest: ModelDigest,
}

impl CertOutput {
    /// b u8 ‖ h 32 B.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let passed = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(DecodeError::InvalidValue("b")),
        };
        let digest = ModelDigest(r.array()?);
        r.finish()?;
        Ok(CertOutput { passed, digest })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.passed as u8];
        out.extend_from_slice(&self.digest.0);
        out
    }
}

/// The client's private input to the inference circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceInput {
    pub group: GroupId,
    pub features: Vec<Fixed>,
}

impl InferenceInput {
    /// group u16 ‖ dimension u32 ‖ features i32.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u16(self.group).u32(self.features.len() as u32);
        for f in &self.features {
            w.i32(f.to_bits());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let group = r.u16()?;
        let dim = r.u32()? as usize;
        if dim.saturating_mul(4) != r.remaining() {
            return Err(DecodeError::InvalidValue("feature count"));
        }
        let features = (0..dim).map(|_| r.i32().map(Fixed::from_bits)).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(InferenceInput { group, features })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceOutput {
    pub prediction: Label,
    pub digest: ModelDigest,
}

impl InferenceOutput {
    /// ŷ u16 ‖ h̃ 32 B.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let prediction = r.u16()?;
        let digest = ModelDigest(r.array()?);
        r.finish()?;
        Ok(InferenceOutput { prediction, digest })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.prediction.to_le_bytes().to_vec();
        out.extend_from_slice(&self.digest.0);
        out
    }
}

/// Largest `k ≤ n0·n1` such that a gap of `k/(n0·n1)` passes with the given
/// minimum relevant count, or `None` when even a zero gap fails.
pub fn pair_threshold(
    spec: &FairnessSpec,
    n0: u64,
    n1: u64,
    min_count: u64,
    num_groups: usize,
    num_labels: usize,
) -> Option<u128> {
    let denom = n0 as u128 * n1 as u128;
    let ok = |k: u128| {
        let efg = Rational::new(k as i128, denom as i128);
        gap_admissible(spec, &efg, min_count, num_groups, num_labels)
    };
    if denom == 0 || !ok(0) {
        return None;
    }
    let (mut lo, mut hi) = (0u128, denom);
    if ok(hi) {
        return Some(hi);
    }
    // invariant: ok(lo), !ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// `(numerator_0, denominator_0, numerator_1, denominator_1)` for every
/// compared pair.
fn compared_pairs(table: &GroupRiskTable, metric: FairnessMetric) -> Vec<(u64, u64, u64, u64)> {
    let (g, y) = (table.num_groups(), table.num_labels());
    let mut pairs = Vec::new();
    for g0 in 0..g {
        for g1 in g0 + 1..g {
            match metric {
                FairnessMetric::Ore => {
                    pairs.push((table.err_g(g0), table.m_g(g0), table.err_g(g1), table.m_g(g1)));
                }
                FairnessMetric::Eo => {
                    for l in 0..y {
                        pairs.push((table.err_gy(g0, l), table.m_gy(g0, l), table.err_gy(g1, l), table.m_gy(g1, l)));
                    }
                }
                FairnessMetric::Dp => {
                    for l in 0..y {
                        pairs.push((table.pred_gy(g0, l), table.m_g(g0), table.pred_gy(g1, l), table.m_g(g1)));
                    }
                }
            }
        }
    }
    pairs
}

/// Division-free pass/fail decision on a completed count table.
pub fn cert_passes(spec: &FairnessSpec, table: &GroupRiskTable) -> bool {
    let counts = table.relevant_counts(spec.metric());
    let Some(min_count) = counts.iter().copied().min() else {
        return false;
    };
    if min_count == 0 {
        return false;
    }
    let (g, y) = (table.num_groups(), table.num_labels());
    let pairs = compared_pairs(table, spec.metric());
    if pairs.is_empty() {
        return gap_admissible(spec, &Rational::from_integer(0), min_count, g, y);
    }
    let mut cache = std::collections::HashMap::new();
    pairs.into_iter().all(|(e0, n0, e1, n1)| {
        let threshold = *cache
            .entry((n0, n1))
            .or_insert_with(|| pair_threshold(spec, n0, n1, min_count, g, y));
        let Some(threshold) = threshold else {
            return false;
        };
        let diff = (e0 as i128 * n1 as i128 - e1 as i128 * n0 as i128).unsigned_abs();
        diff <= threshold
    })
}

/// P1 supplies model bytes, P2 a [`TestBundle`]. Only P2 receives `(b, h)`.
pub fn circuit_cert(model_bytes: &[u8], bundle_bytes: &[u8]) -> Result<CertOutput, AbortReason> {
    if model_bytes.is_empty() || bundle_bytes.is_empty() {
        return Err(AbortReason::SizeMismatch);
    }
    let bundle = TestBundle::decode(bundle_bytes).map_err(|_| AbortReason::MalformedBundle)?;
    if bundle.dataset.is_empty() {
        return Err(AbortReason::SizeMismatch);
    }
    if let Some(c) = bundle.commitment {
        if sha3(model_bytes) != c {
            return Err(AbortReason::CommitmentMismatch);
        }
    }
    let model = ModelSpec::from_bytes(model_bytes).map_err(|_| AbortReason::MalformedModel)?;
    if model.dimension() != bundle.dataset.dimension() || model.num_labels() > bundle.dataset.num_labels() {
        return Err(AbortReason::SizeMismatch);
    }

    let mut data = bundle.dataset.canonical_order();
    if let Some(aug) = &bundle.augmentor {
        data = augment_dataset(aug, &data);
    }
    let predictions = model.predict_dataset(&data).map_err(|_| AbortReason::SizeMismatch)?;

    // Hard-wired group positions: after canonical ordering, group g occupies
    // a contiguous public range.
    let (ng, nl) = (data.num_groups(), data.num_labels());
    let mut table = GroupRiskTable::empty(ng, nl);
    let mut start = 0usize;
    for (group, &count) in data.group_counts().iter().enumerate() {
        let range = start..start + count as usize;
        for (s, &y_hat) in data.samples()[range.clone()].iter().zip(&predictions[range]) {
            debug_assert_eq!(s.group as usize, group);
            table
                .record(group, s.label as usize, y_hat as usize)
                .map_err(|_| AbortReason::SizeMismatch)?;
        }
        start += count as usize;
    }

    Ok(CertOutput {
        passed: cert_passes(&bundle.spec, &table),
        digest: merkle_root(model_bytes).map_err(|_| AbortReason::SizeMismatch)?,
    })
}

/// P1 supplies model bytes, P2 an [`InferenceInput`]. Only P2 receives
/// `(ŷ, h̃)`.
pub fn circuit_inf(model_bytes: &[u8], input_bytes: &[u8]) -> Result<InferenceOutput, AbortReason> {
    if model_bytes.is_empty() || input_bytes.is_empty() {
        return Err(AbortReason::SizeMismatch);
    }
    let model = ModelSpec::from_bytes(model_bytes).map_err(|_| AbortReason::MalformedModel)?;
    let input = InferenceInput::decode(input_bytes).map_err(|_| AbortReason::SizeMismatch)?;
    if input.features.len() != model.dimension() {
        return Err(AbortReason::DimensionMismatch);
    }
    let prediction = model
        .predict_features(&input.features, input.group)
        .map_err(|_| AbortReason::SizeMismatch)?;
    Ok(InferenceOutput {
        prediction,
        digest: merkle_root(model_bytes).map_err(|_| AbortReason::SizeMismatch)?,
    })
}
