//! Group fairness metrics, empirical estimators, Hoeffding sample bounds, and
//! the certification decision.
//!
//! All gap computations are exact rationals over integer counts. The sample
//! bound is a logarithm and is evaluated in `f64` before taking the ceiling;
//! every caller that needs the bound goes through [`gap_admissible`] so host
//! and in-circuit decisions share one evaluation path.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::micro::Micro;
use crate::model::{Dataset, Label};

pub type Rational = Ratio<i128>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FairnessError {
    #[error("{predictions} predictions for {samples} samples")]
    LengthMismatch { samples: usize, predictions: usize },
    #[error("id out of range: {0}")]
    IdOutOfRange(String),
    #[error("empty cell: no samples for {0}")]
    EmptyCell(String),
    #[error("empirical gap {efg} is not below threshold {threshold}")]
    GapNotBelowThreshold { efg: String, threshold: Micro },
    #[error("invalid fairness spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FairnessMetric {
    /// Overall risk equality.
    Ore,
    /// Equalized odds.
    Eo,
    /// Demographic parity.
    Dp,
}

impl FairnessMetric {
    pub const ALL: [FairnessMetric; 3] = [FairnessMetric::Ore, FairnessMetric::Eo, FairnessMetric::Dp];

    pub fn id(self) -> u8 {
        match self {
            FairnessMetric::Ore => 0,
            FairnessMetric::Eo => 1,
            FairnessMetric::Dp => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            FairnessMetric::Ore => "ORE",
            FairnessMetric::Eo => "EO",
            FairnessMetric::Dp => "DP",
        }
    }

    /// Whether sample requirements are counted per (group, label) cell.
    pub fn counts_per_label(self) -> bool {
        matches!(self, FairnessMetric::Eo)
    }
}

impl fmt::Display for FairnessMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FairnessMetric {
    type Err = FairnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ore" => Ok(FairnessMetric::Ore),
            "eo" => Ok(FairnessMetric::Eo),
            "dp" => Ok(FairnessMetric::Dp),
            other => Err(FairnessError::InvalidSpec(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestMode {
    /// Test data unknown to the server.
    Private,
    /// Public data, queried through a freshly seeded augmentor.
    Augmented,
}

impl TestMode {
    pub fn id(self) -> u8 {
        match self {
            TestMode::Private => 0,
            TestMode::Augmented => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(TestMode::Private),
            1 => Some(TestMode::Augmented),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestMode::Private => "private",
            TestMode::Augmented => "augmented",
        }
    }
}

impl FromStr for TestMode {
    type Err = FairnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "private" => Ok(TestMode::Private),
            "augmented" => Ok(TestMode::Augmented),
            other => Err(FairnessError::InvalidSpec(format!("unknown mode `{other}`"))),
        }
    }
}

/// Parameters of a certification request.
///
/// The fairness string is derived from (metric, mode) and is what a
/// certificate binds alongside the numeric parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FairnessSpec {
    metric: FairnessMetric,
    epsilon: Micro,
    delta: Micro,
    alpha: Option<Micro>,
    fairness_string: String,
}

pub const ALPHA_ABSENT: u32 = 0xFFFF_FFFF;

impl FairnessSpec {
    pub fn new(
        metric: FairnessMetric,
        epsilon: Micro,
        delta: Micro,
        alpha: Option<Micro>,
    ) -> Result<Self, FairnessError> {
        for (name, v) in [("epsilon", Some(epsilon)), ("delta", Some(delta)), ("alpha", alpha)] {
            if let Some(v) = v {
                if !v.is_open_unit() {
                    return Err(FairnessError::InvalidSpec(format!("{name}={v} not in (0,1)")));
                }
            }
        }
        let mode = if alpha.is_some() { TestMode::Augmented } else { TestMode::Private };
        Ok(FairnessSpec {
            metric,
            epsilon,
            delta,
            alpha,
            fairness_string: canonical_fairness_string(metric, mode),
        })
    }

    pub fn private(metric: FairnessMetric, epsilon: Micro, delta: Micro) -> Result<Self, FairnessError> {
        Self::new(metric, epsilon, delta, None)
    }

    pub fn augmented(
        metric: FairnessMetric,
        epsilon: Micro,
        delta: Micro,
        alpha: Micro,
    ) -> Result<Self, FairnessError> {
        Self::new(metric, epsilon, delta, Some(alpha))
    }

    pub fn metric(&self) -> FairnessMetric {
        self.metric
    }

    pub fn epsilon(&self) -> Micro {
        self.epsilon
    }

    pub fn delta(&self) -> Micro {
        self.delta
    }

    pub fn alpha(&self) -> Option<Micro> {
        self.alpha
    }

    pub fn fairness_string(&self) -> &str {
        &self.fairness_string
    }

    pub fn mode(&self) -> TestMode {
        if self.alpha.is_some() {
            TestMode::Augmented
        } else {
            TestMode::Private
        }
    }

    /// The gap threshold the empirical gap is compared against: ε in private
    /// mode, α in augmented mode.
    pub fn threshold(&self) -> Micro {
        self.alpha.unwrap_or(self.epsilon)
    }

    pub fn with_epsilon(&self, epsilon: Micro) -> Result<Self, FairnessError> {
        Self::new(self.metric, epsilon, self.delta, self.alpha)
    }

    pub fn with_delta(&self, delta: Micro) -> Result<Self, FairnessError> {
        Self::new(self.metric, self.epsilon, delta, self.alpha)
    }

    /// metric id (1 B) ‖ ε, δ, α as u32 LE micro-units ‖ u16 LE length ‖ UTF-8 string.
    pub fn encode_into(&self, w: &mut Writer) {
        w.u8(self.metric.id())
            .u32(self.epsilon.units())
            .u32(self.delta.units())
            .u32(self.alpha.map_or(ALPHA_ABSENT, Micro::units))
            .u16(self.fairness_string.len() as u16)
            .bytes(self.fairness_string.as_bytes());
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let metric = FairnessMetric::from_id(r.u8()?).ok_or(DecodeError::InvalidValue("metric id"))?;
        let epsilon = Micro::from_units(r.u32()?);
        let delta = Micro::from_units(r.u32()?);
        let alpha = match r.u32()? {
            ALPHA_ABSENT => None,
            v => Some(Micro::from_units(v)),
        };
        let len = r.u16()? as usize;
        let s = std::str::from_utf8(r.take(len)?).map_err(|_| DecodeError::InvalidValue("fairness string"))?;
        let spec = FairnessSpec::new(metric, epsilon, delta, alpha)
            .map_err(|_| DecodeError::InvalidValue("fairness parameters"))?;
        if spec.fairness_string != s {
            return Err(DecodeError::InvalidValue("fairness string"));
        }
        Ok(spec)
    }
}

pub fn canonical_fairness_string(metric: FairnessMetric, mode: TestMode) -> String {
    format!("{}/{}", metric.name(), mode.name())
}

/// Per-group and per-(group, label) counts of a labelled prediction run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupRiskTable {
    num_groups: usize,
    num_labels: usize,
    m_g: Vec<u64>,
    m_gy: Vec<u64>,
    err_g: Vec<u64>,
    err_gy: Vec<u64>,
    pred_gy: Vec<u64>,
}

impl GroupRiskTable {
    pub fn empty(num_groups: usize, num_labels: usize) -> Self {
        GroupRiskTable {
            num_groups,
            num_labels,
            m_g: vec![0; num_groups],
            m_gy: vec![0; num_groups * num_labels],
            err_g: vec![0; num_groups],
            err_gy: vec![0; num_groups * num_labels],
            pred_gy: vec![0; num_groups * num_labels],
        }
    }

    /// Builds a table from (group, true label, predicted label) triples.
    pub fn from_triples<I>(num_groups: usize, num_labels: usize, triples: I) -> Result<Self, FairnessError>
    where
        I: IntoIterator<Item = (usize, Label, Label)>,
    {
        let mut table = Self::empty(num_groups, num_labels);
        for (g, y, y_hat) in triples {
            table.record(g, y as usize, y_hat as usize)?;
        }
        Ok(table)
    }

    pub fn record(&mut self, g: usize, y: usize, y_hat: usize) -> Result<(), FairnessError> {
        if g >= self.num_groups {
            return Err(FairnessError::IdOutOfRange(format!("group {g}")));
        }
        if y >= self.num_labels || y_hat >= self.num_labels {
            return Err(FairnessError::IdOutOfRange(format!("label {}", y.max(y_hat))));
        }
        self.m_g[g] += 1;
        self.m_gy[g * self.num_labels + y] += 1;
        self.pred_gy[g * self.num_labels + y_hat] += 1;
        if y != y_hat {
            self.err_g[g] += 1;
            self.err_gy[g * self.num_labels + y] += 1;
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn total(&self) -> u64 {
        self.m_g.iter().sum()
    }

    pub fn m_g(&self, g: usize) -> u64 {
        self.m_g[g]
    }

    pub fn m_gy(&self, g: usize, y: usize) -> u64 {
        self.m_gy[g * self.num_labels + y]
    }

    pub fn err_g(&self, g: usize) -> u64 {
        self.err_g[g]
    }

    pub fn err_gy(&self, g: usize, y: usize) -> u64 {
        self.err_gy[g * self.num_labels + y]
    }

    pub fn pred_gy(&self, g: usize, y: usize) -> u64 {
        self.pred_gy[g * self.num_labels + y]
    }

    /// Counts that the sample bound applies to: m_{g,y} for EO, m_g otherwise.
    pub fn relevant_counts(&self, metric: FairnessMetric) -> Vec<u64> {
        if metric.counts_per_label() {
            self.m_gy.clone()
        } else {
            self.m_g.clone()
        }
    }

    /// Checks the structural invariants between the count vectors.
    pub fn is_consistent(&self) -> bool {
        let l = self.num_labels;
        (0..self.num_groups).all(|g| {
            let row = g * l..(g + 1) * l;
            self.m_gy[row.clone()].iter().sum::<u64>() == self.m_g[g]
                && self.pred_gy[row.clone()].iter().sum::<u64>() == self.m_g[g]
                && self.err_gy[row.clone()].iter().sum::<u64>() == self.err_g[g]
                && self.err_g[g] <= self.m_g[g]
                && row.clone().all(|i| self.err_gy[i] <= self.m_gy[i])
        })
    }
}

/// Tallies predictions against the dataset's labels and groups.
pub fn build_risk_table(dataset: &Dataset, predictions: &[Label]) -> Result<GroupRiskTable, FairnessError> {
    if dataset.len() != predictions.len() {
        return Err(FairnessError::LengthMismatch {
            samples: dataset.len(),
            predictions: predictions.len(),
        });
    }
    let mut table = GroupRiskTable::empty(dataset.num_groups(), dataset.num_labels());
    for (sample, &y_hat) in dataset.samples().iter().zip(predictions) {
        table.record(sample.group as usize, sample.label as usize, y_hat as usize)?;
    }
    Ok(table)
}

fn check_cells(table: &GroupRiskTable, metric: FairnessMetric) -> Result<(), FairnessError> {
    for g in 0..table.num_groups {
        if table.m_g(g) == 0 {
            return Err(FairnessError::EmptyCell(format!("group {g}")));
        }
        if metric.counts_per_label() {
            for y in 0..table.num_labels {
                if table.m_gy(g, y) == 0 {
                    return Err(FairnessError::EmptyCell(format!("group {g}, label {y}")));
                }
            }
        }
    }
    Ok(())
}

/// Per-group statistics the gap is a maximum over, one vector per label slice.
///
/// ORE has a single slice of per-group risks; EO and DP have one slice per label.
fn group_statistics(table: &GroupRiskTable, metric: FairnessMetric) -> Vec<Vec<Rational>> {
    let ratio = |n: u64, d: u64| Rational::new(n as i128, d as i128);
    let groups = 0..table.num_groups;
    match metric {
        FairnessMetric::Ore => vec![groups.map(|g| ratio(table.err_g(g), table.m_g(g))).collect()],
        FairnessMetric::Eo => (0..table.num_labels)
            .map(|y| groups.clone().map(|g| ratio(table.err_gy(g, y), table.m_gy(g, y))).collect())
            .collect(),
        FairnessMetric::Dp => (0..table.num_labels)
            .map(|y| groups.clone().map(|g| ratio(table.pred_gy(g, y), table.m_g(g))).collect())
            .collect(),
    }
}

/// The empirical fairness gap: the largest absolute difference of the metric's
/// per-group statistic over all group pairs (and labels, for EO and DP).
pub fn empirical_gap(table: &GroupRiskTable, metric: FairnessMetric) -> Result<Rational, FairnessError> {
    check_cells(table, metric)?;
    let mut best = Rational::zero();
    for slice in group_statistics(table, metric) {
        for (i, a) in slice.iter().enumerate() {
            for b in &slice[i + 1..] {
                let d = if a > b { a - b } else { b - a };
                if d > best {
                    best = d;
                }
            }
        }
    }
    Ok(best)
}

/// Same value as [`empirical_gap`], computed as max minus min per slice.
pub fn empirical_gap_spread(table: &GroupRiskTable, metric: FairnessMetric) -> Result<Rational, FairnessError> {
    check_cells(table, metric)?;
    Ok(group_statistics(table, metric)
        .into_iter()
        .filter_map(|slice| {
            let max = slice.iter().max()?;
            let min = slice.iter().min()?;
            Some(max - min)
        })
        .max()
        .unwrap_or_else(Rational::zero))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundVariant {
    /// `2/(t−EFG)² · ln(2|G||Y|/δ)`.
    #[default]
    Standard,
    /// `2/(t−EFG)² · ln(2|G|/δ²)`, the variant used in the cost discussion.
    Efficiency,
}

impl FromStr for BoundVariant {
    type Err = FairnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" | "claim1" => Ok(BoundVariant::Standard),
            "efficiency" => Ok(BoundVariant::Efficiency),
            other => Err(FairnessError::InvalidSpec(format!("unknown bound variant `{other}`"))),
        }
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Minimum per-group (or per-cell) sample count for the test to certify at
/// the given empirical gap.
pub fn min_samples(
    spec: &FairnessSpec,
    efg: &Rational,
    num_groups: usize,
    num_labels: usize,
) -> Result<u64, FairnessError> {
    min_samples_with(spec, efg, num_groups, num_labels, BoundVariant::Standard)
}

pub fn min_samples_with(
    spec: &FairnessSpec,
    efg: &Rational,
    num_groups: usize,
    num_labels: usize,
    variant: BoundVariant,
) -> Result<u64, FairnessError> {
    let threshold = spec.threshold();
    let margin = threshold.to_ratio() - efg;
    if margin <= Rational::zero() {
        return Err(FairnessError::GapNotBelowThreshold {
            efg: efg.to_string(),
            threshold,
        });
    }
    let margin = rational_to_f64(&margin);
    let delta = spec.delta().to_f64();
    let log_term = match variant {
        BoundVariant::Standard => (2.0 * num_groups as f64 * num_labels as f64 / delta).ln(),
        BoundVariant::Efficiency => (2.0 * num_groups as f64 / (delta * delta)).ln(),
    };
    let bound = (2.0 / (margin * margin) * log_term).ceil();
    Ok(if bound.is_nan() || bound <= 0.0 {
        0
    } else if bound >= u64::MAX as f64 {
        u64::MAX
    } else {
        bound as u64
    })
}

/// Two-sided Hoeffding deviation probability for one group:
/// `min(1, 2·exp(−m·(2·half_width)²/2))`.
pub fn tail_bound(m: u64, half_width: &Rational) -> f64 {
    assert!(m >= 1, "tail_bound requires m >= 1");
    assert!(*half_width > Rational::zero(), "tail_bound requires a positive half width");
    let h = rational_to_f64(half_width);
    let width = 2.0 * h;
    (2.0 * (-(m as f64) * width * width / 2.0).exp()).min(1.0)
}

/// The pass predicate shared by the host decision and the certification
/// circuit: `efg < t` and `min_count ≥ min_samples(efg)`.
pub fn gap_admissible(
    spec: &FairnessSpec,
    efg: &Rational,
    min_count: u64,
    num_groups: usize,
    num_labels: usize,
) -> bool {
    match min_samples(spec, efg, num_groups, num_labels) {
        Ok(required) => min_count >= required,
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    EfgTooLarge,
    InsufficientSamples,
}

impl FailureReason {
    pub fn code(self) -> &'static str {
        match self {
            FailureReason::EfgTooLarge => "EFG_TOO_LARGE",
            FailureReason::InsufficientSamples => "INSUFFICIENT_SAMPLES",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestReport {
    pub efg: Rational,
    /// `None` when the gap already reaches the threshold.
    pub per_group_required: Option<u64>,
    pub per_group_actual: Vec<u64>,
    pub decision: Decision,
    pub failure_reason: Option<FailureReason>,
}

impl TestReport {
    pub fn passed(&self) -> bool {
        self.decision == Decision::Pass
    }

    pub fn to_text(&self) -> String {
        let actual: Vec<String> = self.per_group_actual.iter().map(u64::to_string).collect();
        format!(
            "decision={}\nefg={}\nrequired={}\nactual={}\nreason={}\n",
            match self.decision {
                Decision::Pass => "pass",
                Decision::Fail => "fail",
            },
            self.efg,
            self.per_group_required.map_or("-".to_string(), |r| r.to_string()),
            actual.join(","),
            self.failure_reason.map_or("-", FailureReason::code),
        )
    }

    pub fn from_text(text: &str) -> Result<Self, DecodeError> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or(DecodeError::InvalidValue("report line"))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &'static str| fields.get(k).copied().ok_or(DecodeError::InvalidValue(k));
        let decision = match get("decision")? {
            "pass" => Decision::Pass,
            "fail" => Decision::Fail,
            _ => return Err(DecodeError::InvalidValue("decision")),
        };
        let efg: Rational = get("efg")?.parse().map_err(|_| DecodeError::InvalidValue("efg"))?;
        let per_group_required = match get("required")? {
            "-" => None,
            v => Some(v.parse().map_err(|_| DecodeError::InvalidValue("required"))?),
        };
        let actual = get("actual")?;
        let per_group_actual = if actual.is_empty() {
            Vec::new()
        } else {
            actual
                .split(',')
                .map(|v| v.parse().map_err(|_| DecodeError::InvalidValue("actual")))
                .collect::<Result<_, _>>()?
        };
        let failure_reason = match get("reason")? {
            "-" => None,
            "EFG_TOO_LARGE" => Some(FailureReason::EfgTooLarge),
            "INSUFFICIENT_SAMPLES" => Some(FailureReason::InsufficientSamples),
            _ => return Err(DecodeError::InvalidValue("reason")),
        };
        Ok(TestReport {
            efg,
            per_group_required,
            per_group_actual,
            decision,
            failure_reason,
        })
    }

    /// decision u8 ‖ reason u8 ‖ efg numerator u64 ‖ denominator u64 ‖
    /// required u64 (all ones when absent) ‖ u32 count ‖ u64 counts.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(matches!(self.decision, Decision::Pass) as u8)
            .u8(match self.failure_reason {
                None => 0,
                Some(FailureReason::EfgTooLarge) => 1,
                Some(FailureReason::InsufficientSamples) => 2,
            })
            .u64(*self.efg.numer() as u64)
            .u64(*self.efg.denom() as u64)
            .u64(self.per_group_required.unwrap_or(u64::MAX))
            .u32(self.per_group_actual.len() as u32);
        for &c in &self.per_group_actual {
            w.u64(c);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let decision = match r.u8()? {
            1 => Decision::Pass,
            0 => Decision::Fail,
            _ => return Err(DecodeError::InvalidValue("decision")),
        };
        let failure_reason = match r.u8()? {
            0 => None,
            1 => Some(FailureReason::EfgTooLarge),
            2 => Some(FailureReason::InsufficientSamples),
            _ => return Err(DecodeError::InvalidValue("reason")),
        };
        let numer = r.u64()? as i128;
        let denom = r.u64()? as i128;
        if denom == 0 {
            return Err(DecodeError::InvalidValue("efg denominator"));
        }
        let per_group_required = match r.u64()? {
            u64::MAX => None,
            v => Some(v),
        };
        let n = r.u32()? as usize;
        let per_group_actual = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(TestReport {
            efg: Rational::new(numer, denom),
            per_group_required,
            per_group_actual,
            decision,
            failure_reason,
        })
    }
}

/// Certification decision for a finished prediction run.
pub fn decide(spec: &FairnessSpec, table: &GroupRiskTable) -> Result<TestReport, FairnessError> {
    let efg = empirical_gap(table, spec.metric())?;
    let per_group_actual = table.relevant_counts(spec.metric());
    let min_count = per_group_actual.iter().copied().min().unwrap_or(0);
    let (decision, failure_reason, per_group_required) =
        match min_samples(spec, &efg, table.num_groups(), table.num_labels()) {
            Err(_) => (Decision::Fail, Some(FailureReason::EfgTooLarge), None),
            Ok(required) if min_count >= required => (Decision::Pass, None, Some(required)),
            Ok(required) => (Decision::Fail, Some(FailureReason::InsufficientSamples), Some(required)),
        };
    debug_assert_eq!(
        decision == Decision::Pass,
        gap_admissible(spec, &efg, min_count, table.num_groups(), table.num_labels())
    );
    Ok(TestReport {
        efg,
        per_group_required,
        per_group_actual,
        decision,
        failure_reason,
    })
}
