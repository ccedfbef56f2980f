//! Monte-Carlo harnesses: coverage of the certification test, the
//! nearest-neighbour switching attack against public test sets, and a sweep
//! over augmentation degrees. Every harness is a pure function of its config;
//! trials run in parallel and are reported in trial order.

use std::io::Write;

use rayon::prelude::*;
use sha3::{Digest, Sha3_256};
use thiserror::Error;

use crate::augment::{augment_dataset, AugmentorConfig};
use crate::fairness::{
    build_risk_table, decide, empirical_gap, min_samples, rational_to_f64, FairnessError, FairnessMetric,
    FairnessSpec, Rational,
};
use crate::fixed::Fixed;
use crate::micro::Micro;
use crate::model::planted::{PlantedConfig, TrueGaps};
use crate::model::{Dataset, ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

/// Derives an independent 64-bit seed for a named subsystem.
pub fn subseed(seed: u64, name: &str, index: u64) -> u64 {
    let mut h = Sha3_256::new();
    h.update(b"faircert/seed/");
    h.update(name.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn gap_for(metric: FairnessMetric, gaps: &TrueGaps) -> f64 {
    match metric {
        FairnessMetric::Ore => gaps.ore,
        FairnessMetric::Eo => gaps.eo,
        FairnessMetric::Dp => gaps.dp,
    }
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Per-group size at which a test whose empirical gap is half the threshold
/// still certifies.
pub fn design_sample_size(spec: &FairnessSpec, num_groups: usize, num_labels: usize) -> Result<usize, FairnessError> {
    let half = spec.threshold().to_ratio() / Rational::from_integer(2);
    Ok(min_samples(spec, &half, num_groups, num_labels)? as usize)
}

#[derive(Debug, Clone)]
pub struct CoverageConfig {
    pub planted: PlantedConfig,
    pub spec: FairnessSpec,
    pub trials: usize,
    /// Defaults to [`design_sample_size`].
    pub per_group: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub trial: usize,
    pub true_gap: f64,
    pub efg: Rational,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSummary {
    pub trials: usize,
    pub passes: usize,
    pub per_group: usize,
    pub true_gap: f64,
    /// Whether the planted gap is below the threshold.
    pub plant_is_fair: bool,
}

impl CoverageSummary {
    pub fn pass_rate(&self) -> f64 {
        self.passes as f64 / self.trials as f64
    }

    pub fn label(&self) -> &'static str {
        if self.plant_is_fair {
            "certification_rate"
        } else {
            "false_certification_rate"
        }
    }
}

pub fn run_coverage(config: &CoverageConfig) -> Result<(Vec<CoverageRow>, CoverageSummary), ExperimentError> {
    if config.trials == 0 {
        return Err(ExperimentError::InvalidConfig("trials must be at least 1".into()));
    }
    let p = &config.planted;
    p.validate()?;
    let per_group = match config.per_group {
        Some(n) => n,
        None => design_sample_size(&config.spec, p.num_groups, p.num_labels)?,
    };
    let true_gap = gap_for(config.spec.metric(), &p.true_gaps()?);
    let rows = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let cfg = p.with_seed(subseed(p.seed, "coverage", trial as u64));
            let data = cfg.sample_stratified(&vec![per_group; p.num_groups])?;
            let preds = cfg.planted_model()?.predict_dataset(&data)?;
            let report = decide(&config.spec, &build_risk_table(&data, &preds)?)?;
            Ok(CoverageRow {
                trial,
                true_gap,
                efg: report.efg,
                passed: report.passed(),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let summary = CoverageSummary {
        trials: config.trials,
        passes: rows.iter().filter(|r| r.passed).count(),
        per_group,
        true_gap,
        plant_is_fair: true_gap < config.spec.threshold().to_f64(),
    };
    Ok((rows, summary))
}

/// `trial,true_gap,efg,decision`, then one `summary` row whose last two
/// fields are the rate name and value.
pub fn write_coverage_csv<W: Write>(rows: &[CoverageRow], summary: &CoverageSummary, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "true_gap", "efg", "decision"])?;
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            fmt6(r.true_gap),
            fmt6(rational_to_f64(&r.efg)),
            if r.passed { "pass" } else { "fail" }.to_string(),
        ])?;
    }
    w.write_record([
        "summary".to_string(),
        fmt6(summary.true_gap),
        summary.label().to_string(),
        fmt6(summary.pass_rate()),
    ])?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct KnnAttackConfig {
    /// Population; its error rates are ignored.
    pub population: PlantedConfig,
    pub fair_rates: Vec<f64>,
    pub unfair_rates: Vec<f64>,
    pub test_size: usize,
    pub eval_size: usize,
    /// Public augmentor; the attacker and the regulator seed it separately.
    pub augmentor: AugmentorConfig,
    pub taus: Vec<f64>,
    pub seed: u64,
}

impl KnnAttackConfig {
    /// The committed attack setup.
    pub fn fixture() -> Self {
        let mut population = PlantedConfig::balanced(2, 2, 8, vec![0.0, 0.0], 0);
        population.weights = vec![vec![0.4, 0.4], vec![0.1, 0.1]];
        let mut taus: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
        taus.push(f64::INFINITY);
        KnnAttackConfig {
            population,
            fair_rates: vec![0.15, 0.15],
            unfair_rates: vec![0.02, 0.20],
            test_size: 2000,
            eval_size: 2000,
            augmentor: AugmentorConfig::new(0, Fixed::from_f64(0.35), Micro::ZERO, Micro::ONE, Micro::ONE)
                .expect("valid augmentor"),
            taus,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnRow {
    pub tau: f64,
    pub accuracy: f64,
    pub efg: f64,
    pub routed_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnBaseline {
    pub fair_accuracy: f64,
    pub fair_efg: f64,
    pub unfair_accuracy: f64,
    pub unfair_efg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnAttackReport {
    pub rows: Vec<KnnRow>,
    pub baseline: KnnBaseline,
}

impl KnnAttackReport {
    /// A threshold at which the hybrid looks as fair as the fair model on the
    /// regulator's test and is as accurate as the unfair model on fresh data.
    pub fn winning_tau(&self, tolerance: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.efg <= self.baseline.fair_efg + tolerance && r.accuracy >= self.baseline.unfair_accuracy - tolerance
            })
            .map(|r| r.tau)
    }
}

fn to_f64s(features: &[Fixed]) -> Vec<f64> {
    features.iter().map(|f| f.to_f64()).collect()
}

fn nearest_distances(queries: &Dataset, reference: &Dataset) -> Vec<f64> {
    let refs: Vec<Vec<f64>> = reference.samples().iter().map(|s| to_f64s(&s.features)).collect();
    queries
        .samples()
        .par_iter()
        .map(|q| {
            let q = to_f64s(&q.features);
            refs.iter()
                .map(|r| r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

fn tau_label(tau: f64) -> String {
    if tau.is_infinite() {
        "inf".into()
    } else {
        format!("{tau:.4}")
    }
}

/// Sweeps the 1-NN switch `H(x) = fair(x)` if the distance from `x` to the
/// reference set is at most `tau`, else `unfair(x)`. EFG (ORE) is measured on
/// `test`; accuracy and the share routed to `unfair` on `eval`.
pub fn knn_sweep(
    fair: &ModelSpec,
    unfair: &ModelSpec,
    reference: &Dataset,
    test: &Dataset,
    eval: &Dataset,
    taus: &[f64],
) -> Result<Vec<KnnRow>, ExperimentError> {
    let d = fair.dimension();
    for (what, dim) in [
        ("unfair model", unfair.dimension()),
        ("reference set", reference.dimension()),
        ("test set", test.dimension()),
        ("evaluation set", eval.dimension()),
    ] {
        if dim != d {
            return Err(ModelError::DimensionMismatch { expected: d, actual: dim }).map_err(|e| {
                ExperimentError::InvalidConfig(format!("{what}: {e}"))
            });
        }
    }
    if reference.is_empty() || test.is_empty() || eval.is_empty() {
        return Err(ExperimentError::InvalidConfig("empty reference, test or evaluation set".into()));
    }
    let test_dist = nearest_distances(test, reference);
    let eval_dist = nearest_distances(eval, reference);
    let (test_fair, test_unfair) = (fair.predict_dataset(test)?, unfair.predict_dataset(test)?);
    let (eval_fair, eval_unfair) = (fair.predict_dataset(eval)?, unfair.predict_dataset(eval)?);

    taus.iter()
        .map(|&tau| {
            let pick = |dist: f64, f, u| if dist <= tau { f } else { u };
            let test_preds: Vec<_> = (0..test.len()).map(|i| pick(test_dist[i], test_fair[i], test_unfair[i])).collect();
            let efg = empirical_gap(&build_risk_table(test, &test_preds)?, FairnessMetric::Ore)?;
            let mut correct = 0usize;
            let mut routed = 0usize;
            for (i, s) in eval.samples().iter().enumerate() {
                let y = pick(eval_dist[i], eval_fair[i], eval_unfair[i]);
                correct += (y == s.label) as usize;
                routed += (eval_dist[i] > tau) as usize;
            }
            Ok(KnnRow {
                tau,
                accuracy: correct as f64 / eval.len() as f64,
                efg: rational_to_f64(&efg),
                routed_fraction: routed as f64 / eval.len() as f64,
            })
        })
        .collect()
}

fn accuracy(model: &ModelSpec, data: &Dataset) -> Result<f64, ExperimentError> {
    let preds = model.predict_dataset(data)?;
    let correct = preds.iter().zip(data.samples()).filter(|(p, s)| **p == s.label).count();
    Ok(correct as f64 / data.len() as f64)
}

pub fn run_knn_attack(config: &KnnAttackConfig) -> Result<KnnAttackReport, ExperimentError> {
    let pop = &config.population;
    let model_for = |rates: &[f64], name| {
        let mut c = pop.with_seed(subseed(config.seed, name, 0));
        c.error_rates = rates.to_vec();
        c.planted_model()
    };
    let fair = model_for(&config.fair_rates, "fair-model")?;
    let unfair = model_for(&config.unfair_rates, "unfair-model")?;
    let public_test = pop.with_seed(subseed(config.seed, "test-data", 0)).sample(config.test_size)?;
    let eval = pop.with_seed(subseed(config.seed, "eval-data", 0)).sample(config.eval_size)?;
    let reference = augment_dataset(&config.augmentor.with_seed(subseed(config.seed, "attacker-aug", 0)), &public_test);
    let regulator_test = augment_dataset(&config.augmentor.with_seed(subseed(config.seed, "regulator-aug", 0)), &public_test);

    let rows = knn_sweep(&fair, &unfair, &reference, &regulator_test, &eval, &config.taus)?;
    let gap = |m: &ModelSpec| -> Result<f64, ExperimentError> {
        let preds = m.predict_dataset(&regulator_test)?;
        Ok(rational_to_f64(&empirical_gap(&build_risk_table(&regulator_test, &preds)?, FairnessMetric::Ore)?))
    };
    let baseline = KnnBaseline {
        fair_accuracy: accuracy(&fair, &eval)?,
        fair_efg: gap(&fair)?,
        unfair_accuracy: accuracy(&unfair, &eval)?,
        unfair_efg: gap(&unfair)?,
    };
    Ok(KnnAttackReport { rows, baseline })
}

/// `tau,accuracy,efg,routed_fraction`.
pub fn write_knn_csv<W: Write>(report: &KnnAttackReport, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "accuracy", "efg", "routed_fraction"])?;
    for r in &report.rows {
        w.write_record([tau_label(r.tau), fmt6(r.accuracy), fmt6(r.efg), fmt6(r.routed_fraction)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AugmentSweepConfig {
    pub planted: PlantedConfig,
    /// Augmented-mode spec; its α is the pass threshold.
    pub spec: FairnessSpec,
    pub augmentor: AugmentorConfig,
    pub degrees: Vec<Micro>,
    pub per_group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSweepRow {
    pub degree: Micro,
    pub accuracy: f64,
    pub efg: Rational,
    pub passed: bool,
}

/// Certifies the planted model on one stratified test set augmented at each
/// degree in turn.
pub fn run_augment_sweep(config: &AugmentSweepConfig) -> Result<Vec<AugmentSweepRow>, ExperimentError> {
    let p = &config.planted;
    let data = p.sample_stratified(&vec![config.per_group; p.num_groups])?;
    let model = p.planted_model()?;
    config
        .degrees
        .par_iter()
        .map(|&degree| {
            let aug = AugmentorConfig { degree, ..config.augmentor };
            aug.validate()
                .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
            let test = augment_dataset(&aug, &data);
            let preds = model.predict_dataset(&test)?;
            let correct = preds.iter().zip(test.samples()).filter(|(p, s)| **p == s.label).count();
            let report = decide(&config.spec, &build_risk_table(&test, &preds)?)?;
            Ok(AugmentSweepRow {
                degree,
                accuracy: correct as f64 / test.len() as f64,
                efg: report.efg,
                passed: report.passed(),
            })
        })
        .collect()
}

/// `degree,accuracy,efg,decision`.
pub fn write_augment_csv<W: Write>(rows: &[AugmentSweepRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["degree", "accuracy", "efg", "decision"])?;
    for r in rows {
        w.write_record([
            r.degree.to_string(),
            fmt6(r.accuracy),
            fmt6(rational_to_f64(&r.efg)),
            if r.passed { "pass" } else { "fail" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
