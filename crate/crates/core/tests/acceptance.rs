//! Acceptance suite: one PASS/FAIL line per criterion, each with its time
//! budget. Runs without the libtest harness so the report is always printed;
//! exits non-zero if any criterion fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use faircert::augment::{augment, AugmentorConfig};
use faircert::crypto::merkle_root;
use faircert::experiments::{run_coverage, run_knn_attack, write_knn_csv, CoverageConfig, KnnAttackConfig};
use faircert::fairness::{decide, min_samples_with, BoundVariant, Rational};
use faircert::fsc::{cert_passes, estimate_gates, Party, TrustedDealer};
use faircert::model::planted::PlantedConfig;
use faircert::model::LinearModel;
use faircert::protocol::{
    certify_in_process, certify_tcp, infer_in_process, infer_tcp, CertFailure, CertificationRun, Client, FrameType,
    InferenceFailure, InferenceRun, Regulator, RejectReason, Server, ServerDeviation,
};
use faircert::{FairnessMetric, FairnessSpec, Fixed, GroupRiskTable, Micro, ModelSpec, Sample};

type Check = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn standard_spec() -> FairnessSpec {
    spec("0.1")
}

fn sample_bound() -> Check {
    let spec = FairnessSpec::private(FairnessMetric::Ore, micro("0.1"), micro("0.2")).unwrap();
    let m = min_samples_with(&spec, &Rational::new(1, 20), 100, 2, BoundVariant::Efficiency).map_err(|e| e.to_string())?;
    ensure((6750..=6850).contains(&m), format!("m_g = {m}"))?;
    Ok(format!("m_g = {m}"))
}

fn gate_costs() -> Check {
    let r = estimate_gates(1024, 8192);
    ensure(r.hash_and_gates_per_input_bit == 24.0, format!("hash {}", r.hash_and_gates_per_input_bit))?;
    ensure(r.merkle_and_gates_per_input_bit == 48.0, format!("merkle {}", r.merkle_and_gates_per_input_bit))?;
    ensure(r.inference_and_gates_per_weight_bit == 191.0, format!("inference {}", r.inference_and_gates_per_weight_bit))?;
    let ratio = r.overhead_ratio.ok_or("no overhead ratio")?;
    ensure((0.245..=0.255).contains(&ratio), format!("overhead {ratio}"))?;
    Ok(format!("24 / 48 / 191 gates per bit, overhead {ratio:.4}"))
}

fn coverage(rates: [f64; 2], seed: u64) -> Result<(f64, usize, f64), String> {
    let cfg = CoverageConfig {
        planted: PlantedConfig::balanced(2, 2, 4, rates.to_vec(), seed),
        spec: standard_spec(),
        trials: 500,
        per_group: None,
    };
    let (_, s) = run_coverage(&cfg).map_err(|e| e.to_string())?;
    Ok((s.pass_rate(), s.per_group, s.true_gap))
}

fn soundness() -> Check {
    let (rate, m, gap) = coverage([0.10, 0.25], 303)?;
    let limit = 0.05 + 3.0 * (0.05f64 * 0.95 / 500.0).sqrt();
    ensure((gap - 0.15).abs() < 1e-9, format!("planted gap {gap}"))?;
    ensure(rate <= limit, format!("false certification rate {rate} > {limit:.4}"))?;
    Ok(format!("false certification rate {rate:.4} <= {limit:.4} (m_g = {m})"))
}

fn fair_certification() -> Check {
    let (rate, m, gap) = coverage([0.10, 0.10], 404)?;
    ensure(gap == 0.0, format!("planted gap {gap}"))?;
    ensure(rate >= 0.90, format!("certification rate {rate}"))?;
    Ok(format!("certification rate {rate:.4} (m_g = {m})"))
}

/// Cell sizes spread across the bound, with per-group error rates that put
/// the gap on both sides of the threshold.
fn random_table(rng: &mut ChaCha8Rng) -> GroupRiskTable {
    let g = rng.gen_range(2..=4);
    let y = rng.gen_range(2..=3);
    let mut t = GroupRiskTable::empty(g, y);
    let scale = [50, 500, 3000, 12_000][rng.gen_range(0..4)];
    for group in 0..g {
        let err = rng.gen_range(0.0..0.25);
        for label in 0..y {
            let n = rng.gen_range(0..=scale);
            let wrong = (n as f64 * err).round() as usize + rng.gen_range(0..=2);
            for k in 0..n {
                let y_hat = if k < wrong { (label + 1) % y } else { label };
                t.record(group, label, y_hat).unwrap();
            }
        }
    }
    t
}

fn random_spec(rng: &mut ChaCha8Rng) -> FairnessSpec {
    let metric = FairnessMetric::ALL[rng.gen_range(0..3)];
    let eps = Micro::from_units(rng.gen_range(10_000..300_000));
    let delta = Micro::from_units(rng.gen_range(1_000..500_000));
    if rng.gen_bool(0.25) {
        FairnessSpec::augmented(metric, eps, delta, Micro::from_units(rng.gen_range(10_000..300_000))).unwrap()
    } else {
        FairnessSpec::private(metric, eps, delta).unwrap()
    }
}

fn circuit_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let (mut passes, mut unequal) = (0, 0);
    for i in 0..10_000 {
        let t = random_table(&mut rng);
        let s = random_spec(&mut rng);
        let host = decide(&s, &t).map(|r| r.passed()).unwrap_or(false);
        ensure(cert_passes(&s, &t) == host, format!("table {i} disagrees: {s:?}"))?;
        passes += host as usize;
        let counts: Vec<u64> = (0..t.num_groups()).map(|g| t.m_g(g)).collect();
        unequal += counts.windows(2).any(|w| w[0] != w[1]) as usize;
    }
    ensure(passes > 500 && passes < 9_500, format!("degenerate mix: {passes} passes"))?;
    Ok(format!("10000 tables agree ({passes} pass, {unequal} with unequal m_g)"))
}

fn certify_on(tcp: bool, reg: &Regulator, server: &mut Server) -> CertificationRun {
    if tcp {
        certify_tcp(reg, server, Arc::new(TrustedDealer)).unwrap()
    } else {
        certify_in_process(reg, server, Arc::new(TrustedDealer))
    }
}

fn infer_on(tcp: bool, client: &Client, server: &mut Server) -> InferenceRun {
    if tcp {
        infer_tcp(client, server, Arc::new(TrustedDealer)).unwrap()
    } else {
        infer_in_process(client, server, Arc::new(TrustedDealer))
    }
}

fn protocol_scenarios(tcp: bool) -> Result<(), String> {
    let net = if tcp { "tcp" } else { "in-process" };
    let w = World::new(600 + tcp as u64);
    let mut server = w.server();
    let cert = certify_on(tcp, &w.regulator(), &mut server)
        .outcome
        .map_err(|e| format!("{net}: certification failed: {e}"))?;

    let client = w.client(standard_spec());
    let accepted = infer_on(tcp, &client, &mut server.clone())
        .outcome
        .map_err(|e| format!("{net}: honest run rejected: {e}"))?;
    let x = client.input();
    let local = w.model.predict_features(&x.features, x.group).unwrap();
    ensure(accepted.prediction == local, format!("{net}: prediction {} vs local {local}", accepted.prediction))?;

    let sig_invalid = Err(InferenceFailure::Reject(RejectReason::SigInvalid));
    let mut tampered_server = server.clone().with_deviation(ServerDeviation {
        inference_model: Some(tampered(&w.model)),
        ..Default::default()
    });
    ensure(infer_on(tcp, &client, &mut tampered_server).outcome == sig_invalid, format!("{net}: tampered weight"))?;

    let forged = faircert::crypto::issue_certificate(&keys(99), cert.digest, cert.spec.clone());
    let mut forged_server = server.clone().with_deviation(ServerDeviation {
        certificate_bytes: Some(forged.to_bytes()),
        ..Default::default()
    });
    ensure(infer_on(tcp, &client, &mut forged_server).outcome == sig_invalid, format!("{net}: wrong key"))?;

    let strict = w.client(spec("0.05"));
    ensure(
        infer_on(tcp, &strict, &mut server.clone()).outcome == Err(InferenceFailure::Reject(RejectReason::SpecMismatch)),
        format!("{net}: spec mismatch"),
    )?;

    let small = w.config.sample_stratified(&[PER_GROUP, 20]).unwrap();
    let run = certify_on(tcp, &Regulator::new(keys(7), small, standard_spec()), &mut w.server());
    ensure(
        matches!(run.outcome, Err(CertFailure::PrecheckFailed { .. })) && run.transcripts.server.is_empty(),
        format!("{net}: undersampled test set: {:?}", run.outcome),
    )?;
    Ok(())
}

fn protocol_suite() -> Check {
    protocol_scenarios(false)?;
    protocol_scenarios(true)?;
    Ok("5/5 scenarios on in-process and TCP transports".into())
}

/// The largest linear model not exceeding 1 KiB: 2 labels over 125 features.
fn kib_model() -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let weights = (0..2).map(|_| (0..125).map(|_| Fixed::from_bits(rng.gen())).collect()).collect();
    let biases = (0..2).map(|_| Fixed::from_bits(rng.gen())).collect();
    LinearModel::new(weights, biases).unwrap().into()
}

fn merkle_avalanche() -> Check {
    let bytes = kib_model().to_bytes();
    let root = merkle_root(&bytes).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    for _ in 0..1000 {
        let bit = rng.gen_range(0..bytes.len() * 8);
        let mut flipped = bytes.clone();
        flipped[bit / 8] ^= 1 << (bit % 8);
        ensure(merkle_root(&flipped).unwrap() != root, format!("flip of bit {bit} kept the root"))?;
    }
    Ok(format!("1000 flips of a {}-byte model change the root", bytes.len()))
}

fn leakage_audit() -> Check {
    let w = World::new(800);
    let mut server = w.server();
    let run = certify_in_process(&w.regulator(), &mut server, Arc::new(TrustedDealer));
    run.outcome.map_err(|e| format!("certification failed: {e}"))?;
    let s = run.session.map_err(|e| e.to_string())?;
    let deliveries = |s: &faircert::fsc::FscSession, p| -> Vec<(&'static str, usize)> {
        s.leakage_for(p).iter().map(|e| (e.datum, e.len)).collect()
    };
    ensure(deliveries(&s, Party::P1).is_empty(), "server received CERT output")?;
    ensure(deliveries(&s, Party::P2) == vec![("b", 1), ("h", 32)], format!("{:?}", deliveries(&s, Party::P2)))?;
    let results: Vec<_> = run.transcripts.server.received().into_iter().filter(|f| f.kind == FrameType::FscResult).collect();
    ensure(results.len() == 1 && results[0].payload.is_empty(), "server FSC_RESULT not empty")?;

    let run = infer_in_process(&w.client(standard_spec()), &mut server, Arc::new(TrustedDealer));
    run.outcome.map_err(|e| format!("inference rejected: {e}"))?;
    let s = run.session.map_err(|e| e.to_string())?;
    ensure(deliveries(&s, Party::P1).is_empty(), "server received INF output")?;
    ensure(deliveries(&s, Party::P2) == vec![("y_hat", 2), ("h_tilde", 32)], format!("{:?}", deliveries(&s, Party::P2)))?;
    Ok("server log empty; regulator gets (b, h), client gets (y_hat, h_tilde)".into())
}

fn augmentor_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    let cfg = AugmentorConfig::new(31, Fixed::from_f64(0.5), micro("0.3"), micro("0.9"), micro("0.8")).unwrap();
    let identity = AugmentorConfig::identity(31);
    let mut changed = 0;
    for i in 0..100_000u64 {
        let d = rng.gen_range(1..8);
        let s = Sample::new(
            (0..d).map(|_| Fixed::from_bits(rng.gen_range(-(1 << 20)..(1 << 20)))).collect(),
            rng.gen(),
            rng.gen(),
        );
        let a = augment(&cfg, &s, i);
        ensure(a.group == s.group && a.label == s.label, format!("sample {i} changed group or label"))?;
        ensure(a.features.len() == s.features.len(), format!("sample {i} changed dimension"))?;
        ensure(augment(&cfg, &s, i) == a, format!("sample {i} not deterministic"))?;
        ensure(augment(&identity, &s, i) == s, format!("identity changed sample {i}"))?;
        changed += (a != s) as usize;
    }
    ensure(changed > 50_000, format!("only {changed} samples perturbed"))?;
    Ok(format!("10^5 samples keep group and label ({changed} perturbed)"))
}

const KNN_FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/knn_sweep.csv");

fn knn_fixture() -> Check {
    let cfg = KnnAttackConfig::fixture();
    let a = run_knn_attack(&cfg).map_err(|e| e.to_string())?;
    let b = run_knn_attack(&cfg).map_err(|e| e.to_string())?;
    let (mut csv_a, mut csv_b) = (Vec::new(), Vec::new());
    write_knn_csv(&a, &mut csv_a).map_err(|e| e.to_string())?;
    write_knn_csv(&b, &mut csv_b).map_err(|e| e.to_string())?;
    ensure(csv_a == csv_b, "sweep CSV differs between runs")?;
    let committed = std::fs::read(KNN_FIXTURE).map_err(|e| format!("{KNN_FIXTURE}: {e}"))?;
    ensure(csv_a == committed, "sweep CSV differs from the committed fixture")?;
    if let Some(tau) = a.winning_tau(0.01) {
        return Err(format!("tau = {tau} reaches fair-level EFG at unfair-level accuracy"));
    }
    let best = a.rows.iter().filter(|r| r.efg <= a.baseline.fair_efg + 0.01).map(|r| r.accuracy).fold(0.0, f64::max);
    Ok(format!(
        "no tau wins; best accuracy at fair-level EFG {best:.4} vs unfair {:.4}",
        a.baseline.unfair_accuracy
    ))
}

const CRITERIA: [Criterion; 10] = [
    Criterion { id: 1, name: "sample-bound reproduction", budget: Duration::from_secs(1), run: sample_bound },
    Criterion { id: 2, name: "gate-cost reproduction", budget: Duration::from_secs(1), run: gate_costs },
    Criterion { id: 3, name: "statistical soundness", budget: Duration::from_secs(300), run: soundness },
    Criterion { id: 4, name: "fair-plant certification", budget: Duration::from_secs(300), run: fair_certification },
    Criterion { id: 5, name: "circuit/host equivalence", budget: Duration::from_secs(30), run: circuit_equivalence },
    Criterion { id: 6, name: "end-to-end protocol suite", budget: Duration::from_secs(30), run: protocol_suite },
    Criterion { id: 7, name: "Merkle avalanche", budget: Duration::from_secs(5), run: merkle_avalanche },
    Criterion { id: 8, name: "leakage audit", budget: Duration::from_secs(5), run: leakage_audit },
    Criterion { id: 9, name: "augmentor laws", budget: Duration::from_secs(10), run: augmentor_laws },
    Criterion { id: 10, name: "kNN attack fixture", budget: Duration::from_secs(120), run: knn_fixture },
];

fn main() {
    let mut failed = Vec::new();
    for c in &CRITERIA {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took {elapsed:.2?}, budget {:?}", c.budget)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {:>2} {} [{elapsed:.2?}]: {detail}", c.id, c.name),
            Err(why) => {
                println!("FAIL {:>2} {} [{elapsed:.2?}]: {why}", c.id, c.name);
                failed.push(c.id);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", CRITERIA.len() - failed.len(), CRITERIA.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
