//! `faircert`: generate synthetic data and models, certify, infer, and run
//! the experiment harnesses. Exit codes: 0 success or accept, 2 reject or not
//! fair, 3 precondition failure, 4 protocol abort.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use faircert::augment::AugmentorConfig;
use faircert::crypto::{sha3, Certificate, KeyPair, VerificationKey};
use faircert::experiments::{
    knn_sweep, run_augment_sweep, run_coverage, run_knn_attack, subseed, write_augment_csv, write_coverage_csv,
    write_knn_csv, AugmentSweepConfig, CoverageConfig, KnnAttackConfig, KnnAttackReport, KnnBaseline,
};
use faircert::fairness::{min_samples_with, BoundVariant, FairnessError};
use faircert::fsc::{estimate_gates, FscSession, InferenceInput, Party, TrustedDealer};
use faircert::model::planted::PlantedConfig;
use faircert::protocol::{
    certify_in_process, certify_tcp, infer_in_process, infer_tcp, serve_dealer_tcp, serve_server_tcp, setup,
    tcp_connector, CertFailure, Client, InferenceFailure, Regulator, Server, ServerEvent, Transcript,
};
use faircert::{Dataset, FairnessMetric, FairnessSpec, Fixed, Micro, ModelSpec, TestMode};

const REJECT: u8 = 2;
const PRECONDITION: u8 = 3;
const ABORT: u8 = 4;

/// An error that maps to a specific exit code.
#[derive(Debug)]
struct Coded(u8, String);

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Coded {}

fn coded(code: u8, msg: impl Into<String>) -> anyhow::Error {
    Coded(code, msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "faircert", version, about = "Fairness certification and certified inference")]
struct Cli {
    /// Master seed; every subsystem seed is derived from it.
    #[arg(long, global = true, env = "FAIRCERT_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimum per-group sample count for a test to certify.
    Bound(BoundArgs),
    /// AND-gate cost estimate for hashing and inference.
    Gates(GatesArgs),
    /// Draw a synthetic labelled dataset (JSON).
    GenData(GenDataArgs),
    /// Build the planted model (binary model encoding).
    GenModel(GenModelArgs),
    /// Run certification and write the certificate.
    Certify(CertifyArgs),
    /// Obtain a certified prediction.
    Infer(InferArgs),
    /// Repeated draw-and-test cycles on a planted model.
    ExperimentCoverage(CoverageArgs),
    /// Nearest-neighbour switching attack against a public test set.
    AttackKnn(KnnArgs),
    /// Certification across augmentation degrees.
    AugmentSweep(SweepArgs),
    /// Honest certification and inference with the F_SC audit log.
    Audit(AuditArgs),
    /// Serve F_SC sessions over TCP.
    FscDealer(DealerArgs),
    /// Run the model server over TCP.
    Server(ServerArgs),
}

#[derive(Args, Debug, Clone)]
struct SpecArgs {
    #[arg(long, default_value = "ore")]
    metric: FairnessMetric,
    #[arg(long, default_value = "private")]
    mode: TestMode,
    #[arg(long, default_value = "0.1")]
    eps: Micro,
    #[arg(long, default_value = "0.05")]
    delta: Micro,
    /// Threshold in augmented mode.
    #[arg(long)]
    alpha: Option<Micro>,
}

impl SpecArgs {
    fn spec(&self) -> Result<FairnessSpec> {
        let spec = match self.mode {
            TestMode::Private => FairnessSpec::private(self.metric, self.eps, self.delta),
            TestMode::Augmented => FairnessSpec::augmented(
                self.metric,
                self.eps,
                self.delta,
                self.alpha.ok_or_else(|| coded(PRECONDITION, "--alpha is required in augmented mode"))?,
            ),
        };
        spec.map_err(|e| coded(PRECONDITION, e.to_string()))
    }
}

#[derive(Args, Debug, Clone)]
struct PlantArgs {
    /// Planted population as JSON; overrides the shape flags below.
    #[arg(long)]
    planted: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 2)]
    labels: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Per-group error rates of the planted model, comma separated.
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
}

impl PlantArgs {
    fn config(&self, seed: u64) -> Result<PlantedConfig> {
        let cfg = match &self.planted {
            Some(p) => {
                let cfg: PlantedConfig = serde_json::from_str(&read_text(p)?)
                    .map_err(|e| coded(PRECONDITION, format!("{}: {e}", p.display())))?;
                cfg.with_seed(seed)
            }
            None => {
                let rates = if self.rates.is_empty() { vec![0.0; self.groups] } else { self.rates.clone() };
                PlantedConfig::balanced(self.groups, self.labels, self.dim, rates, seed)
            }
        };
        cfg.validate().map_err(|e| coded(PRECONDITION, e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
struct AugmentArgs {
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, default_value = "0")]
    mask: Micro,
    #[arg(long, default_value = "1")]
    invoke: Micro,
    #[arg(long, default_value = "1")]
    degree: Micro,
}

impl AugmentArgs {
    fn config(&self, seed: u64) -> Result<AugmentorConfig> {
        AugmentorConfig::new(seed, Fixed::from_f64(self.sigma), self.mask, self.invoke, self.degree)
            .map_err(|e| coded(PRECONDITION, e.to_string()))
    }
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    eps: Micro,
    #[arg(long, default_value = "0")]
    efg: Micro,
    #[arg(long)]
    delta: Micro,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 2)]
    labels: usize,
    #[arg(long, default_value = "claim1")]
    variant: BoundVariant,
}

#[derive(Args, Debug)]
struct GatesArgs {
    /// Take both counts from a model file.
    #[arg(long, conflicts_with_all = ["model_bytes", "weight_bits"])]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    model_bytes: u64,
    #[arg(long)]
    weight_bits: Option<u64>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    plant: PlantArgs,
    /// Exactly this many samples from every group.
    #[arg(long, conflicts_with = "size")]
    per_group: Option<usize>,
    /// I.i.d. draws from the population.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenModelArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct Endpoints {
    /// Remote server; requires --fsc.
    #[arg(long, requires = "fsc")]
    connect: Option<String>,
    /// Remote F_SC dealer.
    #[arg(long, requires = "connect")]
    fsc: Option<String>,
    /// Run the local roles over loopback TCP instead of in-process channels.
    #[arg(long, conflicts_with = "connect")]
    tcp: bool,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    augment: AugmentArgs,
    #[command(flatten)]
    endpoints: Endpoints,
    /// Model under test; not needed with --connect.
    #[arg(long, required_unless_present = "connect")]
    model: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Certificate output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Verification key output (hex).
    #[arg(long)]
    vk_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    endpoints: Endpoints,
    #[arg(long, required_unless_present = "connect")]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "connect")]
    cert: Option<PathBuf>,
    /// Verification key as hex, or a file holding it.
    #[arg(long)]
    vk: String,
    /// Query features, comma separated; otherwise taken from --data.
    #[arg(long, value_delimiter = ',', requires = "group", conflicts_with = "data")]
    features: Vec<f64>,
    #[arg(long)]
    group: Option<u16>,
    #[arg(long, required_unless_present = "features")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Defaults to the design size.
    #[arg(long)]
    per_group: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KnnArgs {
    /// Use the committed fixture seed instead of --seed.
    #[arg(long)]
    fixture: bool,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    eval_size: Option<usize>,
    /// Threshold grid, comma separated; `inf` allowed.
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    /// Sweep given models and sets instead of generating them.
    #[arg(long, requires_all = ["unfair_model", "reference", "test", "eval"])]
    fair_model: Option<PathBuf>,
    #[arg(long)]
    unfair_model: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print the fair/unfair baselines and the verdict to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    augment: AugmentArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    degrees: Vec<Micro>,
    #[arg(long, default_value_t = 2000)]
    per_group: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 1200)]
    per_group: usize,
}

#[derive(Args, Debug)]
struct DealerArgs {
    #[arg(long)]
    listen: String,
    /// Sessions to serve before exiting.
    #[arg(long, default_value_t = 1)]
    sessions: usize,
}

#[derive(Args, Debug)]
struct ServerArgs {
    #[arg(long)]
    listen: String,
    #[arg(long)]
    fsc: String,
    #[arg(long)]
    model: PathBuf,
    /// Certificate to serve; a fresh certificate is written back here.
    #[arg(long)]
    cert: Option<PathBuf>,
    /// Connections to serve before exiting.
    #[arg(long, default_value_t = 1)]
    connections: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { PRECONDITION } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = e.downcast_ref::<Coded>().map_or(PRECONDITION, |c| c.0);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let seed = cli.seed;
    match cli.command {
        Command::Bound(a) => cmd_bound(a),
        Command::Gates(a) => cmd_gates(a),
        Command::GenData(a) => cmd_gen_data(a, seed),
        Command::GenModel(a) => cmd_gen_model(a, seed),
        Command::Certify(a) => cmd_certify(a, seed),
        Command::Infer(a) => cmd_infer(a),
        Command::ExperimentCoverage(a) => cmd_coverage(a, seed),
        Command::AttackKnn(a) => cmd_attack_knn(a, seed),
        Command::AugmentSweep(a) => cmd_augment_sweep(a, seed),
        Command::Audit(a) => cmd_audit(a, seed),
        Command::FscDealer(a) => cmd_dealer(a),
        Command::Server(a) => cmd_server(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelSpec> {
    ModelSpec::from_bytes(&read_bytes(path)?).map_err(|e| coded(PRECONDITION, format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    serde_json::from_str(&read_text(path)?).map_err(|e| coded(PRECONDITION, format!("{}: {e}", path.display())))
}

fn load_vk(arg: &str) -> Result<VerificationKey> {
    let text = if Path::new(arg).is_file() { read_text(Path::new(arg))? } else { arg.to_string() };
    let bytes = hex::decode(text.trim()).map_err(|e| coded(PRECONDITION, format!("verification key: {e}")))?;
    let key: [u8; 32] = bytes
        .try_into()
        .map_err(|_| coded(PRECONDITION, "verification key must be 32 bytes"))?;
    Ok(VerificationKey(key))
}

/// The regulator's signing key for a master seed.
fn regulator_keys(seed: u64) -> KeyPair {
    let mut material = b"faircert/regulator-key/".to_vec();
    material.extend_from_slice(&subseed(seed, "regulator", 0).to_le_bytes());
    setup(&sha3(&material))
}

/// CSV goes to `--out` when given, stdout otherwise.
fn csv_sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()
        .with_context(|| format!("resolving {addr}"))?
        .next()
        .ok_or_else(|| anyhow!("{addr} did not resolve"))
}

fn cmd_bound(a: BoundArgs) -> Result<u8> {
    let spec = FairnessSpec::private(FairnessMetric::Ore, a.eps, a.delta).map_err(|e| coded(PRECONDITION, e.to_string()))?;
    match min_samples_with(&spec, &a.efg.to_ratio(), a.groups, a.labels, a.variant) {
        Ok(m) => {
            println!("{m}");
            Ok(0)
        }
        Err(e @ FairnessError::GapNotBelowThreshold { .. }) => Err(coded(PRECONDITION, format!("GAP_NOT_BELOW_THRESHOLD: {e}"))),
        Err(e) => Err(coded(PRECONDITION, e.to_string())),
    }
}

fn cmd_gates(a: GatesArgs) -> Result<u8> {
    let (bytes, weight_bits) = match &a.model {
        Some(p) => {
            let m = load_model(p)?;
            (m.to_bytes().len() as u64, m.parameter_count() as u64 * 32)
        }
        None => (a.model_bytes, a.weight_bits.unwrap_or(a.model_bytes * 8)),
    };
    let r = estimate_gates(bytes, weight_bits);
    println!("model_bytes={bytes}");
    println!("weight_bits={weight_bits}");
    println!("hash_and_gates_per_input_bit={}", r.hash_and_gates_per_input_bit);
    println!("merkle_and_gates_per_input_bit={}", r.merkle_and_gates_per_input_bit);
    println!("merkle_total_and_gates={}", r.merkle_total_and_gates);
    println!("inference_and_gates_per_weight_bit={}", r.inference_and_gates_per_weight_bit);
    println!("total_inference_gates={}", r.total_inference_gates);
    match r.overhead_ratio {
        Some(x) => println!("overhead_ratio={x:.6}"),
        None => println!("overhead_ratio=-"),
    }
    Ok(0)
}

fn cmd_gen_data(a: GenDataArgs, seed: u64) -> Result<u8> {
    let cfg = a.plant.config(subseed(seed, "data", 0))?;
    let data = match (a.per_group, a.size) {
        (Some(n), None) => cfg.sample_stratified(&vec![n; cfg.num_groups]),
        (None, Some(m)) => cfg.sample(m),
        _ => bail!(coded(PRECONDITION, "give exactly one of --per-group or --size")),
    }
    .map_err(|e| coded(PRECONDITION, e.to_string()))?;
    write_bytes(&a.out, serde_json::to_string(&data)?.as_bytes())?;
    eprintln!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(0)
}

fn cmd_gen_model(a: GenModelArgs, seed: u64) -> Result<u8> {
    let cfg = a.plant.config(subseed(seed, "model", 0))?;
    let model = cfg.planted_model().map_err(|e| coded(PRECONDITION, e.to_string()))?;
    write_bytes(&a.out, &model.to_bytes())?;
    let gaps = cfg.true_gaps()?;
    eprintln!("true gaps: ore={:.6} eo={:.6} dp={:.6}", gaps.ore, gaps.eo, gaps.dp);
    Ok(0)
}

fn report_certification(outcome: Result<Certificate, CertFailure>, a: &CertifyArgs, vk: VerificationKey) -> Result<u8> {
    match outcome {
        Ok(cert) => {
            println!("CERTIFIED {}", cert.digest);
            if let Some(p) = &a.out {
                write_bytes(p, &cert.to_bytes())?;
            }
            let vk = hex::encode(vk.0);
            match &a.vk_out {
                Some(p) => write_bytes(p, vk.as_bytes())?,
                None => println!("vk {vk}"),
            }
            Ok(0)
        }
        Err(CertFailure::NotFair { digest }) => {
            println!("NOT_FAIR {digest}");
            Ok(REJECT)
        }
        Err(e @ CertFailure::PrecheckFailed { .. }) => Err(coded(PRECONDITION, e.to_string())),
        Err(e) => Err(coded(ABORT, e.to_string())),
    }
}

fn cmd_certify(a: CertifyArgs, seed: u64) -> Result<u8> {
    let spec = a.spec.spec()?;
    let data = load_dataset(&a.data)?;
    let mut regulator = Regulator::new(regulator_keys(seed), data, spec.clone());
    if spec.mode() == TestMode::Augmented {
        regulator = regulator.with_augmentor(a.augment.config(subseed(seed, "augmentor", 0))?);
    }
    if let (Some(server), Some(dealer)) = (&a.endpoints.connect, &a.endpoints.fsc) {
        let outcome = regulator.certify(
            &mut tcp_connector(resolve(server)?, Transcript::new()),
            &mut tcp_connector(resolve(dealer)?, Transcript::new()),
        );
        return report_certification(outcome, &a, regulator.verification_key());
    }
    let model = load_model(a.model.as_deref().expect("clap requires --model"))?;
    let mut server = Server::new(model);
    let run = if a.endpoints.tcp {
        certify_tcp(&regulator, &mut server, Arc::new(TrustedDealer)).map_err(|e| coded(ABORT, e.to_string()))?
    } else {
        certify_in_process(&regulator, &mut server, Arc::new(TrustedDealer))
    };
    report_certification(run.outcome, &a, regulator.verification_key())
}

fn cmd_infer(a: InferArgs) -> Result<u8> {
    let spec = a.spec.spec()?;
    let vk = load_vk(&a.vk)?;
    let input = match &a.data {
        Some(p) => {
            let data = load_dataset(p)?;
            let s = data
                .samples()
                .get(a.index)
                .ok_or_else(|| coded(PRECONDITION, format!("index {} out of range ({} samples)", a.index, data.len())))?;
            InferenceInput { group: s.group, features: s.features.clone() }
        }
        None => InferenceInput {
            group: a.group.expect("clap requires --group"),
            features: a.features.iter().map(|&x| Fixed::from_f64(x)).collect(),
        },
    };
    let client = Client::new(vk, spec, input);
    let outcome = if let (Some(server), Some(dealer)) = (&a.endpoints.connect, &a.endpoints.fsc) {
        client.infer(
            &mut tcp_connector(resolve(server)?, Transcript::new()),
            &mut tcp_connector(resolve(dealer)?, Transcript::new()),
        )
    } else {
        let model = load_model(a.model.as_deref().expect("clap requires --model"))?;
        let cert_bytes = read_bytes(a.cert.as_deref().expect("clap requires --cert"))?;
        let cert = Certificate::from_bytes(&cert_bytes).map_err(|e| coded(PRECONDITION, format!("certificate: {e}")))?;
        let mut server = Server::new(model).with_certificate(cert);
        let run = if a.endpoints.tcp {
            infer_tcp(&client, &mut server, Arc::new(TrustedDealer)).map_err(|e| coded(ABORT, e.to_string()))?
        } else {
            infer_in_process(&client, &mut server, Arc::new(TrustedDealer))
        };
        run.outcome
    };
    match outcome {
        Ok(p) => {
            println!("ACCEPT prediction={} digest={}", p.prediction, p.digest);
            Ok(0)
        }
        Err(InferenceFailure::Reject(r)) => {
            println!("REJECT {}", r.name());
            Ok(REJECT)
        }
        Err(e) => Err(coded(ABORT, e.to_string())),
    }
}

fn cmd_coverage(a: CoverageArgs, seed: u64) -> Result<u8> {
    let config = CoverageConfig {
        planted: a.plant.config(subseed(seed, "data", 0))?,
        spec: a.spec.spec()?,
        trials: a.trials,
        per_group: a.per_group,
    };
    let (rows, summary) = run_coverage(&config).map_err(|e| coded(PRECONDITION, e.to_string()))?;
    write_coverage_csv(&rows, &summary, csv_sink(&a.out)?)?;
    Ok(0)
}

fn cmd_attack_knn(a: KnnArgs, seed: u64) -> Result<u8> {
    let mut config = KnnAttackConfig::fixture();
    if !a.fixture {
        config.seed = subseed(seed, "attack", 0);
    }
    if let Some(s) = a.sigma {
        config.augmentor.noise_sigma = Fixed::from_f64(s);
        config.augmentor.validate().map_err(|e| coded(PRECONDITION, e.to_string()))?;
    }
    config.test_size = a.test_size.unwrap_or(config.test_size);
    config.eval_size = a.eval_size.unwrap_or(config.eval_size);
    if !a.taus.is_empty() {
        config.taus = a.taus.clone();
    }
    let report = match &a.fair_model {
        Some(fair) => {
            let path = |p: &Option<PathBuf>| p.clone().expect("clap requires the full set");
            let (fair, unfair) = (load_model(fair)?, load_model(&path(&a.unfair_model))?);
            let (reference, test, eval) = (
                load_dataset(&path(&a.reference))?,
                load_dataset(&path(&a.test))?,
                load_dataset(&path(&a.eval))?,
            );
            let rows = knn_sweep(&fair, &unfair, &reference, &test, &eval, &config.taus)
                .map_err(|e| coded(PRECONDITION, e.to_string()))?;
            let end = |i: usize| rows.get(i).copied();
            // the baselines are the degenerate thresholds when the grid has them
            let (lo, hi) = (end(0), end(rows.len().wrapping_sub(1)));
            let baseline = KnnBaseline {
                fair_accuracy: hi.map_or(f64::NAN, |r| r.accuracy),
                fair_efg: hi.map_or(f64::NAN, |r| r.efg),
                unfair_accuracy: lo.map_or(f64::NAN, |r| r.accuracy),
                unfair_efg: lo.map_or(f64::NAN, |r| r.efg),
            };
            KnnAttackReport { rows, baseline }
        }
        None => run_knn_attack(&config).map_err(|e| coded(PRECONDITION, e.to_string()))?,
    };
    write_knn_csv(&report, csv_sink(&a.out)?)?;
    if a.verbose {
        let b = report.baseline;
        eprintln!(
            "fair: accuracy={:.6} efg={:.6}; unfair: accuracy={:.6} efg={:.6}",
            b.fair_accuracy, b.fair_efg, b.unfair_accuracy, b.unfair_efg
        );
        match report.winning_tau(0.01) {
            Some(t) => eprintln!("attack succeeds at tau={t}"),
            None => eprintln!("no tau reaches both fair-level efg and unfair-level accuracy"),
        }
    }
    Ok(0)
}

fn cmd_augment_sweep(a: SweepArgs, seed: u64) -> Result<u8> {
    let mut spec_args = a.spec.clone();
    spec_args.mode = TestMode::Augmented;
    spec_args.alpha = spec_args.alpha.or(Some(spec_args.eps));
    let config = AugmentSweepConfig {
        planted: a.plant.config(subseed(seed, "data", 0))?,
        spec: spec_args.spec()?,
        augmentor: a.augment.config(subseed(seed, "augmentor", 0))?,
        degrees: a.degrees.clone(),
        per_group: a.per_group,
    };
    let rows = run_augment_sweep(&config).map_err(|e| coded(PRECONDITION, e.to_string()))?;
    write_augment_csv(&rows, csv_sink(&a.out)?)?;
    Ok(0)
}

fn print_session(title: &str, session: &FscSession) {
    println!("# {title}");
    print!("{}", session.audit_text());
    for party in [Party::P1, Party::P2] {
        let leaks: Vec<String> = session
            .leakage_for(party)
            .iter()
            .map(|e| format!("{}({})", e.datum, e.len))
            .collect();
        println!("delivered to {party}: {}", if leaks.is_empty() { "-".into() } else { leaks.join(" ") });
    }
}

fn cmd_audit(a: AuditArgs, seed: u64) -> Result<u8> {
    let spec = a.spec.spec()?;
    let population = a.plant.config(subseed(seed, "data", 0))?;
    let model = population
        .with_seed(subseed(seed, "model", 0))
        .planted_model()
        .map_err(|e| coded(PRECONDITION, e.to_string()))?;
    let data = population
        .sample_stratified(&vec![a.per_group; population.num_groups])
        .map_err(|e| coded(PRECONDITION, e.to_string()))?;
    let query = &data.samples()[0];
    let input = InferenceInput { group: query.group, features: query.features.clone() };
    let keys = regulator_keys(seed);
    let mut regulator = Regulator::new(regulator_keys(seed), data.clone(), spec.clone());
    if spec.mode() == TestMode::Augmented {
        regulator = regulator.with_augmentor(AugmentorConfig::identity(subseed(seed, "augmentor", 0)));
    }
    let mut server = Server::new(model);
    let run = certify_in_process(&regulator, &mut server, Arc::new(TrustedDealer));
    let session = run.session.map_err(|e| coded(ABORT, e.to_string()))?;
    print_session("CERT", &session);
    match (&run.outcome, &run.server) {
        (Ok(_), Ok(ServerEvent::Certified(_))) => {}
        (Err(CertFailure::NotFair { digest }), _) => {
            println!("NOT_FAIR {digest}");
            return Ok(REJECT);
        }
        (Err(e), _) => return Err(coded(ABORT, e.to_string())),
        (_, other) => return Err(coded(ABORT, format!("server ended with {other:?}"))),
    }
    let client = Client::new(keys.verification_key(), spec, input);
    let run = infer_in_process(&client, &mut server, Arc::new(TrustedDealer));
    let session = run.session.map_err(|e| coded(ABORT, e.to_string()))?;
    print_session("INF", &session);
    match run.outcome {
        Ok(_) => Ok(0),
        Err(InferenceFailure::Reject(r)) => {
            println!("REJECT {}", r.name());
            Ok(REJECT)
        }
        Err(e) => Err(coded(ABORT, e.to_string())),
    }
}

fn cmd_dealer(a: DealerArgs) -> Result<u8> {
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    eprintln!("F_SC dealer listening on {}", listener.local_addr()?);
    let sessions = serve_dealer_tcp(&listener, Arc::new(TrustedDealer), a.sessions).map_err(|e| coded(ABORT, e.to_string()))?;
    for s in &sessions {
        print!("{}", s.audit_text());
    }
    Ok(if sessions.iter().any(|s| s.abort_reason().is_some()) { ABORT } else { 0 })
}

fn cmd_server(a: ServerArgs) -> Result<u8> {
    let model = load_model(&a.model)?;
    let mut server = Server::new(model);
    if let Some(p) = a.cert.as_deref().filter(|p| p.exists()) {
        let cert = Certificate::from_bytes(&read_bytes(p)?).map_err(|e| coded(PRECONDITION, format!("certificate: {e}")))?;
        server = server.with_certificate(cert);
    }
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    eprintln!("server listening on {}", listener.local_addr()?);
    let events = serve_server_tcp(&listener, &mut server, resolve(&a.fsc)?, a.connections)
        .map_err(|e| coded(ABORT, e.to_string()))?;
    for e in &events {
        match e {
            ServerEvent::Certified(cert) => {
                println!("CERTIFIED {}", cert.digest);
                if let Some(p) = &a.cert {
                    write_bytes(p, &cert.to_bytes())?;
                }
            }
            other => println!("{other:?}"),
        }
    }
    Ok(0)
}
