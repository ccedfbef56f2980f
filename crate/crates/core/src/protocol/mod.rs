//! Regulator, server, client and F_SC dealer state machines over framed
//! transports.
//!
//! Certification: regulator → server `HELLO`, `CERT_ID`, `CERT_REQUEST`
//! (augmented mode: server → `INPUT_COMMIT`, regulator → `SEED_REVEAL`), both
//! send `FSC_INPUT` to the dealer, the dealer returns `(b, h)` to the
//! regulator only, and the regulator answers the server with `CERTIFICATE` or
//! `REJECT`.
//!
//! Inference: client → server `HELLO`, `INFER_REQUEST`; server → client
//! `CERTIFICATE`; both send `FSC_INPUT` to the dealer, which returns
//! `INFER_RESULT` to the client only. The client then checks the certificate
//! against the digest it got from the dealer.

mod frame;
mod net;
mod transport;

use std::io;
use std::sync::Arc;

use thiserror::Error;

pub use frame::{Frame, FrameType, MAX_FRAME_LEN, PROTOCOL_VERSION};
pub use net::{
    certify_in_process, certify_tcp, infer_in_process, infer_tcp, serve_dealer_tcp, serve_server_tcp, tcp_connector,
    CertificationRun, InferenceRun, Transcripts,
};
pub use transport::{channel_pair, ChannelTransport, Direction, Recording, TcpTransport, Transcript, Transport};

use crate::augment::{AugmentorConfig, PUBLIC_CONFIG_LEN};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{
    certificate_message, issue_certificate, keygen, sha3, verify, verify_certificate, Certificate, CryptoError, KeyPair,
    ModelDigest, VerificationKey,
};
use crate::fairness::{min_samples, FairnessSpec, Rational, TestMode};
use crate::fsc::{
    CertOutput, CircuitId, FscOutput, FscSession, InferenceInput, InferenceOutput, Party, SecureComputeBackend,
    TestBundle,
};
use crate::model::{Dataset, Label, ModelSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("peer disconnected")]
    Disconnected,
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("unknown frame type {0:#04x}")]
    UnknownFrameType(u8),
    #[error("expected {expected:?}, got {got:?}")]
    UnexpectedFrame { expected: FrameType, got: FrameType },
    #[error("unsupported protocol version {0}")]
    VersionMismatch(u16),
    #[error("unexpected peer role {0}")]
    UnexpectedRole(u8),
    #[error("malformed payload: {0}")]
    Malformed(#[from] DecodeError),
    #[error("peer aborted")]
    PeerAborted,
    #[error("certificate: {0}")]
    Certificate(#[from] CryptoError),
}

impl From<io::Error> for ProtocolError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::UnexpectedEof | io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe => {
                ProtocolError::Disconnected
            }
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ProtocolError::Timeout,
            _ => ProtocolError::Io(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Regulator,
    Server,
    Client,
    Dealer,
}

impl Role {
    pub fn id(self) -> u8 {
        match self {
            Role::Regulator => 1,
            Role::Server => 2,
            Role::Client => 3,
            Role::Dealer => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Some(match id {
            1 => Role::Regulator,
            2 => Role::Server,
            3 => Role::Client,
            4 => Role::Dealer,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    SigInvalid,
    SpecMismatch,
    NotFair,
    NoCertificate,
}

impl RejectReason {
    pub fn code(self) -> u8 {
        match self {
            RejectReason::SigInvalid => 1,
            RejectReason::SpecMismatch => 2,
            RejectReason::NotFair => 3,
            RejectReason::NoCertificate => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => RejectReason::SigInvalid,
            2 => RejectReason::SpecMismatch,
            3 => RejectReason::NotFair,
            4 => RejectReason::NoCertificate,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            RejectReason::SigInvalid => "SIG_INVALID",
            RejectReason::SpecMismatch => "SPEC_MISMATCH",
            RejectReason::NotFair => "NOT_FAIR",
            RejectReason::NoCertificate => "NO_CERTIFICATE",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertFailure {
    #[error("PRECHECK_FAILED: need {required} samples per relevant count, have {actual:?}")]
    PrecheckFailed { required: u64, actual: Vec<u64> },
    #[error("NOT_FAIR: model {digest} did not pass")]
    NotFair { digest: ModelDigest },
    #[error("FSC_ABORT")]
    FscAbort,
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InferenceFailure {
    #[error("rejected: {}", .0.name())]
    Reject(RejectReason),
    #[error("FSC_ABORT")]
    FscAbort,
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedPrediction {
    pub prediction: Label,
    pub digest: ModelDigest,
    pub certificate: Certificate,
}

/// Generates the regulator's key pair; the verification key is `cert_ID`.
pub fn setup(seed: &[u8; 32]) -> KeyPair {
    keygen(seed)
}

pub fn cert_id_frame(vk: &VerificationKey) -> Frame {
    Frame::new(FrameType::CertId, vk.0.to_vec())
}

pub fn decode_cert_id(frame: &Frame) -> Result<VerificationKey, ProtocolError> {
    expect(frame, FrameType::CertId)?;
    let mut r = Reader::new(&frame.payload);
    let vk = VerificationKey(r.array()?);
    r.finish()?;
    Ok(vk)
}

/// Lazily opens a connection to a peer.
pub type Connector<'a> = &'a mut dyn FnMut() -> Result<Box<dyn Transport>, ProtocolError>;

fn expect(frame: &Frame, kind: FrameType) -> Result<(), ProtocolError> {
    if frame.kind == FrameType::Abort && kind != FrameType::Abort {
        return Err(ProtocolError::PeerAborted);
    }
    if frame.kind != kind {
        return Err(ProtocolError::UnexpectedFrame {
            expected: kind,
            got: frame.kind,
        });
    }
    Ok(())
}

fn recv_kind(conn: &mut dyn Transport, kind: FrameType) -> Result<Frame, ProtocolError> {
    let f = conn.recv()?;
    expect(&f, kind)?;
    Ok(f)
}

/// Exchanges HELLO frames and returns the peer's role.
fn hello(conn: &mut dyn Transport, me: Role) -> Result<Role, ProtocolError> {
    let mut w = Writer::new();
    w.u8(me.id()).u16(PROTOCOL_VERSION);
    conn.send(&Frame::new(FrameType::Hello, w.finish()))?;
    read_hello(conn)
}

fn read_hello(conn: &mut dyn Transport) -> Result<Role, ProtocolError> {
    let f = recv_kind(conn, FrameType::Hello)?;
    let mut r = Reader::new(&f.payload);
    let role = r.u8()?;
    let version = r.u16()?;
    r.finish()?;
    if version != PROTOCOL_VERSION {
        let _ = conn.send(&Frame::empty(FrameType::Abort));
        return Err(ProtocolError::VersionMismatch(version));
    }
    Role::from_id(role).ok_or(ProtocolError::UnexpectedRole(role))
}

fn reply_hello(conn: &mut dyn Transport, me: Role) -> Result<(), ProtocolError> {
    let mut w = Writer::new();
    w.u8(me.id()).u16(PROTOCOL_VERSION);
    conn.send(&Frame::new(FrameType::Hello, w.finish()))
}

fn expect_role(got: Role, want: Role) -> Result<(), ProtocolError> {
    if got == want {
        Ok(())
    } else {
        Err(ProtocolError::UnexpectedRole(got.id()))
    }
}

fn fsc_input_frame(circuit: CircuitId, payload: &[u8]) -> Frame {
    let mut body = Vec::with_capacity(payload.len() + 1);
    body.push(circuit.id());
    body.extend_from_slice(payload);
    Frame::new(FrameType::FscInput, body)
}

fn reject_frame(reason: RejectReason) -> Frame {
    Frame::new(FrameType::Reject, vec![reason.code()])
}

fn decode_reject(frame: &Frame) -> Result<RejectReason, ProtocolError> {
    match frame.payload.as_slice() {
        [c] => RejectReason::from_code(*c).ok_or(ProtocolError::Malformed(DecodeError::InvalidValue("reject reason"))),
        _ => Err(ProtocolError::Malformed(DecodeError::InvalidValue("reject payload"))),
    }
}

/// Parameters the regulator announces before the secure computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertRequest {
    pub spec: FairnessSpec,
    pub total: u32,
    /// Augmentor without its master seed.
    pub augmentor_public: Option<[u8; PUBLIC_CONFIG_LEN]>,
}

impl CertRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.spec.encode_into(&mut w);
        w.u32(self.total).u8(self.spec.mode().id());
        if let Some(p) = &self.augmentor_public {
            w.bytes(p);
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let spec = FairnessSpec::decode_from(&mut r)?;
        let total = r.u32()?;
        let mode = TestMode::from_id(r.u8()?).ok_or(DecodeError::InvalidValue("mode"))?;
        if mode != spec.mode() {
            return Err(DecodeError::InvalidValue("mode"));
        }
        let augmentor_public = match mode {
            TestMode::Augmented => Some(r.array()?),
            TestMode::Private => None,
        };
        r.finish()?;
        Ok(CertRequest {
            spec,
            total,
            augmentor_public,
        })
    }
}

pub struct Regulator {
    keys: KeyPair,
    dataset: Dataset,
    spec: FairnessSpec,
    augmentor: Option<AugmentorConfig>,
}

impl Regulator {
    pub fn new(keys: KeyPair, dataset: Dataset, spec: FairnessSpec) -> Self {
        Regulator {
            keys,
            dataset,
            spec,
            augmentor: None,
        }
    }

    /// The master seed of `config` stays private until the server commits.
    pub fn with_augmentor(mut self, config: AugmentorConfig) -> Self {
        self.augmentor = Some(config);
        self
    }

    pub fn verification_key(&self) -> VerificationKey {
        self.keys.verification_key()
    }

    pub fn spec(&self) -> &FairnessSpec {
        &self.spec
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Every relevant count must reach the bound evaluated at a zero gap.
    pub fn precheck(&self) -> Result<(), CertFailure> {
        let (g, y) = (self.dataset.num_groups(), self.dataset.num_labels());
        let required = min_samples(&self.spec, &Rational::from_integer(0), g, y).unwrap_or(u64::MAX);
        let actual = if self.spec.metric().counts_per_label() {
            self.dataset.cell_counts()
        } else {
            self.dataset.group_counts()
        };
        if actual.iter().all(|&c| c >= required) {
            Ok(())
        } else {
            Err(CertFailure::PrecheckFailed { required, actual })
        }
    }

    fn augmentor_for_mode(&self) -> Result<Option<AugmentorConfig>, CertFailure> {
        match (self.spec.mode(), self.augmentor) {
            (TestMode::Private, _) => Ok(None),
            (TestMode::Augmented, Some(c)) => Ok(Some(c)),
            (TestMode::Augmented, None) => Err(CertFailure::Protocol(ProtocolError::Malformed(
                DecodeError::InvalidValue("augmented mode without augmentor"),
            ))),
        }
    }

    /// Runs certification; the server is contacted only after the precheck.
    pub fn certify(&self, server: Connector<'_>, dealer: Connector<'_>) -> Result<Certificate, CertFailure> {
        self.precheck()?;
        let augmentor = self.augmentor_for_mode()?;
        let mut s = server()?;
        expect_role(hello(s.as_mut(), Role::Regulator)?, Role::Server)?;
        s.send(&cert_id_frame(&self.verification_key()))?;
        let augmentor_public = augmentor.map(|c| {
            let mut w = Writer::new();
            c.encode_public(&mut w);
            w.finish().try_into().expect("public config length")
        });
        let request = CertRequest {
            spec: self.spec.clone(),
            total: self.dataset.len() as u32,
            augmentor_public,
        };
        s.send(&Frame::new(FrameType::CertRequest, request.encode()))?;

        let mut bundle = TestBundle {
            spec: self.spec.clone(),
            dataset: self.dataset.clone(),
            augmentor: None,
            commitment: None,
        };
        if let Some(config) = augmentor {
            let f = recv_kind(s.as_mut(), FrameType::InputCommit)?;
            let commitment: [u8; 32] = Reader::new(&f.payload).array().map_err(ProtocolError::from)?;
            s.send(&Frame::new(FrameType::SeedReveal, config.master_seed.to_le_bytes().to_vec()))?;
            bundle.augmentor = Some(config);
            bundle.commitment = Some(commitment);
        }

        let mut d = dealer()?;
        expect_role(hello(d.as_mut(), Role::Regulator)?, Role::Dealer)?;
        d.send(&fsc_input_frame(CircuitId::Cert, &bundle.encode()))?;
        let result = d.recv()?;
        if result.kind == FrameType::Abort {
            s.send(&Frame::empty(FrameType::Abort))?;
            return Err(CertFailure::FscAbort);
        }
        expect(&result, FrameType::FscResult)?;
        let out = CertOutput::from_bytes(&result.payload).map_err(ProtocolError::from)?;
        if out.passed {
            let cert = issue_certificate(&self.keys, out.digest, self.spec.clone());
            s.send(&Frame::new(FrameType::Certificate, cert.to_bytes()))?;
            Ok(cert)
        } else {
            s.send(&reject_frame(RejectReason::NotFair))?;
            Err(CertFailure::NotFair { digest: out.digest })
        }
    }
}

/// Ways a malicious server departs from the protocol.
#[derive(Debug, Clone, Default)]
pub struct ServerDeviation {
    /// Model fed to the inference circuit instead of the certified one.
    pub inference_model: Option<ModelSpec>,
    /// Bytes sent in place of the stored certificate.
    pub certificate_bytes: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerEvent {
    Certified(Certificate),
    NotCertified,
    CertificationAborted,
    Served,
    Refused,
}

#[derive(Debug, Clone)]
pub struct Server {
    model: ModelSpec,
    certificate: Option<Certificate>,
    deviation: ServerDeviation,
}

impl Server {
    pub fn new(model: ModelSpec) -> Self {
        Server {
            model,
            certificate: None,
            deviation: ServerDeviation::default(),
        }
    }

    pub fn with_certificate(mut self, cert: Certificate) -> Self {
        self.certificate = Some(cert);
        self
    }

    pub fn with_deviation(mut self, deviation: ServerDeviation) -> Self {
        self.deviation = deviation;
        self
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        self.certificate.as_ref()
    }

    /// Handles one incoming connection from a regulator or a client.
    pub fn serve(&mut self, conn: &mut dyn Transport, dealer: Connector<'_>) -> Result<ServerEvent, ProtocolError> {
        let peer = read_hello(conn)?;
        reply_hello(conn, Role::Server)?;
        match peer {
            Role::Regulator => self.serve_certification(conn, dealer),
            Role::Client => self.serve_inference(conn, dealer),
            other => Err(ProtocolError::UnexpectedRole(other.id())),
        }
    }

    fn dealer_round(&self, dealer: Connector<'_>, circuit: CircuitId, model_bytes: &[u8]) -> Result<bool, ProtocolError> {
        let mut d = dealer()?;
        expect_role(hello(d.as_mut(), Role::Server)?, Role::Dealer)?;
        d.send(&fsc_input_frame(circuit, model_bytes))?;
        let f = d.recv()?;
        match f.kind {
            FrameType::FscResult => Ok(true),
            FrameType::Abort => Ok(false),
            got => Err(ProtocolError::UnexpectedFrame {
                expected: FrameType::FscResult,
                got,
            }),
        }
    }

    fn serve_certification(&mut self, conn: &mut dyn Transport, dealer: Connector<'_>) -> Result<ServerEvent, ProtocolError> {
        let vk = decode_cert_id(&conn.recv()?)?;
        let request = CertRequest::decode(&recv_kind(conn, FrameType::CertRequest)?.payload)?;
        let model_bytes = self.model.to_bytes();
        if request.spec.mode() == TestMode::Augmented {
            conn.send(&Frame::new(FrameType::InputCommit, sha3(&model_bytes).to_vec()))?;
            let seed = recv_kind(conn, FrameType::SeedReveal)?;
            if seed.payload.len() != 8 {
                return Err(ProtocolError::Malformed(DecodeError::InvalidValue("seed")));
            }
        }
        self.dealer_round(dealer, CircuitId::Cert, &model_bytes)?;
        let f = conn.recv()?;
        match f.kind {
            FrameType::Certificate => {
                let cert = Certificate::from_bytes(&f.payload)?;
                if !verify_certificate(&vk, &cert)? {
                    return Err(ProtocolError::Certificate(CryptoError::MalformedKey));
                }
                self.certificate = Some(cert.clone());
                Ok(ServerEvent::Certified(cert))
            }
            FrameType::Reject => {
                decode_reject(&f)?;
                Ok(ServerEvent::NotCertified)
            }
            FrameType::Abort => Ok(ServerEvent::CertificationAborted),
            got => Err(ProtocolError::UnexpectedFrame {
                expected: FrameType::Certificate,
                got,
            }),
        }
    }

    fn serve_inference(&mut self, conn: &mut dyn Transport, dealer: Connector<'_>) -> Result<ServerEvent, ProtocolError> {
        let request = recv_kind(conn, FrameType::InferRequest)?;
        FairnessSpec::decode_from(&mut Reader::new(&request.payload))?;
        let cert_bytes = match (&self.deviation.certificate_bytes, &self.certificate) {
            (Some(b), _) => b.clone(),
            (None, Some(c)) => c.to_bytes(),
            (None, None) => {
                conn.send(&reject_frame(RejectReason::NoCertificate))?;
                return Ok(ServerEvent::Refused);
            }
        };
        conn.send(&Frame::new(FrameType::Certificate, cert_bytes))?;
        let model = self.deviation.inference_model.as_ref().unwrap_or(&self.model);
        self.dealer_round(dealer, CircuitId::Inf, &model.to_bytes())?;
        Ok(ServerEvent::Served)
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    vk: VerificationKey,
    spec: FairnessSpec,
    input: InferenceInput,
}

impl Client {
    pub fn new(vk: VerificationKey, spec: FairnessSpec, input: InferenceInput) -> Self {
        Client { vk, spec, input }
    }

    pub fn input(&self) -> &InferenceInput {
        &self.input
    }

    pub fn infer(&self, server: Connector<'_>, dealer: Connector<'_>) -> Result<AcceptedPrediction, InferenceFailure> {
        let mut s = server()?;
        expect_role(hello(s.as_mut(), Role::Client)?, Role::Server)?;
        s.send(&Frame::new(FrameType::InferRequest, self.spec.encode()))?;
        let f = s.recv()?;
        let cert_bytes = match f.kind {
            FrameType::Certificate => f.payload,
            FrameType::Reject => return Err(InferenceFailure::Reject(decode_reject(&f)?)),
            FrameType::Abort => return Err(ProtocolError::PeerAborted.into()),
            got => {
                return Err(ProtocolError::UnexpectedFrame {
                    expected: FrameType::Certificate,
                    got,
                }
                .into())
            }
        };

        let mut d = dealer()?;
        expect_role(hello(d.as_mut(), Role::Client)?, Role::Dealer)?;
        d.send(&fsc_input_frame(CircuitId::Inf, &self.input.encode()))?;
        let result = d.recv()?;
        if result.kind == FrameType::Abort {
            return Err(InferenceFailure::FscAbort);
        }
        expect(&result, FrameType::InferResult)?;
        let out = InferenceOutput::from_bytes(&result.payload).map_err(ProtocolError::from)?;
        self.check(&cert_bytes, &out)
    }

    /// Accepts iff the certificate states the requested parameters and its
    /// signature covers the digest computed inside F_SC.
    pub fn check(&self, cert_bytes: &[u8], out: &InferenceOutput) -> Result<AcceptedPrediction, InferenceFailure> {
        let cert = Certificate::from_bytes(cert_bytes).map_err(|_| InferenceFailure::Reject(RejectReason::SigInvalid))?;
        if cert.spec != self.spec {
            return Err(InferenceFailure::Reject(RejectReason::SpecMismatch));
        }
        let message = certificate_message(&out.digest, &self.spec);
        match verify(&self.vk, &message, &cert.signature) {
            Ok(true) => Ok(AcceptedPrediction {
                prediction: out.prediction,
                digest: out.digest,
                certificate: cert,
            }),
            _ => Err(InferenceFailure::Reject(RejectReason::SigInvalid)),
        }
    }
}

/// Serves one F_SC session over two connections, one of which must come
/// from the server (P1).
pub fn dealer_serve(
    backend: Arc<dyn SecureComputeBackend>,
    mut conns: [Box<dyn Transport>; 2],
) -> Result<FscSession, ProtocolError> {
    let mut roles = [Role::Dealer; 2];
    let mut inputs: [Option<(u8, Vec<u8>)>; 2] = [None, None];
    for (i, conn) in conns.iter_mut().enumerate() {
        roles[i] = read_hello(conn.as_mut())?;
        reply_hello(conn.as_mut(), Role::Dealer)?;
        let f = recv_kind(conn.as_mut(), FrameType::FscInput)?;
        let (&id, payload) = f
            .payload
            .split_first()
            .ok_or(ProtocolError::Malformed(DecodeError::InvalidValue("circuit id")))?;
        inputs[i] = Some((id, payload.to_vec()));
    }
    let p1 = match roles {
        [Role::Server, Role::Regulator | Role::Client] => 0,
        [Role::Regulator | Role::Client, Role::Server] => 1,
        [a, _] => return Err(ProtocolError::UnexpectedRole(a.id())),
    };
    let p2 = 1 - p1;
    let (id1, x1) = inputs[p1].take().expect("collected");
    let (id2, x2) = inputs[p2].take().expect("collected");

    let mut session = FscSession::new(backend);
    session.input(Party::P1, x1).expect("fresh session");
    session.input(Party::P2, x2).expect("fresh session");
    let circuits = (CircuitId::from_id(id1), CircuitId::from_id(id2));
    let p2_kind = match circuits {
        (Some(c1), Some(c2)) => {
            let _ = session.compute(Party::P1, c1);
            let _ = session.compute(Party::P2, c2);
            match c2 {
                CircuitId::Cert => FrameType::FscResult,
                CircuitId::Inf => FrameType::InferResult,
            }
        }
        _ => {
            for c in &mut conns {
                c.send(&Frame::empty(FrameType::Abort))?;
            }
            return Ok(session);
        }
    };
    let (y1, y2) = session.output().unwrap_or((FscOutput::Abort, FscOutput::Abort));
    for (idx, y, kind) in [(p1, y1, FrameType::FscResult), (p2, y2, p2_kind)] {
        let frame = match y {
            FscOutput::Value(v) => Frame::new(kind, v),
            FscOutput::Abort => Frame::empty(FrameType::Abort),
        };
        conns[idx].send(&frame)?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::FairnessMetric;
    use crate::micro::Micro;

    #[test]
    fn setup_keys() {
        let a = setup(&[1; 32]);
        let b = setup(&[2; 32]);
        assert_ne!(a.verification_key(), b.verification_key());
        let vk = a.verification_key();
        let f = cert_id_frame(&vk);
        let decoded = decode_cert_id(&Frame::decode(&f.encode()).unwrap()).unwrap();
        assert_eq!(decoded, vk);
        assert_eq!(decoded.key_id(), sha3(&vk.0));
    }

    #[test]
    fn cert_request_round_trips() {
        let spec = FairnessSpec::augmented(FairnessMetric::Dp, Micro::from_units(100_000), Micro::from_units(50_000), Micro::from_units(70_000)).unwrap();
        let r = CertRequest {
            spec,
            total: 8000,
            augmentor_public: Some([3; PUBLIC_CONFIG_LEN]),
        };
        assert_eq!(CertRequest::decode(&r.encode()).unwrap(), r);
        let private = CertRequest {
            spec: FairnessSpec::private(FairnessMetric::Ore, Micro::from_units(100_000), Micro::from_units(50_000)).unwrap(),
            total: 1,
            augmentor_public: None,
        };
        assert_eq!(CertRequest::decode(&private.encode()).unwrap(), private);
    }

    #[test]
    fn version_mismatch_aborts() {
        let (mut a, mut b) = channel_pair();
        let mut w = Writer::new();
        w.u8(Role::Client.id()).u16(2);
        a.send(&Frame::new(FrameType::Hello, w.finish())).unwrap();
        assert_eq!(read_hello(&mut b), Err(ProtocolError::VersionMismatch(2)));
        assert_eq!(a.recv().unwrap().kind, FrameType::Abort);
    }

    #[test]
    fn reject_codes_round_trip() {
        for r in [RejectReason::SigInvalid, RejectReason::SpecMismatch, RejectReason::NotFair, RejectReason::NoCertificate] {
            assert_eq!(decode_reject(&reject_frame(r)).unwrap(), r);
        }
    }
}
