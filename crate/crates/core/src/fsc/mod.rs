//! Ideal secure-computation functionality emulated by an in-process trusted
//! dealer, the certification and inference circuits it evaluates, and an
//! arithmetic AND-gate cost estimator.
//!
//! Session lifecycle: both parties submit inputs (`AWAITING_INPUT` → `READY`),
//! both request the same circuit (`READY` → `COMPUTED`), outputs are released
//! once (`COMPUTED` → `DELIVERED`). A circuit-level abort moves the session to
//! `ABORTED` and both parties receive `Abort`.

mod circuits;
mod gates;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use circuits::{
    cert_passes, circuit_cert, circuit_inf, pair_threshold, CertOutput, InferenceInput, InferenceOutput,
    TestBundle,
};
pub use gates::{estimate_gates, GateCostReport};

use crate::crypto::sha3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    P1,
    P2,
}

impl Party {
    fn index(self) -> usize {
        match self {
            Party::P1 => 0,
            Party::P2 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Party::P1 => "P1",
            Party::P2 => "P2",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CircuitId {
    Cert,
    Inf,
}

impl CircuitId {
    pub fn id(self) -> u8 {
        match self {
            CircuitId::Cert => 1,
            CircuitId::Inf => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(CircuitId::Cert),
            2 => Some(CircuitId::Inf),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    AwaitingInput,
    Ready,
    Computed,
    Delivered,
    Aborted,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FscError {
    #[error("operation not allowed in state {0:?}")]
    WrongState(SessionState),
    #[error("parties requested different circuits")]
    CircuitMismatch,
}

/// Why a circuit refused to produce outputs. Every variant results in both
/// parties receiving `Abort`.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbortReason {
    #[error("input size does not fit the circuit")]
    SizeMismatch,
    #[error("model bytes do not deserialize")]
    MalformedModel,
    #[error("test bundle does not deserialize")]
    MalformedBundle,
    #[error("input dimension does not match the model")]
    DimensionMismatch,
    #[error("model bytes do not match the committed input")]
    CommitmentMismatch,
}

/// A labelled datum released to one party; labels feed the leakage log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datum {
    pub label: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CircuitOutputs {
    pub to_p1: Vec<Datum>,
    pub to_p2: Vec<Datum>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FscOutput {
    Value(Vec<u8>),
    Abort,
}

impl FscOutput {
    fn from_data(data: &[Datum]) -> Self {
        FscOutput::Value(data.iter().flat_map(|d| d.bytes.iter().copied()).collect())
    }
}

/// One entry per datum delivered to a party.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakageEntry {
    pub party: Party,
    pub datum: &'static str,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Input,
    Compute,
    Output,
    Abort,
}

impl MessageKind {
    fn name(self) -> &'static str {
        match self {
            MessageKind::Input => "INPUT",
            MessageKind::Compute => "COMPUTE",
            MessageKind::Output => "OUTPUT",
            MessageKind::Abort => "ABORT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditLine {
    pub seq: u64,
    pub party: Party,
    pub kind: MessageKind,
    pub len: usize,
    pub digest: [u8; 32],
}

impl fmt::Display for AuditLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} ", self.seq, self.party, self.kind.name(), self.len)?;
        for b in &self.digest {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

pub trait SecureComputeBackend: Send + Sync {
    fn evaluate(&self, circuit: CircuitId, x1: &[u8], x2: &[u8]) -> Result<CircuitOutputs, AbortReason>;
}

/// Evaluates circuits in the clear, in process.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrustedDealer;

impl SecureComputeBackend for TrustedDealer {
    fn evaluate(&self, circuit: CircuitId, x1: &[u8], x2: &[u8]) -> Result<CircuitOutputs, AbortReason> {
        match circuit {
            CircuitId::Cert => circuit_cert(x1, x2).map(|out| CircuitOutputs {
                to_p1: Vec::new(),
                to_p2: vec![
                    Datum {
                        label: "b",
                        bytes: vec![out.passed as u8],
                    },
                    Datum {
                        label: "h",
                        bytes: out.digest.0.to_vec(),
                    },
                ],
            }),
            CircuitId::Inf => circuit_inf(x1, x2).map(|out| CircuitOutputs {
                to_p1: Vec::new(),
                to_p2: vec![
                    Datum {
                        label: "y_hat",
                        bytes: out.prediction.to_le_bytes().to_vec(),
                    },
                    Datum {
                        label: "h_tilde",
                        bytes: out.digest.0.to_vec(),
                    },
                ],
            }),
        }
    }
}

pub struct FscSession {
    backend: Arc<dyn SecureComputeBackend>,
    state: SessionState,
    inputs: [Option<Vec<u8>>; 2],
    requests: [Option<CircuitId>; 2],
    outputs: Option<[FscOutput; 2]>,
    abort_reason: Option<AbortReason>,
    leakage: Vec<LeakageEntry>,
    audit: Vec<AuditLine>,
}

impl fmt::Debug for FscSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FscSession")
            .field("state", &self.state)
            .field("requests", &self.requests)
            .field("leakage", &self.leakage)
            .finish_non_exhaustive()
    }
}

impl Default for FscSession {
    fn default() -> Self {
        FscSession::new(Arc::new(TrustedDealer))
    }
}

impl FscSession {
    pub fn new(backend: Arc<dyn SecureComputeBackend>) -> Self {
        FscSession {
            backend,
            state: SessionState::AwaitingInput,
            inputs: [None, None],
            requests: [None, None],
            outputs: None,
            abort_reason: None,
            leakage: Vec::new(),
            audit: Vec::new(),
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn abort_reason(&self) -> Option<&AbortReason> {
        self.abort_reason.as_ref()
    }

    pub fn leakage(&self) -> &[LeakageEntry] {
        &self.leakage
    }

    pub fn leakage_for(&self, party: Party) -> Vec<&LeakageEntry> {
        self.leakage.iter().filter(|e| e.party == party).collect()
    }

    pub fn audit(&self) -> &[AuditLine] {
        &self.audit
    }

    pub fn audit_text(&self) -> String {
        self.audit.iter().map(|l| format!("{l}\n")).collect()
    }

    fn log(&mut self, party: Party, kind: MessageKind, payload: &[u8]) {
        self.audit.push(AuditLine {
            seq: self.audit.len() as u64,
            party,
            kind,
            len: payload.len(),
            digest: sha3(payload),
        });
    }

    pub fn input(&mut self, party: Party, payload: Vec<u8>) -> Result<(), FscError> {
        if self.state != SessionState::AwaitingInput || self.inputs[party.index()].is_some() {
            return Err(FscError::WrongState(self.state));
        }
        self.log(party, MessageKind::Input, &payload);
        self.inputs[party.index()] = Some(payload);
        if self.inputs.iter().all(Option::is_some) {
            self.state = SessionState::Ready;
        }
        Ok(())
    }

    /// Registers `party`'s compute request; evaluates once both agree.
    pub fn compute(&mut self, party: Party, circuit: CircuitId) -> Result<(), FscError> {
        if self.state != SessionState::Ready || self.requests[party.index()].is_some() {
            return Err(FscError::WrongState(self.state));
        }
        self.log(party, MessageKind::Compute, &[circuit.id()]);
        self.requests[party.index()] = Some(circuit);
        match self.requests {
            [Some(a), Some(b)] if a != b => {
                self.state = SessionState::Aborted;
                self.outputs = Some([FscOutput::Abort, FscOutput::Abort]);
                Err(FscError::CircuitMismatch)
            }
            [Some(c), Some(_)] => {
                let (x1, x2) = match &self.inputs {
                    [Some(x1), Some(x2)] => (x1, x2),
                    _ => unreachable!("READY implies both inputs"),
                };
                match self.backend.evaluate(c, x1, x2) {
                    Ok(out) => {
                        self.outputs = Some([FscOutput::from_data(&out.to_p1), FscOutput::from_data(&out.to_p2)]);
                        for d in &out.to_p1 {
                            self.leakage.push(LeakageEntry {
                                party: Party::P1,
                                datum: d.label,
                                len: d.bytes.len(),
                            });
                        }
                        for d in &out.to_p2 {
                            self.leakage.push(LeakageEntry {
                                party: Party::P2,
                                datum: d.label,
                                len: d.bytes.len(),
                            });
                        }
                        self.state = SessionState::Computed;
                    }
                    Err(reason) => {
                        self.outputs = Some([FscOutput::Abort, FscOutput::Abort]);
                        self.abort_reason = Some(reason);
                        self.state = SessionState::Aborted;
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Releases `(y1, y2)`. Allowed once after compute, or after an abort.
    pub fn output(&mut self) -> Result<(FscOutput, FscOutput), FscError> {
        match self.state {
            SessionState::Computed | SessionState::Aborted => {}
            s => return Err(FscError::WrongState(s)),
        }
        let [y1, y2] = self.outputs.take().ok_or(FscError::WrongState(self.state))?;
        for (party, y) in [(Party::P1, &y1), (Party::P2, &y2)] {
            match y {
                FscOutput::Value(v) => self.log(party, MessageKind::Output, v),
                FscOutput::Abort => {
                    self.leakage.push(LeakageEntry {
                        party,
                        datum: "abort",
                        len: 0,
                    });
                    self.log(party, MessageKind::Abort, &[]);
                }
            }
        }
        if self.state == SessionState::Computed {
            self.state = SessionState::Delivered;
        }
        Ok((y1, y2))
    }

    /// Input and compute for both parties followed by output.
    pub fn run(mut self, circuit: CircuitId, x1: Vec<u8>, x2: Vec<u8>) -> (FscOutput, FscOutput, FscSession) {
        let steps = self
            .input(Party::P1, x1)
            .and_then(|_| self.input(Party::P2, x2))
            .and_then(|_| self.compute(Party::P1, circuit))
            .and_then(|_| self.compute(Party::P2, circuit));
        debug_assert!(steps.is_ok());
        let (y1, y2) = self.output().unwrap_or((FscOutput::Abort, FscOutput::Abort));
        (y1, y2, self)
    }
}
