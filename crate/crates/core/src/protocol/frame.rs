//! `u32 LE length ‖ type byte ‖ payload`, where length counts the type byte.

use super::ProtocolError;

pub const PROTOCOL_VERSION: u16 = 1;
pub const MAX_FRAME_LEN: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    CertId = 0x02,
    CertRequest = 0x03,
    FscInput = 0x04,
    FscResult = 0x05,
    Certificate = 0x06,
    SeedReveal = 0x07,
    InferRequest = 0x08,
    InferResult = 0x09,
    Reject = 0x0A,
    Abort = 0x0B,
    /// SHA3-256 of the server's model input, sent before the augmentor seed
    /// is revealed.
    InputCommit = 0x0C,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Option<Self> {
        use FrameType::*;
        Some(match b {
            0x01 => Hello,
            0x02 => CertId,
            0x03 => CertRequest,
            0x04 => FscInput,
            0x05 => FscResult,
            0x06 => Certificate,
            0x07 => SeedReveal,
            0x08 => InferRequest,
            0x09 => InferResult,
            0x0A => Reject,
            0x0B => Abort,
            0x0C => InputCommit,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn empty(kind: FrameType) -> Self {
        Frame::new(kind, Vec::new())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32 + 1).to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() < 5 {
            return Err(ProtocolError::MalformedFrame("shorter than header"));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"));
        if len == 0 || len as usize != bytes.len() - 4 {
            return Err(ProtocolError::MalformedFrame("length field disagrees with frame size"));
        }
        Self::from_body(&bytes[4..])
    }

    /// Decodes the type byte and payload (everything after the length).
    pub fn from_body(body: &[u8]) -> Result<Self, ProtocolError> {
        let (&t, payload) = body.split_first().ok_or(ProtocolError::MalformedFrame("empty body"))?;
        let kind = FrameType::from_byte(t).ok_or(ProtocolError::UnknownFrameType(t))?;
        Ok(Frame::new(kind, payload.to_vec()))
    }
}
