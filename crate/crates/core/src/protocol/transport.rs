//! Ordered, reliable frame delivery over in-process channels or TCP.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::frame::{Frame, MAX_FRAME_LEN};
use super::ProtocolError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

pub trait Transport: Send {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<Frame, ProtocolError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        (**self).send(frame)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        (**self).recv()
    }
}

/// One end of an in-process duplex link carrying encoded frames.
#[derive(Debug)]
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

pub fn channel_pair() -> (ChannelTransport, ChannelTransport) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        ChannelTransport {
            tx: a_tx,
            rx: a_rx,
            timeout: DEFAULT_TIMEOUT,
        },
        ChannelTransport {
            tx: b_tx,
            rx: b_rx,
            timeout: DEFAULT_TIMEOUT,
        },
    )
}

impl Transport for ChannelTransport {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.tx.send(frame.encode()).map_err(|_| ProtocolError::Disconnected)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(bytes) => Frame::decode(&bytes),
            Err(RecvTimeoutError::Timeout) => Err(ProtocolError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Disconnected),
        }
    }
}

#[derive(Debug)]
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Result<Self, ProtocolError> {
        stream.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ProtocolError> {
        Self::new(TcpStream::connect(addr)?)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.stream.write_all(&frame.encode())?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        let mut len = [0u8; 4];
        self.stream.read_exact(&mut len)?;
        let len = u32::from_le_bytes(len);
        if len == 0 || len > MAX_FRAME_LEN {
            return Err(ProtocolError::MalformedFrame("frame length out of range"));
        }
        let mut body = vec![0u8; len as usize];
        self.stream.read_exact(&mut body)?;
        Frame::from_body(&body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

type Entries = Vec<(Direction, Vec<u8>)>;

/// Encoded frames observed at one endpoint, in order.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    entries: Arc<Mutex<Entries>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> Vec<(Direction, Vec<u8>)> {
        self.entries.lock().expect("transcript lock").clone()
    }

    pub fn received(&self) -> Vec<Frame> {
        self.frames(Direction::Received)
    }

    pub fn sent(&self) -> Vec<Frame> {
        self.frames(Direction::Sent)
    }

    fn frames(&self, dir: Direction) -> Vec<Frame> {
        self.entries()
            .into_iter()
            .filter(|(d, _)| *d == dir)
            .map(|(_, b)| Frame::decode(&b).expect("recorded frames are well formed"))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.lock().expect("transcript lock").is_empty()
    }

    /// `>` for sent and `<` for received frames, one per line, hex encoded.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (d, bytes) in self.entries() {
            out.push(if d == Direction::Sent { '>' } else { '<' });
            out.push(' ');
            for b in bytes {
                out.push_str(&format!("{b:02x}"));
            }
            out.push('\n');
        }
        out
    }

    pub(crate) fn append(&self, other: &Transcript) {
        let more = other.entries();
        self.entries.lock().expect("transcript lock").extend(more);
    }

    fn push(&self, d: Direction, bytes: Vec<u8>) {
        self.entries.lock().expect("transcript lock").push((d, bytes));
    }
}

/// Records every frame passing through the wrapped transport.
pub struct Recording<T> {
    inner: T,
    transcript: Transcript,
}

impl<T: Transport> Recording<T> {
    pub fn new(inner: T, transcript: Transcript) -> Self {
        Recording { inner, transcript }
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        self.inner.send(frame)?;
        self.transcript.push(Direction::Sent, frame.encode());
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        let f = self.inner.recv()?;
        self.transcript.push(Direction::Received, f.encode());
        Ok(f)
    }
}
