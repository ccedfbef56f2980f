//! Wiring the roles together over in-process channels or loopback TCP.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use super::frame::FrameType;
use super::transport::{channel_pair, Recording, TcpTransport, Transcript, Transport};
use super::{
    dealer_serve, AcceptedPrediction, Role, CertFailure, Client, InferenceFailure, ProtocolError, Regulator, Server,
    ServerEvent,
};
use crate::crypto::Certificate;
use crate::fsc::{FscSession, SecureComputeBackend};

/// Frames observed at each role, across all of that role's connections.
#[derive(Debug, Clone, Default)]
pub struct Transcripts {
    pub regulator: Transcript,
    pub server: Transcript,
    pub client: Transcript,
    pub dealer: Transcript,
}

impl Transcripts {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, t) in [
            ("regulator", &self.regulator),
            ("server", &self.server),
            ("client", &self.client),
            ("dealer", &self.dealer),
        ] {
            out.push_str(&format!("# {name}\n"));
            out.push_str(&t.to_text());
        }
        out
    }
}

#[derive(Debug)]
pub struct CertificationRun {
    pub outcome: Result<Certificate, CertFailure>,
    pub server: Result<ServerEvent, ProtocolError>,
    pub session: Result<FscSession, ProtocolError>,
    pub transcripts: Transcripts,
}

#[derive(Debug)]
pub struct InferenceRun {
    pub outcome: Result<AcceptedPrediction, InferenceFailure>,
    pub server: Result<ServerEvent, ProtocolError>,
    pub session: Result<FscSession, ProtocolError>,
    pub transcripts: Transcripts,
}

fn recorded<T: Transport + 'static>(t: T, transcript: &Transcript) -> Box<dyn Transport> {
    Box::new(Recording::new(t, transcript.clone()))
}

/// A connector that hands out a pre-established link once.
fn once<T: Transport + 'static>(
    t: T,
    transcript: &Transcript,
) -> impl FnMut() -> Result<Box<dyn Transport>, ProtocolError> {
    let mut slot = Some(recorded(t, transcript));
    move || slot.take().ok_or(ProtocolError::Disconnected)
}

pub fn tcp_connector(addr: SocketAddr, transcript: Transcript) -> impl FnMut() -> Result<Box<dyn Transport>, ProtocolError> {
    move || Ok(recorded(TcpTransport::connect(addr)?, &transcript))
}

fn accept_until(listener: &TcpListener, stop: &AtomicBool) -> Result<TcpStream, ProtocolError> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if stop.load(Ordering::SeqCst) {
                    return Err(ProtocolError::Disconnected);
                }
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Accept order is arbitrary, so each link records separately and the two
/// are merged afterwards with the server's link first.
fn dealer_over_tcp(
    listener: &TcpListener,
    stop: &AtomicBool,
    backend: Arc<dyn SecureComputeBackend>,
    t: &Transcript,
) -> Result<FscSession, ProtocolError> {
    let parts = [Transcript::new(), Transcript::new()];
    let a = TcpTransport::new(accept_until(listener, stop)?)?;
    let b = TcpTransport::new(accept_until(listener, stop)?)?;
    let result = dealer_serve(backend, [recorded(a, &parts[0]), recorded(b, &parts[1])]);
    let server_first = |p: &Transcript| {
        p.received()
            .first()
            .is_none_or(|f| f.kind != FrameType::Hello || f.payload.first() != Some(&Role::Server.id()))
    };
    let mut parts = parts.to_vec();
    parts.sort_by_key(server_first);
    for p in &parts {
        t.append(p);
    }
    result
}

fn loopback() -> Result<(TcpListener, SocketAddr), ProtocolError> {
    let l = TcpListener::bind("127.0.0.1:0")?;
    let addr = l.local_addr()?;
    Ok((l, addr))
}

pub fn certify_in_process(
    regulator: &Regulator,
    server: &mut Server,
    backend: Arc<dyn SecureComputeBackend>,
) -> CertificationRun {
    let t = Transcripts::default();
    let (r_s, s_r) = channel_pair();
    let (s_d, d_s) = channel_pair();
    let (r_d, d_r) = channel_pair();
    thread::scope(|scope| {
        let td = t.dealer.clone();
        let dealer = scope.spawn(move || dealer_serve(backend, [recorded(d_s, &td), recorded(d_r, &td)]));
        let ts = t.server.clone();
        let srv = scope.spawn(move || {
            let mut conn = Recording::new(s_r, ts.clone());
            let mut to_dealer = once(s_d, &ts);
            server.serve(&mut conn, &mut to_dealer)
        });
        let outcome = {
            let mut to_server = once(r_s, &t.regulator);
            let mut to_dealer = once(r_d, &t.regulator);
            regulator.certify(&mut to_server, &mut to_dealer)
        };
        CertificationRun {
            outcome,
            server: srv.join().expect("server thread"),
            session: dealer.join().expect("dealer thread"),
            transcripts: t.clone(),
        }
    })
}

pub fn infer_in_process(client: &Client, server: &mut Server, backend: Arc<dyn SecureComputeBackend>) -> InferenceRun {
    let t = Transcripts::default();
    let (c_s, s_c) = channel_pair();
    let (s_d, d_s) = channel_pair();
    let (c_d, d_c) = channel_pair();
    thread::scope(|scope| {
        let td = t.dealer.clone();
        let dealer = scope.spawn(move || dealer_serve(backend, [recorded(d_s, &td), recorded(d_c, &td)]));
        let ts = t.server.clone();
        let srv = scope.spawn(move || {
            let mut conn = Recording::new(s_c, ts.clone());
            let mut to_dealer = once(s_d, &ts);
            server.serve(&mut conn, &mut to_dealer)
        });
        let outcome = {
            let mut to_server = once(c_s, &t.client);
            let mut to_dealer = once(c_d, &t.client);
            client.infer(&mut to_server, &mut to_dealer)
        };
        InferenceRun {
            outcome,
            server: srv.join().expect("server thread"),
            session: dealer.join().expect("dealer thread"),
            transcripts: t.clone(),
        }
    })
}

/// Same as [`certify_in_process`] with every link a loopback TCP connection.
pub fn certify_tcp(
    regulator: &Regulator,
    server: &mut Server,
    backend: Arc<dyn SecureComputeBackend>,
) -> Result<CertificationRun, ProtocolError> {
    let t = Transcripts::default();
    let (dl, daddr) = loopback()?;
    let (sl, saddr) = loopback()?;
    let stop = AtomicBool::new(false);
    Ok(thread::scope(|scope| {
        let (td, ts) = (t.dealer.clone(), t.server.clone());
        let stop = &stop;
        let dealer = scope.spawn(move || dealer_over_tcp(&dl, stop, backend, &td));
        let srv = scope.spawn(move || {
            let mut conn = Recording::new(TcpTransport::new(accept_until(&sl, stop)?)?, ts.clone());
            server.serve(&mut conn, &mut tcp_connector(daddr, ts))
        });
        let outcome = regulator.certify(
            &mut tcp_connector(saddr, t.regulator.clone()),
            &mut tcp_connector(daddr, t.regulator.clone()),
        );
        stop.store(true, Ordering::SeqCst);
        CertificationRun {
            outcome,
            server: srv.join().expect("server thread"),
            session: dealer.join().expect("dealer thread"),
            transcripts: t.clone(),
        }
    }))
}

pub fn infer_tcp(
    client: &Client,
    server: &mut Server,
    backend: Arc<dyn SecureComputeBackend>,
) -> Result<InferenceRun, ProtocolError> {
    let t = Transcripts::default();
    let (dl, daddr) = loopback()?;
    let (sl, saddr) = loopback()?;
    let stop = AtomicBool::new(false);
    Ok(thread::scope(|scope| {
        let (td, ts) = (t.dealer.clone(), t.server.clone());
        let stop = &stop;
        let dealer = scope.spawn(move || dealer_over_tcp(&dl, stop, backend, &td));
        let srv = scope.spawn(move || {
            let mut conn = Recording::new(TcpTransport::new(accept_until(&sl, stop)?)?, ts.clone());
            server.serve(&mut conn, &mut tcp_connector(daddr, ts))
        });
        let outcome = client.infer(
            &mut tcp_connector(saddr, t.client.clone()),
            &mut tcp_connector(daddr, t.client.clone()),
        );
        stop.store(true, Ordering::SeqCst);
        InferenceRun {
            outcome,
            server: srv.join().expect("server thread"),
            session: dealer.join().expect("dealer thread"),
            transcripts: t.clone(),
        }
    }))
}

/// Runs `sessions` F_SC sessions on `listener`, one after another.
pub fn serve_dealer_tcp(
    listener: &TcpListener,
    backend: Arc<dyn SecureComputeBackend>,
    sessions: usize,
) -> Result<Vec<FscSession>, ProtocolError> {
    let never = AtomicBool::new(false);
    let t = Transcript::new();
    (0..sessions)
        .map(|_| dealer_over_tcp(listener, &never, backend.clone(), &t))
        .collect()
}

/// Serves `connections` regulator or client connections, one after another.
pub fn serve_server_tcp(
    listener: &TcpListener,
    server: &mut Server,
    dealer: impl ToSocketAddrs,
    connections: usize,
) -> Result<Vec<ServerEvent>, ProtocolError> {
    let daddr = dealer
        .to_socket_addrs()?
        .next()
        .ok_or(ProtocolError::Io("dealer address did not resolve".into()))?;
    let never = AtomicBool::new(false);
    (0..connections)
        .map(|_| {
            let mut conn = TcpTransport::new(accept_until(listener, &never)?)?;
            server.serve(&mut conn, &mut tcp_connector(daddr, Transcript::new()))
        })
        .collect()
}
