//! TCP front end for a [`Datasite`].
//!
//! The protocol port speaks framed [`Message`]s, one request at a time per
//! connection. Each reply echoes the request's correlation id. A parked
//! request first gets APPROVAL_PENDING, then its final reply under the same
//! id once the data owner decides.
//!
//! The admin port speaks one-line text commands, intended for loopback:
//!
//! ```text
//! APPROVE <id>   -> OK | ERR <reason>
//! REJECT <id>    -> OK | ERR <reason>
//! PENDING        -> JSON array of pending requests
//! ```

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::RecvTimeoutError;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::json;

use super::{Datasite, Reply};
use crate::wire::frame::{frame_read, frame_write, FrameError};
use crate::wire::message::{ErrorCode, Message};

/// Called with every decoded request before it is handled.
pub type RequestHook = Arc<dyn Fn(&Message) + Send + Sync>;

#[derive(Default)]
struct Shared {
    stop: AtomicBool,
    streams: Mutex<Vec<TcpStream>>,
}

impl Shared {
    fn track(&self, s: &TcpStream) {
        if let Ok(c) = s.try_clone() {
            self.streams.lock().unwrap().push(c);
        }
    }
}

/// A running server. Dropping it without [`ServerHandle::shutdown`] leaves
/// the threads running.
pub struct ServerHandle {
    addr: SocketAddr,
    admin_addr: Option<SocketAddr>,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn admin_addr(&self) -> Option<SocketAddr> {
        self.admin_addr
    }

    /// Stops accepting, closes live connections and joins the listeners.
    pub fn shutdown(mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        for s in self.shared.streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        // Wake the blocking accept calls.
        let _ = TcpStream::connect(self.addr);
        if let Some(a) = self.admin_addr {
            let _ = TcpStream::connect(a);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the listeners exit.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

pub fn serve(
    site: Arc<Datasite>,
    listen: impl ToSocketAddrs,
    admin: Option<SocketAddr>,
    hook: Option<RequestHook>,
) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared::default());
    let mut threads = Vec::new();

    let admin_addr = match admin {
        Some(a) => {
            let admin_listener = TcpListener::bind(a)?;
            let admin_addr = admin_listener.local_addr()?;
            let (site, shared) = (site.clone(), shared.clone());
            threads.push(thread::spawn(move || {
                admin_loop(admin_listener, site, shared)
            }));
            Some(admin_addr)
        }
        None => None,
    };

    {
        let shared = shared.clone();
        threads.push(thread::spawn(move || {
            for stream in listener.incoming() {
                if shared.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                shared.track(&stream);
                let (site, shared, hook) = (site.clone(), shared.clone(), hook.clone());
                thread::spawn(move || connection(stream, site, shared, hook));
            }
        }));
    }

    Ok(ServerHandle {
        addr,
        admin_addr,
        shared,
        threads,
    })
}

fn send(stream: &mut TcpStream, site: &Datasite, id: u64, m: &Message) -> bool {
    let ok = frame_write(stream, &m.to_envelope(id)).is_ok();
    if !ok {
        site.log()
            .emit("send_failed", json!({ "kind": m.kind().name() }));
    }
    ok
}

fn connection(
    mut stream: TcpStream,
    site: Arc<Datasite>,
    shared: Arc<Shared>,
    hook: Option<RequestHook>,
) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_default();
    site.log().emit("connected", json!({ "peer": peer }));
    loop {
        let envelope = match frame_read(&mut stream) {
            Ok(e) => e,
            Err(FrameError::ConnectionClosed) => break,
            Err(e @ (FrameError::FrameTooLarge(_) | FrameError::MalformedHeader(_))) => {
                // The stream position is unknown after a bad header.
                let m = Message::error(ErrorCode::BadRequest, e.to_string());
                send(&mut stream, &site, 0, &m);
                break;
            }
            Err(FrameError::Io(_)) => break,
        };
        let id = envelope.correlation_id;
        let request = match Message::from_envelope(&envelope) {
            Ok(m) => m,
            Err(e) => {
                let m = Message::error(ErrorCode::BadRequest, e.to_string());
                if !send(&mut stream, &site, id, &m) {
                    break;
                }
                continue;
            }
        };
        if let Some(h) = &hook {
            h(&request);
        }
        let sent = match site.handle(request) {
            Reply::Now(m) => send(&mut stream, &site, id, &m),
            Reply::Parked {
                request_id,
                summary,
                decision,
                request,
            } => {
                let pending = Message::ApprovalPending {
                    request_id,
                    summary,
                };
                if !send(&mut stream, &site, id, &pending) {
                    break;
                }
                let decision = loop {
                    match decision.recv_timeout(Duration::from_millis(200)) {
                        Ok(d) => break Some(d),
                        Err(RecvTimeoutError::Timeout) if !shared.stop.load(Ordering::SeqCst) => {}
                        Err(_) => break None,
                    }
                };
                let Some(decision) = decision else { break };
                let m = site.resolve_parked(request_id, decision, request);
                send(&mut stream, &site, id, &m)
            }
        };
        if !sent {
            break;
        }
    }
    site.log().emit("disconnected", json!({ "peer": peer }));
}

fn admin_loop(listener: TcpListener, site: Arc<Datasite>, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        shared.track(&stream);
        let site = site.clone();
        thread::spawn(move || {
            let Ok(mut out) = stream.try_clone() else {
                return;
            };
            for line in BufReader::new(stream).lines() {
                let Ok(line) = line else { break };
                let reply = admin_command(&site, &line);
                if writeln!(out, "{reply}").is_err() {
                    break;
                }
            }
        });
    }
}

/// Executes one admin line and returns the one-line answer.
pub fn admin_command(site: &Datasite, line: &str) -> String {
    let mut parts = line.split_whitespace();
    let verb = parts.next().unwrap_or("").to_ascii_uppercase();
    let id = parts.next().map(str::parse::<u64>);
    let result = match (verb.as_str(), id) {
        ("PENDING", None) => {
            return serde_json::to_string(&site.queue().pending())
                .unwrap_or_else(|e| format!("ERR {e}"))
        }
        ("APPROVE", Some(Ok(id))) => site.approve(id),
        ("REJECT", Some(Ok(id))) => site.reject(id),
        _ => return format!("ERR unrecognized command {line:?}"),
    };
    match result {
        Ok(()) => "OK".into(),
        Err(e) => format!("ERR {e}"),
    }
}

/// Sends one admin line to a running datasite and returns its answer.
pub fn admin_request(addr: impl ToSocketAddrs, line: &str) -> io::Result<String> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    writeln!(stream, "{line}")?;
    let mut answer = String::new();
    BufReader::new(stream).read_line(&mut answer)?;
    Ok(answer.trim_end().to_owned())
}
