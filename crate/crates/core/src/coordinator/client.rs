//! How the coordinator reaches a datasite: over TCP or in-process.

use std::collections::HashMap;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::datasite::{Datasite, Reply};
use crate::wire::frame::{frame_read, frame_write, FrameError};
use crate::wire::message::{Message, MessageError};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach silo: {0}")]
    Unreachable(String),
    #[error("deadline of {0:?} exceeded")]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("undecodable reply: {0}")]
    BadReply(#[from] MessageError),
}

impl ClientError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, ClientError::Timeout(_))
    }
}

/// One request/response channel to a silo.
pub trait SiloClient: Send {
    /// Sends `msg` and returns the final reply, waiting through any
    /// APPROVAL_PENDING notices until `deadline` elapses.
    fn request(&mut self, msg: &Message, deadline: Duration) -> Result<Message, ClientError>;
}

/// Opens [`SiloClient`]s by silo id and address.
pub trait Transport: Sync {
    fn connect(
        &self,
        silo_id: &str,
        address: &str,
        deadline: Duration,
    ) -> Result<Box<dyn SiloClient>, ClientError>;
}

/// Framed TCP.
#[derive(Debug, Default, Clone, Copy)]
pub struct TcpTransport;

pub struct TcpClient {
    stream: TcpStream,
    next_id: u64,
}

impl Transport for TcpTransport {
    fn connect(
        &self,
        _silo_id: &str,
        address: &str,
        deadline: Duration,
    ) -> Result<Box<dyn SiloClient>, ClientError> {
        let addrs: Vec<_> = address
            .to_socket_addrs()
            .map_err(|e| ClientError::Unreachable(format!("{address}: {e}")))?
            .collect();
        let mut last = format!("{address}: no addresses");
        for a in addrs {
            match TcpStream::connect_timeout(&a, deadline.min(Duration::from_secs(10))) {
                Ok(stream) => {
                    let _ = stream.set_nodelay(true);
                    return Ok(Box::new(TcpClient { stream, next_id: 1 }));
                }
                Err(e) => last = format!("{a}: {e}"),
            }
        }
        Err(ClientError::Unreachable(last))
    }
}

impl SiloClient for TcpClient {
    fn request(&mut self, msg: &Message, deadline: Duration) -> Result<Message, ClientError> {
        let id = self.next_id;
        self.next_id += 1;
        let start = Instant::now();
        let io = |e: FrameError| ClientError::Transport(e.to_string());
        self.stream
            .set_write_timeout(Some(deadline))
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        frame_write(&mut self.stream, &msg.to_envelope(id)).map_err(io)?;
        loop {
            let left = deadline
                .checked_sub(start.elapsed())
                .filter(|d| !d.is_zero())
                .ok_or(ClientError::Timeout(deadline))?;
            self.stream
                .set_read_timeout(Some(left))
                .map_err(|e| ClientError::Transport(e.to_string()))?;
            let envelope = match frame_read(&mut self.stream) {
                Ok(e) => e,
                Err(FrameError::Io(e))
                    if matches!(
                        e.kind(),
                        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                    ) =>
                {
                    return Err(ClientError::Timeout(deadline))
                }
                Err(e) => return Err(io(e)),
            };
            if envelope.correlation_id != id && envelope.correlation_id != 0 {
                return Err(ClientError::Transport(format!(
                    "reply for request {} while waiting for {id}",
                    envelope.correlation_id
                )));
            }
            match Message::from_envelope(&envelope)? {
                Message::ApprovalPending { .. } => continue,
                reply => return Ok(reply),
            }
        }
    }
}

/// Calls [`Datasite`]s directly, without sockets. Messages still round-trip
/// through the wire encoding so both transports see identical bytes.
#[derive(Debug, Default, Clone)]
pub struct InProcessTransport {
    sites: HashMap<String, Arc<Datasite>>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, silo_id: impl Into<String>, site: Arc<Datasite>) {
        self.sites.insert(silo_id.into(), site);
    }

    pub fn with(mut self, silo_id: impl Into<String>, site: Arc<Datasite>) -> Self {
        self.insert(silo_id, site);
        self
    }
}

struct InProcessClient {
    site: Arc<Datasite>,
}

impl Transport for InProcessTransport {
    fn connect(
        &self,
        silo_id: &str,
        _address: &str,
        _deadline: Duration,
    ) -> Result<Box<dyn SiloClient>, ClientError> {
        let site =
            self.sites.get(silo_id).cloned().ok_or_else(|| {
                ClientError::Unreachable(format!("no in-process silo {silo_id:?}"))
            })?;
        Ok(Box::new(InProcessClient { site }))
    }
}

fn through_wire(m: &Message) -> Result<Message, MessageError> {
    Message::from_envelope(&m.to_envelope(0))
}

impl SiloClient for InProcessClient {
    fn request(&mut self, msg: &Message, deadline: Duration) -> Result<Message, ClientError> {
        let reply = match self.site.handle(through_wire(msg)?) {
            Reply::Now(m) => m,
            Reply::Parked {
                request_id,
                decision,
                request,
                ..
            } => {
                let d = decision
                    .recv_timeout(deadline)
                    .map_err(|_| ClientError::Timeout(deadline))?;
                self.site.resolve_parked(request_id, d, request)
            }
        };
        Ok(through_wire(&reply)?)
    }
}
