//! Frame-preserving links over in-process queues or TCP streams.
//!
//! Both modes move encoded frames, so every message crosses the codec even
//! when the peers share an address space.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{LazyLock, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::{decode_frame, encode_frame, DecodeError, EncodeError, Envelope, FrameDecoder};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    /// Named in-process queue.
    Queue(String),
    /// `host:port` of a listening stream socket.
    Tcp(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkMode {
    InProcess,
    Stream,
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("no listener on queue {0:?}")]
    QueueAbsent(String),
    #[error("queue {0:?} already bound")]
    QueueInUse(String),
    #[error("endpoint {0:?} does not match link mode {1:?}")]
    ModeMismatch(Endpoint, LinkMode),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("peer closed the link")]
    Closed,
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

type FramePipe = (Sender<Vec<u8>>, Receiver<Vec<u8>>);

static QUEUES: LazyLock<Mutex<HashMap<String, Sender<FramePipe>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

enum Inner {
    Queue {
        tx: Sender<Vec<u8>>,
        rx: Receiver<Vec<u8>>,
    },
    Stream {
        writer: TcpStream,
        rx: Receiver<Result<Envelope, DecodeError>>,
    },
}

/// A bidirectional, ordered, whole-frame channel to one peer.
pub struct Link {
    inner: Inner,
}

/// Connects to a listening endpoint.
pub fn open_link(endpoint: &Endpoint, mode: LinkMode) -> Result<Link, LinkError> {
    match (endpoint, mode) {
        (Endpoint::Queue(name), LinkMode::InProcess) => {
            let queues = QUEUES.lock().expect("queue registry poisoned");
            let acceptor = queues
                .get(name)
                .ok_or_else(|| LinkError::QueueAbsent(name.clone()))?;
            let (to_peer, peer_rx) = mpsc::channel();
            let (peer_tx, from_peer) = mpsc::channel();
            acceptor
                .send((peer_tx, peer_rx))
                .map_err(|_| LinkError::QueueAbsent(name.clone()))?;
            Ok(Link {
                inner: Inner::Queue {
                    tx: to_peer,
                    rx: from_peer,
                },
            })
        }
        (Endpoint::Tcp(addr), LinkMode::Stream) => Link::from_stream(TcpStream::connect(addr)?),
        (ep, mode) => Err(LinkError::ModeMismatch(ep.clone(), mode)),
    }
}

impl Link {
    /// Creates two connected in-process ends without a named queue.
    pub fn pair() -> (Link, Link) {
        let (a_tx, b_rx) = mpsc::channel();
        let (b_tx, a_rx) = mpsc::channel();
        (
            Link {
                inner: Inner::Queue { tx: a_tx, rx: a_rx },
            },
            Link {
                inner: Inner::Queue { tx: b_tx, rx: b_rx },
            },
        )
    }

    fn from_stream(stream: TcpStream) -> Result<Link, LinkError> {
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut decoder = FrameDecoder::new();
            let mut chunk = vec![0u8; 64 * 1024];
            loop {
                let n = match reader.read(&mut chunk) {
                    Ok(0) | Err(_) => return,
                    Ok(n) => n,
                };
                decoder.push(&chunk[..n]);
                loop {
                    match decoder.next_frame() {
                        Ok(Some(env)) => {
                            if tx.send(Ok(env)).is_err() {
                                return;
                            }
                        }
                        Ok(None) => break,
                        Err(e) => {
                            let _ = tx.send(Err(e));
                            return;
                        }
                    }
                }
            }
        });
        Ok(Link {
            inner: Inner::Stream { writer: stream, rx },
        })
    }

    pub fn mode(&self) -> LinkMode {
        match self.inner {
            Inner::Queue { .. } => LinkMode::InProcess,
            Inner::Stream { .. } => LinkMode::Stream,
        }
    }

    pub fn send(&mut self, env: &Envelope) -> Result<(), LinkError> {
        let frame = encode_frame(env)?;
        self.send_raw(&frame)
    }

    /// Sends pre-encoded frame bytes. In-process queues require exactly one frame.
    pub fn send_raw(&mut self, frame: &[u8]) -> Result<(), LinkError> {
        match &mut self.inner {
            Inner::Queue { tx, .. } => tx.send(frame.to_vec()).map_err(|_| LinkError::Closed),
            Inner::Stream { writer, .. } => Ok(writer.write_all(frame)?),
        }
    }

    /// Blocks until the next frame arrives.
    pub fn recv(&mut self) -> Result<Envelope, LinkError> {
        match &mut self.inner {
            Inner::Queue { rx, .. } => {
                let bytes = rx.recv().map_err(|_| LinkError::Closed)?;
                Ok(decode_frame(&bytes)?)
            }
            Inner::Stream { rx, .. } => Ok(rx.recv().map_err(|_| LinkError::Closed)??),
        }
    }

    pub fn recv_timeout(&mut self, timeout: Duration) -> Result<Envelope, LinkError> {
        let map = |e| match e {
            RecvTimeoutError::Timeout => LinkError::Timeout,
            RecvTimeoutError::Disconnected => LinkError::Closed,
        };
        match &mut self.inner {
            Inner::Queue { rx, .. } => Ok(decode_frame(&rx.recv_timeout(timeout).map_err(map)?)?),
            Inner::Stream { rx, .. } => Ok(rx.recv_timeout(timeout).map_err(map)??),
        }
    }

    /// Returns the next frame if one is already available.
    pub fn try_recv(&mut self) -> Result<Option<Envelope>, LinkError> {
        let map = |e| match e {
            TryRecvError::Empty => None,
            TryRecvError::Disconnected => Some(LinkError::Closed),
        };
        match &mut self.inner {
            Inner::Queue { rx, .. } => match rx.try_recv() {
                Ok(bytes) => Ok(Some(decode_frame(&bytes)?)),
                Err(e) => map(e).map_or(Ok(None), Err),
            },
            Inner::Stream { rx, .. } => match rx.try_recv() {
                Ok(res) => Ok(Some(res?)),
                Err(e) => map(e).map_or(Ok(None), Err),
            },
        }
    }
}

/// Accepts incoming links on a queue name or a TCP address.
pub enum LinkListener {
    Queue {
        name: String,
        incoming: Receiver<FramePipe>,
    },
    Tcp(TcpListener),
}

impl LinkListener {
    /// Binds the endpoint. `Tcp("127.0.0.1:0")` picks a free port.
    pub fn bind(endpoint: &Endpoint) -> Result<LinkListener, LinkError> {
        match endpoint {
            Endpoint::Queue(name) => {
                let mut queues = QUEUES.lock().expect("queue registry poisoned");
                if queues.contains_key(name) {
                    return Err(LinkError::QueueInUse(name.clone()));
                }
                let (tx, rx) = mpsc::channel();
                queues.insert(name.clone(), tx);
                Ok(LinkListener::Queue {
                    name: name.clone(),
                    incoming: rx,
                })
            }
            Endpoint::Tcp(addr) => Ok(LinkListener::Tcp(TcpListener::bind(addr)?)),
        }
    }

    /// The endpoint peers should pass to [`open_link`].
    pub fn endpoint(&self) -> Result<Endpoint, LinkError> {
        match self {
            LinkListener::Queue { name, .. } => Ok(Endpoint::Queue(name.clone())),
            LinkListener::Tcp(l) => {
                let addr: SocketAddr = l.local_addr()?;
                Ok(Endpoint::Tcp(addr.to_string()))
            }
        }
    }

    pub fn accept(&self) -> Result<Link, LinkError> {
        match self {
            LinkListener::Queue { incoming, .. } => {
                let (tx, rx) = incoming.recv().map_err(|_| LinkError::Closed)?;
                Ok(Link {
                    inner: Inner::Queue { tx, rx },
                })
            }
            LinkListener::Tcp(l) => {
                let (stream, _) = l.accept()?;
                Link::from_stream(stream)
            }
        }
    }
}

impl Drop for LinkListener {
    fn drop(&mut self) {
        if let LinkListener::Queue { name, .. } = self {
            if let Ok(mut queues) = QUEUES.lock() {
                queues.remove(name);
            }
        }
    }
}

/// Connects a fresh pair of links in the requested mode over loopback.
pub fn loopback_pair(mode: LinkMode) -> Result<(Link, Link), LinkError> {
    match mode {
        LinkMode::InProcess => Ok(Link::pair()),
        LinkMode::Stream => {
            let listener = LinkListener::bind(&Endpoint::Tcp("127.0.0.1:0".into()))?;
            let client = open_link(&listener.endpoint()?, LinkMode::Stream)?;
            let server = listener.accept()?;
            Ok((client, server))
        }
    }
}
