//! Binary envelope codec and framing.
//!
//! ## Wire format
//!
//! All multi-byte integers are big-endian.
//!
//! | Part    | Layout |
//! |---------|--------|
//! | frame   | `[len:4][payload:len]` |
//! | payload | `[msg_type:1][version:1][transaction_id:4][ran_function_id:2][body_len:3][body:body_len]` |
//!
//! `msg_type` is the zero-based index of [`MsgType`] in declaration order.
//! Service-model bodies are opaque at this layer and reuse [`Writer`] /
//! [`Reader`] for their own field tables.

mod link;

pub use link::{loopback_pair, open_link, Endpoint, Link, LinkError, LinkListener, LinkMode};

use thiserror::Error;

/// The only protocol version this codec speaks.
pub const PROTOCOL_VERSION: u8 = 1;

/// Largest body a single envelope may carry (2^24 - 1 bytes).
pub const MAX_BODY_LEN: usize = 0x00FF_FFFF;

/// Fixed payload header: type, version, transaction id, function id, body length.
pub const PAYLOAD_HEADER_LEN: usize = 1 + 1 + 4 + 2 + 3;

/// Largest payload a frame may declare.
pub const MAX_PAYLOAD_LEN: usize = PAYLOAD_HEADER_LEN + MAX_BODY_LEN;

const FRAME_PREFIX_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MsgType {
    E2SetupRequest,
    E2SetupResponse,
    SubscriptionRequest,
    SubscriptionResponse,
    SubscriptionFailure,
    Indication,
    ControlRequest,
    ControlAck,
    ControlFailure,
}

impl MsgType {
    pub const ALL: [MsgType; 9] = [
        MsgType::E2SetupRequest,
        MsgType::E2SetupResponse,
        MsgType::SubscriptionRequest,
        MsgType::SubscriptionResponse,
        MsgType::SubscriptionFailure,
        MsgType::Indication,
        MsgType::ControlRequest,
        MsgType::ControlAck,
        MsgType::ControlFailure,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::E2SetupRequest => "E2SetupRequest",
            MsgType::E2SetupResponse => "E2SetupResponse",
            MsgType::SubscriptionRequest => "SubscriptionRequest",
            MsgType::SubscriptionResponse => "SubscriptionResponse",
            MsgType::SubscriptionFailure => "SubscriptionFailure",
            MsgType::Indication => "Indication",
            MsgType::ControlRequest => "ControlRequest",
            MsgType::ControlAck => "ControlAck",
            MsgType::ControlFailure => "ControlFailure",
        }
    }
}

impl std::fmt::Display for MsgType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One protocol message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub msg_type: MsgType,
    pub version: u8,
    pub transaction_id: u32,
    pub ran_function_id: u16,
    pub body: Vec<u8>,
}

impl Envelope {
    pub fn new(msg_type: MsgType, transaction_id: u32, ran_function_id: u16, body: Vec<u8>) -> Self {
        Self {
            msg_type,
            version: PROTOCOL_VERSION,
            transaction_id,
            ran_function_id,
            body,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("body of {0} bytes exceeds the 24-bit length field")]
    Oversize(usize),
    #[error("unsupported protocol version {0}")]
    Version(u8),
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum DecodeError {
    #[error("truncated frame")]
    Truncated,
    #[error("unknown message type tag {0}")]
    UnknownType(u8),
    #[error("unsupported protocol version {0}")]
    Version(u8),
    #[error("declared payload of {0} bytes exceeds the maximum frame size")]
    Oversize(usize),
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
}

/// Encodes one envelope as a length-prefixed frame.
pub fn encode_frame(env: &Envelope) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(FRAME_PREFIX_LEN + PAYLOAD_HEADER_LEN + env.body.len());
    encode_frame_into(env, &mut out)?;
    Ok(out)
}

/// Appends one frame to `out`; on error `out` is left unchanged.
pub fn encode_frame_into(env: &Envelope, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    if env.body.len() > MAX_BODY_LEN {
        return Err(EncodeError::Oversize(env.body.len()));
    }
    if env.version != PROTOCOL_VERSION {
        return Err(EncodeError::Version(env.version));
    }
    let payload_len = (PAYLOAD_HEADER_LEN + env.body.len()) as u32;
    let mut w = Writer::new(out);
    w.u32(payload_len);
    w.u8(env.msg_type.tag());
    w.u8(env.version);
    w.u32(env.transaction_id);
    w.u16(env.ran_function_id);
    w.u24(env.body.len() as u32);
    w.bytes(&env.body);
    Ok(())
}

/// Decodes exactly one frame; the input must contain nothing else.
pub fn decode_frame(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let (env, used) = decode_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::Trailing(bytes.len() - used));
    }
    Ok(env)
}

/// Decodes the first frame of `bytes`, returning it with the bytes consumed.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(Envelope, usize), DecodeError> {
    let payload_len = match peek_frame_len(bytes)? {
        Some(len) => len,
        None => return Err(DecodeError::Truncated),
    };
    let end = FRAME_PREFIX_LEN + payload_len;
    if bytes.len() < end {
        return Err(DecodeError::Truncated);
    }
    let env = decode_payload(&bytes[FRAME_PREFIX_LEN..end])?;
    Ok((env, end))
}

/// Decodes a concatenation of frames, in order.
pub fn decode_frames(mut bytes: &[u8]) -> Result<Vec<Envelope>, DecodeError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (env, used) = decode_frame_prefix(bytes)?;
        out.push(env);
        bytes = &bytes[used..];
    }
    Ok(out)
}

/// Reads the declared payload length, if the 4-byte prefix is present.
pub fn peek_frame_len(bytes: &[u8]) -> Result<Option<usize>, DecodeError> {
    if bytes.len() < FRAME_PREFIX_LEN {
        return Ok(None);
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_PAYLOAD_LEN {
        return Err(DecodeError::Oversize(len));
    }
    Ok(Some(len))
}

/// Decodes a frame payload (no length prefix).
pub fn decode_payload(payload: &[u8]) -> Result<Envelope, DecodeError> {
    let mut r = Reader::new(payload);
    let tag = r.u8().map_err(|_| DecodeError::Truncated)?;
    let msg_type = MsgType::from_tag(tag).ok_or(DecodeError::UnknownType(tag))?;
    let version = r.u8().map_err(|_| DecodeError::Truncated)?;
    if version != PROTOCOL_VERSION {
        return Err(DecodeError::Version(version));
    }
    let transaction_id = r.u32().map_err(|_| DecodeError::Truncated)?;
    let ran_function_id = r.u16().map_err(|_| DecodeError::Truncated)?;
    let body_len = r.u24().map_err(|_| DecodeError::Truncated)? as usize;
    let body = r.bytes(body_len).map_err(|_| DecodeError::Truncated)?.to_vec();
    if r.remaining() != 0 {
        return Err(DecodeError::Trailing(r.remaining()));
    }
    Ok(Envelope {
        msg_type,
        version,
        transaction_id,
        ran_function_id,
        body,
    })
}

/// Incremental decoder for a byte stream carrying back-to-back frames.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Pops the next complete frame, or `Ok(None)` if more bytes are needed.
    pub fn next_frame(&mut self) -> Result<Option<Envelope>, DecodeError> {
        let Some(len) = peek_frame_len(&self.buf)? else {
            return Ok(None);
        };
        if self.buf.len() < FRAME_PREFIX_LEN + len {
            return Ok(None);
        }
        let (env, used) = decode_frame_prefix(&self.buf)?;
        self.buf.drain(..used);
        Ok(Some(env))
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Field-level errors shared by the service-model body codecs.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated field")]
    Truncated,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid UTF-8 in string field")]
    Utf8,
    #[error("{0} too long for its length prefix")]
    TooLong(&'static str),
}

/// Big-endian field writer.
pub struct Writer<'a> {
    buf: &'a mut Vec<u8>,
}

impl<'a> Writer<'a> {
    pub fn new(buf: &'a mut Vec<u8>) -> Self {
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    /// Low 24 bits of `v`.
    pub fn u24(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes()[1..]);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// String with a one-byte length prefix.
    pub fn str8(&mut self, s: &str) -> Result<(), WireError> {
        let len = u8::try_from(s.len()).map_err(|_| WireError::TooLong("string"))?;
        self.u8(len);
        self.bytes(s.as_bytes());
        Ok(())
    }

    /// Byte string with a three-byte length prefix.
    pub fn bytes24(&mut self, b: &[u8]) -> Result<(), WireError> {
        if b.len() > MAX_BODY_LEN {
            return Err(WireError::TooLong("byte string"));
        }
        self.u24(b.len() as u32);
        self.bytes(b);
        Ok(())
    }
}

/// Big-endian field reader over a borrowed buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn bytes(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < len {
            return Err(WireError::Truncated);
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let mut arr = [0u8; N];
        arr.copy_from_slice(self.bytes(N)?);
        Ok(arr)
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub fn u24(&mut self) -> Result<u32, WireError> {
        let [a, b, c] = self.array::<3>()?;
        Ok(u32::from_be_bytes([0, a, b, c]))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn str8(&mut self) -> Result<String, WireError> {
        let len = self.u8()? as usize;
        let raw = self.bytes(len)?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|_| WireError::Utf8)
    }

    pub fn bytes24(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.u24()? as usize;
        Ok(self.bytes(len)?.to_vec())
    }

    /// Fails if any input is left unread.
    pub fn finish(self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}
