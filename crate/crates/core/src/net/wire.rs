//! Length-prefixed binary frames exchanged between server and clients.
//!
//! ```text
//! frame   = len:u32le  tag:u8  payload[len]
//! ```
//!
//! All integers are little-endian; reals are IEEE-754 binary64 little-endian,
//! so model weights travel bit-exactly. Weights are flattened layer by layer
//! (weight matrix row-major, then bias).
//!
//! | tag | message        | payload                                                        |
//! |-----|----------------|----------------------------------------------------------------|
//! | 1   | `HELLO`        | version:u8 user_id:u32 sample_count:u64                        |
//! | 2   | `GLOBAL_MODEL` | round:u32 arch weights:f64 x param_count(arch)                 |
//! | 3   | `LOCAL_UPDATE` | round:u32 user_id:u32 sample_count:u64 weights:f64 x *         |
//! | 4   | `SHUTDOWN`     | reason: UTF-8 bytes (may be empty)                             |
//! | 5   | `EVALUATE`     | round:u32 weights:f64 x *                                      |
//! | 6   | `EVAL_REPORT`  | round:u32 user_id:u32 sample_count:u64 error_sum:f64           |
//!
//! `arch` is `input:u32 output:u32 hidden_act:u8 output_act:u8 n_hidden:u16
//! hidden:u32 x n_hidden`, activations coded 0 = ReLU, 1 = linear.
//!
//! No message has a field for fingerprints or labels: clients send only
//! model parameters, sample counts and an aggregate error sum.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::{Activation, MlpArch};

pub const PROTOCOL_VERSION: u8 = 1;
/// Frames above this size are rejected before allocation.
pub const MAX_PAYLOAD: usize = 64 << 20;
pub const HEADER_LEN: usize = 5;

pub const TAG_HELLO: u8 = 1;
pub const TAG_GLOBAL_MODEL: u8 = 2;
pub const TAG_LOCAL_UPDATE: u8 = 3;
pub const TAG_SHUTDOWN: u8 = 4;
pub const TAG_EVALUATE: u8 = 5;
pub const TAG_EVAL_REPORT: u8 = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Hello {
        protocol_version: u8,
        user_id: u32,
        sample_count: u64,
    },
    GlobalModel {
        round: u32,
        arch: MlpArch,
        weights: Vec<f64>,
    },
    LocalUpdate {
        round: u32,
        user_id: u32,
        sample_count: u64,
        weights: Vec<f64>,
    },
    Shutdown {
        reason: String,
    },
    /// Asks a client for the error of `weights` on its own shard.
    Evaluate {
        round: u32,
        weights: Vec<f64>,
    },
    /// Sum of Euclidean errors over the client's shard.
    EvalReport {
        round: u32,
        user_id: u32,
        sample_count: u64,
        error_sum: f64,
    },
}

impl WireMessage {
    pub fn tag(&self) -> u8 {
        match self {
            WireMessage::Hello { .. } => TAG_HELLO,
            WireMessage::GlobalModel { .. } => TAG_GLOBAL_MODEL,
            WireMessage::LocalUpdate { .. } => TAG_LOCAL_UPDATE,
            WireMessage::Shutdown { .. } => TAG_SHUTDOWN,
            WireMessage::Evaluate { .. } => TAG_EVALUATE,
            WireMessage::EvalReport { .. } => TAG_EVAL_REPORT,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "HELLO",
            WireMessage::GlobalModel { .. } => "GLOBAL_MODEL",
            WireMessage::LocalUpdate { .. } => "LOCAL_UPDATE",
            WireMessage::Shutdown { .. } => "SHUTDOWN",
            WireMessage::Evaluate { .. } => "EVALUATE",
            WireMessage::EvalReport { .. } => "EVAL_REPORT",
        }
    }
}

/// Kinds of value a message field can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    U8,
    U16,
    U32,
    U64,
    F64,
    Utf8,
    Arch,
    /// Model parameters; the length is fixed by the architecture in use.
    ModelParameters,
}

/// `(tag, name, fields)` of one message type.
pub type MessageSchema = (u8, &'static str, &'static [(&'static str, FieldKind)]);

/// The complete message grammar.
pub const SCHEMA: &[MessageSchema] = &[
    (
        TAG_HELLO,
        "HELLO",
        &[
            ("protocol_version", FieldKind::U8),
            ("user_id", FieldKind::U32),
            ("sample_count", FieldKind::U64),
        ],
    ),
    (
        TAG_GLOBAL_MODEL,
        "GLOBAL_MODEL",
        &[
            ("round", FieldKind::U32),
            ("arch", FieldKind::Arch),
            ("weights", FieldKind::ModelParameters),
        ],
    ),
    (
        TAG_LOCAL_UPDATE,
        "LOCAL_UPDATE",
        &[
            ("round", FieldKind::U32),
            ("user_id", FieldKind::U32),
            ("sample_count", FieldKind::U64),
            ("weights", FieldKind::ModelParameters),
        ],
    ),
    (TAG_SHUTDOWN, "SHUTDOWN", &[("reason", FieldKind::Utf8)]),
    (
        TAG_EVALUATE,
        "EVALUATE",
        &[("round", FieldKind::U32), ("weights", FieldKind::ModelParameters)],
    ),
    (
        TAG_EVAL_REPORT,
        "EVAL_REPORT",
        &[
            ("round", FieldKind::U32),
            ("user_id", FieldKind::U32),
            ("sample_count", FieldKind::U64),
            ("error_sum", FieldKind::F64),
        ],
    ),
];

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Linear => 1,
    }
}

fn put_weights(out: &mut Vec<u8>, weights: &[f64]) {
    for w in weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
}

/// Serializes one message into a complete frame.
pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut payload = Vec::new();
    match msg {
        WireMessage::Hello {
            protocol_version,
            user_id,
            sample_count,
        } => {
            payload.push(*protocol_version);
            payload.extend_from_slice(&user_id.to_le_bytes());
            payload.extend_from_slice(&sample_count.to_le_bytes());
        }
        WireMessage::GlobalModel { round, arch, weights } => {
            payload.extend_from_slice(&round.to_le_bytes());
            payload.extend_from_slice(&(arch.input_dim as u32).to_le_bytes());
            payload.extend_from_slice(&(arch.output_dim as u32).to_le_bytes());
            payload.push(activation_code(arch.hidden_activation));
            payload.push(activation_code(arch.output_activation));
            payload.extend_from_slice(&(arch.hidden_dims.len() as u16).to_le_bytes());
            for h in &arch.hidden_dims {
                payload.extend_from_slice(&(*h as u32).to_le_bytes());
            }
            put_weights(&mut payload, weights);
        }
        WireMessage::LocalUpdate {
            round,
            user_id,
            sample_count,
            weights,
        } => {
            payload.extend_from_slice(&round.to_le_bytes());
            payload.extend_from_slice(&user_id.to_le_bytes());
            payload.extend_from_slice(&sample_count.to_le_bytes());
            put_weights(&mut payload, weights);
        }
        WireMessage::Shutdown { reason } => payload.extend_from_slice(reason.as_bytes()),
        WireMessage::Evaluate { round, weights } => {
            payload.extend_from_slice(&round.to_le_bytes());
            put_weights(&mut payload, weights);
        }
        WireMessage::EvalReport {
            round,
            user_id,
            sample_count,
            error_sum,
        } => {
            payload.extend_from_slice(&round.to_le_bytes());
            payload.extend_from_slice(&user_id.to_le_bytes());
            payload.extend_from_slice(&sample_count.to_le_bytes());
            payload.extend_from_slice(&error_sum.to_le_bytes());
        }
    }
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.push(msg.tag());
    frame.extend_from_slice(&payload);
    frame
}

fn proto(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

struct Cursor<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(proto(format!("{} payload truncated", self.what)));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn activation(&mut self) -> Result<Activation> {
        match self.u8()? {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Linear),
            other => Err(proto(format!("unknown activation code {other}"))),
        }
    }

    /// Consumes the rest of the payload as f64 values.
    fn weights(&mut self, expected: Option<usize>) -> Result<Vec<f64>> {
        if !self.buf.len().is_multiple_of(8) {
            return Err(proto(format!("{} weight bytes not a multiple of 8", self.what)));
        }
        let count = self.buf.len() / 8;
        if let Some(n) = expected {
            if n != count {
                return Err(proto(format!("{}: expected {n} weights, found {count}", self.what)));
            }
        }
        let out = self
            .buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        self.buf = &[];
        Ok(out)
    }

    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(proto(format!("{} has {} trailing bytes", self.what, self.buf.len())))
        }
    }
}

/// Parses the payload of a frame whose header has already been read.
pub fn decode_payload(tag: u8, payload: &[u8]) -> Result<WireMessage> {
    let msg = match tag {
        TAG_HELLO => {
            let mut c = Cursor { buf: payload, what: "HELLO" };
            let msg = WireMessage::Hello {
                protocol_version: c.u8()?,
                user_id: c.u32()?,
                sample_count: c.u64()?,
            };
            c.finish()?;
            msg
        }
        TAG_GLOBAL_MODEL => {
            let mut c = Cursor { buf: payload, what: "GLOBAL_MODEL" };
            let round = c.u32()?;
            let input_dim = c.u32()? as usize;
            let output_dim = c.u32()? as usize;
            let hidden_activation = c.activation()?;
            let output_activation = c.activation()?;
            let n_hidden = c.u16()? as usize;
            let hidden_dims = (0..n_hidden)
                .map(|_| c.u32().map(|h| h as usize))
                .collect::<Result<Vec<_>>>()?;
            let arch = MlpArch {
                input_dim,
                hidden_dims,
                output_dim,
                hidden_activation,
                output_activation,
            };
            arch.validate().map_err(|e| proto(format!("GLOBAL_MODEL: {e}")))?;
            let expected = arch
                .layer_shapes()
                .iter()
                .try_fold(0usize, |acc, &(i, o)| i.checked_mul(o)?.checked_add(o)?.checked_add(acc))
                .ok_or_else(|| proto("GLOBAL_MODEL: architecture too large"))?;
            let weights = c.weights(Some(expected))?;
            WireMessage::GlobalModel { round, arch, weights }
        }
        TAG_LOCAL_UPDATE => {
            let mut c = Cursor { buf: payload, what: "LOCAL_UPDATE" };
            WireMessage::LocalUpdate {
                round: c.u32()?,
                user_id: c.u32()?,
                sample_count: c.u64()?,
                weights: c.weights(None)?,
            }
        }
        TAG_SHUTDOWN => WireMessage::Shutdown {
            reason: String::from_utf8(payload.to_vec()).map_err(|_| proto("SHUTDOWN reason is not UTF-8"))?,
        },
        TAG_EVALUATE => {
            let mut c = Cursor { buf: payload, what: "EVALUATE" };
            WireMessage::Evaluate {
                round: c.u32()?,
                weights: c.weights(None)?,
            }
        }
        TAG_EVAL_REPORT => {
            let mut c = Cursor { buf: payload, what: "EVAL_REPORT" };
            let msg = WireMessage::EvalReport {
                round: c.u32()?,
                user_id: c.u32()?,
                sample_count: c.u64()?,
                error_sum: c.f64()?,
            };
            c.finish()?;
            msg
        }
        other => return Err(proto(format!("unknown message tag {other}"))),
    };
    Ok(msg)
}

/// Decodes exactly one complete frame.
pub fn decode(bytes: &[u8]) -> Result<WireMessage> {
    if bytes.len() < HEADER_LEN {
        return Err(proto(format!("frame truncated: {} header bytes", bytes.len())));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(proto(format!("payload of {len} bytes exceeds limit")));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != len {
        return Err(proto(format!("frame declares {len} payload bytes, has {}", body.len())));
    }
    decode_payload(bytes[4], body)
}

/// Reads one frame from a stream.
pub fn read_message(reader: &mut impl Read) -> Result<WireMessage> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header)?;
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(proto(format!("payload of {len} bytes exceeds limit")));
    }
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload)?;
    decode_payload(header[4], &payload)
}

pub fn write_message(writer: &mut impl Write, msg: &WireMessage) -> Result<()> {
    writer.write_all(&encode(msg))?;
    writer.flush()?;
    Ok(())
}
