//! Record framing.
//!
//! A frame is a little-endian `u32` payload length, one type byte, the
//! payload, and a CRC32 over the type byte and payload. Strings are
//! length-prefixed UTF-8; integers are little-endian.

use std::collections::{BTreeMap, BTreeSet};

use crate::acg::{Action, ActionId, ActionRef, ConstraintKind, ConstraintRecord};

pub const TYPE_ACTION: u8 = b'A';
pub const TYPE_CONSTRAINT: u8 = b'C';
pub const TYPE_PROPOSAL: u8 = b'P';

/// Bytes of framing around each payload.
pub const FRAME_OVERHEAD: usize = 4 + 1 + 4;

/// Largest payload accepted when decoding. Anything larger is treated as
/// corruption rather than an allocation request.
pub const MAX_PAYLOAD: usize = 64 << 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    Action(Action),
    Constraint(ConstraintRecord),
    /// Reconciler proposal, encoded by the reconciler.
    Proposal(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("truncated field")]
    Truncated,
    #[error("checksum mismatch")]
    Checksum,
    #[error("unknown record type {0:#04x}")]
    UnknownType(u8),
    #[error("invalid tag {0}")]
    BadTag(u8),
    #[error("invalid utf-8")]
    Utf8,
    #[error("payload length {0} out of range")]
    Length(usize),
    #[error("{0} trailing bytes in payload")]
    Trailing(usize),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn id(&mut self, id: &ActionId) -> &mut Self {
        self.str(id.doc.as_str()).str(id.issuer.as_str()).u64(id.timestamp)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<&'a str, CodecError> {
        std::str::from_utf8(self.bytes()?).map_err(|_| CodecError::Utf8)
    }

    pub fn id(&mut self) -> Result<ActionId, CodecError> {
        let doc = self.str()?;
        let issuer = self.str()?;
        Ok(ActionId::new(doc, issuer, self.u64()?))
    }

    /// Count prefix, bounded by the bytes left so a corrupt count cannot
    /// trigger a huge allocation.
    pub fn count(&mut self, min_item: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item.max(1)) > self.buf.len() {
            return Err(CodecError::Truncated);
        }
        Ok(n)
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

fn encode_action(a: &Action) -> Vec<u8> {
    let mut w = Writer::new();
    w.id(&a.id).str(&a.app_tag);
    w.u32(a.keys.len() as u32);
    for k in &a.keys {
        w.u64(*k);
    }
    w.u32(a.attributes.len() as u32);
    for (k, v) in &a.attributes {
        w.str(k).str(v);
    }
    w.bytes(&a.payload);
    w.finish()
}

fn decode_action(payload: &[u8]) -> Result<Action, CodecError> {
    let mut r = Reader::new(payload);
    let id = r.id()?;
    let app_tag = r.str()?.to_owned();
    let mut keys = BTreeSet::new();
    for _ in 0..r.count(8)? {
        keys.insert(r.u64()?);
    }
    let mut attributes = BTreeMap::new();
    for _ in 0..r.count(8)? {
        let k = r.str()?.to_owned();
        let v = r.str()?.to_owned();
        attributes.insert(k, v);
    }
    let payload = r.bytes()?.to_vec();
    r.finish()?;
    Ok(Action {
        id,
        keys,
        app_tag,
        payload,
        attributes,
    })
}

fn encode_ref(w: &mut Writer, r: &ActionRef) {
    match r {
        ActionRef::Local { timestamp } => {
            w.u8(0).u64(*timestamp);
        }
        ActionRef::SameDoc { issuer, timestamp } => {
            w.u8(1).str(issuer.as_str()).u64(*timestamp);
        }
        ActionRef::CrossDoc { doc, issuer, timestamp } => {
            w.u8(2).str(doc.as_str()).str(issuer.as_str()).u64(*timestamp);
        }
    }
}

fn decode_ref(r: &mut Reader<'_>) -> Result<ActionRef, CodecError> {
    Ok(match r.u8()? {
        0 => ActionRef::Local { timestamp: r.u64()? },
        1 => ActionRef::SameDoc {
            issuer: r.str()?.into(),
            timestamp: r.u64()?,
        },
        2 => ActionRef::CrossDoc {
            doc: r.str()?.into(),
            issuer: r.str()?.into(),
            timestamp: r.u64()?,
        },
        t => return Err(CodecError::BadTag(t)),
    })
}

fn encode_constraint(c: &ConstraintRecord) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(c.kind.as_byte());
    encode_ref(&mut w, &c.a);
    encode_ref(&mut w, &c.b);
    w.finish()
}

fn decode_constraint(payload: &[u8]) -> Result<ConstraintRecord, CodecError> {
    let mut r = Reader::new(payload);
    let kind_byte = r.u8()?;
    let kind = ConstraintKind::from_byte(kind_byte).ok_or(CodecError::BadTag(kind_byte))?;
    let a = decode_ref(&mut r)?;
    let b = decode_ref(&mut r)?;
    r.finish()?;
    Ok(ConstraintRecord { kind, a, b })
}

fn checksum(ty: u8, payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&[ty]);
    h.update(payload);
    h.finalize()
}

/// Encodes one record as a complete frame.
pub fn encode(rec: &Record) -> Vec<u8> {
    let (ty, payload) = match rec {
        Record::Action(a) => (TYPE_ACTION, encode_action(a)),
        Record::Constraint(c) => (TYPE_CONSTRAINT, encode_constraint(c)),
        Record::Proposal(p) => (TYPE_PROPOSAL, p.clone()),
    };
    let mut out = Vec::with_capacity(payload.len() + FRAME_OVERHEAD);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.push(ty);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&checksum(ty, &payload).to_le_bytes());
    out
}

/// Outcome of decoding the frame at the start of a buffer.
#[derive(Debug, PartialEq, Eq)]
pub enum Frame {
    /// A record and the number of bytes it occupied.
    Complete(Record, usize),
    /// The buffer ends inside a frame.
    Incomplete,
}

pub fn decode(buf: &[u8]) -> Result<Frame, CodecError> {
    if buf.len() < 5 {
        return Ok(Frame::Incomplete);
    }
    let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(CodecError::Length(len));
    }
    let total = len + FRAME_OVERHEAD;
    if buf.len() < total {
        return Ok(Frame::Incomplete);
    }
    let ty = buf[4];
    let payload = &buf[5..5 + len];
    let crc = u32::from_le_bytes(buf[5 + len..total].try_into().unwrap());
    if crc != checksum(ty, payload) {
        return Err(CodecError::Checksum);
    }
    let rec = match ty {
        TYPE_ACTION => Record::Action(decode_action(payload)?),
        TYPE_CONSTRAINT => Record::Constraint(decode_constraint(payload)?),
        TYPE_PROPOSAL => Record::Proposal(payload.to_vec()),
        t => return Err(CodecError::UnknownType(t)),
    };
    Ok(Frame::Complete(rec, total))
}

/// Offset of a bad frame and what is wrong with it.
pub type DecodeFailure = (usize, CodecError);

/// Decodes every complete frame in `buf`. Returns the records with the
/// offset just past each, and the error that stopped decoding, if any. An
/// incomplete trailing frame is not an error.
pub fn decode_all(buf: &[u8]) -> (Vec<(Record, usize)>, Option<DecodeFailure>) {
    let mut out = Vec::new();
    let mut at = 0;
    loop {
        match decode(&buf[at..]) {
            Ok(Frame::Complete(rec, n)) => {
                at += n;
                out.push((rec, at));
            }
            Ok(Frame::Incomplete) => return (out, None),
            Err(e) => return (out, Some((at, e))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acg::{Constraint, DocId, ParticipantId};

    fn sample_action() -> Action {
        Action::new(ActionId::new("doc", "alice", 7), "srda")
            .with_keys([1, u64::MAX])
            .with_attr("op", "insert")
            .with_payload(vec![0, 1, 2, 255])
    }

    #[test]
    fn action_frame_layout() {
        let frame = encode(&Record::Action(Action::new(ActionId::new("d", "p", 1), "")));
        // doc, issuer, ts, tag, 0 keys, 0 attrs, empty payload
        let payload_len = (4 + 1) + (4 + 1) + 8 + 4 + 4 + 4 + 4;
        assert_eq!(&frame[..4], &(payload_len as u32).to_le_bytes());
        assert_eq!(frame[4], b'A');
        assert_eq!(frame.len(), payload_len + FRAME_OVERHEAD);
        assert_eq!(&frame[5..10], &[1, 0, 0, 0, b'd']);
    }

    #[test]
    fn round_trips() {
        let doc = DocId::from("doc");
        let me = ParticipantId::from("alice");
        let c = Constraint::not_after(ActionId::new("doc", "alice", 1), ActionId::new("other", "bob", 2));
        let recs = [
            Record::Action(sample_action()),
            Record::Constraint(ConstraintRecord::for_log(&c, &doc, &me)),
            Record::Proposal(vec![9, 9]),
        ];
        for r in recs {
            let bytes = encode(&r);
            assert_eq!(decode(&bytes).unwrap(), Frame::Complete(r, bytes.len()));
        }
    }

    #[test]
    fn detects_damage() {
        let bytes = encode(&Record::Action(sample_action()));
        for cut in 0..bytes.len() {
            assert_eq!(decode(&bytes[..cut]).unwrap(), Frame::Incomplete);
        }
        for i in 4..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x40;
            assert!(decode(&bad).is_err(), "flip at {i} undetected");
        }
    }

    #[test]
    fn decode_all_stops_at_torn_tail() {
        let mut buf = encode(&Record::Proposal(vec![1]));
        let first = buf.len();
        buf.extend(encode(&Record::Proposal(vec![2])));
        buf.pop();
        let (recs, err) = decode_all(&buf);
        assert_eq!(recs, vec![(Record::Proposal(vec![1]), first)]);
        assert!(err.is_none());
    }
}
