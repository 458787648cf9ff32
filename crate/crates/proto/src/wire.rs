//! Length-prefixed binary framing with keyed integrity tags.
//!
//! Frame layout:
//!
//! ```text
//! +----------------+-----------+---------------------+------------------+
//! | payload length | type tag  | payload             | integrity tag    |
//! | u32 big-endian | 1 byte    | canonical JSON      | 32 bytes HMAC    |
//! +----------------+-----------+---------------------+------------------+
//! ```
//!
//! The payload is the JSON encoding of the variant body with field names
//! sorted, so integrity tags are reproducible across implementations. The
//! tag is HMAC-SHA256 over the type byte followed by the payload, keyed by
//! the session key; handshake-phase messages carry 32 zero bytes instead.

use std::io::{Read, Write};

use hmac::{Hmac, KeyInit, Mac};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::Sha256;

use crate::message::{
    ClientHello, Message, Reject, RoundConfig, ServerChallenge, SessionExpired, SessionGrant,
    SessionKey, UpdateAck, UpdateSubmit,
};
use crate::{ProtocolError, Result};

/// Upper bound on a single payload; far above any real round config.
pub const MAX_PAYLOAD: usize = 64 << 20;

pub const INTEGRITY_TAG_LEN: usize = 32;

type HmacSha256 = Hmac<Sha256>;

/// Canonical JSON bytes: object keys sorted, floats in shortest round-trip
/// form.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value).map_err(|e| ProtocolError::Payload(e.to_string()))?;
    serde_json::to_vec(&v).map_err(|e| ProtocolError::Payload(e.to_string()))
}

fn compute_tag(key: &SessionKey, type_tag: u8, payload: &[u8]) -> [u8; INTEGRITY_TAG_LEN] {
    let mut mac = <HmacSha256 as KeyInit>::new_from_slice(&key.0).expect("any key length works");
    mac.update(&[type_tag]);
    mac.update(payload);
    mac.finalize().into_bytes().into()
}

/// Frame encoder/decoder bound to an optional session key.
#[derive(Clone, Debug, Default)]
pub struct Codec {
    key: Option<SessionKey>,
}

impl Codec {
    pub fn unkeyed() -> Self {
        Self { key: None }
    }

    pub fn keyed(key: SessionKey) -> Self {
        Self { key: Some(key) }
    }

    pub fn set_key(&mut self, key: SessionKey) {
        self.key = Some(key);
    }

    pub fn clear_key(&mut self) {
        self.key = None;
    }

    pub fn has_key(&self) -> bool {
        self.key.is_some()
    }

    pub fn encode(&self, msg: &Message) -> Result<Vec<u8>> {
        let payload = match msg {
            Message::ClientHello(m) => canonical_json(m)?,
            Message::ServerChallenge(m) => canonical_json(m)?,
            Message::SessionGrant(m) => canonical_json(m)?,
            Message::RoundConfig(m) => canonical_json(m)?,
            Message::UpdateSubmit(m) => canonical_json(m)?,
            Message::UpdateAck(m) => canonical_json(m)?,
            Message::SessionExpired(m) => canonical_json(m)?,
            Message::Reject(m) => canonical_json(m)?,
        };
        if payload.len() > MAX_PAYLOAD {
            return Err(ProtocolError::Oversized(payload.len()));
        }
        let type_tag = msg.type_tag();
        let tag = if msg.is_pre_session() {
            [0u8; INTEGRITY_TAG_LEN]
        } else {
            let key = self.key.as_ref().ok_or(ProtocolError::MissingKey)?;
            compute_tag(key, type_tag, &payload)
        };

        let mut out = Vec::with_capacity(4 + 1 + payload.len() + INTEGRITY_TAG_LEN);
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.push(type_tag);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&tag);
        Ok(out)
    }

    /// Decode exactly one frame from a byte buffer.
    pub fn decode(&self, bytes: &[u8]) -> Result<Message> {
        let (msg, consumed) = self.decode_prefix(bytes)?;
        if consumed != bytes.len() {
            return Err(ProtocolError::Payload(format!(
                "{} trailing bytes after frame",
                bytes.len() - consumed
            )));
        }
        Ok(msg)
    }

    fn decode_prefix(&self, bytes: &[u8]) -> Result<(Message, usize)> {
        if bytes.len() < 5 {
            return Err(ProtocolError::TruncatedFrame);
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(ProtocolError::Oversized(len));
        }
        let total = 5 + len + INTEGRITY_TAG_LEN;
        if bytes.len() < total {
            return Err(ProtocolError::TruncatedFrame);
        }
        let type_tag = bytes[4];
        let payload = &bytes[5..5 + len];
        let tag: [u8; INTEGRITY_TAG_LEN] = bytes[5 + len..total].try_into().unwrap();
        let msg = self.parse_verified(type_tag, payload, &tag)?;
        Ok((msg, total))
    }

    /// Read one frame from a blocking stream.
    pub fn read_message<R: Read>(&self, r: &mut R) -> Result<Message> {
        let mut header = [0u8; 5];
        read_exact_or_truncated(r, &mut header)?;
        let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(ProtocolError::Oversized(len));
        }
        let type_tag = header[4];
        let mut payload = vec![0u8; len];
        read_exact_or_truncated(r, &mut payload)?;
        let mut tag = [0u8; INTEGRITY_TAG_LEN];
        read_exact_or_truncated(r, &mut tag)?;
        self.parse_verified(type_tag, &payload, &tag)
    }

    pub fn write_message<W: Write>(&self, w: &mut W, msg: &Message) -> Result<()> {
        let bytes = self.encode(msg)?;
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(())
    }

    fn parse_verified(
        &self,
        type_tag: u8,
        payload: &[u8],
        tag: &[u8; INTEGRITY_TAG_LEN],
    ) -> Result<Message> {
        if !(1..=8).contains(&type_tag) {
            return Err(ProtocolError::UnknownTypeTag(type_tag));
        }
        let pre_session = matches!(type_tag, 1 | 2 | 3 | 8);
        if pre_session {
            if tag != &[0u8; INTEGRITY_TAG_LEN] {
                return Err(ProtocolError::TagMismatch);
            }
        } else {
            let key = self.key.as_ref().ok_or(ProtocolError::MissingKey)?;
            let mut mac =
                <HmacSha256 as KeyInit>::new_from_slice(&key.0).expect("any key length works");
            mac.update(&[type_tag]);
            mac.update(payload);
            mac.verify_slice(tag)
                .map_err(|_| ProtocolError::TagMismatch)?;
        }

        fn parse<T: DeserializeOwned>(payload: &[u8]) -> Result<T> {
            serde_json::from_slice(payload).map_err(|e| ProtocolError::Payload(e.to_string()))
        }

        Ok(match type_tag {
            1 => Message::ClientHello(parse::<ClientHello>(payload)?),
            2 => Message::ServerChallenge(parse::<ServerChallenge>(payload)?),
            3 => Message::SessionGrant(parse::<SessionGrant>(payload)?),
            4 => Message::RoundConfig(parse::<RoundConfig>(payload)?),
            5 => Message::UpdateSubmit(parse::<UpdateSubmit>(payload)?),
            6 => Message::UpdateAck(parse::<UpdateAck>(payload)?),
            7 => Message::SessionExpired(parse::<SessionExpired>(payload)?),
            8 => Message::Reject(parse::<Reject>(payload)?),
            other => return Err(ProtocolError::UnknownTypeTag(other)),
        })
    }
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ProtocolError::TruncatedFrame
        } else {
            ProtocolError::Io(e)
        }
    })
}
