//! Client-server protocol for federated rounds.
//!
//! Framing: 4-byte big-endian payload length, 1-byte message-type tag, the
//! payload as canonical JSON (sorted field names), and a 32-byte keyed
//! integrity tag (HMAC-SHA256 over type byte plus payload; all-zero for
//! pre-session messages). Authentication is a pre-shared-token
//! challenge-response in both directions; the session key is derived from
//! the client token and never travels on the wire.
//!
//! The stream itself carries no encryption: deployments run it inside an
//! external TLS tunnel, which supplies the confidentiality layer this
//! protocol deliberately leaves out.

pub mod audit;
pub mod auth;
pub mod message;
pub mod session;
pub mod wire;

pub use audit::{AuditEvent, AuditKind, AuditLog};
pub use auth::{AuthToken, TokenRegistry};
pub use message::{
    ClientHello, HandshakeProof, Message, Nonce, Proof, RejectReason, RoundConfig, SessionGrant,
    SessionId, SessionKey, UpdateSubmit,
};
pub use session::{authorize, Decision, Session, SessionManager};
pub use wire::Codec;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("truncated frame")]
    TruncatedFrame,

    #[error("frame payload of {0} bytes exceeds the limit")]
    Oversized(usize),

    #[error("unknown message type tag {0}")]
    UnknownTypeTag(u8),

    #[error("integrity tag verification failed")]
    TagMismatch,

    #[error("message requires a session key")]
    MissingKey,

    #[error("malformed payload: {0}")]
    Payload(String),

    #[error("handshake rejected: {0:?}")]
    Rejected(RejectReason),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;
