//! Message types exchanged between client and server.

use fedscore_core::aggregator::ClientId;
use fedscore_core::privacy::PrivacyConfig;
use fedscore_core::trainer::TrainingConfig;
use fedscore_core::{ClientUpdate64, ParameterVector64};
use serde::{Deserialize, Serialize};

macro_rules! hex_newtype {
    ($(#[$doc:meta])* $name:ident, $len:expr) => {
        $(#[$doc])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Option<Self> {
                let bytes = hex::decode(s).ok()?;
                let arr: [u8; $len] = bytes.try_into().ok()?;
                Some(Self(arr))
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.to_hex())
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(
                deserializer: D,
            ) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                Self::from_hex(&s).ok_or_else(|| {
                    serde::de::Error::custom(concat!(
                        "expected ",
                        stringify!($len),
                        " hex bytes for ",
                        stringify!($name)
                    ))
                })
            }
        }
    };
}

hex_newtype!(
    /// Server-issued handshake challenge, 256-bit.
    Nonce,
    32
);
hex_newtype!(
    /// Session identifier, 128-bit.
    SessionId,
    16
);
hex_newtype!(
    /// HMAC-SHA256 output used as an authentication proof.
    Proof,
    32
);

/// Per-session integrity key, 256-bit. Derived on both ends from the client
/// token and the handshake transcript; never serialized.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SessionKey(pub [u8; 32]);

impl std::fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

/// The client's answer to a challenge: the echoed nonce plus an HMAC over
/// the handshake transcript under the client's pre-shared token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeProof {
    pub nonce: Nonce,
    pub hmac: Proof,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientHello {
    pub client_id: ClientId,
    pub auth_token_proof: HandshakeProof,
    pub schema_version: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerChallenge {
    pub nonce: Nonce,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionGrant {
    pub session_id: SessionId,
    pub expires_at_round: u64,
    /// Proof of the server token over (nonce, session), making the
    /// authentication mutual.
    pub server_proof: Proof,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub session_id: SessionId,
    pub round: u64,
    pub global_params: ParameterVector64,
    pub training_config: TrainingConfig,
    pub privacy_config: PrivacyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateSubmit {
    pub session_id: SessionId,
    pub update: ClientUpdate64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateAck {
    pub session_id: SessionId,
    pub round: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionExpired {
    pub session_id: SessionId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    AuthFailed,
    UnknownClient,
    Replay,
    SchemaMismatch,
    StaleRound,
    NoSession,
    Expired,
    Malformed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub reason: RejectReason,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    ClientHello(ClientHello),
    ServerChallenge(ServerChallenge),
    SessionGrant(SessionGrant),
    RoundConfig(RoundConfig),
    UpdateSubmit(UpdateSubmit),
    UpdateAck(UpdateAck),
    SessionExpired(SessionExpired),
    Reject(Reject),
}

impl Message {
    pub fn type_tag(&self) -> u8 {
        match self {
            Message::ClientHello(_) => 1,
            Message::ServerChallenge(_) => 2,
            Message::SessionGrant(_) => 3,
            Message::RoundConfig(_) => 4,
            Message::UpdateSubmit(_) => 5,
            Message::UpdateAck(_) => 6,
            Message::SessionExpired(_) => 7,
            Message::Reject(_) => 8,
        }
    }

    /// Handshake-phase messages travel with an all-zero integrity tag;
    /// everything else must be keyed.
    pub fn is_pre_session(&self) -> bool {
        matches!(
            self,
            Message::ClientHello(_)
                | Message::ServerChallenge(_)
                | Message::SessionGrant(_)
                | Message::Reject(_)
        )
    }

    /// The session id a post-handshake message claims to speak for.
    pub fn session_id(&self) -> Option<SessionId> {
        match self {
            Message::RoundConfig(m) => Some(m.session_id),
            Message::UpdateSubmit(m) => Some(m.session_id),
            Message::UpdateAck(m) => Some(m.session_id),
            Message::SessionExpired(m) => Some(m.session_id),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Message::ClientHello(_) => "client_hello",
            Message::ServerChallenge(_) => "server_challenge",
            Message::SessionGrant(_) => "session_grant",
            Message::RoundConfig(_) => "round_config",
            Message::UpdateSubmit(_) => "update_submit",
            Message::UpdateAck(_) => "update_ack",
            Message::SessionExpired(_) => "session_expired",
            Message::Reject(_) => "reject",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_newtypes_round_trip() {
        let n = Nonce([7u8; 32]);
        let s = serde_json::to_string(&n).unwrap();
        assert_eq!(s, format!("\"{}\"", "07".repeat(32)));
        let back: Nonce = serde_json::from_str(&s).unwrap();
        assert_eq!(n, back);
        assert!(Nonce::from_hex("abcd").is_none());
    }

    #[test]
    fn session_key_debug_is_redacted() {
        let key = SessionKey([9u8; 32]);
        assert_eq!(format!("{key:?}"), "SessionKey(..)");
    }

    #[test]
    fn type_tags_are_distinct() {
        let msgs = [
            Message::ServerChallenge(ServerChallenge { nonce: Nonce([0; 32]) }),
            Message::SessionExpired(SessionExpired {
                session_id: SessionId([0; 16]),
            }),
            Message::Reject(Reject {
                reason: RejectReason::Replay,
            }),
        ];
        let tags: Vec<u8> = msgs.iter().map(Message::type_tag).collect();
        assert_eq!(tags, vec![2, 7, 8]);
    }
}
