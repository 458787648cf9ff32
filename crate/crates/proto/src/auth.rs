//! Pre-shared tokens, challenge-response proofs, and session-key derivation.
//!
//! Each client holds a secret token registered with the server; the server
//! holds its own token known to all clients. A handshake binds a fresh
//! server nonce to the client identity in both directions:
//!
//! 1. server -> client: `ServerChallenge { nonce }`
//! 2. client -> server: `ClientHello` carrying
//!    `HMAC(client_token, nonce || client_id || schema_version)`
//! 3. server -> client: `SessionGrant` carrying
//!    `HMAC(server_token, nonce || session_id || client_id)`
//!
//! Both sides then derive the session key
//! `HMAC(client_token, "session-key" || nonce || session_id)` locally, so it
//! never appears on the wire.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use hmac::{Hmac, KeyInit, Mac};
use rand::RngCore;
use sha2::Sha256;

use fedscore_core::aggregator::ClientId;

use crate::message::{
    ClientHello, HandshakeProof, Nonce, Proof, ServerChallenge, SessionGrant, SessionId,
    SessionKey,
};
use crate::{ProtocolError, Result};

type HmacSha256 = Hmac<Sha256>;

/// Reserved registry id for the server's own token.
pub const SERVER_TOKEN_ID: &str = "server";

/// A pre-shared secret.
#[derive(Clone, PartialEq, Eq)]
pub struct AuthToken(String);

impl AuthToken {
    pub fn new(secret: impl Into<String>) -> Self {
        Self(secret.into())
    }

    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self(hex::encode(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Debug for AuthToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AuthToken(***)")
    }
}

/// Server-side token table plus the server's own token.
#[derive(Clone, Debug)]
pub struct TokenRegistry {
    server: AuthToken,
    clients: BTreeMap<ClientId, AuthToken>,
}

impl TokenRegistry {
    pub fn new(server: AuthToken) -> Self {
        Self {
            server,
            clients: BTreeMap::new(),
        }
    }

    pub fn server_token(&self) -> &AuthToken {
        &self.server
    }

    pub fn register(&mut self, id: ClientId, token: AuthToken) -> Result<()> {
        if id.as_str() == SERVER_TOKEN_ID {
            return Err(ProtocolError::Payload(format!(
                "client id `{SERVER_TOKEN_ID}` is reserved"
            )));
        }
        self.clients.insert(id, token);
        Ok(())
    }

    pub fn client_token(&self, id: &ClientId) -> Option<&AuthToken> {
        self.clients.get(id)
    }

    pub fn client_ids(&self) -> impl Iterator<Item = &ClientId> {
        self.clients.keys()
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    /// Parse a registry file: one `<id> <token>` pair per line, `#` comments;
    /// the line with id `server` carries the server token and must exist.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut server = None;
        let mut clients = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (id, token) = match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(token), None) => (id, token),
                _ => {
                    return Err(ProtocolError::Payload(format!(
                        "registry line {} must be `<client_id> <token>`",
                        i + 1
                    )))
                }
            };
            if id == SERVER_TOKEN_ID {
                server = Some(AuthToken::new(token));
            } else {
                clients.insert(ClientId::new(id), AuthToken::new(token));
            }
        }
        let server = server.ok_or_else(|| {
            ProtocolError::Payload(format!(
                "registry is missing the `{SERVER_TOKEN_ID}` token line"
            ))
        })?;
        Ok(Self { server, clients })
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{} {}", SERVER_TOKEN_ID, self.server.expose())?;
        for (id, token) in &self.clients {
            writeln!(out, "{} {}", id, token.expose())?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mac_parts(key: &AuthToken, domain: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac =
        <HmacSha256 as KeyInit>::new_from_slice(key.as_bytes()).expect("any key length works");
    mac.update(domain);
    for part in parts {
        mac.update(&(part.len() as u32).to_be_bytes());
        mac.update(part);
    }
    mac.finalize().into_bytes().into()
}

/// Client's proof of token possession over the challenge transcript.
pub fn client_proof(
    token: &AuthToken,
    nonce: &Nonce,
    client_id: &ClientId,
    schema_version: &str,
) -> Proof {
    Proof(mac_parts(
        token,
        b"fedscore/client-proof/v1",
        &[
            nonce.as_bytes(),
            client_id.as_str().as_bytes(),
            schema_version.as_bytes(),
        ],
    ))
}

/// Server's proof of its own token over the freshly minted session.
pub fn server_proof(
    server_token: &AuthToken,
    nonce: &Nonce,
    session_id: &SessionId,
    client_id: &ClientId,
) -> Proof {
    Proof(mac_parts(
        server_token,
        b"fedscore/server-proof/v1",
        &[
            nonce.as_bytes(),
            session_id.as_bytes(),
            client_id.as_str().as_bytes(),
        ],
    ))
}

/// Session key derived by both ends from the client token and transcript.
pub fn derive_session_key(
    client_token: &AuthToken,
    nonce: &Nonce,
    session_id: &SessionId,
) -> SessionKey {
    SessionKey(mac_parts(
        client_token,
        b"fedscore/session-key/v1",
        &[nonce.as_bytes(), session_id.as_bytes()],
    ))
}

fn proofs_equal(a: &Proof, b: &Proof) -> bool {
    // Constant-time comparison via HMAC verify semantics.
    let key = SessionKey([0u8; 32]);
    let mut ma = <HmacSha256 as KeyInit>::new_from_slice(&key.0).unwrap();
    ma.update(&a.0);
    let mut mb = <HmacSha256 as KeyInit>::new_from_slice(&key.0).unwrap();
    mb.update(&b.0);
    ma.verify(&mb.finalize().into_bytes()).is_ok()
}

/// Client-side step 2: answer a challenge.
pub fn answer_challenge(
    client_id: &ClientId,
    token: &AuthToken,
    schema_version: &str,
    challenge: &ServerChallenge,
) -> ClientHello {
    ClientHello {
        client_id: client_id.clone(),
        auth_token_proof: HandshakeProof {
            nonce: challenge.nonce,
            hmac: client_proof(token, &challenge.nonce, client_id, schema_version),
        },
        schema_version: schema_version.to_owned(),
    }
}

/// Client-side step 3: check the server's proof and derive the session key.
pub fn verify_grant(
    server_token: &AuthToken,
    client_token: &AuthToken,
    client_id: &ClientId,
    challenge_nonce: &Nonce,
    grant: &SessionGrant,
) -> Result<SessionKey> {
    let expected = server_proof(server_token, challenge_nonce, &grant.session_id, client_id);
    if !proofs_equal(&expected, &grant.server_proof) {
        return Err(ProtocolError::Rejected(
            crate::message::RejectReason::AuthFailed,
        ));
    }
    Ok(derive_session_key(
        client_token,
        challenge_nonce,
        &grant.session_id,
    ))
}

pub(crate) fn verify_client_proof(
    token: &AuthToken,
    hello: &ClientHello,
    expected_nonce: &Nonce,
) -> bool {
    let expected = client_proof(
        token,
        expected_nonce,
        &hello.client_id,
        &hello.schema_version,
    );
    proofs_equal(&expected, &hello.auth_token_proof.hmac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn registry_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.txt");
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut reg = TokenRegistry::new(AuthToken::random(&mut rng));
        reg.register(ClientId::new("client-00"), AuthToken::random(&mut rng))
            .unwrap();
        reg.register(ClientId::new("client-01"), AuthToken::random(&mut rng))
            .unwrap();
        reg.to_file(&path).unwrap();
        let back = TokenRegistry::from_file(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(
            back.client_token(&ClientId::new("client-00")).unwrap().expose(),
            reg.client_token(&ClientId::new("client-00")).unwrap().expose()
        );
        assert_eq!(back.server_token().expose(), reg.server_token().expose());
    }

    #[test]
    fn server_id_is_reserved() {
        let mut reg = TokenRegistry::new(AuthToken::new("s"));
        assert!(reg.register(ClientId::new("server"), AuthToken::new("x")).is_err());
    }

    #[test]
    fn registry_requires_server_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.txt");
        std::fs::write(&path, "client-00 abc\n").unwrap();
        assert!(TokenRegistry::from_file(&path).is_err());
    }

    #[test]
    fn proofs_are_deterministic_and_sensitive() {
        let token = AuthToken::new("secret");
        let nonce = Nonce([1; 32]);
        let id = ClientId::new("c0");
        let a = client_proof(&token, &nonce, &id, "v1");
        let b = client_proof(&token, &nonce, &id, "v1");
        assert_eq!(a, b);
        assert_ne!(a, client_proof(&token, &nonce, &id, "v2"));
        assert_ne!(a, client_proof(&AuthToken::new("other"), &nonce, &id, "v1"));
        assert_ne!(a, client_proof(&token, &Nonce([2; 32]), &id, "v1"));
    }

    #[test]
    fn derived_keys_match_on_both_ends() {
        let token = AuthToken::new("secret");
        let nonce = Nonce([7; 32]);
        let sid = SessionId([9; 16]);
        assert_eq!(
            derive_session_key(&token, &nonce, &sid).0,
            derive_session_key(&token, &nonce, &sid).0
        );
        assert_ne!(
            derive_session_key(&token, &nonce, &sid).0,
            derive_session_key(&token, &nonce, &SessionId([8; 16])).0
        );
    }

    #[test]
    fn grant_verification_detects_wrong_server_token() {
        let server = AuthToken::new("server-secret");
        let client = AuthToken::new("client-secret");
        let id = ClientId::new("c0");
        let nonce = Nonce([3; 32]);
        let sid = SessionId([4; 16]);
        let grant = SessionGrant {
            session_id: sid,
            expires_at_round: 10,
            server_proof: server_proof(&server, &nonce, &sid, &id),
        };
        assert!(verify_grant(&server, &client, &id, &nonce, &grant).is_ok());
        let impostor = AuthToken::new("not-the-server");
        let forged = SessionGrant {
            server_proof: server_proof(&impostor, &nonce, &sid, &id),
            ..grant
        };
        assert!(verify_grant(&server, &client, &id, &nonce, &forged).is_err());
    }
}
