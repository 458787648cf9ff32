//! Session lifecycle: handshake completion, expiry in rounds, and
//! per-message access control.

use std::collections::{HashMap, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use fedscore_core::aggregator::ClientId;

use crate::audit::{AuditEvent, AuditKind, AuditLog};
use crate::auth::{
    derive_session_key, server_proof, verify_client_proof, AuthToken, TokenRegistry,
};
use crate::message::{
    ClientHello, Message, Nonce, RejectReason, ServerChallenge, SessionGrant, SessionId,
    SessionKey,
};

/// An authenticated client's live session.
#[derive(Clone, Debug)]
pub struct Session {
    pub session_id: SessionId,
    pub client_id: ClientId,
    pub established_round: u64,
    pub expires_at_round: u64,
    key: SessionKey,
}

impl Session {
    pub fn key(&self) -> &SessionKey {
        &self.key
    }

    pub fn is_expired(&self, current_round: u64) -> bool {
        current_round >= self.expires_at_round
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(RejectReason),
}

/// Access control for a message arriving on an established session.
///
/// Denials: expired session (re-handshake required), an `UpdateSubmit` for
/// any round other than the currently open one, or a session-id mismatch.
/// Handshake messages are always allowed through (they are how a client
/// recovers from expiry).
pub fn authorize(
    session: &Session,
    msg: &Message,
    current_round: u64,
    open_round: Option<u64>,
) -> Decision {
    if matches!(msg, Message::ClientHello(_)) {
        return Decision::Allow;
    }
    if session.is_expired(current_round) {
        return Decision::Deny(RejectReason::Expired);
    }
    if let Some(claimed) = msg.session_id() {
        if claimed != session.session_id {
            return Decision::Deny(RejectReason::NoSession);
        }
    }
    if let Message::UpdateSubmit(submit) = msg {
        if Some(submit.update.round) != open_round {
            return Decision::Deny(RejectReason::StaleRound);
        }
        if submit.update.client_id != session.client_id {
            return Decision::Deny(RejectReason::AuthFailed);
        }
    }
    Decision::Allow
}

/// Server-side session table and handshake state.
pub struct SessionManager {
    registry: TokenRegistry,
    schema_version: String,
    ttl_rounds: u64,
    rng: ChaCha12Rng,
    sessions: HashMap<SessionId, Session>,
    by_client: HashMap<ClientId, SessionId>,
    pending_nonces: HashSet<Nonce>,
    used_nonces: HashSet<Nonce>,
}

impl SessionManager {
    pub fn new(registry: TokenRegistry, schema_version: impl Into<String>, ttl_rounds: u64) -> Self {
        use rand::TryRngCore;
        let seed = rand::rngs::OsRng.try_next_u64().unwrap_or(0xfeed_5eed);
        Self::with_seed(registry, schema_version, ttl_rounds, seed)
    }

    /// Deterministic nonce/session-id stream for reproducible tests.
    pub fn with_seed(
        registry: TokenRegistry,
        schema_version: impl Into<String>,
        ttl_rounds: u64,
        seed: u64,
    ) -> Self {
        Self {
            registry,
            schema_version: schema_version.into(),
            ttl_rounds: ttl_rounds.max(1),
            rng: ChaCha12Rng::seed_from_u64(seed),
            sessions: HashMap::new(),
            by_client: HashMap::new(),
            pending_nonces: HashSet::new(),
            used_nonces: HashSet::new(),
        }
    }

    pub fn registry(&self) -> &TokenRegistry {
        &self.registry
    }

    pub fn ttl_rounds(&self) -> u64 {
        self.ttl_rounds
    }

    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }

    /// Step 1: mint a fresh challenge for a new connection.
    pub fn issue_challenge(&mut self) -> ServerChallenge {
        let mut nonce = [0u8; 32];
        self.rng.fill_bytes(&mut nonce);
        let nonce = Nonce(nonce);
        self.pending_nonces.insert(nonce);
        ServerChallenge { nonce }
    }

    /// Step 3: verify a `ClientHello` against the nonce issued on this
    /// connection and mint a session. Any prior session of the same client
    /// is replaced.
    pub fn complete_handshake(
        &mut self,
        hello: &ClientHello,
        issued_nonce: &Nonce,
        current_round: u64,
        audit: &AuditLog,
    ) -> Result<(SessionGrant, Session), RejectReason> {
        audit.append(AuditEvent::new(
            AuditKind::Hello,
            Some(hello.client_id.clone()),
            Some(current_round),
            format!("schema {}", hello.schema_version),
        ));

        let result = self.try_complete(hello, issued_nonce, current_round);
        match &result {
            Ok((_, session)) => {
                audit.append(AuditEvent::new(
                    AuditKind::Grant,
                    Some(hello.client_id.clone()),
                    Some(current_round),
                    format!(
                        "session {} expires at round {}",
                        session.session_id, session.expires_at_round
                    ),
                ));
            }
            Err(reason) => {
                audit.append(AuditEvent::new(
                    AuditKind::Reject,
                    Some(hello.client_id.clone()),
                    Some(current_round),
                    format!("{reason:?}"),
                ));
            }
        }
        result
    }

    fn try_complete(
        &mut self,
        hello: &ClientHello,
        issued_nonce: &Nonce,
        current_round: u64,
    ) -> Result<(SessionGrant, Session), RejectReason> {
        let presented = &hello.auth_token_proof.nonce;
        if presented != issued_nonce || !self.pending_nonces.contains(presented) {
            return Err(RejectReason::Replay);
        }
        let token = self
            .registry
            .client_token(&hello.client_id)
            .cloned()
            .ok_or(RejectReason::UnknownClient)?;
        if hello.schema_version != self.schema_version {
            return Err(RejectReason::SchemaMismatch);
        }
        if !verify_client_proof(&token, hello, issued_nonce) {
            return Err(RejectReason::AuthFailed);
        }

        // Proof verified: the nonce is spent whatever happens next.
        self.pending_nonces.remove(presented);
        self.used_nonces.insert(*presented);

        let mut sid = [0u8; 16];
        self.rng.fill_bytes(&mut sid);
        let session_id = SessionId(sid);
        let key = derive_session_key(&token, presented, &session_id);
        let session = Session {
            session_id,
            client_id: hello.client_id.clone(),
            established_round: current_round,
            expires_at_round: current_round + self.ttl_rounds,
            key,
        };

        if let Some(old) = self.by_client.insert(hello.client_id.clone(), session_id) {
            self.sessions.remove(&old);
        }
        self.sessions.insert(session_id, session.clone());

        let grant = SessionGrant {
            session_id,
            expires_at_round: session.expires_at_round,
            server_proof: server_proof(
                self.registry.server_token(),
                presented,
                &session_id,
                &hello.client_id,
            ),
        };
        Ok((grant, session))
    }

    pub fn session(&self, id: &SessionId) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn session_for_client(&self, id: &ClientId) -> Option<&Session> {
        self.by_client.get(id).and_then(|sid| self.sessions.get(sid))
    }

    pub fn remove_session(&mut self, id: &SessionId) {
        if let Some(session) = self.sessions.remove(id) {
            self.by_client.remove(&session.client_id);
        }
    }

    pub fn live_session_count(&self, current_round: u64) -> usize {
        self.sessions
            .values()
            .filter(|s| !s.is_expired(current_round))
            .count()
    }
}

/// In-memory run of the whole handshake against a manager: what a client and
/// server would exchange over a connection, without the transport.
pub fn handshake(
    mgr: &mut SessionManager,
    client_id: &ClientId,
    client_token: &AuthToken,
    schema_version: &str,
    current_round: u64,
    audit: &AuditLog,
) -> Result<(SessionGrant, Session), RejectReason> {
    let challenge = mgr.issue_challenge();
    let hello = crate::auth::answer_challenge(client_id, client_token, schema_version, &challenge);
    mgr.complete_handshake(&hello, &challenge.nonce, current_round, audit)
}
