//! Users, password hashes and bearer-token sessions.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;

pub const DEFAULT_SESSION_TTL: Duration = Duration::hours(24);
const HASH_SCHEME: &str = "sha256";
const HASH_ITERATIONS: u32 = 100_000;
const TOKEN_BYTES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("invalid username or password")]
    BadCredentials,
    #[error("malformed password hash: {0}")]
    MalformedHash(String),
}

/// Derive a salted, iterated SHA-256 hash in the form
/// `sha256$<iterations>$<salt-hex>$<digest-hex>`.
pub fn hash_password(password: &str) -> String {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    hash_with(password, &salt, HASH_ITERATIONS)
}

fn hash_with(password: &str, salt: &[u8], iterations: u32) -> String {
    let digest = derive(password, salt, iterations);
    format!(
        "{HASH_SCHEME}${iterations}${}${}",
        hex::encode(salt),
        hex::encode(digest)
    )
}

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(password.as_bytes());
    let mut out: [u8; 32] = h.finalize().into();
    for _ in 1..iterations.max(1) {
        let mut h = Sha256::new();
        h.update(salt);
        h.update(out);
        out = h.finalize().into();
    }
    out
}

pub fn verify_password(password: &str, encoded: &str) -> Result<bool, AuthError> {
    let bad = || AuthError::MalformedHash(encoded.to_owned());
    let mut parts = encoded.split('$');
    let (Some(scheme), Some(iters), Some(salt), Some(digest), None) = (
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
        parts.next(),
    ) else {
        return Err(bad());
    };
    if scheme != HASH_SCHEME {
        return Err(bad());
    }
    let iterations: u32 = iters.parse().map_err(|_| bad())?;
    let salt = hex::decode(salt).map_err(|_| bad())?;
    let expected = hex::decode(digest).map_err(|_| bad())?;
    let actual = derive(password, &salt, iterations);
    Ok(constant_time_eq(&actual, &expected))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    pub password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub token: String,
    pub user_id: String,
    pub expires_at: DateTime<Utc>,
}

/// Known users plus live sessions.
pub struct Authenticator {
    users: HashMap<String, UserRecord>,
    sessions: RwLock<HashMap<String, Session>>,
    ttl: Duration,
    clock: Arc<dyn Clock>,
}

impl Authenticator {
    pub fn new(users: impl IntoIterator<Item = UserRecord>, clock: Arc<dyn Clock>) -> Self {
        Self {
            users: users.into_iter().map(|u| (u.username.clone(), u)).collect(),
            sessions: RwLock::new(HashMap::new()),
            ttl: DEFAULT_SESSION_TTL,
            clock,
        }
    }

    pub fn with_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn is_known_user(&self, user_id: &str) -> bool {
        self.users.contains_key(user_id)
    }

    pub fn usernames(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn login(&self, username: &str, password: &str) -> Result<Session, AuthError> {
        let user = self.users.get(username).ok_or(AuthError::BadCredentials)?;
        if !verify_password(password, &user.password_hash)? {
            return Err(AuthError::BadCredentials);
        }
        let mut raw = [0u8; TOKEN_BYTES];
        rand::rng().fill_bytes(&mut raw);
        let session = Session {
            token: hex::encode(raw),
            user_id: user.username.clone(),
            expires_at: self.clock.now() + self.ttl,
        };
        let mut sessions = self.sessions.write();
        let now = self.clock.now();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    /// The user a token belongs to, if it exists and has not expired.
    pub fn authenticate(&self, token: &str) -> Option<String> {
        let sessions = self.sessions.read();
        let session = sessions.get(token)?;
        (session.expires_at > self.clock.now()).then(|| session.user_id.clone())
    }

    pub fn logout(&self, token: &str) {
        self.sessions.write().remove(token);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use chrono::TimeZone;

    fn quick_hash(pw: &str) -> String {
        hash_with(pw, b"0123456789abcdef", 10)
    }

    fn auth() -> (Authenticator, FixedClock) {
        let clock = FixedClock::new(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap());
        let users = [UserRecord {
            username: "alice".into(),
            password_hash: quick_hash("wonderland"),
        }];
        (Authenticator::new(users, Arc::new(clock.clone())), clock)
    }

    #[test]
    fn hash_roundtrip() {
        let h = hash_password("s3cret");
        assert!(verify_password("s3cret", &h).unwrap());
        assert!(!verify_password("s3cre", &h).unwrap());
        assert_ne!(h, hash_password("s3cret"), "salt must differ");
    }

    #[test]
    fn malformed_hash() {
        assert!(verify_password("x", "plain").is_err());
        assert!(verify_password("x", "md5$1$00$00").is_err());
    }

    #[test]
    fn login_issues_hex_token() {
        let (auth, _) = auth();
        let s = auth.login("alice", "wonderland").unwrap();
        assert!(s.token.len() >= 32);
        assert!(s.token.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(auth.authenticate(&s.token).as_deref(), Some("alice"));
    }

    #[test]
    fn wrong_password_or_user() {
        let (auth, _) = auth();
        assert_eq!(auth.login("alice", "nope"), Err(AuthError::BadCredentials));
        assert_eq!(auth.login("bob", "wonderland"), Err(AuthError::BadCredentials));
    }

    #[test]
    fn expired_sessions_authenticate_nothing() {
        let (auth, clock) = auth();
        let s = auth.login("alice", "wonderland").unwrap();
        clock.advance(Duration::hours(24));
        assert_eq!(auth.authenticate(&s.token), None);
        assert_eq!(auth.authenticate("deadbeef"), None);
    }
}
