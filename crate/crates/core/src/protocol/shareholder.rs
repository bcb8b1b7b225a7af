//! Shareholder: stores one share per user plus commitments, releases it to
//! whoever presents the matching abscissa.

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::error::ErrorCode;
use super::message::{Body, Message};
use super::net::{Ctx, Handler, SessionRegistry};
use super::store::RecordStore;
use crate::group::GroupParams;
use crate::hexser;
use crate::pedersen::{hash_abscissa, verify_share, CommitmentVector, DualShare};

/// Consecutive digest mismatches that make a shareholder suspicious.
pub const SUSPICION_THRESHOLD: u32 = 3;
/// How long a suspicious shareholder stays silent for that user.
pub const COOLING_OFF_MS: u64 = 60_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareRecord {
    #[serde(with = "hexser::int")]
    pub s: BigUint,
    #[serde(with = "hexser::int")]
    pub t_val: BigUint,
    #[serde(with = "hexser::bytes32")]
    pub digest: [u8; 32],
    pub commitments: CommitmentVector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyShareRecord {
    #[serde(with = "hexser::int")]
    pub s: BigUint,
    #[serde(with = "hexser::int")]
    pub t_val: BigUint,
    pub commitments: CommitmentVector,
}

#[derive(Debug, Default, Clone, Copy)]
struct Suspicion {
    misses: u32,
    silent_until: u64,
}

pub struct Shareholder {
    params: GroupParams,
    store: RecordStore,
    staged: Mutex<HashMap<String, (BigUint, BigUint, [u8; 32])>>,
    suspicion: Mutex<HashMap<String, Suspicion>>,
    sessions: SessionRegistry,
}

pub fn user_key(username: &str) -> String {
    format!("user/{username}")
}

pub fn custody_key(owner: &str) -> String {
    format!("key/{owner}")
}

impl Shareholder {
    pub fn new(params: GroupParams, store: RecordStore) -> Shareholder {
        Shareholder {
            params,
            store,
            staged: Mutex::default(),
            suspicion: Mutex::default(),
            sessions: SessionRegistry::default(),
        }
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn record(&self, username: &str) -> Option<ShareRecord> {
        self.store.get(&user_key(username)).ok().flatten()
    }

    /// True while the shareholder refuses to answer for `username`.
    pub fn is_silent(&self, username: &str, now_ms: u64) -> bool {
        self.suspicion.lock().unwrap().get(username).is_some_and(|s| s.silent_until > now_ms)
    }

    fn release(&self, ctx: &Ctx, msg: &Message, x: &BigUint) -> Option<Message> {
        let now = ctx.clock.now_ms();
        if self.is_silent(&msg.username, now) {
            return None;
        }
        let Some(rec) = self.record(&msg.username) else {
            return Some(ctx.fail(msg, "no share held for user"));
        };
        if hash_abscissa(x) != rec.digest {
            let misses = {
                let mut table = self.suspicion.lock().unwrap();
                let s = table.entry(msg.username.clone()).or_default();
                s.misses += 1;
                if s.misses >= SUSPICION_THRESHOLD {
                    s.silent_until = now + COOLING_OFF_MS;
                    s.misses = 0;
                }
                s.misses
            };
            let detail = if misses == 0 {
                "abscissa digest mismatch; cooling off".to_string()
            } else {
                format!("abscissa digest mismatch ({misses} consecutive)")
            };
            return Some(ctx.raise(msg, ErrorCode::Cod700, detail));
        }
        self.suspicion.lock().unwrap().remove(&msg.username);
        let share = DualShare { x: x.clone(), s: rec.s.clone(), t_val: rec.t_val.clone() };
        if !verify_share(&share, &rec.commitments, &self.params) {
            return Some(ctx.raise(msg, ErrorCode::Cod750, "held share inconsistent with commitments"));
        }
        Some(msg.reply(Body::Share { s: rec.s, t_val: rec.t_val }))
    }
}

impl Handler for Shareholder {
    fn handle(&self, ctx: &Ctx, msg: &Message) -> Option<Message> {
        let Some(_guard) = self.sessions.try_enter(&msg.username) else {
            return Some(msg.reply(Body::Busy));
        };
        match &msg.body {
            Body::StoreShare { s, t_val, digest } => {
                self.staged
                    .lock()
                    .unwrap()
                    .insert(msg.username.clone(), (s.clone(), t_val.clone(), *digest));
                Some(msg.reply(Body::Ack))
            }
            Body::Commitments { commitments } => {
                let Some((s, t_val, digest)) = self.staged.lock().unwrap().remove(&msg.username) else {
                    return Some(ctx.fail(msg, "commitments without a staged share"));
                };
                let rec = ShareRecord { s, t_val, digest, commitments: commitments.clone() };
                match self.store.put(&user_key(&msg.username), &rec) {
                    Ok(()) => Some(msg.reply(Body::Ack)),
                    Err(e) => Some(ctx.fail(msg, e.to_string())),
                }
            }
            Body::ReleaseShare { x } => self.release(ctx, msg, x),
            Body::StoreKeyShare { owner, s, t_val, commitments } => {
                let rec = KeyShareRecord { s: s.clone(), t_val: t_val.clone(), commitments: commitments.clone() };
                match self.store.put(&custody_key(owner), &rec) {
                    Ok(()) => Some(msg.reply(Body::Ack)),
                    Err(e) => Some(ctx.fail(msg, e.to_string())),
                }
            }
            Body::ReleaseKeyShare { owner, commitments } => {
                let rec: Option<KeyShareRecord> = self.store.get(&custody_key(owner)).ok().flatten();
                match rec {
                    Some(rec) if &rec.commitments == commitments => {
                        Some(msg.reply(Body::Share { s: rec.s, t_val: rec.t_val }))
                    }
                    _ => None,
                }
            }
            other => Some(ctx.fail(msg, format!("shareholder does not accept {}", other.kind()))),
        }
    }
}
