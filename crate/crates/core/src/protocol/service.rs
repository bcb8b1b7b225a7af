//! Service: issues MS at sign-up, verifies logins, opens sessions, and
//! optionally keeps its per-user keys split across the shareholders.

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::error::ErrorCode;
use super::message::{Body, IndexedShare, LoginReport, Message, NodeId};
use super::net::{Ctx, Handler, SessionRegistry};
use super::store::RecordStore;
use super::{encode_element, parse_ems_plaintext, random_id, Deployment};
use crate::cipher::{sym_decrypt, sym_encrypt, Ciphertext, SymKey};
use crate::field::random_below;
use crate::hexser;
use crate::pedersen::{deal_committed, verify_share, CommitmentVector, DualShare};
use crate::shamir::{reconstruct_at_zero, SharePoint};

/// How long a verified login waits for the client's MC'.
pub const LOGIN_TTL_MS: u64 = 30_000;

/// Where a user's service key lives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KeyCustody {
    /// The key seed itself.
    Local {
        #[serde(with = "hexser::int")]
        seed: BigUint,
    },
    /// Split across shareholders; only the abscissae and commitments stay here.
    Shared {
        #[serde(with = "hexser::ints")]
        abscissae: Vec<BigUint>,
        commitments: CommitmentVector,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceState {
    AwaitingClaim,
    Issued,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceUserRecord {
    pub username: String,
    pub state: ServiceState,
    pub mc: Ciphertext,
    pub ms: Option<Ciphertext>,
    pub key: Option<KeyCustody>,
    pub stored_ems: Option<Ciphertext>,
    pub token: Option<String>,
}

struct VerifiedLogin {
    session_id: String,
    k: SymKey,
    blinding: BigUint,
    seed: BigUint,
    expires_ms: u64,
}

pub struct Service {
    deployment: Deployment,
    store: RecordStore,
    share_keys: bool,
    rng: Mutex<ChaCha20Rng>,
    verified: Mutex<HashMap<String, VerifiedLogin>>,
    /// Key seeds kept in memory when a backup could not complete.
    volatile_keys: Mutex<HashMap<String, BigUint>>,
    sessions: SessionRegistry,
}

fn user_key(username: &str) -> String {
    format!("user/{username}")
}

/// Shareholder-side identity under which a user's service key is split.
pub fn custody_owner(username: &str) -> String {
    format!("service/{username}")
}

impl Service {
    pub fn new(deployment: Deployment, store: RecordStore, share_keys: bool, seed: Option<u64>) -> Service {
        let rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        Service {
            deployment,
            store,
            share_keys,
            rng: Mutex::new(rng),
            verified: Mutex::default(),
            volatile_keys: Mutex::default(),
            sessions: SessionRegistry::default(),
        }
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn record(&self, username: &str) -> Option<ServiceUserRecord> {
        self.store.get(&user_key(username)).ok().flatten()
    }

    fn put(&self, rec: &ServiceUserRecord) -> Result<(), String> {
        self.store.put(&user_key(&rec.username), rec).map_err(|e| e.to_string())
    }

    fn fresh_seed(&self) -> Result<BigUint, String> {
        let mut rng = self.rng.lock().unwrap();
        random_below(&self.deployment.params.q, &mut *rng).map_err(|e| e.to_string())
    }

    /// Puts a key seed into custody, splitting it if configured to.
    /// A failed split keeps the seed in memory only.
    pub fn keep_key(&self, ctx: &Ctx, msg: &Message, seed: &BigUint) -> KeyCustody {
        if !self.share_keys {
            return KeyCustody::Local { seed: seed.clone() };
        }
        match self.backup_key(ctx, msg, seed) {
            Ok(custody) => {
                self.volatile_keys.lock().unwrap().remove(&msg.username);
                custody
            }
            Err(e) => {
                ctx.record(msg, super::Phase::KeyCustody, "failure", None, format!("key backup failed, kept in memory: {e}"));
                self.volatile_keys.lock().unwrap().insert(msg.username.clone(), seed.clone());
                KeyCustody::Shared { abscissae: Vec::new(), commitments: CommitmentVector(Vec::new()) }
            }
        }
    }

    fn backup_key(&self, ctx: &Ctx, msg: &Message, seed: &BigUint) -> Result<KeyCustody, String> {
        let dealing = {
            let mut rng = self.rng.lock().unwrap();
            deal_committed(seed, self.deployment.t, self.deployment.n, &self.deployment.params, &mut *rng)
                .map_err(|e| e.to_string())?
        };
        let shares = dealing
            .shares
            .iter()
            .enumerate()
            .map(|(i, s)| IndexedShare { index: i as u16, s: s.s.clone(), t_val: s.t_val.clone() })
            .collect();
        let out = msg.reply(Body::BackupKey {
            owner: custody_owner(&msg.username),
            shares,
            commitments: dealing.commitments.clone(),
        });
        match ctx.call(NodeId::Dealer, &out) {
            Ok(Message { body: Body::Ack, .. }) => Ok(KeyCustody::Shared {
                abscissae: dealing.shares.into_iter().map(|s| s.x).collect(),
                commitments: dealing.commitments,
            }),
            Ok(other) => Err(format!("dealer answered {}", other.kind())),
            Err(e) => Err(e.to_string()),
        }
    }

    /// Recovers a key seed from custody.
    pub fn restore_key(&self, ctx: &Ctx, msg: &Message, custody: &KeyCustody) -> Result<BigUint, String> {
        let (abscissae, commitments) = match custody {
            KeyCustody::Local { seed } => return Ok(seed.clone()),
            KeyCustody::Shared { abscissae, .. } if abscissae.is_empty() => {
                return self
                    .volatile_keys
                    .lock()
                    .unwrap()
                    .get(&msg.username)
                    .cloned()
                    .ok_or_else(|| "service key lost".to_string())
            }
            KeyCustody::Shared { abscissae, commitments } => (abscissae, commitments),
        };
        let ask = msg.reply(Body::RestoreKey { owner: custody_owner(&msg.username), commitments: commitments.clone() });
        let shares = match ctx.call(NodeId::Dealer, &ask) {
            Ok(Message { body: Body::KeyShares { shares }, .. }) => shares,
            Ok(other) => return Err(format!("dealer answered {}", other.kind())),
            Err(e) => return Err(e.to_string()),
        };
        let params = &self.deployment.params;
        let mut valid = Vec::new();
        let mut bad = 0usize;
        for sh in shares {
            let Some(x) = abscissae.get(sh.index as usize) else {
                bad += 1;
                continue;
            };
            let dual = DualShare { x: x.clone(), s: sh.s, t_val: sh.t_val };
            if verify_share(&dual, commitments, params) {
                valid.push(SharePoint::new(dual.x, dual.s));
            } else {
                bad += 1;
            }
        }
        if bad > 0 {
            ctx.record(msg, super::Phase::KeyCustody, "failure", None, format!("{bad} key shares failed verification"));
        }
        reconstruct_at_zero(&valid, self.deployment.t, &params.q).map_err(|e| format!("key restore failed: {e}"))
    }

    fn store_mc(&self, ctx: &Ctx, msg: &Message, mc: &Ciphertext) -> Message {
        if let Some(rec) = self.record(&msg.username) {
            if rec.state == ServiceState::Issued {
                return ctx.raise(msg, ErrorCode::Cod150, "user already known to the service");
            }
        }
        let rec = ServiceUserRecord {
            username: msg.username.clone(),
            state: ServiceState::AwaitingClaim,
            mc: mc.clone(),
            ms: None,
            key: None,
            stored_ems: None,
            token: None,
        };
        match self.put(&rec) {
            Ok(()) => msg.reply(Body::Ack),
            Err(e) => ctx.fail(msg, e),
        }
    }

    fn claim_ms(&self, ctx: &Ctx, msg: &Message, mc: &Ciphertext) -> Message {
        let mut rec = match self.record(&msg.username) {
            Some(r) if r.state == ServiceState::AwaitingClaim => r,
            _ => return ctx.raise(msg, ErrorCode::Cod170, "no forwarded MC to match"),
        };
        if &rec.mc != mc {
            let _ = self.store.remove(&user_key(&msg.username));
            return ctx.raise(msg, ErrorCode::Cod400, "MC differs from the dealer's copy");
        }
        let seed = match self.fresh_seed() {
            Ok(s) => s,
            Err(e) => return ctx.fail(msg, e),
        };
        let ms = {
            let mut rng = self.rng.lock().unwrap();
            sym_encrypt(&SymKey::derive_from_scalar(&seed), &mc.0, &mut *rng)
        };
        let ms = match ms {
            Ok(ms) => ms,
            Err(e) => return ctx.fail(msg, e.to_string()),
        };
        rec.key = Some(self.keep_key(ctx, msg, &seed));
        rec.ms = Some(ms.clone());
        rec.state = ServiceState::Issued;
        match self.put(&rec) {
            Ok(()) => msg.reply(Body::MsIssued { ms }),
            Err(e) => ctx.fail(msg, e),
        }
    }

    fn forward_ems(&self, ctx: &Ctx, msg: &Message, ems: &Ciphertext) -> Message {
        let mut rec = match self.record(&msg.username) {
            Some(r) if r.state == ServiceState::Issued => r,
            _ => return ctx.fail(msg, "EMS for unknown user"),
        };
        rec.stored_ems = Some(ems.clone());
        match self.put(&rec) {
            Ok(()) => msg.reply(Body::Ack),
            Err(e) => ctx.fail(msg, e),
        }
    }

    fn present_ems(&self, ctx: &Ctx, msg: &Message, ems: &Ciphertext) -> Message {
        let Some(mut rec) = self.record(&msg.username).filter(|r| r.state == ServiceState::Issued) else {
            return ctx.raise(msg, ErrorCode::Cod900, "no login pending for user");
        };
        let stored = rec.stored_ems.take();
        if stored.is_some() {
            let _ = self.put(&rec);
        }
        if stored.as_ref() != Some(ems) {
            return ctx.raise(msg, ErrorCode::Cod900, "presented EMS differs from the forwarded one");
        }
        let (Some(ms), Some(custody)) = (rec.ms.clone(), rec.key.clone()) else {
            return ctx.raise(msg, ErrorCode::Cod900, "user has no MS");
        };
        let ms_key = SymKey::derive_from_ciphertext(&ms);
        let Some((k, blinding)) = sym_decrypt(&ms_key, ems).ok().and_then(|p| parse_ems_plaintext(&p)) else {
            return ctx.raise(msg, ErrorCode::Cod900, "EMS does not open under MS");
        };
        if sym_decrypt(&k, &rec.mc).ok() != Some(encode_element(&blinding)) {
            return ctx.raise(msg, ErrorCode::Cod900, "D_k(MC) differs from the blinding in EMS");
        }
        let seed = match self.restore_key(ctx, msg, &custody) {
            Ok(s) => s,
            Err(e) => return ctx.fail(msg, e),
        };
        let envelope = {
            let mut rng = self.rng.lock().unwrap();
            sym_encrypt(&ms_key, SymKey::derive_from_scalar(&seed).as_bytes(), &mut *rng)
        };
        let envelope = match envelope {
            Ok(e) => e,
            Err(e) => return ctx.fail(msg, e.to_string()),
        };
        self.verified.lock().unwrap().insert(
            msg.username.clone(),
            VerifiedLogin {
                session_id: msg.session_id.clone(),
                k,
                blinding,
                seed,
                expires_ms: ctx.clock.now_ms() + LOGIN_TTL_MS,
            },
        );
        msg.reply(Body::KeyEnvelope { envelope })
    }

    fn next_mc(&self, ctx: &Ctx, msg: &Message, mc_prime: &Ciphertext) -> Message {
        let verified = {
            let mut table = self.verified.lock().unwrap();
            match table.remove(&msg.username) {
                Some(v) if v.session_id == msg.session_id && v.expires_ms > ctx.clock.now_ms() => v,
                _ => return ctx.raise(msg, ErrorCode::Cod170, "MC' without a verified login"),
            }
        };
        let Some(mut rec) = self.record(&msg.username) else {
            return ctx.fail(msg, "user vanished");
        };
        let Some(ms) = rec.ms.clone() else {
            return ctx.fail(msg, "user has no MS");
        };
        let next_seed = match self.fresh_seed() {
            Ok(s) => s,
            Err(e) => return ctx.fail(msg, e),
        };
        let ms_prime = {
            let mut rng = self.rng.lock().unwrap();
            sym_encrypt(&SymKey::derive_from_scalar(&next_seed), &mc_prime.0, &mut *rng)
        };
        let ms_prime = match ms_prime {
            Ok(c) => c,
            Err(e) => return ctx.fail(msg, e.to_string()),
        };
        let report = msg.reply(Body::Report(LoginReport {
            k: verified.k,
            k_prime: SymKey::derive_from_scalar(&verified.seed),
            ms,
            blinding: verified.blinding,
            mc_prime: mc_prime.clone(),
        }));
        match ctx.call(NodeId::Dealer, &report) {
            Ok(Message { body: Body::Ack, .. }) => {}
            Ok(other) => return msg.reply(other.body),
            Err(e) => return ctx.fail(msg, format!("dealer unreachable: {e}")),
        }
        let token = {
            let mut rng = self.rng.lock().unwrap();
            random_id(&mut *rng)
        };
        rec.key = Some(self.keep_key(ctx, msg, &next_seed));
        rec.mc = mc_prime.clone();
        rec.ms = Some(ms_prime.clone());
        rec.token = Some(token.clone());
        match self.put(&rec) {
            Ok(()) => msg.reply(Body::SessionOpened { ms_prime, token }),
            Err(e) => ctx.fail(msg, e),
        }
    }
}

impl Handler for Service {
    fn handle(&self, ctx: &Ctx, msg: &Message) -> Option<Message> {
        let Some(_guard) = self.sessions.try_enter(&msg.username) else {
            return Some(msg.reply(Body::Busy));
        };
        Some(match &msg.body {
            Body::StoreMc { mc } => self.store_mc(ctx, msg, mc),
            Body::ClaimMs { mc } => self.claim_ms(ctx, msg, mc),
            Body::ForwardEms { ems } => self.forward_ems(ctx, msg, ems),
            Body::PresentEms { ems } => self.present_ems(ctx, msg, ems),
            Body::NextMc { mc_prime } => self.next_mc(ctx, msg, mc_prime),
            other => ctx.fail(msg, format!("service does not accept {}", other.kind())),
        })
    }
}
