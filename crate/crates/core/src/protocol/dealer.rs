//! Dealer: registers users, deals blinded secrets, rebuilds them at login,
//! and rotates shares once the service's report checks out.

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::error::ErrorCode;
use super::message::{Body, IndexedShare, LoginReport, LoginRequest, Message, NodeId};
use super::net::{Ctx, Handler, SessionRegistry};
use super::store::RecordStore;
use super::{encode_element, Deployment};
use crate::cipher::{sym_decrypt, Ciphertext};
use crate::pedersen::{deal_committed_at, hash_abscissa, verify_share, CommitmentVector, Dealing, DualShare};
use crate::shamir::{draw_abscissae, reconstruct_at_zero, SharePoint};

/// How long a staged rotation waits for the service's report.
pub const ROTATION_TTL_MS: u64 = 30_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Registration {
    Registering,
    Active,
}

/// Everything the dealer persists about a user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DealerUserRecord {
    pub username: String,
    pub registration: Registration,
    pub commitments: CommitmentVector,
}

/// Held in memory between a successful rebuild and the service's report.
#[derive(Clone, Debug)]
struct StagedRotation {
    session_id: String,
    abscissae: Vec<BigUint>,
    next_secret: BigUint,
    mc_prime: Ciphertext,
    expires_ms: u64,
}

pub struct Dealer {
    deployment: Deployment,
    store: RecordStore,
    rng: Mutex<ChaCha20Rng>,
    staged: Mutex<HashMap<String, StagedRotation>>,
    sessions: SessionRegistry,
}

fn user_key(username: &str) -> String {
    format!("user/{username}")
}

impl Dealer {
    pub fn new(deployment: Deployment, store: RecordStore, seed: Option<u64>) -> Dealer {
        let rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        Dealer {
            deployment,
            store,
            rng: Mutex::new(rng),
            staged: Mutex::default(),
            sessions: SessionRegistry::default(),
        }
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn record(&self, username: &str) -> Option<DealerUserRecord> {
        self.store.get(&user_key(username)).ok().flatten()
    }

    /// Drops every trace of a user (operator action).
    pub fn forget(&self, username: &str) {
        let _ = self.store.remove(&user_key(username));
        self.staged.lock().unwrap().remove(username);
    }

    pub fn has_staged_rotation(&self, username: &str) -> bool {
        self.staged.lock().unwrap().contains_key(username)
    }

    fn shareholder(&self, i: usize) -> NodeId {
        NodeId::Shareholder(i as u16)
    }

    fn deal(&self, secret: &BigUint, abscissae: &[BigUint]) -> Result<Dealing, String> {
        let mut rng = self.rng.lock().unwrap();
        deal_committed_at(secret, self.deployment.t, abscissae, &self.deployment.params, &mut *rng)
            .map_err(|e| e.to_string())
    }

    fn draw(&self) -> Result<Vec<BigUint>, String> {
        let mut rng = self.rng.lock().unwrap();
        draw_abscissae(self.deployment.n, &self.deployment.params.q, &mut *rng).map_err(|e| e.to_string())
    }

    /// Stages each shareholder's triple, then broadcasts the commitments to
    /// those that took one. Sign-up needs every shareholder; a rotation
    /// needs at least `t`, and peers that missed it keep stale shares.
    fn distribute(&self, ctx: &Ctx, msg: &Message, dealing: &Dealing, need: usize) -> Result<(), String> {
        let mut staged = Vec::new();
        let mut misses = Vec::new();
        for (i, share) in dealing.shares.iter().enumerate() {
            let out = msg.reply(Body::StoreShare {
                s: share.s.clone(),
                t_val: share.t_val.clone(),
                digest: hash_abscissa(&share.x),
            });
            match expect_ack(ctx, self.shareholder(i), &out) {
                Ok(()) => staged.push(i),
                Err(e) => misses.push(e),
            }
        }
        if staged.len() < need {
            return Err(format!("{} of {need} shareholders took a share: {}", staged.len(), misses.join("; ")));
        }
        let out = msg.reply(Body::Commitments { commitments: dealing.commitments.clone() });
        let mut committed = 0;
        for i in staged {
            match expect_ack(ctx, self.shareholder(i), &out) {
                Ok(()) => committed += 1,
                Err(e) => misses.push(e),
            }
        }
        if committed < need {
            return Err(format!("{committed} of {need} shareholders committed: {}", misses.join("; ")));
        }
        Ok(())
    }

    fn signup_mc(&self, ctx: &Ctx, msg: &Message, mc: &Ciphertext) -> Message {
        if let Some(rec) = self.record(&msg.username) {
            if rec.registration == Registration::Active {
                return ctx.raise(msg, ErrorCode::Cod100, "username already registered");
            }
        }
        let forward = msg.reply(Body::StoreMc { mc: mc.clone() });
        match ctx.call(NodeId::Service, &forward) {
            Ok(Message { body: Body::Ack, .. }) => {}
            Ok(other) => return msg.reply(other.body),
            Err(e) => return ctx.fail(msg, e.to_string()),
        }
        let rec = DealerUserRecord {
            username: msg.username.clone(),
            registration: Registration::Registering,
            commitments: CommitmentVector(Vec::new()),
        };
        match self.store.put(&user_key(&msg.username), &rec) {
            Ok(()) => msg.reply(Body::Ack),
            Err(e) => ctx.fail(msg, e.to_string()),
        }
    }

    fn deal_secret(&self, ctx: &Ctx, msg: &Message, s_prime: &crate::pedersen::BlindedSecret) -> Message {
        match self.record(&msg.username).map(|r| r.registration) {
            Some(Registration::Registering) => {}
            Some(Registration::Active) => {
                return ctx.raise(msg, ErrorCode::Cod100, "username already registered")
            }
            None => return ctx.raise(msg, ErrorCode::Cod170, "no registration in progress"),
        }
        let secret = s_prime.as_exponent(&self.deployment.params);
        let dealing = match self.draw().and_then(|xs| self.deal(&secret, &xs)) {
            Ok(d) => d,
            Err(e) => return ctx.fail(msg, e),
        };
        if let Err(e) = self.distribute(ctx, msg, &dealing, self.deployment.n) {
            return ctx.fail(msg, format!("dealing aborted: {e}"));
        }
        let rec = DealerUserRecord {
            username: msg.username.clone(),
            registration: Registration::Active,
            commitments: dealing.commitments.clone(),
        };
        if let Err(e) = self.store.put(&user_key(&msg.username), &rec) {
            return ctx.fail(msg, e.to_string());
        }
        let abscissae = dealing.shares.into_iter().map(|s| s.x).collect();
        msg.reply(Body::Abscissae { abscissae })
    }

    fn login(&self, ctx: &Ctx, msg: &Message, req: &LoginRequest) -> Message {
        let rec = match self.record(&msg.username) {
            Some(r) if r.registration == Registration::Active => r,
            _ => return ctx.raise(msg, ErrorCode::Cod600, "login for unregistered user"),
        };
        let now = ctx.clock.now_ms();
        if let Some(st) = self.staged.lock().unwrap().get(&msg.username) {
            if st.expires_ms > now {
                return msg.reply(Body::Busy);
            }
        }
        let params = &self.deployment.params;
        let t = self.deployment.t;
        let mut received = 0usize;
        let mut valid: Vec<SharePoint<BigUint>> = Vec::new();
        let mut rejected: Vec<String> = Vec::new();
        for (i, x) in req.abscissae.iter().enumerate().take(self.deployment.n) {
            let ask = msg.reply(Body::ReleaseShare { x: x.clone() });
            let Ok(Message { body: Body::Share { s, t_val }, .. }) = ctx.call(self.shareholder(i), &ask) else {
                continue;
            };
            received += 1;
            let share = DualShare { x: x.clone(), s, t_val };
            if verify_share(&share, &rec.commitments, params) {
                valid.push(SharePoint::new(share.x, share.s));
            } else {
                rejected.push(self.shareholder(i).to_string());
            }
        }
        if valid.len() >= t {
            if !rejected.is_empty() {
                ctx.raise(msg, ErrorCode::Cod830, format!("bad shares from {}", rejected.join(",")));
            }
        } else if received >= t {
            return ctx.raise(
                msg,
                ErrorCode::Cod850,
                format!("{} valid of {received} received, need {t}", valid.len()),
            );
        } else {
            return ctx.raise(msg, ErrorCode::Cod800, format!("{received} shares received, need {t}"));
        }
        let rebuilt = match reconstruct_at_zero(&valid, t, &params.q) {
            Ok(v) => v,
            Err(e) => return ctx.fail(msg, e.to_string()),
        };
        if rebuilt != req.s_prime.as_exponent(params) {
            return ctx.raise(msg, ErrorCode::Cod860, "rebuilt secret differs from presented one");
        }
        let fresh = match self.draw() {
            Ok(xs) => xs,
            Err(e) => return ctx.fail(msg, e),
        };
        if let Err(e) = expect_ack(ctx, NodeId::Service, &msg.reply(Body::ForwardEms { ems: req.ems.clone() })) {
            return ctx.fail(msg, format!("service did not take EMS: {e}"));
        }
        self.staged.lock().unwrap().insert(
            msg.username.clone(),
            StagedRotation {
                session_id: msg.session_id.clone(),
                abscissae: fresh.clone(),
                next_secret: req.s_double_prime.as_exponent(params),
                mc_prime: req.mc_prime.clone(),
                expires_ms: now + ROTATION_TTL_MS,
            },
        );
        msg.reply(Body::Abscissae { abscissae: fresh })
    }

    fn report(&self, ctx: &Ctx, msg: &Message, rep: &LoginReport) -> Message {
        let staged = {
            let mut table = self.staged.lock().unwrap();
            match table.get(&msg.username) {
                Some(s) if s.session_id == msg.session_id => table.remove(&msg.username).unwrap(),
                _ => return ctx.fail(msg, "no staged rotation for this session"),
            }
        };
        let Ok(mc) = sym_decrypt(&rep.k_prime, &rep.ms) else {
            return ctx.raise(msg, ErrorCode::Cod2000, "reported k' does not open MS");
        };
        let opened = sym_decrypt(&rep.k, &Ciphertext(mc));
        if opened.ok() != Some(encode_element(&rep.blinding)) {
            return ctx.raise(msg, ErrorCode::Cod2400, "D_k(MC) differs from reported blinding");
        }
        if rep.mc_prime != staged.mc_prime {
            return ctx.raise(msg, ErrorCode::Cod2600, "reported MC' differs from the client's");
        }
        let dealing = match self.deal(&staged.next_secret, &staged.abscissae) {
            Ok(d) => d,
            Err(e) => return ctx.fail(msg, e),
        };
        if let Err(e) = self.distribute(ctx, msg, &dealing, self.deployment.t) {
            return ctx.fail(msg, format!("rotation aborted: {e}"));
        }
        let rec = DealerUserRecord {
            username: msg.username.clone(),
            registration: Registration::Active,
            commitments: dealing.commitments,
        };
        match self.store.put(&user_key(&msg.username), &rec) {
            Ok(()) => msg.reply(Body::Ack),
            Err(e) => ctx.fail(msg, e.to_string()),
        }
    }

    fn backup_key(
        &self,
        ctx: &Ctx,
        msg: &Message,
        owner: &str,
        shares: &[IndexedShare],
        commitments: &CommitmentVector,
    ) -> Message {
        for share in shares {
            let out = msg.reply(Body::StoreKeyShare {
                owner: owner.to_string(),
                s: share.s.clone(),
                t_val: share.t_val.clone(),
                commitments: commitments.clone(),
            });
            if let Err(e) = expect_ack(ctx, NodeId::Shareholder(share.index), &out) {
                return ctx.fail(msg, format!("key backup aborted: {e}"));
            }
        }
        msg.reply(Body::Ack)
    }

    fn restore_key(&self, ctx: &Ctx, msg: &Message, owner: &str, commitments: &CommitmentVector) -> Message {
        let ask = msg.reply(Body::ReleaseKeyShare { owner: owner.to_string(), commitments: commitments.clone() });
        let mut shares = Vec::new();
        for i in 0..self.deployment.n {
            if let Ok(Message { body: Body::Share { s, t_val }, .. }) = ctx.call(self.shareholder(i), &ask) {
                shares.push(IndexedShare { index: i as u16, s, t_val });
            }
        }
        msg.reply(Body::KeyShares { shares })
    }
}

fn expect_ack(ctx: &Ctx, to: NodeId, msg: &Message) -> Result<(), String> {
    match ctx.call(to, msg) {
        Ok(Message { body: Body::Ack, .. }) => Ok(()),
        Ok(other) => Err(format!("{to} answered {}", other.kind())),
        Err(e) => Err(e.to_string()),
    }
}

impl Handler for Dealer {
    fn handle(&self, ctx: &Ctx, msg: &Message) -> Option<Message> {
        let Some(_guard) = self.sessions.try_enter(&msg.username) else {
            return Some(msg.reply(Body::Busy));
        };
        Some(match &msg.body {
            Body::SignupMc { mc } => self.signup_mc(ctx, msg, mc),
            Body::DealSecret { s_prime } => self.deal_secret(ctx, msg, s_prime),
            Body::Login(req) => self.login(ctx, msg, req),
            Body::Report(rep) => self.report(ctx, msg, rep),
            Body::BackupKey { owner, shares, commitments } => {
                self.backup_key(ctx, msg, owner, shares, commitments)
            }
            Body::RestoreKey { owner, commitments } => self.restore_key(ctx, msg, owner, commitments),
            other => ctx.fail(msg, format!("dealer does not accept {}", other.kind())),
        })
    }
}

