//! Client side of sign-up and login. The password enters only through
//! [`password_to_scalar`] and leaves only blinded.

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::error::ErrorCode;
use super::message::{Body, LoginRequest, Message, NodeId};
use super::net::{Ctx, TransportError};
use super::{encode_element, ems_plaintext, password_to_scalar, random_id, EmptyPassword, Phase};
use crate::cipher::{sym_decrypt, sym_encrypt, CipherError, Ciphertext, SymKey};
use crate::field::random_below;
use crate::group::GroupParams;
use crate::hexser;
use crate::pedersen::{blind_secret, commit_scalar, BlindedSecret};

/// What the client keeps between sessions. Never holds the password.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialState {
    pub username: String,
    /// Blinding nonce of S'.
    #[serde(with = "hexser::int")]
    pub r: BigUint,
    /// Nonce inside MC.
    #[serde(with = "hexser::int")]
    pub r_prime: BigUint,
    pub k: SymKey,
    pub mc: Ciphertext,
    pub ms: Ciphertext,
    #[serde(with = "hexser::ints")]
    pub abscissae: Vec<BigUint>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("{} rejected the request: {detail}", code.map(|c| c.to_string()).unwrap_or_else(|| "peer".into()))]
    Rejected { code: Option<ErrorCode>, detail: String },
    #[error("peer busy with another request for this user")]
    Busy,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: String },
    #[error(transparent)]
    EmptyPassword(#[from] EmptyPassword),
    #[error("local failure: {0}")]
    Local(String),
}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Rejected { code, .. } => *code,
            _ => None,
        }
    }
}

impl From<CipherError> for ClientError {
    fn from(e: CipherError) -> Self {
        ClientError::Local(e.to_string())
    }
}

/// Output of the first sign-up step.
#[derive(Clone, Debug)]
pub struct SignupInit {
    pub mc: Ciphertext,
    pub s_prime: BlindedSecret,
    pub r: BigUint,
    pub r_prime: BigUint,
    pub k: SymKey,
}

/// Draws `r`, `r'`, `k` and builds `MC = E_k[g^{S'} h^{r'}]`.
pub fn signup_init<R: RngCore + CryptoRng>(
    password: &str,
    params: &GroupParams,
    rng: &mut R,
) -> Result<SignupInit, ClientError> {
    let secret = password_to_scalar(password, &params.q)?;
    let r = scalar(params, rng)?;
    let r_prime = scalar(params, rng)?;
    let k = SymKey::random(rng)?;
    let s_prime = blind_secret(&secret, &r, params);
    let blinding = commit_scalar(&s_prime.as_exponent(params), &r_prime, params);
    let mc = sym_encrypt(&k, &encode_element(&blinding), rng)?;
    Ok(SignupInit { mc, s_prime, r, r_prime, k })
}

fn scalar<R: RngCore + CryptoRng>(params: &GroupParams, rng: &mut R) -> Result<BigUint, ClientError> {
    random_below(&params.q, rng).map_err(|e| ClientError::Local(e.to_string()))
}

fn exchange(ctx: &Ctx, to: NodeId, msg: &Message) -> Result<Body, ClientError> {
    let reply = ctx.call(to, msg)?;
    match reply.body {
        Body::Error { code, detail } => Err(ClientError::Rejected { code, detail }),
        Body::Busy => Err(ClientError::Busy),
        body => Ok(body),
    }
}

fn unexpected(expected: &'static str, got: &Body) -> ClientError {
    ClientError::Unexpected { expected, got: got.kind().to_string() }
}

/// Runs the full sharing phase and returns the state to keep.
pub fn signup<R: RngCore + CryptoRng>(
    ctx: &Ctx,
    username: &str,
    password: &str,
    params: &GroupParams,
    rng: &mut R,
) -> Result<CredentialState, ClientError> {
    let init = signup_init(password, params, rng)?;
    let session = random_id(rng);
    let msg = |body| Message::new(session.clone(), username, body);

    match exchange(ctx, NodeId::Dealer, &msg(Body::SignupMc { mc: init.mc.clone() }))? {
        Body::Ack => {}
        other => return Err(unexpected("ack", &other)),
    }
    let ms = match exchange(ctx, NodeId::Service, &msg(Body::ClaimMs { mc: init.mc.clone() }))? {
        Body::MsIssued { ms } => ms,
        other => return Err(unexpected("ms_issued", &other)),
    };
    let abscissae = match exchange(ctx, NodeId::Dealer, &msg(Body::DealSecret { s_prime: init.s_prime }))? {
        Body::Abscissae { abscissae } => abscissae,
        other => return Err(unexpected("abscissae", &other)),
    };
    Ok(CredentialState {
        username: username.to_string(),
        r: init.r,
        r_prime: init.r_prime,
        k: init.k,
        mc: init.mc,
        ms,
        abscissae,
    })
}

/// A login request together with the next session's secrets.
#[derive(Clone, Debug)]
pub struct PreparedLogin {
    pub session_id: String,
    pub request: LoginRequest,
    r_next: BigUint,
    r_prime_next: BigUint,
    k_next: SymKey,
}

pub fn prepare_login<R: RngCore + CryptoRng>(
    state: &CredentialState,
    password: &str,
    params: &GroupParams,
    rng: &mut R,
) -> Result<PreparedLogin, ClientError> {
    let secret = password_to_scalar(password, &params.q)?;
    let s_prime = blind_secret(&secret, &state.r, params);
    let blinding = commit_scalar(&s_prime.as_exponent(params), &state.r_prime, params);
    let ems = sym_encrypt(&SymKey::derive_from_ciphertext(&state.ms), &ems_plaintext(&state.k, &blinding), rng)?;

    let mut r_next = scalar(params, rng)?;
    while r_next == state.r {
        r_next = scalar(params, rng)?;
    }
    let r_prime_next = scalar(params, rng)?;
    let k_next = SymKey::random(rng)?;
    let s_double_prime = blind_secret(&secret, &r_next, params);
    let next_blinding = commit_scalar(&s_double_prime.as_exponent(params), &r_prime_next, params);
    let mc_prime = sym_encrypt(&k_next, &encode_element(&next_blinding), rng)?;

    Ok(PreparedLogin {
        session_id: random_id(rng),
        request: LoginRequest { s_prime, abscissae: state.abscissae.clone(), s_double_prime, mc_prime, ems },
        r_next,
        r_prime_next,
        k_next,
    })
}

#[derive(Clone, Debug)]
pub struct LoginOutcome {
    pub state: CredentialState,
    pub token: String,
    pub request: LoginRequest,
}

/// Runs the reconstruction phase for a prepared request.
pub fn run_login(ctx: &Ctx, state: &CredentialState, prepared: PreparedLogin) -> Result<LoginOutcome, ClientError> {
    let msg = |body| Message::new(prepared.session_id.clone(), state.username.clone(), body);
    let request = prepared.request.clone();

    let next_abscissae = match exchange(ctx, NodeId::Dealer, &msg(Body::Login(request.clone())))? {
        Body::Abscissae { abscissae } => abscissae,
        other => return Err(unexpected("abscissae", &other)),
    };
    let envelope = match exchange(ctx, NodeId::Service, &msg(Body::PresentEms { ems: request.ems.clone() }))? {
        Body::KeyEnvelope { envelope } => envelope,
        other => return Err(unexpected("key_envelope", &other)),
    };
    let ms_key = SymKey::derive_from_ciphertext(&state.ms);
    let service_key = sym_decrypt(&ms_key, &envelope).ok().and_then(|b| SymKey::from_slice(&b).ok());
    let opened = service_key.and_then(|k| sym_decrypt(&k, &state.ms).ok());
    if opened.as_deref() != Some(state.mc.0.as_slice()) {
        let m = msg(Body::Ack);
        let detail = "service key does not open MS to MC";
        ctx.record(&m, Phase::Reconstruction, "error", Some(ErrorCode::Cod950), detail);
        return Err(ClientError::Rejected { code: Some(ErrorCode::Cod950), detail: detail.into() });
    }
    let (ms_prime, token) =
        match exchange(ctx, NodeId::Service, &msg(Body::NextMc { mc_prime: request.mc_prime.clone() }))? {
            Body::SessionOpened { ms_prime, token } => (ms_prime, token),
            other => return Err(unexpected("session_opened", &other)),
        };
    Ok(LoginOutcome {
        state: CredentialState {
            username: state.username.clone(),
            r: prepared.r_next,
            r_prime: prepared.r_prime_next,
            k: prepared.k_next,
            mc: request.mc_prime.clone(),
            ms: ms_prime,
            abscissae: next_abscissae,
        },
        token,
        request,
    })
}

pub fn login<R: RngCore + CryptoRng>(
    ctx: &Ctx,
    state: &CredentialState,
    password: &str,
    params: &GroupParams,
    rng: &mut R,
) -> Result<LoginOutcome, ClientError> {
    let prepared = prepare_login(state, password, params, rng)?;
    run_login(ctx, state, prepared)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::generate_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mc_opens_to_a_subgroup_element_and_is_fresh() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let params = generate_params(64, 31, &mut rng).unwrap();
        let a = signup_init("pw", &params, &mut rng).unwrap();
        let b = signup_init("pw", &params, &mut rng).unwrap();
        assert_ne!(a.mc, b.mc);
        let plain = sym_decrypt(&a.k, &a.mc).unwrap();
        let v = hexser::from_hex(std::str::from_utf8(&plain).unwrap()).unwrap();
        assert!(params.in_subgroup(&v));
        let scalar = password_to_scalar("pw", &params.q).unwrap();
        assert_ne!(a.s_prime.0, scalar);
    }

    #[test]
    fn prepared_login_uses_fresh_nonce() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let params = generate_params(64, 31, &mut rng).unwrap();
        let init = signup_init("pw", &params, &mut rng).unwrap();
        let state = CredentialState {
            username: "u".into(),
            r: init.r,
            r_prime: init.r_prime,
            k: init.k,
            mc: init.mc.clone(),
            ms: init.mc,
            abscissae: vec![BigUint::from(3u8)],
        };
        let p = prepare_login(&state, "pw", &params, &mut rng).unwrap();
        assert_ne!(p.request.s_prime, p.request.s_double_prime);
        assert_eq!(p.request.s_prime, init.s_prime);
        assert!(matches!(prepare_login(&state, "", &params, &mut rng), Err(ClientError::EmptyPassword(_))));
    }
}
