//! The password-sharing protocol: wire messages, role state machines, and
//! the plumbing they share.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cipher::SymKey;
use crate::group::GroupParams;
use crate::hexser;

pub mod client;
pub mod dealer;
pub mod error;
pub mod logger;
pub mod logging;
pub mod message;
pub mod net;
pub mod service;
pub mod shareholder;
pub mod store;

pub use error::{classify_error, ErrorCode, ProtocolError, Severity};
pub use message::{Body, LoginReport, LoginRequest, Message, NodeId};
pub use net::{dispatch, Clock, Ctx, Handler, Transport, TransportError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Sharing,
    Reconstruction,
    KeyCustody,
    Control,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Sharing => "sharing",
            Phase::Reconstruction => "reconstruction",
            Phase::KeyCustody => "key_custody",
            Phase::Control => "control",
        })
    }
}

/// Deployment constants every node agrees on.
#[derive(Clone, Debug)]
pub struct Deployment {
    pub params: GroupParams,
    pub t: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("password must not be empty")]
pub struct EmptyPassword;

/// `SHA-256(utf8(password)) mod q`.
pub fn password_to_scalar(password: &str, q: &BigUint) -> Result<BigUint, EmptyPassword> {
    if password.is_empty() {
        return Err(EmptyPassword);
    }
    Ok(BigUint::from_bytes_be(&Sha256::digest(password.as_bytes())) % q)
}

/// Byte form of a group element used as cipher plaintext.
pub fn encode_element(v: &BigUint) -> Vec<u8> {
    hexser::to_hex(v).into_bytes()
}

/// Plaintext of EMS: the client key followed by the encoded blinding.
pub fn ems_plaintext(k: &SymKey, blinding: &BigUint) -> Vec<u8> {
    let mut out = k.as_bytes().to_vec();
    out.extend_from_slice(&encode_element(blinding));
    out
}

/// Inverse of [`ems_plaintext`].
pub fn parse_ems_plaintext(bytes: &[u8]) -> Option<(SymKey, BigUint)> {
    if bytes.len() <= 32 {
        return None;
    }
    let k = SymKey::from_slice(&bytes[..32]).ok()?;
    let blinding = hexser::from_hex(std::str::from_utf8(&bytes[32..]).ok()?)?;
    Some((k, blinding))
}

/// Fresh opaque identifier (sessions, tokens).
pub fn random_id<R: rand::RngCore + ?Sized>(rng: &mut R) -> String {
    let mut b = [0u8; 12];
    rng.fill_bytes(&mut b);
    hex::encode(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn password_scalar_is_deterministic_and_reduced() {
        let q = BigUint::from(1_000_003u32);
        let a = password_to_scalar("hunter2", &q).unwrap();
        assert_eq!(a, password_to_scalar("hunter2", &q).unwrap());
        assert!(a < q);
        assert_eq!(password_to_scalar("", &q), Err(EmptyPassword));
    }

    #[test]
    fn password_scalar_matches_direct_digest() {
        let q = (BigUint::from(1u8) << 255u32) + 95u32;
        let digest = Sha256::digest(b"abc");
        assert_eq!(password_to_scalar("abc", &q).unwrap(), BigUint::from_bytes_be(&digest) % &q);
    }

    #[test]
    fn ems_plaintext_round_trip() {
        let k = SymKey([9; 32]);
        let b = BigUint::from(0xdead_beefu32);
        let (k2, b2) = parse_ems_plaintext(&ems_plaintext(&k, &b)).unwrap();
        assert_eq!((k2, b2), (k, b));
        assert!(parse_ems_plaintext(&[0; 32]).is_none());
    }

    #[test]
    fn distinct_passwords_distinct_scalars() {
        let q = (BigUint::from(1u8) << 160u32) - 47u32;
        let set: HashSet<BigUint> =
            (0..10_000).map(|i| password_to_scalar(&format!("pw-{i}"), &q).unwrap()).collect();
        assert_eq!(set.len(), 10_000);
    }
}
