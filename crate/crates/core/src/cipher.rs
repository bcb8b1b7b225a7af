//! Authenticated symmetric encryption (AES-256-GCM, random 96-bit nonce
//! prepended to each ciphertext) and the small key-derivation helpers the
//! protocol needs.

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hexser;

const NONCE_LEN: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CipherError {
    #[error("ciphertext failed authentication")]
    Authentication,
    #[error("key must be exactly 32 bytes, got {0}")]
    KeyLength(usize),
    #[error("entropy source failure")]
    Entropy,
}

/// A 256-bit symmetric key.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymKey(#[serde(with = "hexser::bytes32")] pub [u8; 32]);

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymKey(..)")
    }
}

impl SymKey {
    pub fn from_slice(bytes: &[u8]) -> Result<SymKey, CipherError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CipherError::KeyLength(bytes.len()))?;
        Ok(SymKey(arr))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Result<SymKey, CipherError> {
        let mut k = [0u8; 32];
        rng.try_fill_bytes(&mut k).map_err(|_| CipherError::Entropy)?;
        Ok(SymKey(k))
    }

    /// Key derived from a ciphertext used as key material: `SHA-256(bytes)`.
    pub fn derive_from_ciphertext(ct: &Ciphertext) -> SymKey {
        SymKey(Sha256::digest(&ct.0).into())
    }

    /// Key derived from a field element, so a key can itself be secret-shared.
    pub fn derive_from_scalar(seed: &BigUint) -> SymKey {
        SymKey(Sha256::digest(hexser::to_hex(seed).as_bytes()).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

/// `nonce || AES-GCM(ciphertext || tag)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ciphertext(#[serde(with = "hexser::b64")] pub Vec<u8>);

pub fn sym_encrypt<R: RngCore + CryptoRng>(
    key: &SymKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Ciphertext, CipherError> {
    let cipher = Aes256Gcm::new_from_slice(&key.0).map_err(|_| CipherError::KeyLength(32))?;
    let mut nonce = [0u8; NONCE_LEN];
    rng.try_fill_bytes(&mut nonce).map_err(|_| CipherError::Entropy)?;
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .map_err(|_| CipherError::Authentication)?;
    let mut out = nonce.to_vec();
    out.extend_from_slice(&body);
    Ok(Ciphertext(out))
}

pub fn sym_decrypt(key: &SymKey, ct: &Ciphertext) -> Result<Vec<u8>, CipherError> {
    if ct.0.len() < NONCE_LEN + 16 {
        return Err(CipherError::Authentication);
    }
    let cipher = Aes256Gcm::new_from_slice(&key.0).map_err(|_| CipherError::KeyLength(32))?;
    let (nonce, body) = ct.0.split_at(NONCE_LEN);
    cipher
        .decrypt(Nonce::from_slice(nonce), body)
        .map_err(|_| CipherError::Authentication)
}
