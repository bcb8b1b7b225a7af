//! Pedersen commitments and verifiable sharing over a [`GroupParams`] group.
//!
//! A dealing samples two polynomials `F` (carrying the secret) and `K`
//! (blinding), hands out `(F(x_i), K(x_i))` and publishes
//! `c_j = g^{a_j} h^{b_j}`. A share is consistent iff
//! `g^{s_i} h^{t_i} = prod_j c_j^{x_i^j} (mod p)`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::FieldInt;
use crate::group::GroupParams;
use crate::hexser;
use crate::shamir::{draw_abscissae, SecretPolynomial, ShamirError};

#[derive(Debug, Error)]
pub enum PedersenError {
    #[error(transparent)]
    Shamir(#[from] ShamirError),
    #[error("threshold {t} exceeds share count {n}")]
    ThresholdAboveCount { t: usize, n: usize },
    #[error("trapdoor must be nonzero mod q")]
    ZeroTrapdoor,
}

/// Commitments `c_0..c_{t-1}` to the coefficients of a dealing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommitmentVector(#[serde(with = "hexser::ints")] pub Vec<BigUint>);

impl CommitmentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Every entry is a nontrivial-range element of the order-`q` subgroup.
    pub fn well_formed(&self, params: &GroupParams) -> bool {
        !self.0.is_empty() && self.0.iter().all(|c| params.in_subgroup(c))
    }

    /// `prod_j c_j^{x^j mod q} mod p`.
    pub fn evaluate(&self, x: &BigUint, params: &GroupParams) -> BigUint {
        let q = &params.q;
        let x = x % q;
        let mut acc = BigUint::one();
        let mut x_pow = BigUint::one();
        for c in &self.0 {
            acc = params.mul(&acc, &params.exp(c, &x_pow));
            x_pow = x_pow.mul_mod(&x, q);
        }
        acc
    }
}

/// One participant's `(x, F(x), K(x))`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualShare {
    #[serde(with = "hexser::int")]
    pub x: BigUint,
    #[serde(with = "hexser::int")]
    pub s: BigUint,
    #[serde(with = "hexser::int")]
    pub t_val: BigUint,
}

#[derive(Clone, Debug)]
pub struct Dealing {
    pub shares: Vec<DualShare>,
    pub commitments: CommitmentVector,
}

/// `g^S h^r mod p`: the only form in which a password leaves the client.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlindedSecret(#[serde(with = "hexser::int")] pub BigUint);

impl BlindedSecret {
    /// The dealt secret: the group element reduced into the exponent field.
    pub fn as_exponent(&self, params: &GroupParams) -> BigUint {
        &self.0 % &params.q
    }
}

/// `g^s h^t mod p`.
pub fn commit_scalar(s: &BigUint, t_val: &BigUint, params: &GroupParams) -> BigUint {
    params.mul(&params.exp(&params.g, s), &params.exp(&params.h, t_val))
}

/// Deals `secret` to `n` fresh random abscissae.
pub fn deal_committed<R: RngCore + CryptoRng>(
    secret: &BigUint,
    t: usize,
    n: usize,
    params: &GroupParams,
    rng: &mut R,
) -> Result<Dealing, PedersenError> {
    if t > n {
        return Err(PedersenError::ThresholdAboveCount { t, n });
    }
    let xs = draw_abscissae(n, &params.q, rng)?;
    deal_committed_at(secret, t, &xs, params, rng)
}

/// Deals `secret` to caller-chosen abscissae.
pub fn deal_committed_at<R: RngCore + CryptoRng>(
    secret: &BigUint,
    t: usize,
    abscissae: &[BigUint],
    params: &GroupParams,
    rng: &mut R,
) -> Result<Dealing, PedersenError> {
    let n = abscissae.len();
    if t > n {
        return Err(PedersenError::ThresholdAboveCount { t, n });
    }
    if abscissae.iter().any(|x| (x % &params.q).is_zero()) {
        return Err(ShamirError::ZeroAbscissa.into());
    }
    let q = &params.q;
    let f = SecretPolynomial::sample(secret % q, t, q, rng)?;
    let blind = {
        let b0 = crate::field::random_below(q, rng).map_err(ShamirError::from)?;
        SecretPolynomial::sample(b0, t, q, rng)?
    };
    let commitments = CommitmentVector(
        f.coefficients()
            .iter()
            .zip(blind.coefficients())
            .map(|(a, b)| commit_scalar(a, b, params))
            .collect(),
    );
    let shares = abscissae
        .iter()
        .map(|x| DualShare { x: x.clone(), s: f.eval(x), t_val: blind.eval(x) })
        .collect();
    Ok(Dealing { shares, commitments })
}

/// Checks `g^s h^t = prod_j c_j^{x^j}`; also fails for a wrong abscissa.
pub fn verify_share(share: &DualShare, commitments: &CommitmentVector, params: &GroupParams) -> bool {
    if !commitments.well_formed(params) {
        return false;
    }
    commit_scalar(&share.s, &share.t_val, params) == commitments.evaluate(&share.x, params)
}

pub fn blind_secret(secret: &BigUint, r: &BigUint, params: &GroupParams) -> BlindedSecret {
    BlindedSecret(commit_scalar(secret, r, params))
}

/// With trapdoor `a` (`h = g^a`), the `t'` opening the same commitment to `s'`:
/// `t' = (s - s') a^{-1} + t mod q`.
pub fn hiding_witness(
    s: &BigUint,
    t_val: &BigUint,
    s_prime: &BigUint,
    a: &BigUint,
    q: &BigUint,
) -> Result<BigUint, PedersenError> {
    let a_inv = (a % q).inv_mod(q).ok_or(PedersenError::ZeroTrapdoor)?;
    let diff = (s % q).sub_mod(&(s_prime % q), q);
    Ok(diff.mul_mod(&a_inv, q).add_mod(&(t_val % q), q))
}

/// From two distinct openings of one commitment, `a = (s' - s)(t - t')^{-1} mod q`.
pub fn trapdoor_from_openings(
    (s, t_val): (&BigUint, &BigUint),
    (s2, t2): (&BigUint, &BigUint),
    q: &BigUint,
) -> Option<BigUint> {
    let num = (s2 % q).sub_mod(&(s % q), q);
    let den = (t_val % q).sub_mod(&(t2 % q), q);
    Some(num.mul_mod(&den.inv_mod(q)?, q))
}

/// SHA-256 of the canonical lowercase hex encoding of `x`.
pub fn hash_abscissa(x: &BigUint) -> [u8; 32] {
    Sha256::digest(hexser::to_hex(x).as_bytes()).into()
}
