//! The discrete-log setting shared by every node: a prime `p`, a prime
//! subgroup order `q | p - 1`, and two generators `g`, `h` of that subgroup
//! whose relative discrete log is unknown.
//!
//! Exponents and shares live modulo `q`; group elements live modulo `p`.

use std::path::Path;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{pow_mod_fixed, random_below, EntropyError, FieldInt};
use crate::hexser;

/// Miller-Rabin rounds; each round errs with probability at most 1/4.
const MR_ROUNDS: usize = 40;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("invalid bit sizes: q_bits={q_bits}, p_bits={p_bits} (need 2 <= q_bits < p_bits)")]
    BitSizes { p_bits: u64, q_bits: u64 },
    #[error("no valid (p, q) pair found within {0} attempts")]
    GenerationTimeout(usize),
    #[error("value is not invertible modulo the given modulus")]
    NotInvertible,
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("parameter file: {0}")]
    File(String),
    #[error("parameters failed validation")]
    Invalid,
}

/// Public group parameters `(p, q, g, h)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    #[serde(with = "hexser::int")]
    pub p: BigUint,
    #[serde(with = "hexser::int")]
    pub q: BigUint,
    #[serde(with = "hexser::int")]
    pub g: BigUint,
    #[serde(with = "hexser::int")]
    pub h: BigUint,
}

/// Knobs for [`generate_params_with`].
#[derive(Clone, Copy, Debug)]
pub struct GenerationOptions {
    /// Total number of candidate `p` values tried before giving up.
    pub max_attempts: usize,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions { max_attempts: 1_000_000 }
    }
}

/// Default subgroup size for a given modulus size.
pub fn default_q_bits(p_bits: u64) -> u64 {
    if p_bits < 830 {
        160.min(p_bits.saturating_sub(1))
    } else {
        256
    }
}

impl GroupParams {
    pub fn p_bits(&self) -> u64 {
        self.p.bits()
    }

    /// `base^exponent mod p` with the exponent reduced mod `q` and a ladder
    /// pattern fixed to the bit length of `q`.
    pub fn exp(&self, base: &BigUint, exponent: &BigUint) -> BigUint {
        let e = exponent % &self.q;
        pow_mod_fixed(base, &e, &self.p, self.q.bits())
    }

    /// True when `x` lies in the order-`q` subgroup of `Z_p^*`.
    pub fn in_subgroup(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p && x.modpow(&self.q, &self.p).is_one()
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a.mul_mod(b, &self.p)
    }

    /// Builds parameters from a known trapdoor `a` with `h = g^a mod p`.
    /// Only meaningful for fixtures that need to open commitments both ways.
    pub fn with_trapdoor(p: BigUint, q: BigUint, g: BigUint, a: &BigUint) -> GroupParams {
        let h = g.modpow(&(a % &q), &p);
        GroupParams { p, q, g, h }
    }

    /// Serializes to the flat key-value parameter document.
    pub fn to_toml(&self) -> String {
        let file = ParamFile { p_bits: self.p_bits(), params: self.clone() };
        toml::to_string(&file).expect("parameter document serializes")
    }

    pub fn from_toml(text: &str) -> Result<GroupParams, GroupError> {
        let file: ParamFile = toml::from_str(text).map_err(|e| GroupError::File(e.to_string()))?;
        if file.p_bits != file.params.p_bits() {
            return Err(GroupError::File(format!(
                "p_bits={} but p has {} bits",
                file.p_bits,
                file.params.p_bits()
            )));
        }
        if !validate_params(&file.params) {
            return Err(GroupError::Invalid);
        }
        Ok(file.params)
    }

    pub fn load(path: &Path) -> Result<GroupParams, GroupError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GroupError::File(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), GroupError> {
        std::fs::write(path, self.to_toml())
            .map_err(|e| GroupError::File(format!("{}: {e}", path.display())))
    }
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    p_bits: u64,
    #[serde(flatten)]
    params: GroupParams,
}

/// Miller-Rabin with trial division. Exact (deterministic bases) below 2^64.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for sp in SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;

    let witness = |a: &BigUint| -> bool {
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            return true;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                return true;
            }
        }
        false
    };

    if n.bits() <= 64 {
        return SMALL_PRIMES[..12].iter().all(|&b| witness(&BigUint::from(b)));
    }
    let span = n - 3u32;
    for _ in 0..MR_ROUNDS {
        let a = match random_below(&span, rng) {
            Ok(a) => a + 2u32,
            Err(_) => return false,
        };
        if !witness(&a) {
            return false;
        }
    }
    true
}

fn random_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint, EntropyError> {
    let top = BigUint::one() << (bits - 1);
    Ok(random_below(&top, rng)? + top)
}

/// Generates parameters with `p` of exactly `p_bits` bits and `q` of
/// `q_bits` bits. The trapdoor used to derive `h` is dropped.
pub fn generate_params<R: RngCore + CryptoRng>(
    p_bits: u64,
    q_bits: u64,
    rng: &mut R,
) -> Result<GroupParams, GroupError> {
    generate_params_with(p_bits, q_bits, GenerationOptions::default(), rng).map(|(gp, _)| gp)
}

/// Like [`generate_params`] but also returns the trapdoor `a` (`h = g^a`).
pub fn generate_params_with<R: RngCore + CryptoRng>(
    p_bits: u64,
    q_bits: u64,
    opts: GenerationOptions,
    rng: &mut R,
) -> Result<(GroupParams, BigUint), GroupError> {
    if q_bits < 2 || q_bits >= p_bits {
        return Err(GroupError::BitSizes { p_bits, q_bits });
    }
    let (p, q) = find_prime_pair(p_bits, q_bits, opts.max_attempts, rng)?;
    let cofactor = (&p - 1u32) / &q;
    let g = loop {
        let e = random_below(&(&p - 3u32), rng)? + 2u32;
        let g = e.modpow(&cofactor, &p);
        if !g.is_one() {
            break g;
        }
    };
    let a = random_below(&(&q - 1u32), rng)? + 1u32;
    let params = GroupParams::with_trapdoor(p, q, g, &a);
    debug_assert!(validate_params(&params));
    Ok((params, a))
}

fn find_prime_pair<R: RngCore + ?Sized>(
    p_bits: u64,
    q_bits: u64,
    budget: usize,
    rng: &mut R,
) -> Result<(BigUint, BigUint), GroupError> {
    let one = BigUint::one();
    let p_lo = &one << (p_bits - 1);
    let p_hi = (&one << p_bits) - 1u32;
    let mut attempts = 0usize;
    while attempts < budget {
        let q = loop {
            let mut cand = random_bits(q_bits, rng)?;
            if q_bits > 2 {
                cand |= &one;
            }
            if is_probable_prime(&cand, rng) {
                break cand;
            }
        };
        // p = q*c + 1 with p in [p_lo, p_hi].
        let c_lo = (&p_lo - 1u32).div_ceil(&q);
        let c_hi = (&p_hi - 1u32) / &q;
        if c_hi < c_lo {
            attempts += 1;
            continue;
        }
        let span = &c_hi - &c_lo + 1u32;
        let tries = (4 * p_bits as usize).max(16);
        for _ in 0..tries {
            attempts += 1;
            let mut c = &c_lo + random_below(&span, rng)?;
            if q != BigUint::from(2u32) && c.is_odd() {
                c += 1u32;
                if c > c_hi {
                    c -= 2u32;
                    if c < c_lo {
                        continue;
                    }
                }
            }
            let p = &q * &c + 1u32;
            if p.bits() == p_bits && is_probable_prime(&p, rng) {
                return Ok((p, q));
            }
            if attempts >= budget {
                break;
            }
        }
    }
    Err(GroupError::GenerationTimeout(budget))
}

/// True iff every parameter invariant holds. Never fails.
pub fn validate_params(params: &GroupParams) -> bool {
    let mut rng = OsRng;
    let GroupParams { p, q, g, h } = params;
    if q >= p || q.is_zero() {
        return false;
    }
    if !((p - 1u32) % q).is_zero() {
        return false;
    }
    if !is_probable_prime(p, &mut rng) || !is_probable_prime(q, &mut rng) {
        return false;
    }
    let member = |x: &BigUint| x > &BigUint::one() && x < p && x.modpow(q, p).is_one();
    member(g) && member(h)
}

/// `base^exponent mod params.p`, exponent taken mod `q`.
pub fn mod_exp(base: &BigUint, exponent: &BigUint, params: &GroupParams) -> BigUint {
    params.exp(base, exponent)
}

/// Inverse of `value` modulo the prime `modulus`.
pub fn mod_inv<T: FieldInt>(value: &T, modulus: &T) -> Result<T, GroupError> {
    value.inv_mod(modulus).ok_or(GroupError::NotInvertible)
}

/// Uniform scalar in `[0, modulus)`.
pub fn random_scalar<T: FieldInt, R: RngCore + CryptoRng>(
    modulus: &T,
    rng: &mut R,
) -> Result<T, EntropyError> {
    random_below(modulus, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn fixture(q: u64, h: u64) -> GroupParams {
        GroupParams { p: big(23), q: big(q), g: big(2), h: big(h) }
    }

    #[test]
    fn small_fixture_validates() {
        assert!(validate_params(&fixture(11, 8)));
        assert_eq!(big(2).modpow(&big(11), &big(23)), big(1));
        assert_eq!(big(8).modpow(&big(11), &big(23)), big(1));
    }

    #[test]
    fn rejects_non_dividing_or_composite_q() {
        assert!(!validate_params(&fixture(7, 8)));
        let composite = GroupParams { p: big(17), q: big(16), g: big(3), h: big(9) };
        assert!(!validate_params(&composite));
        // h outside the subgroup: 5 has order 22 mod 23
        assert!(!validate_params(&fixture(11, 5)));
    }

    #[test]
    fn mod_exp_examples() {
        let gp = fixture(11, 8);
        // exponent 11 reduces to 0 mod q, consistent with 2^11 = 1 mod 23
        assert_eq!(mod_exp(&big(2), &big(11), &gp), big(1));
        assert_eq!(mod_exp(&big(2), &big(5), &gp), big(9));
        assert_eq!(mod_exp(&big(19), &big(0), &gp), big(1));
    }

    #[test]
    fn mod_inv_worked_values() {
        assert_eq!(mod_inv(&15u64, &17).unwrap(), 8);
        assert_eq!(mod_inv(&13u64, &17).unwrap(), 4);
        assert_eq!(mod_inv(&1u64, &1_000_003).unwrap(), 1);
        assert!(matches!(mod_inv(&17u64, &17), Err(GroupError::NotInvertible)));
    }

    #[test]
    fn mod_inv_two_sided_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for m in [17u64, 23, 1_000_003] {
            for _ in 0..1000 {
                let v = random_scalar(&(m - 1), &mut rng).unwrap() + 1;
                let w = mod_inv(&v, &m).unwrap();
                assert_eq!(v * w % m, 1);
                assert_eq!(w * v % m, 1);
            }
        }
    }

    #[test]
    fn rejects_bad_bit_sizes() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(generate_params(8, 16, &mut rng), Err(GroupError::BitSizes { .. })));
        assert!(matches!(generate_params(32, 1, &mut rng), Err(GroupError::BitSizes { .. })));
    }

    #[test]
    fn seeded_generation_is_deterministic_and_valid() {
        for (pb, qb) in [(32, 16), (64, 31), (166, 160)] {
            let a = generate_params(pb, qb, &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
            let b = generate_params(pb, qb, &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.p.bits(), pb);
            assert_eq!(a.q.bits(), qb);
            assert!(validate_params(&a));
        }
    }

    #[test]
    fn generation_budget_exhaustion() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let r = generate_params_with(200, 100, GenerationOptions { max_attempts: 1 }, &mut rng);
        assert!(matches!(r, Err(GroupError::GenerationTimeout(1))));
    }

    #[test]
    fn subgroup_elements_have_order_q() {
        let gp = generate_params(64, 31, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..50 {
            let e = random_scalar(&gp.q, &mut rng).unwrap();
            let x = gp.exp(&gp.g, &e);
            assert!(x.modpow(&gp.q, &gp.p).is_one());
        }
    }

    #[test]
    fn param_document_round_trip() {
        let gp = fixture(11, 8);
        let text = gp.to_toml();
        assert!(text.contains("p = \"17\""), "{text}");
        assert!(text.contains("p_bits = 5"));
        assert_eq!(GroupParams::from_toml(&text).unwrap(), gp);
        let bad = text.replace("p_bits = 5", "p_bits = 6");
        assert!(GroupParams::from_toml(&bad).is_err());
    }

    #[test]
    fn primality_small_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let primes: Vec<u64> = (0..300u64).filter(|&n| is_probable_prime(&big(n), &mut rng)).collect();
        let sieve: Vec<u64> = (0..300u64)
            .filter(|&n| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0))
            .collect();
        assert_eq!(primes, sieve);
        assert!(is_probable_prime(&big(1_000_003), &mut rng));
        // Carmichael number
        assert!(!is_probable_prime(&big(561), &mut rng));
    }
}
