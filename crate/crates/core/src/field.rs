//! Modular integer arithmetic, generic over the backing integer type.
//!
//! Everything above this module (Shamir sharing, Lagrange weights, the
//! linear-system oracle) is written against [`FieldInt`], so the same code
//! runs over machine words for brute-force tests and over [`BigUint`] for
//! protocol-sized moduli.

use std::fmt::Debug;
use std::hash::Hash;
use std::ops::Sub;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use thiserror::Error;

/// The entropy source failed to produce bytes.
#[derive(Debug, Error)]
#[error("entropy source failure: {0}")]
pub struct EntropyError(pub String);

/// An unsigned integer usable as a residue modulo a prime.
///
/// All `*_mod` methods assume their operands are already reduced.
pub trait FieldInt:
    Clone + Debug + Eq + Ord + Hash + Zero + One + Sub<Output = Self> + Send + Sync + 'static
{
    fn from_u64(v: u64) -> Self;

    /// Number of significant bits (0 for zero).
    fn bits(&self) -> u64;

    fn bit(&self, i: u64) -> bool;

    fn reduce(&self, m: &Self) -> Self;

    fn add_mod(&self, rhs: &Self, m: &Self) -> Self;

    fn sub_mod(&self, rhs: &Self, m: &Self) -> Self;

    fn mul_mod(&self, rhs: &Self, m: &Self) -> Self;

    /// Interprets big-endian bytes, truncating to the type's width.
    fn from_be_bytes(bytes: &[u8]) -> Self;

    fn to_u64(&self) -> Option<u64>;

    fn neg_mod(&self, m: &Self) -> Self {
        Self::zero().sub_mod(self, m)
    }

    /// `self^exp mod m` by a Montgomery ladder over the bit length of `exp`.
    fn pow_mod(&self, exp: &Self, m: &Self) -> Self {
        pow_mod_fixed(self, exp, m, exp.bits())
    }

    /// Multiplicative inverse modulo a prime `m` (Fermat); `None` for zero.
    fn inv_mod(&self, m: &Self) -> Option<Self> {
        let a = self.reduce(m);
        if a.is_zero() {
            return None;
        }
        let two = Self::from_u64(2);
        if *m == two {
            return Some(Self::one());
        }
        Some(a.pow_mod(&m.sub_mod(&two, m), m))
    }
}

/// Ladder exponentiation that performs one multiply and one square per bit
/// for exactly `bits` bits, independent of the exponent's value.
pub fn pow_mod_fixed<T: FieldInt>(base: &T, exp: &T, m: &T, bits: u64) -> T {
    if m.is_one() {
        return T::zero();
    }
    let mut r0 = T::one();
    let mut r1 = base.reduce(m);
    for i in (0..bits).rev() {
        if exp.bit(i) {
            r0 = r0.mul_mod(&r1, m);
            r1 = r1.mul_mod(&r1, m);
        } else {
            r1 = r0.mul_mod(&r1, m);
            r0 = r0.mul_mod(&r0, m);
        }
    }
    r0
}

/// Uniform draw from `[0, modulus)` by rejection sampling on the bit length.
pub fn random_below<T: FieldInt, R: RngCore + ?Sized>(
    modulus: &T,
    rng: &mut R,
) -> Result<T, EntropyError> {
    if modulus.is_zero() || modulus.is_one() {
        return Ok(T::zero());
    }
    let bits = (modulus.clone() - T::one()).bits();
    let nbytes = bits.div_ceil(8) as usize;
    let top_mask = if bits % 8 == 0 { 0xff } else { (1u8 << (bits % 8) as u32) - 1 };
    let mut buf = vec![0u8; nbytes];
    loop {
        rng.try_fill_bytes(&mut buf)
            .map_err(|e| EntropyError(e.to_string()))?;
        buf[0] &= top_mask;
        let v = T::from_be_bytes(&buf);
        if v < *modulus {
            return Ok(v);
        }
    }
}

macro_rules! impl_word {
    ($t:ty, $wide:ty) => {
        impl FieldInt for $t {
            fn from_u64(v: u64) -> Self {
                v as $t
            }
            fn bits(&self) -> u64 {
                (<$t>::BITS - self.leading_zeros()) as u64
            }
            fn bit(&self, i: u64) -> bool {
                i < <$t>::BITS as u64 && (self >> i) & 1 == 1
            }
            fn reduce(&self, m: &Self) -> Self {
                self % m
            }
            fn add_mod(&self, rhs: &Self, m: &Self) -> Self {
                ((*self as $wide + *rhs as $wide) % *m as $wide) as $t
            }
            fn sub_mod(&self, rhs: &Self, m: &Self) -> Self {
                ((*self as $wide + *m as $wide - *rhs as $wide) % *m as $wide) as $t
            }
            fn mul_mod(&self, rhs: &Self, m: &Self) -> Self {
                ((*self as $wide * *rhs as $wide) % *m as $wide) as $t
            }
            fn from_be_bytes(bytes: &[u8]) -> Self {
                bytes.iter().fold(0, |acc: $t, b| acc.wrapping_shl(8) | *b as $t)
            }
            fn to_u64(&self) -> Option<u64> {
                u64::try_from(*self).ok()
            }
        }
    };
}

impl_word!(u32, u64);
impl_word!(u64, u128);

impl FieldInt for BigUint {
    fn from_u64(v: u64) -> Self {
        BigUint::from(v)
    }
    fn bits(&self) -> u64 {
        BigUint::bits(self)
    }
    fn bit(&self, i: u64) -> bool {
        BigUint::bit(self, i)
    }
    fn reduce(&self, m: &Self) -> Self {
        self % m
    }
    fn add_mod(&self, rhs: &Self, m: &Self) -> Self {
        let s = self + rhs;
        if &s >= m {
            s - m
        } else {
            s
        }
    }
    fn sub_mod(&self, rhs: &Self, m: &Self) -> Self {
        if self >= rhs {
            self - rhs
        } else {
            m - rhs + self
        }
    }
    fn mul_mod(&self, rhs: &Self, m: &Self) -> Self {
        (self * rhs).mod_floor(m)
    }
    fn from_be_bytes(bytes: &[u8]) -> Self {
        BigUint::from_bytes_be(bytes)
    }
    fn to_u64(&self) -> Option<u64> {
        ToPrimitive::to_u64(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn brute_pow(b: u64, e: u64, m: u64) -> u64 {
        (0..e).fold(1 % m, |acc, _| acc * b % m)
    }

    #[test]
    fn ladder_matches_repeated_multiplication() {
        for m in [2u64, 17, 23, 1009] {
            for b in 0..m.min(40) {
                for e in 0..30 {
                    assert_eq!(b.pow_mod(&e, &m), brute_pow(b, e, m), "{b}^{e} mod {m}");
                }
            }
        }
    }

    #[test]
    fn word_and_biguint_agree() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let m: u64 = 1_000_003;
        for _ in 0..200 {
            let a = random_below(&m, &mut rng).unwrap();
            let b = random_below(&m, &mut rng).unwrap();
            let (ba, bb, bm) = (BigUint::from(a), BigUint::from(b), BigUint::from(m));
            assert_eq!(BigUint::from(a.mul_mod(&b, &m)), ba.mul_mod(&bb, &bm));
            assert_eq!(BigUint::from(a.sub_mod(&b, &m)), ba.sub_mod(&bb, &bm));
            assert_eq!(BigUint::from(a.add_mod(&b, &m)), ba.add_mod(&bb, &bm));
            assert_eq!(BigUint::from(a.pow_mod(&b, &m)), ba.modpow(&bb, &bm));
        }
    }

    #[test]
    fn fixed_width_ladder_ignores_leading_zero_bits() {
        let m = BigUint::from(23u32);
        let e = BigUint::from(5u32);
        assert_eq!(pow_mod_fixed(&BigUint::from(2u32), &e, &m, 64), BigUint::from(9u32));
    }

    #[test]
    fn random_below_degenerate_modulus() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(random_below(&1u64, &mut rng).unwrap(), 0);
        }
    }
}
