//! Shamir sharing over a prime field `Z_m`.
//!
//! Abscissae are secret: they are drawn at random rather than taken as
//! `1..=n`, and whoever deals them is expected to hand them off and forget
//! them. Reconstruction is Lagrange interpolation at zero;
//! [`reconstruct_linear_system`] solves the Vandermonde system directly and
//! serves as an independent check on it.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::field::{random_below, EntropyError, FieldInt};

#[derive(Debug, Error)]
pub enum ShamirError {
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("cannot draw {n} distinct nonzero abscissae modulo {modulus}")]
    TooManyShares { n: usize, modulus: String },
    #[error("abscissa 0 is reserved for the secret")]
    ZeroAbscissa,
    #[error("repeated abscissa in point set")]
    DuplicateAbscissa,
    #[error("need {needed} shares with distinct abscissae, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("secret is not reduced modulo the field modulus")]
    SecretOutOfRange,
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

/// `a_0 + a_1 x + ... + a_{t-1} x^{t-1}` over `Z_m`; `a_0` is the secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretPolynomial<T> {
    coefficients: Vec<T>,
    modulus: T,
}

/// One share `(x, P(x))`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SharePoint<T> {
    pub x: T,
    pub y: T,
}

impl<T> SharePoint<T> {
    pub fn new(x: T, y: T) -> Self {
        SharePoint { x, y }
    }
}

impl<T: FieldInt> SecretPolynomial<T> {
    /// Samples a polynomial of degree at most `t - 1` with constant term `secret`.
    pub fn sample<R: RngCore + CryptoRng>(
        secret: T,
        t: usize,
        modulus: &T,
        rng: &mut R,
    ) -> Result<Self, ShamirError> {
        if t == 0 {
            return Err(ShamirError::ZeroThreshold);
        }
        if &secret >= modulus {
            return Err(ShamirError::SecretOutOfRange);
        }
        let mut coefficients = Vec::with_capacity(t);
        coefficients.push(secret);
        for _ in 1..t {
            coefficients.push(random_below(modulus, rng)?);
        }
        Ok(SecretPolynomial { coefficients, modulus: modulus.clone() })
    }

    /// Wraps explicit coefficients, reducing each mod `modulus`.
    pub fn from_coefficients(coefficients: Vec<T>, modulus: &T) -> Result<Self, ShamirError> {
        if coefficients.is_empty() {
            return Err(ShamirError::ZeroThreshold);
        }
        let coefficients = coefficients.iter().map(|c| c.reduce(modulus)).collect();
        Ok(SecretPolynomial { coefficients, modulus: modulus.clone() })
    }

    pub fn threshold(&self) -> usize {
        self.coefficients.len()
    }

    pub fn secret(&self) -> &T {
        &self.coefficients[0]
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn modulus(&self) -> &T {
        &self.modulus
    }

    /// Horner evaluation mod `m`.
    pub fn eval(&self, x: &T) -> T {
        let m = &self.modulus;
        let x = x.reduce(m);
        self.coefficients
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc.mul_mod(&x, m).add_mod(c, m))
    }

    pub fn share_at(&self, x: &T) -> SharePoint<T> {
        SharePoint { x: x.clone(), y: self.eval(x) }
    }
}

/// Draws `n` distinct, nonzero, uniformly random abscissae in `Z_m`.
pub fn draw_abscissae<T: FieldInt, R: RngCore + CryptoRng>(
    n: usize,
    modulus: &T,
    rng: &mut R,
) -> Result<Vec<T>, ShamirError> {
    let nonzero = modulus.clone() - T::one();
    collect_distinct(n, modulus, || Ok(random_below(&nonzero, rng)? + T::one()))
}

/// Pulls candidates until `n` distinct nonzero values are collected.
pub(crate) fn collect_distinct<T: FieldInt>(
    n: usize,
    modulus: &T,
    mut next: impl FnMut() -> Result<T, ShamirError>,
) -> Result<Vec<T>, ShamirError> {
    let fits = T::from_u64(n as u64) < *modulus && (n as u64) < u64::MAX;
    if !fits {
        return Err(ShamirError::TooManyShares { n, modulus: format!("{modulus:?}") });
    }
    let mut out: Vec<T> = Vec::with_capacity(n);
    while out.len() < n {
        let x = next()?;
        if x.is_zero() || &x >= modulus || out.contains(&x) {
            continue;
        }
        out.push(x);
    }
    Ok(out)
}

/// Lagrange basis values at zero for a fixed abscissa set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LagrangeWeights<T> {
    pub abscissae: Vec<T>,
    pub weights: Vec<T>,
    pub modulus: T,
}

impl<T: FieldInt> LagrangeWeights<T> {
    /// `sum_j y_j v_j mod m` for ordinates aligned with `abscissae`.
    pub fn combine<'a>(&self, ys: impl IntoIterator<Item = &'a T>) -> T {
        let m = &self.modulus;
        ys.into_iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (y, v)| acc.add_mod(&y.reduce(m).mul_mod(v, m), m))
    }
}

fn check_abscissae<T: FieldInt>(xs: &[T], m: &T) -> Result<(), ShamirError> {
    for (i, x) in xs.iter().enumerate() {
        if x.reduce(m).is_zero() {
            return Err(ShamirError::ZeroAbscissa);
        }
        if xs[..i].iter().any(|y| y.reduce(m) == x.reduce(m)) {
            return Err(ShamirError::DuplicateAbscissa);
        }
    }
    Ok(())
}

/// `v_j = prod_{k != j} x_k (x_k - x_j)^{-1} mod m`.
pub fn lagrange_weights<T: FieldInt>(abscissae: &[T], modulus: &T) -> Result<LagrangeWeights<T>, ShamirError> {
    check_abscissae(abscissae, modulus)?;
    let m = modulus;
    let xs: Vec<T> = abscissae.iter().map(|x| x.reduce(m)).collect();
    let mut weights = Vec::with_capacity(xs.len());
    for (j, xj) in xs.iter().enumerate() {
        let mut num = T::one();
        let mut den = T::one();
        for (k, xk) in xs.iter().enumerate() {
            if k != j {
                num = num.mul_mod(xk, m);
                den = den.mul_mod(&xk.sub_mod(xj, m), m);
            }
        }
        // den is nonzero: abscissae are distinct and m is prime
        let inv = den.inv_mod(m).ok_or(ShamirError::DuplicateAbscissa)?;
        weights.push(num.mul_mod(&inv, m));
    }
    Ok(LagrangeWeights { abscissae: xs, weights, modulus: m.clone() })
}

/// First `t` points in arrival order after dropping repeated abscissae.
fn select_points<T: FieldInt>(
    points: &[SharePoint<T>],
    t: usize,
    m: &T,
) -> Result<Vec<SharePoint<T>>, ShamirError> {
    if t == 0 {
        return Err(ShamirError::ZeroThreshold);
    }
    let mut chosen: Vec<SharePoint<T>> = Vec::with_capacity(t);
    for p in points {
        let x = p.x.reduce(m);
        if x.is_zero() {
            return Err(ShamirError::ZeroAbscissa);
        }
        if chosen.iter().any(|c| c.x == x) {
            continue;
        }
        chosen.push(SharePoint { x, y: p.y.reduce(m) });
        if chosen.len() == t {
            return Ok(chosen);
        }
    }
    Err(ShamirError::InsufficientShares { needed: t, got: chosen.len() })
}

/// Recovers `P(0)` from at least `t` points.
pub fn reconstruct_at_zero<T: FieldInt>(points: &[SharePoint<T>], t: usize, modulus: &T) -> Result<T, ShamirError> {
    let chosen = select_points(points, t, modulus)?;
    let xs: Vec<T> = chosen.iter().map(|p| p.x.clone()).collect();
    let w = lagrange_weights(&xs, modulus)?;
    Ok(w.combine(chosen.iter().map(|p| &p.y)))
}

/// Solves the `t x t` Vandermonde system for all coefficients by Gaussian
/// elimination mod `m`, where `t = points.len()`.
pub fn reconstruct_linear_system<T: FieldInt>(
    points: &[SharePoint<T>],
    modulus: &T,
) -> Result<SecretPolynomial<T>, ShamirError> {
    let m = modulus;
    let t = points.len();
    if t == 0 {
        return Err(ShamirError::ZeroThreshold);
    }
    let xs: Vec<T> = points.iter().map(|p| p.x.clone()).collect();
    check_abscissae(&xs, m)?;

    // augmented rows [1, x, x^2, ..., x^{t-1} | y]
    let mut rows: Vec<Vec<T>> = points
        .iter()
        .map(|p| {
            let x = p.x.reduce(m);
            let mut row = Vec::with_capacity(t + 1);
            let mut pow = T::one();
            for _ in 0..t {
                row.push(pow.clone());
                pow = pow.mul_mod(&x, m);
            }
            row.push(p.y.reduce(m));
            row
        })
        .collect();

    for col in 0..t {
        let pivot = (col..t)
            .find(|&r| !rows[r][col].is_zero())
            .ok_or(ShamirError::DuplicateAbscissa)?;
        rows.swap(col, pivot);
        let inv = rows[col][col].inv_mod(m).ok_or(ShamirError::DuplicateAbscissa)?;
        for v in rows[col].iter_mut() {
            *v = v.mul_mod(&inv, m);
        }
        let pivot_row = rows[col].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v = v.sub_mod(&factor.mul_mod(pv, m), m);
            }
        }
    }
    let coefficients = rows.into_iter().map(|mut r| r.pop().expect("augmented column")).collect();
    Ok(SecretPolynomial { coefficients, modulus: m.clone() })
}
