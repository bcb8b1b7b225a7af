//! Threshold password authentication built on Shamir sharing with hidden
//! abscissae and Pedersen-verified shares.
//!
//! The arithmetic layers ([`field`], [`shamir`]) are generic over the
//! backing integer; the protocol layers fix it to [`Scalar`].

pub mod cipher;
pub mod field;
pub mod group;
pub mod hexser;
pub mod pedersen;
pub mod protocol;
pub mod shamir;

pub use num_bigint::BigUint;

/// Protocol-sized residues (mod `q`) and group elements (mod `p`).
pub type Scalar = BigUint;
/// Shares over protocol-sized fields.
pub type SharePoint = shamir::SharePoint<Scalar>;
/// Secret polynomials over protocol-sized fields.
pub type Polynomial = shamir::SecretPolynomial<Scalar>;
/// Lagrange weights over protocol-sized fields.
pub type Weights = shamir::LagrangeWeights<Scalar>;
/// Word-sized residues for brute-force fixtures.
pub type SmallScalar = u64;
