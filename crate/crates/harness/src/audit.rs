//! Leakage audit over captured traffic and stores, plus a small-field replica
//! that counts which secrets remain consistent with what an observer holds.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sharepass_core::group::GroupParams;
use sharepass_core::protocol::{encode_element, password_to_scalar};
use sharepass_core::shamir::SecretPolynomial;

use crate::scenario::ScenarioResult;

/// Field size of the replica.
pub const REPLICA_MODULUS: u64 = 17;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplicaCheck {
    pub modulus: u64,
    pub t: usize,
    pub observed: usize,
    /// Weight of each candidate secret: the number of (abscissae, polynomial)
    /// pairs consistent with the observed ordinates.
    pub weights: Vec<u64>,
}

impl ReplicaCheck {
    pub fn every_candidate_admitted(&self) -> bool {
        self.weights.iter().all(|&w| w > 0)
    }

    pub fn uniform(&self) -> bool {
        self.every_candidate_admitted() && self.weights.windows(2).all(|w| w[0] == w[1])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LeakageReport {
    pub scanned_bytes: usize,
    /// Human-readable names of the secrets found, with where.
    pub hits: Vec<String>,
    pub replica: Option<ReplicaCheck>,
}

impl LeakageReport {
    pub fn passed(&self) -> bool {
        self.hits.is_empty() && self.replica.as_ref().is_none_or(ReplicaCheck::uniform)
    }
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// The byte patterns that would betray a password.
pub fn needles(password: &str, params: &GroupParams) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![("password".to_string(), password.as_bytes().to_vec())];
    if let Ok(s) = password_to_scalar(password, &params.q) {
        out.push(("scalar hex".into(), s.to_str_radix(16).into_bytes()));
        out.push(("scalar decimal".into(), s.to_str_radix(10).into_bytes()));
        out.push(("scalar bytes".into(), s.to_bytes_be()));
        let gs = params.exp(&params.g, &s);
        out.push(("g^S".into(), encode_element(&gs)));
        out.push(("g^S bytes".into(), gs.to_bytes_be()));
    }
    out
}

/// Scans everything captured in `result`: all traffic and stores, plus what
/// each passive observer saw. `sub_threshold_observers` adds the replica check
/// for that many shareholders holding shares but not abscissae.
pub fn assert_information_leakage(
    result: &ScenarioResult,
    params: &GroupParams,
    passwords: &[&str],
    replica: Option<(usize, usize)>,
) -> LeakageReport {
    let mut sources: Vec<(String, &[u8])> = Vec::new();
    for e in &result.trace {
        sources.push((format!("{}->{} {}", e.from, e.to, e.kind), &e.bytes));
    }
    for (id, bytes) in &result.stores {
        sources.push((format!("{id} store"), bytes));
    }
    for (id, seen) in &result.observations {
        for bytes in seen {
            sources.push((format!("{id} observation"), bytes));
        }
    }
    let mut hits = Vec::new();
    for pw in passwords {
        for (what, needle) in needles(pw, params) {
            for (name, hay) in &sources {
                if contains(hay, &needle) {
                    hits.push(format!("{what} in {name}"));
                }
            }
        }
    }
    hits.dedup();
    LeakageReport {
        scanned_bytes: sources.iter().map(|(_, b)| b.len()).sum(),
        hits,
        replica: replica.map(|(t, observed)| small_field_replica(t, observed, result.trace.len() as u64)),
    }
}

fn eval(coeffs: &[u64], x: u64, m: u64) -> u64 {
    coeffs.iter().rev().fold(0, |acc, &c| (acc * x + c) % m)
}

/// Exhaustive count over `Z_m`: for each candidate constant term, the number
/// of polynomials of degree < `t` taking the value `ys[i]` at `xs[i]`.
pub fn candidate_counts(m: u64, t: usize, xs: &[u64], ys: &[u64]) -> Vec<u64> {
    let mut counts = vec![0u64; m as usize];
    let free = t.saturating_sub(1) as u32;
    let mut coeffs = vec![0u64; t];
    for secret in 0..m {
        coeffs[0] = secret;
        for idx in 0..m.pow(free) {
            let mut rest = idx;
            for c in coeffs.iter_mut().skip(1) {
                *c = rest % m;
                rest /= m;
            }
            if xs.iter().zip(ys).all(|(&x, &y)| eval(&coeffs, x, m) == y) {
                counts[secret as usize] += 1;
            }
        }
    }
    counts
}

fn distinct_tuples(m: u64, k: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if prefix.len() == k {
        out.push(prefix.clone());
        return;
    }
    for x in 1..m {
        if !prefix.contains(&x) {
            prefix.push(x);
            distinct_tuples(m, k, prefix, out);
            prefix.pop();
        }
    }
}

/// Deals a random secret over `Z_17` and gives `observed` ordinates to an
/// observer that does not know the abscissae. Each candidate's weight sums the
/// exhaustive counts over every possible abscissa assignment.
pub fn small_field_replica(t: usize, observed: usize, seed: u64) -> ReplicaCheck {
    let m = REPLICA_MODULUS;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let secret = rng.gen_range(0..m);
    let poly = SecretPolynomial::sample(secret, t, &m, &mut rng).expect("valid replica dealing");
    let mut xs: Vec<u64> = (1..m).collect();
    for i in (1..xs.len()).rev() {
        xs.swap(i, rng.gen_range(0..=i));
    }
    let ys: Vec<u64> = xs[..observed].iter().map(|x| poly.eval(x)).collect();
    let mut assignments = Vec::new();
    distinct_tuples(m, observed, &mut Vec::new(), &mut assignments);
    let mut weights = vec![0u64; m as usize];
    for guess in &assignments {
        for (w, c) in weights.iter_mut().zip(candidate_counts(m, t, guess, &ys)) {
            *w += c;
        }
    }
    ReplicaCheck { modulus: m, t, observed, weights }
}

/// Whether `value` appears as a decimal, hex, or big-endian substring.
pub fn value_leaks(hay: &[u8], value: &BigUint) -> bool {
    contains(hay, value.to_str_radix(16).as_bytes())
        || contains(hay, value.to_str_radix(10).as_bytes())
        || contains(hay, &value.to_bytes_be())
}
