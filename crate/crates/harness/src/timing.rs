//! Wall-clock latency of sign-up and login under concurrent clients.

use std::sync::{Arc, Barrier};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sharepass_core::protocol::client::{login, signup, ClientError};
use sharepass_core::protocol::net::SystemClock;
use sharepass_core::protocol::NodeId;

use crate::plan::{FaultPlan, PlanError, Scenario};
use crate::scenario::World;
use crate::simnet::SimClock;

pub const DEFAULT_LEVELS: [usize; 6] = [1, 10, 20, 30, 40, 50];

/// The four deployment sizes compared in the evaluation.
pub const GROUPS: [(usize, usize); 4] = [(2, 3), (3, 5), (5, 7), (10, 10)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub p_bits: u64,
    pub t: usize,
    pub n: usize,
    pub concurrency: usize,
    pub sharing_ms: f64,
    pub reconstruction_ms: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TimingError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("client {client} failed: {source}")]
    Client { client: usize, source: ClientError },
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Batches run at each level; the reported latency is the median batch mean.
pub const REPEATS: usize = 3;

/// Size of the unrecorded batch that precedes measurement.
const WARMUP_CLIENTS: usize = 5;

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// `level` clients sign up together, then log in together. Returns each
/// client's (sign-up, login) latency in milliseconds.
fn batch(world: &World, round: usize, level: usize) -> Result<Vec<(f64, f64)>, TimingError> {
    let barrier = Barrier::new(level);
    let samples: Vec<Result<(f64, f64), TimingError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..level)
            .map(|i| {
                let barrier = &barrier;
                scope.spawn(move || {
                    let mut rng = ChaCha20Rng::seed_from_u64(round.wrapping_mul(1000).wrapping_add(i) as u64);
                    let ctx = world.net.ctx_for(NodeId::Client(i as u32));
                    let user = format!("timing-{round}-{i}");
                    let fail = |source| TimingError::Client { client: i, source };
                    barrier.wait();
                    let start = Instant::now();
                    let state = signup(&ctx, &user, "timing-password", &world.params, &mut rng).map_err(fail)?;
                    let sharing = start.elapsed().as_secs_f64() * 1e3;
                    barrier.wait();
                    let start = Instant::now();
                    login(&ctx, &state, "timing-password", &world.params, &mut rng).map_err(fail)?;
                    Ok((sharing, start.elapsed().as_secs_f64() * 1e3))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("timing thread panicked")).collect()
    });
    samples.into_iter().collect()
}

/// After a warm-up batch, runs `REPEATS` batches per concurrency level.
pub fn timing_profile(t: usize, n: usize, p_bits: u64, levels: &[usize]) -> Result<Vec<TimingRow>, TimingError> {
    let mut scenario = Scenario::new(t, n, FaultPlan::honest(0), Vec::new());
    scenario.p_bits = p_bits;
    scenario.budget = usize::MAX;
    let world = World::build(&scenario, SimClock::Wall(Arc::new(SystemClock)), false)?;
    let mut rows = Vec::new();
    batch(&world, usize::MAX, WARMUP_CLIENTS)?;
    for (idx, &level) in levels.iter().enumerate() {
        let mut sharing = Vec::with_capacity(REPEATS);
        let mut reconstruction = Vec::with_capacity(REPEATS);
        for rep in 0..REPEATS {
            let samples = batch(&world, idx * REPEATS + rep, level)?;
            sharing.push(mean(&samples.iter().map(|s| s.0).collect::<Vec<_>>()));
            reconstruction.push(mean(&samples.iter().map(|s| s.1).collect::<Vec<_>>()));
        }
        rows.push(TimingRow {
            p_bits,
            t,
            n,
            concurrency: level,
            sharing_ms: median(&mut sharing),
            reconstruction_ms: median(&mut reconstruction),
        });
    }
    Ok(rows)
}

/// Mean of both phases over every level of a profile.
pub fn overall_mean(rows: &[TimingRow]) -> f64 {
    mean(&rows.iter().map(|r| (r.sharing_ms + r.reconstruction_ms) / 2.0).collect::<Vec<_>>())
}

pub fn to_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("p_bits,t,n,concurrency,sharing_ms,reconstruction_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.3},{:.3}\n",
            r.p_bits, r.t, r.n, r.concurrency, r.sharing_ms, r.reconstruction_ms
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_profile_has_a_row_per_level() {
        let rows = timing_profile(2, 3, 96, &[1, 3]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.sharing_ms > 0.0 && r.reconstruction_ms > 0.0));
        let csv = to_csv(&rows);
        assert!(csv.starts_with("p_bits,t,n,concurrency"));
        assert_eq!(csv.lines().count(), 3);
    }
}
