//! Login availability as shareholders fail.

use serde::Serialize;
use sharepass_core::protocol::NodeId;

use crate::plan::{login, signup, Action, FaultPlan, PlanError, Scenario};
use crate::scenario::{run_scenario, Outcome};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub outcome: Outcome,
}

impl SweepRow {
    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// For each k in `0..=n`, signs up with every shareholder reachable, takes
/// the first k down, then logs in.
pub fn fault_tolerance_sweep(t: usize, n: usize, p_bits: u64, seed: u64) -> Result<Vec<SweepRow>, PlanError> {
    (0..=n)
        .map(|k| {
            let mut script = vec![signup("sweep", "sweep-password")];
            script.extend(
                (0..k).map(|i| Action::SetDown { node: NodeId::Shareholder(i as u16), down: true }),
            );
            script.push(login("sweep"));
            let mut scenario = Scenario::new(t, n, FaultPlan::honest(seed + k as u64), script);
            scenario.p_bits = p_bits;
            let result = run_scenario(&scenario)?;
            Ok(SweepRow { k, outcome: result.outcome })
        })
        .collect()
}

/// Largest k that still succeeded, if the successes form a prefix.
pub fn boundary(rows: &[SweepRow]) -> Option<usize> {
    let last = rows.iter().take_while(|r| r.succeeded()).last()?.k;
    rows.iter().skip(last + 1).all(|r| !r.succeeded()).then_some(last)
}

pub fn to_csv(t: usize, n: usize, rows: &[SweepRow]) -> String {
    let mut out = String::from("t,n,k,outcome,code\n");
    for r in rows {
        let (outcome, code) = match &r.outcome {
            Outcome::Success => ("success", String::new()),
            Outcome::Fatal { code, .. } => ("fatal", code.map(|c| c.to_string()).unwrap_or_default()),
            Outcome::Hang => ("hang", String::new()),
        };
        out.push_str(&format!("{t},{n},{},{outcome},{code}\n", r.k));
    }
    out
}
