//! Declarative scenario documents: who misbehaves, and what the clients do.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sharepass_core::protocol::{NodeId, Phase};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportLie {
    /// Report a k' that does not open MS.
    KPrime,
    /// Report a blinding that differs from `D_k(MC)`.
    Blinding,
    /// Report an MC' other than the one the client sent.
    NextMc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    TamperShare,
    TamperTval,
    WrongAbscissaProbe,
    InconsistentDealing,
    LoopingRequests,
    ForgeEms,
    WrongKprime,
    LieInReport(ReportLie),
    WrongPasswordClient,
    WrongCoordinatesClient,
}

impl Strategy {
    /// The role able to carry out the strategy.
    pub fn role(self) -> &'static str {
        match self {
            Strategy::TamperShare | Strategy::TamperTval => "shareholder",
            Strategy::WrongAbscissaProbe
            | Strategy::InconsistentDealing
            | Strategy::LoopingRequests
            | Strategy::ForgeEms => "dealer",
            Strategy::WrongKprime | Strategy::LieInReport(_) => "service",
            Strategy::WrongPasswordClient | Strategy::WrongCoordinatesClient => "client",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    #[default]
    Honest,
    Down,
    PassiveObserver,
    Byzantine(Strategy),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePlan {
    #[serde(default)]
    pub behavior: Behavior,
    /// Restricts a byzantine strategy to one phase; any phase when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Phase>,
}

impl NodePlan {
    pub fn byzantine(strategy: Strategy) -> NodePlan {
        NodePlan { behavior: Behavior::Byzantine(strategy), activation: None }
    }

    pub fn with(behavior: Behavior) -> NodePlan {
        NodePlan { behavior, activation: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nodes: BTreeMap<NodeId, NodePlan>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("{strategy:?} needs a {role}, not {node}")]
    WrongRole { node: NodeId, strategy: Strategy, role: &'static str },
    #[error("{0} cannot be down")]
    CannotBeDown(NodeId),
    #[error("{0} is outside the deployment")]
    UnknownNode(NodeId),
    #[error("threshold {t} invalid for {n} shareholders")]
    Threshold { t: usize, n: usize },
}

impl FaultPlan {
    pub fn honest(seed: u64) -> FaultPlan {
        FaultPlan { seed, nodes: BTreeMap::new() }
    }

    pub fn set(mut self, node: NodeId, plan: NodePlan) -> FaultPlan {
        self.nodes.insert(node, plan);
        self
    }

    pub fn node(&self, id: NodeId) -> NodePlan {
        self.nodes.get(&id).copied().unwrap_or_default()
    }

    pub fn strategy(&self, id: NodeId) -> Option<Strategy> {
        match self.node(id).behavior {
            Behavior::Byzantine(s) => Some(s),
            _ => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), PlanError> {
        for (&node, plan) in &self.nodes {
            if let NodeId::Shareholder(i) = node {
                if i as usize >= n {
                    return Err(PlanError::UnknownNode(node));
                }
            }
            match plan.behavior {
                Behavior::Byzantine(strategy) if strategy.role() != node.role() => {
                    return Err(PlanError::WrongRole { node, strategy, role: strategy.role() })
                }
                Behavior::Down if matches!(node, NodeId::Client(_) | NodeId::Logger) => {
                    return Err(PlanError::CannotBeDown(node))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One step of a client script.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    Signup {
        user: String,
        password: String,
        #[serde(default)]
        client: u32,
    },
    /// Logs in with the sign-up password unless one is given.
    Login {
        user: String,
        #[serde(default)]
        password: Option<String>,
        #[serde(default)]
        client: u32,
    },
    /// Resends the user's last successful login request to the dealer.
    ReplayLastLogin { user: String },
    /// Claims MS from the service before any sign-up.
    EarlyClaim { user: String, password: String },
    /// Registers one MC with the dealer and presents another to the service.
    SignupMismatchedMc { user: String, password: String },
    LoginUnregistered { user: String, password: String },
    /// Operator wipes the dealer's record of a user.
    DealerForget { user: String },
    /// A looping dealer asks every shareholder for shares at guessed abscissae.
    DealerProbe { user: String, attempts: u32 },
    AdvanceTime { ms: u64 },
    SetDown { node: NodeId, down: bool },
}

impl Action {
    pub fn phase(&self) -> Phase {
        match self {
            Action::Signup { .. }
            | Action::EarlyClaim { .. }
            | Action::SignupMismatchedMc { .. }
            | Action::DealerForget { .. } => Phase::Sharing,
            Action::Login { .. }
            | Action::ReplayLastLogin { .. }
            | Action::LoginUnregistered { .. }
            | Action::DealerProbe { .. } => Phase::Reconstruction,
            Action::AdvanceTime { .. } | Action::SetDown { .. } => Phase::Control,
        }
    }
}

fn default_p_bits() -> u64 {
    166
}

fn default_budget() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub t: usize,
    pub n: usize,
    #[serde(default = "default_p_bits")]
    pub p_bits: u64,
    /// Split per-user service keys across the shareholders.
    #[serde(default)]
    pub share_service_keys: bool,
    #[serde(default)]
    pub plan: FaultPlan,
    pub script: Vec<Action>,
    /// Messages allowed before the run counts as hung.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

impl Scenario {
    pub fn new(t: usize, n: usize, plan: FaultPlan, script: Vec<Action>) -> Scenario {
        Scenario { t, n, p_bits: default_p_bits(), share_service_keys: false, plan, script, budget: default_budget() }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.t == 0 || self.t > self.n {
            return Err(PlanError::Threshold { t: self.t, n: self.n });
        }
        self.plan.validate(self.n)
    }
}

pub fn signup(user: &str, password: &str) -> Action {
    Action::Signup { user: user.into(), password: password.into(), client: 0 }
}

pub fn login(user: &str) -> Action {
    Action::Login { user: user.into(), password: None, client: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_document_round_trips() {
        let text = r#"{
            "t": 3, "n": 5,
            "plan": {"seed": 4, "nodes": {
                "shareholder-1": {"behavior": {"byzantine": "tamper-share"}},
                "service": {"behavior": {"byzantine": {"lie-in-report": "next-mc"}}, "activation": "reconstruction"},
                "dealer": {"behavior": "passive-observer"},
                "shareholder-4": {"behavior": "down"}
            }},
            "script": [
                {"action": "signup", "user": "a", "password": "pw"},
                {"action": "login", "user": "a"},
                {"action": "set-down", "node": "shareholder-4", "down": false}
            ]
        }"#;
        let s: Scenario = serde_json::from_str(text).unwrap();
        assert_eq!(s.p_bits, 166);
        assert_eq!(s.plan.strategy(NodeId::Shareholder(1)), Some(Strategy::TamperShare));
        assert_eq!(s.plan.node(NodeId::Service).activation, Some(Phase::Reconstruction));
        assert_eq!(s.plan.node(NodeId::Shareholder(4)).behavior, Behavior::Down);
        s.validate().unwrap();
        let again: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn strategies_attach_only_to_capable_roles() {
        let bad = FaultPlan::honest(0).set(NodeId::Shareholder(0), NodePlan::byzantine(Strategy::ForgeEms));
        assert!(matches!(bad.validate(3), Err(PlanError::WrongRole { .. })));
        let bad = FaultPlan::honest(0).set(NodeId::Dealer, NodePlan::byzantine(Strategy::TamperShare));
        assert!(bad.validate(3).is_err());
        let bad = FaultPlan::honest(0).set(NodeId::Shareholder(7), NodePlan::with(Behavior::Down));
        assert_eq!(bad.validate(3), Err(PlanError::UnknownNode(NodeId::Shareholder(7))));
        let ok = FaultPlan::honest(0)
            .set(NodeId::Client(0), NodePlan::byzantine(Strategy::WrongPasswordClient))
            .set(NodeId::Service, NodePlan::byzantine(Strategy::LieInReport(ReportLie::KPrime)));
        ok.validate(3).unwrap();
    }
}
