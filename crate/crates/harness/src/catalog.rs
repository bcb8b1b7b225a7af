//! Named scenarios that provoke each error code.

use sharepass_core::protocol::{classify_error, ErrorCode, NodeId};

use crate::plan::{login, signup, Action, Behavior, FaultPlan, NodePlan, ReportLie, Scenario, Strategy};
use crate::scenario::ScenarioResult;

const USER: &str = "mallory-target";
const PASSWORD: &str = "orange-kettle-window-42";

fn byz(node: NodeId, s: Strategy) -> FaultPlan {
    FaultPlan::honest(node_seed(node)).set(node, NodePlan::byzantine(s))
}

fn node_seed(node: NodeId) -> u64 {
    match node {
        NodeId::Client(i) => 100 + i as u64,
        NodeId::Dealer => 1,
        NodeId::Shareholder(i) => 10 + i as u64,
        NodeId::Service => 2,
        NodeId::Logger => 3,
    }
}

fn signup_login() -> Vec<Action> {
    vec![signup(USER, PASSWORD), login(USER)]
}

/// A (3,5) scenario for `code`.
pub fn scenario_for(code: ErrorCode) -> Scenario {
    let user = || USER.to_string();
    let pw = || PASSWORD.to_string();
    let (plan, script) = match code {
        ErrorCode::Cod100 => (FaultPlan::honest(0), vec![signup(USER, PASSWORD), signup(USER, PASSWORD)]),
        ErrorCode::Cod150 => (
            FaultPlan::honest(0),
            vec![signup(USER, PASSWORD), Action::DealerForget { user: user() }, signup(USER, PASSWORD)],
        ),
        ErrorCode::Cod170 => (FaultPlan::honest(0), vec![Action::EarlyClaim { user: user(), password: pw() }]),
        ErrorCode::Cod400 => {
            (FaultPlan::honest(0), vec![Action::SignupMismatchedMc { user: user(), password: pw() }])
        }
        ErrorCode::Cod600 => {
            (FaultPlan::honest(0), vec![Action::LoginUnregistered { user: user(), password: pw() }])
        }
        ErrorCode::Cod700 => (byz(NodeId::Dealer, Strategy::WrongAbscissaProbe), signup_login()),
        ErrorCode::Cod750 => (byz(NodeId::Dealer, Strategy::InconsistentDealing), signup_login()),
        ErrorCode::Cod800 => {
            let mut script = vec![signup(USER, PASSWORD)];
            script.extend((0..3).map(|i| Action::SetDown { node: NodeId::Shareholder(i), down: true }));
            script.push(login(USER));
            (FaultPlan::honest(0), script)
        }
        ErrorCode::Cod830 => (byz(NodeId::Shareholder(1), Strategy::TamperShare), signup_login()),
        ErrorCode::Cod850 => {
            let plan = (0..3).fold(FaultPlan::honest(0), |p, i| {
                let s = if i == 1 { Strategy::TamperTval } else { Strategy::TamperShare };
                p.set(NodeId::Shareholder(i), NodePlan::byzantine(s))
            });
            (plan, signup_login())
        }
        ErrorCode::Cod860 => (byz(NodeId::Client(0), Strategy::WrongPasswordClient), signup_login()),
        ErrorCode::Cod900 => (byz(NodeId::Dealer, Strategy::ForgeEms), signup_login()),
        ErrorCode::Cod950 => (byz(NodeId::Service, Strategy::WrongKprime), signup_login()),
        ErrorCode::Cod2000 => (byz(NodeId::Service, Strategy::LieInReport(ReportLie::KPrime)), signup_login()),
        ErrorCode::Cod2400 => {
            (byz(NodeId::Service, Strategy::LieInReport(ReportLie::Blinding)), signup_login())
        }
        ErrorCode::Cod2600 => (byz(NodeId::Service, Strategy::LieInReport(ReportLie::NextMc)), signup_login()),
    };
    Scenario::new(3, 5, plan, script)
}

/// A dealer probing shareholders with guessed abscissae until they lock it
/// out, then a login during and after the cooling-off period.
pub fn probing_dealer() -> Scenario {
    let plan = byz(NodeId::Dealer, Strategy::LoopingRequests);
    let script = vec![
        signup(USER, PASSWORD),
        Action::DealerProbe { user: USER.into(), attempts: 4 },
        login(USER),
        Action::AdvanceTime { ms: 61_000 },
        login(USER),
    ];
    Scenario::new(3, 5, plan, script)
}

/// Passive observers watching a sign-up and two logins.
pub fn passive(observers: &[NodeId]) -> Scenario {
    let plan = observers
        .iter()
        .fold(FaultPlan::honest(5), |p, &id| p.set(id, NodePlan::with(Behavior::PassiveObserver)));
    Scenario::new(3, 5, plan, vec![signup(USER, PASSWORD), login(USER), login(USER)])
}

pub fn audited_password() -> &'static str {
    PASSWORD
}

/// The code is raised, and it ends a step exactly when it is fatal.
pub fn classified_as_expected(code: ErrorCode, result: &ScenarioResult) -> bool {
    if !result.raised(code) {
        return false;
    }
    let ended_a_step = result.steps.iter().any(|s| !s.ok && s.code == Some(code));
    ended_a_step == classify_error(code).is_fatal()
}

/// Every code, in numeric order.
pub const ALL_CODES: [ErrorCode; 16] = [
    ErrorCode::Cod100,
    ErrorCode::Cod150,
    ErrorCode::Cod170,
    ErrorCode::Cod400,
    ErrorCode::Cod600,
    ErrorCode::Cod700,
    ErrorCode::Cod750,
    ErrorCode::Cod800,
    ErrorCode::Cod830,
    ErrorCode::Cod850,
    ErrorCode::Cod860,
    ErrorCode::Cod900,
    ErrorCode::Cod950,
    ErrorCode::Cod2000,
    ErrorCode::Cod2400,
    ErrorCode::Cod2600,
];
