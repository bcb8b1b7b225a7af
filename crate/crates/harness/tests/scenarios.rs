use sharepass_core::protocol::{ErrorCode, NodeId};
use sharepass_harness::catalog::{classified_as_expected, probing_dealer, scenario_for, ALL_CODES};
use sharepass_harness::plan::{login, signup, Behavior, FaultPlan, NodePlan, Scenario, Strategy};
use sharepass_harness::{run_scenario, Outcome};

#[test]
fn every_code_has_a_scenario_with_its_classification() {
    for code in ALL_CODES {
        let mut s = scenario_for(code);
        s.p_bits = 96;
        let r = run_scenario(&s).unwrap();
        assert!(classified_as_expected(code, &r), "{code}: {:?} / {:?}", r.steps, r.codes());
    }
}

#[test]
fn honest_run_has_no_errors() {
    let mut s = Scenario::new(3, 5, FaultPlan::honest(1), vec![signup("a", "pw-a"), login("a"), login("a")]);
    s.p_bits = 96;
    let r = run_scenario(&s).unwrap();
    assert_eq!(r.outcome, Outcome::Success);
    assert!(r.errors.is_empty(), "{:?}", r.errors);
    assert_eq!(r.tokens.len(), 2);
}

#[test]
fn probing_dealer_is_locked_out_then_forgiven() {
    let mut s = probing_dealer();
    s.p_bits = 96;
    let r = run_scenario(&s).unwrap();
    let probe = &r.steps[1];
    assert!(probe.ok, "no share released: {probe:?}");
    assert_eq!(probe.code, Some(ErrorCode::Cod700));
    assert!(probe.detail.contains("silences") && !probe.detail.starts_with("0 mismatches"));
    assert_eq!(r.steps[2].code, Some(ErrorCode::Cod800));
    assert!(r.steps[4].ok, "{:?}", r.steps[4]);
    assert!(r.codes().iter().filter(|&&c| c == ErrorCode::Cod700).count() >= 15);
}

#[test]
fn identical_plans_give_identical_traces() {
    let mut s = scenario_for(ErrorCode::Cod830);
    s.p_bits = 96;
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&s).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace_digest, b.trace_digest);
    assert_eq!(a.store_digests, b.store_digests);
    s.plan.seed += 1;
    let c = run_scenario(&s).unwrap();
    assert_ne!(a.trace_digest, c.trace_digest);
}

#[test]
fn no_single_byzantine_actor_admits_an_unauthorized_client() {
    let plans: Vec<(NodeId, Strategy)> = vec![
        (NodeId::Shareholder(0), Strategy::TamperShare),
        (NodeId::Shareholder(2), Strategy::TamperTval),
        (NodeId::Dealer, Strategy::WrongAbscissaProbe),
        (NodeId::Dealer, Strategy::InconsistentDealing),
        (NodeId::Dealer, Strategy::LoopingRequests),
        (NodeId::Dealer, Strategy::ForgeEms),
        (NodeId::Service, Strategy::WrongKprime),
        (NodeId::Service, Strategy::LieInReport(sharepass_harness::ReportLie::KPrime)),
        (NodeId::Service, Strategy::LieInReport(sharepass_harness::ReportLie::Blinding)),
        (NodeId::Service, Strategy::LieInReport(sharepass_harness::ReportLie::NextMc)),
        (NodeId::Client(1), Strategy::WrongPasswordClient),
        (NodeId::Client(1), Strategy::WrongCoordinatesClient),
    ];
    for (node, strategy) in plans {
        let plan = FaultPlan::honest(3).set(node, NodePlan::byzantine(strategy));
        let script = vec![
            signup("u", "pw-u"),
            login("u"),
            sharepass_harness::Action::Login { user: "u".into(), password: None, client: 1 },
            sharepass_harness::Action::Login { user: "u".into(), password: Some("guess".into()), client: 1 },
            login("u"),
        ];
        let mut s = Scenario::new(3, 5, plan, script);
        s.p_bits = 96;
        let r = run_scenario(&s).unwrap();
        assert!(!r.unauthorized_admission(), "{strategy:?}: {:?}", r.tokens);
    }
}

#[test]
fn activation_phase_limits_a_strategy() {
    let plan = FaultPlan::honest(2).set(
        NodeId::Shareholder(0),
        NodePlan { behavior: Behavior::Byzantine(Strategy::TamperShare), activation: Some(sharepass_core::protocol::Phase::Sharing) },
    );
    let mut s = Scenario::new(3, 5, plan, vec![signup("a", "pw"), login("a")]);
    s.p_bits = 96;
    let r = run_scenario(&s).unwrap();
    assert_eq!(r.outcome, Outcome::Success);
    assert!(!r.raised(ErrorCode::Cod830));
}

#[test]
fn budget_exhaustion_is_a_hang() {
    let mut s = Scenario::new(3, 5, FaultPlan::honest(0), vec![signup("a", "pw"), login("a")]);
    s.p_bits = 96;
    s.budget = 12;
    assert_eq!(run_scenario(&s).unwrap().outcome, Outcome::Hang);
}
