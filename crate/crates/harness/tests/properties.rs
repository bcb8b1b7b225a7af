use proptest::prelude::*;
use sharepass_core::protocol::NodeId;
use sharepass_harness::audit::small_field_replica;
use sharepass_harness::plan::{login, signup, FaultPlan, NodePlan, Scenario, Strategy};
use sharepass_harness::run_scenario;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn traces_are_a_function_of_plan_and_seed(seed in any::<u64>(), holder in 0u16..5) {
        let plan = FaultPlan::honest(seed).set(NodeId::Shareholder(holder), NodePlan::byzantine(Strategy::TamperTval));
        let mut s = Scenario::new(3, 5, plan, vec![signup("p", "prop-password"), login("p"), login("p")]);
        s.p_bits = 96;
        let a = run_scenario(&s).unwrap();
        let b = run_scenario(&s).unwrap();
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert_eq!(&a.store_digests, &b.store_digests);
        prop_assert!(!a.unauthorized_admission());
    }

    #[test]
    fn sub_threshold_replica_is_uniform(seed in any::<u64>(), t in 2usize..4) {
        let check = small_field_replica(t, t - 1, seed);
        prop_assert!(check.uniform(), "{:?}", check);
    }
}
