use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sharepass_core::group::{generate_params, GroupParams};
use sharepass_core::pedersen::{hash_abscissa, verify_share, DualShare};
use sharepass_core::protocol::client::{login, prepare_login, run_login, signup};
use sharepass_core::protocol::dealer::Dealer;
use sharepass_core::protocol::logging::{session_trace, MemoryLog};
use sharepass_core::protocol::net::VirtualClock;
use sharepass_core::protocol::service::Service;
use sharepass_core::protocol::shareholder::Shareholder;
use sharepass_core::protocol::store::RecordStore;
use sharepass_core::protocol::{
    dispatch, Body, Ctx, Deployment, ErrorCode, Handler, Message, NodeId, Transport, TransportError,
};

struct LocalNet {
    nodes: HashMap<NodeId, Arc<dyn Handler>>,
    log: Arc<MemoryLog>,
    clock: Arc<VirtualClock>,
}

impl Transport for LocalNet {
    fn call(&self, _from: NodeId, to: NodeId, msg: &Message) -> Result<Message, TransportError> {
        let h = self.nodes.get(&to).ok_or(TransportError::Timeout(to))?;
        let ctx = Ctx { net: self, me: to, log: &*self.log, clock: &*self.clock };
        let wire = Message::from_bytes(&msg.to_canonical_bytes()).unwrap();
        dispatch(&**h, &ctx, &wire).ok_or(TransportError::NoReply(to))
    }
}

struct World {
    net: LocalNet,
    dealer: Arc<Dealer>,
    service: Arc<Service>,
    holders: Vec<Arc<Shareholder>>,
    params: GroupParams,
}

impl World {
    fn new(t: usize, n: usize, share_keys: bool) -> World {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let params = generate_params(96, 64, &mut rng).unwrap();
        let dep = Deployment { params: params.clone(), t, n };
        let dealer = Arc::new(Dealer::new(dep.clone(), RecordStore::in_memory(), Some(1)));
        let service = Arc::new(Service::new(dep.clone(), RecordStore::in_memory(), share_keys, Some(2)));
        let holders: Vec<_> =
            (0..n).map(|_| Arc::new(Shareholder::new(params.clone(), RecordStore::in_memory()))).collect();
        let mut nodes: HashMap<NodeId, Arc<dyn Handler>> = HashMap::new();
        nodes.insert(NodeId::Dealer, dealer.clone());
        nodes.insert(NodeId::Service, service.clone());
        for (i, h) in holders.iter().enumerate() {
            nodes.insert(NodeId::Shareholder(i as u16), h.clone());
        }
        let net = LocalNet { nodes, log: Arc::new(MemoryLog::new()), clock: Arc::new(VirtualClock::new(0)) };
        World { net, dealer, service, holders, params }
    }

    fn ctx(&self) -> Ctx<'_> {
        Ctx { net: &self.net, me: NodeId::Client(0), log: &*self.net.log, clock: &*self.net.clock }
    }

    fn down(&mut self, i: u16) {
        self.net.nodes.remove(&NodeId::Shareholder(i));
    }
}

#[test]
fn signup_then_logins_rotate_and_replays_fail() {
    let w = World::new(3, 5, false);
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let ctx = w.ctx();
    let mut state = signup(&ctx, "alice", "correct horse", &w.params, &mut rng).unwrap();
    assert_eq!(state.abscissae.len(), 5);

    // dealer keeps only commitments
    let rec = w.dealer.record("alice").unwrap();
    assert_eq!(rec.commitments.len(), 3);
    for (i, h) in w.holders.iter().enumerate() {
        let r = h.record("alice").unwrap();
        assert_eq!(r.digest, hash_abscissa(&state.abscissae[i]));
        let share = DualShare { x: state.abscissae[i].clone(), s: r.s, t_val: r.t_val };
        assert!(verify_share(&share, &rec.commitments, &w.params));
    }

    for _ in 0..3 {
        let out = login(&ctx, &state, "correct horse", &w.params, &mut rng).unwrap();
        assert!(!out.token.is_empty());
        assert_ne!(out.state.abscissae, state.abscissae);
        let replay = Message::new("replay", "alice", Body::Login(out.request.clone()));
        let reply = ctx.call(NodeId::Dealer, &replay).unwrap();
        assert!(matches!(reply.body, Body::Error { code: Some(ErrorCode::Cod800), .. }), "{reply:?}");
        state = out.state;
    }
    let codes = w.net.log.codes();
    assert!(codes.contains(&ErrorCode::Cod700));
    assert!(codes.iter().all(|c| matches!(c, ErrorCode::Cod700 | ErrorCode::Cod800)));
}

#[test]
fn signup_trace_follows_figure_order() {
    let w = World::new(2, 3, false);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    signup(&w.ctx(), "bob", "pw", &w.params, &mut rng).unwrap();
    let records = w.net.log.records();
    let sid = records[0].session_id.clone();
    assert_eq!(
        session_trace(&records, &sid),
        [
            "signup_mc",
            "store_mc",
            "ack",
            "ack",
            "claim_ms",
            "ms_issued",
            "deal_secret",
            "store_share",
            "commitments",
            "abscissae"
        ]
    );
}

#[test]
fn wrong_password_is_cod860_and_state_still_works() {
    let w = World::new(3, 5, false);
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let ctx = w.ctx();
    let state = signup(&ctx, "carol", "right", &w.params, &mut rng).unwrap();
    let err = login(&ctx, &state, "wrong", &w.params, &mut rng).unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::Cod860));
    login(&ctx, &state, "right", &w.params, &mut rng).unwrap();
}

#[test]
fn duplicate_and_unregistered() {
    let w = World::new(2, 3, false);
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let ctx = w.ctx();
    let state = signup(&ctx, "dave", "pw", &w.params, &mut rng).unwrap();
    let err = signup(&ctx, "dave", "pw", &w.params, &mut rng).unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::Cod100));
    let mut ghost = state.clone();
    ghost.username = "ghost".into();
    let err = login(&ctx, &ghost, "pw", &w.params, &mut rng).unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::Cod600));
}

#[test]
fn fault_bound_at_three_of_five() {
    let mut w = World::new(3, 5, false);
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let state = signup(&w.ctx(), "erin", "pw", &w.params, &mut rng).unwrap();
    w.down(0);
    w.down(1);
    let state = login(&w.ctx(), &state, "pw", &w.params, &mut rng).unwrap().state;
    // the two stale shareholders stay down; rotated shares live on the other three
    let state = login(&w.ctx(), &state, "pw", &w.params, &mut rng).unwrap().state;
    w.down(2);
    let err = login(&w.ctx(), &state, "pw", &w.params, &mut rng).unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::Cod800));
}

#[test]
fn shared_service_key_round_trips() {
    let w = World::new(3, 5, true);
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let ctx = w.ctx();
    let state = signup(&ctx, "frank", "pw", &w.params, &mut rng).unwrap();
    let raw = String::from_utf8(w.service.store().raw_bytes()).unwrap();
    assert!(!raw.contains("\"seed\""));
    for h in &w.holders {
        assert!(h.store().contains("key/service/frank"));
    }
    let out = login(&ctx, &state, "pw", &w.params, &mut rng).unwrap();
    login(&ctx, &out.state, "pw", &w.params, &mut rng).unwrap();
}

#[test]
fn prepared_request_can_be_altered_before_sending() {
    let w = World::new(2, 3, false);
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let ctx = w.ctx();
    let state = signup(&ctx, "gina", "pw", &w.params, &mut rng).unwrap();
    let mut p = prepare_login(&state, "pw", &w.params, &mut rng).unwrap();
    for x in &mut p.request.abscissae {
        *x += 1u32;
    }
    let err = run_login(&ctx, &state, p).unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::Cod800));
}
