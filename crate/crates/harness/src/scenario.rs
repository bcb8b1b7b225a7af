//! Builds a deployment on the simnet, applies a fault plan, runs a client
//! script, and collects everything the assertions need.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sharepass_core::cipher::{sym_encrypt, Ciphertext, SymKey};
use sharepass_core::group::{default_q_bits, generate_params, GroupParams};
use sharepass_core::protocol::client::{prepare_login, run_login, signup, signup_init, ClientError, CredentialState};
use sharepass_core::protocol::dealer::Dealer;
use sharepass_core::protocol::logging::{LogRecord, MemoryLog};
use sharepass_core::protocol::net::VirtualClock;
use sharepass_core::protocol::service::Service;
use sharepass_core::protocol::shareholder::Shareholder;
use sharepass_core::protocol::store::RecordStore;
use sharepass_core::protocol::{
    ems_plaintext, random_id, Body, Deployment, ErrorCode, LoginRequest, Message, NodeId, Phase, Transport,
    TransportError,
};

use crate::plan::{Action, Behavior, FaultPlan, PlanError, ReportLie, Scenario, Strategy};
use crate::simnet::{Interceptor, SimClock, Simnet, TraceEntry};

/// Group parameters for a modulus size, generated once per process from a
/// fixed seed so every run at that size uses the same group.
pub fn params_for(p_bits: u64) -> GroupParams {
    static CACHE: OnceLock<Mutex<HashMap<u64, GroupParams>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Mutex::default);
    if let Some(p) = cache.lock().unwrap().get(&p_bits) {
        return p.clone();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_0000 + p_bits);
    let params = generate_params(p_bits, default_q_bits(p_bits), &mut rng).expect("parameter generation");
    cache.lock().unwrap().insert(p_bits, params.clone());
    params
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Fatal { code: Option<ErrorCode>, detail: String },
    Hang,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub action: String,
    /// The request was accepted (for probes, acceptance is the failure).
    pub ok: bool,
    pub code: Option<ErrorCode>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedToken {
    pub user: String,
    pub client: u32,
    pub token: String,
    /// Whether the client that obtained it used the registered password.
    pub knew_password: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioResult {
    pub outcome: Outcome,
    pub steps: Vec<StepResult>,
    pub errors: Vec<LogRecord>,
    pub tokens: Vec<IssuedToken>,
    /// Shareholders currently refusing to answer for a user.
    pub lockouts: Vec<(NodeId, String)>,
    pub store_digests: BTreeMap<NodeId, String>,
    pub trace_digest: String,
    pub messages: usize,
    #[serde(skip)]
    pub records: Vec<LogRecord>,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
    /// Byte strings seen by each passive observer: traffic and its own store.
    #[serde(skip)]
    pub observations: BTreeMap<NodeId, Vec<Vec<u8>>>,
    /// Raw bytes of every store.
    #[serde(skip)]
    pub stores: BTreeMap<NodeId, Vec<u8>>,
}

impl ScenarioResult {
    pub fn codes(&self) -> Vec<ErrorCode> {
        self.errors.iter().filter_map(|r| r.code).collect()
    }

    pub fn raised(&self, code: ErrorCode) -> bool {
        self.errors.iter().any(|r| r.code == Some(code))
    }

    /// A token issued to a client that did not know the password.
    pub fn unauthorized_admission(&self) -> bool {
        self.tokens.iter().any(|t| !t.knew_password)
    }
}

/// Applies byzantine strategies to simnet traffic.
struct PlanInterceptor {
    plan: FaultPlan,
    phase: Mutex<Phase>,
    q: BigUint,
    service: Arc<Service>,
    rng: Mutex<ChaCha20Rng>,
}

impl PlanInterceptor {
    fn active(&self, node: NodeId) -> Option<Strategy> {
        let plan = self.plan.node(node);
        let Behavior::Byzantine(s) = plan.behavior else {
            return None;
        };
        match plan.activation {
            Some(p) if p != *self.phase.lock().unwrap() => None,
            _ => Some(s),
        }
    }

    fn bump(&self, v: &BigUint) -> BigUint {
        (v + 1u32) % &self.q
    }

    fn random_key(&self) -> SymKey {
        let mut b = [0u8; 32];
        self.rng.lock().unwrap().fill_bytes(&mut b);
        SymKey(b)
    }

    fn encrypt(&self, key: &SymKey, plain: &[u8]) -> Ciphertext {
        sym_encrypt(key, plain, &mut *self.rng.lock().unwrap()).expect("seeded rng never fails")
    }
}

impl Interceptor for PlanInterceptor {
    fn outgoing(&self, from: NodeId, to: NodeId, mut msg: Message) -> Message {
        let Some(strategy) = self.active(from) else {
            return msg;
        };
        match (strategy, &mut msg.body) {
            (Strategy::WrongAbscissaProbe, Body::ReleaseShare { x }) if to == NodeId::Shareholder(0) => {
                *x = self.bump(x);
            }
            (Strategy::InconsistentDealing, Body::StoreShare { s, .. }) if to == NodeId::Shareholder(0) => {
                *s = self.bump(s);
            }
            (Strategy::ForgeEms, Body::ForwardEms { ems }) => {
                let forged = ems_plaintext(&self.random_key(), &BigUint::from(1u8));
                *ems = self.encrypt(&self.random_key(), &forged);
            }
            (Strategy::LieInReport(lie), Body::Report(rep)) => match lie {
                ReportLie::KPrime => rep.k_prime = self.random_key(),
                ReportLie::Blinding => rep.blinding += 1u32,
                ReportLie::NextMc => {
                    if let Some(b) = rep.mc_prime.0.last_mut() {
                        *b ^= 0x01;
                    }
                }
            },
            _ => {}
        }
        msg
    }

    fn response(&self, node: NodeId, req: &Message, resp: Option<Message>) -> Option<Message> {
        let (Some(strategy), Some(mut resp)) = (self.active(node), resp.clone()) else {
            return resp;
        };
        match (strategy, &mut resp.body) {
            (Strategy::TamperShare, Body::Share { s, .. }) => *s = self.bump(s),
            (Strategy::TamperTval, Body::Share { t_val, .. }) => *t_val = self.bump(t_val),
            (Strategy::WrongKprime, Body::KeyEnvelope { envelope }) => {
                if let Some(ms) = self.service.record(&req.username).and_then(|r| r.ms) {
                    let wrong = self.random_key();
                    *envelope = self.encrypt(&SymKey::derive_from_ciphertext(&ms), wrong.as_bytes());
                }
            }
            _ => {}
        }
        Some(resp)
    }
}

struct UserSlot {
    password: String,
    state: Option<CredentialState>,
    last_request: Option<LoginRequest>,
}

/// A full deployment on one simnet.
pub struct World {
    pub net: Arc<Simnet>,
    pub dealer: Arc<Dealer>,
    pub service: Arc<Service>,
    pub holders: Vec<Arc<Shareholder>>,
    pub params: GroupParams,
    pub t: usize,
    pub n: usize,
    plan: FaultPlan,
    interceptor: Arc<PlanInterceptor>,
    rng: ChaCha20Rng,
    users: BTreeMap<String, UserSlot>,
    tokens: Vec<IssuedToken>,
}

impl World {
    pub fn build(scenario: &Scenario, clock: SimClock, capture: bool) -> Result<World, PlanError> {
        scenario.validate()?;
        let params = params_for(scenario.p_bits);
        let (t, n) = (scenario.t, scenario.n);
        let seed = scenario.plan.seed;
        let dep = Deployment { params: params.clone(), t, n };
        let log = Arc::new(MemoryLog::new());
        let net = Arc::new(Simnet::new(clock, log, capture, scenario.budget));
        let dealer = Arc::new(Dealer::new(dep.clone(), RecordStore::in_memory(), Some(seed.wrapping_mul(7) + 1)));
        let service = Arc::new(Service::new(
            dep,
            RecordStore::in_memory(),
            scenario.share_service_keys,
            Some(seed.wrapping_mul(7) + 2),
        ));
        let holders: Vec<_> =
            (0..n).map(|_| Arc::new(Shareholder::new(params.clone(), RecordStore::in_memory()))).collect();
        net.add_node(NodeId::Dealer, dealer.clone());
        net.add_node(NodeId::Service, service.clone());
        for (i, h) in holders.iter().enumerate() {
            net.add_node(NodeId::Shareholder(i as u16), h.clone());
        }
        for (&id, p) in &scenario.plan.nodes {
            if p.behavior == Behavior::Down {
                net.set_down(id, true);
            }
        }
        let interceptor = Arc::new(PlanInterceptor {
            plan: scenario.plan.clone(),
            phase: Mutex::new(Phase::Control),
            q: params.q.clone(),
            service: service.clone(),
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed.wrapping_mul(7) + 3)),
        });
        net.set_interceptor(interceptor.clone());
        Ok(World {
            net,
            dealer,
            service,
            holders,
            params,
            t,
            n,
            plan: scenario.plan.clone(),
            interceptor,
            rng: ChaCha20Rng::seed_from_u64(seed.wrapping_mul(7) + 4),
            users: BTreeMap::new(),
            tokens: Vec::new(),
        })
    }

    /// Virtual-clock world for logic scenarios.
    pub fn virtual_time(scenario: &Scenario) -> Result<World, PlanError> {
        World::build(scenario, SimClock::Virtual(Arc::new(VirtualClock::new(1_000))), true)
    }

    fn client_strategy(&self, client: u32) -> Option<Strategy> {
        self.interceptor.active(NodeId::Client(client)).or(None)
    }

    pub fn last_request(&self, user: &str) -> Option<&LoginRequest> {
        self.users.get(user).and_then(|u| u.last_request.as_ref())
    }

    pub fn state(&self, user: &str) -> Option<&CredentialState> {
        self.users.get(user).and_then(|u| u.state.as_ref())
    }

    fn step_err(action: &str, e: &ClientError) -> StepResult {
        StepResult { action: action.into(), ok: false, code: e.code(), detail: e.to_string() }
    }

    fn step_ok(action: &str, detail: impl Into<String>) -> StepResult {
        StepResult { action: action.into(), ok: true, code: None, detail: detail.into() }
    }

    fn reply_step(action: &str, reply: Result<Message, TransportError>, accepted: &str) -> StepResult {
        match reply {
            Ok(Message { body: Body::Error { code, detail }, .. }) => {
                StepResult { action: action.into(), ok: false, code, detail }
            }
            Ok(m) if m.kind() == accepted => Self::step_ok(action, format!("{accepted} accepted")),
            Ok(m) => StepResult { action: action.into(), ok: false, code: None, detail: m.kind().into() },
            Err(e) => StepResult { action: action.into(), ok: false, code: None, detail: e.to_string() },
        }
    }

    pub fn run_action(&mut self, action: &Action) -> StepResult {
        *self.interceptor.phase.lock().unwrap() = action.phase();
        let name = action_name(action);
        match action {
            Action::Signup { user, password, client } => {
                let ctx = self.net.ctx_for(NodeId::Client(*client));
                match signup(&ctx, user, password, &self.params, &mut self.rng) {
                    Ok(state) => {
                        let n = state.abscissae.len();
                        self.users.insert(
                            user.clone(),
                            UserSlot { password: password.clone(), state: Some(state), last_request: None },
                        );
                        Self::step_ok(name, format!("{n} abscissae"))
                    }
                    Err(e) => Self::step_err(name, &e),
                }
            }
            Action::Login { user, password, client } => self.login(name, user, password.as_deref(), *client),
            Action::ReplayLastLogin { user } => {
                let Some(req) = self.last_request(user).cloned() else {
                    return StepResult { action: name.into(), ok: false, code: None, detail: "nothing to replay".into() };
                };
                let msg = Message::new(random_id(&mut self.rng), user, Body::Login(req));
                let reply = self.net.call(NodeId::Client(0), NodeId::Dealer, &msg);
                Self::reply_step(name, reply, "abscissae")
            }
            Action::EarlyClaim { user, password } => {
                let init = match signup_init(password, &self.params, &mut self.rng) {
                    Ok(i) => i,
                    Err(e) => return Self::step_err(name, &e),
                };
                let msg = Message::new(random_id(&mut self.rng), user, Body::ClaimMs { mc: init.mc });
                let reply = self.net.call(NodeId::Client(0), NodeId::Service, &msg);
                Self::reply_step(name, reply, "ms_issued")
            }
            Action::SignupMismatchedMc { user, password } => {
                let (a, b) = match (
                    signup_init(password, &self.params, &mut self.rng),
                    signup_init(password, &self.params, &mut self.rng),
                ) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => return Self::step_err(name, &e),
                };
                let sid = random_id(&mut self.rng);
                let first = Message::new(sid.clone(), user, Body::SignupMc { mc: a.mc });
                match self.net.call(NodeId::Client(0), NodeId::Dealer, &first) {
                    Ok(Message { body: Body::Ack, .. }) => {}
                    other => return Self::reply_step(name, other, "ack"),
                }
                let claim = Message::new(sid, user, Body::ClaimMs { mc: b.mc });
                let reply = self.net.call(NodeId::Client(0), NodeId::Service, &claim);
                Self::reply_step(name, reply, "ms_issued")
            }
            Action::LoginUnregistered { user, password } => {
                let init = match signup_init(password, &self.params, &mut self.rng) {
                    Ok(i) => i,
                    Err(e) => return Self::step_err(name, &e),
                };
                let abscissae = (1..=self.n as u32).map(BigUint::from).collect();
                let state = CredentialState {
                    username: user.clone(),
                    r: init.r,
                    r_prime: init.r_prime,
                    k: init.k,
                    mc: init.mc.clone(),
                    ms: init.mc,
                    abscissae,
                };
                let ctx = self.net.ctx_for(NodeId::Client(0));
                match prepare_login(&state, password, &self.params, &mut self.rng)
                    .and_then(|p| run_login(&ctx, &state, p))
                {
                    Ok(_) => Self::step_ok(name, "admitted"),
                    Err(e) => Self::step_err(name, &e),
                }
            }
            Action::DealerForget { user } => {
                self.dealer.forget(user);
                Self::step_ok(name, "dealer record dropped")
            }
            Action::DealerProbe { user, attempts } => self.probe(name, user, *attempts),
            Action::AdvanceTime { ms } => {
                self.net.advance(*ms);
                Self::step_ok(name, format!("+{ms} ms"))
            }
            Action::SetDown { node, down } => {
                self.net.set_down(*node, *down);
                Self::step_ok(name, format!("{node} down={down}"))
            }
        }
    }

    fn login(&mut self, name: &str, user: &str, password: Option<&str>, client: u32) -> StepResult {
        let Some(slot) = self.users.get(user) else {
            return StepResult { action: name.into(), ok: false, code: None, detail: "no local state".into() };
        };
        let Some(state) = slot.state.clone() else {
            return StepResult { action: name.into(), ok: false, code: None, detail: "no local state".into() };
        };
        let registered = slot.password.clone();
        let strategy = self.client_strategy(client);
        let mut password = password.unwrap_or(&registered).to_string();
        if strategy == Some(Strategy::WrongPasswordClient) {
            password.push_str("-guess");
        }
        let knew_password = password == registered;
        let mut prepared = match prepare_login(&state, &password, &self.params, &mut self.rng) {
            Ok(p) => p,
            Err(e) => return Self::step_err(name, &e),
        };
        if strategy == Some(Strategy::WrongCoordinatesClient) {
            for x in &mut prepared.request.abscissae {
                *x = (&*x % (&self.params.q - 1u32)) + 1u32;
                *x = (&*x % (&self.params.q - 1u32)) + 1u32;
            }
        }
        let ctx = self.net.ctx_for(NodeId::Client(client));
        match run_login(&ctx, &state, prepared) {
            Ok(out) => {
                self.tokens.push(IssuedToken { user: user.into(), client, token: out.token.clone(), knew_password });
                let slot = self.users.get_mut(user).expect("slot exists");
                slot.state = Some(out.state);
                slot.last_request = Some(out.request);
                Self::step_ok(name, "session opened")
            }
            Err(e) => Self::step_err(name, &e),
        }
    }

    fn probe(&mut self, name: &str, user: &str, attempts: u32) -> StepResult {
        if self.plan.strategy(NodeId::Dealer) != Some(Strategy::LoopingRequests) {
            return StepResult { action: name.into(), ok: false, code: None, detail: "dealer is not probing".into() };
        }
        let (mut mismatches, mut silences, mut released) = (0, 0, 0);
        for _ in 0..attempts {
            for i in 0..self.n {
                let guess = BigUint::from(self.rng.next_u64()) % &self.params.q + 1u32;
                let msg = Message::new(random_id(&mut self.rng), user, Body::ReleaseShare { x: guess });
                match self.net.call(NodeId::Dealer, NodeId::Shareholder(i as u16), &msg) {
                    Ok(Message { body: Body::Error { code: Some(ErrorCode::Cod700), .. }, .. }) => mismatches += 1,
                    Ok(Message { body: Body::Share { .. }, .. }) => released += 1,
                    Err(TransportError::NoReply(_)) => silences += 1,
                    _ => {}
                }
            }
        }
        StepResult {
            action: name.into(),
            ok: released == 0,
            code: (mismatches > 0).then_some(ErrorCode::Cod700),
            detail: format!("{mismatches} mismatches, {silences} silences, {released} released"),
        }
    }

    pub fn finish(self, steps: Vec<StepResult>, hung: bool) -> ScenarioResult {
        let records = self.net.log().records();
        let errors: Vec<LogRecord> = records.iter().filter(|r| r.code.is_some()).cloned().collect();
        let outcome = if hung {
            Outcome::Hang
        } else {
            steps
                .iter()
                .find(|s| !s.ok)
                .map(|s| Outcome::Fatal { code: s.code, detail: s.detail.clone() })
                .unwrap_or(Outcome::Success)
        };
        let mut stores = BTreeMap::new();
        let mut store_digests = BTreeMap::new();
        stores.insert(NodeId::Dealer, self.dealer.store().raw_bytes());
        store_digests.insert(NodeId::Dealer, hex::encode(self.dealer.store().digest()));
        stores.insert(NodeId::Service, self.service.store().raw_bytes());
        store_digests.insert(NodeId::Service, hex::encode(self.service.store().digest()));
        for (i, h) in self.holders.iter().enumerate() {
            stores.insert(NodeId::Shareholder(i as u16), h.store().raw_bytes());
            store_digests.insert(NodeId::Shareholder(i as u16), hex::encode(h.store().digest()));
        }
        let trace = self.net.trace();
        let mut hasher = Sha256::new();
        for e in &trace {
            hasher.update(e.bytes.len().to_be_bytes());
            hasher.update(&e.bytes);
        }
        let mut observations = BTreeMap::new();
        for (&id, p) in &self.plan.nodes {
            if p.behavior != Behavior::PassiveObserver {
                continue;
            }
            let mut seen: Vec<Vec<u8>> =
                trace.iter().filter(|e| e.from == id || e.to == id).map(|e| e.bytes.clone()).collect();
            if let Some(bytes) = stores.get(&id) {
                seen.push(bytes.clone());
            }
            observations.insert(id, seen);
        }
        let now = self.net.clock().now_ms();
        let mut lockouts = Vec::new();
        for (i, h) in self.holders.iter().enumerate() {
            for user in self.users.keys().chain(steps_users(&records).iter()) {
                if h.is_silent(user, now) && !lockouts.contains(&(NodeId::Shareholder(i as u16), user.clone())) {
                    lockouts.push((NodeId::Shareholder(i as u16), user.clone()));
                }
            }
        }
        ScenarioResult {
            outcome,
            steps,
            errors,
            tokens: self.tokens,
            lockouts,
            store_digests,
            trace_digest: hex::encode(hasher.finalize()),
            messages: self.net.messages_sent(),
            records,
            trace,
            observations,
            stores,
        }
    }
}

fn steps_users(records: &[LogRecord]) -> Vec<String> {
    let mut users: Vec<String> = records.iter().map(|r| r.username.clone()).collect();
    users.sort();
    users.dedup();
    users
}

pub fn action_name(a: &Action) -> &'static str {
    match a {
        Action::Signup { .. } => "signup",
        Action::Login { .. } => "login",
        Action::ReplayLastLogin { .. } => "replay-last-login",
        Action::EarlyClaim { .. } => "early-claim",
        Action::SignupMismatchedMc { .. } => "signup-mismatched-mc",
        Action::LoginUnregistered { .. } => "login-unregistered",
        Action::DealerForget { .. } => "dealer-forget",
        Action::DealerProbe { .. } => "dealer-probe",
        Action::AdvanceTime { .. } => "advance-time",
        Action::SetDown { .. } => "set-down",
    }
}

/// Runs a scenario in virtual time.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult, PlanError> {
    let mut world = World::virtual_time(scenario)?;
    let mut steps = Vec::new();
    let mut hung = false;
    for action in &scenario.script {
        let step = world.run_action(action);
        let budget_hit = step.detail.contains(&TransportError::Budget.to_string());
        steps.push(step);
        if budget_hit {
            hung = true;
            break;
        }
    }
    Ok(world.finish(steps, hung))
}
