use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sharepass_core::group::generate_params;
use sharepass_core::protocol::NodeId;
use sharepass_node::{bind, serve, NodeConfig, Role, RunningNode};

const PASSWORD: &str = "violet-harbor-engine-77";

struct Deployment {
    dir: tempfile::TempDir,
    dealer: String,
    service: String,
    _nodes: Vec<RunningNode>,
}

impl Deployment {
    fn start() -> Deployment {
        let (t, n) = (2, 3);
        let dir = tempfile::tempdir().unwrap();
        let params = generate_params(96, 64, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        let params_path = dir.path().join("params.toml");
        params.save(&params_path).unwrap();
        let mut ids = vec![NodeId::Dealer, NodeId::Service];
        ids.extend((0..n as u16).map(NodeId::Shareholder));
        let listeners: Vec<_> = ids.iter().map(|_| bind("127.0.0.1:0").unwrap()).collect();
        let addrs: Vec<String> = listeners.iter().map(|l| l.local_addr().unwrap().to_string()).collect();
        let mut nodes = Vec::new();
        for ((id, listener), addr) in ids.iter().zip(listeners).zip(&addrs) {
            let (role, index) = match id {
                NodeId::Dealer => (Role::Dealer, None),
                NodeId::Service => (Role::Service, None),
                NodeId::Shareholder(i) => (Role::Shareholder, Some(*i)),
                _ => unreachable!(),
            };
            let cfg = NodeConfig {
                role,
                listen: addr.clone(),
                index,
                params: params_path.clone(),
                t,
                n,
                store: dir.path().join(format!("{id}.store")),
                log_sink: None,
                log_fallback: Some(dir.path().join(format!("{id}.log"))),
                dealer: addrs[0].clone(),
                service: addrs[1].clone(),
                shareholders: addrs[2..].to_vec(),
                share_service_keys: false,
                deadline_ms: 2_000,
            };
            nodes.push(serve(listener, &cfg, params.clone(), None).unwrap());
        }
        Deployment { dealer: addrs[0].clone(), service: addrs[1].clone(), dir, _nodes: nodes }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn session(&self, cmd: &str, user: &str, state: &Path, password: &str) -> Output {
        Command::new(env!("CARGO_BIN_EXE_sharepass"))
            .arg(cmd)
            .args(["--dealer", &self.dealer, "--service", &self.service, "--username", user])
            .arg("--params")
            .arg(self.path("params.toml"))
            .arg("--state")
            .arg(state)
            .args(["--password-env", "SHAREPASS_TEST_PASSWORD"])
            .env("SHAREPASS_TEST_PASSWORD", password)
            .output()
            .unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_sharepass")).args(args).output().unwrap()
    }

    /// Every file any node or the client wrote.
    fn all_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(self.dir.path()).unwrap() {
            out.extend(std::fs::read(e.unwrap().path()).unwrap());
        }
        out
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn abscissae(path: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    assert_eq!(v["format_version"], 1);
    v["state"]["abscissae"].clone()
}

#[test]
fn signup_login_rotation_and_wrong_password() {
    let d = Deployment::start();
    let state = d.path("alice.json");
    let o = d.session("signup", "alice", &state, PASSWORD);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(abscissae(&state).as_array().unwrap().len(), 3);
    let mode = std::fs::metadata(&state).unwrap().permissions().mode();
    assert_eq!(mode & 0o077, 0, "state readable by others: {mode:o}");

    let before = std::fs::read(&state).unwrap();
    let o = d.session("login", "alice", &state, PASSWORD);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!String::from_utf8_lossy(&o.stdout).trim().is_empty());
    let rotated = std::fs::read(&state).unwrap();
    assert_ne!(before, rotated);

    let o = d.session("login", "alice", &state, "not-the-password");
    assert_eq!(code(&o), 18, "{}", stderr(&o));
    assert_eq!(std::fs::read(&state).unwrap(), rotated, "failed login changed the state");
    assert_eq!(code(&d.session("login", "alice", &state, PASSWORD)), 0);

    assert!(!d.all_bytes().windows(PASSWORD.len()).any(|w| w == PASSWORD.as_bytes()));
}

#[test]
fn duplicate_signup_and_missing_state() {
    let d = Deployment::start();
    let first = d.path("bob.json");
    assert_eq!(code(&d.session("signup", "bob", &first, PASSWORD)), 0);
    let second = d.path("bob-again.json");
    let o = d.session("signup", "bob", &second, PASSWORD);
    assert_eq!(code(&o), 11, "{}", stderr(&o));
    assert!(stderr(&o).contains("COD100"));
    assert!(!second.exists(), "failed sign-up left a state file");

    let o = d.session("signup", "carol", &first, PASSWORD);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("already exists"));

    let o = d.session("login", "nobody", &d.path("none.json"), PASSWORD);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no credential state"));
}

#[test]
fn stolen_state_without_password_is_useless() {
    let d = Deployment::start();
    let state = d.path("dave.json");
    assert_eq!(code(&d.session("signup", "dave", &state, PASSWORD)), 0);
    let stolen = d.path("stolen.json");
    std::fs::copy(&state, &stolen).unwrap();
    for guess in ["password", "violet-harbor-engine-78", "dave"] {
        let o = d.session("login", "dave", &stolen, guess);
        assert_ne!(code(&o), 0);
        assert!(String::from_utf8_lossy(&o.stdout).trim().is_empty());
    }
    assert_eq!(code(&d.session("login", "dave", &state, PASSWORD)), 0);
}

#[test]
fn export_move_then_import_elsewhere() {
    let d = Deployment::start();
    let state = d.path("erin.json");
    assert_eq!(code(&d.session("signup", "erin", &state, PASSWORD)), 0);
    let blob = d.path("usb-blob.json");
    let o = d.run(&["export-state", "--state", state.to_str().unwrap(), "--out", blob.to_str().unwrap(), "--move"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!state.exists());

    let elsewhere = d.path("laptop.json");
    let o = d.run(&["import-state", "--state", elsewhere.to_str().unwrap(), "--in", blob.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&d.session("login", "erin", &elsewhere, PASSWORD)), 0);

    let bytes = std::fs::read(&blob).unwrap();
    let truncated = d.path("truncated.json");
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    let target = d.path("other.json");
    let o = d.run(&["import-state", "--state", target.to_str().unwrap(), "--in", truncated.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("invalid credential state"));
    assert!(!target.exists());
}

#[test]
fn locked_state_and_usage_errors() {
    let d = Deployment::start();
    let state = d.path("frank.json");
    assert_eq!(code(&d.session("signup", "frank", &state, PASSWORD)), 0);
    std::fs::write(d.path("frank.json.lock"), b"").unwrap();
    let o = d.session("login", "frank", &state, PASSWORD);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("locked"));
    std::fs::remove_file(d.path("frank.json.lock")).unwrap();
    assert_eq!(code(&d.session("login", "frank", &state, PASSWORD)), 0);

    assert_eq!(code(&d.run(&[])), 2);
    assert_eq!(code(&d.run(&["login", "--state", "x"])), 2);
}
