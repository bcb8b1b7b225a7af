//! The credential state file: versioned JSON, owner-only permissions,
//! replaced atomically, guarded by a lock file.

use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::os::unix::fs::OpenOptionsExt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sharepass_core::protocol::client::CredentialState;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    format_version: u32,
    state: CredentialState,
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no credential state at {0}")]
    Missing(PathBuf),
    #[error("credential state already exists at {0}")]
    Exists(PathBuf),
    #[error("invalid credential state: {0}")]
    Invalid(String),
    #[error("{0} is locked by another command")]
    Locked(PathBuf),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StateError + '_ {
    move |source| StateError::Io { path: path.into(), source }
}

/// Parses and checks a state document.
pub fn decode(bytes: &[u8]) -> Result<CredentialState, StateError> {
    let file: StateFile = serde_json::from_slice(bytes).map_err(|e| StateError::Invalid(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(StateError::Invalid(format!("unsupported format_version {}", file.format_version)));
    }
    let s = &file.state;
    if s.username.is_empty() {
        return Err(StateError::Invalid("empty username".into()));
    }
    if s.abscissae.is_empty() {
        return Err(StateError::Invalid("no abscissae".into()));
    }
    if s.mc.0.is_empty() || s.ms.0.is_empty() {
        return Err(StateError::Invalid("missing MC or MS".into()));
    }
    Ok(file.state)
}

pub fn encode(state: &CredentialState) -> Vec<u8> {
    let file = StateFile { format_version: FORMAT_VERSION, state: state.clone() };
    serde_json::to_vec_pretty(&file).expect("state serializes")
}

pub fn read(path: &Path) -> Result<CredentialState, StateError> {
    match fs::read(path) {
        Ok(bytes) => decode(&bytes),
        Err(e) if e.kind() == ErrorKind::NotFound => Err(StateError::Missing(path.into())),
        Err(e) => Err(io(path)(e)),
    }
}

fn staging_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes the new state next to `path` without touching `path` itself.
pub fn stage(path: &Path, state: &CredentialState) -> Result<PathBuf, StateError> {
    let tmp = staging_path(path);
    let mut f = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .mode(0o600)
        .open(&tmp)
        .map_err(io(&tmp))?;
    f.write_all(&encode(state)).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    Ok(tmp)
}

/// Moves a staged state into place.
pub fn commit(staged: &Path, path: &Path) -> Result<(), StateError> {
    fs::rename(staged, path).map_err(io(path))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub fn write(path: &Path, state: &CredentialState) -> Result<(), StateError> {
    let staged = stage(path, state)?;
    commit(&staged, path)
}

pub fn remove(path: &Path) -> Result<(), StateError> {
    fs::remove_file(path).map_err(io(path))
}

/// Exclusive use of a state file for the lifetime of the guard.
pub struct StateLock(PathBuf);

impl StateLock {
    pub fn acquire(path: &Path) -> Result<StateLock, StateError> {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".lock");
        let lock = path.with_file_name(name);
        match OpenOptions::new().write(true).create_new(true).mode(0o600).open(&lock) {
            Ok(_) => Ok(StateLock(lock)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(StateError::Locked(path.into())),
            Err(e) => Err(io(&lock)(e)),
        }
    }
}

impl Drop for StateLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use sharepass_core::cipher::{Ciphertext, SymKey};
    use std::os::unix::fs::PermissionsExt;

    fn sample(tag: u8) -> CredentialState {
        CredentialState {
            username: "alice".into(),
            r: BigUint::from(11u32),
            r_prime: BigUint::from(12u32),
            k: SymKey([tag; 32]),
            mc: Ciphertext(vec![1, 2, 3]),
            ms: Ciphertext(vec![4, 5, 6]),
            abscissae: vec![BigUint::from(7u32), BigUint::from(8u32)],
        }
    }

    #[test]
    fn round_trip_with_owner_only_mode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        write(&path, &sample(1)).unwrap();
        assert_eq!(read(&path).unwrap(), sample(1));
        let mode = fs::metadata(&path).unwrap().permissions().mode();
        assert_eq!(mode & 0o077, 0);
    }

    #[test]
    fn crash_before_rename_keeps_old_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        write(&path, &sample(1)).unwrap();
        let staged = stage(&path, &sample(2)).unwrap();
        // interrupted here: the visible file is still the old, valid state
        assert_eq!(read(&path).unwrap(), sample(1));
        assert_eq!(decode(&fs::read(&staged).unwrap()).unwrap(), sample(2));
        commit(&staged, &path).unwrap();
        assert_eq!(read(&path).unwrap(), sample(2));
        assert!(!staged.exists());
    }

    #[test]
    fn rejects_malformed_documents() {
        let good = encode(&sample(1));
        assert!(matches!(decode(&good[..good.len() / 2]), Err(StateError::Invalid(_))));
        let mut v: serde_json::Value = serde_json::from_slice(&good).unwrap();
        v["format_version"] = 9.into();
        assert!(decode(&serde_json::to_vec(&v).unwrap()).is_err());
        let mut v: serde_json::Value = serde_json::from_slice(&good).unwrap();
        v["state"]["abscissae"] = serde_json::json!([]);
        assert!(decode(&serde_json::to_vec(&v).unwrap()).is_err());
        assert!(matches!(read(Path::new("/nonexistent/state")), Err(StateError::Missing(_))));
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        let a = StateLock::acquire(&path).unwrap();
        assert!(matches!(StateLock::acquire(&path), Err(StateError::Locked(_))));
        drop(a);
        StateLock::acquire(&path).unwrap();
    }
}
