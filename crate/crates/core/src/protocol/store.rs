//! Append-only keyed record store.
//!
//! Each line is a JSON record `{"key":..,"value":..}` (or a tombstone);
//! the latest record for a key wins. The file always ends with
//! `#checksum <records> <sha256 chain>` so truncation is detected on load.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("store corrupt: {0}")]
    Corrupt(String),
    #[error("record encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct Line {
    key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Value>,
}

enum Backing {
    File { path: PathBuf, file: File },
    Memory,
}

struct Inner {
    backing: Backing,
    /// Record lines, without the trailer.
    body: Vec<u8>,
    count: u64,
    chain: [u8; 32],
    map: BTreeMap<String, Value>,
}

pub struct RecordStore {
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for RecordStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecordStore").finish_non_exhaustive()
    }
}

fn step(chain: &[u8; 32], line: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(chain);
    h.update(line);
    h.finalize().into()
}

fn trailer(count: u64, chain: &[u8; 32]) -> String {
    format!("#checksum {count} {}\n", hex::encode(chain))
}

impl RecordStore {
    pub fn in_memory() -> RecordStore {
        RecordStore::from_parts(Backing::Memory, Vec::new(), 0, [0; 32], BTreeMap::new())
    }

    /// Opens or creates a store file, refusing one whose checksum fails.
    pub fn open(path: &Path) -> Result<RecordStore, StoreError> {
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let (body, count, chain, map) = if text.is_empty() {
            (Vec::new(), 0, [0; 32], BTreeMap::new())
        } else {
            Self::parse(&text)?
        };
        let store = RecordStore::from_parts(
            Backing::File { path: path.to_path_buf(), file },
            body,
            count,
            chain,
            map,
        );
        store.inner.lock().unwrap().flush_trailer()?;
        Ok(store)
    }

    fn from_parts(
        backing: Backing,
        body: Vec<u8>,
        count: u64,
        chain: [u8; 32],
        map: BTreeMap<String, Value>,
    ) -> RecordStore {
        RecordStore { inner: Mutex::new(Inner { backing, body, count, chain, map }) }
    }

    #[allow(clippy::type_complexity)]
    fn parse(text: &str) -> Result<(Vec<u8>, u64, [u8; 32], BTreeMap<String, Value>), StoreError> {
        if !text.ends_with('\n') {
            return Err(StoreError::Corrupt("missing final newline".into()));
        }
        let trailer_start = text[..text.len() - 1].rfind('\n').map(|i| i + 1).unwrap_or(0);
        let last = &text[trailer_start..text.len() - 1];
        let mut parts = last.split(' ');
        let (Some("#checksum"), Some(count), Some(digest), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(StoreError::Corrupt("missing checksum line".into()));
        };
        let count: u64 = count.parse().map_err(|_| StoreError::Corrupt("bad record count".into()))?;
        let body = &text[..trailer_start];
        let mut chain = [0u8; 32];
        let mut map = BTreeMap::new();
        let mut seen = 0u64;
        for line in body.lines() {
            chain = step(&chain, line.as_bytes());
            let rec: Line = serde_json::from_str(line)
                .map_err(|e| StoreError::Corrupt(format!("record {seen}: {e}")))?;
            match rec.value {
                Some(v) => map.insert(rec.key, v),
                None => map.remove(&rec.key),
            };
            seen += 1;
        }
        if seen != count || hex::encode(chain) != digest {
            return Err(StoreError::Corrupt(format!("checksum mismatch ({seen} records, trailer says {count})")));
        }
        Ok((body.as_bytes().to_vec(), count, chain, map))
    }

    pub fn get<V: DeserializeOwned>(&self, key: &str) -> Result<Option<V>, StoreError> {
        let inner = self.inner.lock().unwrap();
        match inner.map.get(key) {
            Some(v) => Ok(Some(serde_json::from_value(v.clone())?)),
            None => Ok(None),
        }
    }

    pub fn put<V: Serialize>(&self, key: &str, value: &V) -> Result<(), StoreError> {
        let value = serde_json::to_value(value)?;
        self.append(Line { key: key.to_string(), value: Some(value) })
    }

    pub fn remove(&self, key: &str) -> Result<(), StoreError> {
        if !self.contains(key) {
            return Ok(());
        }
        self.append(Line { key: key.to_string(), value: None })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.inner.lock().unwrap().map.contains_key(key)
    }

    pub fn keys(&self) -> Vec<String> {
        self.inner.lock().unwrap().map.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every byte the store has written, trailer included.
    pub fn raw_bytes(&self) -> Vec<u8> {
        let inner = self.inner.lock().unwrap();
        let mut out = inner.body.clone();
        out.extend_from_slice(trailer(inner.count, &inner.chain).as_bytes());
        out
    }

    /// SHA-256 over the live key/value map, for snapshot comparison.
    pub fn digest(&self) -> [u8; 32] {
        let inner = self.inner.lock().unwrap();
        Sha256::digest(serde_json::to_vec(&inner.map).unwrap_or_default()).into()
    }

    pub fn path(&self) -> Option<PathBuf> {
        match &self.inner.lock().unwrap().backing {
            Backing::File { path, .. } => Some(path.clone()),
            Backing::Memory => None,
        }
    }

    fn append(&self, line: Line) -> Result<(), StoreError> {
        let mut text = serde_json::to_string(&line)?;
        let mut inner = self.inner.lock().unwrap();
        inner.chain = step(&inner.chain, text.as_bytes());
        inner.count += 1;
        text.push('\n');
        let offset = inner.body.len() as u64;
        inner.body.extend_from_slice(text.as_bytes());
        match line.value {
            Some(v) => inner.map.insert(line.key, v),
            None => inner.map.remove(&line.key),
        };
        if let Backing::File { file, .. } = &mut inner.backing {
            file.seek(SeekFrom::Start(offset))?;
            file.write_all(text.as_bytes())?;
        }
        inner.flush_trailer()
    }
}

impl Inner {
    fn flush_trailer(&mut self) -> Result<(), StoreError> {
        let t = trailer(self.count, &self.chain);
        let end = self.body.len() as u64;
        if let Backing::File { file, .. } = &mut self.backing {
            file.seek(SeekFrom::Start(end))?;
            file.write_all(t.as_bytes())?;
            file.set_len(end + t.len() as u64)?;
            file.sync_data()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latest_record_wins_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.store");
        {
            let s = RecordStore::open(&path).unwrap();
            s.put("user/a", &1u32).unwrap();
            s.put("user/b", &2u32).unwrap();
            s.put("user/a", &3u32).unwrap();
            s.remove("user/b").unwrap();
        }
        let s = RecordStore::open(&path).unwrap();
        assert_eq!(s.get::<u32>("user/a").unwrap(), Some(3));
        assert_eq!(s.get::<u32>("user/b").unwrap(), None);
        assert_eq!(s.keys(), vec!["user/a".to_string()]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().last().unwrap().starts_with("#checksum 4 "));
    }

    #[test]
    fn truncation_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.store");
        {
            let s = RecordStore::open(&path).unwrap();
            for i in 0..5u32 {
                s.put(&format!("k{i}"), &i).unwrap();
            }
        }
        let bytes = std::fs::read(&path).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 30, bytes.len() / 2, 3] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            assert!(matches!(RecordStore::open(&path), Err(StoreError::Corrupt(_))), "cut at {cut}");
        }
        // a dropped record line with the trailer intact
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let spliced = format!("{}\n{}\n", lines[..3].join("\n"), lines.last().unwrap());
        std::fs::write(&path, spliced).unwrap();
        assert!(matches!(RecordStore::open(&path), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn memory_store_exposes_bytes() {
        let s = RecordStore::in_memory();
        s.put("k", &"value").unwrap();
        let raw = String::from_utf8(s.raw_bytes()).unwrap();
        assert!(raw.starts_with(r#"{"key":"k","value":"value"}"#));
        assert!(raw.contains("#checksum 1 "));
        let d1 = s.digest();
        s.put("k", &"value").unwrap();
        assert_eq!(s.digest(), d1);
    }
}
