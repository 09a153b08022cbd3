use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::crypto::LongTermKey;

use super::ClientId;

#[derive(Debug, Error)]
pub enum KeystoreError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Long-term keys by client id.
///
/// The text form is one `<client id hex> <key hex>` pair per line; blank
/// lines and lines starting with `#` are ignored.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Keystore {
    keys: BTreeMap<ClientId, LongTermKey>,
}

impl Keystore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: ClientId, key: LongTermKey) -> Option<LongTermKey> {
        self.keys.insert(id, key)
    }

    pub fn get(&self, id: ClientId) -> Option<&LongTermKey> {
        self.keys.get(&id)
    }

    pub fn remove(&mut self, id: ClientId) -> Option<LongTermKey> {
        self.keys.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.keys.keys().copied()
    }

    pub fn parse(text: &str) -> Result<Self, KeystoreError> {
        let mut store = Keystore::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| KeystoreError::Parse {
                line: index + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let (Some(id), Some(key), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected `<id> <key>`".into()));
            };
            let id = u64::from_str_radix(id, 16).map_err(|e| err(format!("client id: {e}")))?;
            let key = LongTermKey::from_hex(key).map_err(|e| err(e.to_string()))?;
            if store.insert(ClientId(id), key).is_some() {
                return Err(err(format!("duplicate client id {id:016x}")));
            }
        }
        Ok(store)
    }

    pub fn to_text(&self) -> String {
        self.keys
            .iter()
            .map(|(id, key)| format!("{id} {}\n", key.to_hex()))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, KeystoreError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Writes to a sibling temp file and renames it over `path`.
    pub fn save_atomic(&self, path: &Path) -> Result<(), KeystoreError> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
        {
            let mut file = std::fs::File::create(&tmp)?;
            file.write_all(self.to_text().as_bytes())?;
            file.sync_all()?;
        }
        std::fs::rename(&tmp, path).inspect_err(|_| {
            let _ = std::fs::remove_file(&tmp);
        })?;
        Ok(())
    }
}

impl std::fmt::Debug for Keystore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keystore").field("clients", &self.keys.len()).finish()
    }
}
