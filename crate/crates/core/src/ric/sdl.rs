//! Shared data layer: a namespaced key-value store with last-write-wins
//! semantics, safe to use from any thread.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Default)]
pub struct Sdl {
    entries: Mutex<BTreeMap<(String, String), Vec<u8>>>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    namespace: String,
    key: String,
    value: Vec<u8>,
}

impl Sdl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, namespace: &str, key: &str, value: impl Into<Vec<u8>>) {
        self.lock().insert((namespace.to_owned(), key.to_owned()), value.into());
    }

    pub fn get(&self, namespace: &str, key: &str) -> Option<Vec<u8>> {
        self.lock().get(&(namespace.to_owned(), key.to_owned())).cloned()
    }

    pub fn delete(&self, namespace: &str, key: &str) -> Option<Vec<u8>> {
        self.lock().remove(&(namespace.to_owned(), key.to_owned()))
    }

    /// Keys in `namespace`, sorted.
    pub fn keys(&self, namespace: &str) -> Vec<String> {
        self.lock()
            .keys()
            .filter(|(ns, _)| ns == namespace)
            .map(|(_, k)| k.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes every entry to `path` as JSON.
    pub fn snapshot(&self, path: &Path) -> io::Result<()> {
        let entries: Vec<Entry> = self
            .lock()
            .iter()
            .map(|((namespace, key), value)| Entry {
                namespace: namespace.clone(),
                key: key.clone(),
                value: value.clone(),
            })
            .collect();
        let json = serde_json::to_vec_pretty(&entries).map_err(io::Error::other)?;
        fs::write(path, json)
    }

    pub fn restore(path: &Path) -> io::Result<Sdl> {
        let entries: Vec<Entry> = serde_json::from_slice(&fs::read(path)?).map_err(io::Error::other)?;
        let sdl = Sdl::new();
        for e in entries {
            sdl.put(&e.namespace, &e.key, e.value);
        }
        Ok(sdl)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<(String, String), Vec<u8>>> {
        // A panic while holding the lock cannot leave the map half-written.
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }
}
