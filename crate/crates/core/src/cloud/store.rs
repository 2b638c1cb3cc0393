use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::CloudError;
use crate::inventory::{is_inventory_name, LATEST_NAME};

pub const MANIFEST_NAME: &str = "MANIFEST";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredObject {
    pub path: String,
    pub revision: u64,
    pub octets: Arc<Vec<u8>>,
    pub stored_at_ms: u64,
}

/// One committed write, as logged in `MANIFEST`:
/// `<revision> <stored_at_ms> <len> <sha256> <path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub revision: u64,
    pub stored_at_ms: u64,
    pub len: usize,
    pub sha256: String,
    pub path: String,
}

impl ManifestEntry {
    pub fn line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.revision, self.stored_at_ms, self.len, self.sha256, self.path
        )
    }

    pub fn parse(line: &str) -> Result<Self, CloudError> {
        let bad = || CloudError::Manifest(format!("bad line {line:?}"));
        let mut parts = line.splitn(5, ' ');
        let mut next = || parts.next().ok_or_else(bad);
        let revision = next()?.parse().map_err(|_| bad())?;
        let stored_at_ms = next()?.parse().map_err(|_| bad())?;
        let len = next()?.parse().map_err(|_| bad())?;
        let sha256 = next()?.to_string();
        let path = next()?.to_string();
        Ok(ManifestEntry {
            revision,
            stored_at_ms,
            len,
            sha256,
            path,
        })
    }
}

/// Newest inventory document and the revision it was stored under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Latest {
    pub octets: Vec<u8>,
    pub revision: u64,
}

/// Append-only object store with one revision counter for every write.
#[derive(Debug, Default)]
pub struct ObjectStore {
    objects: Vec<StoredObject>,
    latest_inventory: Option<usize>,
    dir: Option<PathBuf>,
}

pub fn validate_path(path: &str) -> Result<(), CloudError> {
    if path.is_empty() {
        return Err(CloudError::EmptyPath);
    }
    let reserved = path == LATEST_NAME || path == MANIFEST_NAME;
    if reserved
        || path.starts_with('.')
        || path.chars().any(|c| c == '/' || c == '\\' || c.is_whitespace() || c.is_control())
    {
        return Err(CloudError::BadPath(path.to_string()));
    }
    Ok(())
}

fn sha_hex(octets: &[u8]) -> String {
    hex::encode(Sha256::digest(octets))
}

impl ObjectStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store directory and replays its `MANIFEST`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CloudError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = ObjectStore {
            dir: None,
            ..Self::default()
        };
        let manifest = dir.join(MANIFEST_NAME);
        if manifest.exists() {
            for line in fs::read_to_string(&manifest)?.lines().filter(|l| !l.is_empty()) {
                let entry = ManifestEntry::parse(line)?;
                let octets = fs::read(dir.join(format!("{}_{}", entry.revision, entry.path)))?;
                if octets.len() != entry.len || sha_hex(&octets) != entry.sha256 {
                    return Err(CloudError::Manifest(format!(
                        "object {} does not match its manifest entry",
                        entry.revision
                    )));
                }
                if let Some(last) = store.objects.last() {
                    if entry.revision <= last.revision {
                        return Err(CloudError::Manifest(format!(
                            "revision {} after {}",
                            entry.revision, last.revision
                        )));
                    }
                }
                store.commit(StoredObject {
                    path: entry.path,
                    revision: entry.revision,
                    octets: Arc::new(octets),
                    stored_at_ms: entry.stored_at_ms,
                });
            }
        }
        store.dir = Some(dir);
        Ok(store)
    }

    fn commit(&mut self, object: StoredObject) {
        if is_inventory_name(&object.path) {
            self.latest_inventory = Some(self.objects.len());
        }
        self.objects.push(object);
    }

    pub fn last_revision(&self) -> u64 {
        self.objects.last().map_or(0, |o| o.revision)
    }

    /// Stores `octets` under the next revision. On disk the object file is
    /// complete before its manifest line is appended, so a reader replaying
    /// the manifest only ever sees whole objects.
    pub fn put(&mut self, path: &str, octets: &[u8], now_ms: u64) -> Result<u64, CloudError> {
        validate_path(path)?;
        let revision = self.last_revision() + 1;
        if let Some(dir) = &self.dir {
            let name = format!("{revision}_{path}");
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, octets)?;
            fs::rename(&tmp, dir.join(&name))?;
            let entry = ManifestEntry {
                revision,
                stored_at_ms: now_ms,
                len: octets.len(),
                sha256: sha_hex(octets),
                path: path.to_string(),
            };
            let mut manifest = OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(MANIFEST_NAME))?;
            writeln!(manifest, "{}", entry.line())?;
            if is_inventory_name(path) {
                let tmp = dir.join(format!(".{LATEST_NAME}.tmp"));
                fs::write(&tmp, octets)?;
                fs::rename(&tmp, dir.join(LATEST_NAME))?;
            }
        }
        self.commit(StoredObject {
            path: path.to_string(),
            revision,
            octets: Arc::new(octets.to_vec()),
            stored_at_ms: now_ms,
        });
        Ok(revision)
    }

    pub fn fetch_latest(&self) -> Result<Latest, CloudError> {
        let obj = self
            .latest_inventory
            .map(|i| &self.objects[i])
            .ok_or(CloudError::EmptyStore)?;
        Ok(Latest {
            octets: obj.octets.to_vec(),
            revision: obj.revision,
        })
    }

    pub fn objects(&self) -> &[StoredObject] {
        &self.objects
    }

    pub fn get(&self, path: &str) -> Option<&StoredObject> {
        self.objects.iter().rev().find(|o| o.path == path)
    }

    pub fn inventory_objects(&self) -> impl Iterator<Item = &StoredObject> {
        self.objects.iter().filter(|o| is_inventory_name(&o.path))
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.objects
            .iter()
            .map(|o| ManifestEntry {
                revision: o.revision,
                stored_at_ms: o.stored_at_ms,
                len: o.octets.len(),
                sha256: sha_hex(&o.octets),
                path: o.path.clone(),
            })
            .collect()
    }

    pub fn manifest_text(&self) -> String {
        self.manifest().iter().map(|e| e.line() + "\n").collect()
    }
}
