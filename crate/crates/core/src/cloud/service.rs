use std::collections::HashSet;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use super::signing::{body_digest, verify_signature, ChoreoCredentials};
use super::store::{validate_path, Latest, ObjectStore};
use super::{object_resource, tick_quota, CloudError, QuotaLedger};

pub const UPLOAD_METHOD: &str = "PUT";

/// A signed upload as it arrives at the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadRequest {
    pub path: String,
    pub body: Vec<u8>,
    pub key_id: String,
    pub nonce: String,
    pub timestamp_ms: u64,
    pub signature: String,
}

#[derive(Debug)]
struct State {
    store: ObjectStore,
    ledger: QuotaLedger,
    seen_nonces: HashSet<String>,
}

/// Store service: checks signatures, charges the quota ledger and commits
/// objects. Writes hold one lock; reads share it and only ever observe
/// committed revisions.
#[derive(Debug)]
pub struct ChoreoService {
    account: ChoreoCredentials,
    state: RwLock<State>,
}

impl ChoreoService {
    pub fn new(store: ObjectStore, account: ChoreoCredentials, ledger: QuotaLedger) -> Result<Self, CloudError> {
        account.validate()?;
        Ok(ChoreoService {
            account,
            state: RwLock::new(State {
                store,
                ledger,
                seen_nonces: HashSet::new(),
            }),
        })
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|p| p.into_inner())
    }

    /// Validates and commits one upload. Nothing is stored and no quota is
    /// charged unless every check passes.
    pub fn upload(&self, req: &UploadRequest, now_ms: u64) -> Result<u64, CloudError> {
        validate_path(&req.path)?;
        let digest = body_digest(&req.body);
        if req.key_id != self.account.key_id()
            || !verify_signature(
                &self.account,
                UPLOAD_METHOD,
                &object_resource(&req.path),
                &digest,
                &req.nonce,
                req.timestamp_ms,
                &req.signature,
            )
        {
            return Err(CloudError::BadSignature);
        }

        let mut state = self.write();
        if state.seen_nonces.contains(&req.nonce) {
            return Err(CloudError::ReplayedNonce(req.nonce.clone()));
        }
        state.ledger = tick_quota(state.ledger, now_ms);
        if state.ledger.exhausted() {
            return Err(CloudError::QuotaExceeded {
                limit: state.ledger.limit,
            });
        }
        let revision = state.store.put(&req.path, &req.body, now_ms)?;
        state.ledger.used += 1;
        state.seen_nonces.insert(req.nonce.clone());
        log::debug!("stored {} as revision {revision}", req.path);
        Ok(revision)
    }

    pub fn fetch_latest(&self) -> Result<Latest, CloudError> {
        self.read().store.fetch_latest()
    }

    pub fn ledger(&self) -> QuotaLedger {
        self.read().ledger
    }

    /// Rolls the ledger forward to `now_ms`.
    pub fn tick(&self, now_ms: u64) -> QuotaLedger {
        let mut state = self.write();
        state.ledger = tick_quota(state.ledger, now_ms);
        state.ledger
    }

    /// Opens a fresh quota period at `now_ms`, as a billing reset would.
    pub fn reset_period(&self, now_ms: u64) -> QuotaLedger {
        let mut state = self.write();
        state.ledger.period_start_ms = now_ms;
        state.ledger.used = 0;
        state.ledger
    }

    pub fn set_quota_limit(&self, limit: u32) {
        self.write().ledger.limit = limit;
    }

    pub fn manifest_text(&self) -> String {
        self.read().store.manifest_text()
    }

    pub fn with_store<R>(&self, f: impl FnOnce(&ObjectStore) -> R) -> R {
        f(&self.read().store)
    }
}
