//! Signed, quota-limited uploads to a revisioned object store.
//!
//! [`ChoreoService`] is the store side. It runs in-process behind
//! [`LocalEndpoint`] or behind the HTTP front end in [`http`], and both paths
//! drive the same state machine.

mod client;
pub mod http;
mod quota;
mod service;
mod signing;
mod store;

pub use client::{open_source, ChoreoClient, DirSource, HttpEndpoint, LatestSource, LocalEndpoint, Uploader};
pub use quota::{tick_quota, QuotaLedger, DEFAULT_QUOTA_LIMIT, DEFAULT_QUOTA_PERIOD_MS};
pub use service::{ChoreoService, UploadRequest, UPLOAD_METHOD};
pub use signing::{body_digest, canonical_string, sign_request, verify_signature, ChoreoCredentials};
pub use store::{validate_path, Latest, ManifestEntry, ObjectStore, StoredObject, MANIFEST_NAME};

use thiserror::Error;

pub const HEADER_SIGNATURE: &str = "X-Choreo-Signature";
pub const HEADER_NONCE: &str = "X-Choreo-Nonce";
pub const HEADER_TIMESTAMP: &str = "X-Choreo-Timestamp";
pub const HEADER_KEY: &str = "X-Choreo-Key";
pub const HEADER_REVISION: &str = "X-Choreo-Revision";
pub const HEADER_QUOTA_LIMIT: &str = "X-Choreo-Quota-Limit";

/// Path an object is signed under, e.g. `/objects/inventory_3.json`.
pub fn object_resource(path: &str) -> String {
    format!("/objects/{path}")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CloudError {
    #[error("credential {0} is empty")]
    EmptyCredential(&'static str),
    #[error("upload quota of {limit} calls exhausted for this period")]
    QuotaExceeded { limit: u32 },
    #[error("request signature rejected")]
    BadSignature,
    #[error("nonce {0:?} already used")]
    ReplayedNonce(String),
    #[error("object path is empty")]
    EmptyPath,
    #[error("object path {0:?} is not allowed")]
    BadPath(String),
    #[error("store holds no inventory object")]
    EmptyStore,
    #[error("store manifest: {0}")]
    Manifest(String),
    #[error("store i/o: {0}")]
    Io(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl CloudError {
    /// Failures that leave the request worth retrying later.
    pub fn is_retryable(&self) -> bool {
        matches!(self, CloudError::QuotaExceeded { .. } | CloudError::Transport(_))
    }
}

impl From<std::io::Error> for CloudError {
    fn from(e: std::io::Error) -> Self {
        CloudError::Io(e.to_string())
    }
}
