use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use super::service::{ChoreoService, UploadRequest, UPLOAD_METHOD};
use super::signing::{body_digest, sign_request, ChoreoCredentials};
use super::store::{Latest, ObjectStore};
use super::{
    object_resource, CloudError, HEADER_KEY, HEADER_NONCE, HEADER_QUOTA_LIMIT, HEADER_REVISION,
    HEADER_SIGNATURE, HEADER_TIMESTAMP,
};

/// Anything that can hand back the newest inventory document.
pub trait LatestSource {
    fn fetch_latest(&mut self) -> Result<Latest, CloudError>;
}

/// Anything that accepts object uploads, returning the stored revision.
pub trait Uploader {
    fn upload(&mut self, path: &str, octets: &[u8], now_ms: u64) -> Result<u64, CloudError>;
}

/// Signs uploads. Nonces come from a counter so runs are reproducible.
#[derive(Debug, Clone)]
pub struct ChoreoClient {
    creds: ChoreoCredentials,
    next_nonce: u64,
}

impl ChoreoClient {
    pub fn new(creds: ChoreoCredentials) -> Self {
        ChoreoClient { creds, next_nonce: 0 }
    }

    pub fn credentials(&self) -> &ChoreoCredentials {
        &self.creds
    }

    pub fn sign(&mut self, path: &str, octets: &[u8], now_ms: u64) -> Result<UploadRequest, CloudError> {
        let nonce = format!("{:016x}", self.next_nonce);
        self.next_nonce += 1;
        let signature = sign_request(
            &self.creds,
            UPLOAD_METHOD,
            &object_resource(path),
            &body_digest(octets),
            &nonce,
            now_ms,
        )?;
        Ok(UploadRequest {
            path: path.to_string(),
            body: octets.to_vec(),
            key_id: self.creds.key_id(),
            nonce,
            timestamp_ms: now_ms,
            signature,
        })
    }
}

/// In-process access to a shared service.
#[derive(Debug, Clone)]
pub struct LocalEndpoint {
    pub service: Arc<ChoreoService>,
    pub client: ChoreoClient,
}

impl LocalEndpoint {
    pub fn new(service: Arc<ChoreoService>, creds: ChoreoCredentials) -> Self {
        LocalEndpoint {
            service,
            client: ChoreoClient::new(creds),
        }
    }
}

impl Uploader for LocalEndpoint {
    fn upload(&mut self, path: &str, octets: &[u8], now_ms: u64) -> Result<u64, CloudError> {
        let req = self.client.sign(path, octets, now_ms)?;
        self.service.upload(&req, now_ms)
    }
}

impl LatestSource for LocalEndpoint {
    fn fetch_latest(&mut self) -> Result<Latest, CloudError> {
        self.service.fetch_latest()
    }
}

impl LatestSource for ChoreoService {
    fn fetch_latest(&mut self) -> Result<Latest, CloudError> {
        ChoreoService::fetch_latest(self)
    }
}

/// Reads a store directory directly, replaying its manifest on every fetch
/// so writes by another process show up.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub dir: PathBuf,
}

impl LatestSource for DirSource {
    fn fetch_latest(&mut self) -> Result<Latest, CloudError> {
        if !self.dir.is_dir() {
            return Err(CloudError::Io(format!("{} is not a directory", self.dir.display())));
        }
        ObjectStore::open(&self.dir)?.fetch_latest()
    }
}

/// Talks to the HTTP front end of a store service.
#[derive(Debug)]
pub struct HttpEndpoint {
    base: String,
    agent: ureq::Agent,
    client: Option<ChoreoClient>,
}

fn transport(e: ureq::Error) -> CloudError {
    CloudError::Transport(e.to_string())
}

impl HttpEndpoint {
    /// `base` is e.g. `http://127.0.0.1:8750`. Credentials are needed only
    /// for uploads.
    pub fn new(base: &str, creds: Option<ChoreoCredentials>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        HttpEndpoint {
            base: base.trim_end_matches('/').to_string(),
            agent,
            client: creds.map(ChoreoClient::new),
        }
    }

    pub fn manifest_text(&mut self) -> Result<String, CloudError> {
        let mut resp = self
            .agent
            .get(format!("{}/manifest", self.base))
            .call()
            .map_err(transport)?;
        if resp.status().as_u16() != 200 {
            return Err(CloudError::Protocol(format!("manifest status {}", resp.status())));
        }
        resp.body_mut().read_to_string().map_err(transport)
    }
}

fn header<B>(resp: &ureq::http::Response<B>, name: &str) -> Option<String> {
    resp.headers()
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

fn revision_header<B>(resp: &ureq::http::Response<B>) -> Result<u64, CloudError> {
    header(resp, HEADER_REVISION)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CloudError::Protocol(format!("missing {HEADER_REVISION}")))
}

impl Uploader for HttpEndpoint {
    fn upload(&mut self, path: &str, octets: &[u8], now_ms: u64) -> Result<u64, CloudError> {
        let client = self
            .client
            .as_mut()
            .ok_or(CloudError::EmptyCredential("app_key"))?;
        let req = client.sign(path, octets, now_ms)?;
        let mut resp = self
            .agent
            .put(format!("{}{}", self.base, object_resource(path)))
            .header(HEADER_SIGNATURE, &req.signature)
            .header(HEADER_NONCE, &req.nonce)
            .header(HEADER_TIMESTAMP, req.timestamp_ms.to_string())
            .header(HEADER_KEY, &req.key_id)
            .send(octets)
            .map_err(transport)?;
        match resp.status().as_u16() {
            200 | 201 => revision_header(&resp),
            429 => Err(CloudError::QuotaExceeded {
                limit: header(&resp, HEADER_QUOTA_LIMIT)
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(0),
            }),
            401 => Err(CloudError::BadSignature),
            400 if path.is_empty() => Err(CloudError::EmptyPath),
            400 => Err(CloudError::BadPath(path.to_string())),
            code => {
                let body = resp.body_mut().read_to_string().unwrap_or_default();
                Err(CloudError::Protocol(format!("status {code}: {body}")))
            }
        }
    }
}

impl LatestSource for HttpEndpoint {
    fn fetch_latest(&mut self) -> Result<Latest, CloudError> {
        let mut resp = self
            .agent
            .get(format!("{}/objects/latest", self.base))
            .call()
            .map_err(transport)?;
        match resp.status().as_u16() {
            200 => {
                let revision = revision_header(&resp)?;
                let octets = resp.body_mut().read_to_vec().map_err(transport)?;
                Ok(Latest { octets, revision })
            }
            404 => Err(CloudError::EmptyStore),
            code => Err(CloudError::Protocol(format!("status {code}"))),
        }
    }
}

/// `http://…` selects the HTTP client, anything else is a store directory.
pub fn open_source(endpoint: &str) -> Box<dyn LatestSource> {
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        Box::new(HttpEndpoint::new(endpoint, None))
    } else {
        Box::new(DirSource {
            dir: PathBuf::from(endpoint),
        })
    }
}
